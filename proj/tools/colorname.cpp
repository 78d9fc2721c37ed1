#include "colorname/cli.hpp"

int main(int argc, char** argv) { return colorname::cli::run(argc, argv); }
