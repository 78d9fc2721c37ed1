#pragma once

// HTTP/JSON facade over trained models and the Turing-test judging workflow.
//
// Requests are answered by Service::handle, a plain function of the request,
// so the routing logic can be exercised without sockets. Service::bind mounts
// the same handler on a cpp-httplib server.

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "colorname/analysis.hpp"
#include "colorname/color2name.hpp"
#include "colorname/name2color.hpp"

// After Eigen: <resolv.h> defines a `_res` macro that clashes with Eigen internals.
#include <httplib.h>

namespace colorname {

/// Configuration file schema (every key optional):
///
///   {"host": "127.0.0.1", "port": 8080,
///    "name2color": "models/lstm2.ckpt", "color2name": "models/color-lm.ckpt",
///    "turing_items": "turing/items.jsonl", "judgment_log": "turing/judgments.jsonl",
///    "cors_origin": "*", "static_dir": "", "max_generate_length": 64}
///
/// Environment overrides: COLORNAME_HOST, COLORNAME_PORT, COLORNAME_NAME2COLOR,
/// COLORNAME_COLOR2NAME, COLORNAME_TURING_ITEMS, COLORNAME_JUDGMENT_LOG.
struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string name2color;
  std::string color2name;
  std::string turing_items;
  std::string judgment_log;
  std::string cors_origin = "*";
  std::string static_dir;
  std::size_t max_generate_length = 64;

  static ServiceConfig from_json(const nlohmann::json& j) {
    ServiceConfig c;
    c.host = j.value("host", c.host);
    c.port = j.value("port", c.port);
    c.name2color = j.value("name2color", c.name2color);
    c.color2name = j.value("color2name", c.color2name);
    c.turing_items = j.value("turing_items", c.turing_items);
    c.judgment_log = j.value("judgment_log", c.judgment_log);
    c.cors_origin = j.value("cors_origin", c.cors_origin);
    c.static_dir = j.value("static_dir", c.static_dir);
    c.max_generate_length = j.value("max_generate_length", c.max_generate_length);
    return c;
  }

  static ServiceConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config " + path);
    try {
      return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("bad config " + path + ": " + e.what());
    }
  }

  /// `getenv` is injectable for tests.
  void apply_env(const std::function<const char*(const char*)>& getenv_fn = [](const char* k) {
    return std::getenv(k);
  }) {
    auto set = [&](const char* key, std::string& field) {
      if (const char* v = getenv_fn(key)) field = v;
    };
    set("COLORNAME_HOST", host);
    set("COLORNAME_NAME2COLOR", name2color);
    set("COLORNAME_COLOR2NAME", color2name);
    set("COLORNAME_TURING_ITEMS", turing_items);
    set("COLORNAME_JUDGMENT_LOG", judgment_log);
    if (const char* v = getenv_fn("COLORNAME_PORT")) {
      char* end = nullptr;
      const long p = std::strtol(v, &end, 10);
      if (*v == '\0' || *end != '\0' || p < 0 || p > 65535) {
        throw std::invalid_argument(std::string("COLORNAME_PORT is not a port: ") + v);
      }
      port = static_cast<int>(p);
    }
  }
};

/// Append-only judgment log with a single serialized writer. Each record is
/// one write(2) of a complete line followed by fsync, so a crash loses at
/// most the record being acknowledged.
class JudgmentLog {
 public:
  enum class Append { ok, duplicate };

  JudgmentLog() = default;

  explicit JudgmentLog(const std::string& path) : path_(path) {
    if (path_.empty()) return;
    {
      std::ifstream in(path_);
      if (in) records_ = read_judgments(in);
    }
    for (const auto& r : records_) seen_.emplace(r.judge, r.item);
    fd_ = ::open(path_.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw std::runtime_error("cannot open judgment log " + path_ + ": " + std::strerror(errno));
  }

  JudgmentLog(const JudgmentLog&) = delete;
  JudgmentLog& operator=(const JudgmentLog&) = delete;

  ~JudgmentLog() {
    if (fd_ >= 0) ::close(fd_);
  }

  Append append(const JudgmentRecord& r) {
    std::lock_guard lock(mu_);
    if (seen_.count({r.judge, r.item})) return Append::duplicate;
    if (fd_ >= 0) {
      const std::string line = to_json(r).dump() + "\n";
      std::size_t done = 0;
      while (done < line.size()) {
        const ssize_t n = ::write(fd_, line.data() + done, line.size() - done);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) throw std::runtime_error("judgment log write failed: " + std::string(std::strerror(errno)));
        done += static_cast<std::size_t>(n);
      }
      if (::fsync(fd_) != 0) throw std::runtime_error("judgment log fsync failed");
    }
    seen_.emplace(r.judge, r.item);
    records_.push_back(r);
    return Append::ok;
  }

  bool judged(const std::string& judge, const std::string& item) const {
    std::lock_guard lock(mu_);
    return seen_.count({judge, item}) > 0;
  }

  std::vector<JudgmentRecord> records() const {
    std::lock_guard lock(mu_);
    return records_;
  }

 private:
  std::string path_;
  int fd_ = -1;
  mutable std::mutex mu_;
  std::vector<JudgmentRecord> records_;
  std::set<std::pair<std::string, std::string>> seen_;
};

struct ApiRequest {
  std::string method = "GET";
  std::string path;
  std::map<std::string, std::string> query;
  std::string body;
};

struct ApiResponse {
  int status = 200;
  nlohmann::json body;  // null for 204

  std::string text() const { return body.is_null() ? std::string() : body.dump(); }
};

/// Immutable state swapped as a whole on reload.
struct ServiceSnapshot {
  std::shared_ptr<const NameEncoderModel> name2color;
  std::shared_ptr<const DecoderModel> color2name;
  std::vector<TuringItem> items;
  std::unordered_map<std::string, std::size_t> item_index;
};

inline std::shared_ptr<const ServiceSnapshot> load_snapshot(const ServiceConfig& cfg) {
  auto s = std::make_shared<ServiceSnapshot>();
  if (!cfg.name2color.empty()) {
    s->name2color = std::make_shared<const NameEncoderModel>(NameEncoderModel::load(cfg.name2color));
  }
  if (!cfg.color2name.empty()) {
    s->color2name = std::make_shared<const DecoderModel>(DecoderModel::load(cfg.color2name));
  }
  if (!cfg.turing_items.empty()) s->items = load_turing_items(cfg.turing_items);
  for (std::size_t i = 0; i < s->items.size(); ++i) {
    if (!s->item_index.emplace(s->items[i].id, i).second) {
      throw DataError("duplicate Turing item id '" + s->items[i].id + "'");
    }
  }
  return s;
}

class Service {
 public:
  /// Loads every configured artifact; throws if any fails to load or verify.
  explicit Service(ServiceConfig cfg) : cfg_(std::move(cfg)), snapshot_(load_snapshot(cfg_)), log_(cfg_.judgment_log) {}

  Service(ServiceConfig cfg, std::shared_ptr<const ServiceSnapshot> snapshot)
      : cfg_(std::move(cfg)), snapshot_(std::move(snapshot)), log_(cfg_.judgment_log) {}

  const ServiceConfig& config() const { return cfg_; }

  std::shared_ptr<const ServiceSnapshot> snapshot() const {
    std::lock_guard lock(snapshot_mu_);
    return snapshot_;
  }

  /// Re-reads checkpoints and items. On failure the old snapshot stays live.
  void reload() {
    auto fresh = load_snapshot(cfg_);
    std::lock_guard lock(snapshot_mu_);
    snapshot_ = std::move(fresh);
  }

  const JudgmentLog& log() const { return log_; }

  ApiResponse handle(const ApiRequest& req) {
    try {
      const auto snap = snapshot();
      if (req.method == "GET" && req.path == "/api/predict") return predict(*snap, req);
      if (req.method == "GET" && req.path == "/api/trace") return trace(*snap, req);
      if (req.method == "POST" && req.path == "/api/generate") return generate(*snap, req);
      if (req.method == "GET" && req.path == "/api/turing/next") return turing_next(*snap, req);
      if (req.method == "POST" && req.path == "/api/turing/judge") return turing_judge(*snap, req);
      if (req.method == "GET" && req.path == "/api/turing/results") return turing_results(*snap);
      if (req.method == "GET" && req.path == "/api/health") return health(*snap);
      if (req.method == "POST" && req.path == "/api/reload") {
        reload();
        return health(*snapshot());
      }
      return error(404, "no route for " + req.method + " " + req.path);
    } catch (const std::exception& e) {
      return error(500, e.what());
    }
  }

  /// Mounts the API (and the static directory, if configured) on `server`.
  void bind(httplib::Server& server) {
    auto adapt = [this](const char* method) {
      return [this, method](const httplib::Request& hreq, httplib::Response& hres) {
        ApiRequest req{method, hreq.path, {}, hreq.body};
        for (const auto& [k, v] : hreq.params) req.query.emplace(k, v);
        const ApiResponse res = handle(req);
        hres.status = res.status;
        if (!res.body.is_null()) hres.set_content(res.text(), "application/json");
      };
    };
    server.Get(R"(/api/.*)", adapt("GET"));
    server.Post(R"(/api/.*)", adapt("POST"));
    server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    server.set_default_headers({{"Access-Control-Allow-Origin", cfg_.cors_origin},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                {"Access-Control-Allow-Headers", "Content-Type"}});
    if (!cfg_.static_dir.empty() && !server.set_mount_point("/", cfg_.static_dir)) {
      throw std::runtime_error("static directory not found: " + cfg_.static_dir);
    }
  }

 private:
  static ApiResponse error(int status, const std::string& message) { return {status, {{"error", message}}}; }

  static nlohmann::json color_json(const ColorLab& c) {
    return {{"lab", {c.L(), c.a(), c.b()}}, {"rgb", to_hex(lab_to_rgb(c))}};
  }

  static std::optional<std::string> query_name(const ApiRequest& req, ApiResponse& err) {
    auto it = req.query.find("name");
    if (it == req.query.end() || it->second.empty()) {
      err = error(400, "name is required");
      return std::nullopt;
    }
    if (!is_valid_name(it->second)) {
      err = error(400, "name must be valid UTF-8, not blank, at most " + std::to_string(kMaxNameLength) +
                           " characters");
      return std::nullopt;
    }
    return it->second;
  }

  static ApiResponse predict(const ServiceSnapshot& s, const ApiRequest& req) {
    ApiResponse err;
    const auto name = query_name(req, err);
    if (!name) return err;
    if (!s.name2color) return error(503, "no name-to-color model loaded");
    nlohmann::json body = color_json(s.name2color->predict(*name));
    body["name"] = *name;
    return {200, body};
  }

  static ApiResponse trace(const ServiceSnapshot& s, const ApiRequest& req) {
    ApiResponse err;
    const auto name = query_name(req, err);
    if (!name) return err;
    if (!s.name2color) return error(503, "no name-to-color model loaded");
    const CharTrace t = char_trace(*name, *s.name2color);
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& step : t.steps) {
      nlohmann::json j = color_json(step.lab);
      j["prefix"] = step.prefix;
      steps.push_back(j);
    }
    return {200, {{"name", *name}, {"steps", steps}}};
  }

  ApiResponse generate(const ServiceSnapshot& s, const ApiRequest& req) const {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::exception&) {
      return error(400, "body must be JSON");
    }
    if (!j.is_object()) return error(400, "body must be a JSON object");
    std::optional<ColorLab> color;
    if (j.contains("lab")) {
      const auto& lab = j["lab"];
      if (!lab.is_array() || lab.size() != 3 || !lab[0].is_number() || !lab[1].is_number() || !lab[2].is_number()) {
        return error(400, "lab must be [L, a, b]");
      }
      const double L = lab[0].get<double>(), a = lab[1].get<double>(), b = lab[2].get<double>();
      if (!(L >= ColorLab::kMinL && L <= ColorLab::kMaxL && a >= ColorLab::kMinAB && a <= ColorLab::kMaxAB &&
            b >= ColorLab::kMinAB && b <= ColorLab::kMaxAB)) {
        return error(400, "lab outside L in [0,100], a,b in [-128,127]");
      }
      color = ColorLab{L, a, b};
    }
    const auto& n_json = j.contains("n") ? j["n"] : nlohmann::json(1);
    if (!n_json.is_number_integer() || n_json.get<long long>() < 1 || n_json.get<long long>() > 50) {
      return error(400, "n must be an integer in [1, 50]");
    }
    const auto& t_json = j.contains("temperature") ? j["temperature"] : nlohmann::json(1.0);
    if (!t_json.is_number() || !(t_json.get<double>() > 0.0 && t_json.get<double>() <= 5.0)) {
      return error(400, "temperature must be in (0, 5]");
    }
    const auto& seed_json = j.contains("seed") ? j["seed"] : nlohmann::json(42);
    if (!seed_json.is_number_unsigned() && !(seed_json.is_number_integer() && seed_json.get<long long>() >= 0)) {
      return error(400, "seed must be a non-negative integer");
    }
    if (!s.color2name) return error(503, "no color-to-name model loaded");
    if (uses_color(s.color2name->kind()) && !color) return error(400, "lab is required for this model");
    const auto n = n_json.get<std::size_t>();
    const double temperature = t_json.get<double>();
    const auto seed = seed_json.get<std::uint64_t>();
    nlohmann::json names = nlohmann::json::array();
    for (std::size_t i = 0; i < n; ++i) {
      names.push_back(s.color2name->sample_name(color, temperature, derive_seed(seed, i), cfg_.max_generate_length));
    }
    return {200, {{"names", names}}};
  }

  ApiResponse turing_next(const ServiceSnapshot& s, const ApiRequest& req) const {
    auto it = req.query.find("judge");
    if (it == req.query.end() || it->second.empty()) return error(400, "judge is required");
    if (s.items.empty()) return error(503, "no Turing items loaded");
    const std::string& judge = it->second;
    const auto order = judge_permutation(judge, s.items.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
      const TuringItem& item = s.items[order[k]];
      if (log_.judged(judge, item.id)) continue;
      return {200,
              {{"id", item.id},
               {"name", item.name},
               {"dataset", item.dataset},
               {"left", color_json(item.color_on(Side::left))},
               {"right", color_json(item.color_on(Side::right))},
               {"position", k + 1},
               {"total", order.size()}}};
    }
    return {204, nullptr};
  }

  ApiResponse turing_judge(const ServiceSnapshot& s, const ApiRequest& req) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::exception&) {
      return error(400, "body must be JSON");
    }
    if (!j.is_object() || !j.contains("judge") || !j["judge"].is_string() || !j.contains("item") ||
        !j["item"].is_string() || !j.contains("choice") || !j["choice"].is_string()) {
      return error(400, "expected {judge, item, choice}");
    }
    const auto judge = j["judge"].get<std::string>();
    const auto item_id = j["item"].get<std::string>();
    if (judge.empty() || judge.size() > 256) return error(400, "judge id must be 1 to 256 bytes");
    Side side;
    try {
      side = parse_side(j["choice"].get<std::string>());
    } catch (const std::invalid_argument& e) {
      return error(400, e.what());
    }
    auto it = s.item_index.find(item_id);
    if (it == s.item_index.end()) return error(404, "unknown item '" + item_id + "'");
    const TuringItem& item = s.items[it->second];
    const JudgmentRecord r{item.id, judge, item.choice_for(side), side, utc_timestamp()};
    if (log_.append(r) == JudgmentLog::Append::duplicate) {
      return error(409, "judge '" + judge + "' already judged '" + item_id + "'");
    }
    return {201, {{"judge", judge}, {"item", item_id}, {"recorded", true}}};
  }

  ApiResponse turing_results(const ServiceSnapshot& s) const {
    return {200, tabulate_preferences(log_.records(), s.items).to_json()};
  }

  static ApiResponse health(const ServiceSnapshot& s) {
    nlohmann::json j = {{"name2color", s.name2color ? std::string(to_string(s.name2color->kind())) : ""},
                        {"color2name", s.color2name ? std::string(to_string(s.color2name->kind())) : ""},
                        {"turing_items", s.items.size()}};
    return {200, j};
  }

  ServiceConfig cfg_;
  mutable std::mutex snapshot_mu_;
  std::shared_ptr<const ServiceSnapshot> snapshot_;
  JudgmentLog log_;
};

/// Blocks serving HTTP until the server is stopped.
inline void serve(Service& service, httplib::Server& server) {
  service.bind(server);
  const auto& cfg = service.config();
  if (!server.listen(cfg.host, cfg.port)) {
    throw std::runtime_error("cannot listen on " + cfg.host + ":" + std::to_string(cfg.port));
  }
}

}  // namespace colorname
