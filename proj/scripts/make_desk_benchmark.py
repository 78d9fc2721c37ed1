#!/usr/bin/env python3
"""Generate the synthetic desk benchmark under data/desk.

Names are built compositionally from color words with known anchors, so the
name -> color map has structure a sequence model can learn (word order,
modifiers acting multiplicatively on chroma, two-word blends weighted toward
the head word) while a bag of characters cannot represent it exactly.

Outputs (all deterministic for a given --seed):
  pool.csv         12,000 name,hex pairs (split by `colorname split`)
  ggplot2.csv      R/CSS-style color names
  paint.csv        paint-chip style names
  corpora/*.txt    word lists for the colorfulness analysis
"""

import argparse
import os
import random

# Anchor colors in sRGB bytes.
BASE = {
    "red": (220, 30, 40), "crimson": (190, 20, 60), "scarlet": (255, 36, 0),
    "orange": (255, 140, 0), "amber": (255, 190, 0), "yellow": (255, 230, 30),
    "lemon": (250, 240, 90), "gold": (230, 190, 40), "mustard": (210, 170, 40),
    "olive": (128, 128, 0), "lime": (150, 220, 50), "green": (40, 160, 60),
    "emerald": (20, 150, 90), "mint": (160, 230, 180), "jade": (0, 168, 107),
    "teal": (0, 128, 128), "turquoise": (64, 224, 208), "aqua": (80, 230, 230),
    "cyan": (0, 200, 230), "sky": (135, 206, 235), "blue": (30, 80, 220),
    "azure": (0, 127, 255), "cobalt": (0, 71, 171), "navy": (10, 20, 100),
    "indigo": (75, 0, 130), "violet": (143, 80, 200), "purple": (120, 40, 150),
    "lavender": (190, 170, 230), "lilac": (200, 162, 200), "plum": (142, 69, 133),
    "magenta": (230, 0, 160), "pink": (255, 160, 190), "rose": (240, 90, 130),
    "salmon": (250, 128, 114), "coral": (255, 110, 80), "peach": (255, 200, 160),
    "tan": (210, 180, 140), "beige": (235, 225, 200), "sand": (220, 200, 150),
    "khaki": (195, 176, 120), "brown": (120, 70, 30), "chocolate": (90, 50, 25),
    "coffee": (111, 78, 55), "caramel": (190, 120, 50), "rust": (183, 65, 14),
    "brick": (160, 50, 40), "copper": (184, 115, 51), "bronze": (160, 110, 40),
    "gray": (128, 128, 128), "grey": (130, 130, 130), "silver": (192, 192, 192),
    "charcoal": (54, 69, 79), "slate": (100, 115, 130), "steel": (113, 128, 150),
    "ash": (178, 178, 170), "smoke": (150, 150, 150), "black": (15, 15, 15),
    "ink": (20, 25, 45), "white": (250, 250, 250), "snow": (245, 248, 255),
    "ivory": (255, 250, 235), "cream": (255, 245, 210), "pearl": (235, 230, 220),
    "cherry": (200, 20, 50), "berry": (140, 30, 90), "grape": (100, 40, 120),
    "wine": (114, 47, 55), "ruby": (200, 17, 80), "sapphire": (15, 82, 186),
    "honey": (235, 170, 50), "butter": (255, 235, 140), "banana": (255, 225, 80),
    "tomato": (255, 80, 60), "pumpkin": (255, 117, 24), "carrot": (240, 120, 30),
    "basil": (80, 140, 60), "moss": (100, 120, 50), "forest": (30, 90, 40),
    "grass": (90, 170, 50), "leaf": (100, 160, 60), "ocean": (0, 100, 160),
    "sea": (40, 140, 150), "lake": (60, 110, 150), "storm": (80, 90, 110),
    "fire": (240, 80, 20), "blood": (140, 10, 20), "sun": (255, 200, 40),
    "sunset": (250, 110, 70), "denim": (60, 90, 140), "mud": (110, 90, 60),
}

# (name, lightness shift, chroma factor, a shift, b shift)
MODIFIERS = [
    ("light", 18, 0.85, 0, 0), ("dark", -22, 0.9, 0, 0), ("deep", -14, 1.2, 0, 0),
    ("pale", 16, 0.45, 0, 0), ("bright", 6, 1.3, 0, 0), ("dusty", -4, 0.55, 0, 0),
    ("muted", 0, 0.5, 0, 0), ("soft", 9, 0.75, 0, 0), ("vivid", 2, 1.45, 0, 0),
    ("faded", 10, 0.6, 0, 0), ("rich", -9, 1.25, 0, 0), ("neon", 10, 1.6, 0, 0),
    ("dirty", -12, 0.65, 4, 8), ("warm", 2, 1.0, 6, 12), ("cool", 0, 1.0, -4, -12),
    ("smoky", -8, 0.5, 0, 0), ("misty", 12, 0.5, 0, -3), ("burnt", -15, 1.1, 8, 10),
]
INTENSIFIERS = [("very", 1.6), ("slightly", 0.5), ("super", 1.9)]
FILLER_BEFORE = ["my", "the", "old", "little", "sweet", "lovely", "happy", "secret", "lost"]
FILLER_AFTER = ["dream", "love", "kiss", "song", "days", "sky", "summer", "heart", "party", "morning", "tears"]
PLACES = ["Tuscan", "Pompeii", "Harbor", "Aspen", "Sahara", "Nordic", "Venice", "Cabin", "Prairie",
          "Coastal", "Canyon", "Alpine", "Garden", "Meadow", "Bayou", "Savanna"]

# R/CSS color names, the ggplot2-style held-out fixture.
CSS = """aliceblue f0f8ff antiquewhite faebd7 aqua 00ffff aquamarine 7fffd4 azure f0ffff beige f5f5dc
bisque ffe4c4 black 000000 blanchedalmond ffebcd blue 0000ff blueviolet 8a2be2 brown a52a2a burlywood deb887
cadetblue 5f9ea0 chartreuse 7fff00 chocolate d2691e coral ff7f50 cornflowerblue 6495ed cornsilk fff8dc
crimson dc143c cyan 00ffff darkblue 00008b darkcyan 008b8b darkgoldenrod b8860b darkgray a9a9a9 darkgreen 006400
darkkhaki bdb76b darkmagenta 8b008b darkolivegreen 556b2f darkorange ff8c00 darkorchid 9932cc darkred 8b0000
darksalmon e9967a darkseagreen 8fbc8f darkslateblue 483d8b darkslategray 2f4f4f darkturquoise 00ced1
darkviolet 9400d3 deeppink ff1493 deepskyblue 00bfff dimgray 696969 dodgerblue 1e90ff firebrick b22222
floralwhite fffaf0 forestgreen 228b22 fuchsia ff00ff gainsboro dcdcdc ghostwhite f8f8ff gold ffd700
goldenrod daa520 gray 808080 green 008000 greenyellow adff2f honeydew f0fff0 hotpink ff69b4 indianred cd5c5c
indigo 4b0082 ivory fffff0 khaki f0e68c lavender e6e6fa lavenderblush fff0f5 lawngreen 7cfc00
lemonchiffon fffacd lightblue add8e6 lightcoral f08080 lightcyan e0ffff lightgoldenrodyellow fafad2
lightgray d3d3d3 lightgreen 90ee90 lightpink ffb6c1 lightsalmon ffa07a lightseagreen 20b2aa lightskyblue 87cefa
lightslategray 778899 lightsteelblue b0c4de lightyellow ffffe0 lime 00ff00 limegreen 32cd32 linen faf0e6
magenta ff00ff maroon 800000 mediumaquamarine 66cdaa mediumblue 0000cd mediumorchid ba55d3 mediumpurple 9370db
mediumseagreen 3cb371 mediumslateblue 7b68ee mediumspringgreen 00fa9a mediumturquoise 48d1cc
mediumvioletred c71585 midnightblue 191970 mintcream f5fffa mistyrose ffe4e1 moccasin ffe4b5 navajowhite ffdead
navy 000080 oldlace fdf5e6 olive 808000 olivedrab 6b8e23 orange ffa500 orangered ff4500 orchid da70d6
palegoldenrod eee8aa palegreen 98fb98 paleturquoise afeeee palevioletred db7093 papayawhip ffefd5
peachpuff ffdab9 peru cd853f pink ffc0cb plum dda0dd powderblue b0e0e6 purple 800080 red ff0000
rosybrown bc8f8f royalblue 4169e1 saddlebrown 8b4513 salmon fa8072 sandybrown f4a460 seagreen 2e8b57
seashell fff5ee sienna a0522d silver c0c0c0 skyblue 87ceeb slateblue 6a5acd slategray 708090 snow fffafa
springgreen 00ff7f steelblue 4682b4 tan d2b48c teal 008080 thistle d8bfd8 tomato ff6347 turquoise 40e0d0
violet ee82ee wheat f5deb3 white ffffff whitesmoke f5f5f5 yellow ffff00 yellowgreen 9acd32"""

XN, ZN = 0.9504, 1.0888
M = [[0.4124564, 0.3575761, 0.1804375], [0.2126729, 0.7151522, 0.0721750], [0.0193339, 0.1191920, 0.9503041]]


def _f(t):
    return t ** (1.0 / 3.0) if t > 0.008856 else (903.3 * t + 16.0) / 116.0


def rgb_to_lab(rgb):
    r, g, b = (c / 255.0 for c in rgb)
    x, y, z = (row[0] * r + row[1] * g + row[2] * b for row in M)
    x /= XN
    z /= ZN
    L = 116.0 * _f(y) - 16.0
    return (L, 500.0 * (_f(x) - _f(y)), 200.0 * (_f(y) - _f(z)))


def _finv(v):
    return v ** 3 if v > 0.008856 ** (1.0 / 3.0) else (116.0 * v - 16.0) / 903.3


def _inverse(m):
    det = (m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
           + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]))
    cof = [[(m[(j + 1) % 3][(i + 1) % 3] * m[(j + 2) % 3][(i + 2) % 3]
             - m[(j + 1) % 3][(i + 2) % 3] * m[(j + 2) % 3][(i + 1) % 3]) / det for j in range(3)] for i in range(3)]
    return cof


MINV = _inverse(M)


def lab_to_rgb(lab):
    L, a, b = lab
    fy = (L + 16.0) / 116.0
    y = fy ** 3 if L > 903.3 * 0.008856 else L / 903.3
    x = _finv(fy + a / 500.0) * XN
    z = _finv(fy - b / 200.0) * ZN
    out = []
    for row in MINV:
        v = row[0] * x + row[1] * y + row[2] * z
        out.append(min(255, max(0, int(round(v * 255.0)))))
    return tuple(out)


def hexify(rgb):
    return "#%02X%02X%02X" % rgb


def modify(lab, mod, strength=1.0):
    _, dl, chroma, da, db = mod
    L, a, b = lab
    factor = 1.0 + (chroma - 1.0) * strength
    return (max(0.0, min(100.0, L + dl * strength)), a * factor + da * strength, b * factor + db * strength)


def blend(x, y, w):
    return tuple((1 - w) * p + w * q for p, q in zip(x, y))


def stretch(word, rng):
    vowels = [i for i, ch in enumerate(word) if ch in "aeiou"]
    if not vowels:
        return word
    i = rng.choice(vowels)
    return word[: i + 1] + word[i] * rng.randint(2, 5) + word[i + 1:]


def style(words, rng):
    r = rng.random()
    if r < 0.55:
        text = " ".join(words)
    elif r < 0.85:
        text = " ".join(w.capitalize() for w in words)
    elif r < 0.92:
        text = " ".join(words).upper()
    else:
        text = "".join(words)
    return text


def nonsense(rng):
    letters = "abcdefghijklmnopqrstuvwxyz"
    words = []
    for _ in range(rng.randint(1, 3)):
        words.append("".join(rng.choice(letters) for _ in range(rng.randint(3, 8))))
    return " ".join(words)


LAB = {k: rgb_to_lab(v) for k, v in BASE.items()}
WORDS = sorted(BASE)


def compositional(rng):
    """Returns (list of words, Lab) for one structured name."""
    kind = rng.random()
    head = rng.choice(WORDS)
    lab = LAB[head]
    words = [stretch(head, rng) if rng.random() < 0.05 else head]
    if kind < 0.26:
        pass
    elif kind < 0.52:
        mod = rng.choice(MODIFIERS)
        strength = 1.0
        prefix = [mod[0]]
        if rng.random() < 0.25:
            name, strength = rng.choice(INTENSIFIERS)
            prefix = [name] + prefix
        lab = modify(lab, mod, strength)
        words = prefix + words
    elif kind < 0.74:
        first = rng.choice(WORDS)
        lab = blend(LAB[first], lab, 0.65)
        words = [first] + words
    elif kind < 0.86:
        mod = rng.choice(MODIFIERS)
        first = rng.choice(WORDS)
        lab = modify(blend(LAB[first], lab, 0.65), mod)
        words = [mod[0], first] + words
    else:
        if rng.random() < 0.5:
            words = [rng.choice(FILLER_BEFORE)] + words
        else:
            words = words + [rng.choice(FILLER_AFTER)]
    return words, lab


def noisy(lab, rng, sd):
    return (lab[0] + rng.gauss(0, sd), lab[1] + rng.gauss(0, sd), lab[2] + rng.gauss(0, sd))


def random_rgb(rng):
    return (rng.randint(0, 255), rng.randint(0, 255), rng.randint(0, 255))


def make_pool(rng, n, noise_sd, nonsense_rate):
    rows = []
    for _ in range(n):
        if rng.random() < nonsense_rate:
            rows.append((nonsense(rng), hexify(random_rgb(rng))))
            continue
        words, lab = compositional(rng)
        rows.append((style(words, rng), hexify(lab_to_rgb(noisy(lab, rng, noise_sd)))))
    return rows


def make_paint(rng, n, noise_sd):
    rows = []
    for _ in range(n):
        words, lab = compositional(rng)
        if rng.random() < 0.6:
            words = [rng.choice(PLACES).lower()] + words
        rows.append((" ".join(w.capitalize() for w in words), hexify(lab_to_rgb(noisy(lab, rng, noise_sd)))))
    return rows


def make_css():
    tokens = CSS.split()
    return [(tokens[i], "#" + tokens[i + 1].upper()) for i in range(0, len(tokens), 2)]


def quote(name):
    return '"' + name.replace('"', '""') + '"' if ("," in name or '"' in name) else name


def write_csv(path, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("name,hex\n")
        for name, hx in rows:
            f.write("%s,%s\n" % (quote(name), hx))


POEMS = """
The night was long and the heart was slow, I kept the promise of a quiet dream.
Your voice is a river that runs through the hollow of my sleep, and I wake alone.
We were young and the world was wide, we walked until the stars forgot our names.
I carry your silence like a stone, I hold the morning in my empty hands.
Time will fold the letters we wrote, the wind will scatter every word we said.
Under the bridge the water remembers, the old door opens to nobody at all.
Tell me again how the evening falls, how the distance grows between two souls.
I loved you in the language of waiting, in the hours that never came back.
There is a door inside the rain, there is a song that nobody sings.
My father walked the road alone, his shadow longer than the years he kept.
Hope is a thing that stays awake, it listens for the sound of someone near.
We wandered far from every home, we counted every breath as if it mattered.
"""

RECIPES = """
Chop the tomato and basil, then toss with lemon juice, olive oil and a pinch of salt.
Melt the butter with the honey and caramel, stir in chocolate until smooth and glossy.
Roast the pumpkin and carrot with garlic, then blend with cream and a little coffee.
Fold the cherry and berry compote into the yogurt and top with mint and lime zest.
Simmer the grape and plum with wine and cinnamon until the sauce turns thick.
Whisk the peach puree with orange juice and spoon over the banana bread.
Toast the sesame, sprinkle over the salmon with lemon and green onion.
Bake the chocolate cake, dust with sugar, and serve with cherry cream and mint.
Grill the tomato, brush with butter and honey, finish with basil and olive oil.
Mash the banana with peanut butter, add caramel and a handful of berry.
Slice the lime and lemon, muddle with mint and pour over crushed ice with honey.
Stir the mustard into the cream, add carrot and pumpkin, and season well.
"""

BEER = """
Pours a hazy amber with a thick cream head and notes of caramel, honey and orange peel.
Deep copper body, aroma of roasted coffee and dark chocolate with a hint of cherry.
Golden straw color, lemon and grass on the nose, crisp finish with some bread.
Pitch black stout, mocha and chocolate up front, smoke and coffee on the finish.
Bright gold with white foam, banana and clove, a touch of honey and peach.
Ruby red ale with berry and plum notes, caramel malt and a rust tinted lace.
Hazy orange pour, mango and lime aroma, grapefruit bitterness and pine.
Brown ale with toffee, coffee and chocolate, a nutty body and bronze glow.
Pale lemon color, tart cherry and raspberry, funky and dry with oak.
Mahogany pour with a tan head, roasted coffee, dark fruit and a mustard bite.
Amber gold with copper highlights, honey sweetness and a grassy hop.
Cloudy peach body, apricot and mango, soft cream texture and a lemon finish.
"""


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data", "desk"))
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--pool", type=int, default=12000)
    ap.add_argument("--noise", type=float, default=3.0)
    ap.add_argument("--nonsense", type=float, default=0.06)
    args = ap.parse_args()

    rng = random.Random(args.seed)
    os.makedirs(os.path.join(args.out, "corpora"), exist_ok=True)
    write_csv(os.path.join(args.out, "pool.csv"), make_pool(rng, args.pool, args.noise, args.nonsense))
    write_csv(os.path.join(args.out, "ggplot2.csv"), make_css())
    write_csv(os.path.join(args.out, "paint.csv"), make_paint(rng, 1000, args.noise))
    for name, text in (("poems", POEMS), ("recipes", RECIPES), ("beer_reviews", BEER)):
        with open(os.path.join(args.out, "corpora", name + ".txt"), "w", encoding="utf-8") as f:
            f.write(text.strip() + "\n")


if __name__ == "__main__":
    main()
