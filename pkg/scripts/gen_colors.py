#!/usr/bin/env python3
"""Regenerate src/splatedit/data/colors.tsv.

148 CSS extended color names plus 60 spaced compound aliases (e.g. "dark red")
for natural prompt phrasing, 208 entries total. Channel values are 8-bit.
"""

from pathlib import Path

import matplotlib.colors as mcolors

# Spaced aliases of CSS names; exactly 60 entries.
COMPOUND_ALIASES = [
    "alice blue", "antique white", "blanched almond", "blue violet", "cadet blue",
    "cornflower blue", "dodger blue", "forest green", "ghost white", "green yellow",
    "dark blue", "dark cyan", "dark goldenrod", "dark gray", "dark green",
    "dark grey", "dark khaki", "dark magenta", "dark olive green", "dark orange",
    "dark orchid", "dark red", "dark salmon", "dark sea green", "dark slate blue",
    "dark slate gray", "dark slate grey", "dark turquoise", "dark violet", "deep pink",
    "deep sky blue", "hot pink", "light blue", "light coral", "light cyan",
    "light goldenrod yellow", "light gray", "light green", "light grey", "light pink",
    "light salmon", "light sea green", "light sky blue", "light slate gray",
    "light slate grey", "light steel blue", "light yellow", "medium aquamarine",
    "medium blue", "medium orchid", "medium purple", "medium sea green",
    "medium slate blue", "medium spring green", "medium turquoise", "medium violet red",
    "pale goldenrod", "pale green", "pale turquoise", "pale violet red",
]


def main() -> None:
    assert len(COMPOUND_ALIASES) == 60, len(COMPOUND_ALIASES)
    rows = []
    for name, hexval in sorted(mcolors.CSS4_COLORS.items()):
        r, g, b = (int(hexval[i : i + 2], 16) for i in (1, 3, 5))
        rows.append((name, r, g, b))
    assert len(rows) == 148, len(rows)
    for alias in COMPOUND_ALIASES:
        joined = alias.replace(" ", "")
        hexval = mcolors.CSS4_COLORS[joined]
        r, g, b = (int(hexval[i : i + 2], 16) for i in (1, 3, 5))
        rows.append((alias, r, g, b))
    rows.sort(key=lambda t: t[0])
    out = Path(__file__).resolve().parents[1] / "src" / "splatedit" / "data" / "colors.tsv"
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="ascii") as fh:
        for name, r, g, b in rows:
            fh.write(f"{name}\t{r}\t{g}\t{b}\n")
    print(f"wrote {len(rows)} colors to {out}")


if __name__ == "__main__":
    main()
