"""Built-in 5x7 dot-matrix font for A-Z and 0-9.

Each glyph is seven 5-bit rows, drawn here as strings for legibility and
compiled to boolean arrays at import. The renderer maps font cells to
image pixels, so glyph quality directly bounds recognizability.
"""

import numpy as np

_GLYPHS = {
    "A": (".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"),
    "B": ("####.", "#...#", "#...#", "####.", "#...#", "#...#", "####."),
    "C": (".###.", "#...#", "#....", "#....", "#....", "#...#", ".###."),
    "D": ("####.", "#...#", "#...#", "#...#", "#...#", "#...#", "####."),
    "E": ("#####", "#....", "#....", "####.", "#....", "#....", "#####"),
    "F": ("#####", "#....", "#....", "####.", "#....", "#....", "#...."),
    "G": (".###.", "#...#", "#....", "#.###", "#...#", "#...#", ".###."),
    "H": ("#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"),
    "I": (".###.", "..#..", "..#..", "..#..", "..#..", "..#..", ".###."),
    "J": ("..###", "...#.", "...#.", "...#.", "...#.", "#..#.", ".##.."),
    "K": ("#...#", "#..#.", "#.#..", "##...", "#.#..", "#..#.", "#...#"),
    "L": ("#....", "#....", "#....", "#....", "#....", "#....", "#####"),
    "M": ("#...#", "##.##", "#.#.#", "#.#.#", "#...#", "#...#", "#...#"),
    "N": ("#...#", "##..#", "#.#.#", "#..##", "#...#", "#...#", "#...#"),
    "O": (".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."),
    "P": ("####.", "#...#", "#...#", "####.", "#....", "#....", "#...."),
    "Q": (".###.", "#...#", "#...#", "#...#", "#.#.#", "#..#.", ".##.#"),
    "R": ("####.", "#...#", "#...#", "####.", "#.#..", "#..#.", "#...#"),
    "S": (".####", "#....", "#....", ".###.", "....#", "....#", "####."),
    "T": ("#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."),
    "U": ("#...#", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."),
    "V": ("#...#", "#...#", "#...#", "#...#", "#...#", ".#.#.", "..#.."),
    "W": ("#...#", "#...#", "#...#", "#.#.#", "#.#.#", "##.##", "#...#"),
    "X": ("#...#", "#...#", ".#.#.", "..#..", ".#.#.", "#...#", "#...#"),
    "Y": ("#...#", "#...#", ".#.#.", "..#..", "..#..", "..#..", "..#.."),
    "Z": ("#####", "....#", "...#.", "..#..", ".#...", "#....", "#####"),
    "0": (".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."),
    "1": ("..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."),
    "2": (".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"),
    "3": ("#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###."),
    "4": ("...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."),
    "5": ("#####", "#....", "####.", "....#", "....#", "#...#", ".###."),
    "6": ("..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."),
    "7": ("#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."),
    "8": (".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."),
    "9": (".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."),
}

GLYPH_ROWS = 7
GLYPH_COLS = 5
CHAR_ADVANCE = 6  # 5 columns plus 1 spacing column

FONT: dict[str, np.ndarray] = {
    c: np.array([[ch == "#" for ch in row] for row in rows], dtype=bool)
    for c, rows in _GLYPHS.items()
}


def glyph(c: str) -> np.ndarray:
    """7x5 boolean bitmap for one character."""
    return FONT[c]


def lit_column_range(text: str) -> tuple[int, int]:
    """[lo, hi) range of lit font columns across the whole word."""
    lo, hi = None, None
    for i, c in enumerate(text):
        g = FONT[c]
        cols = np.where(g.any(axis=0))[0]
        if cols.size == 0:
            continue
        start = i * CHAR_ADVANCE + int(cols[0])
        end = i * CHAR_ADVANCE + int(cols[-1]) + 1
        lo = start if lo is None else min(lo, start)
        hi = end if hi is None else max(hi, end)
    return (0, 0) if lo is None else (lo, hi)


def lit_row_range(text: str) -> tuple[int, int]:
    """[lo, hi) range of lit font rows across the whole word."""
    rows = np.zeros(GLYPH_ROWS, dtype=bool)
    for c in text:
        rows |= FONT[c].any(axis=1)
    idx = np.where(rows)[0]
    if idx.size == 0:
        return (0, 0)
    return int(idx[0]), int(idx[-1]) + 1
