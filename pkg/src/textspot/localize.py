"""Turn a query's attention activation map into location outputs.

The spotting model never regresses coordinates; where a query looked is
read off its cross-attention map. This module converts such a map into
a binary mask (threshold + largest 4-connected component), a single
point (masked intensity centroid), and a polygon (corner-resolution
contour walk, Douglas-Peucker simplified).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np


class DegenerateMapError(ValueError):
    """The attention map has no positive cell to localize."""


@dataclass
class BinaryMask:
    grid: np.ndarray      # (G, G) bool
    scale: float          # pixels per grid cell; cell (i,j) center = ((j+.5)s, (i+.5)s)


def _as_array(amap) -> np.ndarray:
    data = getattr(amap, "data", amap)
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"attention map must be 2-D, got shape {arr.shape}")
    if (arr < 0).any():
        raise ValueError("attention map must be nonnegative")
    return arr


def threshold_cells(amap, alpha: float) -> np.ndarray:
    """Cells with value >= alpha * max(map), restricted to positive cells.

    This is the raw threshold stage, before component selection; it is
    monotone: a larger alpha never adds cells.
    """
    arr = _as_array(amap)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    peak = arr.max()
    if peak <= 0.0:
        raise DegenerateMapError("attention map is all zero")
    return (arr >= alpha * peak) & (arr > 0.0)


def _components(grid: np.ndarray) -> np.ndarray:
    """Label 4-connected components; 0 = background, labels from 1."""
    labels = np.zeros(grid.shape, dtype=int)
    next_label = 0
    rows, cols = grid.shape
    for si in range(rows):
        for sj in range(cols):
            if not grid[si, sj] or labels[si, sj]:
                continue
            next_label += 1
            queue = deque([(si, sj)])
            labels[si, sj] = next_label
            while queue:
                i, j = queue.popleft()
                for ni, nj in ((i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)):
                    if (0 <= ni < rows and 0 <= nj < cols
                            and grid[ni, nj] and not labels[ni, nj]):
                        labels[ni, nj] = next_label
                        queue.append((ni, nj))
    return labels


def attention_mask(amap, alpha: float, scale: float = 1.0) -> BinaryMask:
    """Threshold at alpha*max, keep the largest 4-connected component.

    Size ties go to the component containing the map's maximum cell
    (first maximum in row-major order), then to the component holding
    the smallest (row, col) cell.
    """
    arr = _as_array(amap)
    cells = threshold_cells(arr, alpha)
    labels = _components(cells)
    n = labels.max()
    if n == 1:
        return BinaryMask(cells, scale)
    sizes = np.bincount(labels.ravel())[1:]  # sizes[k-1] = |component k|
    best = sizes.max()
    candidates = {k + 1 for k in range(n) if sizes[k] == best}
    max_cell = np.unravel_index(int(arr.argmax()), arr.shape)
    if labels[max_cell] in candidates:
        chosen = labels[max_cell]
    else:
        chosen = min(candidates,
                     key=lambda k: int(np.flatnonzero(labels.ravel() == k)[0]))
    return BinaryMask(labels == chosen, scale)


def attention_point(amap, alpha: float, scale: float = 1.0) -> tuple[float, float]:
    """Intensity-weighted centroid of the masked cells, in pixel coords."""
    arr = _as_array(amap)
    mask = attention_mask(arr, alpha, scale)
    ii, jj = np.nonzero(mask.grid)
    weights = arr[ii, jj]
    weights = weights / weights.sum()  # normalize first: one cell stays exact
    x = float(((jj + 0.5) * scale * weights).sum())
    y = float(((ii + 0.5) * scale * weights).sum())
    return (x, y)


# ---------------------------------------------------------------------------
# contour extraction


def _boundary_edges(grid: np.ndarray):
    """Directed cell-corner edges with positive-shoelace orientation.

    Corner (i, j) is the top-left corner of cell (i, j). Each true cell
    contributes the edges it does not share with a true neighbour.
    """
    edges: dict[tuple[int, int], list[tuple[int, int]]] = {}

    def add(a, b):
        edges.setdefault(a, []).append(b)

    rows, cols = grid.shape
    padded = np.zeros((rows + 2, cols + 2), dtype=bool)
    padded[1:-1, 1:-1] = grid
    for i in range(rows):
        for j in range(cols):
            if not grid[i, j]:
                continue
            if not padded[i, j + 1]:        # nothing above: top edge, +x
                add((i, j), (i, j + 1))
            if not padded[i + 1, j + 2]:    # nothing right: right edge, +y
                add((i, j + 1), (i + 1, j + 1))
            if not padded[i + 2, j + 1]:    # nothing below: bottom edge, -x
                add((i + 1, j + 1), (i + 1, j))
            if not padded[i + 1, j]:        # nothing left: left edge, -y
                add((i + 1, j), (i, j))
    return edges


def _walk_contour(edges) -> list[tuple[int, int]]:
    """Trace the outer contour loop from the topmost-leftmost corner.

    At pinch corners (two outgoing edges) take the branch that crosses
    to the other lobe, so the loop encloses the whole component.
    """
    start = min(edges)
    loop = [start]
    prev_dir = None
    cur = start
    while True:
        outs = edges[cur]
        if len(outs) == 1 or prev_dir is None:
            nxt = outs[0]
        else:
            def cross(out):
                dx_in, dy_in = prev_dir
                dx_out, dy_out = out[1] - cur[1], out[0] - cur[0]
                return dx_in * dy_out - dy_in * dx_out
            nxt = min(outs, key=cross)  # most negative cross = merging turn
        prev_dir = (nxt[1] - cur[1], nxt[0] - cur[0])
        if nxt == start:
            break
        loop.append(nxt)
        cur = nxt
    return loop


def _collapse_collinear(corners):
    out = []
    n = len(corners)
    for k in range(n):
        a, b, c = corners[k - 1], corners[k], corners[(k + 1) % n]
        if (b[0] - a[0]) * (c[1] - b[1]) != (b[1] - a[1]) * (c[0] - b[0]):
            out.append(b)
    return out


def _dp_chain(pts, lo, hi, keep, tol):
    """Mark Douglas-Peucker survivors between anchors lo and hi."""
    stack = [(lo, hi)]
    while stack:
        a, b = stack.pop()
        if b - a < 2:
            continue
        ax, ay = pts[a]
        bx, by = pts[b]
        seg = np.hypot(bx - ax, by - ay)
        best_d, best_k = -1.0, -1
        for k in range(a + 1, b):
            px, py = pts[k]
            if seg < 1e-12:
                d = np.hypot(px - ax, py - ay)
            else:
                d = abs((bx - ax) * (ay - py) - (ax - px) * (by - ay)) / seg
            if d > best_d:
                best_d, best_k = d, k
        if best_d > tol:
            keep[best_k] = True
            stack.append((a, best_k))
            stack.append((best_k, b))


def _simplify_closed(pts, tol):
    """Douglas-Peucker on a closed polygon, anchored at its diameter."""
    n = len(pts)
    if n <= 4:
        return list(pts)
    arr = np.asarray(pts, dtype=float)
    d2 = ((arr[:, None, :] - arr[None, :, :]) ** 2).sum(-1)
    a, b = np.unravel_index(int(d2.argmax()), d2.shape)
    if a > b:
        a, b = b, a
    keep = [False] * n
    keep[a] = keep[b] = True
    _dp_chain(pts, a, b, keep, tol)
    wrapped = pts[b:] + pts[: a + 1]
    keep_w = [False] * len(wrapped)
    keep_w[0] = keep_w[-1] = True
    _dp_chain(wrapped, 0, len(wrapped) - 1, keep_w, tol)
    for off, flag in enumerate(keep_w[:-1]):
        if flag:
            keep[(b + off) % n] = True
    return [p for p, f in zip(pts, keep) if f]


def _shoelace(pts) -> float:
    total = 0.0
    for (x1, y1), (x2, y2) in zip(pts, pts[1:] + pts[:1]):
        total += x1 * y2 - x2 * y1
    return total / 2.0


def _point_in(x, y, poly) -> bool:
    inside = False
    n = len(poly)
    for k in range(n):
        x1, y1 = poly[k]
        x2, y2 = poly[(k + 1) % n]
        if (y1 > y) != (y2 > y) and x < x1 + (y - y1) * (x2 - x1) / (y2 - y1):
            inside = not inside
    return inside


def _faithful(poly, grid) -> bool:
    """Simplified polygon keeps >=90% of cells and <=110% of area."""
    cells = int(grid.sum())
    ii, jj = np.nonzero(grid)
    recovered = sum(_point_in(j + 0.5, i + 0.5, poly) for i, j in zip(ii, jj))
    return recovered >= 0.9 * cells and abs(_shoelace(poly)) <= 1.1 * cells


def mask_to_polygon(mask: BinaryMask) -> list[tuple[float, float]]:
    """Outer contour of the mask as a counter-clockwise pixel polygon.

    Corner-resolution contour, simplified with tolerance 1.0 grid cell.
    If simplification would drop below 3 vertices or stray beyond the
    fidelity bound (>=90% of cells recovered, area within 110%), the
    unsimplified contour is returned instead; that one rasterizes back
    to the component exactly.
    """
    grid = np.asarray(mask.grid, dtype=bool)
    if not grid.any():
        raise DegenerateMapError("mask has no true cell")
    edges = _boundary_edges(grid)
    loop = _walk_contour(edges)               # (i, j) corner coords
    pts = [(float(j), float(i)) for i, j in loop]   # grid (x, y)
    pts = _collapse_collinear(pts)
    simplified = _simplify_closed(pts, tol=1.0)
    if len(simplified) < 3 or not _faithful(simplified, grid):
        simplified = pts
    if _shoelace(simplified) < 0:
        simplified = list(reversed(simplified))
    return [(x * mask.scale, y * mask.scale) for x, y in simplified]
