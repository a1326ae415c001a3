"""Hungarian text-matching loss for set predictions.

The model emits N query predictions; supervision is an unordered list
of M <= N transcriptions. A cost matrix (recognition CE + confidence
penalty, numerically detached) is matched with the Kuhn-Munkres
algorithm, and the loss backpropagates through the matched pairs only:
cross-entropy on matched recognition heads, binary cross-entropy on
every query's confidence against its matched/unmatched target.
"""

from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .charset import NUM_CLASSES, PAD, T_MAX, encode_text


class CostError(ValueError):
    """Cost matrix contains non-finite entries or has bad shape."""


class CapacityError(ValueError):
    """More ground-truth texts than queries."""


def _target_and_weights(gt_text: str):
    """Padded class targets and CE weights excluding PAD positions.

    Weights are 1/(effective length) on non-PAD positions, so the
    weighted-sum CE equals the mean per-character CE of the word
    (including its EOS) regardless of padding.
    """
    targets = encode_text(gt_text)
    non_pad = int(sum(1 for t in targets if t != PAD))
    weights = np.where(np.asarray(targets) != PAD, 1.0 / non_pad, 0.0)
    return targets, weights


def pair_cost(pred, gt_text: str, lam: float = 1.0) -> float:
    """Detached matching cost: masked-mean CE + lam * (1 - confidence)."""
    logits = np.asarray(getattr(pred.char_logits, "data", pred.char_logits),
                        dtype=float)
    if logits.shape != (T_MAX, NUM_CLASSES):
        raise T.ShapeError(
            f"pair_cost: logits shape {logits.shape} != {(T_MAX, NUM_CLASSES)}")
    targets, weights = _target_and_weights(gt_text)
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    nll = -logp[np.arange(T_MAX), np.asarray(targets)]
    conf = float(np.asarray(getattr(pred.confidence, "data", pred.confidence)).reshape(()))
    return float((nll * weights).sum() + lam * (1.0 - conf))


def _km_square(a: np.ndarray) -> list[int]:
    """Kuhn-Munkres on a square matrix; returns row matched to each col.

    Classic O(n^3) potentials formulation with Dijkstra-style
    augmenting paths (1-indexed internally).
    """
    n = a.shape[0]
    inf = float("inf")
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    p = [0] * (n + 1)
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [inf] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = a[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    return [p[j] - 1 for j in range(1, n + 1)]


def _solve(costs: np.ndarray, rows, cols) -> list[tuple[int, int]]:
    """Optimal pairs over the given row/col index subsets (cols all used)."""
    if not cols:
        return []
    sub = costs[np.ix_(rows, cols)]
    n_rows, n_cols = sub.shape
    padded = np.zeros((n_rows, n_rows))
    padded[:, :n_cols] = sub  # dummy zero-cost columns absorb spare rows
    col_to_row = _km_square(padded)
    return sorted((rows[col_to_row[j]], cols[j]) for j in range(n_cols))


def hungarian_assign(costs) -> tuple[list[tuple[int, int]], float]:
    """Minimum-cost injective assignment covering every column.

    Returns (pairs sorted by query index, total cost). Among equal-cost
    optima the lexicographically smallest pair list is returned, found
    by greedily fixing the earliest feasible (query, gt) pair and
    re-solving the remainder; costs are compared exactly via fsum.
    """
    a = np.asarray(costs, dtype=float)
    if a.ndim != 2:
        raise CostError(f"cost matrix must be 2-D, got shape {a.shape}")
    n, m = a.shape
    if m > n:
        raise CostError(f"more columns ({m}) than rows ({n})")
    if not np.isfinite(a).all():
        raise CostError("cost matrix contains non-finite entries")
    if m == 0:
        return [], 0.0

    base_pairs = _solve(a, list(range(n)), list(range(m)))
    best = math.fsum(a[r, c] for r, c in base_pairs)

    fixed: list[tuple[int, int]] = []
    rows = list(range(n))
    cols = list(range(m))
    while cols:
        advanced = False
        for q in list(rows):
            hit = None
            for g in cols:
                rem_rows = [r for r in rows if r != q]
                rem_cols = [c for c in cols if c != g]
                rem_pairs = _solve(a, rem_rows, rem_cols)
                # flat fsum over actual entries keeps the comparison exact
                total = math.fsum([a[r, c] for r, c in fixed] + [a[q, g]]
                                  + [a[r, c] for r, c in rem_pairs])
                if total == best:
                    hit = g
                    break
            if hit is not None:
                fixed.append((q, hit))
                rows.remove(q)
                cols.remove(hit)
                advanced = True
                break
            rows.remove(q)  # q is unassigned in every optimal assignment
        if not advanced and not rows:
            raise AssertionError("assignment search exhausted rows")
    return fixed, math.fsum(a[r, c] for r, c in fixed)


def spotting_loss(preds, gt_texts, lam: float = 1.0, assignment=None
                  ) -> tuple[T.Tensor, list[tuple[int, int]]]:
    """Set-prediction loss over matched texts and all confidences.

    loss = (sum over matched pairs of masked-mean CE
            + sum over all queries of BCE(confidence, matched))
           / N_queries

    The assignment is computed on detached costs (pass ``assignment``
    to reuse a frozen one, e.g. for gradient checks). Accumulation
    order is fixed by query index, so permuting gt_texts cannot change
    the loss bits.
    """
    n = len(preds)
    gt_texts = list(gt_texts)
    if len(gt_texts) > n:
        raise CapacityError(f"{len(gt_texts)} texts exceed {n} queries")

    if assignment is None:
        if gt_texts:
            costs = np.array([[pair_cost(p, t, lam) for t in gt_texts]
                              for p in preds])
            assignment, _ = hungarian_assign(costs)
        else:
            assignment = []

    matched_text = {q: gt_texts[g] for q, g in assignment}
    terms = []
    for q in sorted(matched_text):
        targets, weights = _target_and_weights(matched_text[q])
        terms.append(T.cross_entropy(preds[q].char_logits, targets, weights))

    confs = T.concat([T.reshape(p.confidence, (1, 1)) for p in preds], axis=0)
    conf_targets = np.array([[1.0 if q in matched_text else 0.0]
                             for q in range(n)])
    terms.append(T.sum_all(T.binary_cross_entropy(confs, conf_targets)))

    total = terms[0]
    for t in terms[1:]:
        total = T.add(total, t)
    loss = T.mul(total, T.Tensor(np.asarray(1.0 / n)))
    return loss, assignment
