"""Circular curriculum scheduling: easy samples first, repeated ramps.

Samples are bucketed by difficulty quantiles. Cycle c admits buckets
1..min(c, B) (easy buckets are revisited, never dropped), orders them
ascending, shuffles within each bucket, and decays the learning rate by
gamma per cycle. One schedule = one full ramp of C cycles; training may
repeat whole ramps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .rng import Rng, derive_seed


class ConfigError(ValueError):
    """Invalid curriculum configuration (e.g. more buckets than samples)."""


@dataclass
class ScheduleStep:
    sample_id: str
    cycle: int
    lr: float


@dataclass
class CurriculumSchedule:
    steps: list[ScheduleStep]
    bucket_count: int
    cycle_count: int
    base_lr: float
    gamma: float
    buckets: dict[str, int] = field(default_factory=dict)


def _quantile(sorted_vals, p: float) -> float:
    """Linear-interpolation empirical quantile of pre-sorted values."""
    n = len(sorted_vals)
    if n == 1:
        return sorted_vals[0]
    pos = (n - 1) * p
    lo = int(pos)
    hi = min(lo + 1, n - 1)
    frac = pos - lo
    return sorted_vals[lo] * (1.0 - frac) + sorted_vals[hi] * frac


def bucketize(difficulties: dict[str, float], b: int) -> dict[str, int]:
    """Quantile split into buckets 1..b; equal values share a bucket.

    Bucket boundaries are the k/b empirical quantiles (linear
    interpolation); a sample lands in the smallest bucket whose upper
    boundary its difficulty does not exceed. All-equal difficulties
    therefore collapse into bucket 1.
    """
    if b < 1:
        raise ConfigError(f"bucket count must be >= 1, got {b}")
    if not difficulties:
        raise ConfigError("bucketize needs at least one sample")
    if b > len(difficulties):
        raise ConfigError(
            f"bucket count {b} exceeds sample count {len(difficulties)}")
    sorted_vals = sorted(difficulties.values())
    bounds = [_quantile(sorted_vals, k / b) for k in range(1, b + 1)]
    out = {}
    for sid in sorted(difficulties):
        d = difficulties[sid]
        for k, bound in enumerate(bounds, start=1):
            if d <= bound:
                out[sid] = k
                break
    return out


def build_schedule(buckets: dict[str, int], b: int, c: int,
                   base_lr: float, gamma: float, seed: int) -> CurriculumSchedule:
    """Steps for one curriculum circle of c cycles over bucketed samples.

    Cycle k admits buckets 1..min(k, b) in ascending bucket order; the
    order within a bucket is an independent deterministic shuffle per
    (cycle, bucket); lr of cycle k is base_lr * gamma**(k-1).
    """
    if c < 1:
        raise ConfigError(f"cycle count must be >= 1, got {c}")
    by_bucket: dict[int, list[str]] = {}
    for sid in sorted(buckets):
        by_bucket.setdefault(buckets[sid], []).append(sid)
    steps = []
    for cycle in range(1, c + 1):
        lr = base_lr * gamma ** (cycle - 1)
        for bucket in range(1, min(cycle, b) + 1):
            ids = list(by_bucket.get(bucket, ()))
            Rng(derive_seed(seed, "cycle", cycle, "bucket", bucket)).shuffle(ids)
            steps.extend(ScheduleStep(sid, cycle, lr) for sid in ids)
    return CurriculumSchedule(steps, b, c, base_lr, gamma, dict(buckets))


def uniform_schedule(sample_ids, c: int, base_lr: float, gamma: float,
                     seed: int) -> CurriculumSchedule:
    """Curriculum-free baseline: every cycle shuffles all samples.

    Same lr decay and same per-cycle step budget shape as a curriculum
    whose every bucket is admitted from cycle 1.
    """
    buckets = {sid: 1 for sid in sample_ids}
    return build_schedule(buckets, 1, c, base_lr, gamma, seed)


def dump_schedule(schedule: CurriculumSchedule, path: Path | str) -> None:
    """Audit dump: one JSONL line per step."""
    lines = [json.dumps({"sample_id": s.sample_id, "cycle": s.cycle,
                         "lr": s.lr}, sort_keys=True)
             for s in schedule.steps]
    Path(path).write_text("\n".join(lines) + "\n")
