"""Evaluation metrics: Jain fairness, clamped transport-fairness indices,
slot utilization, and the per-run/aggregate record containers."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass


def jfi(values) -> float:
    """Jain's fairness index (sum x)^2 / (n * sum x^2) over a nonneg vector."""
    vals = list(values)
    if not vals:
        raise ValueError("empty vector")
    if any(v < 0 for v in vals):
        raise ValueError("values must be nonnegative")
    sq = sum(v * v for v in vals)
    if sq == 0.0:
        raise ValueError("all-zero vector has no fairness index")
    s = sum(vals)
    return (s * s) / (len(vals) * sq)


def clamp_ratio(ratio: float) -> float:
    """Throughput ratio clamped to [0, 1]; gains beyond parity count as fair."""
    if ratio < 0:
        raise ValueError(f"ratio must be nonnegative, got {ratio}")
    return min(ratio, 1.0)


def _clamped_ratios(psi, varsigma) -> list[float]:
    psi, varsigma = list(psi), list(varsigma)
    if len(psi) != len(varsigma):
        raise ValueError("throughput vectors must have equal length")
    if any(v <= 0 for v in varsigma):
        raise ValueError("baseline throughputs must be positive")
    return [clamp_ratio(p / v) for p, v in zip(psi, varsigma)]


def wctfi(psi, varsigma) -> float:
    """Worst-case transport fairness: min clamped per-user throughput ratio
    against the round-robin baseline."""
    return min(_clamped_ratios(psi, varsigma))


def tfi(psi, varsigma) -> float:
    """Aggregate transport fairness: Jain index of the clamped ratios."""
    return jfi(_clamped_ratios(psi, varsigma))


def slot_utilization(used_per_frame, n_slots: int, frames: int | None = None) -> float:
    """Fraction of uplink slots carrying data over the measurement window."""
    counts = list(used_per_frame)
    if frames is None:
        frames = len(counts)
    if frames < 1:
        raise ValueError("frames must be >= 1")
    return sum(counts) / (n_slots * frames)


@dataclass(frozen=True)
class MetricsRecord:
    """Per-run aggregates over the post-warmup window."""
    frames_measured: int
    avg_cwnd: float
    avg_throughput_bps: float          # mean per-subscriber transport goodput
    per_ss_throughput_bps: tuple
    slot_utilization: float
    jfi_slots: float                   # Jain index over cumulative slot grants
    jfi_throughput: float
    loss_rate: float                   # loss indications / packets transmitted
    per_ss_slots: tuple
    measured_p: float                  # P(SNR >= lowest threshold) per SS-frame
    mean_rtt_s: float
    mean_rto_s: float
    mean_epoch_frames: float
    timeouts: int
    fast_retransmits: int
    packets_acked: int
    packets_transmitted: int


_SCALAR_FIELDS = tuple(
    f.name for f in dataclasses.fields(MetricsRecord)
    if f.type in ("int", "float")
)
_VECTOR_FIELDS = ("per_ss_throughput_bps", "per_ss_slots")


@dataclass(frozen=True)
class AggregateMetrics:
    """Mean and sample standard deviation of every record field across runs."""
    num_runs: int
    mean: dict
    std: dict
    per_ss_throughput_bps: tuple
    per_ss_slots: tuple
    records: tuple


def aggregate(records) -> AggregateMetrics:
    records = tuple(records)
    if not records:
        raise ValueError("no records to aggregate")
    n = len(records)
    mean, std = {}, {}
    for name in _SCALAR_FIELDS:
        xs = [float(getattr(r, name)) for r in records]
        mu = sum(xs) / n
        mean[name] = mu
        if n > 1:
            std[name] = math.sqrt(sum((x - mu) ** 2 for x in xs) / (n - 1))
        else:
            std[name] = 0.0
    vectors = {}
    for name in _VECTOR_FIELDS:
        cols = zip(*(getattr(r, name) for r in records))
        vectors[name] = tuple(sum(col) / n for col in cols)
    return AggregateMetrics(
        num_runs=n,
        mean=mean,
        std=std,
        per_ss_throughput_bps=vectors["per_ss_throughput_bps"],
        per_ss_slots=vectors["per_ss_slots"],
        records=records,
    )
