"""Cell-level KPI aggregation: the two 12-bin histograms (uplink SNR and
timing advance), their tail descriptors, and throughput percentile stats.

Binning is half-open with an inclusive lower edge, and the descriptors use
the same convention, so ``R = D / (1 - D)`` holds exactly wherever both
sides are defined.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

N_BINS = 12
SNR_BIN_EDGES = (-math.inf, -5, -2, 1, 4, 7, 10, 13, 16, 19, 22, 25, math.inf)
# TA is expressed as % of the maximum cell range; delay spread can push
# instantaneous readings past 100%, hence the open top bin. Readings below
# the first finite edge are clamped into bin 1.
TA_BIN_EDGES = (5, 15, 25, 35, 45, 55, 65, 75, 85, 95, 105, 115, math.inf)

# Fed to the agent in place of an infinite ratio when a histogram has no
# mass below the probed bin.
R_SENTINEL = 1e3

PERCENTILE_IDS = ("p10", "p15", "p20", "p25", "p30", "p35", "p40", "p45")
REWARD_FACTOR_IDS = PERCENTILE_IDS + ("mean",)
MIN_PERCENTILE_SAMPLES = 20


class InsufficientDataError(ValueError):
    """Raised when an aggregate is requested from too few samples."""


@dataclass
class Histogram12:
    """Counting histogram over 13 fixed, strictly increasing edges."""

    edges: tuple = SNR_BIN_EDGES
    counts: np.ndarray = field(default=None)

    def __post_init__(self):
        if len(self.edges) != N_BINS + 1:
            raise ValueError(f"need {N_BINS + 1} edges, got {len(self.edges)}")
        if any(b <= a for a, b in zip(self.edges, self.edges[1:])):
            raise ValueError("edges must be strictly increasing")
        if self.counts is None:
            self.counts = np.zeros(N_BINS, dtype=np.int64)
        else:
            self.counts = np.asarray(self.counts, dtype=np.int64)
            if self.counts.shape != (N_BINS,) or np.any(self.counts < 0):
                raise ValueError("counts must be 12 nonnegative integers")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def merge(self, other: "Histogram12") -> "Histogram12":
        if self.edges != other.edges:
            raise ValueError("cannot merge histograms with different edges")
        return Histogram12(edges=self.edges, counts=self.counts + other.counts)


def _bin_counts(edges, values: np.ndarray) -> np.ndarray:
    # rightmost bin whose half-open interval [edge_i, edge_{i+1}) holds the
    # value; clipping implements total coverage / below-range clamping
    idx = np.searchsorted(np.asarray(edges), values, side="right") - 1
    idx = np.clip(idx, 0, N_BINS - 1)
    return np.bincount(idx, minlength=N_BINS).astype(np.int64)


def bin_snr(h: Histogram12, snr_db) -> Histogram12:
    """Accumulate one or many SNR samples (dB); coverage is total thanks to
    the infinite outer edges."""
    vals = np.atleast_1d(np.asarray(snr_db, dtype=float))
    return Histogram12(edges=h.edges, counts=h.counts + _bin_counts(h.edges, vals))


def bin_ta(h: Histogram12, ta_percent) -> Histogram12:
    """Accumulate timing-advance percentage samples; values below the first
    finite edge are clamped into bin 1, negatives are rejected."""
    vals = np.atleast_1d(np.asarray(ta_percent, dtype=float))
    if np.any(vals < 0):
        raise ValueError("timing advance cannot be negative")
    return Histogram12(edges=h.edges, counts=h.counts + _bin_counts(h.edges, vals))


def descriptor_r(h: Histogram12, ell: int) -> float:
    """Tail-to-head count ratio at bin ``ell``:
    ``sum(counts[ell..12]) / sum(counts[1..ell-1])`` (1-based bins).

    An empty lower part returns the configured sentinel so downstream
    consumers stay finite while still seeing the extreme skew.
    """
    if not 2 <= ell <= N_BINS:
        raise ValueError(f"ell must lie in [2, {N_BINS}], got {ell}")
    if h.total == 0:
        raise ValueError("descriptor undefined on an empty histogram")
    upper = int(h.counts[ell - 1 :].sum())
    lower = int(h.counts[: ell - 1].sum())
    if lower == 0:
        return R_SENTINEL
    return upper / lower


def descriptor_d(h: Histogram12, ell: int) -> float:
    """Empirical complementary CDF at the lower edge of bin ``ell``."""
    if not 1 <= ell <= N_BINS:
        raise ValueError(f"ell must lie in [1, {N_BINS}], got {ell}")
    total = h.total
    if total == 0:
        raise ValueError("descriptor undefined on an empty histogram")
    return int(h.counts[ell - 1 :].sum()) / total


@dataclass
class ThroughputStats:
    """The nine reward factors: p10..p45 in 5-point steps plus the mean,
    all in bits/s."""

    p10: float
    p15: float
    p20: float
    p25: float
    p30: float
    p35: float
    p40: float
    p45: float
    mean: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, k) for k in REWARD_FACTOR_IDS])

    @classmethod
    def from_array(cls, values) -> "ThroughputStats":
        return cls(**dict(zip(REWARD_FACTOR_IDS, map(float, values))))


def throughput_percentiles(samples) -> ThroughputStats:
    """Empirical quantiles (linear interpolation between closest ranks) at
    10..45% plus the arithmetic mean. Requires at least 20 samples."""
    x = np.asarray(samples, dtype=float).reshape(-1)
    if x.size < MIN_PERCENTILE_SAMPLES:
        raise InsufficientDataError(
            f"need at least {MIN_PERCENTILE_SAMPLES} samples, got {x.size}"
        )
    qs = np.quantile(x, [0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45], method="linear")
    return ThroughputStats(*[float(q) for q in qs], mean=float(x.mean()))


@dataclass
class CellKpiReport:
    """Everything one simulation step reports upward."""

    snr_hist: Histogram12
    ta_hist: Histogram12
    throughput: ThroughputStats
    mean_gamma_db: float


def timing_advance_percent(
    distance_m: float,
    cell_range_m: float = 300.0,
    jitter_pct: float = 0.0,
    rng: np.random.Generator | None = None,
) -> float:
    """Distance as % of the cell range, optionally with zero-mean uniform
    jitter of +-jitter_pct emulating delay-spread overshoot. Clamped at 0."""
    ta = 100.0 * distance_m / cell_range_m
    if jitter_pct > 0.0:
        if rng is None:
            raise ValueError("jitter requires an rng")
        ta += rng.uniform(-jitter_pct, jitter_pct)
    return max(ta, 0.0)
