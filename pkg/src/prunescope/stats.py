"""Correlation, distribution, and high-dimensional angle statistics.

Everything here is a pure function of its inputs; Monte Carlo experiments
derive one child seed per dimension so results are reproducible even if
dimensions are computed in parallel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .geometry import GeometrySnapshot
from .corruption import RobustnessRecord

MARGIN_REF_EPS = 1e-9
TRIM_FRACTION = 0.005


class UndefinedCorrelation(ValueError):
    """Pearson correlation is undefined (constant series or too few points)."""


@dataclass(frozen=True)
class CorrelationReport:
    """Pearson correlations of robustness against the three geometry metrics."""

    rc_angle: float
    rc_l2: float
    rc_margin: float
    n: int

    def __post_init__(self):
        for name in ("rc_angle", "rc_l2", "rc_margin"):
            v = getattr(self, name)
            if not (abs(v) <= 1.0 + 1e-12):
                raise ValueError(f"{name}={v} outside [-1, 1]")
        if self.n < 3:
            raise ValueError("need at least 3 samples")


@dataclass(frozen=True)
class DensityCurve:
    """Unit-area histogram density of one metric."""

    metric: str
    bin_edges: np.ndarray
    heights: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.bin_edges, dtype=np.float64)
        heights = np.asarray(self.heights, dtype=np.float64)
        if edges.ndim != 1 or heights.ndim != 1 or edges.size != heights.size + 1:
            raise ValueError("need len(bin_edges) == len(heights) + 1")
        if np.any(heights < 0):
            raise ValueError("densities must be nonnegative")
        area = float(np.sum(heights * np.diff(edges)))
        if heights.size and abs(area - 1.0) > 1e-6:
            raise ValueError(f"density area {area} != 1")
        edges.flags.writeable = False
        heights.flags.writeable = False
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "heights", heights)

    @property
    def bin_centers(self) -> np.ndarray:
        return (self.bin_edges[:-1] + self.bin_edges[1:]) / 2.0


@dataclass(frozen=True)
class AngleExperimentResult:
    """Mean/std of pairwise random-vector angles per dimension."""

    entries: tuple[tuple[int, float, float, int], ...]  # (dim, mean_deg, std_deg, n_pairs)

    def mean_for(self, dim: int) -> float:
        return next(e[1] for e in self.entries if e[0] == dim)

    def std_for(self, dim: int) -> float:
        return next(e[2] for e in self.entries if e[0] == dim)


def pearson(x, y) -> float:
    """Product-moment correlation; raises UndefinedCorrelation when ill-posed."""
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.shape != ya.shape or xa.ndim != 1:
        raise ValueError(f"series shapes differ: {xa.shape} vs {ya.shape}")
    if xa.size < 3:
        raise UndefinedCorrelation(f"need at least 3 points, got {xa.size}")
    xc = xa - xa.mean()
    yc = ya - ya.mean()
    sx = float(np.sqrt(np.sum(xc * xc)))
    sy = float(np.sqrt(np.sum(yc * yc)))
    if sx == 0.0 or sy == 0.0:
        raise UndefinedCorrelation("correlation undefined for a constant series")
    r = float(np.sum(xc * yc) / (sx * sy))
    return max(-1.0, min(1.0, r))


def metric_robustness_correlations(
    snapshot: GeometrySnapshot, records: list[RobustnessRecord]
) -> CorrelationReport:
    """Correlate per-sample robustness with angle-to-true-class, length, margin.

    The snapshot must come from the clean dataset; records align by
    sample_id.  Degenerate samples are excluded.
    """
    by_id = {r.sample_id: r.correct_count for r in records}
    angles, lengths, margins, robust = [], [], [], []
    for s in snapshot.samples:
        if s.degenerate or s.sample_id not in by_id:
            continue
        angles.append(s.angle_to_true)
        lengths.append(s.length)
        margins.append(s.margin)
        robust.append(by_id[s.sample_id])
    if len(robust) < 3:
        raise UndefinedCorrelation(
            f"only {len(robust)} aligned non-degenerate samples; need at least 3"
        )
    return CorrelationReport(
        rc_angle=pearson(angles, robust),
        rc_l2=pearson(lengths, robust),
        rc_margin=pearson(margins, robust),
        n=len(robust),
    )


@dataclass(frozen=True)
class MarginChangeResult:
    """Trimmed per-variant relative margin changes and their density."""

    values: np.ndarray  # surviving values, ascending
    trimmed_low: int
    trimmed_high: int
    excluded_small_reference: int
    curve: DensityCurve

    @property
    def median(self) -> float:
        return float(np.median(self.values))


def relative_margin_change(
    ref: GeometrySnapshot,
    corrupted: Mapping[tuple[str, int], GeometrySnapshot],
    bins: int | None = None,
) -> MarginChangeResult:
    """(m_ref - m_corrupted) / m_ref per (sample, type, severity) pair.

    Pairs whose reference margin is within MARGIN_REF_EPS of zero are
    excluded (and counted).  The lowest and highest 0.5% of the surviving
    values are removed, with rank ties broken by the pair key so trimming
    is order-independent.
    """
    ref_margins = {s.sample_id: s.margin for s in ref.samples}
    keyed: list[tuple[float, tuple[str, str, int]]] = []
    excluded = 0
    for (ctype, severity), snap in sorted(corrupted.items()):
        for s in snap.samples:
            if s.sample_id not in ref_margins:
                continue
            m_ref = ref_margins[s.sample_id]
            if abs(m_ref) <= MARGIN_REF_EPS:
                excluded += 1
                continue
            value = (m_ref - s.margin) / m_ref
            keyed.append((value, (s.sample_id, ctype, severity)))
    if not keyed:
        raise ValueError("no valid (sample, type, severity) pairs to compare")
    keyed.sort()
    k = int(math.floor(TRIM_FRACTION * len(keyed) + 1e-9))
    survivors = keyed[k : len(keyed) - k] if k else keyed
    values = np.array([v for v, _ in survivors])
    return MarginChangeResult(
        values=values,
        trimmed_low=k,
        trimmed_high=k,
        excluded_small_reference=excluded,
        curve=density(values, bins=bins, metric="relative_margin_change"),
    )


def density(values, bins: int | None = None, metric: str = "") -> DensityCurve:
    """Unit-area histogram; Freedman-Diaconis bin count with a floor of 10."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("need a non-empty 1-D series")
    lo = float(v.min())
    hi = float(v.max())
    if lo == hi:
        edges = np.array([lo - 0.5, lo + 0.5])
        return DensityCurve(metric=metric, bin_edges=edges, heights=np.array([1.0]))
    if bins is None:
        q75, q25 = np.percentile(v, [75.0, 25.0])
        width = 2.0 * (q75 - q25) / (v.size ** (1.0 / 3.0))
        bins = 10 if width <= 0 else max(10, int(math.ceil((hi - lo) / width)))
    heights, edges = np.histogram(v, bins=bins, density=True)
    return DensityCurve(metric=metric, bin_edges=edges, heights=heights)


def random_angle_experiment(dims, n_pairs: int, seed: int) -> AngleExperimentResult:
    """Pairwise angles of random vectors with iid uniform [-1, 1] coordinates.

    Per dimension, draws `n_pairs` independent vector pairs; reports the
    mean and standard deviation of the angle in degrees.  A zero draw (a
    probability-zero event) is redrawn.
    """
    dims = [int(d) for d in dims]
    if any(d < 2 for d in dims):
        raise ValueError("dimensions must be at least 2")
    if n_pairs < 1:
        raise ValueError("need at least one pair")
    children = np.random.SeedSequence(seed).spawn(len(dims))
    entries = []
    for d, child in zip(dims, children):
        rng = np.random.default_rng(child)

        def draw(n: int) -> np.ndarray:
            vecs = rng.uniform(-1.0, 1.0, size=(n, d))
            norms = np.linalg.norm(vecs, axis=1)
            while np.any(norms == 0.0):
                bad = norms == 0.0
                vecs[bad] = rng.uniform(-1.0, 1.0, size=(int(bad.sum()), d))
                norms = np.linalg.norm(vecs, axis=1)
            return vecs / norms[:, None]

        u = draw(n_pairs)
        w = draw(n_pairs)
        cos = np.clip(np.sum(u * w, axis=1), -1.0, 1.0)
        ang = np.degrees(np.arccos(cos))
        entries.append((d, float(ang.mean()), float(ang.std()), n_pairs))
    return AngleExperimentResult(entries=tuple(entries))
