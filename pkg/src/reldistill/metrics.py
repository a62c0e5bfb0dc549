"""Representation-quality metrics on the unit hypersphere.

Uniformity and tolerance are expectations over distinct unordered row
pairs (i < j, self-pairs excluded): including i = j would add a constant
unit mass to the uniformity kernel and bias tolerance toward 1. The
modality gap compares the column means of two matrices and is reported
as a vector plus its l2 norm, which is the single scalar used in summary
tables.

All pairwise metrics are exact O(N^2), computed in fixed-order row chunks
so results are reproducible; above ``subsample_threshold`` rows a seeded
uniform row subsample keeps audits of large embedding dumps tractable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BatchTooSmall, LengthMismatch, NoSameLabelPairs, ShapeMismatch
from .numerics import as_matrix, require_normalized

DEFAULT_T = 2.0
DEFAULT_SUBSAMPLE_THRESHOLD = 20_000
_CHUNK = 512


@dataclass
class MetricReport:
    """Bundle of the three metrics for one student/target matrix pair.

    ``tolerance`` is None when no labels were supplied; the gap fields are
    None when no second matrix was supplied.
    """

    uniformity: float
    tolerance: float | None = None
    modality_gap_vector: np.ndarray | None = None
    modality_gap_norm: float | None = None
    t: float = DEFAULT_T
    conventions: dict = field(default_factory=lambda: dict(GAP_CONVENTION))

    def as_dict(self) -> dict:
        vec = self.modality_gap_vector
        return {
            "uniformity": self.uniformity,
            "tolerance": self.tolerance,
            "modality_gap_vector": None if vec is None else [float(v) for v in vec],
            "modality_gap_norm": self.modality_gap_norm,
            "t": self.t,
            "conventions": dict(self.conventions),
        }


# The gap is mean(student features) - mean(target features); the reported
# scalar is the l2 norm of that vector.
GAP_CONVENTION = {
    "modality_gap": "column_mean(student) - column_mean(target), reported as l2 norm",
    "pair_expectations": "unordered distinct pairs (i < j), self-pairs excluded",
}


def _maybe_subsample(
    f: np.ndarray,
    labels: np.ndarray | None,
    threshold: int,
    seed: int,
) -> tuple[np.ndarray, np.ndarray | None]:
    n = f.shape[0]
    if threshold is None or n <= threshold:
        return f, labels
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(n, size=threshold, replace=False))
    return f[idx], None if labels is None else labels[idx]


def uniformity(
    f,
    t: float = DEFAULT_T,
    *,
    subsample_threshold: int = DEFAULT_SUBSAMPLE_THRESHOLD,
    subsample_seed: int = 0,
) -> float:
    """-log of the mean Gaussian kernel exp(-t * ||f_i - f_j||^2) over pairs.

    Rows must be unit length, so squared distances reduce to 2 - 2<f_i, f_j>.
    Higher values mean the rows occupy more of the sphere; identical rows
    give exactly 0.
    """
    f = as_matrix(f)
    if not (t > 0.0):
        raise ValueError(f"kernel sharpness t must be > 0, got {t}")
    if f.shape[0] < 2:
        raise BatchTooSmall("uniformity needs at least 2 rows")
    require_normalized(f, "F")
    f, _ = _maybe_subsample(f, None, subsample_threshold, subsample_seed)
    n = f.shape[0]
    total = 0.0
    for start in range(0, n, _CHUNK):
        rows = f[start : start + _CHUNK]
        g = rows @ f.T
        w = np.exp((2.0 * t) * (g - 1.0))
        # strict upper triangle of the full matrix: columns j > global row i
        cols = np.arange(n)[None, :]
        keep = cols > np.arange(start, start + rows.shape[0])[:, None]
        total += float(np.sum(w, where=keep))
    pairs = n * (n - 1) // 2
    return float(-np.log(total / pairs))


def tolerance(
    f,
    labels,
    *,
    subsample_threshold: int = DEFAULT_SUBSAMPLE_THRESHOLD,
    subsample_seed: int = 0,
) -> float:
    """Mean inner product over distinct same-label row pairs."""
    f = as_matrix(f)
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.shape[0] != f.shape[0]:
        raise LengthMismatch(
            f"labels length {labels.shape} does not match {f.shape[0]} rows"
        )
    require_normalized(f, "F")
    f, labels = _maybe_subsample(f, labels, subsample_threshold, subsample_seed)
    n = f.shape[0]
    total = 0.0
    count = 0
    for start in range(0, n, _CHUNK):
        rows = f[start : start + _CHUNK]
        g = rows @ f.T
        cols = np.arange(n)[None, :]
        keep = cols > np.arange(start, start + rows.shape[0])[:, None]
        keep &= labels[None, :] == labels[start : start + rows.shape[0], None]
        total += float(np.sum(g, where=keep))
        count += int(np.count_nonzero(keep))
    if count == 0:
        raise NoSameLabelPairs("no two rows share a label")
    return total / count


def modality_gap(k, q) -> tuple[np.ndarray, float]:
    """Difference of column means, plus its l2 norm.

    Row counts may differ (unpaired audits); column counts must match.
    """
    k = as_matrix(k)
    q = as_matrix(q)
    if k.shape[1] != q.shape[1]:
        raise ShapeMismatch(f"column counts differ: {k.shape[1]} vs {q.shape[1]}")
    vector = k.mean(axis=0) - q.mean(axis=0)
    return vector, float(np.linalg.norm(vector))


def report(
    k,
    q=None,
    labels=None,
    t: float = DEFAULT_T,
    **subsample_kwargs,
) -> MetricReport:
    """Convenience bundle: uniformity of ``k``, tolerance when labels are
    given, and the gap to ``q`` when a second matrix is given."""
    u = uniformity(k, t, **subsample_kwargs)
    tol = None
    if labels is not None:
        tol = tolerance(k, labels, **subsample_kwargs)
    vector, norm = (None, None) if q is None else modality_gap(k, q)
    return MetricReport(u, tol, vector, norm, t=t)
