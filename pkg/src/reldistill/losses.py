"""Distillation losses with closed-form gradients.

Five losses over paired feature matrices K (learnable, N x C) and Q
(frozen target, N x C), plus group average pooling. All losses take
row-normalized inputs and differentiate with respect to the normalized K
rows; composing with the normalization Jacobian is the caller's job
(see ``mlp.backward_through_normalization``). This keeps every gradient
independently checkable by finite differences.

Conventions:
  * the pairing is positional: row i of K corresponds to row i of Q;
  * the contrastive loss is one-directional (K is the student);
  * the subgradient of |x| at 0 is taken to be 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import (
    BatchTooSmall,
    EmptyGroup,
    LengthMismatch,
    NonPositiveTemperature,
    ShapeMismatch,
)
from .numerics import as_matrix, require_normalized

LOSS_KINDS = ("contrastive", "similarity", "relational", "cross_only", "intra_only")

# Row-block size for the contrastive softmax; keeps per-block work in cache.
_BLOCK = 64

# Patched to False in tests to exercise the generic numpy path on C == 3.
_USE_FAST_KERNEL = True


@dataclass
class LossResult:
    """Scalar loss plus the gradient with respect to the normalized K rows."""

    value: float
    grad_k: np.ndarray


@dataclass(frozen=True)
class ContrastiveConfig:
    temperature: float = 0.1

    def __post_init__(self):
        if not (self.temperature > 0.0):
            raise NonPositiveTemperature(
                f"temperature must be > 0, got {self.temperature}"
            )


def _check_pair(k, q, min_rows: int = 1) -> tuple[np.ndarray, np.ndarray]:
    k = as_matrix(k)
    q = as_matrix(q)
    if k.shape != q.shape:
        raise ShapeMismatch(f"K shape {k.shape} != Q shape {q.shape}")
    if k.shape[0] < min_rows:
        raise BatchTooSmall(f"need at least {min_rows} rows, got {k.shape[0]}")
    require_normalized(k, "K")
    require_normalized(q, "Q")
    return k, q


def _contrastive_raw(k: np.ndarray, q: np.ndarray, tau: float) -> LossResult:
    n = k.shape[0]
    qt = np.ascontiguousarray(q.T)
    grad = np.empty_like(k)
    value = 0.0
    for start in range(0, n, _BLOCK):
        stop = min(start + _BLOCK, n)
        z = k[start:stop] @ qt
        z /= tau
        diag = z[np.arange(stop - start), np.arange(start, stop)].copy()
        m = z.max(axis=1)
        z -= m[:, None]
        np.exp(z, out=z)
        s = z.sum(axis=1)
        # (m - diag) first: exact when the positive logit is the max
        value += float(np.sum((m - diag) + np.log(s)))
        z /= s[:, None]
        grad[start:stop] = (z @ q - q[start:stop]) / (tau * n)
    return LossResult(value / n, grad)


def contrastive_loss(k, q, cfg: ContrastiveConfig = ContrastiveConfig()) -> LossResult:
    """InfoNCE over positional pairs, softmax over all rows of Q per anchor.

    value = -(1/N) sum_i log softmax_j(<k_i, q_j> / tau)[j = i], computed
    with max subtraction so small temperatures stay finite. The gradient of
    row i is ((sum_j p_ij q_j) - q_i) / (tau N).
    """
    k, q = _check_pair(k, q)
    return _contrastive_raw(k, q, cfg.temperature)


def _similarity_raw(k: np.ndarray, q: np.ndarray) -> LossResult:
    n = k.shape[0]
    value = float(np.mean(1.0 - np.einsum("ij,ij->i", k, q)))
    return LossResult(value, -q / n)


def similarity_loss(k, q) -> LossResult:
    """Mean cosine distance over positive pairs: (1/N) sum_i (1 - <k_i, q_i>)."""
    k, q = _check_pair(k, q)
    return _similarity_raw(k, q)


def _relational_parts(k: np.ndarray, q: np.ndarray):
    """Shared computation for the cross/intra/relational losses.

    Returns (cross_value, intra_value, cross_grad, intra_grad). The fused
    kernel handles the 3-feature hot path; other widths fall back to a
    vectorized numpy pipeline.
    """
    n = k.shape[0]
    if k.shape[1] == 3 and _USE_FAST_KERNEL:
        sim_sum, cross_sum, intra_sum, gc, gi = _kernels.relational_terms_fast(k, q)
    else:
        qq = q @ q.T
        e = k @ q.T
        e -= qq
        d = k @ k.T
        d -= qq
        sim_sum = float(np.sum(1.0 - np.einsum("ij,ij->i", k, q)))
        abs_e = np.abs(e)
        abs_d = np.abs(d)
        cross_sum = float(abs_e.sum() - np.trace(abs_e))
        intra_sum = float(abs_d.sum() - np.trace(abs_d))
        se = np.sign(e)
        np.fill_diagonal(se, 0.0)
        sd = np.sign(d)
        np.fill_diagonal(sd, 0.0)
        gc = se @ q
        gi = sd @ k
    off = 1.0 / (n * n - n)
    cross_value = sim_sum / n + cross_sum * off
    # the ordered i != j sum double-counts unordered pairs, so the plain
    # off-diagonal normalizer realizes the 2/(N^2-N) pair constant
    intra_value = intra_sum * off
    cross_grad = gc * off - q / n
    intra_grad = gi * (2.0 * off)
    return cross_value, intra_value, cross_grad, intra_grad


def _cross_raw(k: np.ndarray, q: np.ndarray) -> LossResult:
    cross_value, _, cross_grad, _ = _relational_parts(k, q)
    return LossResult(cross_value, cross_grad)


def _intra_raw(k: np.ndarray, q: np.ndarray) -> LossResult:
    _, intra_value, _, intra_grad = _relational_parts(k, q)
    return LossResult(intra_value, intra_grad)


def _relational_raw(k: np.ndarray, q: np.ndarray) -> LossResult:
    cross_value, intra_value, cross_grad, intra_grad = _relational_parts(k, q)
    return LossResult(intra_value + cross_value, intra_grad + cross_grad)


def cross_modal_loss(k, q) -> LossResult:
    """Student-to-target similarities matched against target self-similarities.

    Diagonal term reduces to the similarity loss; off-diagonal term is the
    mean absolute difference |<k_i,q_j> - <q_i,q_j>| over i != j.
    """
    k, q = _check_pair(k, q, min_rows=2)
    return _cross_raw(k, q)


def intra_modal_loss(k, q) -> LossResult:
    """Mean absolute mismatch of the two self-similarity graphs over i < j."""
    k, q = _check_pair(k, q, min_rows=2)
    return _intra_raw(k, q)


def relational_loss(k, q) -> LossResult:
    """Sum of the intra-modal and cross-modal losses."""
    k, q = _check_pair(k, q, min_rows=2)
    return _relational_raw(k, q)


def evaluate_loss_raw(kind: str, k: np.ndarray, q: np.ndarray, temperature: float = 0.1) -> LossResult:
    """Loss dispatch without precondition validation.

    Exists so finite-difference checks can evaluate at perturbed points
    whose rows are no longer exactly unit length; everyone else should call
    :func:`evaluate_loss`.
    """
    if kind == "contrastive":
        if not (temperature > 0.0):
            raise NonPositiveTemperature(f"temperature must be > 0, got {temperature}")
        return _contrastive_raw(k, q, temperature)
    if kind == "similarity":
        return _similarity_raw(k, q)
    if kind == "relational":
        return _relational_raw(k, q)
    if kind == "cross_only":
        return _cross_raw(k, q)
    if kind == "intra_only":
        return _intra_raw(k, q)
    raise ValueError(f"unknown loss kind {kind!r}; expected one of {LOSS_KINDS}")


def evaluate_loss(kind: str, k, q, temperature: float = 0.1) -> LossResult:
    """Dispatch a loss by name; ``kind`` is one of ``LOSS_KINDS``."""
    if kind == "contrastive":
        return contrastive_loss(k, q, ContrastiveConfig(temperature))
    if kind == "similarity":
        return similarity_loss(k, q)
    if kind == "relational":
        return relational_loss(k, q)
    if kind == "cross_only":
        return cross_modal_loss(k, q)
    if kind == "intra_only":
        return intra_modal_loss(k, q)
    raise ValueError(f"unknown loss kind {kind!r}; expected one of {LOSS_KINDS}")


def superpool(f, groups) -> np.ndarray:
    """Average-pool rows of ``f`` by group id.

    Group ids must cover 0..M-1 with every id occupied; output row m is the
    arithmetic mean of the rows assigned to group m. The result is NOT
    re-normalized: pooling happens before normalization, and callers
    normalize explicitly before any loss computation.
    """
    f = as_matrix(f)
    groups = np.asarray(groups)
    if groups.ndim != 1 or groups.shape[0] != f.shape[0]:
        raise LengthMismatch(
            f"groups length {groups.shape} does not match {f.shape[0]} rows"
        )
    if groups.size and not np.issubdtype(groups.dtype, np.integer):
        raise ValueError("group ids must be integers")
    if np.any(groups < 0):
        raise ValueError("group ids must be nonnegative")
    m = int(groups.max()) + 1
    counts = np.bincount(groups, minlength=m)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise EmptyGroup(int(empty[0]))
    pooled = np.empty((m, f.shape[1]))
    for c in range(f.shape[1]):
        pooled[:, c] = np.bincount(groups, weights=f[:, c], minlength=m)
    pooled /= counts[:, None]
    return pooled
