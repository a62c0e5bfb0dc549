"""Finite-difference verification of the analytic gradients.

Central differences with a fixed step compare against the closed-form
gradients, both for the losses (gradient w.r.t. the K matrix entries) and
for the full MLP chain (gradient w.r.t. every network parameter, through
normalization and the loss).

Absolute-value and ReLU kinks make finite differences meaningless when an
argument sits within one step of zero, so such instances are skipped and
counted instead of failing the check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import mlp
from .errors import BatchTooSmall
from .losses import LOSS_KINDS, evaluate_loss, evaluate_loss_raw
from .numerics import normalize_rows

DEFAULT_STEP = 1e-6
DEFAULT_TOLERANCE = 1e-5

RELATIONAL_KINDS = ("relational", "cross_only", "intra_only")


@dataclass
class GradCheckResult:
    kind: str
    trials_requested: int
    trials_run: int
    skipped_kinks: int
    max_rel_error: float
    worst_seed: int | None

    def passed(self, tolerance: float = DEFAULT_TOLERANCE) -> bool:
        return self.trials_run > 0 and self.max_rel_error < tolerance


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    diff = float(np.max(np.abs(analytic - numeric)))
    scale = max(float(np.max(np.abs(analytic))), float(np.max(np.abs(numeric))))
    if diff == 0.0:
        return 0.0
    return diff / max(scale, 1e-300)


def fd_gradient(func, k: np.ndarray, step: float = DEFAULT_STEP) -> np.ndarray:
    """Central-difference gradient of scalar ``func`` w.r.t. every K entry."""
    grad = np.empty_like(k)
    for i in range(k.shape[0]):
        for j in range(k.shape[1]):
            orig = k[i, j]
            k[i, j] = orig + step
            hi = func(k)
            k[i, j] = orig - step
            lo = func(k)
            k[i, j] = orig
            grad[i, j] = (hi - lo) / (2.0 * step)
    return grad


def _kink_margin(step: float) -> float:
    # a perturbation of `step` can move each |.| argument by about `step`
    return max(1e-7, 4.0 * step)


def _min_abs_argument(k: np.ndarray, q: np.ndarray) -> float:
    """Smallest off-diagonal |.| argument of the relational losses."""
    qq = q @ q.T
    e = np.abs(k @ q.T - qq)
    d = np.abs(k @ k.T - qq)
    big = np.finfo(float).max
    np.fill_diagonal(e, big)
    np.fill_diagonal(d, big)
    return float(min(e.min(), d.min()))


def check_loss_gradient(
    kind: str,
    n: int = 8,
    c: int = 4,
    trials: int = 100,
    seed: int = 0,
    temperature: float = 0.1,
    step: float = DEFAULT_STEP,
) -> GradCheckResult:
    """Compare the analytic loss gradient against central differences on
    random normalized instances."""
    if kind not in LOSS_KINDS:
        raise ValueError(f"unknown loss kind {kind!r}")
    if kind in RELATIONAL_KINDS and n < 2:
        raise BatchTooSmall(f"{kind} needs n >= 2, got {n}")
    margin = _kink_margin(step)
    max_err = 0.0
    worst = None
    run = 0
    skipped = 0
    for t in range(trials):
        trial_seed = seed + t
        rng = np.random.default_rng(trial_seed)
        k = normalize_rows(rng.standard_normal((n, c)))
        q = normalize_rows(rng.standard_normal((n, c)))
        if kind in RELATIONAL_KINDS and _min_abs_argument(k, q) < margin:
            skipped += 1
            continue
        analytic = evaluate_loss(kind, k, q, temperature).grad_k
        numeric = fd_gradient(
            lambda m: evaluate_loss_raw(kind, m, q, temperature).value, k, step
        )
        err = relative_error(analytic, numeric)
        run += 1
        if err > max_err:
            max_err = err
            worst = trial_seed
    return GradCheckResult(kind, trials, run, skipped, max_err, worst)


def check_mlp_chain(
    kind: str,
    n: int = 8,
    hidden: int = 8,
    trials: int = 100,
    seed: int = 0,
    temperature: float = 0.1,
    step: float = DEFAULT_STEP,
) -> GradCheckResult:
    """Finite-difference check of loss(normalize(mlp(x))) w.r.t. every
    network parameter, against the manual backward pass."""
    margin = _kink_margin(step)
    max_err = 0.0
    worst = None
    run = 0
    skipped = 0
    for t in range(trials):
        trial_seed = seed + t
        rng = np.random.default_rng(trial_seed)
        x = normalize_rows(rng.standard_normal((n, 3)))
        q = normalize_rows(rng.standard_normal((n, 3)))
        params = mlp.init_params(rng, hidden)
        cache = mlp.forward(params, x)
        # parameter perturbations shift pre-activations by about one step and
        # predictions by up to ~2 max|hidden| / min_norm steps; stay clear of
        # both kinds of kink by that much
        if float(np.min(np.abs(cache.pre_act))) < margin:
            skipped += 1
            continue
        amp = 2.0 * max(1.0, float(np.max(np.abs(cache.hidden)))) / float(
            np.min(cache.norms)
        )
        if (
            kind in RELATIONAL_KINDS
            and _min_abs_argument(cache.predictions, q) < margin * amp
        ):
            skipped += 1
            continue
        result = evaluate_loss(kind, cache.predictions, q, temperature)
        analytic = mlp.backward(cache, result.grad_k)

        def loss_at(params_now: mlp.MlpParams) -> float:
            fwd = mlp.forward(params_now, x)
            return evaluate_loss(kind, fwd.predictions, q, temperature).value

        err = 0.0
        for name in ("w1", "b1", "w2", "b2"):
            arr = getattr(params, name)
            numeric = np.empty_like(arr)
            flat = arr.reshape(-1)
            nflat = numeric.reshape(-1)
            for idx in range(flat.size):
                orig = flat[idx]
                flat[idx] = orig + step
                hi = loss_at(params)
                flat[idx] = orig - step
                lo = loss_at(params)
                flat[idx] = orig
                nflat[idx] = (hi - lo) / (2.0 * step)
            err = max(err, relative_error(getattr(analytic, name), numeric))
        run += 1
        if err > max_err:
            max_err = err
            worst = trial_seed
    return GradCheckResult(f"mlp+{kind}", trials, run, skipped, max_err, worst)
