"""Outlier region over the missing block z and the logistic gate.

The region collects the tails of z under the Mahalanobis-type quadratic form
built from the training second moment of z; its probability mass is at most
alpha by a Chebyshev-type bound. The gate models the conditional outlier
probability as a logistic function of the scalar statistic delta(x), the
Mahalanobis norm of the regression-imputed z.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import ShapeError, ValidationError
from .predictors import Imputer

MAX_GATE_PARAM = 1e3
GATE_GRAD_TOL = 1e-8
GATE_MAX_ITER = 500


class SingleClassError(ValueError):
    """All training labels fell in one class; advise a larger alpha."""


@dataclass(frozen=True)
class OutlierRegion:
    """Tail region {z : (z - center)' minv (z - center) >= q / alpha}."""

    minv: np.ndarray
    alpha: float
    center: np.ndarray = None

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValidationError("alpha must be in (0, 1]")
        if self.center is None:
            object.__setattr__(self, "center", np.zeros(self.minv.shape[0]))

    @property
    def q(self) -> int:
        return self.minv.shape[0]

    @property
    def threshold(self) -> float:
        return self.q / self.alpha


def mahalanobis_stat(region: OutlierRegion, z) -> float | np.ndarray:
    """Quadratic form of z (single q-vector or n x q batch) in the region metric."""
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != region.q:
        raise ShapeError(f"expected z dimension {region.q}, got {z.shape[-1]}")
    zc = z - region.center
    if zc.ndim == 2:
        return np.einsum("ij,jk,ik->i", zc, region.minv, zc)
    return float(zc @ region.minv @ zc)


def is_outlier(region: OutlierRegion, z) -> bool | np.ndarray:
    """Region membership; ties at the boundary count as outliers."""
    stat = mahalanobis_stat(region, z)
    out = stat >= region.threshold
    return out if isinstance(stat, np.ndarray) else bool(out)


def delta_stat(region: OutlierRegion, imputer: Imputer, x_centered) -> float | np.ndarray:
    """Mahalanobis norm of the imputed z at centered x.

    Tiny negative quadratic forms from roundoff are clamped to zero; anything
    below -1e-12 indicates a broken metric and raises.
    """
    zhat = imputer.impute(x_centered)
    if zhat.ndim == 1:
        zhat = zhat[None, :]
        scalar = True
    else:
        scalar = False
    form = np.einsum("ij,jk,ik->i", zhat, region.minv, zhat)
    if np.any(form < -1e-12):
        raise ValidationError("negative Mahalanobis quadratic form; metric not PSD")
    delta = np.sqrt(np.clip(form, 0.0, None))
    return float(delta[0]) if scalar else delta


@dataclass(frozen=True)
class LogisticGate:
    """Two-parameter logistic model of Pr{outlier | delta}.

    Internally parameterized as sigmoid(b0 + b1 * delta), which stays convex
    to fit and well defined at zero slope; the (kappa, delta0) form with
    probability 1 / (1 + exp(kappa * (delta - delta0))) is recovered as
    kappa = -b1, delta0 = -b0 / b1 whenever b1 != 0.
    """

    b0: float
    b1: float
    cross_entropy: float = float("nan")
    iterations: int = 0
    converged: bool = False

    @property
    def kappa(self) -> float | None:
        return -self.b1 if abs(self.b1) > 1e-12 else None

    @property
    def delta0(self) -> float | None:
        return -self.b0 / self.b1 if abs(self.b1) > 1e-12 else None


def _sigmoid(t):
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def gate_cross_entropy(b0: float, b1: float, deltas, labels) -> float:
    """Mean binary cross-entropy of the gate on (delta, label) pairs."""
    t = b0 + b1 * np.asarray(deltas, dtype=float)
    y = np.asarray(labels, dtype=float)
    # log(1 + exp(t)) computed stably; CE = mean(softplus(t) - y * t)
    softplus = np.logaddexp(0.0, t)
    return float(np.mean(softplus - y * t))


def fit_gate(pairs) -> LogisticGate:
    """Fit the logistic gate by Newton's method on the cross-entropy.

    ``pairs`` is an iterable of (delta, label). Requires both classes present;
    a single class means the chosen alpha produced no (or only) outliers, so
    the error advises raising it. Perfect separation has no finite minimizer:
    parameters are capped at magnitude 1e3 and the gate marked not converged.
    """
    pairs = list(pairs)
    deltas = np.asarray([p[0] for p in pairs], dtype=float)
    labels = np.asarray([bool(p[1]) for p in pairs], dtype=float)
    if not np.all(np.isfinite(deltas)) or np.any(deltas < 0):
        raise ValidationError("deltas must be finite and nonnegative")
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == len(labels):
        raise SingleClassError(
            "outlier labels are single-class; increase alpha so the training "
            "sample contains both inliers and outliers"
        )

    design = np.column_stack([np.ones_like(deltas), deltas])
    b = np.zeros(2)
    ce = gate_cross_entropy(b[0], b[1], deltas, labels)
    converged = False
    it = 0
    for it in range(1, GATE_MAX_ITER + 1):
        p = _sigmoid(design @ b)
        grad = design.T @ (p - labels) / len(labels)
        if np.linalg.norm(grad) <= GATE_GRAD_TOL:
            converged = True
            break
        w = np.clip(p * (1.0 - p), 1e-12, None)
        hess = design.T @ (design * w[:, None]) / len(labels)
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        # step halving: accept the first step that does not increase the loss
        scale = 1.0
        for _ in range(50):
            cand = b - scale * step
            ce_cand = gate_cross_entropy(cand[0], cand[1], deltas, labels)
            if ce_cand <= ce:
                b, ce = cand, ce_cand
                break
            scale *= 0.5
        else:
            converged = np.linalg.norm(grad) <= 1e-6
            break
        if np.max(np.abs(b)) > MAX_GATE_PARAM:
            b = np.clip(b, -MAX_GATE_PARAM, MAX_GATE_PARAM)
            ce = gate_cross_entropy(b[0], b[1], deltas, labels)
            converged = False
            break
    return LogisticGate(
        b0=float(b[0]),
        b1=float(b[1]),
        cross_entropy=ce,
        iterations=it,
        converged=bool(converged),
    )


def prob_outlier(gate: LogisticGate, delta) -> float | np.ndarray:
    """Gate probability sigmoid(b0 + b1 * delta), always strictly in (0, 1)."""
    t = np.asarray(gate.b0 + gate.b1 * np.asarray(delta, dtype=float))
    p = _sigmoid(np.atleast_1d(t).astype(float))
    tiny = np.finfo(float).tiny
    p = np.clip(p, tiny, 1.0 - 1e-16)
    return p if np.ndim(delta) else float(p[0])
