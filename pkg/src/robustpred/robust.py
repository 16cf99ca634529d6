"""Adaptive robust predictor: gate-weighted combination of the optimistic and
conservative predictors.

Fitting runs the full pipeline on raw training data: center, accumulate
moments, fit both predictors, the imputer and the tail region, build the
training pairs (delta(x_i), outlier indicator), and fit the logistic gate.
The fitted model is immutable; prediction is pure and concurrent-safe.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import gate as gate_mod
from .gate import LogisticGate, OutlierRegion, delta_stat, is_outlier, prob_outlier
from .linalg import ShapeError, accumulate_moments, as_matrix, as_vector, pseudoinverse
from .predictors import Imputer, LinearPredictor, fit_conservative, fit_imputer, fit_optimistic


@dataclass(frozen=True)
class RobustModel:
    """Fitted bundle: both base predictors, imputer, tail region and gate.

    All components come from the same training data and alpha; the effective
    weight vector at any x lies on the segment between the optimistic and
    conservative weights.
    """

    w_opt: LinearPredictor
    w_con: LinearPredictor
    imputer: Imputer
    region: OutlierRegion
    gate: LogisticGate
    alpha: float
    x_mean: np.ndarray
    z_mean: np.ndarray
    y_mean: float


def fit_robust(X, Z, y, alpha: float) -> RobustModel:
    """Fit the adaptive predictor from raw training data.

    Steps: optimistic fit, conservative fit, per-sample (delta(x_i),
    outlier indicator) pairs, then the logistic gate. Raises
    ``SingleClassError`` when alpha yields single-class labels.
    """
    X = as_matrix(X, "X")
    Z = as_matrix(Z, "Z")
    y = as_vector(y, "y")
    n, d = X.shape
    q = Z.shape[1]
    if q < 1:
        raise ShapeError("fit_robust requires at least one missing-feature column")
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must be in (0, 1]")
    if n < d + q:
        warnings.warn(
            f"only {n} samples for {d}+{q} feature dimensions; fits may be degenerate",
            stacklevel=2,
        )

    x_mean = X.mean(axis=0)
    z_mean = Z.mean(axis=0)
    y_mean = float(y.mean())
    Xc, Zc, yc = X - x_mean, Z - z_mean, y - y_mean

    moments = accumulate_moments(Xc, Zc, yc)
    w_opt = fit_optimistic(moments, x_mean, y_mean)
    w_con = fit_conservative(moments, x_mean, y_mean)
    imputer = fit_imputer(moments)
    region = OutlierRegion(minv=pseudoinverse(moments.szz), alpha=alpha, center=z_mean)

    deltas = delta_stat(region, imputer, Xc)
    labels = is_outlier(region, Z)
    fitted_gate = gate_mod.fit_gate(zip(deltas, labels))

    return RobustModel(
        w_opt=w_opt,
        w_con=w_con,
        imputer=imputer,
        region=region,
        gate=fitted_gate,
        alpha=alpha,
        x_mean=x_mean,
        z_mean=z_mean,
        y_mean=y_mean,
    )


def outlier_probability(model: RobustModel, x) -> float | np.ndarray:
    """Gate probability of an outlying z given raw x (vector or batch)."""
    x = np.asarray(x, dtype=float)
    delta = delta_stat(model.region, model.imputer, x - model.x_mean)
    return prob_outlier(model.gate, delta)


def adaptive_weights(model: RobustModel, x) -> np.ndarray:
    """Effective weight vector at x: convex mix of the two base predictors."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.x_mean.shape[0]:
        raise ShapeError(f"expected feature dimension {model.x_mean.shape[0]}")
    p = outlier_probability(model, x)
    wo, wc = model.w_opt.weights, model.w_con.weights
    if x.ndim == 2:
        p = np.asarray(p)[:, None]
    return (1.0 - p) * wo + p * wc


def predict_robust(model: RobustModel, x) -> float | np.ndarray:
    """Prediction with the adaptive weight vector on raw x (vector or batch)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.x_mean.shape[0]:
        raise ShapeError(f"expected feature dimension {model.x_mean.shape[0]}")
    xc = x - model.x_mean
    p = outlier_probability(model, x)
    opt = xc @ model.w_opt.weights
    con = xc @ model.w_con.weights
    out = (1.0 - p) * opt + p * con + model.y_mean
    return out if x.ndim == 2 else float(out)
