"""Evaluation toolkit: conditional MSE split over the tail region, Monte Carlo
experiment harness, conditional-MSE curves and the excess-MSE identity check.

Independent Monte Carlo runs own derived seeds (master seed plus run index)
and their reports are merged deterministically by run index.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .datagen import PolyConfig, SyntheticConfig, feature_map_quadratic, generate_linear, generate_poly
from .gate import OutlierRegion, is_outlier
from .linalg import SecondMoments, ShapeError, empirical_mse, pseudoinverse
from .predictors import fit_oracle, predict, predict_oracle
from .robust import fit_robust, predict_robust


@dataclass(frozen=True)
class EvalReport:
    """MSE split into the tail-region (outlier) and complement (inlier) parts.

    An empty bucket is reported as ``None``, never as zero.
    """

    mse: float
    mse_out: float | None
    mse_in: float | None
    n_out: int
    n_in: int
    alpha: float


def evaluate(predict_fn, X_test, Z_test, y_test, region: OutlierRegion) -> EvalReport:
    """Split test rows by region membership of z and average squared errors.

    ``predict_fn(X, Z)`` must return a vector of predictions; predictors that
    ignore z simply discard the second argument. The region must come from
    training z-moments: z is unseen at prediction time.
    """
    X = np.asarray(X_test, dtype=float)
    Z = np.asarray(Z_test, dtype=float)
    y = np.asarray(y_test, dtype=float).ravel()
    if X.shape[0] != Z.shape[0] or X.shape[0] != y.shape[0]:
        raise ShapeError("test arrays are not aligned")
    err2 = (y - np.asarray(predict_fn(X, Z), dtype=float).ravel()) ** 2
    out_mask = is_outlier(region, Z)
    n_out = int(out_mask.sum())
    n_in = int(len(y) - n_out)
    return EvalReport(
        mse=float(err2.mean()),
        mse_out=float(err2[out_mask].mean()) if n_out else None,
        mse_in=float(err2[~out_mask].mean()) if n_in else None,
        n_out=n_out,
        n_in=n_in,
        alpha=region.alpha,
    )


def delta_percent(report, baseline) -> tuple:
    """Percent change of (inlier, outlier) MSE versus a baseline report."""

    def pct(a, b):
        if a is None or b is None:
            return float("nan")
        return (a - b) / b * 100.0

    return pct(report.mse_in, baseline.mse_in), pct(report.mse_out, baseline.mse_out)


@dataclass(frozen=True)
class DeltaRow:
    """Per-predictor percent MSE changes versus the optimistic baseline."""

    name: str
    delta_in_runs: np.ndarray
    delta_out_runs: np.ndarray

    def _agg(self, values):
        return {
            "mean": float(np.mean(values)),
            "q25": float(np.percentile(values, 25)),
            "median": float(np.percentile(values, 50)),
            "q75": float(np.percentile(values, 75)),
        }

    @property
    def inlier(self) -> dict:
        return self._agg(self.delta_in_runs)

    @property
    def outlier(self) -> dict:
        return self._agg(self.delta_out_runs)


@dataclass(frozen=True)
class DeltaTable:
    rows: tuple
    alpha: float
    n_runs: int
    failed_runs: tuple = ()

    def row(self, name: str) -> DeltaRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)


@dataclass(frozen=True)
class CurveSet:
    """Monte Carlo mean conditional-MSE curves over scalar z bins."""

    bin_edges: np.ndarray
    centers: np.ndarray
    mse: dict  # name -> array (nan where the bin stayed empty)
    counts: dict  # name -> total rows per bin


def conditional_mse_curve(predict_fn, X_test, Z_test, y_test, z_bins):
    """Bin test rows by a scalar z and average squared errors per bin.

    ``z_bins`` is an array of bin edges or an integer bin count. Returns a
    list of (bin center, mse or None, count); empty bins keep count 0.
    """
    X = np.asarray(X_test, dtype=float)
    Z = np.asarray(Z_test, dtype=float)
    y = np.asarray(y_test, dtype=float).ravel()
    if Z.ndim != 2 or Z.shape[1] != 1:
        raise ShapeError("conditional curves are defined for scalar z only")
    z = Z[:, 0]
    edges = np.histogram_bin_edges(z, bins=z_bins) if np.ndim(z_bins) == 0 else np.asarray(z_bins, dtype=float)
    err2 = (y - np.asarray(predict_fn(X, Z), dtype=float).ravel()) ** 2
    idx = np.digitize(z, edges) - 1
    rows = []
    for b in range(len(edges) - 1):
        mask = idx == b
        count = int(mask.sum())
        center = 0.5 * (edges[b] + edges[b + 1])
        rows.append((float(center), float(err2[mask].mean()) if count else None, count))
    return rows


def _generate(cfg, n, seed):
    cfg = replace(cfg, n=n, seed=seed)
    if isinstance(cfg, PolyConfig):
        x_raw, Z, y = generate_poly(cfg)
        return feature_map_quadratic(x_raw), Z, y
    X, Z, y = generate_linear(cfg)
    return X, Z, y


def run_mc_experiment(
    cfg: SyntheticConfig,
    n_train: int,
    n_test: int,
    n_runs: int,
    alpha: float,
    z_bin_edges=None,
    include_oracle: bool = True,
):
    """Monte Carlo comparison of the three predictors against the optimistic
    baseline, with optional conditional-MSE curve accumulation.

    Each run derives its own seeds from the config's master seed (train seed
    = master + 2*i + 1, test seed = master + 2*i + 2) so runs are independent
    yet fully reproducible. Returns (DeltaTable, CurveSet | None); runs whose
    fit fails are recorded, not fatal.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    names = ["optimistic", "conservative", "robust"]
    deltas = {name: ([], []) for name in names}
    failed = []

    curve_names = names + (["oracle"] if include_oracle else [])
    want_curves = z_bin_edges is not None
    sq_sums = counts = centers = None
    if want_curves:
        z_bin_edges = np.asarray(z_bin_edges, dtype=float)
        centers = 0.5 * (z_bin_edges[:-1] + z_bin_edges[1:])
        sq_sums = {name: np.zeros(len(centers)) for name in curve_names}
        counts = {name: np.zeros(len(centers), dtype=int) for name in curve_names}

    for i in range(n_runs):
        X_tr, Z_tr, y_tr = _generate(cfg, n_train, cfg.seed + 2 * i + 1)
        X_te, Z_te, y_te = _generate(cfg, n_test, cfg.seed + 2 * i + 2)
        try:
            model = fit_robust(X_tr, Z_tr, y_tr, alpha)
        except Exception as exc:  # noqa: BLE001 - failed runs are data, not crashes
            failed.append((i, str(exc)))
            continue
        fns = {
            "optimistic": lambda X, Z, m=model: predict(m.w_opt, X),
            "conservative": lambda X, Z, m=model: predict(m.w_con, X),
            "robust": lambda X, Z, m=model: predict_robust(m, X),
        }
        reports = {
            name: evaluate(fn, X_te, Z_te, y_te, model.region) for name, fn in fns.items()
        }
        for name in names:
            d_in, d_out = delta_percent(reports[name], reports["optimistic"])
            deltas[name][0].append(d_in)
            deltas[name][1].append(d_out)

        if want_curves and Z_te.shape[1] == 1:
            oracle = None
            if include_oracle:
                from .linalg import accumulate_moments

                x_mean, z_mean, y_mean = X_tr.mean(0), Z_tr.mean(0), float(y_tr.mean())
                m = accumulate_moments(X_tr - x_mean, Z_tr - z_mean, y_tr - y_mean)
                oracle = fit_oracle(m, x_mean, z_mean, y_mean)
                fns["oracle"] = lambda X, Z, o=oracle: predict_oracle(o, X, Z)
            idx = np.digitize(Z_te[:, 0], z_bin_edges) - 1
            valid = (idx >= 0) & (idx < len(centers))
            for name in curve_names:
                err2 = (y_te - np.asarray(fns[name](X_te, Z_te)).ravel()) ** 2
                sq_sums[name] += np.bincount(idx[valid], err2[valid], minlength=len(centers))
                counts[name] += np.bincount(idx[valid], minlength=len(centers))

    rows = tuple(
        DeltaRow(
            name=name,
            delta_in_runs=np.asarray(deltas[name][0]),
            delta_out_runs=np.asarray(deltas[name][1]),
        )
        for name in names
    )
    table = DeltaTable(rows=rows, alpha=alpha, n_runs=n_runs, failed_runs=tuple(failed))
    curves = None
    if want_curves:
        mse = {
            name: np.where(counts[name] > 0, sq_sums[name] / np.maximum(counts[name], 1), np.nan)
            for name in curve_names
        }
        curves = CurveSet(bin_edges=z_bin_edges, centers=centers, mse=mse, counts=counts)
    return table, curves


@dataclass(frozen=True)
class ExcessMseCheck:
    """Both sides of the excess-MSE identity at population-scale moments."""

    lhs: float
    rhs: float
    term_dispersion: float  # z-dispersion-weighted term, zero on the constraint set
    term_residual: float  # residual-feature term
    gamma: np.ndarray
    resid_moment: np.ndarray


def excess_mse_check(moments: SecondMoments, w) -> ExcessMseCheck:
    """Evaluate MSE(w) - MSE* and its two-term decomposition.

    Requires an invertible z second moment (the decomposition is stated with
    a true inverse); population-scale (large-sample) moments are expected.
    """
    w = np.asarray(w, dtype=float).ravel()
    szz = moments.szz
    cond = np.linalg.cond(szz)
    if not np.isfinite(cond) or cond > 1e12:
        raise np.linalg.LinAlgError("z second moment is singular or near-singular")
    szz_inv = np.linalg.inv(szz)
    gamma = szz_inv @ moments.szx

    joint = np.block([[moments.sxx, moments.szx.T], [moments.szx, moments.szz]])
    rhs_vec = np.concatenate([moments.sxy, moments.szy])
    sol = pseudoinverse(joint) @ rhs_vec
    alpha_w, beta_w = sol[: moments.d], sol[moments.d :]
    mse_star = float(moments.syy - 2.0 * sol @ rhs_vec + sol @ joint @ sol)

    diff = alpha_w - w
    v1 = gamma @ diff + beta_w
    term1 = float(v1 @ szz @ v1)
    resid_moment = moments.sxx - moments.szx.T @ szz_inv @ moments.szx
    term2 = float(diff @ resid_moment @ diff)
    return ExcessMseCheck(
        lhs=empirical_mse(moments, w) - mse_star,
        rhs=term1 + term2,
        term_dispersion=term1,
        term_residual=term2,
        gamma=gamma,
        resid_moment=resid_moment,
    )
