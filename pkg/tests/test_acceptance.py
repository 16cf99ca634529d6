"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines; the whole module stays within a few minutes on a laptop.
"""

import numpy as np
import pytest

from robustpred.cli import EXIT_OK, main as cli_main
from robustpred.datagen import PolyConfig, SyntheticConfig, generate_linear, sample_t
from robustpred.dataio import LagSpec, build_lagged, split_chronological, write_csv
from robustpred.evalkit import excess_mse_check, run_mc_experiment
from robustpred.gate import OutlierRegion, gate_cross_entropy, is_outlier, prob_outlier
from robustpred.linalg import accumulate_moments, empirical_mse, null_space_projector, pseudoinverse
from robustpred.predictors import fit_conservative, fit_imputer, fit_optimistic, fit_oracle
from robustpred.robust import adaptive_weights, fit_robust

MASTER_SEED = 20250823


def check(num, description, ok):
    print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {num}: {description}")
    assert ok, f"criterion {num} failed: {description}"


@pytest.fixture(scope="module")
def rho_tables():
    """50-run MC tables for rho in {0.3, 0.5, 0.7}, n_train=100, n_test=1e5."""
    tables = {}
    for rho in (0.3, 0.5, 0.7):
        cfg = SyntheticConfig(rho=rho, nu_z=3.0, n=100, seed=MASTER_SEED)
        tables[rho], _ = run_mc_experiment(cfg, 100, 100_000, 50, 0.1)
    return tables


def random_problem(seed, n=100, d=5, q=2):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    mix = rng.normal(size=(d, q))
    Z = X @ mix + 0.5 * rng.normal(size=(n, q))
    y = X @ rng.normal(size=d) + Z @ rng.normal(size=q) + 0.3 * rng.normal(size=n)
    X -= X.mean(0)
    Z -= Z.mean(0)
    y -= y.mean()
    return X, Z, y


def test_criterion_01_table_band_replication(rho_tables):
    table = rho_tables[0.7]
    con, rob = table.row("conservative"), table.row("robust")
    c_in, c_out = con.inlier["mean"], con.outlier["mean"]
    r_in, r_out = rob.inlier["mean"], rob.outlier["mean"]
    bands = (
        -95.0 <= c_out <= -50.0
        and 50.0 <= c_in <= 160.0
        and r_out <= -35.0
        and r_in <= 60.0
    )
    ordering = (c_out < r_out < 0.0) and (0.0 < r_in < c_in)
    check(
        1,
        f"band replication (con in {c_in:.1f}%, out {c_out:.1f}%; "
        f"robust in {r_in:.1f}%, out {r_out:.1f}%) with robust strictly between",
        bands and ordering,
    )


def test_criterion_02_monotone_trend_in_rho(rho_tables):
    con_outs = [rho_tables[r].row("conservative").outlier["mean"] for r in (0.3, 0.5, 0.7)]
    rob_outs = [rho_tables[r].row("robust").outlier["mean"] for r in (0.3, 0.5, 0.7)]
    ok = all(v < 0 for v in con_outs + rob_outs)
    # reductions shrink in magnitude as rho decreases
    ok = ok and abs(con_outs[0]) < abs(con_outs[1]) < abs(con_outs[2])
    ok = ok and abs(rob_outs[0]) < abs(rob_outs[1]) < abs(rob_outs[2])
    check(2, f"outlier-MSE reductions shrink as rho decreases (con {con_outs}, rob {rob_outs})", ok)


def test_criterion_03_chebyshev_bound():
    n = 10**6
    worst = -np.inf
    ok = True
    for nu in (3.0, 5.0):
        z = sample_t(nu, np.eye(1), n, seed=MASTER_SEED + int(nu))
        minv = np.linalg.inv(z.T @ z / n)
        for alpha in (0.05, 0.1, 0.3):
            frac = float(np.mean(is_outlier(OutlierRegion(minv=minv, alpha=alpha), z)))
            bound = alpha + 3.0 * np.sqrt(alpha * (1 - alpha) / n)
            worst = max(worst, frac - bound)
            ok = ok and frac <= bound
    check(3, f"tail-region hit rate within Chebyshev bound (worst margin {worst:.2e})", ok)


def test_criterion_04_imputation_equivalence():
    worst = 0.0
    for k in range(20):
        X, Z, y = random_problem(MASTER_SEED + k)
        m = accumulate_moments(X, Z, y)
        oracle = fit_oracle(m)
        imputer = fit_imputer(m)
        w_opt = fit_optimistic(m).weights
        rng = np.random.default_rng(MASTER_SEED + 100 + k)
        for x in rng.normal(size=(100, 5)):
            indirect = oracle.alpha_w @ x + oracle.beta_w @ imputer.impute(x)
            worst = max(worst, abs(indirect - w_opt @ x))
    check(4, f"oracle with imputed z equals optimistic prediction (max dev {worst:.2e})", worst <= 1e-8)


def test_criterion_05_conservative_constraint_and_optimality():
    ok = True
    worst_resid = 0.0
    for k in range(20):
        X, Z, y = random_problem(MASTER_SEED + 200 + k)
        m = accumulate_moments(X, Z, y)
        con = fit_conservative(m)
        rel_resid = con.constraint_residual / (1.0 + np.max(np.abs(m.szy)))
        worst_resid = max(worst_resid, rel_resid)
        ok = ok and rel_resid <= 1e-8
        base = empirical_mse(m, con.weights)
        anchor = pseudoinverse(m.szx) @ m.szy
        pi = null_space_projector(m.szx)
        rng = np.random.default_rng(MASTER_SEED + 300 + k)
        thetas = rng.normal(size=(1000, 5))
        probes = anchor + thetas @ pi.T
        mses = m.syy - 2.0 * probes @ m.sxy + np.einsum("ij,jk,ik->i", probes, m.sxx, probes)
        ok = ok and bool(np.all(base <= mses + 1e-10))
    check(5, f"conservative constraint residual (max rel {worst_resid:.2e}) and probe optimality", ok)


def test_criterion_06_excess_mse_identity():
    X, Z, y = generate_linear(SyntheticConfig(rho=0.7, nu_z=3.0, n=10**6, seed=MASTER_SEED))
    m = accumulate_moments(X - X.mean(0), Z - Z.mean(0), y - y.mean())
    w_o = fit_optimistic(m).weights
    w_c = fit_conservative(m).weights
    rng = np.random.default_rng(MASTER_SEED + 1)
    ok = True
    worst = 0.0
    for w in (w_o, w_c, rng.normal(size=3)):
        c = excess_mse_check(m, w)
        rel = abs(c.lhs - c.rhs) / abs(c.lhs)
        worst = max(worst, rel)
        ok = ok and rel <= 0.02
    c = excess_mse_check(m, w_c)
    ok = ok and c.term_dispersion <= 1e-6 * c.term_residual
    check(6, f"excess-MSE identity (worst rel dev {worst:.2e}; constrained first term vanishes)", ok)


@pytest.fixture(scope="module")
def synthetic_model():
    X, Z, y = generate_linear(SyntheticConfig(rho=0.7, nu_z=3.0, n=1000, seed=MASTER_SEED))
    return fit_robust(X, Z, y, 0.1), X, Z, y


def test_criterion_07_gate_properties(synthetic_model):
    model, X, Z, y = synthetic_model
    gate = model.gate
    from robustpred.gate import delta_stat

    deltas = delta_stat(model.region, model.imputer, X - model.x_mean)
    labels = is_outlier(model.region, Z)
    ok = gate.cross_entropy <= gate_cross_entropy(0.0, 0.0, deltas, labels)
    rng = np.random.default_rng(MASTER_SEED + 2)
    for b0, b1 in rng.uniform(-10.0, 10.0, size=(100, 2)):
        ok = ok and gate.cross_entropy <= gate_cross_entropy(b0, b1, deltas, labels) + 1e-12
    probe = prob_outlier(gate, np.linspace(0.0, 50.0, 1000))
    ok = ok and bool(np.all((probe > 0.0) & (probe < 1.0)))
    ok = ok and gate.b1 > 0  # probability increasing in delta, kappa < 0
    check(7, f"gate optimality, open-interval output and sign pattern (kappa={gate.kappa:.2f})", ok)


def test_criterion_08_convex_combination_geometry(synthetic_model):
    model, *_ = synthetic_model
    rng = np.random.default_rng(MASTER_SEED + 3)
    span = model.w_con.weights - model.w_opt.weights
    span_norm2 = span @ span
    ok = True
    worst = 0.0
    for x in rng.normal(size=(1000, 3)) * 3.0:
        w = adaptive_weights(model, x)
        coef = (w - model.w_opt.weights) @ span / span_norm2
        ok = ok and 0.0 < coef < 1.0
        dev = np.max(np.abs(w - (model.w_opt.weights + coef * span)))
        worst = max(worst, dev)
        ok = ok and dev <= 1e-12
    check(8, f"adaptive weights on the segment, coefficient in (0,1) (max dev {worst:.2e})", ok)


def test_criterion_09_polynomial_nonlinearity_ordering():
    outs = {}
    for w1 in (0.1, 0.01):
        cfg = PolyConfig(wz=(1.0, w1), n=1000, seed=1)
        table, _ = run_mc_experiment(cfg, 1000, 50_000, 20, 0.1)
        outs[w1] = table.row("robust").outlier["mean"]
    ok = outs[0.1] < 0 and outs[0.01] < 0 and abs(outs[0.1]) > abs(outs[0.01])
    check(9, f"nonlinear pipeline outlier gain larger for w1=0.1 ({outs[0.1]:.1f}%) than w1=0.01 ({outs[0.01]:.1f}%)", ok)


def test_criterion_10_lagged_pipeline_end_to_end(tmp_path):
    # 10 years of synthetic daily data with an AR(1) pollutant driven by a
    # heavy-tailed covariate available only in training
    rng = np.random.default_rng(MASTER_SEED + 4)
    n = 3650
    o3 = rng.standard_t(4, size=n)
    nox = np.zeros(n)
    for t in range(1, n):
        nox[t] = 0.7 * nox[t - 1] + 0.4 * o3[t] + 0.3 * rng.normal()
    dates = [f"{2006 + d // 365}-{(d % 365) // 31 + 1:02d}-{(d % 31) + 1:02d}" for d in range(n)]
    data = tmp_path / "daily.csv"
    write_csv(data, ["nox", "o3"], {"nox": nox, "o3": o3}, dates=dates)

    from robustpred.dataio import load_model, read_csv

    ok = True
    for L in (7, 28):
        table = read_csv(data, date_col="date")
        ds = build_lagged(table, LagSpec(L=L))
        train, test = split_chronological(ds, fraction=0.7)
        train_csv, test_csv = tmp_path / f"train{L}.csv", tmp_path / f"test{L}.csv"
        for part, path in ((train, train_csv), (test, test_csv)):
            names = [f"c{j}" for j in range(part.X.shape[1])] + ["z", "y"]
            cols = {f"c{j}": part.X[:, j] for j in range(part.X.shape[1])}
            cols["z"], cols["y"] = part.Z[:, 0], part.y
            write_csv(path, names, cols)
        x_cols = ",".join(f"c{j}" for j in range(2 * L))
        model_path = tmp_path / f"model{L}.txt"
        report_path = tmp_path / f"report{L}.csv"
        code = cli_main([
            "fit", "--data", str(train_csv), "--x-cols", x_cols, "--z-cols", "z",
            "--y-col", "y", "--alpha", "0.3", "--model-out", str(model_path),
        ])
        ok = ok and code == EXIT_OK
        code = cli_main([
            "evaluate", "--model", str(model_path), "--data", str(test_csv),
            "--x-cols", x_cols, "--z-cols", "z", "--y-col", "y",
            "--out", str(report_path),
        ])
        ok = ok and code == EXIT_OK

        # leakage prohibition: stored means come from training data only
        model, _ = load_model(model_path)
        ok = ok and np.allclose(model.x_mean, train.X.mean(0), atol=1e-12)
        ok = ok and not np.allclose(model.x_mean, test.X.mean(0), atol=1e-6)

        # Table-II-shaped report with the weighted-mean identity per row
        lines = report_path.read_text().splitlines()
        ok = ok and [l.split(",")[0] for l in lines[1:]] == ["optimistic", "conservative", "robust"]
        for line in lines[1:]:
            _, mse, mse_in, mse_out, n_in, n_out, *_ = line.split(",")
            recomb = (int(n_in) * float(mse_in) + int(n_out) * float(mse_out)) / (
                int(n_in) + int(n_out)
            )
            ok = ok and abs(float(mse) - recomb) <= 1e-10 * max(1.0, float(mse))
    check(10, "CSV -> lag -> fit -> evaluate pipeline (L=7, 28) with leakage and identity invariants", ok)


def test_criterion_11_determinism(tmp_path):
    args = [
        "experiment", "--process", "linear", "--rho", "0.7", "--nu-z", "3",
        "--n-train", "100", "--n-test", "5000", "--n-runs", "5",
        "--alpha", "0.1", "--seed", str(MASTER_SEED),
    ]
    for sub in ("r1", "r2"):
        assert cli_main(args + ["--out", str(tmp_path / sub)]) == EXIT_OK
    files = ["delta_table.csv", "per_run.csv", "curves.csv", "config_effective.txt"]
    ok = all(
        (tmp_path / "r1" / f).read_bytes() == (tmp_path / "r2" / f).read_bytes()
        for f in files
    )
    check(11, "re-running the experiment with the same master seed is byte-identical", ok)
