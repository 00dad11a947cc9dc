"""Acceptance criteria; each test records a PASS/FAIL line shown in the terminal summary."""
import itertools
import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from conftest import ACCEPTANCE_LINES
from girsanov_diffusion import cli
from girsanov_diffusion.config import ExperimentConfig
from girsanov_diffusion.experiments import read_csv, run_bound_report, run_forward, run_reverse
from girsanov_diffusion.girsanov import (_step_terms, both_estimates, cross_term_estimate,
                                         cumulative_kl_profile, log_likelihood_ratio)
from girsanov_diffusion.metrics import (contraction_check, gaussian_kl, gaussian_tv_1d, gaussian_w2,
                                        pinsker_bound, talagrand_bound)
from girsanov_diffusion.score import GaussianScore, perturbed_score
from girsanov_diffusion.sde import (GaussianSpec, TimeGrid, ddpm_reverse_step, em_reverse_step,
                                    reverse_drift, score_drift, simulate_batch)

Q0 = GaussianSpec([2.0], [4.0])
LATTICE = [GaussianSpec([m], [v]) for m in (-2.0, 0.0, 2.0) for v in (0.25, 1.0, 4.0)]


def record(name: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def girsanov_batch():
    """Score-driven chains at eps = 0.2, T = 1, N = 100, 10^5 paths."""
    grid = TimeGrid(1.0, 100)
    exact = GaussianScore(Q0)
    b = score_drift(perturbed_score(exact, 0.2, "constant_offset"), grid)
    b_prime = score_drift(exact, grid)
    start = time.perf_counter()
    batch = simulate_batch(Q0, b, grid, 100_000, 2024)
    formula, mc = both_estimates(batch, b, b_prime)
    elapsed = time.perf_counter() - start
    return grid, batch, b, b_prime, formula, mc, elapsed


def test_c01_discrete_girsanov_identity(girsanov_batch):
    _, _, _, _, formula, mc, elapsed = girsanov_batch
    # "exactly" up to float summation over N steps
    exact_ok = abs(formula.value - 0.01) <= 1e-12
    combined = math.hypot(formula.std_error, mc.std_error)
    mc_ok = abs(mc.value - formula.value) <= 3 * combined
    record("C1 discrete Girsanov identity", exact_ok and mc_ok and elapsed < 5.0,
           f"formula={formula.value!r} mc={mc.value:.5f}+-{mc.std_error:.5f} time={elapsed:.2f}s")


def test_c02_transition_density_oracle():
    worst = 0.0
    for i in range(100):
        d = 1 + i % 2
        grid = TimeGrid(1.0, 50)
        q = GaussianSpec(np.linspace(-1.0, 2.0, d), np.linspace(0.5, 4.0, d))
        b = reverse_drift(perturbed_score(GaussianScore(q), 0.3, "random_direction", seed=i,
                                          bucket_width=grid.h), grid)
        b_prime = reverse_drift(GaussianScore(q), grid)
        traj = simulate_batch(GaussianSpec.standard(d), b, grid, 1, 1000 + i)[0]
        h, cov = grid.h, 2 * grid.h * np.eye(d)
        oracle = 0.0
        for k in range(grid.N):
            x, y = traj.states[k], traj.states[k + 1]
            oracle += (multivariate_normal.logpdf(y, x + h * b(k, x[None])[0], cov)
                       - multivariate_normal.logpdf(y, x + h * b_prime(k, x[None])[0], cov))
        worst = max(worst, abs(log_likelihood_ratio(traj, b, b_prime).total - oracle))
    record("C2 transition-density oracle", worst <= 1e-8, f"max |llr - oracle| = {worst:.2e}")


def test_c03_linear_cumulative_kl(girsanov_batch):
    grid, batch, b, b_prime, _, _, _ = girsanov_batch
    t = grid.times()
    profile = cumulative_kl_profile(batch, b, b_prime)
    slope, icpt = np.polyfit(t, profile, 1)
    resid = profile - (slope * t + icpt)
    r2 = 1 - np.sum(resid ** 2) / np.sum((profile - profile.mean()) ** 2)
    formula_ok = r2 >= 0.999 and abs(slope - 0.01) <= 1e-12
    # least-squares slope through the origin, per path, for the Monte Carlo profile
    quad, cross = _step_terms(batch.states, batch.noises, grid, b, b_prime)
    cum = np.cumsum(quad + cross, axis=1)
    per_path = cum @ t[1:] / np.dot(t[1:], t[1:])
    mc_slope, mc_se = per_path.mean(), per_path.std(ddof=1) / math.sqrt(len(per_path))
    mc_ok = abs(mc_slope - 0.01) <= 3 * mc_se
    record("C3 linear cumulative KL", formula_ok and mc_ok,
           f"R2={r2:.6f} slope={slope!r} mc_slope={mc_slope:.5f}+-{mc_se:.5f}")


def test_c04_cross_term_zero_mean(girsanov_batch):
    _, batch, b, b_prime, _, _, _ = girsanov_batch
    c = cross_term_estimate(batch, b, b_prime)
    record("C4 zero-mean cross term", abs(c.value) <= 3 * c.std_error,
           f"mean={c.value:.2e} se={c.std_error:.2e}")


def test_c05_recovery(tmp_path):
    config = ExperimentConfig(out_dir=str(tmp_path), emit_svg=False)
    run_forward(config)
    metrics = run_reverse(config, ("exact",), "true_qT").metrics
    w = {s: metrics[f"recovery_w2_{s}_exact"] for s in ("em", "ddpm")}
    ok = all(v <= 0.05 for vals in w.values() for v in vals)
    record("C5 recovery W2", ok, " ".join(f"{s}={vals[0]:.4f}" for s, vals in w.items()))


def test_c06_contraction():
    rows = []
    equality = 0.0
    for q in LATTICE:
        checked = contraction_check(q, [0.1, 0.5, 1.0, 2.0, 5.0])
        rows += checked
        if q.var[0] == 1.0:
            equality = max(equality, max(abs(lhs - rhs) for _, lhs, rhs, _ in checked))
    ok = all(r[3] for r in rows) and equality <= 1e-9
    record("C6 contraction", ok, f"{sum(r[3] for r in rows)}/{len(rows)} ok, unit-variance gap {equality:.1e}")


def test_c07_pinsker_talagrand():
    gamma = GaussianSpec.standard(1)
    pinsker = min(pinsker_bound(gaussian_kl(p, q)) - gaussian_tv_1d(p, q)
                  for p, q in itertools.product(LATTICE, repeat=2))
    talagrand = min(talagrand_bound(gaussian_kl(q, gamma)) - gaussian_w2(q, gamma) for q in LATTICE)
    record("C7 Pinsker and Talagrand", pinsker >= -1e-9 and talagrand >= -1e-9,
           f"min slack pinsker={pinsker:.3e} talagrand={talagrand:.3e}")


@pytest.fixture(scope="module")
def bound_rows(tmp_path_factory):
    config = ExperimentConfig(out_dir=str(tmp_path_factory.mktemp("bound")), emit_svg=False)
    run_bound_report(config, [0.5, 1.0, 2.0, 4.0, 8.0], score_kind="exact")
    return read_csv(Path(config.out_dir) / "bound_report.csv")[1]


def test_c08a_tv_decay_rate(bound_rows):
    T, tv = bound_rows[:, 0], bound_rows[:, 5]
    rate = np.polyfit(T, np.log(tv), 1)[0]
    record("C8a TV decay rate", abs(rate + 1) <= 0.2,
           f"fitted rate {rate:.3f} (target -1 +- 20%), tv={np.round(tv, 4).tolist()}")


def test_c08b_tv_monotone_in_eps(tmp_path):
    tvs = []
    for eps in (0.1, 0.2, 0.4):
        config = ExperimentConfig(out_dir=str(tmp_path / str(eps)), emit_svg=False, eps_score=eps)
        run_bound_report(config, [2.0])
        tvs.append(read_csv(Path(config.out_dir) / "bound_report.csv")[1][0, 5])
    record("C8b TV monotone in eps", tvs[0] <= tvs[1] <= tvs[2], f"tv={np.round(tvs, 4).tolist()}")


def test_c08c_bound_satisfied(bound_rows, tmp_path):
    config = ExperimentConfig(out_dir=str(tmp_path), emit_svg=False)
    perturbed = run_bound_report(config)
    rows = read_csv(Path(config.out_dir) / "bound_report.csv")[1]
    ok = bool(np.all(bound_rows[:, 6] == 1) and np.all(rows[:, 6] == 1))
    record("C8c bound satisfied", ok and perturbed.metrics["bound_satisfied"],
           f"exact {int(bound_rows[:, 6].sum())}/5, perturbed {int(rows[:, 6].sum())}/5")


def test_c09_stepper_consistency():
    rng = np.random.default_rng(99)
    x = rng.normal(2.0, 2.0, size=(1000, 1))
    score = GaussianScore(Q0)
    gaps = []
    for N in (25, 50, 100):
        grid = TimeGrid(1.0, N)
        zero = np.zeros_like(x)
        gaps.append(np.mean(np.abs(ddpm_reverse_step(x, 0, score, grid, zero)
                                   - em_reverse_step(x, 0, score, grid, zero))))
    ratios = [a / b for a, b in zip(gaps[:-1], gaps[1:])]
    record("C9 stepper consistency", all(3 <= r <= 5 for r in ratios),
           f"halving ratios {np.round(ratios, 4).tolist()}")


def test_c10_determinism(tmp_path):
    trees = {}
    for workers in (1, 4):
        out = tmp_path / f"w{workers}"
        assert cli.main(["all", "--out-dir", str(out), "--seed", "11", "--workers", str(workers)]) == 0
        trees[workers] = {p.relative_to(out): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}
    same = trees[1] == trees[4]
    record("C10 determinism", same and len(trees[1]) > 0,
           f"{len(trees[1])} files, identical={same}")
