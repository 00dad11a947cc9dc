"""Forward noising, reverse denoising, path KL and TV-bound experiments.

Each stage writes CSV tables (and optionally SVG plots) into ``out_dir``.
Sample sets handed between stages live in ``out_dir/samples``.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.special import ndtri

from . import svg
from .config import ConfigError, ExperimentConfig
from .girsanov import both_estimates
from .metrics import (composite_tv_bound, empirical_w2_1d, fit_gaussian, gaussian_kl,
                      gaussian_tv_1d, gaussian_tv_mc, histogram_tv_1d)
from .score import EmpiricalScore, GaussianScore, ScoreModel, perturbed_score
from .sde import (GaussianSpec, TimeGrid, derive_seed, forward_marginal, reverse_drift,
                  simulate_batch)

log = logging.getLogger(__name__)

TABLES = ("trajectories_forward", "trajectories_reverse", "reconstruction_histograms",
          "cumulative_kl", "drift_mismatch", "bound_report")
SAMPLERS = ("em", "ddpm")

CUMULATIVE_KL_COLUMNS = ["step", "time", "kl_formula", "kl_mc", "kl_mc_stderr"]
DRIFT_MISMATCH_COLUMNS = ["step", "time", "mean_sq_mismatch"]
BOUND_COLUMNS = ["T", "eps", "score_term", "init_term", "bound", "measured_tv", "satisfied",
                 "histogram_tv"]


class StageError(RuntimeError):
    """A pipeline stage failed; the original exception is ``__cause__``."""

    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"stage {stage!r} failed: {exc}")
        self.stage = stage


@dataclass
class FigureBundle:
    tables: Dict[str, Path] = field(default_factory=dict)
    plots: Dict[str, Path] = field(default_factory=dict)
    metrics: Dict[str, object] = field(default_factory=dict)

    def merge(self, other: "FigureBundle") -> "FigureBundle":
        self.tables.update(other.tables)
        self.plots.update(other.plots)
        self.metrics.update(other.metrics)
        return self


# --- io helpers -----------------------------------------------------------


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if not math.isfinite(v):
        raise ArithmeticError(f"non-finite value {v} in table")
    return format(v, ".17g")


def write_csv(path: Path, header: Sequence[str], columns: Sequence[Sequence]) -> Path:
    n = len(columns[0])
    if any(len(c) != n for c in columns):
        raise ValueError("ragged columns")
    lines = [",".join(header)]
    for i in range(n):
        lines.append(",".join(_cell(c[i]) for c in columns))
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def read_csv(path: Path):
    """Return ``(header, float array)`` for a table written by :func:`write_csv`."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        rows = [[float(c) if c not in ("true", "false") else float(c == "true")
                 for c in line.strip().split(",")] for line in fh if line.strip()]
    return header, np.array(rows, dtype=float).reshape(len(rows), len(header))


def _write_samples(path: Path, x: np.ndarray) -> Path:
    return write_csv(path, [f"x{j}" for j in range(x.shape[1])], list(x.T))


def _read_samples(path: Path) -> np.ndarray:
    if not path.exists():
        raise FileNotFoundError(f"missing artifact {path}; run the forward stage first")
    return read_csv(path)[1]


def _write_svg(path: Path, text: str) -> Path:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def _out(config: ExperimentConfig) -> Path:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- data -----------------------------------------------------------------


@dataclass(frozen=True)
class DataModel:
    """Data distribution plus its exact score.

    ``q0`` is set for Gaussian data; point-cloud data carries ``centers`` and
    an isotropic ``var_floor`` jitter.
    """

    q0: Optional[GaussianSpec]
    centers: Optional[np.ndarray]
    var_floor: float
    exact: ScoreModel

    @property
    def d(self) -> int:
        return self.exact.d

    def initial(self, n: int, seed: int):
        if self.q0 is not None:
            return self.q0
        rng = np.random.default_rng(derive_seed(seed, "jitter"))
        idx = np.arange(n) % self.centers.shape[0]
        return self.centers[idx] + math.sqrt(self.var_floor) * rng.standard_normal((n, self.d))

    def reference_samples(self, n: int, original: np.ndarray) -> np.ndarray:
        """Sample set the recovered output is compared against.

        Gaussian data uses the n-point quantile grid of q0, i.e. the exact
        law; point clouds fall back to the persisted original samples.
        """
        if self.q0 is None:
            return original
        u = (np.arange(n) + 0.5) / n
        return self.q0.mean + self.q0.std * ndtri(u)[:, None]


def make_data(config: ExperimentConfig) -> DataModel:
    if config.data == "gaussian":
        q0 = config.gaussian_data()
        return DataModel(q0, None, config.var_floor, GaussianScore(q0))
    # y = x with x ~ Uniform[-2, 2]
    rng = np.random.default_rng(derive_seed(config.master_seed, "line-data"))
    x = rng.uniform(-2.0, 2.0, config.n_points)
    centers = np.stack([x, x], axis=1)
    centers.setflags(write=False)
    return DataModel(None, centers, config.var_floor, EmpiricalScore(centers, config.var_floor))


def make_score(data: DataModel, kind: str, config: ExperimentConfig, grid: TimeGrid,
               eps: Optional[float] = None) -> ScoreModel:
    if kind == "exact":
        return data.exact
    if kind == "perturbed":
        eps = config.eps_score if eps is None else eps
        return perturbed_score(data.exact, eps, config.perturbation_mode,
                               seed=derive_seed(config.master_seed, "perturbation"),
                               bucket_width=grid.h)
    raise ConfigError(f"unknown score kind {kind!r}")


def _trajectory_columns(states: np.ndarray, n_plot: int, prefix: str = ""):
    names, cols = [], []
    for i in range(min(n_plot, states.shape[0])):
        for j in range(states.shape[2]):
            names.append(f"{prefix}p{i}_x{j}")
            cols.append(states[i, :, j])
    return names, cols


# --- stages ---------------------------------------------------------------


def run_forward(config: ExperimentConfig) -> FigureBundle:
    """Noise the data to time T; persist original and terminal samples."""
    out = _out(config)
    data = make_data(config)
    grid = TimeGrid(config.T, config.N)
    seed = derive_seed(config.master_seed, "forward")
    batch = simulate_batch(data.initial(config.n_paths, config.master_seed), None, grid,
                           config.n_paths, seed, "forward", workers=config.workers)
    bundle = FigureBundle()
    names, cols = _trajectory_columns(batch.states, config.n_plot_paths)
    bundle.tables["trajectories_forward"] = write_csv(
        out / "trajectories_forward.csv", ["step", "time", *names],
        [np.arange(grid.N + 1), grid.times(), *cols])
    _write_samples(out / "samples" / "forward_initial.csv", batch.initial)
    _write_samples(out / "samples" / "forward_terminal.csv", batch.terminal)
    term = fit_gaussian(batch.terminal)
    bundle.metrics["forward_terminal_mean"] = term.mean.tolist()
    bundle.metrics["forward_terminal_var"] = term.var.tolist()
    if config.emit_svg:
        series = [("coord 0" if i == 0 else "", grid.times(), batch.states[i, :, 0])
                  for i in range(min(config.n_plot_paths, len(batch)))]
        bundle.plots["trajectories_forward"] = _write_svg(
            out / "trajectories_forward.svg",
            svg.line_plot(series, "Forward OU trajectories from q to q_T", "time t", "x",
                          legend=False, stroke_width=0.8, colors=["#1f77b4"], opacity=0.5))
    log.info("forward: %d paths, terminal mean %s var %s", len(batch), term.mean, term.var)
    return bundle


def run_reverse(config: ExperimentConfig, score_kinds: Sequence[str] = ("exact", "perturbed"),
                init_kind: str = "true_qT") -> FigureBundle:
    """Denoise with EM and DDPM samplers for each score kind."""
    out = _out(config)
    data = make_data(config)
    grid = TimeGrid(config.T, config.N)
    d, n = data.d, config.n_paths
    original = _read_samples(out / "samples" / "forward_initial.csv") if (
        data.q0 is None or init_kind == "true_qT") else None
    if init_kind == "true_qT":
        init = _read_samples(out / "samples" / "forward_terminal.csv")
        if init.shape != (n, d):
            raise ConfigError(f"forward samples have shape {init.shape}, expected {(n, d)}")
        noised = init
    elif init_kind == "standard_gaussian":
        init = GaussianSpec.standard(d)
        noised = None
    else:
        raise ConfigError(f"unknown init kind {init_kind!r}")

    seed = derive_seed(config.master_seed, "reverse")
    runs = {}
    for kind in score_kinds:
        drift = reverse_drift(make_score(data, kind, config, grid), grid)
        for sampler in SAMPLERS:
            batch = simulate_batch(init, drift, grid, n, seed, sampler, workers=config.workers)
            runs[f"{sampler}_{kind}"] = batch
            _write_samples(out / "samples" / f"reverse_{sampler}_{kind}.csv", batch.terminal)
            if noised is None:
                noised = batch.initial

    bundle = FigureBundle()
    reference = data.reference_samples(n, original)
    for name, batch in runs.items():
        w2 = [empirical_w2_1d(reference[:, j], batch.terminal[:, j]) for j in range(d)]
        bundle.metrics[f"recovery_w2_{name}"] = w2

    names, cols = ["step", "time"], [np.arange(grid.N + 1), grid.T - grid.times()]
    for name, batch in runs.items():
        nm, cl = _trajectory_columns(batch.states, config.n_plot_paths, prefix=f"{name}_")
        names += nm
        cols += cl
    bundle.tables["trajectories_reverse"] = write_csv(out / "trajectories_reverse.csv", names, cols)

    sets = {"original": reference if original is None else original, "noised": noised}
    sets.update({name: b.terminal for name, b in runs.items()})
    h_names = ["coord", "bin_left", "bin_right", *sets]
    h_cols: List[list] = [[] for _ in h_names]
    edges_by_coord = []
    for j in range(d):
        lo = min(float(s[:, j].min()) for s in sets.values())
        hi = max(float(s[:, j].max()) for s in sets.values())
        edges = np.linspace(lo, hi, config.hist_bins + 1)
        edges_by_coord.append(edges)
        dens = [np.histogram(s[:, j], bins=edges, density=True)[0] for s in sets.values()]
        for b in range(config.hist_bins):
            row = [j, edges[b], edges[b + 1], *(dd[b] for dd in dens)]
            for col, v in zip(h_cols, row):
                col.append(v)
    bundle.tables["reconstruction_histograms"] = write_csv(
        out / "reconstruction_histograms.csv", h_names, h_cols)

    if config.emit_svg:
        series = []
        for idx, (name, batch) in enumerate(runs.items()):
            for i in range(min(config.n_plot_paths, n)):
                series.append((name if i == 0 else "", grid.times(), batch.states[i, :, 0]))
        colors = []
        for idx in range(len(runs)):
            colors += [svg.PALETTE[idx]] * min(config.n_plot_paths, n)
        bundle.plots["trajectories_reverse"] = _write_svg(
            out / "trajectories_reverse.svg",
            svg.line_plot(series, "Reverse trajectories from q_T back to q", "reverse step time", "x",
                          stroke_width=0.8, colors=colors, opacity=0.5))
        edges = edges_by_coord[0]
        hist = [svg.step_series(name, list(edges),
                                np.histogram(s[:, 0], bins=edges, density=True)[0])
                for name, s in sets.items()]
        bundle.plots["reconstruction_histograms"] = _write_svg(
            out / "reconstruction_histograms.svg",
            svg.line_plot(hist, "Original vs recovered distribution (coord 0)", "x", "density"))
    log.info("reverse: %s", {k: v for k, v in bundle.metrics.items()})
    return bundle


def run_kl(config: ExperimentConfig) -> FigureBundle:
    """Path KL between perturbed-score (P) and exact-score (Q) reverse EM chains."""
    out = _out(config)
    data = make_data(config)
    grid = TimeGrid(config.T, config.N)
    if data.q0 is not None:
        init = forward_marginal(data.q0, config.T)
    else:
        init = _read_samples(out / "samples" / "forward_terminal.csv")
    b = reverse_drift(make_score(data, "perturbed", config, grid), grid)
    b_prime = reverse_drift(data.exact, grid)
    batch = simulate_batch(init, b, grid, config.n_paths, derive_seed(config.master_seed, "kl"),
                           "em", workers=config.workers)
    formula, mc = both_estimates(batch, b, b_prime)

    mismatch = np.empty(grid.N)
    for k in range(grid.N):
        db = b(k, batch.states[:, k]) - b_prime(k, batch.states[:, k])
        mismatch[k] = np.mean(np.sum(db * db, axis=-1))

    steps = np.arange(grid.N + 1)
    times = grid.times()
    bundle = FigureBundle()
    kl_f = np.concatenate([[0.0], formula.per_step_profile])
    kl_m = np.concatenate([[0.0], mc.per_step_profile])
    kl_se = np.concatenate([[0.0], mc.profile_std_error])
    bundle.tables["cumulative_kl"] = write_csv(out / "cumulative_kl.csv", CUMULATIVE_KL_COLUMNS,
                                               [steps, times, kl_f, kl_m, kl_se])
    bundle.tables["drift_mismatch"] = write_csv(out / "drift_mismatch.csv", DRIFT_MISMATCH_COLUMNS,
                                                [steps[:-1], times[:-1], mismatch])
    bundle.metrics.update(kl_formula=formula.value, kl_mc=mc.value, kl_mc_stderr=mc.std_error)
    if config.emit_svg:
        bundle.plots["cumulative_kl"] = _write_svg(
            out / "cumulative_kl.svg",
            svg.line_plot([("drift formula", times, kl_f), ("log-ratio MC", times, kl_m),
                           ("MC + 3 se", times, kl_m + 3 * kl_se), ("MC - 3 se", times, kl_m - 3 * kl_se)],
                          "Cumulative path KL", "reverse time elapsed", "KL (nats)"))
        bundle.plots["drift_mismatch"] = _write_svg(
            out / "drift_mismatch.svg",
            svg.line_plot([("E|b - b'|^2", times[:-1], mismatch)],
                          "Drift mismatch across time", "reverse time elapsed", "mean squared mismatch"))
    log.info("kl: formula %.6g, mc %.6g +- %.2g", formula.value, mc.value, mc.std_error)
    return bundle


def run_bound_report(config: ExperimentConfig, T_grid: Optional[Sequence[float]] = None,
                     score_kind: str = "perturbed") -> FigureBundle:
    """Measured TV of the gamma-initialised EM sampler against the composite bound.

    The bound always uses ``config.eps_score``; ``score_kind="exact"`` runs the
    sampler with the true score, for which that bound still applies.
    """
    if config.data != "gaussian":
        raise ConfigError("the bound report needs Gaussian data")
    out = _out(config)
    data = make_data(config)
    q0 = data.q0
    gamma = GaussianSpec.standard(data.d)
    kl_q_gamma = gaussian_kl(q0, gamma)
    T_grid = list(config.T_grid if T_grid is None else T_grid)
    seed = derive_seed(config.master_seed, "bound")
    cols: List[list] = [[] for _ in BOUND_COLUMNS]
    for T in T_grid:
        grid = TimeGrid(T, config.N)
        drift = reverse_drift(make_score(data, score_kind, config, grid), grid)
        batch = simulate_batch(gamma, drift, grid, config.n_paths, seed, "em", workers=config.workers)
        fit = fit_gaussian(batch.terminal)
        if data.d == 1:
            measured = gaussian_tv_1d(q0, fit)
        else:
            measured = gaussian_tv_mc(q0, fit, seed=derive_seed(seed, "tv"))[0]
        hist_tv = histogram_tv_1d(batch.terminal[:, 0], GaussianSpec(q0.mean[:1], q0.var[:1]))
        report = composite_tv_bound(T, config.eps_score, kl_q_gamma,
                                    config.c_score, config.c_init).with_measurement(measured)
        row = [T, config.eps_score, report.tv_score_term, report.tv_init_term,
               report.tv_total_bound, measured, report.satisfied, hist_tv]
        for col, v in zip(cols, row):
            col.append(v)
    bundle = FigureBundle()
    bundle.tables["bound_report"] = write_csv(out / "bound_report.csv", BOUND_COLUMNS, cols)
    bundle.metrics["bound_satisfied"] = all(cols[6])
    if config.emit_svg:
        bundle.plots["bound_report"] = _write_svg(
            out / "bound_report.svg",
            svg.line_plot([("bound", cols[0], cols[4]), ("score term", cols[0], cols[2]),
                           ("init term", cols[0], cols[3]), ("measured TV", cols[0], cols[5])],
                          f"TV bound vs measured (eps = {config.eps_score:g})", "T", "TV"))
    return bundle


def run_all(config: ExperimentConfig) -> FigureBundle:
    out = _out(config)
    bundle = FigureBundle()
    stages = [("forward", run_forward), ("reverse", run_reverse),
              ("kl", run_kl), ("bound", run_bound_report)]
    for name, fn in stages:
        try:
            bundle.merge(fn(config))
        except Exception as exc:
            raise StageError(name, exc) from exc
    with open(out / "summary.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(bundle.metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return bundle
