"""Discrete-time OU diffusions: grids, Gaussian marginals, steppers and batch simulation.

Every stepper works on arrays of shape ``(..., d)`` so the same code path
serves a single state, a single trajectory replay and a block of paths.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence, Union

import numpy as np

VAR_FLOOR = 1e-6
BLOCK_SIZE = 1024
STEPPERS = ("em", "ddpm", "forward")


class NumericError(ArithmeticError):
    """Raised when a state or drift becomes non-finite."""


def _check_finite(x: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite {what}")


@dataclass(frozen=True)
class TimeGrid:
    T: float
    N: int

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValueError(f"T must be positive and finite, got {self.T}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be an integer >= 1, got {self.N}")
        object.__setattr__(self, "N", int(self.N))

    @property
    def h(self) -> float:
        return self.T / self.N

    def times(self) -> np.ndarray:
        """Grid times ``k*h`` for k = 0..N."""
        return np.arange(self.N + 1) * self.h

    def reverse_time(self, k: int) -> float:
        return self.T - k * self.h


@dataclass(frozen=True)
class GaussianSpec:
    """Diagonal Gaussian; ``var`` holds per-coordinate variances."""

    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float)).copy()
        var = np.atleast_1d(np.asarray(self.var, dtype=float)).copy()
        if var.shape == (1,) and mean.shape[0] > 1:
            var = np.full_like(mean, var[0])
        if mean.ndim != 1 or mean.shape != var.shape:
            raise ValueError(f"mean/var shape mismatch: {mean.shape} vs {var.shape}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(var))):
            raise ValueError("GaussianSpec entries must be finite")
        if np.any(var <= 0):
            raise ValueError("variances must be strictly positive")
        mean.setflags(write=False)
        var.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "var", var)

    @property
    def d(self) -> int:
        return self.mean.shape[0]

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.var)

    @classmethod
    def standard(cls, d: int) -> "GaussianSpec":
        """The standard Gaussian in ``d`` dimensions."""
        return cls(np.zeros(d), np.ones(d))

    def with_floor(self, var_floor: float = VAR_FLOOR) -> "GaussianSpec":
        return GaussianSpec(self.mean, self.var + var_floor)

    def log_density(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        z = (x - self.mean) ** 2 / self.var
        return -0.5 * np.sum(z + np.log(2 * np.pi * self.var), axis=-1)

    def __eq__(self, other):
        if not isinstance(other, GaussianSpec):
            return NotImplemented
        return np.array_equal(self.mean, other.mean) and np.array_equal(self.var, other.var)

    def __hash__(self):
        return hash((self.mean.tobytes(), self.var.tobytes()))


def forward_marginal(q0: GaussianSpec, t: float) -> GaussianSpec:
    """Law at time ``t`` of dX = -X dt + sqrt(2) dB started from ``q0``."""
    if t < 0:
        raise ValueError(f"time must be non-negative, got {t}")
    decay = math.exp(-t)
    # -expm1(-2t) keeps 1 - e^{-2t} accurate for small t
    return GaussianSpec(q0.mean * decay, q0.var * decay * decay + -math.expm1(-2.0 * t))


@dataclass(frozen=True)
class DriftField:
    """Deterministic drift ``b(k, x)`` indexed by grid step.

    ``score``/``grid`` are set for reverse-process drifts so the exponential
    (DDPM) stepper can recover the score it needs.
    """

    fn: Callable[[int, np.ndarray], np.ndarray]
    label: str = "drift"
    score: Optional[object] = None
    grid: Optional[TimeGrid] = None

    def __call__(self, k: int, x: np.ndarray) -> np.ndarray:
        return self.fn(k, x)


def ou_drift() -> DriftField:
    return DriftField(lambda k, x: -x, label="ou")


def constant_drift(value: Sequence[float]) -> DriftField:
    v = np.atleast_1d(np.asarray(value, dtype=float))

    def fn(k, x):
        if np.shape(x)[-1] != v.shape[0]:
            raise ValueError(f"constant drift has dimension {v.shape[0]}, state has {np.shape(x)[-1]}")
        return np.broadcast_to(v, np.shape(x)).copy()

    return DriftField(fn, label=f"const{v.tolist()}")


def offset_drift(base: DriftField, offset: Sequence[float], label: Optional[str] = None) -> DriftField:
    """``base`` shifted by a fixed vector; a constant drift mismatch."""
    off = np.asarray(offset, dtype=float)
    return DriftField(lambda k, x: base(k, x) + off, label=label or f"{base.label}+{off.tolist()}")


def reverse_drift(score, grid: TimeGrid) -> DriftField:
    """Reverse-SDE drift ``x + 2 s(T - kh, x)``."""

    def fn(k, x):
        return x + 2.0 * score(grid.reverse_time(k), x)

    return DriftField(fn, label=f"reverse[{getattr(score, 'label', 'score')}]", score=score, grid=grid)


def score_drift(score, grid: TimeGrid) -> DriftField:
    """Drift equal to the score itself, ``b(k, x) = s(T - kh, x)``.

    This is the chain obtained by plugging a score directly into the generic
    Euler-Maruyama process; the drift mismatch then equals the score error.
    """

    def fn(k, x):
        return score(grid.reverse_time(k), x)

    return DriftField(fn, label=f"score[{getattr(score, 'label', 'score')}]", score=score, grid=grid)


# --- steppers -------------------------------------------------------------


def em_step(x: np.ndarray, k: int, drift: DriftField, grid: TimeGrid, g: np.ndarray) -> np.ndarray:
    """Generic Euler-Maruyama step ``x + h b(k, x) + sqrt(2h) g``."""
    _check_finite(x, "state")
    h = grid.h
    b = drift(k, x)
    _check_finite(b, "drift")
    return x + h * b + math.sqrt(2.0 * h) * g


def forward_ou_step(x: np.ndarray, grid: TimeGrid, g: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    _check_finite(x, "state")
    h = grid.h
    return x + h * (-x) + math.sqrt(2.0 * h) * g


def em_reverse_step(x: np.ndarray, k: int, score, grid: TimeGrid, g: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    _check_finite(x, "state")
    h = grid.h
    s = score(grid.reverse_time(k), x)
    return x + h * (x + 2.0 * s) + math.sqrt(2.0 * h) * g


def ddpm_reverse_step(x: np.ndarray, k: int, score, grid: TimeGrid, g: np.ndarray) -> np.ndarray:
    """Exponential-integrator reverse step.

    Linear term and score are both evaluated at the current state, reverse
    time ``T - kh``; noise variance is ``e^{2h} - 1``.
    """
    x = np.asarray(x, dtype=float)
    _check_finite(x, "state")
    h = grid.h
    eh = math.exp(h)
    s = score(grid.reverse_time(k), x)
    return eh * x + 2.0 * math.expm1(h) * s + math.sqrt(math.expm1(2.0 * h)) * g


def _make_step(stepper: str, drift: Optional[DriftField], grid: TimeGrid):
    if stepper == "forward":
        return lambda x, k, g: forward_ou_step(x, grid, g)
    if drift is None:
        raise ValueError(f"stepper {stepper!r} needs a drift")
    if stepper == "em":
        return lambda x, k, g: em_step(x, k, drift, grid, g)
    if stepper == "ddpm":
        if drift.score is None:
            raise ValueError("ddpm stepper needs a reverse drift carrying a score")
        score = drift.score
        return lambda x, k, g: ddpm_reverse_step(x, k, score, grid, g)
    raise ValueError(f"unknown stepper {stepper!r}; expected one of {STEPPERS}")


# --- storage --------------------------------------------------------------


@dataclass(frozen=True)
class Trajectory:
    grid: TimeGrid
    states: np.ndarray  # (N+1, d)
    noises: np.ndarray  # (N, d)

    def __post_init__(self):
        if self.states.shape[0] != self.grid.N + 1 or self.noises.shape[0] != self.grid.N:
            raise ValueError("trajectory rows do not match grid")


@dataclass(frozen=True)
class PathBatch:
    """Paths stored as dense arrays; indexing yields :class:`Trajectory` views."""

    grid: TimeGrid
    states: np.ndarray  # (n_paths, N+1, d)
    noises: np.ndarray  # (n_paths, N, d)
    master_seed: int
    stepper: str = "em"
    label: str = ""

    def __len__(self) -> int:
        return self.states.shape[0]

    def __getitem__(self, i: int) -> Trajectory:
        return Trajectory(self.grid, self.states[i], self.noises[i])

    def __iter__(self) -> Iterator[Trajectory]:
        return (self[i] for i in range(len(self)))

    @property
    def d(self) -> int:
        return self.states.shape[2]

    @property
    def initial(self) -> np.ndarray:
        return self.states[:, 0, :]

    @property
    def terminal(self) -> np.ndarray:
        return self.states[:, -1, :]


# --- randomness -----------------------------------------------------------


def block_generator(master_seed: int, block: int) -> np.random.Generator:
    """Counter-based stream for one block of paths.

    Philox keyed by the master seed, with the block index placed in the third
    counter word, so blocks never overlap and each block is reproducible alone.
    """
    if master_seed < 0 or master_seed >= 2**64:
        raise ValueError("master_seed must be an unsigned 64-bit integer")
    return np.random.Generator(np.random.Philox(key=master_seed, counter=[0, 0, block, 0]))


def derive_seed(master_seed: int, tag: str) -> int:
    """Independent 64-bit sub-seed for a named stage of an experiment."""
    words = [ord(c) for c in tag]
    ss = np.random.SeedSequence([master_seed & 0xFFFFFFFF, master_seed >> 32, *words])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _block_draws(master_seed: int, block: int, N: int, d: int):
    rng = block_generator(master_seed, block)
    init = rng.standard_normal((BLOCK_SIZE, d))
    noise = rng.standard_normal((BLOCK_SIZE, N, d))
    return init, noise


# --- simulation -----------------------------------------------------------

Init = Union[GaussianSpec, np.ndarray]


def _simulate_block(init, step, grid, n_paths, master_seed, block, d, zero_noise):
    lo = block * BLOCK_SIZE
    hi = min(lo + BLOCK_SIZE, n_paths)
    m = hi - lo
    z0, noise = _block_draws(master_seed, block, grid.N, d)
    z0, noise = z0[:m], noise[:m]
    if zero_noise:
        noise = np.zeros_like(noise)
    if isinstance(init, GaussianSpec):
        x = init.mean + init.std * z0
    else:
        x = np.array(init[lo:hi], dtype=float)
    states = np.empty((m, grid.N + 1, d))
    states[:, 0] = x
    for k in range(grid.N):
        x = step(x, k, noise[:, k])
        states[:, k + 1] = x
    return states, noise


def simulate_batch(
    init: Init,
    drift: Optional[DriftField],
    grid: TimeGrid,
    n_paths: int,
    master_seed: int,
    stepper: str = "em",
    *,
    workers: int = 1,
    zero_noise: bool = False,
    label: str = "",
) -> PathBatch:
    """Simulate ``n_paths`` discrete paths.

    ``init`` is either a GaussianSpec (path i draws its start from its own
    stream) or an ``(n_paths, d)`` array of explicit starting points. Path
    ``i`` depends only on ``(master_seed, i)`` and the configuration, never on
    ``workers``. ``zero_noise`` is a test hook that replaces every draw by 0.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    step = _make_step(stepper, drift, grid)
    if isinstance(init, GaussianSpec):
        d = init.d
    else:
        init = np.asarray(init, dtype=float)
        if init.ndim != 2 or init.shape[0] != n_paths:
            raise ValueError(f"explicit init must have shape (n_paths, d), got {init.shape}")
        d = init.shape[1]
    if drift is not None and stepper != "forward":
        probe = drift(0, np.zeros((1, d)))
        if np.shape(probe) != (1, d):
            raise ValueError(f"drift output shape {np.shape(probe)} does not match dimension {d}")

    n_blocks = -(-n_paths // BLOCK_SIZE)

    def run(block):
        return _simulate_block(init, step, grid, n_paths, master_seed, block, d, zero_noise)

    if workers > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(n_blocks)))
    else:
        parts = [run(b) for b in range(n_blocks)]
    states = np.concatenate([p[0] for p in parts])
    noises = np.concatenate([p[1] for p in parts])
    return PathBatch(grid, states, noises, master_seed, stepper, label)


def replay(traj: Trajectory, drift: Optional[DriftField], stepper: str = "em") -> np.ndarray:
    """Re-run a stepper from ``traj.states[0]`` over the stored noises."""
    step = _make_step(stepper, drift, traj.grid)
    x = traj.states[0][None, :]
    out = [x[0]]
    for k in range(traj.grid.N):
        x = step(x, k, traj.noises[k][None, :])
        out.append(x[0])
    return np.array(out)
