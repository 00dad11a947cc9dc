"""Score functions of forward-process marginals and perturbed score oracles."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Tuple

import numpy as np

from .sde import GaussianSpec, PathBatch, forward_marginal

PERTURBATION_MODES = ("constant_offset", "random_direction")


def exact_score(q0: GaussianSpec, t: float, x: np.ndarray) -> np.ndarray:
    """Score of the OU marginal ``q_t`` for Gaussian ``q0``: ``(mu_t - x) / var_t``."""
    qt = forward_marginal(q0, t)
    x = np.asarray(x, dtype=float)
    return (qt.mean - x) / qt.var


class ScoreModel:
    """Callable ``(t, x) -> score`` with ``x`` of shape ``(..., d)``."""

    label = "score"
    d: int

    def __call__(self, t: float, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class GaussianScore(ScoreModel):
    q0: GaussianSpec
    label: str = "exact"

    @property
    def d(self) -> int:
        return self.q0.d

    def __call__(self, t, x):
        return exact_score(self.q0, t, x)


@dataclass(frozen=True, eq=False)
class EmpiricalScore(ScoreModel):
    """Exact score of OU-noised data given as a finite point cloud.

    The data law is the uniform mixture of ``N(c_i, var_floor I)``, so ``q_t``
    is a Gaussian mixture whose score is a softmax-weighted average.
    """

    centers: np.ndarray
    var_floor: float
    label: str = "exact"

    @property
    def d(self) -> int:
        return self.centers.shape[1]

    def __call__(self, t, x):
        x = np.asarray(x, dtype=float)
        decay = math.exp(-t)
        var = self.var_floor * decay * decay - math.expm1(-2.0 * t)
        mu = self.centers * decay
        diff = mu - x[..., None, :]  # (..., n, d)
        logits = -0.5 * np.sum(diff * diff, axis=-1) / var
        logits -= logits.max(axis=-1, keepdims=True)
        w = np.exp(logits)
        w /= w.sum(axis=-1, keepdims=True)
        return np.sum(w[..., None] * diff, axis=-2) / var


@dataclass(frozen=True, eq=False)
class PerturbedScore(ScoreModel):
    """``base`` plus a deviation of Euclidean norm exactly ``eps``.

    ``constant_offset`` adds ``eps * (1, ..., 1)/sqrt(d)`` everywhere.
    ``random_direction`` draws a unit direction per time bucket of width
    ``bucket_width`` from a stream keyed by ``(seed, bucket)``.
    """

    base: ScoreModel
    eps: float
    mode: str = "constant_offset"
    seed: int = 0
    bucket_width: float = 1e-3
    label: str = field(default="perturbed")

    def __post_init__(self):
        if not self.eps >= 0:
            raise ValueError(f"eps must be >= 0, got {self.eps}")
        if self.mode not in PERTURBATION_MODES:
            raise ValueError(f"unknown perturbation mode {self.mode!r}")
        if self.bucket_width <= 0:
            raise ValueError("bucket_width must be positive")

    @property
    def d(self) -> int:
        return self.base.d

    def offset(self, t: float) -> np.ndarray:
        if self.mode == "constant_offset":
            return self.eps * _diagonal_unit(self.d)
        bucket = int(round(t / self.bucket_width))
        return self.eps * _random_unit(self.seed, bucket, self.d)

    def __call__(self, t, x):
        return self.base(t, x) + self.offset(t)


@lru_cache(maxsize=None)
def _diagonal_unit(d: int) -> np.ndarray:
    u = np.ones(d) / math.sqrt(d)
    u.setflags(write=False)
    return u


@lru_cache(maxsize=65536)
def _random_unit(seed: int, bucket: int, d: int) -> np.ndarray:
    rng = np.random.default_rng([seed, bucket & 0xFFFFFFFF, (bucket >> 32) & 0xFFFFFFFF])
    while True:
        v = rng.standard_normal(d)
        n = np.linalg.norm(v)
        if n > 1e-8:
            break
    u = v / n
    u.setflags(write=False)
    return u


def perturbed_score(base: ScoreModel, eps: float, mode: str = "constant_offset",
                    seed: int = 0, bucket_width: float = 1e-3) -> PerturbedScore:
    return PerturbedScore(base, float(eps), mode, seed, bucket_width)


def score_error_norm(a: ScoreModel, b: ScoreModel, paths: PathBatch,
                     reverse: bool = True) -> Tuple[float, float]:
    """Monte Carlo estimate of ``E ||a - b||^2`` over the states of a batch.

    States ``x_{kh}`` for k = 0..N-1 are scored at reverse time ``T - kh``
    (or ``kh`` when ``reverse`` is false). Returns ``(mean, std_error)`` with
    the standard error taken across paths.
    """
    n = len(paths)
    if n == 0:
        raise ValueError("empty batch")
    grid = paths.grid
    per_path = np.zeros(n)
    for k in range(grid.N):
        t = grid.reverse_time(k) if reverse else k * grid.h
        x = paths.states[:, k]
        diff = a(t, x) - b(t, x)
        per_path += np.sum(diff * diff, axis=-1)
    per_path /= grid.N
    se = float(per_path.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return float(per_path.mean()), se
