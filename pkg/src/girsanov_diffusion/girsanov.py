"""Discrete Girsanov likelihood ratios and path-space KL estimators.

For two Euler-Maruyama chains

    x_{k+1} = x_k + h b(k, x_k)  + sqrt(2h) g_k
    x_{k+1} = x_k + h b'(k, x_k) + sqrt(2h) g'_k

the log-likelihood ratio of a path generated by the first chain is

    log P/Q = sum_k [ h/4 ||db_k||^2 + (1/sqrt 2) <sqrt(h) g_k, db_k> ]

with ``db_k = b(k, x_k) - b'(k, x_k)``. The cross term has zero mean under P,
so ``KL(P || Q) = E_P[ h/4 sum_k ||db_k||^2 ]``. Normalising constants of the
Gaussian transitions cancel and are never formed; everything stays in log space.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .sde import DriftField, PathBatch, TimeGrid, Trajectory


@dataclass(frozen=True)
class LogLikelihoodRatio:
    per_step: np.ndarray

    @property
    def total(self) -> float:
        return float(np.sum(self.per_step))


@dataclass(frozen=True)
class KlEstimate:
    """KL value in nats with its Monte Carlo standard error.

    ``per_step_profile[k]`` is the KL accumulated over steps 0..k;
    ``profile_std_error`` gives the matching standard errors.
    """

    value: float
    std_error: float
    n_paths: int
    per_step_profile: np.ndarray
    profile_std_error: Optional[np.ndarray] = None


def _check_grid(grid: TimeGrid, *drifts: DriftField) -> None:
    for b in drifts:
        if b.grid is not None and b.grid != grid:
            raise ValueError(f"drift {b.label!r} is defined on {b.grid}, trajectory uses {grid}")


def _step_terms(states: np.ndarray, noises: np.ndarray, grid: TimeGrid,
                b: DriftField, b_prime: DriftField) -> Tuple[np.ndarray, np.ndarray]:
    """Quadratic and cross terms, each of shape ``states.shape[:-2] + (N,)``."""
    _check_grid(grid, b, b_prime)
    h = grid.h
    sqrt_h = math.sqrt(h)
    quad = np.empty(states.shape[:-2] + (grid.N,))
    cross = np.empty_like(quad)
    for k in range(grid.N):
        x = states[..., k, :]
        db = b(k, x) - b_prime(k, x)
        quad[..., k] = 0.25 * h * np.sum(db * db, axis=-1)
        cross[..., k] = np.sum((sqrt_h * noises[..., k, :]) * db, axis=-1) / math.sqrt(2.0)
    return quad, cross


def log_likelihood_ratio(traj: Trajectory, b: DriftField, b_prime: DriftField) -> LogLikelihoodRatio:
    """Per-step ``log P/Q`` for a trajectory generated under drift ``b``."""
    quad, cross = _step_terms(traj.states, traj.noises, traj.grid, b, b_prime)
    return LogLikelihoodRatio(quad + cross)


def transition_log_ratio(traj: Trajectory, b: DriftField, b_prime: DriftField) -> float:
    """Same quantity from the Gaussian transition densities, ignoring stored noise.

    Sums ``log phi(x_{k+1}; x_k + h b, 2h I) - log phi(x_{k+1}; x_k + h b', 2h I)``.
    """
    h = traj.grid.h
    total = 0.0
    for k in range(traj.grid.N):
        x, y = traj.states[k], traj.states[k + 1]
        r = y - (x + h * b(k, x[None])[0])
        rp = y - (x + h * b_prime(k, x[None])[0])
        total += (np.dot(rp, rp) - np.dot(r, r)) / (4.0 * h)
    return float(total)


def _check_batch(batch: PathBatch) -> None:
    if len(batch) == 0:
        raise ValueError("empty batch")


def _path_estimate(per_path_steps: np.ndarray) -> KlEstimate:
    n = per_path_steps.shape[0]
    cum = np.cumsum(per_path_steps, axis=1)
    profile = cum.mean(axis=0)
    if n > 1:
        profile_se = cum.std(axis=0, ddof=1) / math.sqrt(n)
    else:
        profile_se = np.zeros_like(profile)
    return KlEstimate(float(profile[-1]), float(profile_se[-1]), n, profile, profile_se)


def kl_drift_formula(batch: PathBatch, b: DriftField, b_prime: DriftField) -> KlEstimate:
    """``KL(P || Q) = E_P[ h/4 sum_k ||b - b'||^2 ]`` averaged over the batch.

    The batch must have been simulated under ``b``.
    """
    _check_batch(batch)
    quad, _ = _step_terms(batch.states, batch.noises, batch.grid, b, b_prime)
    return _path_estimate(quad)


def kl_monte_carlo(batch: PathBatch, b: DriftField, b_prime: DriftField) -> KlEstimate:
    """Batch average of the full log-likelihood ratio, cross term included."""
    _check_batch(batch)
    quad, cross = _step_terms(batch.states, batch.noises, batch.grid, b, b_prime)
    return _path_estimate(quad + cross)


def cross_term_estimate(batch: PathBatch, b: DriftField, b_prime: DriftField) -> KlEstimate:
    """Batch average of the cross terms alone; zero in expectation under P."""
    _check_batch(batch)
    _, cross = _step_terms(batch.states, batch.noises, batch.grid, b, b_prime)
    return _path_estimate(cross)


def cumulative_kl_profile(batch: PathBatch, b: DriftField, b_prime: DriftField) -> np.ndarray:
    est = kl_drift_formula(batch, b, b_prime)
    return np.concatenate([[0.0], est.per_step_profile])


def both_estimates(batch: PathBatch, b: DriftField, b_prime: DriftField) -> Tuple[KlEstimate, KlEstimate]:
    """Formula and Monte Carlo estimates from a single pass over the drifts."""
    _check_batch(batch)
    quad, cross = _step_terms(batch.states, batch.noises, batch.grid, b, b_prime)
    return _path_estimate(quad), _path_estimate(quad + cross)
