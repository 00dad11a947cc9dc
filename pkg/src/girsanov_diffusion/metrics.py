"""Distances between distributions and the TV bound calculators."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy.special import ndtr

from .sde import GaussianSpec, block_generator, forward_marginal


def _same_dim(p: GaussianSpec, q: GaussianSpec) -> None:
    if p.d != q.d:
        raise ValueError(f"dimension mismatch: {p.d} vs {q.d}")


def _nonneg(name: str, value: float) -> None:
    if not value >= 0:
        raise ValueError(f"{name} must be non-negative, got {value}")


def gaussian_kl(p: GaussianSpec, q: GaussianSpec) -> float:
    """KL(p || q) for diagonal Gaussians, in nats."""
    _same_dim(p, q)
    ratio = p.var / q.var
    terms = ratio + (p.mean - q.mean) ** 2 / q.var - 1.0 - np.log(ratio)
    return float(0.5 * np.sum(terms))


def gaussian_w2(p: GaussianSpec, q: GaussianSpec) -> float:
    _same_dim(p, q)
    return float(math.sqrt(np.sum((p.mean - q.mean) ** 2) + np.sum((p.std - q.std) ** 2)))


def _crossings(m1, s1, m2, s2) -> List[float]:
    """Points where the densities N(m1, s1^2) and N(m2, s2^2) are equal."""
    if s1 == s2:
        return [] if m1 == m2 else [0.5 * (m1 + m2)]
    # log phi1 - log phi2 = 0 as a quadratic a x^2 + b x + c
    a = 1.0 / (2 * s2 * s2) - 1.0 / (2 * s1 * s1)
    b = m1 / (s1 * s1) - m2 / (s2 * s2)
    c = m2 * m2 / (2 * s2 * s2) - m1 * m1 / (2 * s1 * s1) + math.log(s2 / s1)
    disc = b * b - 4 * a * c
    if disc <= 0:
        return []
    r = math.sqrt(disc)
    # numerically stable quadratic roots
    qq = -0.5 * (b + math.copysign(r, b))
    roots = [qq / a, c / qq] if qq != 0 else [-b / (2 * a)]
    return sorted(roots)


def gaussian_tv_1d(p: GaussianSpec, q: GaussianSpec) -> float:
    """Total variation between 1D Gaussians.

    The line is split at the density crossings; on each piece one density
    dominates, so the integral of ``|p - q|`` reduces to CDF differences.
    """
    if p.d != 1 or q.d != 1:
        raise ValueError("gaussian_tv_1d needs one-dimensional Gaussians")
    # canonical argument order makes the result exactly symmetric
    (m1, s1), (m2, s2) = sorted([(float(p.mean[0]), float(p.std[0])),
                                 (float(q.mean[0]), float(q.std[0]))])
    if m1 == m2 and s1 == s2:
        return 0.0
    if s1 == s2:
        return float(2.0 * ndtr(abs(m2 - m1) / (2.0 * s1)) - 1.0)
    edges = [-math.inf] + _crossings(m1, s1, m2, s2) + [math.inf]
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        mass_p = ndtr((hi - m1) / s1) - ndtr((lo - m1) / s1)
        mass_q = ndtr((hi - m2) / s2) - ndtr((lo - m2) / s2)
        total += abs(mass_p - mass_q)
    return float(min(1.0, 0.5 * total))


def gaussian_tv_mc(p: GaussianSpec, q: GaussianSpec, n_samples: int = 100_000,
                   seed: int = 0) -> Tuple[float, float]:
    """Monte Carlo TV for diagonal Gaussians in any dimension.

    Uses ``TV = E_p[max(0, 1 - q(x)/p(x))]``; returns ``(value, std_error)``.
    """
    _same_dim(p, q)
    rng = block_generator(seed, 0)
    x = p.mean + p.std * rng.standard_normal((n_samples, p.d))
    log_ratio = q.log_density(x) - p.log_density(x)
    vals = np.maximum(0.0, -np.expm1(np.minimum(log_ratio, 0.0)))
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_samples))


def empirical_w2_1d(samples_a, samples_b) -> float:
    """Exact W2 between two equal-size 1D empirical measures (sorted coupling)."""
    a = np.sort(np.asarray(samples_a, dtype=float).ravel())
    b = np.sort(np.asarray(samples_b, dtype=float).ravel())
    if a.shape != b.shape:
        raise ValueError(f"sample sizes differ: {a.size} vs {b.size}")
    if a.size < 2:
        raise ValueError("need at least two samples")
    return float(math.sqrt(np.mean((a - b) ** 2)))


def histogram_tv_1d(samples, target: GaussianSpec, bins: int = 60) -> float:
    """Histogram TV between samples and a 1D Gaussian; a model-free diagnostic."""
    x = np.asarray(samples, dtype=float).ravel()
    m, s = float(target.mean[0]), float(target.std[0])
    lo, hi = m - 6 * s, m + 6 * s
    edges = np.linspace(lo, hi, bins + 1)
    counts, _ = np.histogram(x, bins=edges)
    emp = counts / x.size
    cdf = ndtr((edges - m) / s)
    ref = np.diff(cdf)
    outside_emp = 1.0 - emp.sum()
    outside_ref = 1.0 - ref.sum()
    return float(0.5 * (np.abs(emp - ref).sum() + abs(outside_emp - outside_ref)))


def fit_gaussian(samples) -> GaussianSpec:
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return GaussianSpec(x.mean(axis=0), x.var(axis=0, ddof=1))


def pinsker_bound(kl: float) -> float:
    _nonneg("kl", kl)
    return math.sqrt(kl / 2.0)


def talagrand_bound(kl_to_gamma: float) -> float:
    _nonneg("kl", kl_to_gamma)
    return math.sqrt(2.0 * kl_to_gamma)


def contraction_check(q0: GaussianSpec, times: Sequence[float]) -> List[Tuple[float, float, float, bool]]:
    """Rows ``(t, W2(q_t, gamma), e^{-t} W2(q0, gamma), ok)``."""
    gamma = GaussianSpec.standard(q0.d)
    w0 = gaussian_w2(q0, gamma)
    rows = []
    for t in times:
        if t < 0:
            raise ValueError(f"negative time {t}")
        lhs = gaussian_w2(forward_marginal(q0, t), gamma)
        rhs = math.exp(-t) * w0
        # absolute slack covers q0 = gamma, where both sides are 0 up to rounding
        rows.append((float(t), lhs, rhs, lhs <= rhs * (1 + 1e-9) + 1e-12))
    return rows


@dataclass(frozen=True)
class BoundReport:
    tv_score_term: float
    tv_init_term: float
    measured_tv: float = math.nan
    satisfied: bool = False

    @property
    def tv_total_bound(self) -> float:
        return self.tv_score_term + self.tv_init_term

    def with_measurement(self, measured_tv: float) -> "BoundReport":
        return BoundReport(self.tv_score_term, self.tv_init_term, measured_tv,
                           bool(measured_tv <= self.tv_total_bound))


def composite_tv_bound(T: float, eps: float, kl_q_gamma: float,
                       c_score: float = 1.0, c_init: float = 1.0) -> BoundReport:
    """``c_score sqrt(T) eps + c_init e^{-T} sqrt(2 KL(q || gamma))``, terms kept separate."""
    for name, v in (("T", T), ("eps", eps), ("kl_q_gamma", kl_q_gamma),
                    ("c_score", c_score), ("c_init", c_init)):
        _nonneg(name, v)
    score_term = c_score * math.sqrt(T) * eps
    init_term = c_init * math.exp(-T) * math.sqrt(2.0 * kl_q_gamma)
    return BoundReport(score_term, init_term)
