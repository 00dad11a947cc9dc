"""Discrete-time diffusion samplers, discrete Girsanov path KL and TV bounds."""
from .sde import (GaussianSpec, PathBatch, TimeGrid, Trajectory, DriftField, NumericError,
                  constant_drift, ddpm_reverse_step, em_reverse_step, em_step, forward_marginal,
                  forward_ou_step, offset_drift, ou_drift, replay, reverse_drift, score_drift,
                  simulate_batch)
from .score import (EmpiricalScore, GaussianScore, PerturbedScore, ScoreModel, exact_score,
                    perturbed_score, score_error_norm)
from .girsanov import (KlEstimate, LogLikelihoodRatio, cross_term_estimate, cumulative_kl_profile,
                       kl_drift_formula, kl_monte_carlo, log_likelihood_ratio, transition_log_ratio)
from .metrics import (BoundReport, composite_tv_bound, contraction_check, empirical_w2_1d,
                      gaussian_kl, gaussian_tv_1d, gaussian_tv_mc, gaussian_w2, pinsker_bound,
                      talagrand_bound)
from .config import ConfigError, ExperimentConfig

__version__ = "0.1.0"
