"""Deterministic reformulation of the SINR and harvest outage constraints.

Under the Hermitian error-matrix model, the trace of (error x coefficient
matrix) is an exactly Gaussian real scalar, so each chance constraint
collapses to a margin of the form

    trace(M_k F) - threshold_k >= quantile_k * error_std_k * ||F||_F

with ``quantile = sqrt(2) * erf_inv(1 - 2*target)``. Margin nonnegativity
is equivalent to the analytic outage probability not exceeding its target.

Two error-std conventions are supported. ``exact`` propagates the single
shared error matrix per user through the linear combination, so the
analytic outage matches Monte Carlo estimates to sampling noise.
``independent`` sums the per-term variances as if each power coefficient
multiplied an independent error draw; it is kept for comparison because
it is the convention some derivations use, and the Monte Carlo harness
quantifies the gap. Both coincide for a single user.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .energy import harvest_inverse
from .scenario import ScenarioConfig

__all__ = [
    "erf_inv",
    "RobustConstraintSet",
    "build_constraints",
    "id_margin",
    "eh_margin",
    "analytic_id_outage",
    "analytic_eh_outage",
]

_SQRT_PI = np.sqrt(np.pi)


def erf_inv(y):
    """Inverse error function, accurate to better than 1e-12 absolute.

    Initial rational approximation polished by Newton steps on erf.
    Odd in y; domain is the open interval (-1, 1).
    """
    y_arr = np.asarray(y, dtype=float)
    if np.any(np.abs(y_arr) >= 1.0):
        raise ValueError("erf_inv is defined on (-1, 1)")
    out = _erf_inv_guess(y_arr)
    for _ in range(3):
        out = out - (erf(out) - y_arr) * _SQRT_PI / 2.0 * np.exp(out * out)
    return float(out) if np.isscalar(y) or y_arr.ndim == 0 else out


def _erf_inv_guess(y):
    # Winitzki-style log approximation, ~1e-3 relative accuracy
    a = 0.147
    log1my2 = np.log1p(-y * y)
    term = 2.0 / (np.pi * a) + 0.5 * log1my2
    return np.sign(y) * np.sqrt(np.sqrt(term * term - log1my2 / a) - term)


@dataclass(frozen=True)
class RobustConstraintSet:
    """Frozen per-user data of both outage constraints at a given (p, rho)."""

    id_matrices: np.ndarray  # (K, N, N) signal-minus-weighted-interference covariances
    eh_matrices: np.ndarray  # (K, N, N) harvest-branch covariances
    id_thresholds: np.ndarray  # (K,) W
    eh_thresholds: np.ndarray  # (K,) W
    id_error_stds: np.ndarray  # (K,)
    eh_error_stds: np.ndarray  # (K,)
    id_quantiles: np.ndarray  # (K,) sqrt(2)*erf_inv(1 - 2*zeta)
    eh_quantiles: np.ndarray  # (K,)
    power: np.ndarray  # (K,) allocation the set was built at
    split: np.ndarray  # (K,) splitting ratios the set was built at

    @property
    def num_users(self) -> int:
        return self.id_matrices.shape[0]


def build_constraints(covariances, p, rho, config: ScenarioConfig) -> RobustConstraintSet:
    """Assemble the deterministic constraint data at allocation (p, rho)."""
    cov = np.asarray(covariances, dtype=complex)
    p = np.asarray(p, dtype=float)
    rho = np.asarray(rho, dtype=float)
    K = cov.shape[0]
    if np.any(p < 0):
        raise ValueError("power allocation must be nonnegative")
    if np.any((rho < 0) | (rho > 1)):
        raise ValueError("splitting ratios must lie in [0, 1]")
    gamma = config.sinr_threshold
    sigma2 = config.noise_powers
    delta2 = config.decoder_noise_powers
    sig_phi = config.error_std
    total = p.sum()
    interf = total - p

    id_mats = np.empty_like(cov)
    eh_mats = np.empty_like(cov)
    for k in range(K):
        id_mats[k] = rho[k] * (p[k] - gamma * interf[k]) * cov[k]
        eh_mats[k] = (1.0 - rho[k]) * total * cov[k]

    c = rho * gamma * sigma2 + gamma * delta2
    inv = np.array([harvest_inverse(config.energy_threshold, prm)
                    for prm in config.eh_params])
    phi = inv - (1.0 - rho) * sigma2

    if config.error_bookkeeping == "exact":
        sigma_e = rho * sig_phi * np.abs(p - gamma * interf)
        beta_e = (1.0 - rho) * sig_phi * total
    else:
        sigma_e = rho * sig_phi * np.sqrt(p ** 2 + gamma ** 2 * (np.sum(p ** 2) - p ** 2))
        beta_e = (1.0 - rho) * sig_phi * np.sqrt(np.sum(p ** 2))

    zeta = config.id_targets
    eps = config.eh_targets
    return RobustConstraintSet(
        id_matrices=id_mats,
        eh_matrices=eh_mats,
        id_thresholds=c,
        eh_thresholds=phi,
        id_error_stds=sigma_e,
        eh_error_stds=beta_e,
        id_quantiles=np.sqrt(2.0) * erf_inv(1.0 - 2.0 * zeta),
        eh_quantiles=np.sqrt(2.0) * erf_inv(1.0 - 2.0 * eps),
        power=p.copy(),
        split=rho.copy(),
    )


def _real_trace(A, F) -> float:
    return float(np.trace(A @ F).real)


def id_margin(F, rcs: RobustConstraintSet, k: int) -> float:
    """Slack of user k's decoding constraint; >= 0 means satisfied."""
    return (
        _real_trace(rcs.id_matrices[k], F)
        - rcs.id_thresholds[k]
        - rcs.id_quantiles[k] * rcs.id_error_stds[k] * np.linalg.norm(F)
    )


def eh_margin(F, rcs: RobustConstraintSet, k: int) -> float:
    """Slack of user k's harvest constraint; >= 0 means satisfied."""
    return (
        _real_trace(rcs.eh_matrices[k], F)
        - rcs.eh_thresholds[k]
        - rcs.eh_quantiles[k] * rcs.eh_error_stds[k] * np.linalg.norm(F)
    )


def _outage(numerator: float, std: float, fro: float) -> float:
    if fro <= 0:
        raise ValueError("coefficient matrix is degenerate (zero Frobenius norm)")
    if std <= 0:
        return 0.5 if numerator == 0 else (0.0 if numerator > 0 else 1.0)
    return 0.5 - 0.5 * erf(numerator / (np.sqrt(2.0) * std * fro))


def analytic_id_outage(F, rcs: RobustConstraintSet, k: int) -> float:
    """Closed-form probability that user k's SINR falls below threshold."""
    fro = np.linalg.norm(F)
    num = _real_trace(rcs.id_matrices[k], F) - rcs.id_thresholds[k]
    return _outage(num, rcs.id_error_stds[k], fro)


def analytic_eh_outage(F, rcs: RobustConstraintSet, k: int) -> float:
    """Closed-form probability that user k's harvest falls below threshold."""
    fro = np.linalg.norm(F)
    num = _real_trace(rcs.eh_matrices[k], F) - rcs.eh_thresholds[k]
    return _outage(num, rcs.eh_error_stds[k], fro)
