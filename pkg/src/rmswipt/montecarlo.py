"""Monte Carlo and finite-difference oracles for the analytic machinery.

These estimators evaluate the raw outage events (decode SINR below
threshold, harvested power below threshold) on sampled covariance errors,
independently of the closed-form reformulation they are checked against.
The error-matrix sampling convention is the channel module's, used
verbatim; draws whose perturbed gain turns negative count as outage
events, matching the event algebra of the reformulation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._checks import as_rng
from .channel import ChannelSet, sample_error_matrix, sample_error_traces
from .energy import harvest
from .robust import analytic_eh_outage, analytic_id_outage, build_constraints
from .scenario import ScenarioConfig
from .subproblems import gains

__all__ = [
    "McReport",
    "mc_id_outage",
    "mc_eh_outage",
    "mc_joint_outage",
    "check_prop2",
    "check_prop1",
    "fd_gradient_check",
    "linearization_gradient_check",
]

_CHUNK = 20_000


@dataclass(frozen=True)
class McReport:
    estimate: float
    half_width_95: float
    num_samples: int
    analytic_value: float
    z_score: float


def _report(hits: int, n: int, analytic: float) -> McReport:
    est = hits / n
    se = np.sqrt(max(est * (1 - est), analytic * (1 - analytic)) / n)
    half = 1.96 * np.sqrt(est * (1 - est) / n)
    z = (est - analytic) / se if se > 0 else (0.0 if est == analytic else np.inf)
    return McReport(est, float(half), n, float(analytic), float(z))


def _perturbed_gains(F, cov_k, error_variance, n, rng):
    """Stream of trace((cov_k + error) @ F) values over error draws."""
    base = float(np.trace(cov_k @ F).real)
    done = 0
    while done < n:
        m = min(_CHUNK, n - done)
        yield base + sample_error_traces(F, error_variance, rng, size=m)
        done += m


def mc_id_outage(F, p, rho, channels: ChannelSet, config: ScenarioConfig,
                 k: int = 0, num_samples: int = 100_000, rng=None) -> McReport:
    """Empirical decode-outage frequency of user k vs the closed form."""
    if num_samples < 10_000:
        raise ValueError("num_samples must be at least 10_000")
    rng = as_rng(rng)
    p = np.asarray(p, dtype=float)
    rho = np.asarray(rho, dtype=float)
    gamma = config.sinr_threshold
    sigma2 = config.noise_powers[k]
    delta2 = config.decoder_noise_powers[k]
    interf = p.sum() - p[k]

    hits = 0
    for t in _perturbed_gains(F, channels.covariances[k], channels.error_variance,
                              num_samples, rng):
        pos = t > 0
        sinr = np.zeros_like(t)
        denom = rho[k] * interf * t[pos] + rho[k] * sigma2 + delta2
        sinr[pos] = rho[k] * p[k] * t[pos] / denom
        hits += int(np.count_nonzero(~pos | (sinr <= gamma)))

    rcs = build_constraints(channels.covariances, p, rho, config)
    return _report(hits, num_samples, analytic_id_outage(F, rcs, k))


def mc_eh_outage(F, p, rho, channels: ChannelSet, config: ScenarioConfig,
                 k: int = 0, num_samples: int = 100_000, rng=None) -> McReport:
    """Empirical harvest-outage frequency of user k vs the closed form."""
    if num_samples < 10_000:
        raise ValueError("num_samples must be at least 10_000")
    rng = as_rng(rng)
    p = np.asarray(p, dtype=float)
    rho = np.asarray(rho, dtype=float)
    sigma2 = config.noise_powers[k]
    params = config.eh_params[k]
    threshold = config.energy_threshold

    hits = 0
    for t in _perturbed_gains(F, channels.covariances[k], channels.error_variance,
                              num_samples, rng):
        x = (1.0 - rho[k]) * (p.sum() * t + sigma2)
        pos = x >= 0
        harvested = np.zeros_like(x)
        harvested[pos] = harvest(x[pos], params)
        hits += int(np.count_nonzero(~pos | (harvested <= threshold)))

    rcs = build_constraints(channels.covariances, p, rho, config)
    return _report(hits, num_samples, analytic_eh_outage(F, rcs, k))


def mc_joint_outage(F, p, rho, channels: ChannelSet, config: ScenarioConfig,
                    k: int = 0, num_samples: int = 100_000,
                    rng=None) -> tuple[McReport, McReport]:
    """Decode and harvest outage of user k evaluated on one draw stream.

    Statistically equivalent to calling the two single-event estimators
    with separate streams, at half the sampling cost; the two estimates
    are correlated but each is individually exact.
    """
    if num_samples < 10_000:
        raise ValueError("num_samples must be at least 10_000")
    rng = as_rng(rng)
    p = np.asarray(p, dtype=float)
    rho = np.asarray(rho, dtype=float)
    gamma = config.sinr_threshold
    sigma2 = config.noise_powers[k]
    delta2 = config.decoder_noise_powers[k]
    params = config.eh_params[k]
    threshold = config.energy_threshold
    interf = p.sum() - p[k]

    id_hits = eh_hits = 0
    for t in _perturbed_gains(F, channels.covariances[k], channels.error_variance,
                              num_samples, rng):
        pos = t > 0
        sinr = np.zeros_like(t)
        denom = rho[k] * interf * t[pos] + rho[k] * sigma2 + delta2
        sinr[pos] = rho[k] * p[k] * t[pos] / denom
        id_hits += int(np.count_nonzero(~pos | (sinr <= gamma)))
        x = (1.0 - rho[k]) * (p.sum() * t + sigma2)
        xpos = x >= 0
        harvested = np.zeros_like(x)
        harvested[xpos] = harvest(x[xpos], params)
        eh_hits += int(np.count_nonzero(~xpos | (harvested <= threshold)))

    rcs = build_constraints(channels.covariances, p, rho, config)
    return (_report(id_hits, num_samples, analytic_id_outage(F, rcs, k)),
            _report(eh_hits, num_samples, analytic_eh_outage(F, rcs, k)))


def check_prop2(Y, entry_variance: float, num_samples: int = 100_000,
                rng=None) -> McReport:
    """Variance check of the Gaussian-trace identity.

    Samples Hermitian error matrices, forms trace(Y @ X), and reports the
    ratio of the empirical variance to entry_variance * trace(Y Y^H) in
    the ``estimate`` field (analytic value 1). The z-score uses the
    Gaussian sampling error of a variance estimate.
    """
    rng = as_rng(rng)
    Y = np.asarray(Y, dtype=complex)
    n = Y.shape[0]
    vals = np.empty(num_samples)
    done = 0
    while done < num_samples:
        m = min(_CHUNK, num_samples - done)
        errs = sample_error_matrix(n, entry_variance, rng, size=m)
        vals[done:done + m] = np.einsum("bij,ji->b", errs, Y).real
        done += m
    target = entry_variance * float(np.trace(Y @ Y.conj().T).real)
    if target == 0:
        ratio = 1.0 if np.allclose(vals, 0) else np.inf
        return McReport(float(ratio), 0.0, num_samples, 1.0, 0.0)
    ratio = float(np.var(vals) / target)
    se = np.sqrt(2.0 / (num_samples - 1))
    return McReport(ratio, float(1.96 * se), num_samples, 1.0,
                    float((ratio - 1.0) / se))


def check_prop1(channels: ChannelSet, p, rho, F, config: ScenarioConfig,
                error_variance: float | None = None, num_samples: int = 20_000,
                rng=None) -> float:
    """Worst relative error of the expected-rate closed form across users.

    Estimates each user's expected achievable rate by averaging the rate
    over sampled covariance errors, and compares against the
    deterministic expression evaluated at the estimated covariance.
    Negative perturbed quantities are floored so the log stays defined;
    the approximation quality is what is being measured.
    """
    rng = as_rng(rng)
    p = np.asarray(p, dtype=float)
    rho = np.asarray(rho, dtype=float)
    var = channels.error_variance if error_variance is None else error_variance
    worst = 0.0
    for k in range(channels.num_users):
        noise = rho[k] * config.noise_powers[k] + config.decoder_noise_powers[k]
        interf = p.sum() - p[k]
        t_k = float(np.trace(channels.covariances[k] @ np.asarray(F)).real)
        closed = np.log2(1.0 + rho[k] * p[k] * t_k
                         / (rho[k] * interf * t_k + noise))
        acc = 0.0
        for t in _perturbed_gains(F, channels.covariances[k], var,
                                  num_samples, rng):
            sinr = rho[k] * p[k] * t / np.maximum(rho[k] * interf * t + noise,
                                                  1e-300)
            acc += float(np.sum(np.log2(np.maximum(1.0 + sinr, 1e-300))))
        mc = acc / num_samples
        worst = max(worst, abs(mc - closed) / max(abs(closed), 1e-300))
    return worst


def fd_gradient_check(func, grad_inner, point, direction,
                      steps=(1e-3, 1e-4, 1e-5)):
    """Central-difference check of a directional derivative.

    ``grad_inner`` is the analytic directional derivative at ``point``
    along ``direction``. Returns (observed_order, best_relative_error,
    per-step errors). Exact (affine) cases report order ``inf``.
    """
    point = np.asarray(point, dtype=complex)
    direction = np.asarray(direction, dtype=complex)
    errs = []
    for h in steps:
        fd = (func(point + h * direction) - func(point - h * direction)) / (2 * h)
        scale = max(abs(grad_inner), 1e-300)
        errs.append(abs(fd - grad_inner) / scale)
    errs = np.asarray(errs)
    if np.all(errs < 1e-13):
        return np.inf, float(errs.min()), errs
    mask = errs > 0
    if mask.sum() >= 2:
        l_h = np.log(np.asarray(steps)[mask])
        l_e = np.log(errs[mask])
        order = float(np.polyfit(l_h, l_e, 1)[0])
    else:
        order = np.nan
    return order, float(errs.min()), errs


def linearization_gradient_check(name: str, F, p, rho, channels: ChannelSet,
                                 config: ScenarioConfig, k: int, direction,
                                 steps=(1e-3, 1e-4, 1e-5)):
    """FD check of one of the three surrogate-linearization gradients.

    ``name`` is 'coeff' (interference log in transmit matrix), 'power'
    (interference log in the allocation), or 'split' (interference log in
    user k's ratio). The checked value functions are transcribed here
    from the rate definition, independent of the subproblem builders.
    """
    from . import subproblems  # local import to keep the oracle surface slim

    p = np.asarray(p, dtype=float)
    rho = np.asarray(rho, dtype=float)
    noise = rho[k] * config.noise_powers[k] + config.decoder_noise_powers[k]
    ln2 = np.log(2.0)

    if name == "coeff":
        cov = channels.covariances[k]
        interf_pow = rho[k] * (p.sum() - p[k])

        def value(Fx):
            return np.log2(interf_pow * float(np.trace(cov @ Fx).real) + noise)

        grad = subproblems.grad_interference_log(F, p, rho, channels, k, config)
        inner = float(np.trace(grad.conj().T @ np.asarray(direction)).real)
        return fd_gradient_check(value, inner, F, direction, steps)

    if name == "power":
        t_k = float(np.trace(channels.covariances[k] @ np.asarray(F)).real)

        def value(px):
            px = np.asarray(px).real.astype(float)
            return np.log2(rho[k] * (px.sum() - px[k]) * t_k + noise)

        denom = rho[k] * (p.sum() - p[k]) * t_k + noise
        slope = rho[k] * t_k / (denom * ln2)
        d = np.asarray(direction, dtype=float)
        inner = slope * (d.sum() - d[k])
        return fd_gradient_check(value, inner, p, d, steps)

    if name == "split":
        t_k = float(np.trace(channels.covariances[k] @ np.asarray(F)).real)
        interf = (p.sum() - p[k]) * t_k + config.noise_powers[k]
        delta2 = config.decoder_noise_powers[k]

        def value(rx):
            return np.log2(float(np.real(rx)) * interf + delta2)

        slope = interf / ((rho[k] * interf + delta2) * ln2)
        return fd_gradient_check(value, slope, np.array(rho[k]), np.array(1.0),
                                 steps)

    raise ValueError(f"unknown linearization '{name}'")
