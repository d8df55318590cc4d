"""Objective pieces and the three convexified subproblems of the AO loop.

The sum rate splits per user into a difference of two concave logs: the
total-received-power log and the interference-plus-noise log. Each block
subproblem keeps the first log exact and replaces the second by its
first-order expansion at the current iterate (tight there, a global upper
bound by concavity), yielding a concave maximization handled by the conic
layer:

* coefficient step - lifted matrix variable, trace/norm-cone robust
  constraints, unit diagonal cap, and a rank-one penalty whose spectral
  term enters through its linear lower bound at the expansion point;
* power step - nonnegative vector under a budget and the robust cones,
  which are second-order cones in the allocation;
* split step - box vector with per-user linear robust constraints.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from . import conic
from .channel import ChannelSet
from .energy import harvest_inverse
from .robust import RobustConstraintSet
from .scenario import ScenarioConfig

logger = logging.getLogger(__name__)

__all__ = [
    "gains",
    "sum_rate",
    "grad_interference_log",
    "spectral_lower_bound",
    "dominant_eigvec",
    "solve_coeff_subproblem",
    "solve_power_subproblem",
    "solve_split_subproblem",
    "extract_rank_one",
    "rank_residual",
    "SubproblemInfeasible",
    "RankResidualError",
]

_LN2 = np.log(2.0)


class SubproblemInfeasible(RuntimeError):
    """A block subproblem has an empty feasible set at the frozen variables."""

    def __init__(self, block: str, detail: str = ""):
        super().__init__(f"{block} subproblem infeasible{': ' + detail if detail else ''}")
        self.block = block


class RankResidualError(RuntimeError):
    pass


def gains(F, channels: ChannelSet) -> np.ndarray:
    """Per-user received-power traces Re tr(cov_k F)."""
    F = np.asarray(F)
    return np.einsum("kij,ji->k", channels.covariances, F).real


def _noise_terms(rho, config: ScenarioConfig):
    rho = np.asarray(rho, dtype=float)
    return rho * config.noise_powers + config.decoder_noise_powers


def sum_rate(F, p, rho, channels: ChannelSet, config: ScenarioConfig) -> float:
    """System sum rate (bits/s/Hz) of the expected-rate expression."""
    p = np.asarray(p, dtype=float)
    rho = np.asarray(rho, dtype=float)
    t = gains(F, channels)
    noise = _noise_terms(rho, config)
    total = rho * p.sum() * t + noise
    interf = rho * (p.sum() - p) * t + noise
    return float(np.sum(np.log2(total) - np.log2(interf)))


def grad_interference_log(F_r, p, rho, channels: ChannelSet, k: int,
                          config: ScenarioConfig) -> np.ndarray:
    """Gradient of user k's interference-plus-noise log at the expansion point."""
    p = np.asarray(p, dtype=float)
    rho = np.asarray(rho, dtype=float)
    t = gains(F_r, channels)
    interf_power = rho[k] * (p.sum() - p[k])
    denom = interf_power * t[k] + rho[k] * config.noise_powers[k] + config.decoder_noise_powers[k]
    return interf_power * channels.covariances[k] / (denom * _LN2)


def dominant_eigvec(F: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Top eigenvector with deterministic phase, its eigenvalue, and the gap.

    The eigenvector phase is fixed so its largest-magnitude entry is real
    positive, making repeated runs bit-reproducible.
    """
    w, V = np.linalg.eigh(np.asarray(F))
    u = V[:, -1]
    idx = int(np.argmax(np.abs(u)))
    phase = u[idx] / abs(u[idx]) if abs(u[idx]) > 0 else 1.0
    u = u / phase
    gap = float(w[-1] - w[-2]) if len(w) > 1 else np.inf
    return u, float(w[-1]), gap


def spectral_lower_bound(F, F_r) -> float:
    """Linear lower bound on the spectral norm of F, expanded at F_r.

    Tight at F = F_r. A near-degenerate top eigenpair of the expansion
    point is flagged with a warning; any unit eigenvector still yields a
    valid bound.
    """
    u, top, gap = dominant_eigvec(F_r)
    if gap <= 1e-9 * max(top, 1.0):
        warnings.warn("top eigenvalues of the expansion point are nearly equal; "
                      "subgradient choice is ambiguous", RuntimeWarning, stacklevel=2)
    delta = np.asarray(F) - np.asarray(F_r)
    return top + float((u.conj() @ delta @ u).real)


def rank_residual(F) -> float:
    """Trace minus spectral norm; zero exactly on rank-one PSD matrices."""
    w = np.linalg.eigvalsh(np.asarray(F))
    return float(w.sum() - w[-1])


# ---------------------------------------------------------------------------
# subproblem builders
# ---------------------------------------------------------------------------


def _robust_cones_fixed(rcs: RobustConstraintSet):
    """Norm-cone constraints on the matrix variable at frozen (p, rho)."""
    cones = []
    for k in range(rcs.num_users):
        cones.append(conic.NormCone(rcs.id_matrices[k], float(rcs.id_thresholds[k]),
                                    float(rcs.id_quantiles[k] * rcs.id_error_stds[k])))
        cones.append(conic.NormCone(rcs.eh_matrices[k], float(rcs.eh_thresholds[k]),
                                    float(rcs.eh_quantiles[k] * rcs.eh_error_stds[k])))
    return cones


def build_coeff_problem(F_r, p, rho, channels: ChannelSet, rcs: RobustConstraintSet,
                        config: ScenarioConfig, penalty: float) -> conic.ConicProblem:
    p = np.asarray(p, dtype=float)
    rho = np.asarray(rho, dtype=float)
    n = channels.num_elements
    noise = _noise_terms(rho, config)
    t_r = gains(F_r, channels)

    log_terms = []
    lin = np.zeros((n, n), dtype=complex)
    const = 0.0
    for k in range(channels.num_users):
        log_terms.append(conic.LogTerm(1.0 / _LN2,
                                       rho[k] * p.sum() * channels.covariances[k],
                                       float(noise[k])))
        grad = grad_interference_log(F_r, p, rho, channels, k, config)
        interf_r = rho[k] * (p.sum() - p[k]) * t_r[k] + noise[k]
        lin -= grad
        const += float(np.trace(grad @ F_r).real) - np.log2(interf_r)

    u, _, _ = dominant_eigvec(F_r)
    lin -= penalty * (np.eye(n, dtype=complex) - np.outer(u, u.conj()))

    constraints = [conic.DiagBox(upper=1.0)] + _robust_cones_fixed(rcs)
    return conic.ConicProblem(
        variable=conic.VariableSpec(conic.PSD_MATRIX, n),
        log_terms=tuple(log_terms),
        linear=conic.LinearObjective(lin, const),
        constraints=tuple(constraints),
    )


def solve_coeff_subproblem(F_r, p, rho, channels: ChannelSet, rcs: RobustConstraintSet,
                           config: ScenarioConfig, penalty: float):
    """One SCA step of the lifted-coefficient subproblem; returns (F, info)."""
    problem = build_coeff_problem(F_r, p, rho, channels, rcs, config, penalty)
    sol = conic.solve(problem, tolerances={"feas_tol": config.feas_tol,
                                           "obj_tol": config.obj_tol},
                      backend=config.solver_backend)
    if sol.status == "infeasible":
        raise SubproblemInfeasible("coefficient", "robust constraint set is empty")
    info = {"solution": sol, "problem": problem,
            "surrogate_before": conic.evaluate_objective(problem, np.asarray(F_r)),
            "surrogate_after": sol.objective}
    return sol.value, info


def _power_cone_data(F, rho, channels: ChannelSet, rcs: RobustConstraintSet,
                     config: ScenarioConfig, k: int):
    """ID and EH cone pieces of the power subproblem for user k."""
    K = channels.num_users
    gamma = config.sinr_threshold
    t = gains(F, channels)
    fro = float(np.linalg.norm(F))
    sig_phi = config.error_std

    combo = np.full(K, -gamma)
    combo[k] = 1.0
    id_coeff = rho[k] * t[k] * combo
    if config.error_bookkeeping == "exact":
        id_weights = combo[None, :].copy()
    else:
        mags = np.full(K, gamma)
        mags[k] = 1.0
        id_weights = np.diag(mags)
    id_cone = conic.NormCone(
        coeff=id_coeff,
        bound=float(rcs.id_thresholds[k]),
        kappa=float(rcs.id_quantiles[k] * rho[k] * sig_phi * fro),
        weights=id_weights,
    )

    eh_coeff = (1.0 - rho[k]) * t[k] * np.ones(K)
    eh_weights = (np.ones((1, K)) if config.error_bookkeeping == "exact"
                  else np.eye(K))
    eh_cone = conic.NormCone(
        coeff=eh_coeff,
        bound=float(rcs.eh_thresholds[k]),
        kappa=float(rcs.eh_quantiles[k] * (1.0 - rho[k]) * sig_phi * fro),
        weights=eh_weights,
    )
    return id_cone, eh_cone


def build_power_problem(F, p_r, rho, channels: ChannelSet, rcs: RobustConstraintSet,
                        config: ScenarioConfig) -> conic.ConicProblem:
    p_r = np.asarray(p_r, dtype=float)
    rho = np.asarray(rho, dtype=float)
    K = channels.num_users
    t = gains(F, channels)
    noise = _noise_terms(rho, config)

    log_terms = []
    lin = np.zeros(K)
    const = 0.0
    for k in range(K):
        log_terms.append(conic.LogTerm(1.0 / _LN2, rho[k] * t[k] * np.ones(K),
                                       float(noise[k])))
        interf_r = rho[k] * (p_r.sum() - p_r[k]) * t[k] + noise[k]
        slope = rho[k] * t[k] / (interf_r * _LN2)
        others = np.ones(K)
        others[k] = 0.0
        lin -= slope * others
        const += slope * (p_r.sum() - p_r[k]) - np.log2(interf_r)

    constraints = [conic.TraceInequality(np.ones(K), config.max_power, sense="<=")]
    for k in range(K):
        constraints.extend(_power_cone_data(F, rho, channels, rcs, config, k))
    return conic.ConicProblem(
        variable=conic.VariableSpec(conic.NONNEG_VECTOR, K),
        log_terms=tuple(log_terms),
        linear=conic.LinearObjective(lin, const),
        constraints=tuple(constraints),
    )


def solve_power_subproblem(F, p_r, rho, channels: ChannelSet, rcs: RobustConstraintSet,
                           config: ScenarioConfig):
    """One SCA step of the power-allocation subproblem; returns (p, info)."""
    problem = build_power_problem(F, p_r, rho, channels, rcs, config)
    sol = conic.solve(problem, tolerances={"feas_tol": config.feas_tol,
                                           "obj_tol": config.obj_tol},
                      backend=config.solver_backend)
    if sol.status == "infeasible":
        raise SubproblemInfeasible("power", "no allocation satisfies the robust cones")
    p_new = np.clip(np.asarray(sol.value, dtype=float), 0.0, None)
    info = {"solution": sol, "problem": problem,
            "surrogate_before": conic.evaluate_objective(problem, p_r),
            "surrogate_after": sol.objective}
    return p_new, info


def _split_constraint_data(F, p, channels: ChannelSet, rcs: RobustConstraintSet,
                           config: ScenarioConfig, k: int, backoff: float = 0.0):
    """Linear ID/EH constraint rows of the split subproblem for user k.

    ``backoff`` > 0 inflates both requirements multiplicatively so the
    returned ratio keeps a strict margin. Exactly binding ratios freeze
    every user's gain as a hard floor in the coefficient subproblem and
    can deadlock the rank-one penalty; a small slack (the sum rate is
    nearly flat in the ratio) keeps that subproblem free to rotate the
    beam while rank enforcement is in progress.
    """
    K = channels.num_users
    gamma = config.sinr_threshold
    sig_phi = config.error_std
    t = gains(F, channels)
    fro = float(np.linalg.norm(F))
    sigma2 = config.noise_powers[k]
    delta2 = config.decoder_noise_powers[k]
    p = np.asarray(p, dtype=float)
    interf_sum = p.sum() - p[k]
    infl = 1.0 + backoff

    if config.error_bookkeeping == "exact":
        id_spread = abs(p[k] - gamma * interf_sum)
        eh_spread = p.sum()
    else:
        id_spread = np.sqrt(p[k] ** 2 + gamma ** 2 * (np.sum(p ** 2) - p[k] ** 2))
        eh_spread = np.sqrt(np.sum(p ** 2))

    # decode: rho_k * alpha >= gamma * delta2
    alpha = ((p[k] - gamma * interf_sum) * t[k] - infl * gamma * sigma2
             - infl * float(rcs.id_quantiles[k]) * sig_phi * id_spread * fro)
    id_row = np.zeros(K)
    id_row[k] = alpha
    id_con = conic.TraceInequality(id_row, float(infl * gamma * delta2))

    # harvest: (1 - rho_k) * w >= required input power
    w = (p.sum() * t[k] + sigma2
         - infl * float(rcs.eh_quantiles[k]) * sig_phi * eh_spread * fro)
    required = infl * harvest_inverse(config.energy_threshold, config.eh_params[k])
    eh_row = np.zeros(K)
    eh_row[k] = -w
    eh_con = conic.TraceInequality(eh_row, float(required - w))
    return id_con, eh_con


def build_split_problem(F, p, rho_r, channels: ChannelSet, rcs: RobustConstraintSet,
                        config: ScenarioConfig, backoff: float = 0.0) -> conic.ConicProblem:
    rho_r = np.asarray(rho_r, dtype=float)
    p = np.asarray(p, dtype=float)
    K = channels.num_users
    t = gains(F, channels)
    sigma2 = config.noise_powers
    delta2 = config.decoder_noise_powers

    log_terms = []
    lin = np.zeros(K)
    const = 0.0
    for k in range(K):
        coeff = np.zeros(K)
        coeff[k] = p.sum() * t[k] + sigma2[k]
        log_terms.append(conic.LogTerm(1.0 / _LN2, coeff, float(delta2[k])))
        interf = (p.sum() - p[k]) * t[k] + sigma2[k]
        denom_r = rho_r[k] * interf + delta2[k]
        slope = interf / (denom_r * _LN2)
        lin[k] -= slope
        const += slope * rho_r[k] - np.log2(denom_r)

    constraints = [conic.Box(lower=0.0, upper=1.0)]
    for k in range(K):
        constraints.extend(_split_constraint_data(F, p, channels, rcs, config, k,
                                                  backoff))
    return conic.ConicProblem(
        variable=conic.VariableSpec(conic.BOX_VECTOR, K),
        log_terms=tuple(log_terms),
        linear=conic.LinearObjective(lin, const),
        constraints=tuple(constraints),
    )


def solve_split_subproblem(F, p, rho_r, channels: ChannelSet, rcs: RobustConstraintSet,
                           config: ScenarioConfig, backoff: float = 0.0):
    """One SCA step of the splitting-ratio subproblem; returns (rho, info)."""
    problem = build_split_problem(F, p, rho_r, channels, rcs, config, backoff)
    sol = conic.solve(problem, tolerances={"feas_tol": config.feas_tol,
                                           "obj_tol": config.obj_tol},
                      backend=config.solver_backend)
    if sol.status == "infeasible":
        raise SubproblemInfeasible("split", "no splitting ratio satisfies the constraints")
    rho_new = np.clip(np.asarray(sol.value, dtype=float), 0.0, 1.0)
    info = {"solution": sol, "problem": problem,
            "surrogate_before": conic.evaluate_objective(problem, rho_r),
            "surrogate_after": sol.objective}
    return rho_new, info


def extract_rank_one(F, rank_tol: float = 1e-6) -> np.ndarray:
    """Principal component of a near-rank-one PSD matrix, diagonal-capped.

    Refuses when the relative rank residual exceeds ``rank_tol`` (the
    caller should keep tightening the penalty instead). The result is
    checked to reconstruct F within 10 * rank_tol in Frobenius norm.
    """
    F = np.asarray(F)
    w, V = np.linalg.eigh(F)
    trace = float(w.sum())
    residual = trace - float(w[-1])
    if trace <= 0 or residual > rank_tol * trace:
        raise RankResidualError(
            f"rank residual {residual:.3e} exceeds {rank_tol:.1e} * trace; "
            "matrix is not near rank one")
    u = V[:, -1]
    idx = int(np.argmax(np.abs(u)))
    u = u / (u[idx] / abs(u[idx]))
    f = np.sqrt(max(w[-1], 0.0)) * u
    mags = np.abs(f)
    over = mags > 1.0
    if np.any(over):
        f[over] = f[over] / mags[over]
    err = np.linalg.norm(F - np.outer(f, f.conj()))
    if err > 10.0 * rank_tol * max(np.linalg.norm(F), 1e-300):
        raise RankResidualError(
            f"reconstruction error {err:.3e} above tolerance after extraction")
    return f
