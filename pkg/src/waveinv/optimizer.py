"""Conjugate-gradient reconstruction loop and its adaptive multi-level driver.

One iteration solves the forward problem at the current coefficients,
extracts the simulated boundary trace, solves the adjoint problem driven by
the trace residual, assembles the gradients, and moves along
Fletcher-Reeves directions with the step size

    alpha = -(g, d) / (gamma (d, d))

clamped to [-alpha_max, alpha_max] and guarded by halving backtracks when
the functional would increase.  Every update is projected back onto the
admissible box with FRAME nodes pinned.  The regularization weights decay
as gamma^m = gamma^0 / (m+1)^p.

The adaptive driver repeats the loop over nested factor-2 grids, refining
whenever the indicator |h (v - background)| (or |h v| in absolute mode)
reaches a fraction of its maximum over cells, and transfers iterates and
observations to each new grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .adjoint import solve_adjoint
from .fields import (
    AdmissibleSet,
    BoundaryTrace,
    CoefficientField,
    extract_trace,
    project,
    transfer_to_refined,
)
from .forward import BcConfig, SourceSpec, solve_forward
from .grid import Grid2D, RegionMask, refine, region_mask
from .gradient import assemble_gradients
from .objective import (
    ErrorMetrics,
    RegularizationParams,
    error_metrics,
    field_dot,
    field_norm,
    spacetime_norm,
    tikhonov,
    trace_norm_sq,
)

LOG_HEADER = (
    "m,F,e_eps_l2,e_eps_sup,e_sigma_l2,e_sigma_sup,e_E_l2,e_E_sup,"
    "g_eps_norm,g_sigma_norm,lambda_norm,gamma_eps,gamma_sigma,alpha_eps,alpha_sigma"
)

LEVELS_HEADER = "level,nno,g_eps_norm_per_node,g_sigma_norm_per_node,max_eps,max_sigma,M_k"


@dataclass(frozen=True)
class StoppingTolerances:
    """Update-size (eta1) and gradient-norm (eta2) tolerances plus the
    iteration cap; the loop stops as soon as any single tolerance fires."""

    eta1_eps: float = 1e-8
    eta1_sigma: float = 1e-8
    eta2_eps: float = 1e-8
    eta2_sigma: float = 1e-8
    m_max: int = 100

    def __post_init__(self) -> None:
        if min(self.eta1_eps, self.eta1_sigma, self.eta2_eps, self.eta2_sigma) < 0:
            raise ValueError("tolerances must be >= 0")
        if self.m_max < 0:
            raise ValueError("m_max must be >= 0")


@dataclass(frozen=True)
class InverseProblem:
    """Everything one reconstruction needs besides the iterates themselves."""

    grid: Grid2D
    mask: RegionMask
    adm: AdmissibleSet
    src: SourceSpec
    bc: BcConfig
    obs: BoundaryTrace
    reg: RegularizationParams
    eps_init: CoefficientField
    sigma_init: CoefficientField
    eps_true: CoefficientField | None = None
    sigma_true: CoefficientField | None = None
    alpha_max: float = 1.0
    beta_max: float = 10.0
    max_backtracks: int = 10


@dataclass(frozen=True)
class CgState:
    """Fully evaluated iterate m: coefficients, gradients, directions, the
    step size that the next update will take, and the decayed weights."""

    m: int
    eps: CoefficientField
    sigma: CoefficientField
    g_eps: CoefficientField
    g_sigma: CoefficientField
    d_eps: CoefficientField
    d_sigma: CoefficientField
    alpha_eps: float
    alpha_sigma: float
    gamma_eps: float
    gamma_sigma: float
    g_eps_norm: float
    g_sigma_norm: float
    F: float
    sim: BoundaryTrace
    lambda_norm: float
    restarted: bool = False
    backtracks: int = 0
    update_eps_norm: float = math.inf
    update_sigma_norm: float = math.inf


@dataclass(frozen=True)
class LogRow:
    m: int
    F: float
    metrics: ErrorMetrics
    g_eps_norm: float
    g_sigma_norm: float
    lambda_norm: float
    gamma_eps: float
    gamma_sigma: float
    alpha_eps: float
    alpha_sigma: float

    def values(self) -> list[float]:
        e = self.metrics
        return [
            self.m, self.F, e.e_eps_l2, e.e_eps_sup, e.e_sigma_l2, e.e_sigma_sup,
            e.e_E_l2, e.e_E_sup, self.g_eps_norm, self.g_sigma_norm,
            self.lambda_norm, self.gamma_eps, self.gamma_sigma,
            self.alpha_eps, self.alpha_sigma,
        ]


def step_size(g: CoefficientField, d: CoefficientField, gamma: float, grid: Grid2D) -> float:
    """Unclamped step size -(g, d) / (gamma (d, d)); zero for a zero direction."""
    dd = field_dot(d, d, grid)
    if dd == 0.0 or gamma == 0.0:
        return 0.0
    return -field_dot(g, d, grid) / (gamma * dd)


def fletcher_reeves(g_norm: float, g_prev_norm: float) -> float:
    """Squared gradient-norm ratio; zero (steepest-descent restart) when the
    previous gradient vanished."""
    if g_prev_norm == 0.0:
        return 0.0
    return (g_norm / g_prev_norm) ** 2


def _metrics(problem: InverseProblem, eps, sigma, sim) -> ErrorMetrics:
    if problem.eps_true is None or problem.sigma_true is None:
        nan = float("nan")
        num = float(np.sqrt(trace_norm_sq(sim - problem.obs)))
        den = float(np.sqrt(trace_norm_sq(sim)))
        e_l2 = num / den if den > 0 else nan
        num_s = (sim - problem.obs).max_abs()
        den_s = sim.max_abs()
        e_sup = num_s / den_s if den_s > 0 else nan
        return ErrorMetrics(nan, nan, nan, nan, e_l2, e_sup)
    return error_metrics(
        eps, sigma, problem.eps_true, problem.sigma_true, sim, problem.obs
    )


def _evaluate(
    problem: InverseProblem,
    m: int,
    eps: CoefficientField,
    sigma: CoefficientField,
    E=None,
) -> dict:
    """Forward/adjoint solves and gradient assembly for one iterate."""
    gamma_eps, gamma_sigma = problem.reg.at_iteration(m)
    if E is None:
        E = solve_forward(problem.grid, eps, sigma, problem.src, problem.bc)
    sim = extract_trace(E, problem.obs.sides)
    residual = sim - problem.obs
    F = tikhonov(sim, problem.obs, eps, sigma, problem.reg, gamma_eps, gamma_sigma)
    lam = solve_adjoint(problem.grid, eps, sigma, residual, problem.bc, problem.src)
    g_eps, g_sigma = assemble_gradients(
        E, lam, eps, sigma, problem.reg, gamma_eps, gamma_sigma, problem.mask
    )
    return {
        "gamma": (gamma_eps, gamma_sigma),
        "sim": sim,
        "F": F,
        "lambda_norm": spacetime_norm(lam),
        "g_eps": g_eps,
        "g_sigma": g_sigma,
        "g_eps_norm": field_norm(g_eps.values, problem.grid),
        "g_sigma_norm": field_norm(g_sigma.values, problem.grid),
    }


def init_state(problem: InverseProblem) -> CgState:
    """Evaluate the initial guesses and seed steepest-descent directions."""
    eps = project(problem.eps_init, problem.adm, problem.mask)
    sigma = project(problem.sigma_init, problem.adm, problem.mask)
    ev = _evaluate(problem, 0, eps, sigma)
    d_eps = ev["g_eps"].with_values(-ev["g_eps"].values)
    d_sigma = ev["g_sigma"].with_values(-ev["g_sigma"].values)
    a_e = _clamp(step_size(ev["g_eps"], d_eps, ev["gamma"][0], problem.grid), problem.alpha_max)
    a_s = _clamp(step_size(ev["g_sigma"], d_sigma, ev["gamma"][1], problem.grid), problem.alpha_max)
    return CgState(
        m=0, eps=eps, sigma=sigma,
        g_eps=ev["g_eps"], g_sigma=ev["g_sigma"],
        d_eps=d_eps, d_sigma=d_sigma,
        alpha_eps=a_e, alpha_sigma=a_s,
        gamma_eps=ev["gamma"][0], gamma_sigma=ev["gamma"][1],
        g_eps_norm=ev["g_eps_norm"], g_sigma_norm=ev["g_sigma_norm"],
        F=ev["F"], sim=ev["sim"], lambda_norm=ev["lambda_norm"],
    )


def _clamp(alpha: float, alpha_max: float) -> float:
    return float(min(max(alpha, -alpha_max), alpha_max))


def _row(state: CgState, problem: InverseProblem) -> LogRow:
    return LogRow(
        m=state.m, F=state.F,
        metrics=_metrics(problem, state.eps, state.sigma, state.sim),
        g_eps_norm=state.g_eps_norm, g_sigma_norm=state.g_sigma_norm,
        lambda_norm=state.lambda_norm,
        gamma_eps=state.gamma_eps, gamma_sigma=state.gamma_sigma,
        alpha_eps=state.alpha_eps, alpha_sigma=state.alpha_sigma,
    )


def cg_step(state: CgState, problem: InverseProblem, log: list[LogRow] | None = None) -> CgState:
    """Advance one full iteration: log the received iterate, take the
    projected update (with halving backtracks if the functional would
    increase), then evaluate the new iterate and prepare its direction."""
    if log is not None:
        log.append(_row(state, problem))

    a_e, a_s = state.alpha_eps, state.alpha_sigma
    backtracks = 0
    while True:
        eps_new = project(
            state.eps.with_values(state.eps.values + a_e * state.d_eps.values),
            problem.adm, problem.mask,
        )
        sigma_new = project(
            state.sigma.with_values(state.sigma.values + a_s * state.d_sigma.values),
            problem.adm, problem.mask,
        )
        E_new = solve_forward(problem.grid, eps_new, sigma_new, problem.src, problem.bc)
        sim_new = extract_trace(E_new, problem.obs.sides)
        F_trial = tikhonov(
            sim_new, problem.obs, eps_new, sigma_new, problem.reg,
            state.gamma_eps, state.gamma_sigma,
        )
        if F_trial <= state.F or backtracks >= problem.max_backtracks:
            break
        a_e *= 0.5
        a_s *= 0.5
        backtracks += 1

    update_eps = field_norm(eps_new.values - state.eps.values, problem.grid)
    update_sigma = field_norm(sigma_new.values - state.sigma.values, problem.grid)

    m_new = state.m + 1
    ev = _evaluate(problem, m_new, eps_new, sigma_new, E=E_new)
    beta_eps = fletcher_reeves(ev["g_eps_norm"], state.g_eps_norm)
    beta_sigma = fletcher_reeves(ev["g_sigma_norm"], state.g_sigma_norm)
    restarted = beta_eps > problem.beta_max or beta_sigma > problem.beta_max
    if restarted:
        beta_eps = beta_sigma = 0.0
    d_eps = ev["g_eps"].with_values(-ev["g_eps"].values + beta_eps * state.d_eps.values)
    d_sigma = ev["g_sigma"].with_values(
        -ev["g_sigma"].values + beta_sigma * state.d_sigma.values
    )
    a_e_new = _clamp(step_size(ev["g_eps"], d_eps, ev["gamma"][0], problem.grid), problem.alpha_max)
    a_s_new = _clamp(step_size(ev["g_sigma"], d_sigma, ev["gamma"][1], problem.grid), problem.alpha_max)
    return CgState(
        m=m_new, eps=eps_new, sigma=sigma_new,
        g_eps=ev["g_eps"], g_sigma=ev["g_sigma"],
        d_eps=d_eps, d_sigma=d_sigma,
        alpha_eps=a_e_new, alpha_sigma=a_s_new,
        gamma_eps=ev["gamma"][0], gamma_sigma=ev["gamma"][1],
        g_eps_norm=ev["g_eps_norm"], g_sigma_norm=ev["g_sigma_norm"],
        F=ev["F"], sim=ev["sim"], lambda_norm=ev["lambda_norm"],
        restarted=restarted, backtracks=backtracks,
        update_eps_norm=update_eps, update_sigma_norm=update_sigma,
    )


@dataclass(frozen=True)
class CgaResult:
    eps: CoefficientField
    sigma: CoefficientField
    log: list[LogRow]
    stop_reason: str
    final_g_eps_norm: float
    final_g_sigma_norm: float
    final_F: float
    final_sim: BoundaryTrace


def run_cga(problem: InverseProblem, tols: StoppingTolerances) -> CgaResult:
    """Iterate cg_step until a stopping tolerance fires or the cap is hit.

    One log row is appended per completed iteration; with a cap of M and no
    early stop the log holds rows m = 0..M-1 and the returned coefficients
    are the M-th iterates.
    """
    log: list[LogRow] = []
    state = init_state(problem)
    stop_reason = "m_max"
    for _ in range(tols.m_max):
        if state.g_eps_norm < tols.eta2_eps:
            stop_reason = "g_eps"
            log.append(_row(state, problem))
            break
        if state.g_sigma_norm < tols.eta2_sigma:
            stop_reason = "g_sigma"
            log.append(_row(state, problem))
            break
        state = cg_step(state, problem, log)
        if state.update_eps_norm < tols.eta1_eps:
            stop_reason = "update_eps"
            break
        if state.update_sigma_norm < tols.eta1_sigma:
            stop_reason = "update_sigma"
            break
    return CgaResult(
        eps=state.eps, sigma=state.sigma, log=log, stop_reason=stop_reason,
        final_g_eps_norm=state.g_eps_norm, final_g_sigma_norm=state.g_sigma_norm,
        final_F=state.F, final_sim=state.sim,
    )


@dataclass(frozen=True)
class RefinementFlags:
    """Cell flags from the reconstruction-magnitude indicator."""

    flags: np.ndarray
    max_eps_indicator: float
    max_sigma_indicator: float

    def any(self) -> bool:
        return bool(self.flags.any())

    def cells(self) -> list[tuple[int, int]]:
        return [tuple(c) for c in np.argwhere(self.flags)]


def refinement_flags(
    eps_h: CoefficientField,
    sigma_h: CoefficientField,
    beta_eps: float,
    beta_sigma: float,
    mode: str = "deviation",
    eps_background: float = 1.0,
    sigma_background: float = 1.0,
) -> RefinementFlags:
    """Flag every cell whose indicator |h v| (absolute mode) or
    |h (v - background)| (deviation mode), averaged over cell corners,
    reaches the beta fraction of its maximum for either coefficient.

    A field that is identically background produces no flags in deviation
    mode (the as-printed criterion would flag everything when the maximum
    is zero).
    """
    if not 0.0 < beta_eps < 1.0 or not 0.0 < beta_sigma < 1.0:
        raise ValueError("refinement fractions must lie in (0, 1)")
    if mode not in ("absolute", "deviation"):
        raise ValueError(f"unknown indicator mode {mode!r}")
    grid = eps_h.grid

    def indicator(values: np.ndarray, background: float) -> np.ndarray:
        u = np.abs(values - background) if mode == "deviation" else np.abs(values)
        cell = 0.25 * (u[:-1, :-1] + u[1:, :-1] + u[:-1, 1:] + u[1:, 1:])
        return grid.h * cell

    ind_e = indicator(eps_h.values, eps_background)
    ind_s = indicator(sigma_h.values, sigma_background)
    max_e = float(ind_e.max())
    max_s = float(ind_s.max())
    flags = np.zeros_like(ind_e, dtype=bool)
    if max_e > 0.0:
        flags |= ind_e >= beta_eps * max_e
    if max_s > 0.0:
        flags |= ind_s >= beta_sigma * max_s
    return RefinementFlags(flags=flags, max_eps_indicator=max_e, max_sigma_indicator=max_s)


@dataclass(frozen=True)
class AcgaControls:
    """Refinement fractions, indicator mode, level cap and the cross-level
    stopping tolerances of the adaptive driver."""

    n_max: int = 1
    beta_eps: float = 0.8
    beta_sigma: float = 0.8
    mode: str = "deviation"
    theta1_eps: float = 1e-8
    theta1_sigma: float = 1e-8
    theta2_eps: float = 1e-8
    theta2_sigma: float = 1e-8


@dataclass(frozen=True)
class LevelReport:
    level: int
    nno: int
    g_eps_norm_per_node: float
    g_sigma_norm_per_node: float
    max_eps: float
    max_sigma: float
    m_k: int

    def values(self) -> list[float]:
        return [
            self.level, self.nno, self.g_eps_norm_per_node,
            self.g_sigma_norm_per_node, self.max_eps, self.max_sigma, self.m_k,
        ]


@dataclass(frozen=True)
class AcgaResult:
    levels: list[LevelReport]
    level_results: list[CgaResult]
    level_flags: list[RefinementFlags]
    grids: list[Grid2D]
    eps: CoefficientField
    sigma: CoefficientField
    stop_reason: str


def run_acga(
    problem: InverseProblem,
    tols: StoppingTolerances,
    controls: AcgaControls,
    truth_builder=None,
    prior_builder=None,
) -> AcgaResult:
    """Multi-level reconstruction: run the CG loop, flag cells, refine the
    grid and transfer iterates and observations until flags vanish, a
    cross-level tolerance fires or the refinement cap is reached.

    truth_builder/prior_builder are optional callables grid -> (eps, sigma)
    used to resample the exact coefficients (for error reporting) and the
    regularization priors on refined grids; without them the priors are
    interpolated and fine-level coefficient errors are not reported.
    """
    levels: list[LevelReport] = []
    results: list[CgaResult] = []
    flags_per_level: list[RefinementFlags] = []
    grids: list[Grid2D] = []

    prob = problem
    prev: CgaResult | None = None
    stop_reason = "n_max"
    for k in range(controls.n_max + 1):
        result = run_cga(prob, tols)
        grids.append(prob.grid)
        results.append(result)
        levels.append(
            LevelReport(
                level=k,
                nno=prob.grid.n_nodes,
                g_eps_norm_per_node=result.final_g_eps_norm / prob.grid.n_nodes,
                g_sigma_norm_per_node=result.final_g_sigma_norm / prob.grid.n_nodes,
                max_eps=float(result.eps.values.max()),
                max_sigma=float(result.sigma.values.max()),
                m_k=len(result.log),
            )
        )
        flags = refinement_flags(
            result.eps, result.sigma, controls.beta_eps, controls.beta_sigma,
            controls.mode,
            eps_background=prob.adm.eps_background,
            sigma_background=prob.adm.sigma_background,
        )
        flags_per_level.append(flags)

        if prev is not None:
            eps_up = transfer_to_refined(prev.eps, prob.grid)
            sigma_up = transfer_to_refined(prev.sigma, prob.grid)
            if field_norm(result.eps.values - eps_up.values, prob.grid) < controls.theta1_eps:
                stop_reason = "theta1_eps"
                prev = result
                break
            if field_norm(result.sigma.values - sigma_up.values, prob.grid) < controls.theta1_sigma:
                stop_reason = "theta1_sigma"
                prev = result
                break
        if result.final_g_eps_norm < controls.theta2_eps:
            stop_reason = "theta2_eps"
            prev = result
            break
        if result.final_g_sigma_norm < controls.theta2_sigma:
            stop_reason = "theta2_sigma"
            prev = result
            break
        prev = result
        if k == controls.n_max:
            break
        if not flags.any():
            stop_reason = "no_flags"
            break

        fine = refine(prob.grid)
        mask_f = region_mask(fine, prob.mask.frame_width)
        obs_f = transfer_to_refined(prob.obs, fine)
        eps_init_f = transfer_to_refined(result.eps, fine)
        sigma_init_f = transfer_to_refined(result.sigma, fine)
        if prior_builder is not None:
            eps_prior_f, sigma_prior_f = prior_builder(fine)
        else:
            eps_prior_f = transfer_to_refined(prob.reg.eps_prior, fine)
            sigma_prior_f = transfer_to_refined(prob.reg.sigma_prior, fine)
        if truth_builder is not None:
            eps_true_f, sigma_true_f = truth_builder(fine)
        else:
            eps_true_f = sigma_true_f = None
        reg_f = RegularizationParams(
            gamma_eps0=prob.reg.gamma_eps0,
            gamma_sigma0=prob.reg.gamma_sigma0,
            p=prob.reg.p,
            eps_prior=eps_prior_f,
            sigma_prior=sigma_prior_f,
        )
        prob = replace(
            prob, grid=fine, mask=mask_f, obs=obs_f, reg=reg_f,
            eps_init=eps_init_f, sigma_init=sigma_init_f,
            eps_true=eps_true_f, sigma_true=sigma_true_f,
        )

    final = prev if prev is not None else results[-1]
    return AcgaResult(
        levels=levels,
        level_results=results,
        level_flags=flags_per_level,
        grids=grids,
        eps=final.eps,
        sigma=final.sigma,
        stop_reason=stop_reason,
    )
