"""Tikhonov functional, discrete Lagrangian, decomposition identities and
the error metrics reported during reconstruction.

Quadrature conventions: trapezoid in time, trapezoid along boundary edges
(half weight at edge ends, so a corner shared by two observed sides gets
its correct perimeter weight) and tensor-trapezoid over the area.  All of
these reproduce constants exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import BoundaryTrace, CoefficientField, SpaceTimeField, extract_trace
from .forward import BcConfig, SourceSpec, _forcing_at, _nodal, build_forward_programs, predict_first_step, predict_step
from .grid import Grid2D, area_weights, side_weights, time_weights


def field_dot(a: CoefficientField | np.ndarray, b: CoefficientField | np.ndarray, grid: Grid2D) -> float:
    av = a.values if isinstance(a, CoefficientField) else a
    bv = b.values if isinstance(b, CoefficientField) else b
    return float(np.sum(area_weights(grid) * av * bv))


def field_norm(a: CoefficientField | np.ndarray, grid: Grid2D) -> float:
    return float(np.sqrt(field_dot(a, a, grid)))


def trace_dot(a: BoundaryTrace, b: BoundaryTrace) -> float:
    a.check_compatible(b)
    wt = time_weights(a.grid)
    total = 0.0
    for side in a.sides:
        ws = side_weights(a.grid, side)
        total += float(np.einsum("tk,tk,t,k->", a.data[side], b.data[side], wt, ws))
    return total


def trace_norm_sq(a: BoundaryTrace) -> float:
    return trace_dot(a, a)


def spacetime_dot(a: SpaceTimeField, b: SpaceTimeField) -> float:
    wt = time_weights(a.grid)
    wx = area_weights(a.grid)
    return float(np.einsum("tij,tij,t,ij->", a.snapshots, b.snapshots, wt, wx))


def spacetime_norm(a: SpaceTimeField) -> float:
    return float(np.sqrt(spacetime_dot(a, a)))


@dataclass(frozen=True)
class RegularizationParams:
    """Initial regularization weights, their decay exponent and the priors."""

    gamma_eps0: float
    gamma_sigma0: float
    p: float
    eps_prior: CoefficientField
    sigma_prior: CoefficientField

    def __post_init__(self) -> None:
        if self.gamma_eps0 < 0.0 or self.gamma_sigma0 < 0.0:
            raise ValueError("regularization weights must be >= 0")
        if not 0.0 < self.p <= 1.0:
            raise ValueError("decay exponent p must lie in (0, 1]")

    def at_iteration(self, m: int) -> tuple[float, float]:
        """Decayed weights gamma^m = gamma^0 / (m+1)^p."""
        decay = float(m + 1) ** self.p
        return self.gamma_eps0 / decay, self.gamma_sigma0 / decay


def tikhonov(
    sim: BoundaryTrace,
    obs: BoundaryTrace,
    eps: CoefficientField,
    sigma: CoefficientField,
    reg: RegularizationParams,
    gamma_eps: float,
    gamma_sigma: float,
) -> float:
    """0.5 |sim - obs|^2 over the observed space-time boundary plus the
    weighted squared deviations from the priors."""
    sim.check_compatible(obs)
    misfit = 0.5 * trace_norm_sq(sim - obs)
    grid = eps.grid
    pen_eps = 0.5 * gamma_eps * field_dot(
        eps.values - reg.eps_prior.values, eps.values - reg.eps_prior.values, grid
    )
    pen_sigma = 0.5 * gamma_sigma * field_dot(
        sigma.values - reg.sigma_prior.values, sigma.values - reg.sigma_prior.values, grid
    )
    return misfit + pen_eps + pen_sigma


def forward_defect(
    E: SpaceTimeField,
    eps: CoefficientField,
    sigma: CoefficientField,
    src: SourceSpec,
    bc: BcConfig,
) -> np.ndarray:
    """Stencil defect of every discrete update equation, in PDE units.

    Entry n (n = 0..nt-1) measures how far snapshot n+1 is from what the
    scheme would produce from snapshots n and n-1; it is identically zero
    for a field returned by solve_forward with matching inputs.
    """
    g = E.grid
    programs = build_forward_programs(g, src, bc)
    eps_v, sig_v = eps.values, sigma.values
    XY = g.meshgrid() if callable(src.volume_forcing) else None
    snaps = E.snapshots
    defect = np.empty((g.nt, *g.node_shape))
    f1_v = _nodal(g, src.f1)
    predicted1 = predict_first_step(
        g, eps_v, sig_v, snaps[0], f1_v, programs, _forcing_at(g, src.volume_forcing, 0, XY)
    )
    a_start = 2.0 * eps_v / g.dt**2
    defect[0] = a_start * (snaps[1] - predicted1)
    a_plus = eps_v / g.dt**2 + sig_v / (2.0 * g.dt)
    for n in range(1, g.nt):
        predicted = predict_step(
            g, eps_v, sig_v, snaps[n], snaps[n - 1], programs, n,
            _forcing_at(g, src.volume_forcing, n, XY),
        )
        defect[n] = a_plus * (snaps[n + 1] - predicted)
    return defect


def lagrangian(
    E: SpaceTimeField,
    lam: SpaceTimeField,
    eps: CoefficientField,
    sigma: CoefficientField,
    reg: RegularizationParams,
    gamma_eps: float,
    gamma_sigma: float,
    obs: BoundaryTrace,
    src: SourceSpec,
    bc: BcConfig,
) -> float:
    """Tikhonov value plus the discrete forward defect paired with the
    multiplier; equals the Tikhonov value whenever E solves the scheme."""
    if E.grid is not lam.grid and E.grid.node_shape != lam.grid.node_shape:
        raise ValueError("state and multiplier live on different grids")
    sim = extract_trace(E, obs.sides)
    value = tikhonov(sim, obs, eps, sigma, reg, gamma_eps, gamma_sigma)
    defect = forward_defect(E, eps, sigma, src, bc)
    w = area_weights(E.grid)
    pairing = float(np.einsum("nij,nij,ij->", defect, lam.snapshots[: E.grid.nt], w)) * E.grid.dt
    return value + pairing


def decomposition_identity_check(
    eps: CoefficientField,
    sigma: CoefficientField,
    eps_n: CoefficientField,
    sigma_n: CoefficientField,
    obs: BoundaryTrace,
    reg: RegularizationParams,
    gamma_eps: float,
    gamma_sigma: float,
    src: SourceSpec,
    bc: BcConfig,
) -> float:
    """Residual of the exact algebraic split of F(eps, sigma) around a
    second admissible pair; zero up to quadrature round-off.

    The split expresses F at one pair through F at the other plus boundary
    terms in the trace difference and, with regularization on, matching
    quadratic/linear terms in the coefficient differences.
    """
    from .forward import solve_forward

    grid = eps.grid
    E = solve_forward(grid, eps, sigma, src, bc)
    E_n = solve_forward(grid, eps_n, sigma_n, src, bc)
    tr = extract_trace(E, obs.sides)
    tr_n = extract_trace(E_n, obs.sides)
    d_tr = tr - tr_n

    lhs = tikhonov(tr, obs, eps, sigma, reg, gamma_eps, gamma_sigma)
    rhs = tikhonov(tr_n, obs, eps_n, sigma_n, reg, gamma_eps, gamma_sigma)
    rhs += -0.5 * trace_norm_sq(d_tr) + trace_dot(tr - obs, d_tr)
    d_eps = eps.values - eps_n.values
    d_sigma = sigma.values - sigma_n.values
    rhs += gamma_eps * (
        -0.5 * field_dot(d_eps, d_eps, grid)
        + field_dot(eps.values - reg.eps_prior.values, d_eps, grid)
    )
    rhs += gamma_sigma * (
        -0.5 * field_dot(d_sigma, d_sigma, grid)
        + field_dot(sigma.values - reg.sigma_prior.values, d_sigma, grid)
    )
    return abs(lhs - rhs)


@dataclass(frozen=True)
class ErrorMetrics:
    """Relative L2 and supremum errors of the iterates and the data fit."""

    e_eps_l2: float
    e_eps_sup: float
    e_sigma_l2: float
    e_sigma_sup: float
    e_E_l2: float
    e_E_sup: float


def error_metrics(
    eps_m: CoefficientField,
    sigma_m: CoefficientField,
    eps_true: CoefficientField,
    sigma_true: CoefficientField,
    sim_m: BoundaryTrace,
    obs: BoundaryTrace,
) -> ErrorMetrics:
    grid = eps_m.grid

    def rel_pair(approx: np.ndarray, exact: np.ndarray) -> tuple[float, float]:
        denom_l2 = field_norm(exact, grid)
        denom_sup = float(np.abs(exact).max())
        if denom_l2 == 0.0 or denom_sup == 0.0:
            raise ValueError("reference field is zero; relative errors undefined")
        return (
            field_norm(approx - exact, grid) / denom_l2,
            float(np.abs(approx - exact).max()) / denom_sup,
        )

    e_eps = rel_pair(eps_m.values, eps_true.values)
    e_sigma = rel_pair(sigma_m.values, sigma_true.values)

    num_l2 = float(np.sqrt(trace_norm_sq(sim_m - obs)))
    den_l2 = float(np.sqrt(trace_norm_sq(sim_m)))
    num_sup = (sim_m - obs).max_abs()
    den_sup = sim_m.max_abs()
    if den_l2 == 0.0 or den_sup == 0.0:
        raise ValueError("simulated trace is zero; relative data error undefined")
    return ErrorMetrics(
        e_eps_l2=e_eps[0],
        e_eps_sup=e_eps[1],
        e_sigma_l2=e_sigma[0],
        e_sigma_sup=e_sigma[1],
        e_E_l2=num_l2 / den_l2,
        e_E_sup=num_sup / den_sup,
    )
