"""Explicit finite-difference time-domain solver for the scalar damped wave
system  eps * E_tt + sigma * E_t - lap(E) = f  on a rectangle.

Scheme
------
Leapfrog in time with the damping term centered over two steps, which keeps
the update explicit and second order:

    (eps/dt^2 + sigma/(2 dt)) E^{n+1}
        = (2 eps/dt^2) E^n - (eps/dt^2 - sigma/(2 dt)) E^{n-1} + lap_h E^n + f^n

lap_h is the 5-point Laplacian; boundary conditions enter through one layer
of ghost nodes:

    zero Neumann        ghost = mirror
    Neumann data g      ghost = mirror + 2 h g(t_n)
    absorbing dE/dn=-dE/dt   ghost = mirror - 2 h (E^n_b - E^{n-1}_b) / dt

The first step is the Taylor start
    E^1 = E^0 + dt f1 + dt^2/(2 eps) (lap_h E^0 - sigma f1 + f^0),
which keeps second-order accuracy for nonzero initial data.

The same stepping kernel also runs the adjoint problem: after reversing
time the adjoint equation has exactly this form, so the adjoint module
only builds different per-side boundary programs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from enum import Enum
from typing import Callable, Mapping

import numpy as np

from .grid import ALL_SIDES, Grid2D, Side, area_weights
from .fields import CoefficientField, FieldKind, SpaceTimeField


class StabilityError(RuntimeError):
    """Raised when a solve is provably unstable or produces non-finite values."""


class BcKind(Enum):
    SOURCE_THEN_ABSORBING = "source_then_absorbing"
    ABSORBING = "absorbing"
    NEUMANN_ZERO = "neumann_zero"
    NEUMANN_DATA = "neumann_data"


@dataclass(frozen=True)
class SourceSpec:
    """Boundary plane-wave source plus optional manufactured-test data.

    The sine pulse sin(omega*t) acts as Neumann data on the configured side
    for one period (t_on defaults to 2*pi/omega), after which that side
    switches to absorbing.  volume_forcing may be a callable f(X, Y, t)
    returning nodal values, or a precomputed (nt+1, nx+1, ny+1) array.
    f0/f1 are initial value and velocity (callables of (X, Y) or arrays);
    they default to zero.
    """

    omega: float = 20.0
    amplitude: float = 1.0
    side: Side = Side.LEFT
    t_on: float | None = None
    volume_forcing: Callable | np.ndarray | None = None
    f0: Callable | np.ndarray | None = None
    f1: Callable | np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.omega <= 0.0:
            raise ValueError("omega must be positive")

    def switch_time(self) -> float:
        return 2.0 * math.pi / self.omega if self.t_on is None else self.t_on


@dataclass(frozen=True)
class BcConfig:
    """Per-side boundary condition kinds.

    At most one side may be SOURCE_THEN_ABSORBING.  Sides with NEUMANN_DATA
    take their flux values from ``neumann_data[side]``, a callable
    g(coords_along_side, t) -> array.
    """

    sides: Mapping[Side, BcKind] = dc_field(
        default_factory=lambda: {
            Side.LEFT: BcKind.SOURCE_THEN_ABSORBING,
            Side.BOTTOM: BcKind.NEUMANN_ZERO,
            Side.RIGHT: BcKind.ABSORBING,
            Side.TOP: BcKind.NEUMANN_ZERO,
        }
    )
    neumann_data: Mapping[Side, Callable] = dc_field(default_factory=dict)

    def __post_init__(self) -> None:
        sides = {Side(s): BcKind(k) for s, k in self.sides.items()}
        for side in ALL_SIDES:
            sides.setdefault(side, BcKind.NEUMANN_ZERO)
        n_src = sum(1 for k in sides.values() if k is BcKind.SOURCE_THEN_ABSORBING)
        if n_src > 1:
            raise ValueError("at most one side may carry the switched source")
        for side, k in sides.items():
            if k is BcKind.NEUMANN_DATA and side not in self.neumann_data:
                raise ValueError(f"side {side.name} needs a neumann_data callback")
        object.__setattr__(self, "sides", sides)

    def kind(self, side: Side) -> BcKind:
        return self.sides[side]


def all_neumann_bc() -> BcConfig:
    return BcConfig(sides={s: BcKind.NEUMANN_ZERO for s in ALL_SIDES})


@dataclass(frozen=True)
class SideProgram:
    """Resolved per-side boundary behaviour over the whole time axis.

    absorbing[n] switches the outflow ghost term on at level n;
    series is Neumann flux data per level and side node (None means zero).
    """

    absorbing: np.ndarray
    series: np.ndarray | None


def _side_axis_values(grid: Grid2D, side: Side, fn: Callable, t: float) -> np.ndarray:
    x, y = grid.side_coords(side)
    return np.asarray(fn(x, y, t), dtype=np.float64) * np.ones(grid.side_node_count(side))


def build_forward_programs(
    grid: Grid2D, src: SourceSpec, bc: BcConfig
) -> dict[Side, SideProgram]:
    times = grid.times()
    programs: dict[Side, SideProgram] = {}
    for side in ALL_SIDES:
        kind = bc.kind(side)
        if kind is BcKind.NEUMANN_ZERO:
            programs[side] = SideProgram(np.zeros(grid.nt + 1, dtype=bool), None)
        elif kind is BcKind.ABSORBING:
            programs[side] = SideProgram(np.ones(grid.nt + 1, dtype=bool), None)
        elif kind is BcKind.SOURCE_THEN_ABSORBING:
            t_on = src.switch_time()
            active = times <= t_on + 1e-14
            pulse = np.where(active, src.amplitude * np.sin(src.omega * times), 0.0)
            series = np.tile(pulse[:, None], (1, grid.side_node_count(side)))
            programs[side] = SideProgram(~active, series)
        else:  # NEUMANN_DATA
            fn = bc.neumann_data[side]
            n = grid.side_node_count(side)
            series = np.empty((grid.nt + 1, n))
            for i, t in enumerate(times):
                series[i] = _side_axis_values(grid, side, fn, t)
            programs[side] = SideProgram(np.zeros(grid.nt + 1, dtype=bool), series)
    return programs


def _nodal(grid: Grid2D, data: Callable | np.ndarray | None) -> np.ndarray:
    if data is None:
        return np.zeros(grid.node_shape)
    if callable(data):
        X, Y = grid.meshgrid()
        return np.asarray(data(X, Y), dtype=np.float64) * np.ones(grid.node_shape)
    arr = np.asarray(data, dtype=np.float64)
    if arr.shape != grid.node_shape:
        raise ValueError(f"initial data shape {arr.shape} != {grid.node_shape}")
    return arr.copy()


def _forcing_at(
    grid: Grid2D, forcing: Callable | np.ndarray | None, n: int, XY=None
) -> np.ndarray | float:
    if forcing is None:
        return 0.0
    if isinstance(forcing, np.ndarray):
        return forcing[n]
    X, Y = XY
    return np.asarray(forcing(X, Y, n * grid.dt), dtype=np.float64)


def _laplacian(
    grid: Grid2D,
    cur: np.ndarray,
    prev_b: dict[Side, np.ndarray],
    programs: Mapping[Side, SideProgram],
    n: int,
) -> np.ndarray:
    """5-point Laplacian of the current snapshot with ghost-node closures.

    prev_b holds the previous-level boundary values (or initial velocity
    times dt at the Taylor start) needed by the absorbing ghost.
    """
    h, dt = grid.h, grid.dt
    P = np.zeros((grid.nx + 3, grid.ny + 3))
    P[1:-1, 1:-1] = cur

    def ghost(side: Side, mirror: np.ndarray, cur_b: np.ndarray) -> np.ndarray:
        prog = programs[side]
        g = mirror.copy()
        if prog.series is not None:
            g += 2.0 * h * prog.series[n]
        if prog.absorbing[n]:
            g -= 2.0 * h * (cur_b - prev_b[side]) / dt
        return g

    P[0, 1:-1] = ghost(Side.LEFT, cur[1, :], cur[0, :])
    P[-1, 1:-1] = ghost(Side.RIGHT, cur[-2, :], cur[-1, :])
    P[1:-1, 0] = ghost(Side.BOTTOM, cur[:, 1], cur[:, 0])
    P[1:-1, -1] = ghost(Side.TOP, cur[:, -2], cur[:, -1])

    return (
        P[2:, 1:-1] + P[:-2, 1:-1] + P[1:-1, 2:] + P[1:-1, :-2] - 4.0 * P[1:-1, 1:-1]
    ) / (h * h)


def _boundary_values(grid: Grid2D, arr: np.ndarray) -> dict[Side, np.ndarray]:
    return {
        Side.LEFT: arr[0, :].copy(),
        Side.RIGHT: arr[-1, :].copy(),
        Side.BOTTOM: arr[:, 0].copy(),
        Side.TOP: arr[:, -1].copy(),
    }


def check_cfl(grid: Grid2D, eps: CoefficientField) -> None:
    eps_min = float(eps.values.min())
    if eps_min <= 0.0:
        raise StabilityError("permittivity must be strictly positive")
    bound = grid.h * math.sqrt(eps_min) / math.sqrt(2.0)
    if grid.dt > bound * (1.0 + 1e-12):
        raise StabilityError(
            f"CFL violation: dt={grid.dt:.3e} exceeds h*sqrt(min eps)/sqrt(2)="
            f"{bound:.3e}; rebuild the grid with a smaller cfl_safety or eps_min"
        )


def predict_step(
    grid: Grid2D,
    eps_v: np.ndarray,
    sig_v: np.ndarray,
    cur: np.ndarray,
    prev: np.ndarray,
    programs: Mapping[Side, SideProgram],
    n: int,
    f_n: np.ndarray | float,
) -> np.ndarray:
    """One leapfrog update: snapshots (n-1, n) -> n+1.  Shared by the solver
    and by the Lagrangian's discrete-residual evaluation."""
    dt = grid.dt
    lap = _laplacian(grid, cur, _boundary_values(grid, prev), programs, n)
    a_plus = eps_v / dt**2 + sig_v / (2.0 * dt)
    a_mid = 2.0 * eps_v / dt**2
    a_minus = eps_v / dt**2 - sig_v / (2.0 * dt)
    return (a_mid * cur - a_minus * prev + lap + f_n) / a_plus


def predict_first_step(
    grid: Grid2D,
    eps_v: np.ndarray,
    sig_v: np.ndarray,
    e0: np.ndarray,
    f1_v: np.ndarray,
    programs: Mapping[Side, SideProgram],
    f_0: np.ndarray | float,
) -> np.ndarray:
    """Taylor start producing E^1; the absorbing ghost uses the initial
    velocity f1 in place of the undefined backward difference."""
    dt = grid.dt
    e0_b = _boundary_values(grid, e0)
    f1_b = _boundary_values(grid, f1_v)
    prev_b = {s: e0_b[s] - dt * f1_b[s] for s in e0_b}
    lap0 = _laplacian(grid, e0, prev_b, programs, 0)
    return e0 + dt * f1_v + dt**2 / (2.0 * eps_v) * (lap0 - sig_v * f1_v + f_0)


def run_leapfrog(
    grid: Grid2D,
    eps: CoefficientField,
    sigma: CoefficientField,
    programs: Mapping[Side, SideProgram],
    forcing: Callable | np.ndarray | None = None,
    f0: Callable | np.ndarray | None = None,
    f1: Callable | np.ndarray | None = None,
) -> np.ndarray:
    """Time-step the damped wave scheme and return all nt+1 snapshots."""
    check_cfl(grid, eps)
    sig_min = float(sigma.values.min())
    if sig_min < 0.0:
        raise StabilityError("conductivity must be >= 0")
    eps_v = eps.values
    sig_v = sigma.values

    XY = grid.meshgrid() if callable(forcing) else None
    out = np.empty((grid.nt + 1, *grid.node_shape))
    out[0] = _nodal(grid, f0)
    f1_v = _nodal(grid, f1)
    out[1] = predict_first_step(
        grid, eps_v, sig_v, out[0], f1_v, programs, _forcing_at(grid, forcing, 0, XY)
    )
    if not np.isfinite(out[:2]).all():
        raise StabilityError("non-finite field values at start-up")
    for n in range(1, grid.nt):
        out[n + 1] = predict_step(
            grid, eps_v, sig_v, out[n], out[n - 1], programs, n,
            _forcing_at(grid, forcing, n, XY),
        )
        if not np.isfinite(out[n + 1]).all():
            raise StabilityError(f"non-finite field values at step {n + 1}")
    return out


def solve_forward(
    grid: Grid2D,
    eps: CoefficientField,
    sigma: CoefficientField,
    src: SourceSpec,
    bc: BcConfig,
) -> SpaceTimeField:
    """Solve the forward problem and return the full snapshot stack."""
    programs = build_forward_programs(grid, src, bc)
    snaps = run_leapfrog(
        grid, eps, sigma, programs,
        forcing=src.volume_forcing, f0=src.f0, f1=src.f1,
    )
    return SpaceTimeField(grid=grid, snapshots=snaps, kind=FieldKind.STATE)


def _dirichlet_product(grid: Grid2D, u: np.ndarray, v: np.ndarray) -> float:
    """Edge-midpoint quadrature of grad(u).grad(v); the discrete Dirichlet
    form under which the 5-point Laplacian with mirror ghosts is
    self-adjoint, so the leapfrog energy built from it telescopes exactly."""
    wx = np.ones(grid.nx + 1)
    wx[0] = wx[-1] = 0.5
    wy = np.ones(grid.ny + 1)
    wy[0] = wy[-1] = 0.5
    dux = np.diff(u, axis=0)
    dvx = np.diff(v, axis=0)
    duy = np.diff(u, axis=1)
    dvy = np.diff(v, axis=1)
    sx = float(np.einsum("ij,ij,j->", dux, dvx, wy))
    sy = float(np.einsum("ij,ij,i->", duy, dvy, wx))
    return sx + sy


def discrete_energy(
    E: SpaceTimeField,
    eps: CoefficientField,
    sigma: CoefficientField,
    n: int,
) -> float:
    """Discrete wave energy between levels n-1 and n.

    Velocity part: eps-weighted nodal L2 norm of the backward difference
    quotient.  Gradient part: the symmetric product form of the two levels,
    which is the quantity the undamped all-Neumann scheme conserves to
    round-off (the squared midpoint gradient drifts at O(dt^2) per period
    and would mask both the conservation and the damping monotonicity).
    """
    if not 1 <= n <= E.grid.nt:
        raise ValueError(f"time index {n} outside 1..{E.grid.nt}")
    g = E.grid
    w = area_weights(g)
    vel = (E.snapshots[n] - E.snapshots[n - 1]) / g.dt
    kinetic = float(np.sum(w * eps.values * vel * vel))
    return kinetic + _dirichlet_product(g, E.snapshots[n], E.snapshots[n - 1])
