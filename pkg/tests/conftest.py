"""Shared fixtures and builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from waveinv import (
    ALL_SIDES,
    AdmissibleSet,
    BcConfig,
    BoundaryTrace,
    CoefficientField,
    Role,
    SourceSpec,
    add_noise,
    build_grid,
    extract_trace,
    gaussian_coefficient,
    solve_forward,
)

INCLUSION_CENTER = (0.5, 0.7)


def truth_pair(grid):
    """The two narrow Gaussian inclusions used throughout the studies."""
    eps = gaussian_coefficient(grid, 1.0, 3.0, INCLUSION_CENTER, 0.002, Role.EPSILON)
    sigma = gaussian_coefficient(grid, 1.0, 1.5, INCLUSION_CENTER, 0.002, Role.SIGMA)
    return eps, sigma


def smooth_random_coefficient(grid, rng, role, lo=1.0, hi=10.0, n_bumps=3):
    """Random admissible field: background plus a few positive Gaussian bumps."""
    X, Y = grid.meshgrid()
    values = np.full(grid.node_shape, lo)
    for _ in range(n_bumps):
        cx, cy = rng.uniform(0.15, 0.85, 2)
        width = rng.uniform(0.01, 0.08)
        amp = rng.uniform(0.2, 0.45) * (hi - lo)
        values = values + amp * np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / width)
    return CoefficientField(grid=grid, values=np.clip(values, lo, hi), role=role)


def smooth_random_spacetime(grid, rng, n_modes=4, kmax=3):
    """Band-limited random space-time array for adjoint consistency tests."""
    X, Y = grid.meshgrid()
    t = grid.times()
    out = np.zeros((grid.nt + 1, *grid.node_shape))
    for _ in range(n_modes):
        kx, ky = rng.integers(0, kmax + 1, 2)
        w = rng.uniform(0.5, 4.0)
        ph = rng.uniform(0, 2 * np.pi, 3)
        out += (
            rng.standard_normal()
            * np.cos(kx * np.pi * X + ph[0])[None]
            * np.cos(ky * np.pi * Y + ph[1])[None]
            * np.cos(w * t + ph[2])[:, None, None]
        )
    return out


def smooth_random_trace(grid, rng, sides=ALL_SIDES, n_modes=3):
    t = grid.times()
    data = {}
    for side in sides:
        n = grid.side_node_count(side)
        u = np.linspace(0.0, 1.0, n)
        arr = np.zeros((grid.nt + 1, n))
        for _ in range(n_modes):
            k = rng.integers(0, 4)
            w = rng.uniform(0.5, 4.0)
            ph = rng.uniform(0, 2 * np.pi, 2)
            arr += (
                rng.standard_normal()
                * np.cos(k * np.pi * u + ph[0])[None, :]
                * np.cos(w * t + ph[1])[:, None]
            )
        data[side] = arr
    return BoundaryTrace(grid=grid, sides=tuple(sides), data=data)


def synthesize_observations(grid, noise_level=0.1, seed=42):
    """Noisy boundary data from the study-1 truth on the standard setup."""
    eps_t, sigma_t = truth_pair(grid)
    src = SourceSpec()
    bc = BcConfig()
    clean = extract_trace(solve_forward(grid, eps_t, sigma_t, src, bc), ALL_SIDES)
    if noise_level == 0.0:
        return clean, eps_t, sigma_t, src, bc
    noisy = add_noise(clean, "relative_gaussian", noise_level, seed)
    return noisy, eps_t, sigma_t, src, bc


@pytest.fixture
def small_grid():
    return build_grid(16, 16, T=1.2)


@pytest.fixture
def medium_grid():
    return build_grid(32, 32, T=1.2)


@pytest.fixture
def unit_adm():
    return AdmissibleSet()
