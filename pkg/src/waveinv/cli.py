"""Command-line entry points.

    waveinv forward         --config run.ini [--out DIR] [--quiet]
    waveinv synthesize      --config run.ini [--out DIR] [--seed N] [--quiet]
    waveinv invert          --config run.ini [--out DIR] [--quiet]
    waveinv invert-adaptive --config run.ini [--out DIR] [--quiet]
    waveinv grad-check      --config run.ini [--out DIR] [--seed N] [--quiet]

Exit codes: 0 success, 1 check failure, 2 config/input error, 3 numerical
failure.  Every command writes a manifest.ini with all defaults
materialized next to its outputs; re-running from the manifest reproduces
them.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .adjoint import solve_adjoint
from .config import ConfigError, RunConfig, load_config, write_manifest
from .fields import Role, add_noise, extract_trace, project
from .forward import StabilityError, solve_forward
from .gradient import assemble_gradients, fd_gradient_oracle
from .grid import region_mask
from .io import (
    read_trace_csv,
    write_convergence_csv,
    write_field_csv,
    write_field_vtk,
    write_gradcheck_csv,
    write_levels_csv,
    write_trace_csv,
)
from .optimizer import InverseProblem, run_acga, run_cga

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _say(quiet: bool, msg: str) -> None:
    if not quiet:
        print(msg)


def _outdir(cfg: RunConfig, override: str | None) -> Path:
    out = Path(override) if override else cfg.resolve_path(cfg.get("output", "dir"))
    out.mkdir(parents=True, exist_ok=True)
    cfg.set("output", "dir", str(out.resolve()))
    return out


def _forward_setup(cfg: RunConfig, coeff_prefix: str = "truth"):
    grid = cfgmod.make_grid(cfg)
    adm = cfgmod.make_admissible(cfg)
    mask = region_mask(grid, cfg.get("grid", "frame_width"))
    eps = cfgmod.make_coefficient(cfg, f"{coeff_prefix}.eps", grid, Role.EPSILON)
    sigma = cfgmod.make_coefficient(cfg, f"{coeff_prefix}.sigma", grid, Role.SIGMA)
    src = cfgmod.make_source(cfg)
    bc = cfgmod.make_bc(cfg)
    sides = cfgmod.observation_sides(cfg)
    return grid, adm, mask, eps, sigma, src, bc, sides


def _dump_snapshots(cfg: RunConfig, grid, E, out: Path, prefix: str = "E") -> None:
    every = cfg.get("output", "dump_every")
    if every <= 0:
        return
    for n in range(0, grid.nt + 1, every):
        write_field_vtk(E.snapshots[n], grid, out / f"{prefix}_{n}.vtk", name=prefix)


def cmd_forward(cfg: RunConfig, out: Path, quiet: bool) -> int:
    grid, _, _, eps, sigma, src, bc, sides = _forward_setup(cfg)
    E = solve_forward(grid, eps, sigma, src, bc)
    trace = extract_trace(E, sides)
    write_trace_csv(trace, out / "trace.csv")
    _dump_snapshots(cfg, grid, E, out)
    write_manifest(cfg, out / "manifest.ini")
    _say(quiet, f"wrote {out / 'trace.csv'} ({grid.nt + 1} time levels)")
    return EXIT_OK


def cmd_synthesize(cfg: RunConfig, out: Path, quiet: bool) -> int:
    grid, _, _, eps, sigma, src, bc, sides = _forward_setup(cfg)
    E = solve_forward(grid, eps, sigma, src, bc)
    trace = extract_trace(E, sides)
    noisy = add_noise(
        trace,
        cfgmod.noise_model(cfg),
        cfg.get("noise", "level"),
        cfg.get("noise", "seed"),
    )
    write_trace_csv(noisy, out / "obs.csv")
    # pin the observation path so inversions can run straight off the manifest
    cfg.set("observation", "file", str((out / "obs.csv").resolve()))
    write_manifest(cfg, out / "manifest.ini")
    _say(
        quiet,
        f"wrote {out / 'obs.csv'} (model={cfg.get('noise', 'model')}, "
        f"level={cfg.get('noise', 'level')}, seed={cfg.get('noise', 'seed')})",
    )
    return EXIT_OK


def _inversion_problem(cfg: RunConfig) -> tuple[InverseProblem, object]:
    grid, adm, mask, *_ = _forward_setup(cfg)
    src = cfgmod.make_source(cfg)
    bc = cfgmod.make_bc(cfg)
    sides = cfgmod.observation_sides(cfg)
    obs_path = cfg.get("observation", "file")
    if not obs_path:
        raise ConfigError("key observation.file: required for inversion commands")
    try:
        obs = read_trace_csv(cfg.resolve_path(obs_path), grid)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"observation.file: {exc}") from exc
    if obs.sides != sides:
        raise ConfigError(
            f"observation.file sides {tuple(int(s) for s in obs.sides)} do not match "
            f"observation.sides {tuple(int(s) for s in sides)}"
        )
    eps_init = cfgmod.make_coefficient(cfg, "initial.eps", grid, Role.EPSILON)
    sigma_init = cfgmod.make_coefficient(cfg, "initial.sigma", grid, Role.SIGMA)
    eps_true = sigma_true = None
    if "truth.eps" in cfg.declared and "truth.sigma" in cfg.declared:
        eps_true = cfgmod.make_coefficient(cfg, "truth.eps", grid, Role.EPSILON)
        sigma_true = cfgmod.make_coefficient(cfg, "truth.sigma", grid, Role.SIGMA)
    reg = cfgmod.make_regularization(cfg, eps_init, sigma_init)
    problem = InverseProblem(
        grid=grid, mask=mask, adm=adm, src=src, bc=bc, obs=obs, reg=reg,
        eps_init=eps_init, sigma_init=sigma_init,
        eps_true=eps_true, sigma_true=sigma_true,
        alpha_max=cfg.get("cga", "alpha_max"),
        beta_max=cfg.get("cga", "beta_max"),
    )
    return problem, cfgmod.make_tolerances(cfg)


def _write_reconstruction(result, grid, out: Path) -> None:
    write_field_vtk(result.eps, grid, out / "eps_final.vtk", name="eps")
    write_field_csv(result.eps, grid, out / "eps_final.csv")
    write_field_vtk(result.sigma, grid, out / "sigma_final.vtk", name="sigma")
    write_field_csv(result.sigma, grid, out / "sigma_final.csv")
    write_convergence_csv(result.log, out / "convergence.csv")


def cmd_invert(cfg: RunConfig, out: Path, quiet: bool) -> int:
    problem, tols = _inversion_problem(cfg)
    result = run_cga(problem, tols)
    _write_reconstruction(result, problem.grid, out)
    if cfg.get("output", "dump_every") > 0:
        # adjoint snapshots of the final iterate, L_<step>.vtk
        E = solve_forward(problem.grid, result.eps, result.sigma, problem.src, problem.bc)
        residual = extract_trace(E, problem.obs.sides) - problem.obs
        lam = solve_adjoint(problem.grid, result.eps, result.sigma, residual,
                            problem.bc, problem.src)
        _dump_snapshots(cfg, problem.grid, lam, out, prefix="L")
    write_manifest(cfg, out / "manifest.ini")
    _say(
        quiet,
        f"{len(result.log)} iterations (stop: {result.stop_reason}), "
        f"final F = {result.final_F:.6e}",
    )
    return EXIT_OK


def cmd_invert_adaptive(cfg: RunConfig, out: Path, quiet: bool) -> int:
    problem, tols = _inversion_problem(cfg)
    controls = cfgmod.make_acga_controls(cfg)

    def truth_builder(grid):
        return (
            cfgmod.make_coefficient(cfg, "truth.eps", grid, Role.EPSILON),
            cfgmod.make_coefficient(cfg, "truth.sigma", grid, Role.SIGMA),
        )

    def prior_builder(grid):
        return (
            cfgmod.make_coefficient(cfg, "initial.eps", grid, Role.EPSILON),
            cfgmod.make_coefficient(cfg, "initial.sigma", grid, Role.SIGMA),
        )

    have_truth = problem.eps_true is not None
    result = run_acga(
        problem, tols, controls,
        truth_builder if have_truth else None,
        prior_builder,
    )
    for k, (level_result, grid) in enumerate(zip(result.level_results, result.grids)):
        level_dir = out / f"level_{k}"
        level_dir.mkdir(exist_ok=True)
        _write_reconstruction(level_result, grid, level_dir)
    write_levels_csv(result.levels, out / "levels.csv")
    write_manifest(cfg, out / "manifest.ini")
    _say(quiet, f"{len(result.levels)} levels (stop: {result.stop_reason})")
    return EXIT_OK


def cmd_grad_check(cfg: RunConfig, out: Path, quiet: bool) -> int:
    grid, adm, mask, eps_t, sigma_t, src, bc, sides = _forward_setup(cfg)
    E_truth = solve_forward(grid, eps_t, sigma_t, src, bc)
    obs = add_noise(
        extract_trace(E_truth, sides),
        cfgmod.noise_model(cfg),
        cfg.get("noise", "level"),
        cfg.get("noise", "seed"),
    )
    eps_e = project(cfgmod.make_coefficient(cfg, "eval.eps", grid, Role.EPSILON), adm, mask)
    sigma_e = project(cfgmod.make_coefficient(cfg, "eval.sigma", grid, Role.SIGMA), adm, mask)
    reg = cfgmod.make_regularization(cfg, eps_e, sigma_e)
    gamma_eps = gamma_sigma = 0.0  # oracle comparison runs on the pure data term

    E = solve_forward(grid, eps_e, sigma_e, src, bc)
    sim = extract_trace(E, sides)
    lam = solve_adjoint(grid, eps_e, sigma_e, sim - obs, bc, src)
    g_eps, g_sigma = assemble_gradients(
        E, lam, eps_e, sigma_e, reg, gamma_eps, gamma_sigma, mask
    )
    if cfg.get("gradcheck", "negate_adjoint"):
        g_eps = g_eps.with_values(-g_eps.values)
        g_sigma = g_sigma.with_values(-g_sigma.values)

    nodes_raw = cfg.get("gradcheck", "nodes").strip()
    if nodes_raw:
        nodes = []
        for chunk in nodes_raw.split(";"):
            i_s, j_s = chunk.split(",")
            nodes.append((int(i_s), int(j_s)))
    else:
        rng = np.random.default_rng(cfg.get("gradcheck", "seed"))
        inner = np.argwhere(mask.inner)
        picks = rng.choice(len(inner), size=cfg.get("gradcheck", "n_nodes"), replace=False)
        nodes = [tuple(int(v) for v in inner[k]) for k in picks]

    try:
        samples = fd_gradient_oracle(
            eps_e, sigma_e, obs, reg, gamma_eps, gamma_sigma, nodes,
            cfg.get("gradcheck", "h_fd"), src, bc, mask, adm,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    tol = cfg.get("gradcheck", "tol")
    max_fd = {
        role: max((abs(s.value) for s in samples if s.role is role), default=0.0)
        for role in (Role.EPSILON, Role.SIGMA)
    }
    rows = []
    all_pass = True
    for s in samples:
        adj = (g_eps if s.role is Role.EPSILON else g_sigma).values[s.node]
        if mask.frame[s.node]:
            rel = 0.0
        else:
            rel = abs(adj - s.value) / max(abs(s.value), 1e-12)
        rows.append((s, float(adj), rel))
        qualifies = abs(s.value) >= 1e-3 * max_fd[s.role]
        if qualifies and rel > tol:
            all_pass = False
    write_gradcheck_csv(rows, grid, out / "grad_check.csv")
    write_manifest(cfg, out / "manifest.ini")
    worst = max(r[2] for r in rows) if rows else 0.0
    _say(quiet, f"{len(rows)} probes, worst rel err {worst:.3e}, tol {tol:g}: "
                f"{'PASS' if all_pass else 'FAIL'}")
    return EXIT_OK if all_pass else EXIT_CHECK_FAILED


COMMANDS = {
    "forward": cmd_forward,
    "synthesize": cmd_synthesize,
    "invert": cmd_invert,
    "invert-adaptive": cmd_invert_adaptive,
    "grad-check": cmd_grad_check,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="waveinv",
        description="Permittivity/conductivity reconstruction from boundary wave data",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="run configuration (INI)")
        p.add_argument("--out", default=None, help="output directory (overrides [output] dir)")
        p.add_argument("--seed", type=int, default=None, help="override noise/sampling seeds")
        p.add_argument("--quiet", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.set("noise", "seed", args.seed)
            cfg.set("gradcheck", "seed", args.seed)
        out = _outdir(cfg, args.out)
        return COMMANDS[args.command](cfg, out, args.quiet)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StabilityError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
