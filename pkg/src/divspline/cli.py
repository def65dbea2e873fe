"""Command-line driver: configuration parsing, case dispatch, result files.

Every command writes a run manifest (the resolved configuration plus
underscore-prefixed metadata), one or more CSV tables with fixed headers and
17-significant-digit floats, and a legacy-VTK structured-points dump of the
final velocity, pressure, and pointwise-divergence fields on a grid with four
sample points per element per direction.  Single-threaded reruns of the same
configuration produce byte-identical CSV and VTK files; ``threads > 1``
distributes sweep points over a process pool without changing row order.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .bspline import collocation_matrix
from .cases import (
    run_cavity,
    run_convergence_study,
    run_pressure_robustness,
    run_reynolds_robustness,
    run_taylor_green_2d,
    streamfunction,
    unit_square_pair,
)
from .space import DivConformingPair, StateVector, TensorSpace, divergence_coefficients

COMMANDS = (
    "convergence",
    "robustness",
    "pressure-robustness",
    "cavity",
    "taylor-green-2d",
)

_COMMAND_DEFAULTS = {
    "convergence": {"mesh": (4, 8, 16, 32), "re": (10.0,)},
    "robustness": {"mesh": (16,), "re": (1.0, 10.0, 100.0, 1000.0)},
    "pressure-robustness": {"mesh": (16,), "re": (10.0,)},
    "cavity": {"mesh": (16,), "re": (7500.0,)},
    "taylor-green-2d": {"mesh": (32,), "re": (100.0,)},
}

_KEY_ALIASES = {
    "k_prime": "kPrime",
    "meshResolution": "mesh",
    "mesh_resolution": "mesh",
    "c_nit": "cNit",
    "t_end": "tEnd",
    "rho_inf": "rhoInf",
    "outputDir": "out",
    "output_dir": "out",
}

_KNOWN_KEYS = {
    "command",
    "kPrime",
    "mesh",
    "re",
    "delta",
    "gamma",
    "cNit",
    "dt",
    "tEnd",
    "rhoInf",
    "out",
    "threads",
    "seed",
}


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


@dataclass(frozen=True)
class CaseConfig:
    """Fully resolved run configuration.

    gamma and c_nit are always explicit here: parsing fills in
    gamma = delta * 10^-(k'+1) and c_nit = 5 (k'+1) unless overridden, so a
    config round-trips through the run manifest unchanged.  seed is recorded
    for reproducibility metadata; the shipped commands are deterministic.
    """

    command: str
    k_prime: int
    mesh: tuple[int, ...]
    re: tuple[float, ...]
    gamma: float
    c_nit: float
    dt: float
    t_end: float
    rho_inf: float
    out: str
    threads: int
    seed: int


def _load_source(source) -> dict:
    if source is None:
        return {}
    if isinstance(source, dict):
        return dict(source)
    path = Path(source)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file '{path}': {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file '{path}' is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file '{path}' must hold one JSON object")
    return data


def _as_int(value) -> int:
    out = float(value)
    if out != int(out):
        raise ValueError(value)
    return int(out)


def _scalar(raw: dict, key: str, cast, kind: str):
    value = raw[key]
    if isinstance(value, (list, tuple, dict)):
        raise ConfigError(f"key '{key}' must be a single {kind}")
    try:
        return cast(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"key '{key}' is not a valid {kind}: {value!r}") from exc


def _number_list(raw: dict, key: str, cast, kind: str) -> tuple:
    value = raw[key]
    if isinstance(value, str):
        parts = [p for p in value.split(",") if p.strip()]
    elif isinstance(value, (list, tuple)):
        parts = list(value)
    else:
        parts = [value]
    if not parts:
        raise ConfigError(f"key '{key}' must list at least one {kind}")
    try:
        return tuple(cast(p) for p in parts)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"key '{key}' has an invalid {kind}: {value!r}") from exc


def parse_config(source=None, overrides=None) -> CaseConfig:
    """Resolve a run configuration from a JSON file or dict plus overrides.

    Parameters
    ----------
    source : str | Path | dict | None
        Flat JSON configuration (file path or already-loaded mapping).
    overrides : dict | None
        Flag-style overrides; entries with value None are ignored and the
        rest win over ``source``.

    Returns
    -------
    CaseConfig
        Validated configuration with gamma and cNit resolved.

    Raises
    ------
    ConfigError
        Naming the offending key for unknown keys, type errors, violated
        bounds, a missing or unknown command, or when both 'gamma' and
        'delta' are given (they are mutually exclusive).

    Keys starting with '_' are ignored, so a run manifest parses back into
    the configuration that produced it.  The DIVSPLINE_OUT environment
    variable, when set, overrides the output directory.
    """
    raw: dict = {}
    for layer in (_load_source(source), dict(overrides or {})):
        for key, value in layer.items():
            if isinstance(key, str) and key.startswith("_"):
                continue
            key = _KEY_ALIASES.get(key, key)
            if key not in _KNOWN_KEYS:
                raise ConfigError(f"unknown configuration key '{key}'")
            if value is not None:
                raw[key] = value

    if "gamma" in raw and "delta" in raw:
        raise ConfigError("keys 'gamma' and 'delta' are mutually exclusive")
    if "command" not in raw:
        raise ConfigError("missing required key 'command'")
    command = str(raw["command"])
    if command not in COMMANDS:
        names = ", ".join(COMMANDS)
        raise ConfigError(f"key 'command' must be one of {names}; got '{command}'")

    k_prime = _scalar(raw, "kPrime", _as_int, "integer") if "kPrime" in raw else 1
    if k_prime < 1:
        raise ConfigError("key 'kPrime' must be at least 1")

    defaults = _COMMAND_DEFAULTS[command]
    mesh = (
        _number_list(raw, "mesh", _as_int, "integer")
        if "mesh" in raw
        else defaults["mesh"]
    )
    re = _number_list(raw, "re", float, "number") if "re" in raw else defaults["re"]
    if any(n < 1 for n in mesh):
        raise ConfigError("key 'mesh' entries must be positive integers")
    if any(not r > 0 for r in re):
        raise ConfigError("key 're' entries must be positive")
    if command != "convergence" and len(mesh) != 1:
        raise ConfigError(f"command '{command}' takes a single 'mesh' resolution")
    if command != "robustness" and len(re) != 1:
        raise ConfigError(f"command '{command}' takes a single 're' value")

    delta = _scalar(raw, "delta", float, "number") if "delta" in raw else 1.0
    if not delta > 0:
        raise ConfigError("key 'delta' must be positive")
    if "gamma" in raw:
        gamma = _scalar(raw, "gamma", float, "number")
        if gamma < 0:
            raise ConfigError("key 'gamma' must be nonnegative")
    else:
        gamma = delta * 10.0 ** (-(k_prime + 1))

    c_nit = (
        _scalar(raw, "cNit", float, "number")
        if "cNit" in raw
        else 5.0 * (k_prime + 1)
    )
    if not c_nit > 0:
        raise ConfigError("key 'cNit' must be positive")

    dt = _scalar(raw, "dt", float, "number") if "dt" in raw else 1e-2
    if not dt > 0:
        raise ConfigError("key 'dt' must be positive")
    t_end = _scalar(raw, "tEnd", float, "number") if "tEnd" in raw else 1.0
    if not t_end > 0:
        raise ConfigError("key 'tEnd' must be positive")
    rho_inf = _scalar(raw, "rhoInf", float, "number") if "rhoInf" in raw else 0.5
    if not 0.0 <= rho_inf <= 1.0:
        raise ConfigError("key 'rhoInf' must lie in [0, 1]")
    threads = _scalar(raw, "threads", _as_int, "integer") if "threads" in raw else 1
    if threads < 1:
        raise ConfigError("key 'threads' must be at least 1")
    seed = _scalar(raw, "seed", _as_int, "integer") if "seed" in raw else 0

    out = str(raw.get("out", "."))
    env_out = os.environ.get("DIVSPLINE_OUT")
    if env_out:
        out = env_out

    return CaseConfig(
        command=command,
        k_prime=k_prime,
        mesh=tuple(int(n) for n in mesh),
        re=tuple(float(r) for r in re),
        gamma=float(gamma),
        c_nit=float(c_nit),
        dt=float(dt),
        t_end=float(t_end),
        rho_inf=float(rho_inf),
        out=out,
        threads=threads,
        seed=seed,
    )


def config_dict(config: CaseConfig) -> dict:
    """Canonical JSON mapping of a resolved configuration."""
    return {
        "command": config.command,
        "kPrime": config.k_prime,
        "mesh": list(config.mesh),
        "re": list(config.re),
        "gamma": config.gamma,
        "cNit": config.c_nit,
        "dt": config.dt,
        "tEnd": config.t_end,
        "rhoInf": config.rho_inf,
        "out": config.out,
        "threads": config.threads,
        "seed": config.seed,
    }


def write_manifest(path, config: CaseConfig, wall_time: float, extras=None) -> None:
    """Write the run manifest: resolved config plus '_'-prefixed metadata."""
    data = config_dict(config)
    data["_version"] = f"divspline {__version__}"
    data["_wallTimeSeconds"] = wall_time
    for key, value in (extras or {}).items():
        data[f"_{key}"] = value
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _fmt(value) -> str:
    return format(float(value), ".17g")


def write_csv(path, header, rows) -> None:
    """Comma-separated table with 17-significant-digit floats."""
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n")


def _grid_values(space: TensorSpace, grid: np.ndarray, xs, ys) -> np.ndarray:
    cx = collocation_matrix(space.kv_x, xs).toarray()
    cy = collocation_matrix(space.kv_y, ys).toarray()
    return cy @ grid @ cx.T


def write_vtk_fields(
    path, pair: DivConformingPair, state: StateVector, title: str, extra_scalars=()
) -> None:
    """Legacy-VTK STRUCTURED_POINTS dump of velocity, pressure, divergence.

    The grid has 4 * elements + 1 sample points per direction.
    extra_scalars lists (name, space, coefficient grid) triples sampled on
    the same grid.
    """
    mesh = pair.mesh
    a1, b1, a2, b2 = mesh.domain_extent
    npx = 4 * mesh.nx + 1
    npy = 4 * mesh.ny + 1
    xs = np.linspace(a1, b1, npx)
    ys = np.linspace(a2, b2, npy)
    u1 = _grid_values(pair.vx, pair.component_coeffs(state.u, 0), xs, ys)
    u2 = _grid_values(pair.vy, pair.component_coeffs(state.u, 1), xs, ys)
    q_shape = (pair.q.n_y, pair.q.n_x)
    p = _grid_values(pair.q, state.p.reshape(q_shape), xs, ys)
    div = _grid_values(
        pair.q, divergence_coefficients(pair, state.u).reshape(q_shape), xs, ys
    )
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {npx} {npy} 1",
        f"ORIGIN {_fmt(a1)} {_fmt(a2)} 0",
        f"SPACING {_fmt((b1 - a1) / (npx - 1))} {_fmt((b2 - a2) / (npy - 1))} 1",
        f"POINT_DATA {npx * npy}",
        "VECTORS velocity double",
    ]
    for iy in range(npy):
        for ix in range(npx):
            lines.append(f"{_fmt(u1[iy, ix])} {_fmt(u2[iy, ix])} 0")
    scalars = [("pressure", p), ("divergence", div)]
    for name, space, grid in extra_scalars:
        scalars.append((name, _grid_values(space, grid, xs, ys)))
    for name, values in scalars:
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        for iy in range(npy):
            for ix in range(npx):
                lines.append(_fmt(values[iy, ix]))
    Path(path).write_text("\n".join(lines) + "\n")


def _convergence_point(args):
    k_prime, n, re, gamma, c_nit = args
    return run_convergence_study(
        k_prime, meshes=(n,), re=re, gamma=gamma, c_nit=c_nit
    )[0]


def _robustness_point(args):
    k_prime, n, re, gamma, c_nit = args
    return run_reynolds_robustness(
        k_prime, n=n, re_list=(re,), gamma=gamma, c_nit=c_nit
    )[0]


def _map_points(points, worker, threads):
    if threads > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=min(threads, len(points))) as pool:
            return list(pool.map(worker, points))
    return [worker(p) for p in points]


def _run_convergence(config: CaseConfig, out_dir: Path) -> dict:
    points = [
        (config.k_prime, n, config.re[0], config.gamma, config.c_nit)
        for n in config.mesh
    ]
    rows = _map_points(points, _convergence_point, config.threads)
    table = []
    prev = None
    for row in rows:
        l2_order = math.log2(prev.l2 / row.l2) if prev else math.nan
        h1_order = math.log2(prev.h1 / row.h1) if prev else math.nan
        table.append((row.h, row.l2, l2_order, row.h1, h1_order))
        prev = row
    write_csv(out_dir / "convergence.csv", ("h", "L2", "L2order", "H1", "H1order"), table)
    finest = rows[-1]
    pair = unit_square_pair(finest.n, config.k_prime)
    write_vtk_fields(
        out_dir / "fields.vtk", pair, finest.state, "steady flow, finest mesh"
    )
    return {"divMax": [float(r.div_max) for r in rows]}


def _run_robustness(config: CaseConfig, out_dir: Path) -> dict:
    points = [
        (config.k_prime, config.mesh[0], re, config.gamma, config.c_nit)
        for re in config.re
    ]
    rows = _map_points(points, _robustness_point, config.threads)
    write_csv(
        out_dir / "robustness.csv",
        ("Re", "L2", "H1", "divMax"),
        [(r.re, r.l2, r.h1, r.div_max) for r in rows],
    )
    pair = unit_square_pair(config.mesh[0], config.k_prime)
    write_vtk_fields(
        out_dir / "fields.vtk", pair, rows[-1].state, "steady flow, largest Re"
    )
    return {}


def _run_pressure_robustness(config: CaseConfig, out_dir: Path) -> dict:
    result = run_pressure_robustness(
        config.k_prime,
        n=config.mesh[0],
        re=config.re[0],
        gamma=config.gamma,
        c_nit=config.c_nit,
    )
    write_csv(
        out_dir / "pressure_robustness.csv",
        ("L2_base", "L2_perturbed", "absDiff"),
        [(result.l2_base, result.l2_perturbed, result.abs_diff_l2)],
    )
    pair = unit_square_pair(config.mesh[0], config.k_prime)
    write_vtk_fields(
        out_dir / "fields.vtk", pair, result.state_base, "steady flow, base forcing"
    )
    return {
        "relCoeffChange": float(result.rel_coeff_change),
        "h1Base": float(result.h1_base),
        "h1Perturbed": float(result.h1_perturbed),
    }


def _run_cavity(config: CaseConfig, out_dir: Path) -> dict:
    result = run_cavity(
        config.k_prime,
        n=config.mesh[0],
        re=config.re[0],
        gamma=config.gamma,
        c_nit=config.c_nit,
    )
    write_csv(
        out_dir / "centerline.csv",
        ("y", "u1", "x", "u2"),
        zip(result.profile_y, result.profile_u1, result.profile_x, result.profile_u2),
    )
    psi_space, psi_coeffs = streamfunction(result.pair, result.state.u)
    write_vtk_fields(
        out_dir / "fields.vtk",
        result.pair,
        result.state,
        "lid-driven cavity",
        extra_scalars=[("streamfunction", psi_space, psi_coeffs)],
    )
    return {
        "residualNorm": float(result.residual_norm),
        "newtonIterations": int(result.iterations),
        "jumpEnergy": float(result.j_energy),
        "strainEnergy": float(result.strain_energy),
        "divMax": float(result.div_max),
    }


def _run_taylor_green(config: CaseConfig, out_dir: Path) -> dict:
    result = run_taylor_green_2d(
        config.k_prime,
        n=config.mesh[0],
        re=config.re[0],
        dt=config.dt,
        t_end=config.t_end,
        gamma=config.gamma,
        c_nit=config.c_nit,
        rho_inf=config.rho_inf,
    )
    write_csv(
        out_dir / "diagnostics.csv",
        ("t", "Ek", "eps", "eps_r", "eps_m", "divMax"),
        [
            (r.time, r.e_k, r.eps_total, r.eps_resolved, r.eps_model, r.div_max)
            for r in result.records
        ],
    )
    write_vtk_fields(
        out_dir / "fields.vtk",
        result.pair,
        result.history[-1],
        "decaying vortex, final state",
    )
    return {}


_RUNNERS = {
    "convergence": _run_convergence,
    "robustness": _run_robustness,
    "pressure-robustness": _run_pressure_robustness,
    "cavity": _run_cavity,
    "taylor-green-2d": _run_taylor_green,
}


def run(config: CaseConfig) -> Path:
    """Execute one command, writing manifest, CSVs, and VTK fields.

    Returns the output directory.
    """
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    extras = _RUNNERS[config.command](config, out_dir)
    write_manifest(
        out_dir / "manifest.json", config, time.perf_counter() - start, extras
    )
    return out_dir


def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="divspline",
        description=(
            "Divergence-conforming B-spline flow solver with skeleton-jump "
            "stabilization: convergence, robustness, cavity, and vortex-decay "
            "studies."
        ),
    )
    parser.add_argument("--config", metavar="PATH", help="flat JSON config file")
    parser.add_argument("--command", choices=COMMANDS, help="study to run")
    parser.add_argument("--kprime", type=int, metavar="INT", help="pressure degree k'")
    parser.add_argument(
        "--mesh",
        metavar="INT[,INT...]",
        help="elements per direction; a comma list sweeps meshes (convergence)",
    )
    parser.add_argument(
        "--re",
        metavar="REAL[,REAL...]",
        help="Reynolds number; a comma list sweeps Re (robustness)",
    )
    parser.add_argument(
        "--delta", type=float, metavar="REAL", help="stabilization scale delta"
    )
    parser.add_argument(
        "--gamma",
        type=float,
        metavar="REAL",
        help="stabilization constant gamma (overrides the delta-derived value)",
    )
    parser.add_argument(
        "--cnit", type=float, metavar="REAL", help="Nitsche penalty constant"
    )
    parser.add_argument("--dt", type=float, metavar="REAL", help="time-step size")
    parser.add_argument("--tend", type=float, metavar="REAL", help="final time")
    parser.add_argument(
        "--rho-inf",
        type=float,
        metavar="REAL",
        dest="rho_inf",
        help="generalized-alpha spectral radius at infinity",
    )
    parser.add_argument(
        "--out", metavar="DIR", help="output directory (DIVSPLINE_OUT overrides)"
    )
    parser.add_argument(
        "--threads",
        type=int,
        metavar="INT",
        help="process-pool width for sweep points",
    )
    parser.add_argument(
        "--seed", type=int, metavar="INT", help="seed recorded in the manifest"
    )
    return parser


def main(argv=None) -> int:
    args = build_arg_parser().parse_args(argv)
    overrides = {
        "command": args.command,
        "kPrime": args.kprime,
        "mesh": args.mesh,
        "re": args.re,
        "delta": args.delta,
        "gamma": args.gamma,
        "cNit": args.cnit,
        "dt": args.dt,
        "tEnd": args.tend,
        "rhoInf": args.rho_inf,
        "out": args.out,
        "threads": args.threads,
        "seed": args.seed,
    }
    try:
        config = parse_config(args.config, overrides)
    except ConfigError as exc:
        print(f"divspline: configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        out_dir = run(config)
    except Exception as exc:  # noqa: BLE001 - report the failing stage and exit
        print(f"divspline: command '{config.command}' failed: {exc}", file=sys.stderr)
        return 1
    print(f"divspline: wrote {config.command} results to {out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
