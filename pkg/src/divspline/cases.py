"""Benchmark cases and diagnostics.

Provides the smooth manufactured solution on the unit square with its
Navier-Stokes forcing, the lid-driven cavity, and the 2D Taylor-Green vortex
on [0, 2 pi]^2, together with error norms, kinetic-energy/dissipation
diagnostics, and the sweep drivers used by the command-line interface.

The manufactured velocity is

    u1 =  2 e^x (x-1)^2 x^2 (y^2 - y) (2y - 1)
    u2 = -e^x (x-1) x (x^2 + 3x - 2) (y-1)^2 y^2

which is divergence-free and vanishes on the boundary; the matching smooth
pressure is a quartic-times-exponential form with zero-mean normalization.
The forcing f = (u . grad) u + grad p - nu lap u is derived symbolically once
and compiled to numpy callables.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .bspline import basis_integrals, make_open_uniform, open_knots
from .forms import (
    StabParams,
    assemble_skeleton,
    assemble_strain,
    assemble_velocity_mass,
)
from .mesh import build_mesh
from .solver import (
    ConvergenceError,
    FlowProblem,
    NewtonConfig,
    TimeConfig,
    TimeStepper,
    solve_steady,
)
from .space import (
    DivConformingPair,
    StateVector,
    TensorSpace,
    build_pair,
    divergence_coefficients,
    element_tables,
    eval_velocity,
)

__all__ = [
    "ManufacturedCase",
    "CavityCase",
    "DiagnosticsRecord",
    "ConvergenceRow",
    "CavityResult",
    "TaylorGreenResult",
    "PressureRobustnessResult",
    "unit_square_pair",
    "taylor_green_pair",
    "manufactured_forcing",
    "error_norms",
    "energy_and_dissipation",
    "streamfunction",
    "run_convergence_study",
    "run_reynolds_robustness",
    "run_pressure_robustness",
    "run_cavity",
    "run_taylor_green_2d",
]


@lru_cache(maxsize=1)
def _manufactured_callables():
    """Symbolically derived fields compiled to numpy; built once."""
    import sympy as sy

    x, y, nu = sy.symbols("x y nu", real=True)
    u1 = 2 * sy.exp(x) * (x - 1) ** 2 * x**2 * (y**2 - y) * (2 * y - 1)
    u2 = -sy.exp(x) * (x - 1) * x * (x**2 + 3 * x - 2) * (y - 1) ** 2 * y**2
    p = -424 + 156 * sy.E + (y**2 - y) * (
        -456
        + sy.exp(x)
        * (
            456
            + x**2 * (228 - 5 * (y**2 - y))
            + 2 * x * (-228 + (y**2 - y))
            + 2 * x**3 * (-36 + (y**2 - y))
            + x**4 * (12 + y**2 - y)
        )
    )
    grads = [sy.diff(u1, x), sy.diff(u1, y), sy.diff(u2, x), sy.diff(u2, y)]
    conv = [u1 * grads[0] + u2 * grads[1], u1 * grads[2] + u2 * grads[3]]
    visc = [
        sy.diff(u1, x, 2) + sy.diff(u1, y, 2),
        sy.diff(u2, x, 2) + sy.diff(u2, y, 2),
    ]
    dp = [sy.diff(p, x), sy.diff(p, y)]
    f_ns = [sy.simplify(conv[i] + dp[i] - nu * visc[i]) for i in (0, 1)]
    f_st = [sy.simplify(dp[i] - nu * visc[i]) for i in (0, 1)]

    def lam(expr, with_nu=False):
        args = (x, y, nu) if with_nu else (x, y)
        return sy.lambdify(args, expr, modules="numpy")

    return {
        "velocity": (lam(u1), lam(u2)),
        "gradient": tuple(lam(g) for g in grads),
        "pressure": lam(p),
        "forcing_ns": tuple(lam(f, with_nu=True) for f in f_ns),
        "forcing_stokes": tuple(lam(f, with_nu=True) for f in f_st),
    }


def manufactured_forcing(nu: float, convection: bool = True):
    """Forcing callable f(x, y) -> (f1, f2) for the manufactured solution."""
    key = "forcing_ns" if convection else "forcing_stokes"
    f1, f2 = _manufactured_callables()[key]
    return lambda xx, yy: (f1(xx, yy, nu), f2(xx, yy, nu))


@dataclass(frozen=True)
class ManufacturedCase:
    """Manufactured steady solution on the unit square at one Reynolds number."""

    re: float
    convection: bool = True

    @property
    def nu(self) -> float:
        return 1.0 / self.re

    def velocity(self, x, y):
        u1, u2 = _manufactured_callables()["velocity"]
        return u1(x, y), u2(x, y)

    def velocity_gradient(self, x, y):
        """(d u1/dx, d u1/dy, d u2/dx, d u2/dy)."""
        return tuple(g(x, y) for g in _manufactured_callables()["gradient"])

    def pressure(self, x, y):
        return _manufactured_callables()["pressure"](x, y)

    def forcing(self, x, y):
        f1, f2 = _manufactured_callables()[
            "forcing_ns" if self.convection else "forcing_stokes"
        ]
        return f1(x, y, self.nu), f2(x, y, self.nu)


@dataclass(frozen=True)
class CavityCase:
    """Lid-driven cavity: u = (1, 0) on the top edge, no-slip elsewhere."""

    re: float

    @property
    def nu(self) -> float:
        return 1.0 / self.re

    @staticmethod
    def lid_velocity(x, y):
        on_lid = np.asarray(y) >= 1.0 - 1e-12
        return np.where(on_lid, 1.0, 0.0), np.zeros_like(np.asarray(x, dtype=float))


def unit_square_pair(n: int, k_prime: int) -> DivConformingPair:
    """Uniform n x n mesh of [0,1]^2 with the order-k' conforming pair."""
    kx = make_open_uniform(k_prime + 1, n, (0.0, 1.0))
    ky = make_open_uniform(k_prime + 1, n, (0.0, 1.0))
    return build_pair(build_mesh(kx, ky), k_prime)


def taylor_green_pair(n: int, k_prime: int) -> DivConformingPair:
    two_pi = 2.0 * math.pi
    kx = make_open_uniform(k_prime + 1, n, (0.0, two_pi))
    ky = make_open_uniform(k_prime + 1, n, (0.0, two_pi))
    return build_pair(build_mesh(kx, ky), k_prime)


def taylor_green_velocity(x, y):
    return np.sin(x) * np.cos(y), -np.cos(x) * np.sin(y)


def error_norms(pair: DivConformingPair, state: StateVector, velocity, gradient=None):
    """L2 and H1-seminorm velocity errors by elevated Gauss quadrature.

    velocity maps (x, y) arrays to (u1, u2); gradient, when given, maps them
    to (d u1/dx, d u1/dy, d u2/dx, d u2/dy). Uses k'+3 points per direction
    so the quadrature error stays below the discretization error.
    """
    tab = element_tables(pair, pair.k_prime + 3, max_deriv=1)
    x, y = tab.points[:, :, 0], tab.points[:, :, 1]
    w = tab.weights
    c1 = pair.component_coeffs(state.u, 0).ravel()
    c2 = pair.component_coeffs(state.u, 1).ravel()
    ex1, ex2 = velocity(x, y)
    d1 = tab.field_values("vx", c1, 0, 0) - ex1
    d2 = tab.field_values("vy", c2, 0, 0) - ex2
    l2 = math.sqrt(float(np.sum(w * (d1 * d1 + d2 * d2))))
    if gradient is None:
        return l2, None
    g11, g12, g21, g22 = gradient(x, y)
    e11 = tab.field_values("vx", c1, 1, 0) - g11
    e12 = tab.field_values("vx", c1, 0, 1) - g12
    e21 = tab.field_values("vy", c2, 1, 0) - g21
    e22 = tab.field_values("vy", c2, 0, 1) - g22
    h1 = math.sqrt(float(np.sum(w * (e11**2 + e12**2 + e21**2 + e22**2))))
    return l2, h1


@dataclass
class DiagnosticsRecord:
    """Energy/dissipation diagnostics of one state in a time series."""

    time: float
    e_k: float
    eps_total: float
    eps_resolved: float
    eps_model: float
    div_max: float
    l2_err: float | None = None
    h1_err: float | None = None


def max_divergence(pair: DivConformingPair, u: np.ndarray) -> float:
    """Sup-norm bound of div u_h via its exact pressure-space coefficients.

    B-spline coefficients bound the spline sup-norm (convex-hull property),
    so this dominates the maximum over any quadrature point set.
    """
    d = divergence_coefficients(pair, u)
    return float(np.abs(d).max())


def energy_and_dissipation(
    pair: DivConformingPair, history: list[StateVector], params: StabParams
) -> list[DiagnosticsRecord]:
    """Diagnostics series: E_k, resolved/model dissipation, total eps.

    E_k = ||u||^2 / (2V); eps_r = (2 nu / V) (grad_s u, grad_s u);
    eps_m = (1/V) J(u; u, u); eps = -dE_k/dt by centered differences (NaN at
    the series endpoints). Requires at least 3 uniformly spaced states.
    """
    if len(history) < 3:
        raise ValueError("need at least 3 history points for the eps differencing")
    times = np.array([st.time for st in history])
    steps = np.diff(times)
    if not np.allclose(steps, steps[0], rtol=1e-10, atol=1e-14):
        raise ValueError("history must be uniformly spaced in time")
    dt = float(steps[0])
    vol = pair.mesh.area
    mass = assemble_velocity_mass(pair)
    strain = assemble_strain(pair)
    e_k = np.array([0.5 * st.u @ (mass @ st.u) / vol for st in history])
    eps = np.full(len(history), np.nan)
    eps[1:-1] = -(e_k[2:] - e_k[:-2]) / (2.0 * dt)
    records = []
    for i, st in enumerate(history):
        eps_r = params.nu / vol * float(st.u @ (strain @ st.u))
        j = assemble_skeleton(pair, st.u, params)
        eps_m = float(st.u @ (j @ st.u)) / vol
        records.append(
            DiagnosticsRecord(
                time=float(times[i]),
                e_k=float(e_k[i]),
                eps_total=float(eps[i]),
                eps_resolved=eps_r,
                eps_model=eps_m,
                div_max=max_divergence(pair, st.u),
            )
        )
    return records


def streamfunction(pair: DivConformingPair, u: np.ndarray):
    """Streamfunction spline (space, coefficient grid) with psi(x, 0) = 0.

    psi is the exact y-antiderivative of u1; when u is discretely
    divergence-free and u2 vanishes on the bottom edge, -d psi/dx = u2.
    """
    vx = pair.vx
    w = basis_integrals(vx.kv_y)
    g1 = pair.component_coeffs(u, 0)
    coeffs = np.zeros((vx.n_y + 1, vx.n_x))
    coeffs[1:, :] = np.cumsum(w[:, None] * g1, axis=0)
    kv_y = open_knots(vx.kv_y.degree + 1, pair.mesh.unique_knots_y)
    return TensorSpace(kv_x=vx.kv_x, kv_y=kv_y), coeffs


@dataclass
class ConvergenceRow:
    n: int
    h: float
    l2: float
    l2_order: float
    h1: float
    h1_order: float
    div_max: float
    state: StateVector | None = None


def _steady_manufactured(
    pair: DivConformingPair,
    case: ManufacturedCase,
    delta: float,
    gamma: float | None,
    c_nit: float | None,
    config: NewtonConfig | None,
    forcing=None,
):
    params = StabParams.create(
        pair.k_prime, nu=case.nu, delta=delta, gamma=gamma, c_nit=c_nit
    )
    problem = FlowProblem(
        pair,
        params,
        f=forcing if forcing is not None else case.forcing,
        convection=case.convection,
    )
    return solve_steady(problem, re=case.re if case.convection else None, config=config)


def run_convergence_study(
    k_prime: int,
    meshes=(4, 8, 16, 32),
    re: float = 10.0,
    delta: float = 1.0,
    gamma: float | None = None,
    c_nit: float | None = None,
    config: NewtonConfig | None = None,
) -> list[ConvergenceRow]:
    """Manufactured-solution refinement sweep; orders from successive rows."""
    case = ManufacturedCase(re=re)
    rows: list[ConvergenceRow] = []
    for n in meshes:
        pair = unit_square_pair(n, k_prime)
        try:
            result = _steady_manufactured(pair, case, delta, gamma, c_nit, config)
        except ConvergenceError as exc:
            raise ConvergenceError(f"mesh {n}x{n}: {exc}") from exc
        l2, h1 = error_norms(pair, result.state, case.velocity, case.velocity_gradient)
        if rows:
            l2_order = math.log2(rows[-1].l2 / l2)
            h1_order = math.log2(rows[-1].h1 / h1)
        else:
            l2_order = h1_order = math.nan
        rows.append(
            ConvergenceRow(
                n=n,
                h=pair.mesh.h,
                l2=l2,
                l2_order=l2_order,
                h1=h1,
                h1_order=h1_order,
                div_max=max_divergence(pair, result.state.u),
                state=result.state,
            )
        )
    return rows


@dataclass
class RobustnessRow:
    re: float
    l2: float
    h1: float
    div_max: float
    state: StateVector | None = None


def run_reynolds_robustness(
    k_prime: int,
    n: int = 16,
    re_list=(1.0, 10.0, 100.0, 1000.0),
    delta: float = 1.0,
    gamma: float | None = None,
    c_nit: float | None = None,
    config: NewtonConfig | None = None,
) -> list[RobustnessRow]:
    """Fixed-mesh Reynolds sweep of manufactured-solution errors."""
    pair = unit_square_pair(n, k_prime)
    rows = []
    for re in re_list:
        case = ManufacturedCase(re=re)
        try:
            result = _steady_manufactured(pair, case, delta, gamma, c_nit, config)
        except ConvergenceError as exc:
            raise ConvergenceError(f"Re={re:g}: {exc}") from exc
        l2, h1 = error_norms(pair, result.state, case.velocity, case.velocity_gradient)
        rows.append(
            RobustnessRow(
                re=re,
                l2=l2,
                h1=h1,
                div_max=max_divergence(pair, result.state.u),
                state=result.state,
            )
        )
    return rows


@dataclass
class PressureRobustnessResult:
    l2_base: float
    l2_perturbed: float
    h1_base: float
    h1_perturbed: float
    abs_diff_l2: float
    rel_coeff_change: float
    state_base: StateVector | None = None


def run_pressure_robustness(
    k_prime: int = 1,
    n: int = 16,
    re: float = 10.0,
    delta: float = 1.0,
    gamma: float | None = None,
    c_nit: float | None = None,
    config: NewtonConfig | None = None,
) -> PressureRobustnessResult:
    """Compare solves with f and f + grad(sin(pi x y)) (irrotational shift)."""
    pair = unit_square_pair(n, k_prime)
    case = ManufacturedCase(re=re)

    def perturbed(x, y):
        f1, f2 = case.forcing(x, y)
        c = np.pi * np.cos(np.pi * x * y)
        return f1 + y * c, f2 + x * c

    base = _steady_manufactured(pair, case, delta, gamma, c_nit, config)
    pert = _steady_manufactured(
        pair, case, delta, gamma, c_nit, config, forcing=perturbed
    )
    l2_b, h1_b = error_norms(pair, base.state, case.velocity, case.velocity_gradient)
    l2_p, h1_p = error_norms(pair, pert.state, case.velocity, case.velocity_gradient)
    du = np.linalg.norm(pert.state.u - base.state.u)
    return PressureRobustnessResult(
        l2_base=l2_b,
        l2_perturbed=l2_p,
        h1_base=h1_b,
        h1_perturbed=h1_p,
        abs_diff_l2=abs(l2_p - l2_b),
        rel_coeff_change=du / np.linalg.norm(base.state.u),
        state_base=base.state,
    )


@dataclass
class CavityResult:
    pair: DivConformingPair
    state: StateVector
    residual_norm: float
    iterations: int
    profile_y: np.ndarray
    profile_u1: np.ndarray
    profile_x: np.ndarray
    profile_u2: np.ndarray
    j_energy: float
    strain_energy: float
    div_max: float


def run_cavity(
    k_prime: int,
    n: int,
    re: float,
    delta: float = 1.0,
    gamma: float | None = None,
    c_nit: float | None = None,
    config: NewtonConfig | None = None,
    n_profile: int = 257,
) -> CavityResult:
    """Steady lid-driven cavity with centerline profiles.

    re = 0 requests the Stokes limit (convection dropped, unit viscosity).
    """
    pair = unit_square_pair(n, k_prime)
    stokes = re == 0.0
    nu = 1.0 if stokes else 1.0 / re
    params = StabParams.create(k_prime, nu=nu, delta=delta, gamma=gamma, c_nit=c_nit)
    problem = FlowProblem(
        pair, params, u_d=CavityCase.lid_velocity, convection=not stokes
    )
    result = solve_steady(problem, re=None if stokes else re, config=config)
    samples = np.linspace(0.0, 1.0, n_profile)
    u1 = np.array(
        [
            eval_velocity(pair, result.state, np.array([0.5, t]), deriv_order=0).value[0]
            for t in samples
        ]
    )
    u2 = np.array(
        [
            eval_velocity(pair, result.state, np.array([t, 0.5]), deriv_order=0).value[1]
            for t in samples
        ]
    )
    j = assemble_skeleton(pair, result.state.u, params)
    strain = assemble_strain(pair)
    u = result.state.u
    return CavityResult(
        pair=pair,
        state=result.state,
        residual_norm=result.residual_norm,
        iterations=result.iterations,
        profile_y=samples,
        profile_u1=u1,
        profile_x=samples,
        profile_u2=u2,
        j_energy=float(u @ (j @ u)),
        strain_energy=float(u @ (strain @ u)),
        div_max=max_divergence(pair, u),
    )


@dataclass
class TaylorGreenResult:
    pair: DivConformingPair
    history: list[StateVector]
    records: list[DiagnosticsRecord]
    params: StabParams


def run_taylor_green_2d(
    k_prime: int,
    n: int,
    re: float = 100.0,
    dt: float = 1e-2,
    t_end: float = 1.0,
    delta: float = 1.0,
    gamma: float | None = None,
    c_nit: float | None = None,
    rho_inf: float = 0.5,
    newton: NewtonConfig | None = None,
) -> TaylorGreenResult:
    """Unforced 2D Taylor-Green vortex on [0, 2 pi]^2 with free-slip walls.

    The normal trace is fixed strongly and no tangential Nitsche terms are
    applied, which the initial vortex satisfies exactly.
    """
    pair = taylor_green_pair(n, k_prime)
    params = StabParams.create(k_prime, nu=1.0 / re, delta=delta, gamma=gamma, c_nit=c_nit)
    problem = FlowProblem(pair, params, nitsche=False, convection=True)
    cfg = TimeConfig(dt=dt, t_end=t_end, rho_inf=rho_inf, newton=newton or NewtonConfig())
    stepper = TimeStepper(problem, cfg)
    history = stepper.run(taylor_green_velocity)
    records = energy_and_dissipation(pair, history, params)
    return TaylorGreenResult(pair=pair, history=history, records=records, params=params)
