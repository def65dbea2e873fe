"""Nonlinear and time-dependent solvers for the stabilized discretization.

The linear core solves the bordered saddle system

    [ K  -B^T  0 ] [du]   [r_u]
    [ B   0    m ] [dp] = [r_p]
    [ 0  m^T   0 ] [dl]   [r_m]

by sparse LU, where m is the pressure-integral vector enforcing a zero
pressure mean. Strong normal-trace Dirichlet conditions (u . n = 0 on the
box boundary) are imposed by eliminating the boundary-normal velocity DOFs;
tangential conditions enter weakly through the operator.

The steady problem is solved by damped Newton with optional Reynolds
warm-start continuation. The unsteady problem uses the generalized-alpha
method in its first-order-system form, parameterized by the spectral radius
rho_inf:

    alpha_m = (3 - rho_inf) / (2 (1 + rho_inf)),  alpha_f = 1 / (1 + rho_inf),
    gamma_t = 1/2 + alpha_m - alpha_f,

with the stage residual evaluated at (t_{n+alpha_m}, t_{n+alpha_f}) and the
reported pressure being the alpha_f-stage pressure. The skeleton penalty
density eta is evaluated at the current iterate and frozen during each
linearization; the jump arguments are linearized exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .forms import (
    AssembledSystem,
    StabParams,
    assemble_convection,
    assemble_divergence,
    assemble_load,
    assemble_skeleton,
    assemble_velocity_mass,
    assemble_viscous_nitsche,
)
from .space import DivConformingPair, StateVector, pressure_mean_vector, zero_state

__all__ = [
    "NewtonConfig",
    "TimeConfig",
    "FlowProblem",
    "NewtonResult",
    "SingularSystemError",
    "ConvergenceError",
    "free_velocity_dofs",
    "solve_saddle",
    "newton_steady",
    "solve_steady",
    "TimeStepper",
]


class SingularSystemError(RuntimeError):
    """Sparse factorization failed or produced a non-finite solution."""


class ConvergenceError(RuntimeError):
    """Newton iteration failed to reach the requested tolerance."""


@dataclass(frozen=True)
class NewtonConfig:
    """Tolerances and continuation ladder for the nonlinear solves."""

    abs_tol: float = 1e-10
    rel_tol: float = 1e-8
    max_iter: int = 50
    damping: float = 0.5
    continuation_re: tuple = (100.0, 400.0, 1000.0, 2500.0, 5000.0, 7500.0, 10000.0)

    def __post_init__(self):
        if min(self.abs_tol, self.rel_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if not 0 < self.damping < 1:
            raise ValueError("damping must lie in (0, 1)")


@dataclass(frozen=True)
class TimeConfig:
    """Generalized-alpha step size, horizon, and spectral radius."""

    dt: float
    t_end: float
    rho_inf: float = 0.5
    newton: NewtonConfig = NewtonConfig()

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not 0 <= self.rho_inf <= 1:
            raise ValueError("rho_inf must lie in [0, 1]")

    @property
    def alpha_m(self) -> float:
        return 0.5 * (3.0 - self.rho_inf) / (1.0 + self.rho_inf)

    @property
    def alpha_f(self) -> float:
        return 1.0 / (1.0 + self.rho_inf)

    @property
    def gamma_t(self) -> float:
        return 0.5 + self.alpha_m - self.alpha_f

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass(frozen=True)
class FlowProblem:
    """One flow configuration: spaces, parameters, data, and active terms.

    f and u_d are callables mapping coordinate arrays (x, y) to component
    pairs; u_d supplies the tangential Dirichlet data imposed weakly when
    nitsche is set. nitsche=False leaves the tangential traction free
    (free-slip walls with the normal trace fixed strongly).
    """

    pair: DivConformingPair
    params: StabParams
    f: Callable | None = None
    u_d: Callable | None = None
    nitsche: bool = True
    convection: bool = True


@dataclass
class NewtonResult:
    """Converged state plus iteration diagnostics."""

    state: StateVector
    iterations: int
    residual_norm: float
    initial_residual: float


def free_velocity_dofs(pair: DivConformingPair) -> np.ndarray:
    """Velocity DOFs not carrying the strong normal-trace condition."""
    return np.setdiff1d(np.arange(pair.n_u), pair.normal_boundary_dofs.all)


def _bordered_lu(k_uu: sp.spmatrix, b: sp.spmatrix, m: np.ndarray):
    mc = sp.csc_matrix(m.reshape(-1, 1))
    a = sp.bmat([[k_uu, -b.T, None], [b, None, mc], [None, mc.T, None]], format="csc")
    try:
        return spla.splu(a)
    except RuntimeError as exc:
        raise SingularSystemError(
            f"saddle factorization failed (n_u={k_uu.shape[0]}, n_p={b.shape[0]}, "
            f"nnz={a.nnz}): {exc}"
        ) from exc


def _bordered_solve(lu, rhs_u: np.ndarray, rhs_p: np.ndarray, rhs_m: float = 0.0):
    x = lu.solve(np.concatenate([rhs_u, rhs_p, [rhs_m]]))
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("saddle solve produced non-finite values")
    n_u, n_p = len(rhs_u), len(rhs_p)
    return x[:n_u], x[n_u : n_u + n_p], float(x[-1])


def solve_saddle(system: AssembledSystem) -> tuple[np.ndarray, np.ndarray]:
    """Solve one constrained saddle system; returns (du, dp).

    The pressure-mean constraint is built into the factorized bordered
    matrix, so the returned dp has zero weighted mean up to solver roundoff.
    """
    lu = _bordered_lu(system.k_uu.tocsc(), sp.csc_matrix(system.b), system.mean_constraint)
    du, dp, _ = _bordered_solve(lu, system.rhs_u, system.rhs_p)
    return du, dp


class _SpatialOperator:
    """Steady residual and frozen-eta Jacobian over all velocity DOFs."""

    def __init__(self, problem: FlowProblem):
        pair, params = problem.pair, problem.params
        self.pair = pair
        self.params = params
        self.convection = problem.convection
        self.k, _ = assemble_viscous_nitsche(pair, params, nitsche=problem.nitsche)
        self.load = assemble_load(
            pair, params, f=problem.f, u_d=problem.u_d, nitsche=problem.nitsche
        )
        self.b = assemble_divergence(pair)
        self.bt = self.b.T.tocsr()
        self.m = pressure_mean_vector(pair)
        self.free = free_velocity_dofs(pair)
        self.b_free = self.b[:, self.free].tocsc()

    def linearize(self, u: np.ndarray):
        """Momentum residual (without -B^T p) and its Jacobian at u."""
        r = self.k @ u - self.load
        jac = self.k
        if self.convection:
            n1, n2 = assemble_convection(self.pair, u)
            r = r + n1 @ u
            jac = jac + n1 + n2
        if self.params.gamma > 0.0:
            j = assemble_skeleton(self.pair, u, self.params)
            r = r + j @ u
            jac = jac + j
        return r, jac


class _StageOperator:
    """Generalized-alpha stage residual/Jacobian as a function of u_{n+1}."""

    def __init__(self, spatial, mass, u_n, udot_n, cfg: TimeConfig):
        self.spatial = spatial
        self.mass = mass
        self.u_n = u_n
        self.alpha_f = cfg.alpha_f
        self.c_mass = cfg.alpha_m / (cfg.gamma_t * cfg.dt)
        # M udot_am = c_mass M u_new + M [ (1 - alpha_m/gamma_t) udot_n - c_mass u_n ]
        self.hist = mass @ ((1.0 - cfg.alpha_m / cfg.gamma_t) * udot_n - self.c_mass * u_n)
        self.b, self.bt = spatial.b, spatial.bt
        self.m, self.free, self.b_free = spatial.m, spatial.free, spatial.b_free

    def linearize(self, u_new: np.ndarray):
        u_af = self.u_n + self.alpha_f * (u_new - self.u_n)
        r_sp, jac_sp = self.spatial.linearize(u_af)
        r = self.c_mass * (self.mass @ u_new) + self.hist + r_sp
        jac = self.c_mass * self.mass + self.alpha_f * jac_sp
        return r, jac


def _newton(op, u0, p0, config: NewtonConfig, context: str) -> NewtonResult:
    free = op.free
    u, p = u0.copy(), p0.copy()

    def full_norm(r_u, u_c, p_c):
        res = np.concatenate(
            [(r_u - op.bt @ p_c)[free], op.b @ u_c, [op.m @ p_c]]
        )
        return res, float(np.linalg.norm(res))

    r_u, jac = op.linearize(u)
    res, norm = full_norm(r_u, u, p)
    norm0 = norm
    for it in range(config.max_iter + 1):
        if norm <= config.abs_tol or norm <= config.rel_tol * norm0:
            return NewtonResult(
                state=StateVector(u=u, p=p),
                iterations=it,
                residual_norm=norm,
                initial_residual=norm0,
            )
        if it == config.max_iter:
            break
        jac_ff = jac[free, :][:, free].tocsc()
        lu = _bordered_lu(jac_ff, op.b_free, op.m)
        nf = len(free)
        du_f, dp, _ = _bordered_solve(lu, -res[:nf], -res[nf:-1], -res[-1])
        s = 1.0
        while True:
            u_t = u.copy()
            u_t[free] += s * du_f
            p_t = p + s * dp
            r_t, jac_t = op.linearize(u_t)
            res_t, norm_t = full_norm(r_t, u_t, p_t)
            if norm_t < norm or s <= config.damping**8:
                u, p, r_u, jac, res, norm = u_t, p_t, r_t, jac_t, res_t, norm_t
                break
            s *= config.damping
    raise ConvergenceError(
        f"{context}: residual {norm:.3e} (target {config.abs_tol:.1e}) "
        f"after {config.max_iter} iterations"
    )


def newton_steady(
    problem: FlowProblem,
    config: NewtonConfig | None = None,
    initial: StateVector | None = None,
    context: str = "steady solve",
) -> NewtonResult:
    """Damped Newton for the steady problem from a given (or zero) state."""
    config = config or NewtonConfig()
    op = _SpatialOperator(problem)
    state = initial.copy() if initial is not None else zero_state(problem.pair)
    state.u[problem.pair.normal_boundary_dofs.all] = 0.0
    return _newton(op, state.u, state.p, config, context)


def solve_steady(
    problem: FlowProblem, re: float | None = None, config: NewtonConfig | None = None
) -> NewtonResult:
    """Steady solve with Reynolds warm-start continuation.

    re is the Reynolds number matching problem.params.nu; ladder steps below
    re are solved first, each warm-starting the next. re=None solves the
    problem directly.
    """
    config = config or NewtonConfig()
    if re is None:
        return newton_steady(problem, config)
    ladder = [r for r in config.continuation_re if r < re] + [re]
    nu_target = problem.params.nu
    state = None
    result = None
    for i, re_step in enumerate(ladder):
        prob = replace(problem, params=problem.params.with_nu(nu_target * re / re_step))
        result = newton_steady(
            prob,
            config,
            initial=state,
            context=f"continuation step {i + 1}/{len(ladder)} at Re={re_step:g}",
        )
        state = result.state
    return result


class TimeStepper:
    """Generalized-alpha integrator with steady forcing data.

    initialize() accepts either a callable initial field, which is projected
    onto the discretely divergence-free subspace through a constrained L2
    projection, or an existing StateVector used as given. The consistent
    initial acceleration and pressure solve the momentum equation at t0.
    """

    def __init__(self, problem: FlowProblem, cfg: TimeConfig):
        self.problem = problem
        self.cfg = cfg
        self.spatial = _SpatialOperator(problem)
        self.mass = assemble_velocity_mass(problem.pair)
        free = self.spatial.free
        self._mass_lu = _bordered_lu(
            self.mass[free, :][:, free].tocsc(), self.spatial.b_free, self.spatial.m
        )
        self.state: StateVector | None = None
        self.udot: np.ndarray | None = None

    def initialize(self, u0, t0: float = 0.0) -> StateVector:
        pair = self.problem.pair
        free = self.spatial.free
        if callable(u0):
            rhs = assemble_load(pair, self.problem.params, f=u0, nitsche=False)
            u_f, _, _ = _bordered_solve(self._mass_lu, rhs[free], np.zeros(pair.n_p))
            u = np.zeros(pair.n_u)
            u[free] = u_f
        else:
            u = u0.u.copy()
            u[pair.normal_boundary_dofs.all] = 0.0
        r_u, _ = self.spatial.linearize(u)
        a_f, p0, _ = _bordered_solve(self._mass_lu, -r_u[free], np.zeros(pair.n_p))
        self.udot = np.zeros(pair.n_u)
        self.udot[free] = a_f
        self.state = StateVector(u=u, p=p0, time=t0)
        return self.state

    def step(self) -> StateVector:
        if self.state is None:
            raise RuntimeError("call initialize() before stepping")
        cfg = self.cfg
        t_new = self.state.time + cfg.dt
        op = _StageOperator(self.spatial, self.mass, self.state.u, self.udot, cfg)
        # same-order predictor: udot is divergence-free with zero normal
        # trace, so the start state satisfies the constraints exactly
        u_start = self.state.u + cfg.dt * self.udot
        try:
            res = _newton(
                op, u_start, self.state.p, cfg.newton, context=f"time step to t={t_new:g}"
            )
        except ConvergenceError as exc:
            raise ConvergenceError(f"{exc}; consider reducing dt") from exc
        u_new = res.state.u
        g = cfg.gamma_t
        self.udot = (u_new - self.state.u) / (g * cfg.dt) + (1.0 - 1.0 / g) * self.udot
        self.state = StateVector(u=u_new, p=res.state.p, time=t_new)
        return self.state

    def run(self, u0, t0: float = 0.0) -> list[StateVector]:
        """Initialize and advance to t_end; returns all states including t0."""
        history = [self.initialize(u0, t0).copy()]
        for _ in range(self.cfg.n_steps):
            history.append(self.step().copy())
        return history
