"""Fully discrete conservative ALE-SUPG time stepping.

Backward Euler::

    (M^{n+1}/dt + A) u^{n+1} = M^n u^n / dt + F

Crank-Nicolson::

    (M^{n+1}/dt + A/2) u^{n+1} = (M^n/dt - A/2) u^n + F

Under the default ``midpoint`` policy A and F live on the midpoint
geometry at t^{n+1/2} (the GCL-compatible choice); the ``endpoint``
policy assembles them on Omega^{n+1} at t^{n+1}.
"""
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import forms, linalg
from .forms import cell_data, Stabilization, SparseSystem
from .mesh import signed_areas

log = logging.getLogger(__name__)

SCHEMES = ("be", "cn")
POLICIES = ("midpoint", "endpoint")


class TimeStepRestrictionError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class StepState:
    t: float
    u: np.ndarray
    coords: np.ndarray


@dataclass(frozen=True)
class StepperConfig:
    scheme: str = "be"
    dt: float = 0.01
    policy: str = "midpoint"
    stab: Stabilization = field(default_factory=Stabilization)
    strict_cn: bool = False
    qorder: int = None
    rtol: float = linalg.DEFAULT_RTOL

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.policy not in POLICIES:
            raise ValueError(f"unknown evaluation policy {self.policy!r}; expected one of {POLICIES}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")


@dataclass(frozen=True)
class CNCheck:
    ok: bool
    bound: float
    beta1: float
    beta2: float
    dt: float

    @property
    def margin(self):
        return self.bound - self.dt


@dataclass(frozen=True, eq=False)
class StepResult:
    state: StepState
    frame: object
    delta: np.ndarray
    t_eval: float
    coords_eval: np.ndarray
    system: SparseSystem  # before Dirichlet constraints
    mass_np1: object
    cn_check: CNCheck = None


def cn_timestep_check(frame, dt=None):
    """Crank-Nicolson step restriction dt < 1/(beta1 + beta2).

    beta1 = |div w|_inf * max(|K_mid|/|K_{n+1}|) / 2 and
    beta2 = |div w|_inf * max(|K_mid|/|K_n|) / 2, divergence taken on
    the midpoint geometry.
    """
    dt = frame.dt if dt is None else dt
    a_n = signed_areas(frame.coords_n, frame.cells)
    a_np1 = signed_areas(frame.coords_np1, frame.cells)
    a_mid = signed_areas(frame.coords_mid, frame.cells)
    divmax = float(np.max(np.abs(frame.div_w_cells))) if len(frame.div_w_cells) else 0.0
    beta1 = 0.5 * divmax * float(np.max(a_mid / a_np1))
    beta2 = 0.5 * divmax * float(np.max(a_mid / a_n))
    total = beta1 + beta2
    bound = np.inf if total == 0 else 1.0 / total
    return CNCheck(bool(dt < bound), bound, beta1, beta2, dt)


def project_initial(u0, space, coords, t=0.0, qorder=None, rtol=linalg.DEFAULT_RTOL):
    """L2 projection of u0(t, x) onto the discrete space."""
    cd = cell_data(space, coords, qorder)
    M = forms.assemble_mass(space, coords, cd=cd)
    load = forms.assemble_load(space, coords, u0, t, cd=cd)
    return linalg.solve(M, load, rtol=rtol)


def evaluation_point(frame, policy):
    if policy == "midpoint":
        return frame.coords_mid, frame.t_n + 0.5 * frame.dt
    return frame.coords_np1, frame.t_np1


def assemble_step_system(state, frame, space, coeffs, config, mass_n=None):
    """Unconstrained per-step system plus the pieces diagnostics need."""
    if not np.isclose(state.t, frame.t_n, rtol=0, atol=1e-12 * max(1.0, abs(state.t))):
        raise ValueError(f"state time {state.t} does not match frame start {frame.t_n}")
    dt = frame.dt
    coords_eval, t_eval = evaluation_point(frame, config.policy)
    cd = cell_data(space, coords_eval, config.qorder)
    w = frame.w_nodes
    delta = forms.cell_deltas(space, coords_eval, coeffs, w, config.stab, t_eval, dt=dt, cd=cd)
    A = forms.assemble_ale_supg(space, coords_eval, coeffs, w, delta, t_eval, cd=cd)
    F = forms.assemble_rhs(space, coords_eval, coeffs, w, delta, t_eval, cd=cd)
    M_n = forms.assemble_mass(space, frame.coords_n, config.qorder) if mass_n is None else mass_n
    M_np1 = forms.assemble_mass(space, frame.coords_np1, config.qorder)
    u = state.u
    if config.scheme == "be":
        op = M_np1 / dt + A
        rhs = (M_n @ u) / dt + F
    else:
        op = M_np1 / dt + 0.5 * A
        rhs = (M_n @ u) / dt - 0.5 * (A @ u) + F
    system = SparseSystem(linalg.finalize(op), rhs)
    return system, delta, t_eval, coords_eval, M_np1


def _step(state, frame, space, coeffs, bc, config, mass_n):
    cn = None
    if config.scheme == "cn":
        cn = cn_timestep_check(frame)
        if not cn.ok:
            msg = f"CN step at t={frame.t_n:g}: dt={frame.dt:g} exceeds bound {cn.bound:g}"
            if config.strict_cn:
                raise TimeStepRestrictionError(msg)
            (log.warning if config.stab.enforce_theory_bounds else log.debug)(msg)
    system, delta, t_eval, coords_eval, M_np1 = assemble_step_system(state, frame, space, coeffs, config, mass_n)
    constrained = system
    if bc is not None and bc.dirichlet:
        constrained = forms.apply_dirichlet(system, bc, space, frame.coords_np1, frame.t_np1)
    u = linalg.solve(constrained.operator, constrained.rhs, rtol=config.rtol)
    new = StepState(frame.t_np1, u, frame.coords_np1)
    return StepResult(new, frame, delta, t_eval, coords_eval, system, M_np1, cn)


def backward_euler_step(state, frame, space, coeffs, bc, config, mass_n=None):
    if config.scheme != "be":
        config = replace(config, scheme="be")
    return _step(state, frame, space, coeffs, bc, config, mass_n)


def crank_nicolson_step(state, frame, space, coeffs, bc, config, mass_n=None):
    if config.scheme != "cn":
        config = replace(config, scheme="cn")
    return _step(state, frame, space, coeffs, bc, config, mass_n)


def step(state, frame, space, coeffs, bc, config, mass_n=None):
    return _step(state, frame, space, coeffs, bc, config, mass_n)
