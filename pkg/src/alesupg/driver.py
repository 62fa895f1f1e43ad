"""Run orchestration: scenario -> mesh, motion, coefficients -> step loop
-> ledger, time series and snapshots; manufactured-solution convergence
studies."""
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import diagnostics, forms, linalg, motion, output, stepping
from .elements import ElementError
from .mesh import BoundaryCondition, MeshError, load_mesh, refine_uniform, unit_square_mesh
from .meshgen import DISC, channel_disc_mesh
from .scenario import ConfigError, compile_expr, symbolic_fields
from .space import FunctionSpace

log = logging.getLogger(__name__)

ELASTIC_LAMBDA = 1.0
ELASTIC_MU = 1.0


class RunError(RuntimeError):
    """A module error raised inside the step loop, stamped with the step
    index and time."""

    def __init__(self, step, t, cause):
        super().__init__(f"step {step} (t={t:.6g}): {type(cause).__name__}: {cause}")
        self.step = step
        self.t = t
        self.cause = cause


NUMERICAL_ERRORS = (
    motion.TanglingError,
    linalg.SolverError,
    stepping.TimeStepRestrictionError,
    ElementError,
    np.linalg.LinAlgError,
    FloatingPointError,
)


def build_mesh(source):
    """``builtin:unit_square:N``, ``builtin:channel_disc:CELLS`` or a
    mesh file path."""
    if source.startswith("builtin:"):
        parts = source.split(":")
        if len(parts) != 3:
            raise ConfigError("scenario.mesh", f"expected builtin:<kind>:<size>, got {source!r}")
        kind, size = parts[1], parts[2]
        try:
            size = int(size)
        except ValueError:
            raise ConfigError("scenario.mesh", f"size must be an integer in {source!r}") from None
        if kind == "unit_square":
            if size < 1:
                raise ConfigError("scenario.mesh", f"unit_square needs N >= 1, got {size}")
            return unit_square_mesh(size)
        if kind == "channel_disc":
            try:
                return channel_disc_mesh(size)
            except ValueError as exc:
                raise ConfigError("scenario.mesh", str(exc)) from None
        raise ConfigError("scenario.mesh", f"unknown built-in mesh {kind!r}")
    return load_mesh(source)


def refine_mesh_source(source, level):
    """Mesh source for refinement level ``level`` (h halved per level)."""
    if source.startswith("builtin:unit_square:"):
        return f"builtin:unit_square:{int(source.split(':')[2]) * 2**level}"
    if source.startswith("builtin:channel_disc:"):
        return f"builtin:channel_disc:{int(source.split(':')[2]) * 4**level}"
    return source


def build_motion(kind):
    if kind == "static":
        return motion.StaticMotion()
    if kind == "example1":
        return motion.AnalyticMotion(motion.example1_map)
    if kind == "disc_oscillation":
        return motion.ElasticBoundaryMotion(
            (DISC,), lambda t: np.array([0.0, motion.disc_offset(t)]), ELASTIC_LAMBDA, ELASTIC_MU, stiffen=True
        )
    raise ConfigError("scenario.motion", f"unknown motion {kind!r}")


@dataclass
class Problem:
    """Compiled, ready-to-run form of a scenario."""

    scenario: object
    mesh: object
    space: FunctionSpace
    law: object
    coeffs: forms.Coefficients
    bc: BoundaryCondition
    config: stepping.StepperConfig
    u0: object
    exact: object = None


def build_problem(s, mesh=None):
    mesh = build_mesh(s.mesh) if mesh is None else mesh
    sym = symbolic_fields(s)
    bx, by = (compile_expr(e) for e in sym["b"])
    if isinstance(bx, float) and isinstance(by, float):
        b = (bx, by)
    else:
        fx = bx if callable(bx) else (lambda t, X, v=bx: np.full(np.shape(X)[:-1], v))
        fy = by if callable(by) else (lambda t, X, v=by: np.full(np.shape(X)[:-1], v))
        b = lambda t, X: np.stack([fx(t, X), fy(t, X)], axis=-1)  # noqa: E731
    coeffs = forms.Coefficients(s.epsilon, b, compile_expr(sym["c"]), compile_expr(sym["f"]), s.mu)
    dirichlet = {tag: compile_expr(e) for tag, e in sym["dirichlet"].items()}
    bc = BoundaryCondition(dirichlet, frozenset(s.neumann))
    try:
        bc.check_against(mesh)
    except MeshError as exc:
        raise ConfigError("scenario.dirichlet", str(exc)) from None
    stab = forms.Stabilization(s.delta0, s.enforce_theory_bounds, s.c_inv)
    config = stepping.StepperConfig(s.scheme, s.dt, s.policy, stab, s.strict_cn)
    u0 = compile_expr(sym["u0"])
    if not callable(u0):
        u0 = (lambda t, X, v=u0: np.full(np.shape(X)[:-1], v))
    exact = compile_expr(sym["exact"]) if sym["exact"] is not None else None
    if exact is not None and not callable(exact):
        exact = (lambda t, X, v=exact: np.full(np.shape(X)[:-1], v))
    return Problem(s, mesh, FunctionSpace(mesh, s.degree), build_motion(s.motion), coeffs, bc, config, u0, exact)


def l2_error(u, space, coords, exact, t, qorder=6):
    """||u_h - u(t)||_{L2} with a high-order rule."""
    cd = forms.cell_data(space, coords, qorder)
    uh = np.einsum("qi,mi->mq", cd.phi, u[space.cell_dofs])
    ue = np.broadcast_to(np.asarray(exact(t, cd.xq), dtype=float), uh.shape)
    return float(np.sqrt(np.sum(cd.wdet * (uh - ue) ** 2)))


def initial_state(problem, coords0):
    """L2 projection of u0, then boundary DOFs set to the Dirichlet data
    at t = 0 so that the start state is compatible with the constraints."""
    space = problem.space
    u = stepping.project_initial(problem.u0, space, coords0, 0.0)
    if problem.bc.dirichlet:
        dofs, vals = forms.dirichlet_values(space, problem.bc, coords0, 0.0)
        u[dofs] = vals
    return stepping.StepState(0.0, u, coords0)


@dataclass
class RunReport:
    name: str
    steps: int
    t_final: float
    l2_initial: float
    l2_final: float
    max_undershoot_pct: float
    max_overshoot_pct: float
    max_gcl_residual: float
    min_slack: float
    violations: list
    cn_restriction_violations: int
    wall_time: float
    l2_series: list
    ledger: diagnostics.StabilityLedger
    state: stepping.StepState
    space: FunctionSpace
    l2_error: float = None
    files: list = field(default_factory=list)

    def summary(self):
        lines = [
            f"scenario        {self.name}",
            f"steps           {self.steps} (t = {self.t_final:.6g})",
            f"L2 initial      {self.l2_initial:.6e}",
            f"L2 final        {self.l2_final:.6e}",
            f"max undershoot  {self.max_undershoot_pct:.3f} %",
            f"max overshoot   {self.max_overshoot_pct:.3f} %",
            f"max GCL resid.  {self.max_gcl_residual:.3e}",
            f"min slack       {self.min_slack:.3e}",
            f"ledger flags    {len(self.violations)}",
        ]
        if self.cn_restriction_violations:
            lines.append(f"CN dt above bound on {self.cn_restriction_violations} steps")
        if self.l2_error is not None:
            lines.append(f"L2 error at T   {self.l2_error:.6e}")
        lines.append(f"wall time       {self.wall_time:.2f} s")
        for f in self.files:
            lines.append(f"wrote           {f}")
        return "\n".join(lines)


def _snapshot_steps(s):
    return sorted({int(round(ts / s.dt)) for ts in s.snapshot_times})


def run_scenario(s, out_dir=None, problem=None, ledger_tol=1e-9):
    """Execute the step loop of a scenario and return a RunReport.

    Per step: advance the mesh, build the ALE frame, choose delta_K,
    assemble, constrain, solve, update the stability ledger and write
    the requested outputs.
    """
    t_start = time.perf_counter()
    problem = build_problem(s) if problem is None else problem
    out_dir = Path(out_dir if out_dir is not None else s.out_dir) if (out_dir or s.out_dir) else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    mesh, space, law, coeffs = problem.mesh, problem.space, problem.law, problem.coeffs
    coords0 = law.initial(mesh)
    coeffs.check_admissibility(0.0, forms.cell_data(space, coords0).xq)
    state = initial_state(problem, coords0)
    ledger = diagnostics.StabilityLedger(s.scheme, ledger_tol, tuple(s.bounds))
    mass_n = forms.assemble_mass(space, coords0)
    l2_0 = diagnostics.l2_norm(state.u, space, coords0, mass=mass_n)
    series = [(0, 0.0, l2_0)]
    files = []
    snaps = _snapshot_steps(s)
    if out_dir is not None and 0 in snaps:
        files.append(output.write_vtk(state.u, space, coords0, out_dir / output.snapshot_name(s.name, 0)))
    cn_bad = 0
    n_steps = s.n_steps
    for n in range(n_steps):
        t_n, t_np1 = n * s.dt, (n + 1) * s.dt
        try:
            coords_np1 = law.advance(mesh, state.coords, t_n, t_np1)
            frame = motion.build_frame(mesh, state.coords, coords_np1, t_n, t_np1 - t_n)
            result = stepping.step(state, frame, space, coeffs, problem.bc, problem.config, mass_n)
            diagnostics.record_step(ledger, n + 1, state, result, space, coeffs, mass_n=mass_n)
        except NUMERICAL_ERRORS as exc:
            raise RunError(n + 1, t_np1, exc) from exc
        if not np.all(np.isfinite(result.state.u)):
            raise RunError(n + 1, t_np1, FloatingPointError("non-finite solution values"))
        if result.cn_check is not None and not result.cn_check.ok:
            cn_bad += 1
        state = result.state
        mass_n = result.mass_np1
        series.append((n + 1, state.t, ledger.records[-1]["l2_np1"]))
        if out_dir is not None and (n + 1) in snaps:
            path = out_dir / output.snapshot_name(s.name, n + 1)
            files.append(output.write_vtk(state.u, space, state.coords, path))
    err = None
    if problem.exact is not None:
        err = l2_error(state.u, space, state.coords, problem.exact, state.t)
    if out_dir is not None:
        files.append(ledger.write_csv(out_dir / f"{s.name}_ledger.csv"))
        files.append(output.write_l2_series(out_dir / f"{s.name}_l2.csv", series))
        if s.line_n > 0 and s.line_y0 is not None:
            samples = diagnostics.line_sample(state.u, space, state.coords, s.line_y0, s.line_n)
            files.append(output.write_line_sample(out_dir / f"{s.name}_line.csv", samples))
    under = ledger.column("undershoot_pct")
    over = ledger.column("overshoot_pct")
    return RunReport(
        name=s.name,
        steps=n_steps,
        t_final=state.t,
        l2_initial=l2_0,
        l2_final=series[-1][2],
        max_undershoot_pct=float(under.max()) if len(under) else 0.0,
        max_overshoot_pct=float(over.max()) if len(over) else 0.0,
        max_gcl_residual=float(ledger.column("gcl_residual").max()) if ledger.records else 0.0,
        min_slack=float(ledger.column("slack").min()) if ledger.records else np.inf,
        violations=list(ledger.violations),
        cn_restriction_violations=cn_bad,
        wall_time=time.perf_counter() - t_start,
        l2_series=series,
        ledger=ledger,
        state=state,
        space=space,
        l2_error=err,
        files=[str(f) for f in files],
    )


@dataclass
class ConvergenceRow:
    level: int
    h: float
    dt: float
    error: float
    order: float = None


@dataclass
class ConvergenceTable:
    refine: str
    rows: list

    @property
    def orders(self):
        return [r.order for r in self.rows[1:]]

    def format(self):
        lines = [f"refine = {self.refine}", f"{'level':>5} {'h':>12} {'dt':>12} {'L2 error':>14} {'order':>8}"]
        for r in self.rows:
            order = "" if r.order is None else f"{r.order:8.3f}"
            lines.append(f"{r.level:5d} {r.h:12.5e} {r.dt:12.5e} {r.error:14.6e} {order}")
        return "\n".join(lines)


def level_scenario(s, level):
    """Scenario for one refinement level.

    ``space``: h halves and dt is divided by four (dt ~ h^2);
    ``time``: fixed mesh, dt halves.
    """
    if s.refine == "space":
        return replace(s, mesh=refine_mesh_source(s.mesh, level), dt=s.dt / 4**level, out_dir="", snapshot_times=())
    return replace(s, dt=s.dt / 2**level, out_dir="", snapshot_times=())


def run_convergence_study(s, levels=3):
    if not s.exact:
        raise ConfigError("coefficients.exact", "a convergence study needs a manufactured solution")
    if levels < 2:
        raise ConfigError("levels", f"need at least two levels, got {levels}")
    rows = []
    base_mesh = None
    for k in range(levels):
        sk = level_scenario(s, k)
        mesh = None
        if s.refine == "space" and not s.mesh.startswith("builtin:"):
            base_mesh = build_mesh(s.mesh) if base_mesh is None else refine_uniform(base_mesh)
            mesh = base_mesh
        elif s.refine == "time":
            base_mesh = build_mesh(s.mesh) if base_mesh is None else base_mesh
            mesh = base_mesh
        problem = build_problem(sk, mesh)
        rep = run_scenario(sk, out_dir="", problem=problem)
        h = float(problem.mesh.diameters().max())
        rows.append(ConvergenceRow(k, h, sk.dt, rep.l2_error))
        log.info("level %d: h=%.4g dt=%.4g error=%.4e", k, h, sk.dt, rep.l2_error)
    for prev, row in zip(rows, rows[1:]):
        ratio = prev.h / row.h if s.refine == "space" else prev.dt / row.dt
        row.order = float(np.log(prev.error / row.error) / np.log(ratio))
    return ConvergenceTable(s.refine, rows)
