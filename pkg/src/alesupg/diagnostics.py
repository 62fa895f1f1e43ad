"""Norms, the per-step stability ledger, over/undershoot metrics, line
sampling and the GCL residual."""
import csv
from dataclasses import dataclass, field

import numpy as np

from . import forms
from .forms import cell_data
from .stepping import cn_timestep_check

LEDGER_COLUMNS = (
    "step",
    "t",
    "l2_n",
    "l2_np1",
    "triple_mid",
    "f_term",
    "slack",
    "beta1",
    "beta2",
    "gcl_residual",
    "undershoot_pct",
    "overshoot_pct",
)


def _check_len(u, space):
    u = np.asarray(u, dtype=float)
    if u.shape != (space.n_dofs,):
        raise ValueError(f"field has {u.shape} entries, space has {space.n_dofs} DOFs")
    return u


def l2_norm(u, space, coords, qorder=None, mass=None):
    u = _check_len(u, space)
    M = forms.assemble_mass(space, coords, qorder) if mass is None else mass
    return float(np.sqrt(max(u @ (M @ u), 0.0)))


def triple_norm_squared(u, space, coords, coeffs, w_nodes, delta, t, qorder=None, cd=None):
    """eps |u|_1^2 + sum_K delta_K |(b-w).grad u|_K^2 + mu |u|_0^2"""
    u = _check_len(u, space)
    cd = cell_data(space, coords, qorder) if cd is None else cd
    K = forms.assemble_stiffness(space, coords, cd=cd)
    S = forms.assemble_streamline(space, coords, coeffs, w_nodes, delta, t, cd=cd)
    M = forms.assemble_mass(space, coords, cd=cd)
    return float(coeffs.epsilon * (u @ (K @ u)) + u @ (S @ u) + coeffs.mu * (u @ (M @ u)))


def triple_norm(u, space, coords, coeffs, w_nodes, delta, t, qorder=None):
    return float(np.sqrt(max(triple_norm_squared(u, space, coords, coeffs, w_nodes, delta, t, qorder), 0.0)))


def overshoot_undershoot(u, lo=0.0, hi=1.0):
    """(undershoot, overshoot) in percent of hi - lo."""
    u = np.asarray(u, dtype=float)
    if u.size == 0:
        raise ValueError("empty field")
    if not lo < hi:
        raise ValueError(f"need lo < hi, got [{lo}, {hi}]")
    span = hi - lo
    under = max(0.0, lo - float(u.min()))
    over = max(0.0, float(u.max()) - hi)
    return 100.0 * under / span, 100.0 * over / span


def _barycentric(coords, cells, ids, p):
    v = coords[cells[ids]]
    e1 = v[..., 1, :] - v[..., 0, :]
    e2 = v[..., 2, :] - v[..., 0, :]
    r = p - v[..., 0, :]
    det = e1[..., 0] * e2[..., 1] - e1[..., 1] * e2[..., 0]
    l1 = (r[..., 0] * e2[..., 1] - r[..., 1] * e2[..., 0]) / det
    l2 = (e1[..., 0] * r[..., 1] - e1[..., 1] * r[..., 0]) / det
    return np.stack([1.0 - l1 - l2, l1, l2], axis=-1)


def locate_point(mesh, coords, p, start=0, tol=1e-12, max_steps=None):
    """Cell containing p and its barycentric coordinates, or (None, None).

    Walks across the edge opposite the most negative barycentric
    coordinate; falls back to a global search when the walk leaves the
    domain (non-convex domains, holes).
    """
    p = np.asarray(p, dtype=float)
    nb = mesh.neighbors
    cell = start
    max_steps = mesh.cell_count if max_steps is None else max_steps
    for _ in range(max_steps):
        lam = _barycentric(coords, mesh.cells, cell, p)
        k = int(np.argmin(lam))
        if lam[k] >= -tol:
            return cell, lam
        nxt = nb[cell, (k + 1) % 3]
        if nxt < 0:
            break
        cell = int(nxt)
    lam = _barycentric(coords, mesh.cells, np.arange(mesh.cell_count), p[None, :])
    inside = np.nonzero(lam.min(axis=1) >= -tol)[0]
    if len(inside) == 0:
        return None, None
    return int(inside[0]), lam[inside[0]]


def evaluate(u, space, coords, points):
    """Finite element interpolant at physical points; NaN outside."""
    u = _check_len(u, space)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.full(len(points), np.nan)
    cell = 0
    for i, p in enumerate(points):
        found, lam = locate_point(space.mesh, coords, p, start=cell)
        if found is None:
            continue
        cell = found
        phi = space.element.values(lam[1:])[0]
        out[i] = phi @ u[space.cell_dofs[cell]]
    return out


def line_sample(u, space, coords, y0, n, x_range=None):
    """n samples along y = y0; points outside the domain give value None."""
    if x_range is None:
        x_range = (float(coords[:, 0].min()), float(coords[:, 0].max()))
    xs = np.linspace(x_range[0], x_range[1], n)
    vals = evaluate(u, space, coords, np.column_stack([xs, np.full(n, y0)]))
    return [(float(x), None if np.isnan(v) else float(v)) for x, v in zip(xs, vals)]


def gcl_residual(frame, u, space, qorder=None, mass_n=None, mass_np1=None):
    """| |u|^2_{n+1} - |u|^2_n - dt (u^2, div w)_{mid} | / |u|^2_n"""
    u = _check_len(u, space)
    if mass_n is None:
        mass_n = forms.assemble_mass(space, frame.coords_n, qorder)
    if mass_np1 is None:
        mass_np1 = forms.assemble_mass(space, frame.coords_np1, qorder)
    m_n = u @ (mass_n @ u)
    m_np1 = u @ (mass_np1 @ u)
    m_div = u @ (forms.assemble_weighted_mass(space, frame.coords_mid, frame.div_w_cells, qorder) @ u)
    if m_n == 0:
        return 0.0 if m_np1 == 0 and m_div == 0 else np.inf
    return float(abs(m_np1 - m_n - frame.dt * m_div) / m_n)


@dataclass
class StabilityLedger:
    scheme: str = "be"
    tol: float = 1e-9
    bounds: tuple = (0.0, 1.0)
    records: list = field(default_factory=list)
    violations: list = field(default_factory=list)

    def append(self, rec):
        if self.records and rec["step"] <= self.records[-1]["step"]:
            raise ValueError("ledger records must be appended in increasing step order")
        self.records.append(rec)
        if rec["slack"] < -self.tol * rec["scale"]:
            self.violations.append(rec["step"])

    def column(self, name):
        return np.array([r[name] for r in self.records], dtype=float)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(LEDGER_COLUMNS)
            for r in self.records:
                w.writerow([r["step"]] + [f"{float(r[c]):.17e}" for c in LEDGER_COLUMNS[1:]])
        return path


def record_step(ledger, step_index, state_n, result, space, coeffs, qorder=None, mass_n=None):
    """Evaluate the per-step energy inequality of the active scheme and
    append a ledger row.

    Backward Euler:  |u1|^2 + dt/2 |||u1|||^2 <= |u0|^2 + f_term
    Crank-Nicolson:  |u1|^2 + dt/8 |||u1+u0|||^2
                        <= dt beta1 |u1|^2 + (1 + dt beta2) |u0|^2 + f_term
    """
    frame = result.frame
    state_np1 = result.state
    if not np.isclose(state_n.t, frame.t_n) or not np.isclose(state_np1.t, frame.t_np1):
        raise ValueError("record_step needs consecutive states")
    dt = frame.dt
    coords_eval, t_eval = result.coords_eval, result.t_eval
    cd = cell_data(space, coords_eval, qorder)
    u0, u1 = state_n.u, state_np1.u
    if mass_n is None:
        mass_n = forms.assemble_mass(space, frame.coords_n, qorder)
    mass_np1 = result.mass_np1
    l2_n = l2_norm(u0, space, frame.coords_n, mass=mass_n)
    l2_np1 = l2_norm(u1, space, frame.coords_np1, mass=mass_np1)
    v = u1 if ledger.scheme == "be" else u1 + u0
    tn2 = triple_norm_squared(v, space, coords_eval, coeffs, frame.w_nodes, result.delta, t_eval, cd=cd)

    f = coeffs.eval_f(t_eval, cd.xq)
    f_cell = np.einsum("mq,mq->m", cd.wdet, f * f)
    f_glob = float(f_cell.sum())
    f_supg = float(np.sum(result.delta * f_cell))
    if f_glob == 0.0:
        f_mu = 0.0
    else:
        f_mu = f_glob / coeffs.mu if coeffs.mu > 0 else np.inf

    check = result.cn_check or cn_timestep_check(frame)
    if ledger.scheme == "be":
        f_term = 2.0 * dt * f_mu + 2.0 * dt * f_supg
        lhs = l2_np1**2 + 0.5 * dt * tn2
        rhs = l2_n**2 + f_term
    else:
        f_term = dt * f_mu + dt * f_supg
        lhs = l2_np1**2 + dt / 8.0 * tn2
        rhs = dt * check.beta1 * l2_np1**2 + (1.0 + dt * check.beta2) * l2_n**2 + f_term
    # the CN estimate is stated with dt/4 but proved with dt/8; keep both
    slack_quarter = rhs - (l2_np1**2 + dt / 4.0 * tn2) if ledger.scheme == "cn" else rhs - lhs
    under, over = overshoot_undershoot(u1, *ledger.bounds)
    rec = {
        "step": step_index,
        "t": state_np1.t,
        "l2_n": l2_n,
        "l2_np1": l2_np1,
        "triple_mid": float(np.sqrt(max(tn2, 0.0))),
        "f_term": f_term,
        "slack": rhs - lhs,
        "slack_quarter": slack_quarter,
        "beta1": check.beta1,
        "beta2": check.beta2,
        "gcl_residual": gcl_residual(frame, u1, space, qorder, mass_n, mass_np1),
        "undershoot_pct": under,
        "overshoot_pct": over,
        "scale": max(abs(lhs), abs(rhs), np.finfo(float).tiny),
    }
    ledger.append(rec)
    return ledger
