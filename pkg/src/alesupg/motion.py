"""Discrete ALE kinematics.

Node trajectories are linear in time over a step, so the mesh velocity is
constant per step and cell areas are quadratic in time.
"""
from dataclasses import dataclass

import numpy as np

from . import linalg
from .elements import affine_jacobians
from .mesh import signed_areas

_GRAD_REF = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


class TanglingError(RuntimeError):
    def __init__(self, cell, where=""):
        super().__init__(f"mesh tangled: cell {cell} inverted{where}")
        self.cell = int(cell)


def example1_scale(t):
    return 2.0 - np.cos(20.0 * np.pi * t)


def example1_map(t, Y):
    """Uniform dilation of the unit square, period 0.1."""
    return example1_scale(t) * np.asarray(Y, dtype=float)


def example1_velocity(t, x):
    x = np.asarray(x, dtype=float)
    rate = 20.0 * np.pi * np.sin(20.0 * np.pi * t) / example1_scale(t)
    return rate * x


def example1_divergence(t):
    """Analytic divergence of the example-1 mesh velocity (2D)."""
    return 2.0 * 20.0 * np.pi * np.sin(20.0 * np.pi * t) / example1_scale(t)


def disc_offset(t):
    """Vertical position of the oscillating disc centre."""
    return 0.5 * np.sin(2.0 * np.pi * t / 5.0)


def p1_gradients(coords, cells):
    """Physical gradients of the three P1 hat functions per cell, (M, 3, 2)."""
    jac, det = affine_jacobians(coords, cells)
    bad = np.nonzero(~(det > 0))[0]
    if len(bad):
        raise TanglingError(bad[0])
    inv = np.linalg.inv(jac)
    return np.einsum("ad,mde->mae", _GRAD_REF, inv)


def interpolate_coords(coords_n, coords_np1, s):
    """Linear interpolation at fraction s of the step."""
    return (1.0 - s) * coords_n + s * coords_np1


def discrete_mesh_velocity(coords_n, coords_np1, dt):
    coords_n = np.asarray(coords_n, dtype=float)
    coords_np1 = np.asarray(coords_np1, dtype=float)
    if coords_n.shape != coords_np1.shape:
        raise ValueError(f"coordinate arrays differ in shape: {coords_n.shape} vs {coords_np1.shape}")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    return (coords_np1 - coords_n) / dt


def divergence_w(cells, coords, w_nodes):
    """Per-cell divergence of the P1 interpolant of nodal velocities."""
    g = p1_gradients(coords, cells)
    return np.einsum("mad,mad->m", g, np.asarray(w_nodes)[cells])


def check_untangled(cells, coords_n, coords_np1):
    """Raise TanglingError if any cell area vanishes anywhere on the
    linear path between the two geometries."""
    p0, p1 = coords_n[cells], coords_np1[cells]
    e1, e2 = p0[:, 1] - p0[:, 0], p0[:, 2] - p0[:, 0]
    d1 = (p1[:, 1] - p1[:, 0]) - e1
    d2 = (p1[:, 2] - p1[:, 0]) - e2

    def cross(a, b):
        return a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]

    a0 = cross(e1, e2)
    a1 = cross(e1, d2) + cross(d1, e2)
    a2 = cross(d1, d2)
    lo = np.minimum(a0, a0 + a1 + a2)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(a2 > 0, -a1 / (2 * a2), -1.0)
    inside = (s > 0) & (s < 1)
    lo = np.where(inside, np.minimum(lo, a0 + a1 * s + a2 * s * s), lo)
    bad = np.nonzero(~(lo > 0))[0]
    if len(bad):
        raise TanglingError(bad[0], " during the step")


@dataclass(frozen=True, eq=False)
class AleFrame:
    cells: np.ndarray
    coords_n: np.ndarray
    coords_np1: np.ndarray
    t_n: float
    dt: float
    w_nodes: np.ndarray
    div_w_cells: np.ndarray

    @property
    def t_np1(self):
        return self.t_n + self.dt

    @property
    def coords_mid(self):
        return interpolate_coords(self.coords_n, self.coords_np1, 0.5)

    @property
    def stationary(self):
        return np.array_equal(self.coords_n, self.coords_np1)


def build_frame(mesh, coords_n, coords_np1, t_n, dt):
    coords_n = np.asarray(coords_n, dtype=float)
    coords_np1 = np.asarray(coords_np1, dtype=float)
    w = discrete_mesh_velocity(coords_n, coords_np1, dt)
    check_untangled(mesh.cells, coords_n, coords_np1)
    mid = interpolate_coords(coords_n, coords_np1, 0.5)
    div = divergence_w(mesh.cells, mid, w)
    return AleFrame(mesh.cells, coords_n, coords_np1, float(t_n), float(dt), w, div)


def interpolate_positions(frame, tau):
    if not frame.t_n - 1e-12 * max(1.0, abs(frame.t_n)) <= tau <= frame.t_np1 + 1e-12 * max(1.0, abs(frame.t_np1)):
        raise ValueError(f"tau={tau} outside [{frame.t_n}, {frame.t_np1}]")
    if tau == frame.t_n:
        return frame.coords_n.copy()
    if tau == frame.t_np1:
        return frame.coords_np1.copy()
    a = (tau - frame.t_n) / frame.dt
    b = (frame.t_np1 - tau) / frame.dt
    return a * frame.coords_np1 + b * frame.coords_n


def elasticity_matrix(cells, coords, lam=1.0, mu=1.0, stiffen=False):
    """P1 vector linear-elasticity stiffness, DOF 2*node + component."""
    g = p1_gradients(coords, cells)
    area = signed_areas(coords, cells)
    scale = area
    if stiffen:
        # Jacobian-based stiffening: small cells resist deformation more.
        scale = area * (area.mean() / area)
    n = len(coords)
    # K[(a,i),(b,j)] = mu (grad a . grad b) d_ij + mu d_j a d_i b + lam d_i a d_j b
    gg = np.einsum("mad,mbd->mab", g, g)
    eye = np.eye(2)
    k = (
        mu * gg[:, :, None, :, None] * eye[None, None, :, None, :]
        + mu * np.einsum("maj,mbi->maibj", g, g)
        + lam * np.einsum("mai,mbj->maibj", g, g)
    ) * scale[:, None, None, None, None]
    dofs = (2 * cells[:, :, None] + np.arange(2)[None, None, :]).reshape(-1, 6)
    k = k.reshape(-1, 6, 6)
    rows = np.repeat(dofs, 6, axis=1)
    cols = np.tile(dofs, (1, 6))
    return linalg.from_triplets(rows, cols, k, 2 * n)


def elastic_mesh_update(mesh, coords, boundary_displacement, lam=1.0, mu=1.0, stiffen=False):
    """Pseudo-solid update: solve linear elasticity on ``coords`` with the
    given displacement on every boundary node (ordered as
    ``mesh.boundary_nodes()``).  Returns the (N, 2) displacement."""
    coords = np.asarray(coords, dtype=float)
    bnodes = mesh.boundary_nodes()
    gb = np.asarray(boundary_displacement, dtype=float).reshape(len(bnodes), 2)
    K = elasticity_matrix(mesh.cells, coords, lam, mu, stiffen).tocsr()
    n = len(coords)
    fixed = np.concatenate([2 * bnodes, 2 * bnodes + 1])
    vals = np.concatenate([gb[:, 0], gb[:, 1]])
    free = np.setdiff1d(np.arange(2 * n), fixed)
    u = np.zeros(2 * n)
    u[fixed] = vals
    if len(free) and np.any(vals):
        rhs = -(K[free][:, fixed] @ vals)
        u[free] = linalg.solve(K[free][:, free], rhs)
    disp = u.reshape(n, 2)
    area = signed_areas(coords + disp, mesh.cells)
    bad = np.nonzero(~(area > 0))[0]
    if len(bad):
        raise TanglingError(bad[0], " by the elastic update")
    return disp


class StaticMotion:
    kind = "static"

    def initial(self, mesh):
        return mesh.nodes.copy()

    def advance(self, mesh, coords_n, t_n, t_np1):
        return coords_n


class AnalyticMotion:
    """Node positions given by x = map(t, Y) on the reference nodes."""

    kind = "analytic"

    def __init__(self, mapping):
        self.mapping = mapping

    def initial(self, mesh):
        return np.asarray(self.mapping(0.0, mesh.nodes), dtype=float)

    def advance(self, mesh, coords_n, t_n, t_np1):
        return np.asarray(self.mapping(t_np1, mesh.nodes), dtype=float)


class ElasticBoundaryMotion:
    """Boundary nodes on ``moving_tags`` follow ``offset(t)`` (a 2-vector
    position relative to t=0); other boundary nodes stay fixed; interior
    nodes follow a pseudo-solid update on the previous step's domain."""

    kind = "elastic"

    def __init__(self, moving_tags, offset, lam=1.0, mu=1.0, stiffen=True):
        self.moving_tags = tuple(moving_tags)
        self.offset = offset
        self.lam, self.mu, self.stiffen = lam, mu, stiffen

    def initial(self, mesh):
        return mesh.nodes + np.asarray(self.offset(0.0), dtype=float)[None, :] * self._moving_mask(mesh)[:, None]

    def _moving_mask(self, mesh):
        mask = np.zeros(mesh.node_count)
        mask[mesh.boundary_nodes(self.moving_tags)] = 1.0
        return mask

    def advance(self, mesh, coords_n, t_n, t_np1):
        step = np.asarray(self.offset(t_np1), dtype=float) - np.asarray(self.offset(t_n), dtype=float)
        bnodes = mesh.boundary_nodes()
        moving = np.isin(bnodes, mesh.boundary_nodes(self.moving_tags))
        g = np.zeros((len(bnodes), 2))
        g[moving] = step
        disp = elastic_mesh_update(mesh, coords_n, g, self.lam, self.mu, self.stiffen)
        return coords_n + disp
