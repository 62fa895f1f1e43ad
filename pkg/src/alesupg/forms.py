"""Assembly of the conservative ALE-SUPG operator, mass matrices, the
SUPG-weighted load and Dirichlet constraints.

All integrals are cellwise Gauss quadrature on straight-edged triangles.
Coefficient callables are vectorised: ``b(t, x)`` maps points of shape
(..., 2) to (..., 2); ``c`` and ``f`` map to (...).  Scalars are accepted
in place of callables.
"""
import hashlib
import logging
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import Callable, Union

import numpy as np
import scipy.sparse as sp

from . import linalg
from .elements import ElementError, affine_jacobians, default_quadrature_order, quadrature

log = logging.getLogger(__name__)

Field = Union[float, Callable]

_P1_REF = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


def _ein(*args):
    return np.einsum(*args, optimize=True)


class DegenerateCellError(ElementError):
    def __init__(self, cell, det):
        super().__init__(f"cell {cell} is degenerate (Jacobian determinant {det:g})")
        self.cell = int(cell)


@dataclass(frozen=True)
class Coefficients:
    epsilon: float
    b: Field = (0.0, 0.0)
    c: Field = 0.0
    f: Field = 0.0
    mu: float = 0.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    def eval_b(self, t, x):
        shape = np.shape(x)[:-1] + (2,)
        v = self.b(t, x) if callable(self.b) else self.b
        if isinstance(v, (tuple, list)):
            v = np.stack([np.broadcast_to(np.asarray(c, dtype=float), shape[:-1]) for c in v], axis=-1)
        return np.broadcast_to(np.asarray(v, dtype=float), shape)

    def eval_c(self, t, x):
        v = self.c(t, x) if callable(self.c) else self.c
        return np.broadcast_to(np.asarray(v, dtype=float), np.shape(x)[:-1])

    def eval_f(self, t, x):
        v = self.f(t, x) if callable(self.f) else self.f
        return np.broadcast_to(np.asarray(v, dtype=float), np.shape(x)[:-1])

    def admissibility_margin(self, t, x, step=1e-6):
        """min over sample points of (c - div(b)/2) - mu; div by central
        differences."""
        x = np.asarray(x, dtype=float)
        div = np.zeros(x.shape[:-1])
        for d in range(2):
            e = np.zeros(2)
            e[d] = step
            div += (self.eval_b(t, x + e)[..., d] - self.eval_b(t, x - e)[..., d]) / (2 * step)
        return float(np.min(self.eval_c(t, x) - 0.5 * div) - self.mu)

    def check_admissibility(self, t, x, tol=1e-8):
        margin = self.admissibility_margin(t, x)
        ok = margin >= -tol and self.mu > 0
        if not ok:
            log.warning(
                "coefficients violate 0 < mu <= c - div(b)/2 (mu=%g, margin=%g)", self.mu, margin
            )
        return ok


@dataclass(frozen=True)
class Stabilization:
    delta0: float = 0.0
    enforce_theory_bounds: bool = False
    c_inv: float = 1.0


@dataclass(frozen=True, eq=False)
class SparseSystem:
    operator: sp.csr_matrix
    rhs: np.ndarray
    constrained_dofs: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    constrained_values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        n, m = self.operator.shape
        if n != m or n != len(self.rhs):
            raise ValueError(f"inconsistent system: operator {self.operator.shape}, rhs {len(self.rhs)}")


class CellData:
    """Quadrature-point geometry for one space on one set of node
    coordinates.  Use :func:`cell_data` for a cached instance."""

    def __init__(self, space, coords, qorder=None):
        self.space = space
        el = space.element
        cells = space.mesh.cells
        qorder = default_quadrature_order(space.degree) if qorder is None else qorder
        rule = quadrature(qorder)
        jac, det = affine_jacobians(coords, cells)
        bad = np.nonzero(~(det > 0))[0]
        if len(bad):
            raise DegenerateCellError(bad[0], det[bad[0]])
        inv = np.empty_like(jac)
        inv[:, 0, 0] = jac[:, 1, 1] / det
        inv[:, 0, 1] = -jac[:, 0, 1] / det
        inv[:, 1, 0] = -jac[:, 1, 0] / det
        inv[:, 1, 1] = jac[:, 0, 0] / det
        self.det = det
        self.area = 0.5 * det
        self.phi = el.values(rule.points)  # (Q, n)
        self.grad = np.matmul(el.gradients(rule.points)[None], inv[:, None])
        if space.degree == 1:
            self.lap = np.zeros((len(det), el.node_count))
        else:
            href = el.hessians(rule.points[:1])[0]
            self.lap = _ein("nde,mdk,mek->mn", href, inv, inv)
        self.xq = coords[cells[:, 0]][:, None, :] + np.matmul(rule.points[None], jac.transpose(0, 2, 1))
        self.wdet = det[:, None] * rule.weights[None, :]
        self.mass_ref = _ein("q,qi,qj->ij", rule.weights, self.phi, self.phi)
        self.lam1 = np.column_stack(
            [1 - rule.points[:, 0] - rule.points[:, 1], rule.points[:, 0], rule.points[:, 1]]
        )
        self.p1_grad = np.matmul(_P1_REF[None], inv)
        p = coords[cells]
        self.h = np.max(
            np.stack(
                [
                    np.linalg.norm(p[:, 1] - p[:, 0], axis=1),
                    np.linalg.norm(p[:, 2] - p[:, 1], axis=1),
                    np.linalg.norm(p[:, 0] - p[:, 2], axis=1),
                ]
            ),
            axis=0,
        )

    def w_at_quad(self, w_nodes):
        cells = self.space.mesh.cells
        if w_nodes is None:
            return np.zeros(self.xq.shape)
        wc = np.asarray(w_nodes)[cells]
        lam = self.lam1
        return lam[None, :, 0, None] * wc[:, None, 0] + lam[None, :, 1, None] * wc[:, None, 1] + lam[None, :, 2, None] * wc[:, None, 2]

    def stiffness_local(self):
        if not hasattr(self, "_stiff"):
            g = _grad_flat(self.grad)
            wq = np.repeat(self.wdet, 2, axis=1)
            self._stiff = np.matmul((g * wq[..., None]).transpose(0, 2, 1), g)
        return self._stiff

    def div_w(self, w_nodes):
        if w_nodes is None:
            return np.zeros(len(self.det))
        cells = self.space.mesh.cells
        return _ein("mad,mad->m", self.p1_grad, np.asarray(w_nodes)[cells])


_CACHE = OrderedDict()
_CACHE_SIZE = 6


def cell_data(space, coords, qorder=None):
    """CellData memoised on (space, quadrature order, coordinate bytes)."""
    coords = np.ascontiguousarray(coords, dtype=float)
    key = (id(space), qorder, hashlib.blake2b(coords.tobytes(), digest_size=16).digest())
    cd = _CACHE.get(key)
    if cd is not None and cd.space is space:
        _CACHE.move_to_end(key)
        return cd
    cd = CellData(space, coords, qorder)
    _CACHE[key] = cd
    while len(_CACHE) > _CACHE_SIZE:
        _CACHE.popitem(last=False)
    return cd


def _pattern(space):
    """CSR structure of the global matrix and the slot of every local
    entry in its data array; cached on the space."""
    pat = getattr(space, "_csr_pattern", None)
    if pat is None:
        dofs = space.cell_dofs
        n = dofs.shape[1]
        rows = np.repeat(dofs, n, axis=1).ravel()
        cols = np.tile(dofs, (1, n)).ravel()
        key = rows.astype(np.int64) * space.n_dofs + cols
        uniq, slot = np.unique(key, return_inverse=True)
        indptr = np.searchsorted(uniq // space.n_dofs, np.arange(space.n_dofs + 1))
        pat = (indptr, (uniq % space.n_dofs).astype(np.int64), slot.ravel(), len(uniq))
        space._csr_pattern = pat
    return pat


def _to_global(space, local):
    indptr, indices, slot, nnz = _pattern(space)
    data = np.bincount(slot, weights=np.ravel(local), minlength=nnz)
    A = sp.csr_matrix((data, indices.copy(), indptr.copy()), shape=(space.n_dofs, space.n_dofs))
    A.eliminate_zeros()
    return A


def _pair(a, b, w):
    """sum_q w[m,q] a[m,q,i] b[m,q,j] for a, b of shape (M, Q, n) or
    (Q, n)."""
    a = np.broadcast_to(a, w.shape + a.shape[-1:])
    b = np.broadcast_to(b, w.shape + b.shape[-1:])
    return np.matmul((a * w[..., None]).transpose(0, 2, 1), b)


def _grad_flat(grad):
    """(M, Q, n, 2) -> (M, Q*2, n) so that gradient pairings become one
    batched matmul."""
    m, q, n, d = grad.shape
    return grad.transpose(0, 1, 3, 2).reshape(m, q * d, n)


def _dot_grad(vec, grad):
    """(vec . grad phi) at quadrature points, (M, Q, n)."""
    return vec[..., None, 0] * grad[..., 0] + vec[..., None, 1] * grad[..., 1]


def _load_to_global(space, local):
    return np.bincount(space.cell_dofs.ravel(), weights=local.ravel(), minlength=space.n_dofs)


def compute_delta_K(h_K, epsilon, bw_norm, delta0, stab=None, dt=None, c_norm=None, mu=None):
    """SUPG parameter delta0*h/|b-w| where epsilon < h*|b-w| (strict),
    else 0; optionally capped by the coercivity and time-step bounds."""
    h = np.asarray(h_K, dtype=float)
    bw = np.asarray(bw_norm, dtype=float)
    active = (epsilon < h * bw) & (bw > 0)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        delta = np.where(active, delta0 * h / np.where(bw > 0, bw, 1.0), 0.0)
    if stab is not None and stab.enforce_theory_bounds:
        delta = np.minimum(delta, h**2 / (2.0 * epsilon * stab.c_inv**2))
        if c_norm is not None:
            # guard on |c|^2 so an underflowing tiny |c| counts as zero
            cn2 = np.asarray(c_norm, dtype=float) ** 2
            cap = np.where(cn2 > 0, (mu or 0.0) / (2.0 * np.where(cn2 > 0, cn2, 1.0)), np.inf)
            delta = np.minimum(delta, cap)
        if dt is not None:
            delta = np.minimum(delta, dt / 4.0)
    return delta if delta.ndim else float(delta)


def cell_deltas(space, coords, coeffs, w_nodes, stab, t, dt=None, qorder=None, cd=None):
    """Per-cell SUPG parameters on the given geometry at time t.

    |b - w_h|_{L_inf(K)} and |c|_{L_inf(K)} are maxima over the cell's
    quadrature points.
    """
    cd = cell_data(space, coords, qorder) if cd is None else cd
    beta = coeffs.eval_b(t, cd.xq) - cd.w_at_quad(w_nodes)
    bw = np.linalg.norm(beta, axis=-1).max(axis=1)
    cmax = np.abs(coeffs.eval_c(t, cd.xq)).max(axis=1)
    return compute_delta_K(cd.h, coeffs.epsilon, bw, stab.delta0, stab, dt, cmax, coeffs.mu)


def assemble_mass(space, coords, qorder=None, cd=None):
    cd = cell_data(space, coords, qorder) if cd is None else cd
    local = cd.det[:, None, None] * cd.mass_ref
    return _to_global(space, local)


def assemble_weighted_mass(space, coords, cell_weight, qorder=None, cd=None):
    """Mass matrix with a per-cell constant weight."""
    cd = cell_data(space, coords, qorder) if cd is None else cd
    local = (np.asarray(cell_weight, dtype=float) * cd.det)[:, None, None] * cd.mass_ref
    return _to_global(space, local)


def assemble_stiffness(space, coords, qorder=None, cd=None):
    cd = cell_data(space, coords, qorder) if cd is None else cd
    return _to_global(space, cd.stiffness_local())


def assemble_streamline(space, coords, coeffs, w_nodes, delta, t, qorder=None, cd=None):
    """sum_K delta_K ((b-w).grad u, (b-w).grad v)_K"""
    cd = cell_data(space, coords, qorder) if cd is None else cd
    beta = coeffs.eval_b(t, cd.xq) - cd.w_at_quad(w_nodes)
    bg = _dot_grad(beta, cd.grad)
    local = _pair(bg, bg, np.asarray(delta, dtype=float)[:, None] * cd.wdet)
    return _to_global(space, local)


def ale_supg_local(cd, coeffs, w_nodes, delta, t, conservative=True):
    """Local matrices (M, n, n), row = test function, column = trial."""
    eps = coeffs.epsilon
    b = coeffs.eval_b(t, cd.xq)
    c = coeffs.eval_c(t, cd.xq)
    w = cd.w_at_quad(w_nodes)
    phi, grad, wdet = cd.phi, cd.grad, cd.wdet
    local = eps * cd.stiffness_local()
    if conservative:
        # -(div(w u), v) = -((div w) u, v) - (w.grad u, v)
        betag = _dot_grad(b - w, grad)
        local = local + _pair(phi, betag, wdet)
        local -= (cd.div_w(w_nodes) * cd.det)[:, None, None] * cd.mass_ref
    else:
        betag = _dot_grad(b - w, grad)
        local = local + _pair(phi, _dot_grad(b, grad), wdet)
    local += _pair(phi, phi, wdet * c)
    delta = np.asarray(delta, dtype=float)
    if np.any(delta):
        resid = -eps * cd.lap[:, None, :] + betag + c[:, :, None] * phi[None, :, :]
        local += _pair(betag, resid, delta[:, None] * wdet)
    return local


def assemble_ale_supg(space, coords_mid, coeffs, w_nodes, delta, t_eval, qorder=None, cd=None, conservative=True):
    """Matrix of a_SUPG(u, v) - (div(w_h u), v) on the given geometry."""
    cd = cell_data(space, coords_mid, qorder) if cd is None else cd
    return _to_global(space, ale_supg_local(cd, coeffs, w_nodes, delta, t_eval, conservative))


def assemble_rhs(space, coords_mid, coeffs, w_nodes, delta, t_eval, qorder=None, cd=None):
    """(f, v) + sum_K delta_K (f, (b - w).grad v)_K"""
    cd = cell_data(space, coords_mid, qorder) if cd is None else cd
    f = coeffs.eval_f(t_eval, cd.xq)
    local = (cd.wdet * f) @ cd.phi
    delta = np.asarray(delta, dtype=float)
    if np.any(delta):
        beta = coeffs.eval_b(t_eval, cd.xq) - cd.w_at_quad(w_nodes)
        betag = _dot_grad(beta, cd.grad)
        local += np.einsum("mq,mqi->mi", (delta[:, None] * cd.wdet) * f, betag)
    return _load_to_global(space, local)


def assemble_load(space, coords, func, t=0.0, qorder=None, cd=None):
    """(g, v) for a callable g(t, x)."""
    cd = cell_data(space, coords, qorder) if cd is None else cd
    g = np.broadcast_to(np.asarray(func(t, cd.xq), dtype=float), cd.xq.shape[:-1])
    return _load_to_global(space, (cd.wdet * g) @ cd.phi)


def dirichlet_values(space, bc, coords, t):
    """Constrained DOFs and their values; later tags win on shared DOFs."""
    x = space.dof_coords(coords)
    vals = {}
    for tag in sorted(bc.dirichlet):
        dofs = space.boundary_dofs([tag])
        g = bc.dirichlet[tag]
        if g is None:
            raise ValueError(f"Dirichlet tag {tag} has no value function")
        v = g(t, x[dofs]) if callable(g) else g
        v = np.broadcast_to(np.asarray(v, dtype=float), (len(dofs),))
        vals.update(zip(dofs.tolist(), v.tolist()))
    dofs = np.array(sorted(vals), dtype=np.int64)
    return dofs, np.array([vals[d] for d in dofs.tolist()], dtype=float)


def constrain(system, dofs, values):
    """Symmetric elimination of the given DOFs."""
    A = system.operator
    n = A.shape[0]
    g = np.zeros(n)
    g[dofs] = values
    keep = np.ones(n)
    keep[dofs] = 0.0
    D = sp.diags(keep)
    rhs = keep * (system.rhs - A @ g) + g
    op = D @ A @ D + sp.diags(1.0 - keep)
    op = linalg.finalize(op)
    all_dofs = np.union1d(system.constrained_dofs, dofs)
    allv = dict(zip(system.constrained_dofs.tolist(), system.constrained_values.tolist()))
    allv.update(zip(np.asarray(dofs).tolist(), np.asarray(values).tolist()))
    return replace(
        system,
        operator=op,
        rhs=rhs,
        constrained_dofs=all_dofs,
        constrained_values=np.array([allv[d] for d in all_dofs.tolist()]),
    )


def apply_dirichlet(system, bc, space, coords, t):
    bc.check_against(space.mesh)
    dofs, values = dirichlet_values(space, bc, coords, t)
    return constrain(system, dofs, values)


def inverse_constant(space, coords, qorder=None):
    """Smallest c_inv with |Lap v|_K <= c_inv h_K^{-1} |v|_{1,K} for all v
    in the local space, maximised over cells (0 for P1)."""
    if space.degree == 1:
        return 0.0
    cd = cell_data(space, coords, qorder)
    S = cd.stiffness_local()
    worst = 0.0
    for m in range(len(cd.det)):
        lap = cd.lap[m]
        lam = cd.area[m] * lap @ np.linalg.pinv(S[m], rcond=1e-12) @ lap
        worst = max(worst, cd.h[m] * np.sqrt(max(lam, 0.0)))
    return float(worst)
