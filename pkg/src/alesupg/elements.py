"""Lagrange reference elements on the unit triangle, quadrature rules and
the affine reference-to-physical map.

The reference triangle has vertices (0,0), (1,0), (0,1).  P2 local node
order is the three vertices followed by the edge midpoints of edges
(0,1), (1,2), (2,0).
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

_INSIDE_TOL = 1e-12


class ElementError(ValueError):
    pass


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (Q, 2) reference coordinates
    weights: np.ndarray  # (Q,), sum to 1/2
    degree: int


def _orbit3(a, w):
    b = 1.0 - 2.0 * a
    return [(a, a), (b, a), (a, b)], [w] * 3


def _orbit6(a, b, w):
    c = 1.0 - a - b
    pts = [(a, b), (b, a), (a, c), (c, a), (b, c), (c, b)]
    return pts, [w] * 6


def _build(parts, degree):
    pts, wts = [], []
    for p, w in parts:
        pts += p
        wts += w
    return QuadratureRule(np.array(pts, dtype=float), np.array(wts, dtype=float), degree)


def _rule_deg1():
    return _build([([(1.0 / 3.0, 1.0 / 3.0)], [0.5])], 1)


def _rule_deg2():
    return _build([_orbit3(1.0 / 6.0, 1.0 / 6.0)], 2)


def _rule_deg4():
    return _build(
        [
            _orbit3(0.44594849091596488632, 0.11169079483900573285),
            _orbit3(0.091576213509770743460, 0.054975871827660933819),
        ],
        4,
    )


def _rule_deg5():
    s = np.sqrt(15.0)
    return _build(
        [
            ([(1.0 / 3.0, 1.0 / 3.0)], [9.0 / 80.0]),
            _orbit3((6.0 - s) / 21.0, (155.0 - s) / 2400.0),
            _orbit3((6.0 + s) / 21.0, (155.0 + s) / 2400.0),
        ],
        5,
    )


def _rule_deg6():
    return _build(
        [
            _orbit3(0.24928674517091042129, 0.058393137863189683013),
            _orbit3(0.063089014491502228340, 0.025422453185103408460),
            _orbit6(0.053145049844816947353, 0.31035245103378440542, 0.041425537809186787597),
        ],
        6,
    )


# All rules have positive weights and interior points.
_RULES = {1: _rule_deg1, 2: _rule_deg2, 3: _rule_deg4, 4: _rule_deg4, 5: _rule_deg5, 6: _rule_deg6}


@lru_cache(maxsize=None)
def quadrature(order):
    """Symmetric Gauss rule on the reference triangle exact to ``order``."""
    if order not in _RULES:
        raise ElementError(f"unsupported quadrature order {order}; expected 1..6")
    return _RULES[order]()


def default_quadrature_order(degree):
    return 2 * degree + 1


class ReferenceElement:
    """Nodal P1 or P2 basis on the reference triangle."""

    def __init__(self, degree):
        if degree not in (1, 2):
            raise ElementError(f"unsupported element degree {degree}")
        self.degree = degree
        self.node_count = 3 if degree == 1 else 6
        verts = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]
        mids = [(0.5, 0.0), (0.5, 0.5), (0.0, 0.5)]
        self.nodes = np.array(verts if degree == 1 else verts + mids)

    def __repr__(self):
        return f"ReferenceElement(degree={self.degree})"

    def __eq__(self, other):
        return isinstance(other, ReferenceElement) and other.degree == self.degree

    def __hash__(self):
        return hash(("P", self.degree))

    def values(self, xi):
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        x, y = xi[:, 0], xi[:, 1]
        l0, l1, l2 = 1.0 - x - y, x, y
        if self.degree == 1:
            return np.stack([l0, l1, l2], axis=-1)
        return np.stack(
            [
                l0 * (2 * l0 - 1),
                l1 * (2 * l1 - 1),
                l2 * (2 * l2 - 1),
                4 * l0 * l1,
                4 * l1 * l2,
                4 * l2 * l0,
            ],
            axis=-1,
        )

    def gradients(self, xi):
        """Reference gradients, shape (npts, node_count, 2)."""
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        n = xi.shape[0]
        if self.degree == 1:
            g = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
            return np.broadcast_to(g, (n, 3, 2)).copy()
        x, y = xi[:, 0], xi[:, 1]
        l0 = 1.0 - x - y
        dl = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
        lam = [l0, x, y]
        out = np.empty((n, 6, 2))
        for i in range(3):
            out[:, i, :] = (4 * lam[i] - 1)[:, None] * dl[i]
        for k, (i, j) in enumerate(((0, 1), (1, 2), (2, 0))):
            out[:, 3 + k, :] = 4 * (lam[i][:, None] * dl[j] + lam[j][:, None] * dl[i])
        return out

    def hessians(self, xi):
        """Reference second derivatives, shape (npts, node_count, 2, 2).

        Constant in xi for P2 and identically zero for P1.
        """
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        n = xi.shape[0]
        h = np.zeros((self.node_count, 2, 2))
        if self.degree == 2:
            dl = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
            for i in range(3):
                h[i] = 4 * np.outer(dl[i], dl[i])
            for k, (i, j) in enumerate(((0, 1), (1, 2), (2, 0))):
                h[3 + k] = 4 * (np.outer(dl[i], dl[j]) + np.outer(dl[j], dl[i]))
        return np.broadcast_to(h, (n,) + h.shape).copy()


def shape_eval(element, xi):
    """Shape values and reference gradients at a point of the closed
    reference triangle."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (2,):
        raise ElementError("xi must be a single 2D reference point")
    if xi[0] < -_INSIDE_TOL or xi[1] < -_INSIDE_TOL or xi[0] + xi[1] > 1 + _INSIDE_TOL:
        raise ElementError(f"point {tuple(xi)} lies outside the reference triangle")
    return element.values(xi)[0], element.gradients(xi)[0]


def affine_jacobians(coords, cells):
    """Per-cell Jacobian matrices (M, 2, 2) and signed determinants (M,).

    Column k of the Jacobian is vertex k+1 minus vertex 0.
    """
    p = coords[cells]
    jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    return jac, det


def physical_map(cell_coords, xi):
    """Affine image of reference points for one cell.

    Returns (x, J, |det J|).  Raises on a nonpositive determinant.
    """
    cell_coords = np.asarray(cell_coords, dtype=float)
    jac, det = affine_jacobians(cell_coords, np.array([[0, 1, 2]]))
    jac, det = jac[0], det[0]
    if not det > 0:
        raise ElementError(f"cell has nonpositive Jacobian determinant {det:g}")
    xi = np.asarray(xi, dtype=float)
    x = cell_coords[0] + xi @ jac.T
    return x, jac, abs(det)
