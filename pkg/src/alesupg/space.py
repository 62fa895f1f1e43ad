"""Continuous P1/P2 Lagrange spaces on a fixed-topology triangulation.

DOF numbering: mesh vertices first, then (P2 only) one DOF per edge in
``mesh.edges`` order.  The numbering never changes when the nodes move.
"""
from functools import cached_property

import numpy as np

from .elements import ReferenceElement


class FunctionSpace:
    def __init__(self, mesh, degree=1):
        self.mesh = mesh
        self.degree = degree
        self.element = ReferenceElement(degree)

    def __repr__(self):
        return f"FunctionSpace(P{self.degree}, ndofs={self.n_dofs})"

    @property
    def n_dofs(self):
        n = self.mesh.node_count
        return n if self.degree == 1 else n + len(self.mesh.edges)

    @cached_property
    def cell_dofs(self):
        if self.degree == 1:
            return self.mesh.cells
        return np.hstack([self.mesh.cells, self.mesh.cell_edges + self.mesh.node_count])

    def dof_coords(self, coords):
        """Physical DOF positions for the given (P1) node coordinates."""
        if self.degree == 1:
            return np.asarray(coords)
        e = self.mesh.edges
        return np.vstack([coords, 0.5 * (coords[e[:, 0]] + coords[e[:, 1]])])

    @cached_property
    def _boundary_dofs_by_tag(self):
        mesh = self.mesh
        key = {tuple(e): k for k, e in enumerate(mesh.edges)}
        out = {}
        for tag in mesh.tags:
            sel = mesh.boundary_facets[mesh.boundary_tags == tag]
            dofs = set(sel.ravel().tolist())
            if self.degree == 2:
                for a, b in sel:
                    dofs.add(mesh.node_count + key[(min(a, b), max(a, b))])
            out[tag] = np.array(sorted(dofs), dtype=np.int64)
        return out

    def boundary_dofs(self, tags=None):
        d = self._boundary_dofs_by_tag
        tags = d.keys() if tags is None else tags
        parts = [d[t] for t in tags if t in d]
        if not parts:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate(parts))

    def interior_dofs(self):
        return np.setdiff1d(np.arange(self.n_dofs), self.boundary_dofs())

    def interpolate(self, func, coords, t=0.0):
        """Nodal interpolant of func(t, x)."""
        x = self.dof_coords(coords)
        return np.broadcast_to(np.asarray(func(t, x), dtype=float), (len(x),)).copy()
