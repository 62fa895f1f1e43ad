"""Triangular meshes: storage, ASCII IO, geometric queries, validation.

The ASCII format is::

    tri-mesh v1
    nodes N
    x y            (N lines)
    cells M
    i j k          (M lines, 0-based node indices)
    boundary B
    i j tag        (B lines)

Tokens are whitespace separated; ``#`` starts a comment.
"""
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np

HEADER = "tri-mesh v1"


class MeshError(ValueError):
    pass


class MeshParseError(MeshError):
    def __init__(self, lineno, message):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class MeshTopologyError(MeshError):
    pass


def signed_areas(coords, cells):
    p = coords[cells]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def cell_diameters(coords, cells):
    """Longest edge of every cell."""
    p = coords[cells]
    d01 = np.linalg.norm(p[:, 1] - p[:, 0], axis=1)
    d12 = np.linalg.norm(p[:, 2] - p[:, 1], axis=1)
    d20 = np.linalg.norm(p[:, 0] - p[:, 2], axis=1)
    return np.maximum(np.maximum(d01, d12), d20)


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable triangulation.  Nodes are the reference (initial)
    coordinates; moved geometries are separate coordinate arrays sharing
    this topology."""

    nodes: np.ndarray
    cells: np.ndarray
    boundary_facets: np.ndarray
    boundary_tags: np.ndarray

    def __post_init__(self):
        for name in ("nodes", "cells", "boundary_facets", "boundary_tags"):
            arr = getattr(self, name)
            arr.setflags(write=False)

    @property
    def node_count(self):
        return len(self.nodes)

    @property
    def cell_count(self):
        return len(self.cells)

    @cached_property
    def _edge_data(self):
        local = np.array([[0, 1], [1, 2], [2, 0]])
        all_edges = np.sort(self.cells[:, local].reshape(-1, 2), axis=1)
        edges, inverse, counts = np.unique(
            all_edges, axis=0, return_inverse=True, return_counts=True
        )
        inverse = inverse.reshape(-1)
        return edges, inverse.reshape(-1, 3), counts

    @property
    def edges(self):
        """Unique edges (E, 2), each with ascending node indices."""
        return self._edge_data[0]

    @property
    def cell_edges(self):
        """(M, 3) edge ids of local edges (0,1), (1,2), (2,0)."""
        return self._edge_data[1]

    @property
    def edge_cell_counts(self):
        return self._edge_data[2]

    @cached_property
    def tags(self):
        return tuple(sorted(int(t) for t in np.unique(self.boundary_tags)))

    def boundary_nodes(self, tags=None):
        facets = self.boundary_facets
        if tags is not None:
            facets = facets[np.isin(self.boundary_tags, list(tags))]
        return np.unique(facets)

    @cached_property
    def neighbors(self):
        """(M, 3) neighbouring cell across local edge k, or -1 on the boundary."""
        ce = self.cell_edges
        owner = np.full((len(self.edges), 2), -1, dtype=np.int64)
        flat = ce.reshape(-1)
        cell_of = np.repeat(np.arange(self.cell_count), 3)
        order = np.argsort(flat, kind="stable")
        sorted_edges = flat[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = sorted_edges[1:] != sorted_edges[:-1]
        owner[sorted_edges[first], 0] = cell_of[order[first]]
        owner[sorted_edges[~first], 1] = cell_of[order[~first]]
        nb = np.where(owner[ce, 0] == np.arange(self.cell_count)[:, None], owner[ce, 1], owner[ce, 0])
        return nb

    def areas(self, coords=None):
        return signed_areas(self.nodes if coords is None else coords, self.cells)

    def diameters(self, coords=None):
        return cell_diameters(self.nodes if coords is None else coords, self.cells)


def from_arrays(nodes, cells, boundary_facets, boundary_tags, reorient=True):
    """Build and validate a Mesh, reordering cells counterclockwise."""
    nodes = np.array(nodes, dtype=float).reshape(-1, 2)
    cells = np.array(cells, dtype=np.int64).reshape(-1, 3)
    facets = np.array(boundary_facets, dtype=np.int64).reshape(-1, 2)
    tags = np.array(boundary_tags, dtype=np.int64).reshape(-1)
    n = len(nodes)
    bad = np.nonzero((cells < 0) | (cells >= n))[0]
    if len(bad):
        raise MeshTopologyError(f"cell {bad[0]} references a node index outside [0, {n})")
    c = cells
    dup = np.nonzero((c[:, 0] == c[:, 1]) | (c[:, 1] == c[:, 2]) | (c[:, 0] == c[:, 2]))[0]
    if len(dup):
        raise MeshTopologyError(f"cell {dup[0]} repeats a node index")
    area = signed_areas(nodes, cells)
    if reorient:
        flip = area < 0
        if flip.any():
            cells = cells.copy()
            cells[flip] = cells[flip][:, [0, 2, 1]]
            area = np.abs(area)
    nonpos = np.nonzero(~(area > 0))[0]
    if len(nonpos):
        raise MeshTopologyError(f"cell {nonpos[0]} has nonpositive area {area[nonpos[0]]:g}")
    badf = np.nonzero((facets < 0) | (facets >= n))[0]
    if len(badf):
        raise MeshTopologyError(f"boundary facet {badf[0]} references a node index outside [0, {n})")
    if len(facets) != len(tags):
        raise MeshTopologyError("boundary facet and tag counts differ")
    mesh = Mesh(nodes, cells, facets, tags)
    _check_boundary(mesh)
    return mesh


def _check_boundary(mesh):
    edges, counts = mesh.edges, mesh.edge_cell_counts
    if (counts > 2).any():
        e = edges[np.argmax(counts > 2)]
        raise MeshTopologyError(f"edge ({e[0]}, {e[1]}) is shared by more than two cells")
    key = {tuple(e): k for k, e in enumerate(edges)}
    seen = set()
    for i, (a, b) in enumerate(mesh.boundary_facets):
        k = key.get((min(a, b), max(a, b)))
        if k is None or counts[k] != 1:
            raise MeshTopologyError(f"boundary facet {i} ({a}, {b}) is not an edge of exactly one cell")
        if k in seen:
            raise MeshTopologyError(f"boundary facet {i} ({a}, {b}) is tagged more than once")
        seen.add(k)
    missing = [k for k in np.nonzero(counts == 1)[0] if k not in seen]
    if missing:
        e = edges[missing[0]]
        raise MeshTopologyError(f"boundary edge ({e[0]}, {e[1]}) carries no tag")


def cell_diameter(mesh, cell):
    if not 0 <= cell < mesh.cell_count:
        raise IndexError(f"cell index {cell} out of range")
    return float(cell_diameters(mesh.nodes, mesh.cells[cell : cell + 1])[0])


def global_mesh_size(mesh, coords=None):
    if mesh.cell_count == 0:
        raise MeshError("empty mesh")
    return float(mesh.diameters(coords).max())


def boundary_enclosed_area(mesh, coords=None):
    """Shoelace area of the boundary curves, holes included."""
    x = mesh.nodes if coords is None else coords
    # Orient each facet as it appears in its (counterclockwise) cell.
    ce = mesh.cell_edges
    local = np.array([[0, 1], [1, 2], [2, 0]])
    directed = {}
    for k in range(3):
        ids = ce[:, k]
        pairs = mesh.cells[:, local[k]]
        for eid, (a, b) in zip(ids, pairs):
            if mesh.edge_cell_counts[eid] == 1:
                directed[eid] = (a, b)
    a = np.array([p[0] for p in directed.values()])
    b = np.array([p[1] for p in directed.values()])
    return 0.5 * float(np.sum(x[a, 0] * x[b, 1] - x[b, 0] * x[a, 1]))


def _tokens(text):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line.split()


def parse_mesh(text):
    lines = list(_tokens(text))
    pos = 0

    def take(expect_len, what):
        nonlocal pos
        if pos >= len(lines):
            last = lines[-1][0] if lines else 0
            raise MeshParseError(last, f"unexpected end of file while reading {what}")
        lineno, toks = lines[pos]
        pos += 1
        if len(toks) != expect_len:
            raise MeshParseError(lineno, f"expected {expect_len} fields for {what}, got {len(toks)}")
        return lineno, toks

    lineno, toks = take(2, "header")
    if " ".join(toks) != HEADER:
        raise MeshParseError(lineno, f"expected header '{HEADER}'")

    def section(name, width, conv):
        lineno, toks = take(2, f"'{name}' section header")
        if toks[0] != name:
            raise MeshParseError(lineno, f"expected section '{name}', found '{toks[0]}'")
        try:
            count = int(toks[1])
        except ValueError:
            raise MeshParseError(lineno, f"bad count '{toks[1]}'") from None
        if count < 0:
            raise MeshParseError(lineno, "negative count")
        rows = []
        for _ in range(count):
            ln, t = take(width, f"{name} entry")
            try:
                rows.append([c(v) for c, v in zip(conv, t)])
            except ValueError:
                raise MeshParseError(ln, f"malformed {name} entry: {' '.join(t)}") from None
        return rows

    nodes = section("nodes", 2, (float, float))
    cells = section("cells", 3, (int, int, int))
    bnd = section("boundary", 3, (int, int, int))
    if pos != len(lines):
        raise MeshParseError(lines[pos][0], "trailing content after boundary section")
    facets = [r[:2] for r in bnd]
    tags = [r[2] for r in bnd]
    return from_arrays(nodes, cells, facets, tags)


def load_mesh(path):
    return parse_mesh(Path(path).read_text())


def format_mesh(mesh, coords=None):
    x = mesh.nodes if coords is None else coords
    out = [HEADER, f"nodes {len(x)}"]
    out += [f"{float(a)!r} {float(b)!r}" for a, b in x]
    out.append(f"cells {mesh.cell_count}")
    out += [f"{i} {j} {k}" for i, j, k in mesh.cells]
    out.append(f"boundary {len(mesh.boundary_facets)}")
    out += [f"{i} {j} {t}" for (i, j), t in zip(mesh.boundary_facets, mesh.boundary_tags)]
    return "\n".join(out) + "\n"


def write_mesh(mesh, path, coords=None):
    Path(path).write_text(format_mesh(mesh, coords))


# Tags of the built-in rectangle generator.
BOTTOM, RIGHT, TOP, LEFT = 1, 2, 3, 4


def rectangle_mesh(nx, ny=None, x0=0.0, x1=1.0, y0=0.0, y1=1.0, diagonal="alternate"):
    """Structured triangulation of a rectangle with 2*nx*ny cells.

    ``diagonal`` is ``"right"`` (all cells split along the same diagonal)
    or ``"alternate"`` (split direction alternates in a checkerboard).
    Boundary tags: 1 bottom, 2 right, 3 top, 4 left.
    """
    ny = nx if ny is None else ny
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    cells = []
    for j in range(ny):
        for i in range(nx):
            a, b = idx[j, i], idx[j, i + 1]
            c, d = idx[j + 1, i + 1], idx[j + 1, i]
            if diagonal == "alternate" and (i + j) % 2:
                cells += [(a, b, d), (b, c, d)]
            else:
                cells += [(a, b, c), (a, c, d)]
    facets, tags = [], []
    for i in range(nx):
        facets.append((idx[0, i], idx[0, i + 1]))
        tags.append(BOTTOM)
        facets.append((idx[ny, i + 1], idx[ny, i]))
        tags.append(TOP)
    for j in range(ny):
        facets.append((idx[j, nx], idx[j + 1, nx]))
        tags.append(RIGHT)
        facets.append((idx[j + 1, 0], idx[j, 0]))
        tags.append(LEFT)
    return from_arrays(nodes, cells, facets, tags)


def unit_square_mesh(n, diagonal="alternate"):
    return rectangle_mesh(n, n, diagonal=diagonal)


def refine_uniform(mesh):
    """Split every cell into four through its edge midpoints."""
    nn = mesh.node_count
    mids = 0.5 * (mesh.nodes[mesh.edges[:, 0]] + mesh.nodes[mesh.edges[:, 1]])
    nodes = np.vstack([mesh.nodes, mids])
    ce = mesh.cell_edges + nn
    v = mesh.cells
    cells = np.concatenate(
        [
            np.column_stack([v[:, 0], ce[:, 0], ce[:, 2]]),
            np.column_stack([ce[:, 0], v[:, 1], ce[:, 1]]),
            np.column_stack([ce[:, 2], ce[:, 1], v[:, 2]]),
            np.column_stack([ce[:, 0], ce[:, 1], ce[:, 2]]),
        ]
    )
    key = {tuple(e): k for k, e in enumerate(mesh.edges)}
    facets, tags = [], []
    for (a, b), t in zip(mesh.boundary_facets, mesh.boundary_tags):
        m = nn + key[(min(a, b), max(a, b))]
        facets += [(a, m), (m, b)]
        tags += [t, t]
    return from_arrays(nodes, cells, facets, tags)


@dataclass
class BoundaryCondition:
    """Dirichlet data per boundary tag, g(t, x) vectorised over points,
    and the set of tags carrying the natural (homogeneous Neumann)
    condition."""

    dirichlet: dict[int, Callable] = field(default_factory=dict)
    neumann: frozenset = frozenset()

    def __post_init__(self):
        self.neumann = frozenset(int(t) for t in self.neumann)
        both = set(self.dirichlet) & self.neumann
        if both:
            raise MeshError(f"tags {sorted(both)} are both Dirichlet and Neumann")

    def check_against(self, mesh):
        declared = set(self.dirichlet) | self.neumann
        unknown = declared - set(mesh.tags)
        if unknown:
            raise MeshError(f"boundary tags {sorted(unknown)} do not exist in the mesh")
        for tag, g in self.dirichlet.items():
            if g is None:
                raise MeshError(f"Dirichlet tag {tag} has no value function")
        undeclared = set(mesh.tags) - declared
        if undeclared:
            raise MeshError(f"boundary tags {sorted(undeclared)} have no boundary condition")
