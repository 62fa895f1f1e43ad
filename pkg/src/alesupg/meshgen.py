"""Channel-with-disc triangulation.

Points: the rectangle boundary, graded rings around the disc (spacing
growing geometrically away from the wall) and a hexagonal background
lattice.  scipy's Delaunay triangulates the cloud; cells whose centroid
falls inside the disc are removed and the resulting boundary is checked
and tagged.
"""
import numpy as np
from scipy.spatial import Delaunay

from .mesh import MeshTopologyError, from_arrays

WALL, INLET, OUTFLOW, DISC = 1, 2, 3, 4

CHANNEL = (-3.0, 9.0, -3.0, 3.0)
DISC_CENTER = (0.0, 0.0)
DISC_RADIUS = 1.0


def _edge_points(a, b, h, include_start=True):
    a, b = np.asarray(a, float), np.asarray(b, float)
    n = max(1, int(np.ceil(np.linalg.norm(b - a) / h)))
    s = np.arange(0 if include_start else 1, n) / n
    return a[None] + s[:, None] * (b - a)[None]


def _cloud(h, wall_ratio, growth, box, center, radius):
    x0, x1, y0, y1 = box
    cx, cy = center
    corners = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
    pts = [_edge_points(corners[k], corners[(k + 1) % 4], h) for k in range(4)]

    s = wall_ratio * h
    n0 = max(12, int(np.ceil(2 * np.pi * radius / s)))
    s = 2 * np.pi * radius / n0
    r = radius
    r_limit = min(cx - x0, x1 - cx, cy - y0, y1 - cy) - 0.75 * h
    if r_limit <= radius:
        raise ValueError(f"mesh size {h:.3g} is too coarse for the gap between disc and walls")
    k = 0
    while True:
        n = max(12, int(np.round(2 * np.pi * r / s)))
        theta = 2 * np.pi * (np.arange(n) + 0.5 * (k % 2)) / n
        pts.append(np.column_stack([cx + r * np.cos(theta), cy + r * np.sin(theta)]))
        if s >= h or r + s * np.sqrt(3) / 2 > r_limit:
            break
        r += s * np.sqrt(3) / 2
        s = min(h, s * growth)
        k += 1
    r_out = r + 0.5 * h

    dy = h * np.sqrt(3) / 2
    rows = np.arange(y0 + dy, y1 - 0.5 * dy, dy)
    lattice = []
    for j, y in enumerate(rows):
        xs = np.arange(x0 + (0.5 + 0.5 * (j % 2)) * h, x1 - 0.45 * h, h)
        lattice.append(np.column_stack([xs, np.full(len(xs), y)]))
    lattice = np.vstack(lattice)
    d = np.hypot(lattice[:, 0] - cx, lattice[:, 1] - cy)
    margin = np.minimum.reduce(
        [lattice[:, 0] - x0, x1 - lattice[:, 0], lattice[:, 1] - y0, y1 - lattice[:, 1]]
    )
    lattice = lattice[(d > r_out) & (margin > 0.45 * h)]
    pts.append(lattice)
    return np.vstack(pts)


def _triangulate(h, wall_ratio, growth, box, center, radius):
    pts = _cloud(h, wall_ratio, growth, box, center, radius)
    tri = Delaunay(pts)
    cells = tri.simplices
    cen = pts[cells].mean(axis=1)
    keep = np.hypot(cen[:, 0] - center[0], cen[:, 1] - center[1]) > radius
    cells = cells[keep]
    used = np.unique(cells)
    remap = -np.ones(len(pts), dtype=np.int64)
    remap[used] = np.arange(len(used))
    return pts[used], remap[cells]


def _tag_boundary(nodes, cells, box, center, radius, tol=1e-9):
    x0, x1, y0, y1 = box
    e = np.sort(np.concatenate([cells[:, [0, 1]], cells[:, [1, 2]], cells[:, [2, 0]]]), axis=1)
    edges, counts = np.unique(e, axis=0, return_counts=True)
    bnd = edges[counts == 1]
    p, q = nodes[bnd[:, 0]], nodes[bnd[:, 1]]
    tags = np.zeros(len(bnd), dtype=np.int64)

    def both(cond):
        return cond(p) & cond(q)

    tags[both(lambda z: np.abs(z[:, 1] - y0) < tol) | both(lambda z: np.abs(z[:, 1] - y1) < tol)] = WALL
    tags[both(lambda z: np.abs(z[:, 0] - x0) < tol)] = INLET
    tags[both(lambda z: np.abs(z[:, 0] - x1) < tol)] = OUTFLOW
    on_disc = both(lambda z: np.abs(np.hypot(z[:, 0] - center[0], z[:, 1] - center[1]) - radius) < tol)
    tags[on_disc] = DISC
    if (tags == 0).any():
        i = int(np.argmax(tags == 0))
        raise MeshTopologyError(
            f"generated boundary edge {tuple(p[i])}-{tuple(q[i])} lies on neither the channel walls nor the disc"
        )
    return bnd, tags


def channel_disc_mesh(target_cells=9400, wall_ratio=0.3, growth=1.15, box=CHANNEL, center=DISC_CENTER, radius=DISC_RADIUS):
    """Triangulated rectangle minus a disc with roughly ``target_cells``
    cells.  Boundary tags: 1 top/bottom walls, 2 inlet (x = x0),
    3 outflow (x = x1), 4 disc."""
    if target_cells < 200:
        raise ValueError(f"target_cells={target_cells} is too small for the channel geometry")
    x0, x1, y0, y1 = box
    area = (x1 - x0) * (y1 - y0) - np.pi * radius**2
    h = np.sqrt(4 * area / (np.sqrt(3) * target_cells))
    for _ in range(6):
        nodes, cells = _triangulate(h, wall_ratio, growth, box, center, radius)
        ratio = len(cells) / target_cells
        if abs(ratio - 1) < 0.03:
            break
        h *= np.sqrt(ratio)
    bnd, tags = _tag_boundary(nodes, cells, box, center, radius)
    return from_arrays(nodes, cells, bnd, tags)
