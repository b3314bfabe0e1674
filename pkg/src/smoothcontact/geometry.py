"""Polylines, 2D triangle meshes, normals and proximity queries.

Orientation convention: closed boundaries of solids run counter-clockwise and
their normals point outward. Open polylines carry normals on the left of the
traversal direction, so a floor traced left to right faces up.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import GeometryError

SEGMENT_EPS = 1e-12

# 90 degree counter-clockwise rotation
ROT90 = np.array([[0.0, -1.0], [1.0, 0.0]])


def cross2(u, v):
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def signed_area(vertices):
    v = np.asarray(vertices, dtype=float)
    w = np.roll(v, -1, axis=0)
    return 0.5 * float(np.sum(cross2(v, w)))


@dataclass(frozen=True, eq=False)
class Polyline:
    """Ordered boundary vertices with optional per-vertex unit normals."""

    vertices: np.ndarray
    closed: bool = False
    normals: np.ndarray | None = None

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 2:
            raise GeometryError("polyline needs at least two 2D vertices")
        object.__setattr__(self, "vertices", v)
        seg = v[self.segment_ends()[1]] - v[self.segment_ends()[0]]
        if np.any(np.linalg.norm(seg, axis=1) <= SEGMENT_EPS):
            raise GeometryError("degenerate segment")
        if self.normals is not None:
            n = np.array(self.normals, dtype=float)
            if n.shape != v.shape:
                raise GeometryError("normals must match vertices")
            object.__setattr__(self, "normals", n)

    def __len__(self):
        return len(self.vertices)

    @property
    def n_segments(self):
        return len(self.vertices) if self.closed else len(self.vertices) - 1

    def segment_ends(self):
        n = len(self.vertices)
        a = np.arange(self.n_segments)
        return a, (a + 1) % n

    @property
    def orientation(self):
        """Sign applied to the left normal to obtain the outward normal."""
        if self.closed and signed_area(self.vertices) > 0.0:
            return -1.0
        return 1.0

    def segment_normals(self):
        a, b = self.segment_ends()
        t = self.vertices[b] - self.vertices[a]
        n = self.orientation * (t @ ROT90.T)
        return n / np.linalg.norm(n, axis=1)[:, None]

    def neighbor_stencil(self):
        """(prev, next) vertex indices whose difference sets each vertex normal."""
        n = len(self.vertices)
        idx = np.arange(n)
        if self.closed:
            return (idx - 1) % n, (idx + 1) % n
        return np.maximum(idx - 1, 0), np.minimum(idx + 1, n - 1)

    def with_normals(self):
        return vertex_normals(self)

    def transformed(self, rotation, translation=(0.0, 0.0)):
        rot = np.asarray(rotation, dtype=float)
        v = self.vertices @ rot.T + np.asarray(translation, dtype=float)
        n = None if self.normals is None else self.normals @ rot.T
        return Polyline(v, self.closed, n)


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Oriented samples whose normals are fixed, not derived from positions."""

    vertices: np.ndarray
    normals: np.ndarray

    def __post_init__(self):
        v = np.atleast_2d(np.array(self.vertices, dtype=float))
        n = np.atleast_2d(np.array(self.normals, dtype=float))
        if v.shape != n.shape or v.shape[1] != 2:
            raise GeometryError("points and normals must both have shape (n, 2)")
        norm = np.linalg.norm(n, axis=1)
        if np.any(norm < SEGMENT_EPS):
            raise GeometryError("degenerate vertex normal")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "normals", n / norm[:, None])

    def __len__(self):
        return len(self.vertices)


def point_segment_distance(p, a, b):
    """Distance from ``p`` to segment ``ab``.

    Returns
    -------
    distance : float
    closest : ndarray of shape (2,)
    bary : float
        Clamped parameter of the closest point, ``closest = a + bary * (b - a)``.
    """
    p, a, b = (np.asarray(z, dtype=float) for z in (p, a, b))
    t = b - a
    tt = float(t @ t)
    if tt <= SEGMENT_EPS**2:
        raise GeometryError("degenerate segment")
    s = min(1.0, max(0.0, float((p - a) @ t) / tt))
    closest = a + s * t
    return float(np.linalg.norm(p - closest)), closest, s


def point_segment_distances(p, poly):
    """Vectorized unsigned distances from ``p`` to every segment of ``poly``."""
    ia, ib = poly.segment_ends()
    a = poly.vertices[ia]
    t = poly.vertices[ib] - a
    s = np.clip(np.einsum("ij,ij->i", p - a, t) / np.einsum("ij,ij->i", t, t), 0.0, 1.0)
    closest = a + s[:, None] * t
    return np.linalg.norm(p - closest, axis=1), closest, s


def vertex_normals(poly):
    """Length-weighted vertex normals.

    The length-weighted sum of the two adjacent segment normals equals the
    rotated chord between the neighbouring vertices, which is what we
    normalize.
    """
    prev, nxt = poly.neighbor_stencil()
    m = poly.orientation * ((poly.vertices[nxt] - poly.vertices[prev]) @ ROT90.T)
    norm = np.linalg.norm(m, axis=1)
    if np.any(norm < SEGMENT_EPS):
        raise GeometryError("degenerate vertex normal")
    return Polyline(poly.vertices, poly.closed, m / norm[:, None])


class SupportGrid:
    """Uniform hash grid with cell size ``radius`` over a fixed point set."""

    def __init__(self, points, radius):
        if radius <= 0:
            raise ValueError("support radius must be positive")
        self.points = np.asarray(points, dtype=float)
        self.radius = float(radius)
        self._cells = defaultdict(list)
        keys = np.floor(self.points / self.radius).astype(np.int64)
        for i, (kx, ky) in enumerate(keys):
            self._cells[(int(kx), int(ky))].append(i)

    def query(self, x):
        x = np.asarray(x, dtype=float)
        kx, ky = (int(k) for k in np.floor(x / self.radius))
        cand = []
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                cand.extend(self._cells.get((kx + dx, ky + dy), ()))
        if not cand:
            return []
        cand = np.array(sorted(cand))
        d2 = np.sum((self.points[cand] - x) ** 2, axis=1)
        return [int(i) for i in cand[d2 < self.radius**2]]


def support_query(poly, x, R):
    """Indices of vertices strictly within ``R`` of ``x``, ascending."""
    points = getattr(poly, "vertices", poly)
    return SupportGrid(points, R).query(x)


@dataclass(eq=False)
class TriMesh2D:
    vertices: np.ndarray
    triangles: np.ndarray
    boundary_loops: list = field(init=False, repr=False)

    def __post_init__(self):
        self.vertices = np.array(self.vertices, dtype=float)
        self.triangles = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.triangles.size and (self.triangles.min() < 0
                                    or self.triangles.max() >= len(self.vertices)):
            raise GeometryError("triangle index out of range")
        areas = self.areas()
        if np.any(areas <= 0.0):
            bad = int(np.flatnonzero(areas <= 0.0)[0])
            raise GeometryError(f"triangle {bad} has non-positive rest area")
        self.boundary_loops = extract_boundary_loops(self.triangles)

    def areas(self, positions=None):
        x = self.vertices if positions is None else np.asarray(positions).reshape(-1, 2)
        t = self.triangles
        return 0.5 * cross2(x[t[:, 1]] - x[t[:, 0]], x[t[:, 2]] - x[t[:, 0]])

    @property
    def boundary_indices(self):
        """Vertex indices of the outer boundary loop (counter-clockwise)."""
        return max(self.boundary_loops,
                   key=lambda loop: signed_area(self.vertices[loop]))

    @property
    def boundary(self):
        return Polyline(self.vertices[self.boundary_indices], closed=True)


def extract_boundary_loops(triangles):
    """Chain boundary edges (edges without a twin) into closed loops."""
    directed = set()
    for t in triangles:
        for i in range(3):
            directed.add((int(t[i]), int(t[(i + 1) % 3])))
    nxt = {}
    for a, b in sorted(directed):
        if (b, a) not in directed:
            if a in nxt:
                raise GeometryError(f"non-manifold boundary at vertex {a}")
            nxt[a] = b
    loops = []
    seen = set()
    for start in sorted(nxt):
        if start in seen:
            continue
        loop = [start]
        seen.add(start)
        cur = nxt[start]
        while cur != start:
            if cur in seen or cur not in nxt:
                raise GeometryError("boundary edges do not form closed loops")
            loop.append(cur)
            seen.add(cur)
            cur = nxt[cur]
        loops.append(np.array(loop, dtype=np.int64))
    return loops


def box_mesh(width, height, nx, ny, origin=(0.0, 0.0)):
    """Structured rectangle split into ``2 * nx * ny`` counter-clockwise triangles."""
    xs = np.linspace(0.0, width, nx + 1) + origin[0]
    ys = np.linspace(0.0, height, ny + 1) + origin[1]
    gx, gy = np.meshgrid(xs, ys)
    vertices = np.column_stack([gx.ravel(), gy.ravel()])
    tris = []
    for j in range(ny):
        for i in range(nx):
            v0 = j * (nx + 1) + i
            v1, v2, v3 = v0 + 1, v0 + nx + 2, v0 + nx + 1
            tris.append((v0, v1, v2))
            tris.append((v0, v2, v3))
    return TriMesh2D(vertices, np.array(tris))


def line_polyline(x0, x1, n_segments, y=0.0):
    """Flat open polyline from ``x0`` to ``x1``; normals face +y."""
    xs = np.linspace(x0, x1, n_segments + 1)
    return Polyline(np.column_stack([xs, np.full_like(xs, y)]), closed=False)


def arc_polyline(radius, theta0, theta1, n_segments, center=(0.0, 0.0)):
    """Open circular arc traversed counter-clockwise; normals face the center."""
    th = np.linspace(theta0, theta1, n_segments + 1)
    v = np.column_stack([np.cos(th), np.sin(th)]) * radius + np.asarray(center)
    return Polyline(v, closed=False)


def read_obj(path):
    """Read the 2D OBJ subset: ``v x y`` and ``f i j k`` (1-based)."""
    verts, faces = [], []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *rest = line.split()
        try:
            if tag == "v":
                if len(rest) == 3 and float(rest[2]) != 0.0:
                    raise GeometryError(f"{path}:{lineno}: non-planar vertex")
                if len(rest) not in (2, 3):
                    raise GeometryError(f"{path}:{lineno}: expected 2 coordinates")
                verts.append((float(rest[0]), float(rest[1])))
            elif tag == "f":
                if len(rest) != 3:
                    raise GeometryError(f"{path}:{lineno}: only triangles supported")
                faces.append(tuple(int(tok.split("/")[0]) - 1 for tok in rest))
        except ValueError as exc:
            if isinstance(exc, GeometryError):
                raise
            raise GeometryError(f"{path}:{lineno}: {exc}") from exc
    return TriMesh2D(np.array(verts), np.array(faces))


def write_obj(mesh, path):
    lines = [f"v {float(x)!r} {float(y)!r}" for x, y in mesh.vertices]
    lines += ["f " + " ".join(str(i + 1) for i in t) for t in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n")


def read_polyline(path):
    """Plain-text polyline: first line ``closed`` or ``open``, then ``x y`` rows."""
    rows = [ln.split("#", 1)[0].strip() for ln in Path(path).read_text().splitlines()]
    rows = [r for r in rows if r]
    if not rows or rows[0] not in ("closed", "open"):
        raise GeometryError(f"{path}: first line must be 'closed' or 'open'")
    try:
        pts = [tuple(float(tok) for tok in r.split()) for r in rows[1:]]
    except ValueError as exc:
        raise GeometryError(f"{path}: {exc}") from exc
    if any(len(p) != 2 for p in pts):
        raise GeometryError(f"{path}: each vertex row needs two coordinates")
    return Polyline(np.array(pts), closed=rows[0] == "closed")


def write_polyline(poly, path):
    lines = ["closed" if poly.closed else "open"]
    lines += [f"{float(x)!r} {float(y)!r}" for x, y in poly.vertices]
    Path(path).write_text("\n".join(lines) + "\n")
