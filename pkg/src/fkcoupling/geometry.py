"""Lattice box geometry.

Builds a (possibly rotated) box cut out of the d-dimensional integer
lattice, together with its boundary, the top/bottom split used by the
Dobrushin-type boundary condition, star-adjacency between edges and the
L-infinity edge metrics that the analysis relies on.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

MEMBERSHIP_TOL = 1e-9


def rotation_2d(theta: float) -> np.ndarray:
    """Plane rotation by angle theta, as a 2x2 orthogonal matrix."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]], dtype=float)


def rotation_axis_pair(dim: int, i: int, j: int, theta: float) -> np.ndarray:
    """Rotation by theta in the (i, j) coordinate plane of R^dim."""
    rot = np.eye(dim)
    c, s = math.cos(theta), math.sin(theta)
    rot[i, i] = c
    rot[j, j] = c
    rot[i, j] = -s
    rot[j, i] = s
    return rot


@dataclass(frozen=True)
class BoxGeometry:
    """Immutable box graph: vertices, unit edges, boundary and T/B split.

    Vertices are integer lattice points x with ||R^T (x - center)||_inf
    <= side/2 (ties included).  Ids are dense and ordered
    lexicographically by coordinates, edges by their (u, v) id pair, so
    identical parameters give identical ids on every platform.
    """

    dim: int
    side: float
    rotation: np.ndarray        # d x d orthogonal, columns = face normals
    center: np.ndarray          # box center, defaults to the origin
    face_axis: int              # axis of the default T/B split
    coords: np.ndarray          # (n, d) int64 vertex coordinates
    edges: np.ndarray           # (m, 2) int32 vertex id pairs, u < v
    boundary_mask: np.ndarray   # (n,) bool
    top_mask: np.ndarray        # (n,) bool
    bottom_mask: np.ndarray     # (n,) bool
    midpoints: np.ndarray       # (m, d) float64 edge midpoints
    adj_indptr: np.ndarray      # CSR over vertices
    adj_vertex: np.ndarray      # neighbour vertex ids
    adj_edge: np.ndarray        # edge id of each adjacency entry
    _id_of: dict = field(repr=False, default_factory=dict)

    @property
    def n_vertices(self) -> int:
        return len(self.coords)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def edge_endpoints(self) -> np.ndarray:
        return self.edges

    @property
    def boundary_ids(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_mask)

    @property
    def top_ids(self) -> np.ndarray:
        return np.flatnonzero(self.top_mask)

    @property
    def bottom_ids(self) -> np.ndarray:
        return np.flatnonzero(self.bottom_mask)

    def vertex_id(self, coord: Sequence[int]) -> int:
        return self._id_of[tuple(int(c) for c in coord)]

    def has_vertex(self, coord: Sequence[int]) -> bool:
        return tuple(int(c) for c in coord) in self._id_of

    def edge_id(self, coord_u: Sequence[int], coord_v: Sequence[int]) -> int:
        u, v = self.vertex_id(coord_u), self.vertex_id(coord_v)
        if u > v:
            u, v = v, u
        hits = np.flatnonzero((self.edges[:, 0] == u) & (self.edges[:, 1] == v))
        if len(hits) == 0:
            raise KeyError(f"no edge between {tuple(coord_u)} and {tuple(coord_v)}")
        return int(hits[0])

    def vertex_neighbors(self, v: int) -> tuple[np.ndarray, np.ndarray]:
        """(neighbor vertex ids, incident edge ids) of vertex v."""
        lo, hi = self.adj_indptr[v], self.adj_indptr[v + 1]
        return self.adj_vertex[lo:hi], self.adj_edge[lo:hi]


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def build_box(
    dim: int,
    side: float,
    rotation: np.ndarray | None = None,
    center: Sequence[float] | None = None,
    face_axis: int | None = None,
) -> BoxGeometry:
    """Construct the box graph cut out of the integer lattice.

    ``rotation`` must be orthogonal (identity means a straight box); its
    columns are the face normals of the box.  ``center`` defaults to the
    origin; a half-integer center is how small even-sized grids (for
    example the 2x2-vertex box) are produced.  Raises ValueError when the
    parameters are invalid or when the resulting T or B side is empty.
    """
    if int(dim) != dim or dim < 2:
        raise ValueError(f"dim must be an integer >= 2, got {dim}")
    dim = int(dim)
    if side <= 0:
        raise ValueError(f"side must be positive, got {side}")
    if rotation is None:
        rotation = np.eye(dim)
    rotation = np.asarray(rotation, dtype=float)
    if rotation.shape != (dim, dim):
        raise ValueError(f"rotation must be {dim}x{dim}, got {rotation.shape}")
    if np.max(np.abs(rotation.T @ rotation - np.eye(dim))) > MEMBERSHIP_TOL:
        raise ValueError("rotation is not orthogonal within 1e-9")
    if center is None:
        center = np.zeros(dim)
    center = np.asarray(center, dtype=float)
    if face_axis is None:
        face_axis = dim - 1
    if not 0 <= face_axis < dim:
        raise ValueError(f"face_axis must be in [0, {dim}), got {face_axis}")

    half = side / 2.0
    reach = int(math.ceil(math.sqrt(dim) * half + 1))
    lo = np.floor(center - reach).astype(int)
    hi = np.ceil(center + reach).astype(int)
    pts = []
    for coord in itertools.product(*(range(lo[i], hi[i] + 1) for i in range(dim))):
        x = np.asarray(coord, dtype=float)
        if np.max(np.abs(rotation.T @ (x - center))) <= half + MEMBERSHIP_TOL:
            pts.append(coord)
    if not pts:
        raise ValueError("box contains no lattice point")
    pts.sort()
    coords = np.asarray(pts, dtype=np.int64)
    id_of = {tuple(p): i for i, p in enumerate(pts)}

    n = len(pts)
    unit = np.eye(dim, dtype=np.int64)
    edge_list = []
    boundary = np.zeros(n, dtype=bool)
    for i, p in enumerate(pts):
        for k in range(dim):
            for sign in (1, -1):
                q = tuple(p[j] + sign * unit[k, j] for j in range(dim))
                j = id_of.get(q)
                if j is None:
                    boundary[i] = True
                elif sign == 1:
                    edge_list.append((i, j) if i < j else (j, i))
    edge_list.sort()
    edges = np.asarray(edge_list, dtype=np.int32).reshape(-1, 2)
    m = len(edges)

    midpoints = (coords[edges[:, 0]] + coords[edges[:, 1]]) / 2.0 if m else np.zeros((0, dim))

    deg = np.zeros(n, dtype=np.int64)
    for u, v in edges:
        deg[u] += 1
        deg[v] += 1
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(deg, out=indptr[1:])
    adj_vertex = np.zeros(2 * m, dtype=np.int32)
    adj_edge = np.zeros(2 * m, dtype=np.int32)
    cursor = indptr[:-1].copy()
    for e, (u, v) in enumerate(edges):
        adj_vertex[cursor[u]] = v
        adj_edge[cursor[u]] = e
        cursor[u] += 1
        adj_vertex[cursor[v]] = u
        adj_edge[cursor[v]] = e
        cursor[v] += 1

    normal = rotation[:, face_axis]
    signed = (coords - center) @ normal
    top = boundary & (signed >= -MEMBERSHIP_TOL)
    bottom = boundary & ~top
    if not top.any() or not bottom.any():
        raise ValueError("T or B side of the boundary is empty; box too small")

    return BoxGeometry(
        dim=dim,
        side=float(side),
        rotation=_freeze(rotation),
        center=_freeze(center),
        face_axis=int(face_axis),
        coords=_freeze(coords),
        edges=_freeze(edges),
        boundary_mask=_freeze(boundary),
        top_mask=_freeze(top),
        bottom_mask=_freeze(bottom),
        midpoints=_freeze(midpoints),
        adj_indptr=_freeze(indptr),
        adj_vertex=_freeze(adj_vertex),
        adj_edge=_freeze(adj_edge),
        _id_of=id_of,
    )


def split_tb(box: BoxGeometry, face_axis: int) -> tuple[frozenset, frozenset]:
    """T/B partition of the boundary along a given face-normal axis.

    T collects the boundary vertices with non-negative signed distance to
    the hyperplane through the box center parallel to that face; vertices
    exactly on the hyperplane go to T.
    """
    if not 0 <= face_axis < box.dim:
        raise ValueError(f"face_axis must be in [0, {box.dim}), got {face_axis}")
    normal = box.rotation[:, face_axis]
    signed = (box.coords - box.center) @ normal
    bnd = np.flatnonzero(box.boundary_mask)
    top = frozenset(int(v) for v in bnd if signed[v] >= -MEMBERSHIP_TOL)
    bottom = frozenset(int(v) for v in bnd) - top
    return top, bottom


def alpha(dim: int) -> int:
    """Interior star-degree of an edge of the infinite lattice.

    Counts the edges f != e with ||m_f - m_e||_inf <= 1 by brute-force
    enumeration around a reference edge.
    """
    if dim < 2:
        raise ValueError("dim must be >= 2")
    m0 = np.zeros(dim)
    m0[0] = 0.5
    count = 0
    for base in itertools.product(range(-2, 3), repeat=dim):
        for k in range(dim):
            mid = np.asarray(base, dtype=float)
            mid[k] += 0.5
            if np.max(np.abs(mid - m0)) <= 1.0 + 1e-12 and not (k == 0 and all(b == 0 for b in base)):
                count += 1
    return count


def star_neighbors(box: BoxGeometry, e: int) -> np.ndarray:
    """Edge ids f != e of the box with ||m_f - m_e||_inf <= 1."""
    if not 0 <= e < box.n_edges:
        raise KeyError(f"unknown edge id {e}")
    d = np.max(np.abs(box.midpoints - box.midpoints[e]), axis=1)
    out = np.flatnonzero(d <= 1.0 + 1e-12)
    return out[out != e]


def edge_distance(box: BoxGeometry, e: int, f: int) -> float:
    """L-infinity distance between the midpoints of two edges."""
    return float(np.max(np.abs(box.midpoints[e] - box.midpoints[f])))


def distance_to_complement(box: BoxGeometry, e: int) -> float:
    """L-infinity distance from the midpoint of e to the box complement."""
    return point_distance_to_complement(box, box.midpoints[e])


def point_distance_to_complement(box: BoxGeometry, point: np.ndarray) -> float:
    # The complement is a union of half-spaces {r_i . (y-c) > L/2}; the
    # L-inf distance to {a . y >= b} is (b - a.m)/||a||_1.
    rel = np.asarray(point, dtype=float) - box.center
    proj = np.abs(box.rotation.T @ rel)
    l1 = np.sum(np.abs(box.rotation), axis=0)
    gaps = (box.side / 2.0 - proj) / l1
    return float(max(0.0, np.min(gaps)))


def set_distance(
    box: BoxGeometry,
    e: int,
    edge_set: Iterable[int] = (),
    include_complement: bool = False,
) -> float:
    """min L-inf midpoint distance from e to an edge set.

    The set may be augmented with the box complement
    (``include_complement=True``).  Distance to the empty set is +inf.
    """
    ids = np.fromiter((int(f) for f in edge_set), dtype=np.int64)
    best = math.inf
    if len(ids):
        best = float(np.min(np.max(np.abs(box.midpoints[ids] - box.midpoints[e]), axis=1)))
    if include_complement:
        best = min(best, distance_to_complement(box, e))
    return best


def neighborhood(box: BoxGeometry, edge_set: Iterable[int], r: float) -> np.ndarray:
    """Edge ids within L-inf distance r of the given edge set."""
    ids = np.fromiter((int(f) for f in edge_set), dtype=np.int64)
    if len(ids) == 0:
        return np.empty(0, dtype=np.int64)
    best = np.full(box.n_edges, np.inf)
    for f in ids:
        np.minimum(best, np.max(np.abs(box.midpoints - box.midpoints[f]), axis=1), out=best)
    return np.flatnonzero(best <= r + 1e-12)


def edges_near_complement(box: BoxGeometry, r: float) -> np.ndarray:
    """Edge ids within L-inf distance r of the box complement."""
    l1 = np.sum(np.abs(box.rotation), axis=0)
    proj = np.abs((box.midpoints - box.center) @ box.rotation)
    gaps = (box.side / 2.0 - proj) / l1
    dist = np.clip(np.min(gaps, axis=1), 0.0, None)
    return np.flatnonzero(dist <= r + 1e-12)


def dump_geometry(box: BoxGeometry, path) -> None:
    """Write the box as line-delimited text: one vertex or edge per line."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"# fkcoupling-geometry v1 dim={box.dim} side={box.side!r}\n")
        for i, c in enumerate(box.coords):
            if box.top_mask[i]:
                flag = "T"
            elif box.bottom_mask[i]:
                flag = "B"
            else:
                flag = "i"
            fh.write("v {} {} {}\n".format(i, " ".join(str(int(x)) for x in c), flag))
        for e, (u, v) in enumerate(box.edges):
            mid = " ".join(repr(float(x)) for x in box.midpoints[e])
            fh.write(f"e {e} {u} {v} {mid}\n")
