"""Cluster connectivity under free / wired / top-bottom boundary conditions.

Boundary conditions are materialized as ghost vertices with permanently
open pseudo-edges, so that every connectivity query (same cluster,
connected without an edge, would an opening join T to B) runs over one
uniform graph.  The index keeps a vertex labelling in sync with the edge
configuration: openings merge labels, closings relabel from scratch only
when the closed edge was a bridge.
"""

from __future__ import annotations

from collections import deque
from enum import Enum
from typing import Iterable, Sequence

import numpy as np


class BoundaryCondition(Enum):
    FREE = "free"
    WIRED = "wired"
    TB = "tb"


class AdHocGraph:
    """Minimal graph satisfying the same surface as BoxGeometry.

    Used by exact-enumeration oracles and tests that need graphs which are
    not lattice boxes (for example random graphs for exhaustive checks).
    """

    def __init__(
        self,
        n_vertices: int,
        edges: Sequence[tuple[int, int]],
        top: Iterable[int] = (),
        bottom: Iterable[int] = (),
        boundary: Iterable[int] | None = None,
    ):
        self.n_vertices = int(n_vertices)
        pairs = sorted(tuple(sorted((int(u), int(v)))) for u, v in edges)
        if len(set(pairs)) != len(pairs):
            raise ValueError("duplicate edges")
        for u, v in pairs:
            if u == v or not (0 <= u < n_vertices and 0 <= v < n_vertices):
                raise ValueError(f"bad edge ({u}, {v})")
        self.edges = np.asarray(pairs, dtype=np.int32).reshape(-1, 2)
        self.top_ids = np.asarray(sorted(set(int(v) for v in top)), dtype=np.int64)
        self.bottom_ids = np.asarray(sorted(set(int(v) for v in bottom)), dtype=np.int64)
        if set(self.top_ids) & set(self.bottom_ids):
            raise ValueError("top and bottom overlap")
        if boundary is None:
            boundary = sorted(set(self.top_ids) | set(self.bottom_ids))
        self.boundary_ids = np.asarray(sorted(set(int(v) for v in boundary)), dtype=np.int64)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def edge_endpoints(self) -> np.ndarray:
        return self.edges


def extended_adjacency(graph, bc: BoundaryCondition):
    """CSR adjacency over real vertices plus the bc ghosts.

    Ghost pseudo-edges carry ids >= n_edges and are treated as always
    open.  Returns (indptr, nbr, edge, n_total, ghost_t, ghost_b); for the
    wired condition the single ghost is reported as ghost_t and ghost_b
    is -1, for free both are -1.
    """
    n = graph.n_vertices
    m = graph.n_edges
    ends = graph.edge_endpoints
    ghost_t = ghost_b = -1
    extra: list[tuple[int, int]] = []
    if bc is BoundaryCondition.WIRED:
        if len(graph.boundary_ids) == 0:
            raise ValueError("wired boundary condition needs a nonempty boundary")
        ghost_t = n
        extra = [(int(v), ghost_t) for v in graph.boundary_ids]
    elif bc is BoundaryCondition.TB:
        if len(graph.top_ids) == 0 or len(graph.bottom_ids) == 0:
            raise ValueError("TB boundary condition needs nonempty T and B")
        ghost_t, ghost_b = n, n + 1
        extra = [(int(v), ghost_t) for v in graph.top_ids]
        extra += [(int(v), ghost_b) for v in graph.bottom_ids]
    n_tot = n + (ghost_t >= 0) + (ghost_b >= 0)

    deg = np.zeros(n_tot, dtype=np.int64)
    for u, v in ends:
        deg[u] += 1
        deg[v] += 1
    for u, v in extra:
        deg[u] += 1
        deg[v] += 1
    indptr = np.zeros(n_tot + 1, dtype=np.int64)
    np.cumsum(deg, out=indptr[1:])
    nbr = np.zeros(indptr[-1], dtype=np.int64)
    eid = np.zeros(indptr[-1], dtype=np.int64)
    cur = indptr[:-1].copy()

    def put(u, v, e):
        nbr[cur[u]] = v
        eid[cur[u]] = e
        cur[u] += 1

    for e, (u, v) in enumerate(ends):
        put(u, v, e)
        put(v, u, e)
    for j, (u, v) in enumerate(extra):
        put(u, v, m + j)
        put(v, u, m + j)
    return indptr, nbr, eid, n_tot, ghost_t, ghost_b


class ClusterIndex:
    """Connectivity oracle for one edge configuration under one bc."""

    def __init__(self, graph, config, bc: BoundaryCondition):
        config = np.asarray(config, dtype=np.uint8)
        if config.shape != (graph.n_edges,):
            raise ValueError(
                f"config has {config.shape} entries, graph has {graph.n_edges} edges"
            )
        self.graph = graph
        self.bc = bc
        self.config = config.copy()
        (
            self._indptr,
            self._nbr,
            self._eid,
            self.n_total,
            self.ghost_t,
            self.ghost_b,
        ) = extended_adjacency(graph, bc)
        self._n_edges = graph.n_edges
        self.labels = np.empty(self.n_total, dtype=np.int64)
        self._relabel_all()

    # -- queries ---------------------------------------------------------

    @property
    def k(self) -> int:
        """Number of clusters that contain at least one real vertex."""
        return self._k

    def same_cluster(self, x: int, y: int) -> bool:
        self._check_vertex(x)
        self._check_vertex(y)
        return bool(self.labels[x] == self.labels[y])

    def tb_connected(self) -> bool:
        if self.bc is not BoundaryCondition.TB:
            raise ValueError("tb_connected requires the TB boundary condition")
        return bool(self.labels[self.ghost_t] == self.labels[self.ghost_b])

    def connected_without(self, e: int) -> bool:
        """Are the endpoints of e joined by an open path avoiding e?"""
        self._check_edge(e)
        u, v = self.graph.edge_endpoints[e]
        if not self.config[e]:
            return bool(self.labels[u] == self.labels[v])
        return self._search(int(u), target=int(v), skip_edge=e) is True

    def would_connect_TB(self, e: int) -> bool:
        """Would forcing e open connect the T ghost to the B ghost?"""
        if self.bc is not BoundaryCondition.TB:
            raise ValueError("would_connect_TB requires the TB boundary condition")
        self._check_edge(e)
        if self.tb_connected():
            return True
        if self.config[e]:
            return False
        u, v = self.graph.edge_endpoints[e]
        lu, lv = self.labels[u], self.labels[v]
        lt, lb = self.labels[self.ghost_t], self.labels[self.ghost_b]
        return bool((lu == lt and lv == lb) or (lu == lb and lv == lt))

    # -- mutation --------------------------------------------------------

    def apply_flip(self, e: int, new_state: int) -> None:
        self._check_edge(e)
        new_state = 1 if new_state else 0
        if self.config[e] == new_state:
            return
        u, v = (int(x) for x in self.graph.edge_endpoints[e])
        if new_state:
            self.config[e] = 1
            lu, lv = self.labels[u], self.labels[v]
            if lu != lv:
                keep, drop = (lu, lv) if lu < lv else (lv, lu)
                self.labels[self.labels == drop] = keep
                self._count_clusters()
        else:
            self.config[e] = 0
            reach = self._search(u, target=v)
            if reach is not True:
                # e was a bridge: reach holds the u-side component
                fresh = int(self.labels.max()) + 1
                for w in reach:
                    self.labels[w] = fresh
                self._count_clusters()

    # -- internals -------------------------------------------------------

    def _check_vertex(self, x: int) -> None:
        if not 0 <= x < self.n_total:
            raise KeyError(f"unknown vertex id {x}")

    def _check_edge(self, e: int) -> None:
        if not 0 <= e < self._n_edges:
            raise KeyError(f"unknown edge id {e}")

    def _is_open(self, eid: int) -> bool:
        return eid >= self._n_edges or bool(self.config[eid])

    def _search(self, src: int, target: int | None = None, skip_edge: int = -1):
        """BFS over open edges from src.

        Returns True as soon as target is reached, otherwise the list of
        visited vertices.
        """
        seen = {src}
        queue = deque([src])
        while queue:
            w = queue.popleft()
            lo, hi = self._indptr[w], self._indptr[w + 1]
            for i in range(lo, hi):
                eid = self._eid[i]
                if eid == skip_edge or not self._is_open(eid):
                    continue
                nb = int(self._nbr[i])
                if nb in seen:
                    continue
                if nb == target:
                    return True
                seen.add(nb)
                queue.append(nb)
        return list(seen)

    def _relabel_all(self) -> None:
        self.labels.fill(-1)
        nxt = 0
        for start in range(self.n_total):
            if self.labels[start] >= 0:
                continue
            self.labels[start] = nxt
            queue = deque([start])
            while queue:
                w = queue.popleft()
                lo, hi = self._indptr[w], self._indptr[w + 1]
                for i in range(lo, hi):
                    if not self._is_open(self._eid[i]):
                        continue
                    nb = int(self._nbr[i])
                    if self.labels[nb] < 0:
                        self.labels[nb] = nxt
                        queue.append(nb)
            nxt += 1
        self._count_clusters()

    def _count_clusters(self) -> None:
        self._k = len(np.unique(self.labels[: self.graph.n_vertices]))

    def rebuild(self) -> None:
        """Recompute the labelling from scratch (testing hook)."""
        self._relabel_all()

    def partition(self) -> frozenset:
        """Label-independent view of the clusters, for equivalence tests."""
        groups: dict[int, list[int]] = {}
        for v in range(self.n_total):
            groups.setdefault(int(self.labels[v]), []).append(v)
        return frozenset(frozenset(g) for g in groups.values())


def build_index(graph, config, bc: BoundaryCondition) -> ClusterIndex:
    """Construct a ClusterIndex by a from-scratch labelling."""
    return ClusterIndex(graph, config, bc)
