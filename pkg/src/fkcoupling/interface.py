"""Interface, pivotal and cut analysis of a coupled configuration pair.

The interface is the set of edges where the two chains disagree (open
above, closed below).  Pivotal edges are the closed edges of the
conditioned configuration whose opening would join T to B.  Cuts are
extracted by exploring the open cluster of one side and collecting the
closed shell reachable from the other side, then greedily pruning it to
an inclusion-minimal separating set.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .connectivity import BoundaryCondition, ClusterIndex
from .geometry import BoxGeometry, distance_to_complement, set_distance


def interface_set(state) -> np.ndarray:
    """Edges whose states differ between the two chains."""
    return np.flatnonzero(state.x_state != state.y_state)


def pivotal_set_config(box: BoxGeometry, y_config: np.ndarray) -> np.ndarray:
    """Edges whose opening would join T to B in the given configuration."""
    index = ClusterIndex(box, y_config, BoundaryCondition.TB)
    if index.tb_connected():
        return np.arange(box.n_edges)
    labels = index.labels
    lt = labels[index.ghost_t]
    lb = labels[index.ghost_b]
    la = labels[box.edges[:, 0]]
    lbv = labels[box.edges[:, 1]]
    closed = np.asarray(y_config, dtype=np.uint8) == 0
    straddles = ((la == lt) & (lbv == lb)) | ((la == lb) & (lbv == lt))
    return np.flatnonzero(closed & straddles)


def pivotal_set(state) -> np.ndarray:
    return pivotal_set_config(state.box, state.y_state)


@dataclass(frozen=True)
class CPlusExploration:
    """Closed shell around one side's open cluster, and what lies beyond.

    ``cplus`` edges all have exactly one endpoint in the explored open
    cluster and are geometrically reachable from the opposite side;
    ``subgraph_vertices``/``subgraph_edges`` form the subgraph of
    everything reachable from the opposite side without crossing the
    shell.
    """

    from_side: str
    open_cluster: np.ndarray
    cplus: np.ndarray
    subgraph_vertices: np.ndarray
    subgraph_edges: np.ndarray


def explore_cplus(box: BoxGeometry, y_config: np.ndarray, from_side: str = "T") -> CPlusExploration:
    """Explore the open cluster of one side and its separating shell.

    Requires T and B to be disconnected.  The shell always consists of
    closed edges and always separates T from B.
    """
    if from_side not in ("T", "B"):
        raise ValueError("from_side must be 'T' or 'B'")
    index = ClusterIndex(box, y_config, BoundaryCondition.TB)
    if index.tb_connected():
        raise ValueError("exploration requires T and B to be disconnected")
    ghost = index.ghost_t if from_side == "T" else index.ghost_b
    in_cluster = index.labels[: box.n_vertices] == index.labels[ghost]
    opp = box.bottom_ids if from_side == "T" else box.top_ids

    # geometric reach of the opposite side avoiding the open cluster
    reach = np.zeros(box.n_vertices, dtype=bool)
    queue = deque()
    for v in opp:
        if not in_cluster[v]:
            reach[v] = True
            queue.append(int(v))
    while queue:
        w = queue.popleft()
        nbrs, _ = box.vertex_neighbors(w)
        for nb in nbrs:
            if not in_cluster[nb] and not reach[nb]:
                reach[nb] = True
                queue.append(int(nb))

    ends = box.edges
    one_in = in_cluster[ends[:, 0]] != in_cluster[ends[:, 1]]
    other = np.where(in_cluster[ends[:, 0]], ends[:, 1], ends[:, 0])
    cplus = np.flatnonzero(one_in & reach[other])
    sub_vertices = np.flatnonzero(reach)
    sub_edges = np.flatnonzero(reach[ends[:, 0]] & reach[ends[:, 1]])
    return CPlusExploration(
        from_side=from_side,
        open_cluster=np.flatnonzero(in_cluster),
        cplus=cplus,
        subgraph_vertices=sub_vertices,
        subgraph_edges=sub_edges,
    )


def is_separating(box: BoxGeometry, edge_set: Iterable[int]) -> bool:
    """Does removing the edge set disconnect T from B in the box graph?

    Separation is purely geometric: all edges count, open or closed.
    """
    blocked = np.zeros(box.n_edges, dtype=bool)
    ids = np.fromiter((int(e) for e in edge_set), dtype=np.int64)
    blocked[ids] = True
    bottom = box.bottom_mask
    seen = np.zeros(box.n_vertices, dtype=bool)
    queue = deque()
    for v in box.top_ids:
        seen[v] = True
        queue.append(int(v))
    while queue:
        w = queue.popleft()
        if bottom[w]:
            return False
        nbrs, eids = box.vertex_neighbors(w)
        for nb, eid in zip(nbrs, eids):
            if not blocked[eid] and not seen[nb]:
                seen[nb] = True
                queue.append(int(nb))
    return True


def is_minimal_cut(box: BoxGeometry, edge_set: Iterable[int]) -> bool:
    """Separating, and no proper subset separates."""
    ids = sorted(int(e) for e in edge_set)
    if not is_separating(box, ids):
        return False
    s = set(ids)
    for e in ids:
        if is_separating(box, s - {e}):
            return False
    return True


def extract_minimal_cut(box: BoxGeometry, y_config: np.ndarray, from_side: str = "T") -> np.ndarray:
    """An inclusion-minimal cut of closed edges, from the shell exploration.

    Pruning order is ascending edge id, so the extracted cut is a
    deterministic function of the configuration.
    """
    shell = explore_cplus(box, y_config, from_side=from_side)
    keep = set(int(e) for e in shell.cplus)
    for e in sorted(keep):
        if is_separating(box, keep - {e}):
            keep.discard(e)
    return np.asarray(sorted(keep), dtype=np.int64)


def _closed_star_adjacency(box: BoxGeometry, closed_ids: np.ndarray) -> list[list[int]]:
    """Star-adjacency lists restricted to the given closed edges."""
    mids = box.midpoints[closed_ids]
    n = len(closed_ids)
    adj: list[list[int]] = [[] for _ in range(n)]
    for i in range(n):
        d = np.max(np.abs(mids - mids[i]), axis=1)
        for j in np.flatnonzero(d <= 1.0 + 1e-12):
            if j != i:
                adj[i].append(int(j))
    return adj


def longest_closed_star_path_from(
    box: BoxGeometry,
    y_config: np.ndarray,
    e: int,
    n_max: int,
    within_edges: Iterable[int] | None = None,
    node_budget: int = 2_000_000,
) -> int:
    """Length of the longest simple closed star-path starting at e.

    A simple path visits distinct edges, consecutive ones star-adjacent;
    its length is the number of edges, so an isolated closed edge gives 1.
    The search is depth-limited at ``n_max`` and stops early once a path
    of that length is found.  ``within_edges`` restricts the path support
    to a subset of edges (e must belong to it).
    """
    y_config = np.asarray(y_config, dtype=np.uint8)
    if y_config[e]:
        raise ValueError(f"edge {e} is open")
    if n_max < 1:
        return 0
    allowed = np.zeros(box.n_edges, dtype=bool)
    allowed[np.flatnonzero(y_config == 0)] = True
    if within_edges is not None:
        mask = np.zeros(box.n_edges, dtype=bool)
        mask[np.fromiter((int(f) for f in within_edges), dtype=np.int64)] = True
        allowed &= mask
        if not allowed[e]:
            raise ValueError(f"edge {e} is not in the allowed edge set")
    closed_ids = np.flatnonzero(allowed)
    pos = {int(f): i for i, f in enumerate(closed_ids)}
    adj = _closed_star_adjacency(box, closed_ids)
    start = pos[int(e)]
    on_path = np.zeros(len(closed_ids), dtype=bool)
    best = 0
    budget = node_budget

    def dfs(node: int, depth: int) -> bool:
        nonlocal best, budget
        if depth > best:
            best = depth
        if best >= n_max or budget <= 0:
            return True
        on_path[node] = True
        for nb in adj[node]:
            if not on_path[nb]:
                budget -= 1
                if dfs(nb, depth + 1):
                    on_path[node] = False
                    return True
        on_path[node] = False
        return False

    dfs(start, 1)
    return min(best, n_max)


def gamma_path_length(box: BoxGeometry, y_config: np.ndarray, e: int, n_max: int) -> int:
    """Longest closed star-path from e inside the cut-protected subgraph.

    The shell exploration from T yields a cut disjoint from the subgraph
    beyond it, so a path of length n here witnesses the event "closed
    star-path of length n from e, separated from T by a cut".  Returns 0
    when e is open or not an edge of that subgraph.
    """
    y_config = np.asarray(y_config, dtype=np.uint8)
    if y_config[e]:
        return 0
    shell = explore_cplus(box, y_config, from_side="T")
    sub = set(int(f) for f in shell.subgraph_edges)
    if int(e) not in sub:
        return 0
    return longest_closed_star_path_from(box, y_config, e, n_max, within_edges=sub)


def closed_star_reachable(
    box: BoxGeometry,
    y_config: np.ndarray,
    source: int,
    targets: Iterable[int],
    complement_margin: float | None = None,
) -> bool:
    """Is there a closed star-path from source to a target edge, or to an
    edge within ``complement_margin`` of the box complement?"""
    y_config = np.asarray(y_config, dtype=np.uint8)
    if y_config[source]:
        raise ValueError(f"edge {source} is open")
    closed_ids = np.flatnonzero(y_config == 0)
    pos = {int(f): i for i, f in enumerate(closed_ids)}
    target_pos = set(pos[int(f)] for f in targets if int(f) in pos and not y_config[int(f)])
    near = np.zeros(len(closed_ids), dtype=bool)
    if complement_margin is not None:
        for i, f in enumerate(closed_ids):
            if distance_to_complement(box, int(f)) <= complement_margin + 1e-12:
                near[i] = True
    adj = _closed_star_adjacency(box, closed_ids)
    start = pos[int(source)]
    if start in target_pos or near[start]:
        return True
    seen = np.zeros(len(closed_ids), dtype=bool)
    seen[start] = True
    queue = deque([start])
    while queue:
        w = queue.popleft()
        for nb in adj[w]:
            if seen[nb]:
                continue
            if nb in target_pos or near[nb]:
                return True
            seen[nb] = True
            queue.append(nb)
    return False


def hausdorff_semi_distance(
    box: BoxGeometry, a: Iterable[int], b: Iterable[int], ell: float
) -> float:
    """Hausdorff-style semi-distance between edge sets, ignoring an
    ell-collar near the box complement.

    Edges of either set within distance ell of the complement are
    trimmed before the sup; inclusion targets are the untrimmed sets.
    Returns 0 when both trimmed sets are empty, +inf when one trimmed
    set is nonempty and the other full set is empty.
    """
    if ell < 0:
        raise ValueError("ell must be >= 0")
    a_ids = np.fromiter((int(e) for e in a), dtype=np.int64)
    b_ids = np.fromiter((int(e) for e in b), dtype=np.int64)

    def trim(ids: np.ndarray) -> np.ndarray:
        return np.asarray(
            [e for e in ids if distance_to_complement(box, int(e)) > ell + 1e-12],
            dtype=np.int64,
        )

    a_core, b_core = trim(a_ids), trim(b_ids)
    best = 0.0
    for core, other in ((a_core, b_ids), (b_core, a_ids)):
        for e in core:
            best = max(best, set_distance(box, int(e), other))
            if math.isinf(best):
                return math.inf
    return best


@dataclass(frozen=True)
class InterfaceReport:
    """Snapshot analysis: interface, pivotal set, a cut and the distances
    entering the localization statistic."""

    step: int
    interface: np.ndarray
    pivotal: np.ndarray
    cut: np.ndarray | None
    distances: dict
    max_distance: float | None


def interface_report(state, with_cut: bool = True) -> InterfaceReport:
    """Distances d(e, complement union pivotal-minus-e) over the interface
    and pivotal edges, plus the extracted minimal cut."""
    box = state.box
    iface = interface_set(state)
    piv = pivotal_set(state)
    piv_set = set(int(e) for e in piv)
    distances: dict[int, float] = {}
    for e in sorted(set(int(x) for x in iface) | piv_set):
        others = piv_set - {e}
        distances[e] = min(
            distance_to_complement(box, e),
            set_distance(box, e, others) if others else math.inf,
        )
    max_distance = max(distances.values()) if distances else None
    cut = None
    if with_cut:
        index = state.y_index
        if not index.tb_connected():
            cut = extract_minimal_cut(box, state.y_state, from_side="T")
    return InterfaceReport(
        step=state.t,
        interface=iface,
        pivotal=piv,
        cut=cut,
        distances=distances,
        max_distance=max_distance,
    )
