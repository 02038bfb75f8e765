"""Cluster coloring of a coupled edge pair into three spin fields.

Given a dominating pair (upper config, conditioned config), the
conditioned configuration's clusters are colored first under the
top-bottom rule: clusters touching T get +1, clusters touching B get
-1, the rest fair coins.  The upper configuration's clusters then get
the plus/minus boundary fields: clusters touching the box boundary are
+1 in one field and -1 in the other; an interior cluster that is also a
cluster of the conditioned configuration inherits its spin, and an
interior cluster merging several of them draws one fresh fair coin
shared by both fields.  At q = 2 and p = 1 - exp(-beta) the three
marginals are the spin Gibbs states with plus, minus and top-bottom
boundary conditions.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .geometry import BoxGeometry
from .interface import is_separating


def _plain_labels(n_vertices: int, edges: np.ndarray, config: np.ndarray) -> np.ndarray:
    """Union-find labelling of the open-edge clusters (no ghosts)."""
    parent = list(range(n_vertices))

    def find(a: int) -> int:
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root

    for e in np.flatnonzero(config):
        u, v = edges[e]
        ru, rv = find(int(u)), find(int(v))
        if ru != rv:
            parent[max(ru, rv)] = min(ru, rv)
    return np.asarray([find(v) for v in range(n_vertices)], dtype=np.int64)


@dataclass(frozen=True)
class SpinTriple:
    """Three spin fields over the box vertices plus the coin provenance.

    ``coin_log`` records, in draw order, (field, cluster representative,
    value); replaying the same generator reproduces the coloring.
    """

    sigma_plus: np.ndarray
    sigma_minus: np.ndarray
    sigma_d: np.ndarray
    coin_log: tuple


def color_triple(
    box: BoxGeometry,
    x_config: np.ndarray,
    y_config: np.ndarray,
    rng: np.random.Generator,
) -> SpinTriple:
    """Color a dominating pair into the three boundary-condition fields.

    Requires x >= y edge-wise and T disconnected from B in y.  Coins are
    drawn cluster by cluster in ascending order of the cluster's smallest
    vertex id: first the conditioned field's interior clusters, then the
    fresh coins of the upper configuration's merged interior clusters.
    """
    x_config = np.asarray(x_config, dtype=np.uint8)
    y_config = np.asarray(y_config, dtype=np.uint8)
    if np.any(x_config < y_config):
        raise ValueError("pair violates edge-wise dominance")
    n = box.n_vertices
    y_labels = _plain_labels(n, box.edges, y_config)
    x_labels = _plain_labels(n, box.edges, x_config)

    touches_t = set(y_labels[v] for v in box.top_ids)
    touches_b = set(y_labels[v] for v in box.bottom_ids)
    if touches_t & touches_b:
        raise ValueError("conditioned configuration joins T to B")

    coin_log: list[tuple[str, int, int]] = []
    sigma_d = np.zeros(n, dtype=np.int8)
    y_roots = np.unique(y_labels)
    for root in y_roots:
        if root in touches_t:
            spin = 1
        elif root in touches_b:
            spin = -1
        else:
            spin = 1 if rng.random() < 0.5 else -1
            coin_log.append(("d", int(root), spin))
        sigma_d[y_labels == root] = spin

    # members of each y cluster, for the "same cluster in both configs" test
    y_sizes = {int(r): int(np.sum(y_labels == r)) for r in y_roots}

    sigma_plus = np.zeros(n, dtype=np.int8)
    sigma_minus = np.zeros(n, dtype=np.int8)
    for root in np.unique(x_labels):
        members = np.flatnonzero(x_labels == root)
        if box.boundary_mask[members].any():
            sigma_plus[members] = 1
            sigma_minus[members] = -1
            continue
        y_root = int(y_labels[members[0]])
        same = np.all(y_labels[members] == y_root) and y_sizes[y_root] == len(members)
        if same:
            spin = int(sigma_d[members[0]])
            sigma_plus[members] = spin
            sigma_minus[members] = spin
        else:
            spin = 1 if rng.random() < 0.5 else -1
            coin_log.append(("pm", int(root), spin))
            sigma_plus[members] = spin
            sigma_minus[members] = spin
    return SpinTriple(
        sigma_plus=sigma_plus,
        sigma_minus=sigma_minus,
        sigma_d=sigma_d,
        coin_log=tuple(coin_log),
    )


@dataclass(frozen=True)
class IsingSets:
    """Boundary-anchored disagreement edges (p_i) and the spin interface
    (i_i): edges equal in both bulk fields but split in the conditioned
    field."""

    p_i: np.ndarray
    i_i: np.ndarray


def _constant_spin_reach(box: BoxGeometry, sigma: np.ndarray, seeds: Iterable[int], spin: int) -> np.ndarray:
    """Vertices joined to the seeds by paths of constant given spin."""
    reach = np.zeros(box.n_vertices, dtype=bool)
    queue = deque()
    for v in seeds:
        if sigma[v] == spin and not reach[v]:
            reach[v] = True
            queue.append(int(v))
    while queue:
        w = queue.popleft()
        nbrs, _ = box.vertex_neighbors(w)
        for nb in nbrs:
            if not reach[nb] and sigma[nb] == spin:
                reach[nb] = True
                queue.append(int(nb))
    return reach


def ising_interface_sets(box: BoxGeometry, triple: SpinTriple) -> IsingSets:
    """The two edge sets of the spin description.

    p_i: edges whose +1 endpoint reaches T through +1 spins and whose -1
    endpoint reaches B through -1 spins, in the conditioned field.
    i_i: edges with equal spins in both bulk fields and different spins
    in the conditioned field.
    """
    sd = triple.sigma_d
    plus_reach = _constant_spin_reach(box, sd, box.top_ids, 1)
    minus_reach = _constant_spin_reach(box, sd, box.bottom_ids, -1)
    u = box.edges[:, 0]
    v = box.edges[:, 1]
    p_i = np.flatnonzero(
        (plus_reach[u] & minus_reach[v]) | (plus_reach[v] & minus_reach[u])
    )
    i_i = np.flatnonzero(
        (triple.sigma_plus[u] == triple.sigma_plus[v])
        & (triple.sigma_minus[u] == triple.sigma_minus[v])
        & (sd[u] != sd[v])
    )
    return IsingSets(p_i=p_i, i_i=i_i)


def spin_cut_query(
    box: BoxGeometry,
    sigma_d: np.ndarray,
    x: int,
    side: str,
    prune: bool = True,
) -> tuple[bool, float]:
    """Does a disagreement-edge cut separate vertex x from the given side?

    The candidate separating set is the edge boundary of the region
    reachable from that side through constant-spin paths; all its edges
    have disagreeing endpoints.  When it exists it is pruned (ascending
    edge ids) to a set that is minimal while still separating T from B
    and x from the side.  Returns (exists, L-inf distance from x to the
    nearest edge of the cut); the distance is +inf when no cut exists.
    """
    if side not in ("T", "B"):
        raise ValueError("side must be 'T' or 'B'")
    seeds = box.top_ids if side == "T" else box.bottom_ids
    opposite = box.bottom_ids if side == "T" else box.top_ids
    region = np.zeros(box.n_vertices, dtype=bool)
    queue = deque()
    for v in seeds:
        if not region[v]:
            region[v] = True
            queue.append(int(v))
    while queue:
        w = queue.popleft()
        nbrs, _ = box.vertex_neighbors(w)
        for nb in nbrs:
            if not region[nb] and sigma_d[nb] == sigma_d[w]:
                region[nb] = True
                queue.append(int(nb))
    if region[x] or region[opposite].any():
        return False, math.inf
    u, v = box.edges[:, 0], box.edges[:, 1]
    cut = set(int(e) for e in np.flatnonzero(region[u] != region[v]))

    def separates(edge_set) -> bool:
        blocked = np.zeros(box.n_edges, dtype=bool)
        for e in edge_set:
            blocked[e] = True
        seen = np.zeros(box.n_vertices, dtype=bool)
        dq = deque()
        for s in seeds:
            seen[s] = True
            dq.append(int(s))
        while dq:
            w = dq.popleft()
            nbrs, eids = box.vertex_neighbors(w)
            for nb, eid in zip(nbrs, eids):
                if not blocked[eid] and not seen[nb]:
                    seen[nb] = True
                    dq.append(int(nb))
        return not seen[x] and not seen[opposite].any()

    if prune:
        for e in sorted(cut):
            if separates(cut - {e}):
                cut.discard(e)
    coord = box.coords[x].astype(float)
    dist = min(float(np.max(np.abs(coord - box.midpoints[e]))) for e in cut)
    return True, dist


IsingBoundary = ("plus", "minus", "dobrushin")


@dataclass(frozen=True)
class IsingTable:
    """Exact Gibbs table of the spin model with clamped boundary spins.

    Free-spin assignments are bitmasks over ``free_vertices`` (bit set
    means spin +1)."""

    beta: float
    boundary: str
    free_vertices: np.ndarray
    clamped: dict
    probs: np.ndarray

    def prob(self, mask: int) -> float:
        return float(self.probs[mask])

    def mask_of(self, sigma: np.ndarray) -> int:
        for v, s in self.clamped.items():
            if sigma[v] != s:
                raise ValueError(f"spin at clamped vertex {v} is {sigma[v]}, expected {s}")
        mask = 0
        for i, v in enumerate(self.free_vertices):
            if sigma[v] > 0:
                mask |= 1 << i
        return mask

    def spin_config(self, mask: int, n_vertices: int) -> np.ndarray:
        sigma = np.zeros(n_vertices, dtype=np.int8)
        for v, s in self.clamped.items():
            sigma[v] = s
        for i, v in enumerate(self.free_vertices):
            sigma[v] = 1 if (mask >> i) & 1 else -1
        return sigma


def exact_ising_distribution(box: BoxGeometry, boundary: str, beta: float) -> IsingTable:
    """Exact spin Gibbs table with the given clamped boundary.

    plus / minus clamp the whole boundary to +1 / -1; dobrushin clamps T
    to +1 and B to -1.  Enumeration over the free (interior) vertices,
    capped at 16 of them.
    """
    if boundary not in IsingBoundary:
        raise ValueError(f"boundary must be one of {IsingBoundary}")
    if beta < 0:
        raise ValueError("beta must be >= 0")
    clamped: dict[int, int] = {}
    for v in range(box.n_vertices):
        if not box.boundary_mask[v]:
            continue
        if boundary == "plus":
            clamped[v] = 1
        elif boundary == "minus":
            clamped[v] = -1
        else:
            clamped[v] = 1 if box.top_mask[v] else -1
    free = np.asarray(
        [v for v in range(box.n_vertices) if v not in clamped], dtype=np.int64
    )
    n_free = len(free)
    if n_free > 16:
        raise ValueError(f"{n_free} free vertices, exact table capped at 16")
    pos = {int(v): i for i, v in enumerate(free)}

    n_masks = 1 << n_free
    masks = np.arange(n_masks)
    spins = np.where(
        (masks[:, None] >> np.arange(n_free)[None, :]) & 1, 1.0, -1.0
    ) if n_free else np.zeros((1, 0))

    energy = np.zeros(n_masks)
    const = 0.0
    for (u, v) in box.edges:
        u, v = int(u), int(v)
        if u in clamped and v in clamped:
            const += clamped[u] * clamped[v]
        elif u in clamped:
            energy += clamped[u] * spins[:, pos[v]]
        elif v in clamped:
            energy += clamped[v] * spins[:, pos[u]]
        else:
            energy += spins[:, pos[u]] * spins[:, pos[v]]
    # H = -(sum of products); lambda ~ exp(-beta H)
    logw = beta * (energy + const)
    logw -= logw.max()
    probs = np.exp(logw)
    probs /= probs.sum()
    return IsingTable(
        beta=beta,
        boundary=boundary,
        free_vertices=free,
        clamped=clamped,
        probs=probs,
    )


def dump_spins(box: BoxGeometry, triple: SpinTriple, path) -> None:
    """Line-delimited spin dump: coordinates then the three fields."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"# fkcoupling-spins v1 dim={box.dim}\n")
        for v in range(box.n_vertices):
            coords = " ".join(str(int(c)) for c in box.coords[v])
            fh.write(
                f"{coords} {int(triple.sigma_plus[v])} "
                f"{int(triple.sigma_minus[v])} {int(triple.sigma_d[v])}\n"
            )
