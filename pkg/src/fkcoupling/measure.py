"""Random-cluster weights, heat-bath probabilities and exact tables.

The exact tables are produced by exhaustive enumeration of the 2^|E|
edge configurations of a small graph and serve as oracles for the
dynamics: the conditioned chain must match the top-bottom measure
conditioned on disconnection, the unconditioned chain its own boundary
condition's measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from ._kernels import enumerate_log_weights
from .connectivity import BoundaryCondition, ClusterIndex, extended_adjacency

CONDITION_NONE = "none"
CONDITION_TB_DISCONNECTED = "tb-disconnected"


@dataclass(frozen=True)
class FKParams:
    """Edge density p and cluster weight q of the random-cluster measure.

    Only q >= 1 is supported: the monotone coupling of the two chains
    needs the conditional opening probability to be monotone in the
    configuration, which fails for q < 1.
    """

    p: float
    q: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")
        if self.q < 1.0:
            raise ValueError(f"q must be >= 1, got {self.q}")

    @property
    def close_prob_connected(self) -> float:
        """Heat-bath closing threshold when the endpoints are otherwise joined."""
        return 1.0 - self.p

    @property
    def close_prob_disconnected(self) -> float:
        """Heat-bath closing threshold when closing the edge splits a cluster."""
        return (1.0 - self.p) / (1.0 - self.p + self.p / self.q)

    @property
    def ising_beta(self) -> float:
        """Inverse temperature whose q=2 cluster coloring this density
        reproduces, for the +-1 spin energy -sum sigma(x)sigma(y).

        Coloring the clusters gives spin weight (1-p)^(#disagreeing
        edges), which equals exp(-beta H) with p = 1 - exp(-2 beta).
        """
        if self.p >= 1.0:
            return math.inf
        return -0.5 * math.log(1.0 - self.p)

    @staticmethod
    def from_ising_beta(beta: float, q: float = 2.0) -> "FKParams":
        return FKParams(p=1.0 - math.exp(-2.0 * beta), q=q)


def comparison_parameter(params: FKParams) -> float:
    """Bernoulli density f(p, q) = p / (p + q - p q) that lower-bounds the
    free-boundary random-cluster measure in the stochastic order."""
    return params.p / (params.p + params.q - params.p * params.q)


def heat_bath_close_prob(index: ClusterIndex, e: int, params: FKParams) -> float:
    """Probability that the heat-bath update closes edge e.

    Equals the exact weight ratio of the closed configuration against the
    sum of both: 1 - p when the endpoints are joined without e, else
    (1 - p) / (1 - p + p/q).
    """
    if index.connected_without(e):
        return params.close_prob_connected
    return params.close_prob_disconnected


def log_weight(graph, config, bc: BoundaryCondition, params: FKParams) -> float:
    """Unnormalized log weight: n_open log p + n_closed log(1-p) + k log q."""
    config = np.asarray(config, dtype=np.uint8)
    index = ClusterIndex(graph, config, bc)
    n_open = int(config.sum())
    n_closed = graph.n_edges - n_open
    w = index.k * math.log(params.q)
    if n_open:
        w += n_open * (math.log(params.p) if params.p > 0 else -math.inf)
    if n_closed:
        w += n_closed * (math.log(1.0 - params.p) if params.p < 1 else -math.inf)
    return w


def weight(graph, config, bc: BoundaryCondition, params: FKParams) -> float:
    return math.exp(log_weight(graph, config, bc, params))


@dataclass(frozen=True)
class ExactTable:
    """Exact probabilities of all edge configurations of a small graph.

    Configurations are bitmasks: bit e is the state of edge e.  When built
    with the disconnection condition, every configuration joining T to B
    has probability exactly zero.
    """

    n_edges: int
    bc: BoundaryCondition
    params: FKParams
    condition: str
    log_weights: np.ndarray   # unnormalized, unconditioned
    tb_connected: np.ndarray  # uint8 flag per mask
    probs: np.ndarray         # normalized, conditioned

    def prob(self, mask: int) -> float:
        return float(self.probs[mask])

    def mask_of(self, config) -> int:
        config = np.asarray(config, dtype=np.uint8)
        mask = 0
        for j in range(self.n_edges):
            if config[j]:
                mask |= 1 << j
        return mask

    def sample_masks(self, rng: np.random.Generator, size: int) -> np.ndarray:
        cdf = np.cumsum(self.probs)
        cdf[-1] = 1.0
        return np.searchsorted(cdf, rng.random(size), side="right")

    def mask_to_config(self, mask: int) -> np.ndarray:
        return np.array([(mask >> j) & 1 for j in range(self.n_edges)], dtype=np.uint8)

    def export_lines(self) -> Iterable[str]:
        yield f"# fkcoupling-exact-table v1 edges={self.n_edges} p={self.params.p!r} q={self.params.q!r} bc={self.bc.value} condition={self.condition}"
        for mask in range(1 << self.n_edges):
            yield f"{mask} {self.probs[mask]!r}"

    def save(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            for line in self.export_lines():
                fh.write(line + "\n")


def exact_distribution(
    graph,
    bc: BoundaryCondition,
    params: FKParams,
    condition: str = CONDITION_NONE,
    max_edges: int = 20,
) -> ExactTable:
    """Exhaustive random-cluster table of a small graph.

    Enumerates all 2^|E| configurations; refuses graphs above
    ``max_edges`` edges (the default keeps enumeration around a million
    configurations).
    """
    m = graph.n_edges
    if m > max_edges:
        raise ValueError(f"graph has {m} edges, exact enumeration capped at {max_edges}")
    if condition not in (CONDITION_NONE, CONDITION_TB_DISCONNECTED):
        raise ValueError(f"unknown condition {condition!r}")

    indptr, nbrs, eids, n_total, ghost_t, ghost_b = extended_adjacency(graph, bc)
    ends = graph.edge_endpoints
    gu = []
    gv = []
    if bc is BoundaryCondition.WIRED:
        gu = [int(v) for v in graph.boundary_ids]
        gv = [ghost_t] * len(gu)
    elif bc is BoundaryCondition.TB:
        gu = [int(v) for v in graph.top_ids] + [int(v) for v in graph.bottom_ids]
        gv = [ghost_t] * len(graph.top_ids) + [ghost_b] * len(graph.bottom_ids)

    log_p = math.log(params.p) if params.p > 0 else -math.inf
    log_1p = math.log(1.0 - params.p) if params.p < 1 else -math.inf
    logw, tb = enumerate_log_weights(
        graph.n_vertices,
        n_total,
        ends[:, 0].astype(np.int64),
        ends[:, 1].astype(np.int64),
        np.asarray(gu, dtype=np.int64),
        np.asarray(gv, dtype=np.int64),
        np.asarray(graph.top_ids, dtype=np.int64),
        np.asarray(graph.bottom_ids, dtype=np.int64),
        log_p,
        log_1p,
        math.log(params.q),
    )

    keep = np.ones(len(logw), dtype=bool)
    if condition == CONDITION_TB_DISCONNECTED:
        keep = tb == 0
    finite = logw[keep]
    finite = finite[np.isfinite(finite)]
    shift = finite.max() if len(finite) else 0.0
    probs = np.where(keep, np.exp(logw - shift), 0.0)
    total = probs.sum()
    if total <= 0:
        raise ValueError("conditioning removed every configuration")
    probs /= total
    return ExactTable(
        n_edges=m,
        bc=bc,
        params=params,
        condition=condition,
        log_weights=logw,
        tb_connected=tb,
        probs=probs,
    )


def exact_mean(table: ExactTable, observable: Callable[[int], float]) -> float:
    """Expectation of a configuration functional under an exact table."""
    return float(sum(table.probs[m] * observable(m) for m in range(1 << table.n_edges)))


def total_variation(counts: np.ndarray, table: ExactTable) -> float:
    """TV distance between empirical mask counts and an exact table."""
    counts = np.asarray(counts, dtype=np.float64)
    if counts.shape != table.probs.shape:
        raise ValueError(
            f"counts cover {counts.shape[0]} masks, table covers {table.probs.shape[0]}"
        )
    n = counts.sum()
    if n == 0:
        raise ValueError("no samples")
    return float(0.5 * np.abs(counts / n - table.probs).sum())
