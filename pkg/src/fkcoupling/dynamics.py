"""Coupled single-edge heat-bath dynamics.

Two chains over the same box share one stream of (edge, uniform) draws.
The first chain is a plain heat-bath sampler for the random-cluster
measure under its boundary condition (wired by default).  The second
lives under the top-bottom boundary condition and refuses any opening
that would join T to B, so it samples the measure conditioned on
disconnection.  Shared randomness plus q >= 1 keeps the first chain
above the second edge-wise at all times.

The per-step rule, given the drawn edge e and uniform U: virtually close
e, then close it for real iff U is below the heat-bath closing
probability (1-p if the endpoints are joined without e, else
(1-p)/(1-p+p/q)); the conditioned chain additionally keeps e closed when
its endpoints hang off the T and B ghost clusters.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import _kernels
from .connectivity import BoundaryCondition, ClusterIndex, extended_adjacency
from .geometry import BoxGeometry, build_box
from .measure import ExactTable, FKParams, total_variation

RNG_BLOCK = 4096

INITIAL_ALL_CLOSED = "all-closed"
INITIAL_X_OPEN_Y_CLOSED = "x-open-y-closed"


class ObserverError(RuntimeError):
    """An observer raised during a run; partial records are attached."""

    def __init__(self, message: str, records: list):
        super().__init__(message)
        self.records = records


@dataclass
class DynamicsParams:
    """Run recipe: measure parameters, initial pair and step counts."""

    params: FKParams
    initial: str | tuple = INITIAL_X_OPEN_Y_CLOSED
    burn_in: int = 0
    total_steps: int = 0
    x_boundary: BoundaryCondition = BoundaryCondition.WIRED

    def __post_init__(self):
        if self.burn_in < 0 or self.total_steps < 0:
            raise ValueError("step counts must be non-negative")
        if self.x_boundary not in (BoundaryCondition.WIRED, BoundaryCondition.FREE):
            raise ValueError("the unconditioned chain runs under wired or free bc")


class CoupledState:
    """The pair of edge configurations plus the deterministic draw stream.

    Randomness is consumed in blocks: each refill draws RNG_BLOCK edge
    indices and then RNG_BLOCK uniforms from the generator, and steps eat
    the block entry by entry.  The stream is therefore a pure function of
    the seed, no matter how steps are grouped into kernel calls.

    Owned by a single execution context; cluster indices are rebuilt
    lazily after compiled runs.  With the free boundary condition on the
    unconditioned chain the edge-wise ordering between the chains is not
    guaranteed (that knob exists for marginal sensitivity checks only).
    """

    def __init__(
        self,
        box: BoxGeometry,
        dparams: DynamicsParams,
        rng: np.random.Generator,
        x_state: np.ndarray,
        y_state: np.ndarray,
    ):
        self.box = box
        self.dparams = dparams
        self.params = dparams.params
        self.rng = rng
        self.x_state = np.ascontiguousarray(x_state, dtype=np.uint8)
        self.y_state = np.ascontiguousarray(y_state, dtype=np.uint8)
        self.t = 0
        self.violations = {"dominance": 0, "disconnection": 0, "threshold_order": 0}
        self._buf_edges = np.empty(0, dtype=np.int64)
        self._buf_us = np.empty(0, dtype=np.float64)
        self._buf_pos = 0
        self._x_index: ClusterIndex | None = None
        self._y_index: ClusterIndex | None = None
        xg = extended_adjacency(box, dparams.x_boundary)
        yg = extended_adjacency(box, BoundaryCondition.TB)
        self._xi, self._xn, self._xe, self._nx_tot = xg[0], xg[1], xg[2], xg[3]
        self._yi, self._yn, self._ye, self._ny_tot = yg[0], yg[1], yg[2], yg[3]
        self._ghost_t, self._ghost_b = yg[4], yg[5]
        self._eu = np.ascontiguousarray(box.edges[:, 0], dtype=np.int32)
        self._ev = np.ascontiguousarray(box.edges[:, 1], dtype=np.int32)
        self._dummy_counts = np.zeros(1, dtype=np.int64)
        self._dummy_acc = np.zeros(box.n_edges, dtype=np.int64)

    # -- indices -----------------------------------------------------------

    @property
    def x_index(self) -> ClusterIndex:
        if self._x_index is None:
            self._x_index = ClusterIndex(self.box, self.x_state, self.dparams.x_boundary)
        return self._x_index

    @property
    def y_index(self) -> ClusterIndex:
        if self._y_index is None:
            self._y_index = ClusterIndex(self.box, self.y_state, BoundaryCondition.TB)
        return self._y_index

    def _invalidate_indices(self) -> None:
        self._x_index = None
        self._y_index = None

    # -- randomness --------------------------------------------------------

    def _refill(self) -> None:
        self._buf_edges = self.rng.integers(0, self.box.n_edges, size=RNG_BLOCK, dtype=np.int64)
        self._buf_us = self.rng.random(RNG_BLOCK)
        self._buf_pos = 0

    def next_draw(self) -> tuple[int, float]:
        """Consume one (edge, uniform) pair from the shared stream."""
        if self._buf_pos >= len(self._buf_edges):
            self._refill()
        e = int(self._buf_edges[self._buf_pos])
        u = float(self._buf_us[self._buf_pos])
        self._buf_pos += 1
        return e, u

    # -- stepping ----------------------------------------------------------

    def _advance(self, n: int, validate: bool = False, tally=None) -> int:
        """Advance n ticks through the compiled kernel.

        Returns the number of strided samples taken (zero when not
        tallying).
        """
        if n <= 0:
            return 0
        self._invalidate_indices()
        if tally is None:
            stride, burnin, do_mask = 0, 0, False
            x_counts = y_counts = self._dummy_counts
            x_acc = y_acc = self._dummy_acc
        else:
            stride, burnin, do_mask, x_counts, y_counts, x_acc, y_acc = tally
        total_samples = 0
        remaining = n
        while remaining > 0:
            if self._buf_pos >= len(self._buf_edges):
                self._refill()
            take = min(remaining, len(self._buf_edges) - self._buf_pos)
            lo = self._buf_pos
            res = _kernels.run_coupled_chunk(
                self._xi, self._xn, self._xe, self._nx_tot,
                self._yi, self._yn, self._ye, self._ny_tot,
                self._eu, self._ev, self.box.n_edges,
                self.x_state, self.y_state,
                self.params.close_prob_connected, self.params.close_prob_disconnected,
                self._ghost_t, self._ghost_b,
                self._buf_edges[lo : lo + take], self._buf_us[lo : lo + take],
                self.t, stride, burnin,
                do_mask, x_counts, y_counts, x_acc, y_acc,
                validate,
            )
            n_samples, viol_dom, viol_disc, viol_thr = res
            total_samples += int(n_samples)
            self.violations["dominance"] += int(viol_dom)
            self.violations["disconnection"] += int(viol_disc)
            self.violations["threshold_order"] += int(viol_thr)
            self._buf_pos += take
            self.t += take
            remaining -= take
        return total_samples


def init_state(box: BoxGeometry, dparams: DynamicsParams, seed) -> CoupledState:
    """Build a coupled state with both configurations in the allowed set.

    ``seed`` may be an int, a SeedSequence or a Generator.  The supplied
    pair (when ``dparams.initial`` is a tuple) must dominate edge-wise
    and keep T disconnected from B in the conditioned configuration.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    m = box.n_edges
    if dparams.initial == INITIAL_ALL_CLOSED:
        x0 = np.zeros(m, dtype=np.uint8)
        y0 = np.zeros(m, dtype=np.uint8)
    elif dparams.initial == INITIAL_X_OPEN_Y_CLOSED:
        x0 = np.ones(m, dtype=np.uint8)
        y0 = np.zeros(m, dtype=np.uint8)
    else:
        x0, y0 = dparams.initial
        x0 = np.asarray(x0, dtype=np.uint8).copy()
        y0 = np.asarray(y0, dtype=np.uint8).copy()
        if x0.shape != (m,) or y0.shape != (m,):
            raise ValueError("initial configurations do not match the box")
        if np.any(x0 < y0):
            raise ValueError("initial pair violates edge-wise dominance")
        if ClusterIndex(box, y0, BoundaryCondition.TB).tb_connected():
            raise ValueError("initial conditioned configuration joins T to B")
    return CoupledState(box, dparams, rng, x0, y0)


def step(state: CoupledState, validate: bool = False) -> CoupledState:
    """One tick through the pure-Python cluster index (reference path).

    Bit-identical to the compiled kernel on the same draw stream; used on
    small boxes and as the equivalence oracle for the kernel.
    """
    e, u = state.next_draw()
    a, b = (int(v) for v in state.box.edges[e])
    params = state.params
    xidx, yidx = state.x_index, state.y_index

    xidx.apply_flip(e, 0)
    joined_x = xidx.same_cluster(a, b)
    thr_x = params.close_prob_connected if joined_x else params.close_prob_disconnected
    new_x = 0 if u < thr_x else 1
    xidx.apply_flip(e, new_x)
    state.x_state[e] = new_x

    yidx.apply_flip(e, 0)
    joined_y = yidx.same_cluster(a, b)
    thr_y = params.close_prob_connected if joined_y else params.close_prob_disconnected
    if u < thr_y:
        new_y = 0
    elif joined_y:
        new_y = 1
    else:
        la, lb = yidx.labels[a], yidx.labels[b]
        lt = yidx.labels[yidx.ghost_t]
        lbot = yidx.labels[yidx.ghost_b]
        veto = (la == lt and lb == lbot) or (la == lbot and lb == lt)
        new_y = 0 if veto else 1
    yidx.apply_flip(e, new_y)
    state.y_state[e] = new_y

    state.t += 1
    if validate:
        if thr_x > thr_y:
            state.violations["threshold_order"] += 1
            raise AssertionError(f"threshold ordering violated at edge {e}")
        if new_x < new_y:
            state.violations["dominance"] += 1
            raise AssertionError(f"dominance violated at edge {e}")
        if yidx.tb_connected():
            state.violations["disconnection"] += 1
            raise AssertionError("conditioned chain joined T to B")
    return state


def run(
    state: CoupledState,
    n_steps: int,
    observers: Sequence[Callable[[CoupledState], object]] = (),
    stride: int | None = None,
    burnin: int = 0,
    validate: bool = False,
) -> tuple[CoupledState, list]:
    """Advance the pair n_steps ticks, firing observers on a stride.

    Observers run at absolute step counts that are multiples of
    ``stride`` (default: one sweep, |E| ticks) once past ``burnin``.
    Deterministic for a fixed seed: identical record streams on reruns.
    An observer exception aborts the run; the records collected so far
    ride on the raised ObserverError.
    """
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    stride = int(stride) if stride else state.box.n_edges
    if stride <= 0:
        raise ValueError("stride must be positive")
    records: list = []
    target = state.t + n_steps
    while state.t < target:
        if observers:
            next_stop = (state.t // stride + 1) * stride
            seg = min(target, next_stop) - state.t
        else:
            seg = target - state.t
        state._advance(seg, validate=validate)
        if observers and state.t % stride == 0 and state.t > burnin:
            for obs in observers:
                try:
                    out = obs(state)
                except Exception as exc:
                    raise ObserverError(
                        f"observer {obs!r} failed at step {state.t}", records
                    ) from exc
                if out is None:
                    continue
                if isinstance(out, list):
                    records.extend(out)
                else:
                    records.append(out)
    return state, records


@dataclass
class MarginalCounts:
    """Strided sample tallies of both chains."""

    n_samples: int
    x_mask_counts: np.ndarray | None
    y_mask_counts: np.ndarray | None
    x_edge_open: np.ndarray
    y_edge_open: np.ndarray


def collect_marginal(
    state: CoupledState,
    n_steps: int,
    burnin: int = 0,
    stride: int | None = None,
    validate: bool = False,
) -> MarginalCounts:
    """Run the kernel while tallying strided configuration samples.

    Full configuration-mask histograms are kept when the box has at most
    20 edges; per-edge open counts are always kept.
    """
    m = state.box.n_edges
    stride = int(stride) if stride else m
    do_mask = m <= 20
    x_counts = np.zeros(1 << m if do_mask else 1, dtype=np.int64)
    y_counts = np.zeros_like(x_counts)
    x_acc = np.zeros(m, dtype=np.int64)
    y_acc = np.zeros(m, dtype=np.int64)
    burnin_abs = state.t + burnin
    n_samples = state._advance(
        n_steps,
        validate=validate,
        tally=(stride, burnin_abs, do_mask, x_counts, y_counts, x_acc, y_acc),
    )
    return MarginalCounts(
        n_samples=n_samples,
        x_mask_counts=x_counts if do_mask else None,
        y_mask_counts=y_counts if do_mask else None,
        x_edge_open=x_acc,
        y_edge_open=y_acc,
    )


def marginal_check(
    state: CoupledState,
    table: ExactTable,
    which: str,
    n_steps: int,
    burnin: int = 0,
    stride: int | None = None,
) -> float:
    """Total-variation distance of strided empirical configuration
    frequencies from an exact table.  ``which`` selects the chain: "X"
    or "Y"."""
    if which not in ("X", "Y"):
        raise ValueError("which must be 'X' or 'Y'")
    if table.n_edges != state.box.n_edges:
        raise ValueError("table and box disagree on the number of edges")
    if table.n_edges > 20:
        raise ValueError("marginal check limited to small graphs")
    counts = collect_marginal(state, n_steps, burnin=burnin, stride=stride)
    hist = counts.x_mask_counts if which == "X" else counts.y_mask_counts
    return total_variation(hist, table)


# -- checkpointing ----------------------------------------------------------

CHECKPOINT_FORMAT = "fkcoupling-checkpoint"
CHECKPOINT_VERSION = 1


def save_checkpoint(state: CoupledState, path) -> None:
    """Write a text checkpoint sufficient to resume bit-exactly."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "box": {
            "dim": state.box.dim,
            "side": state.box.side,
            "rotation": [[float(v) for v in row] for row in state.box.rotation],
            "center": [float(v) for v in state.box.center],
            "face_axis": state.box.face_axis,
        },
        "params": {"p": state.params.p, "q": state.params.q},
        "x_boundary": state.dparams.x_boundary.value,
        "t": state.t,
        "x_state": "".join(str(int(v)) for v in state.x_state),
        "y_state": "".join(str(int(v)) for v in state.y_state),
        "rng_state": _jsonify(state.rng.bit_generator.state),
        "buffer": {
            "edges": [int(v) for v in state._buf_edges[state._buf_pos :]],
            "us_hex": [float(v).hex() for v in state._buf_us[state._buf_pos :]],
        },
        "violations": dict(state.violations),
    }
    with open(path, "w", encoding="ascii") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path) -> CoupledState:
    """Rebuild a CoupledState from a checkpoint file."""
    with open(path, "r", encoding="ascii") as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError("not a recognizable checkpoint file")
    spec = doc["box"]
    box = build_box(
        spec["dim"],
        spec["side"],
        rotation=np.asarray(spec["rotation"], dtype=float),
        center=np.asarray(spec["center"], dtype=float),
        face_axis=spec["face_axis"],
    )
    dparams = DynamicsParams(
        params=FKParams(doc["params"]["p"], doc["params"]["q"]),
        x_boundary=BoundaryCondition(doc["x_boundary"]),
    )
    bitgen = np.random.PCG64()
    bitgen.state = doc["rng_state"]
    rng = np.random.Generator(bitgen)
    x0 = np.frombuffer(doc["x_state"].encode("ascii"), dtype=np.uint8) - ord("0")
    y0 = np.frombuffer(doc["y_state"].encode("ascii"), dtype=np.uint8) - ord("0")
    state = CoupledState(box, dparams, rng, x0, y0)
    state.t = int(doc["t"])
    state._buf_edges = np.asarray(doc["buffer"]["edges"], dtype=np.int64)
    state._buf_us = np.asarray(
        [float.fromhex(h) for h in doc["buffer"]["us_hex"]], dtype=np.float64
    )
    state._buf_pos = 0
    state.violations = {k: int(v) for k, v in doc["violations"].items()}
    return state


def _jsonify(obj):
    if isinstance(obj, dict):
        return {k: _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj
