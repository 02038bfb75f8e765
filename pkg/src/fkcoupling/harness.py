"""Experiment orchestration: replicated runs, statistics, record files.

A run is fully determined by its configuration (box, measure parameters,
step counts, replica count and master seed): replicas get independent
spawned seed streams, records are merged in replica order, and output
files carry no timestamps, so reruns are byte-identical.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import interface as itf
from . import spins as sp
from .connectivity import BoundaryCondition
from .dynamics import (
    CoupledState,
    DynamicsParams,
    init_state,
    run,
    save_checkpoint,
)
from .geometry import BoxGeometry, alpha, build_box, distance_to_complement, set_distance
from .measure import FKParams, comparison_parameter

STAT_INTERFACE_REPORT = "interface_report"
STAT_LOCALIZATION_FK = "localization_fk"
STAT_LOCALIZATION_ISING = "localization_ising"
STAT_SPIN_MISMATCH = "spin_mismatch"
STAT_PIVOTAL_SPEED = "pivotal_speed"
STAT_SEMIDISTANCE_DRIFT = "semidistance_drift"
STAT_PEIERLS_DECAY = "peierls_decay"

ALL_STATISTICS = (
    STAT_INTERFACE_REPORT,
    STAT_LOCALIZATION_FK,
    STAT_LOCALIZATION_ISING,
    STAT_SPIN_MISMATCH,
    STAT_PIVOTAL_SPEED,
    STAT_SEMIDISTANCE_DRIFT,
    STAT_PEIERLS_DECAY,
)

RECORDS_HEADER = {"format": "fkcoupling-records", "version": 1}


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass
class ExperimentConfig:
    """Everything a run needs; validated before any work starts."""

    dim: int = 2
    side: float = 8.0
    rotation: list | None = None
    center: list | None = None
    face_axis: int | None = None
    p: float | None = None
    beta: float | None = None
    q: float = 2.0
    x_boundary: str = "wired"
    initial: str = "x-open-y-closed"
    burn_in: int = 0
    steps: int = 0
    stride: int | None = None
    replicas: int = 1
    seed: int = 0
    statistics: list = field(default_factory=lambda: [STAT_INTERFACE_REPORT])
    out_dir: str | None = None
    validate_invariants: bool = False
    speed_s_grid: list | None = None
    speed_ell_grid: list | None = None
    drift_window: int | None = None
    drift_ell: float | None = None
    peierls_edge: int | None = None
    peierls_n_max: int = 12

    def resolved_params(self) -> FKParams:
        if (self.p is None) == (self.beta is None):
            raise ConfigError("exactly one of p and beta must be set")
        if self.p is not None:
            params = FKParams(self.p, self.q)
        else:
            params = FKParams.from_ising_beta(self.beta, self.q)
        if not 0.0 < params.p < 1.0:
            raise ConfigError("dynamics needs 0 < p < 1 (frozen chains excluded)")
        return params

    def validated(self) -> "ExperimentConfig":
        try:
            self.resolved_params()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.replicas < 1:
            raise ConfigError("replicas must be >= 1")
        if self.burn_in < 0 or self.steps < 0:
            raise ConfigError("step counts must be non-negative")
        if self.stride is not None and self.stride < 1:
            raise ConfigError("stride must be >= 1")
        if self.x_boundary not in ("wired", "free"):
            raise ConfigError("x_boundary must be wired or free")
        unknown = set(self.statistics) - set(ALL_STATISTICS)
        if unknown:
            raise ConfigError(f"unknown statistics: {sorted(unknown)}")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if (
            STAT_SEMIDISTANCE_DRIFT in self.statistics
            and self.drift_window is not None
            and self.drift_window > self.steps
        ):
            raise ConfigError("drift window exceeds the run length")
        return self

    def build_box(self) -> BoxGeometry:
        try:
            return build_box(
                self.dim,
                self.side,
                rotation=None if self.rotation is None else np.asarray(self.rotation, float),
                center=self.center,
                face_axis=self.face_axis,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(doc: dict) -> "ExperimentConfig":
        known = {f for f in ExperimentConfig.__dataclass_fields__}
        extra = set(doc) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return ExperimentConfig(**doc)


@dataclass
class ObservableRecord:
    """One measured statistic with its provenance."""

    replica: int
    step: int
    stat: str
    value: object
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "replica": self.replica,
            "step": self.step,
            "stat": self.stat,
            "value": self.value,
            "provenance": self.provenance,
        }


def central_edge(box: BoxGeometry) -> int:
    """Edge nearest the box center, preferring the face-axis direction."""
    normal = box.rotation[:, box.face_axis]
    diff = (box.coords[box.edges[:, 1]] - box.coords[box.edges[:, 0]]) @ normal
    dist = np.max(np.abs(box.midpoints - box.center), axis=1)
    # axis-crossing edges first, then closest to the center, then lowest id
    order = np.lexsort((np.arange(box.n_edges), dist, -np.abs(diff)))
    return int(order[0])


# -- per-snapshot statistics -------------------------------------------------


def stat_localization_fk(state: CoupledState) -> dict:
    """Max over interface and pivotal edges of the distance to the box
    complement or the other pivotal edges."""
    box = state.box
    iface = itf.interface_set(state)
    piv = itf.pivotal_set(state)
    piv_set = set(int(e) for e in piv)
    max_pi = None
    max_i = None
    for e in sorted(set(int(x) for x in iface) | piv_set):
        d = min(
            distance_to_complement(box, e),
            set_distance(box, e, piv_set - {e}),
        )
        max_pi = d if max_pi is None else max(max_pi, d)
        if e not in piv_set or state.x_state[e] != state.y_state[e]:
            # e is an interface edge
            max_i = d if max_i is None else max(max_i, d)
    return {
        "max_pi": max_pi,
        "max_i": max_i,
        "n_interface": int(len(iface)),
        "n_pivotal": int(len(piv)),
    }


def stat_localization_ising(box: BoxGeometry, triple: sp.SpinTriple) -> dict:
    """Max over the spin interface of the distance to the complement or
    the boundary-anchored disagreement set."""
    sets = sp.ising_interface_sets(box, triple)
    p_i = set(int(e) for e in sets.p_i)
    value = None
    for e in sets.i_i:
        d = min(
            distance_to_complement(box, int(e)),
            set_distance(box, int(e), p_i),
        )
        value = d if value is None else max(value, d)
    return {"max_ii": value, "n_ii": int(len(sets.i_i)), "n_pi": int(len(sets.p_i))}


def stat_spin_mismatch(box: BoxGeometry, triple: sp.SpinTriple) -> dict:
    """Both orientations of the bulk/conditioned spin mismatch event:
    distance from mismatching vertices to a spin cut shielding them."""
    out = {}
    for key, bulk, dval, side in (
        ("plus_vs_d", triple.sigma_plus, -1, "B"),
        ("minus_vs_d", triple.sigma_minus, 1, "T"),
    ):
        best = None
        count = 0
        for x in range(box.n_vertices):
            if bulk[x] == -dval and triple.sigma_d[x] == dval:
                exists, dist = sp.spin_cut_query(box, triple.sigma_d, x, side)
                if exists:
                    count += 1
                    best = dist if best is None else max(best, dist)
        out[key] = best
        out[f"n_{key}"] = count
    return out


def interface_report_dict(state: CoupledState) -> dict:
    rep = itf.interface_report(state)
    return {
        "n_interface": int(len(rep.interface)),
        "n_pivotal": int(len(rep.pivotal)),
        "max_distance": rep.max_distance,
        "cut_size": None if rep.cut is None else int(len(rep.cut)),
    }


# -- cross-snapshot statistics ------------------------------------------------


def pivotal_speed_table(
    box: BoxGeometry,
    snapshots: list,
    s_grid: list,
    ell_grid: list,
) -> list:
    """Empirical conditional pivotal-arrival frequencies.

    For lags s and radii ell: among edges farther than ell from the box
    complement such that some extracted cut at time t keeps distance
    >= ell from the edge, how often is the edge pivotal at time t+s.
    Cuts are the two shell extractions (from T and from B); existence of
    any cut at distance >= ell is estimated by the better of the two.
    """
    comp = np.array([distance_to_complement(box, e) for e in range(box.n_edges)])
    mids = box.midpoints
    per_snap = []
    for snap in snapshots:
        piv_mask = np.zeros(box.n_edges, dtype=bool)
        piv_mask[snap["pivotal"]] = True
        dists = []
        for cut in snap["cuts"]:
            if len(cut):
                d = np.full(box.n_edges, np.inf)
                for f in cut:
                    np.minimum(d, np.max(np.abs(mids - mids[f]), axis=1), out=d)
                dists.append(d)
        per_snap.append((snap["t"], piv_mask, dists))
    by_t = {t: i for i, (t, _, _) in enumerate(per_snap)}
    rows = []
    for s in s_grid:
        for ell in ell_grid:
            num = 0
            den = 0
            for t, _, dists in per_snap:
                j = by_t.get(t + s)
                if j is None or not dists:
                    continue
                far = np.maximum.reduce(dists) >= ell
                eligible = (comp > ell) & far
                den += int(eligible.sum())
                num += int((eligible & per_snap[j][1]).sum())
            rows.append(
                {
                    "s": int(s),
                    "ell": float(ell),
                    "numerator": num,
                    "denominator": den,
                    "frequency": (num / den) if den else None,
                    "reference_bound": math.exp(-ell),
                }
            )
    return rows


def semidistance_drift_values(
    box: BoxGeometry, snapshots: list, window: int, ell: float
) -> list:
    """Per sampled time, the max semi-distance of the pivotal set to its
    own future within the window."""
    out = []
    for i, snap in enumerate(snapshots):
        worst = 0.0
        seen = False
        for j in range(i + 1, len(snapshots)):
            lag = snapshots[j]["t"] - snap["t"]
            if lag > window:
                break
            seen = True
            d = itf.hausdorff_semi_distance(
                box, snap["pivotal"], snapshots[j]["pivotal"], ell
            )
            worst = max(worst, d)
        if seen:
            out.append(
                {
                    "t": int(snap["t"]),
                    "max_dh": None if math.isinf(worst) else worst,
                    "infinite": bool(math.isinf(worst)),
                }
            )
    return out


def peierls_decay_summary(
    box: BoxGeometry,
    gamma_lengths: list,
    params: FKParams,
    n_grid: list,
) -> dict:
    """Event frequencies of long protected closed star-paths, with the
    fitted log-slope and the comparison-to-Bernoulli reference slope."""
    lengths = np.asarray(gamma_lengths, dtype=np.int64)
    n_snap = len(lengths)
    freqs = {}
    for n in n_grid:
        freqs[int(n)] = float(np.mean(lengths >= n)) if n_snap else None
    xs = [n for n in n_grid if freqs[int(n)] and freqs[int(n)] > 0]
    slope = None
    if len(xs) >= 2:
        ys = [math.log(freqs[int(n)]) for n in xs]
        slope = float(np.polyfit(xs, ys, 1)[0])
    ref = alpha(box.dim) * (1.0 - comparison_parameter(params))
    return {
        "frequencies": {str(n): freqs[int(n)] for n in n_grid},
        "n_samples": int(n_snap),
        "slope": slope,
        "reference_log_slope": math.log(ref) if ref > 0 else None,
    }


# -- the driver ---------------------------------------------------------------


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list
    summary: dict
    out_dir: str | None


def _replica_seeds(master_seed: int, replicas: int):
    root = np.random.SeedSequence(master_seed)
    return root.spawn(replicas)


def _needs_snapshots(stats) -> bool:
    return bool(
        set(stats)
        & {STAT_PIVOTAL_SPEED, STAT_SEMIDISTANCE_DRIFT}
    )


def run_replica(
    config: ExperimentConfig,
    box: BoxGeometry,
    replica: int,
    seed_seq: np.random.SeedSequence,
    snapshot_sink=None,
) -> tuple[list, CoupledState]:
    """One replica: burn in, sample on the stride, compute statistics."""
    params = config.resolved_params()
    dparams = DynamicsParams(
        params=params,
        initial=config.initial,
        burn_in=config.burn_in,
        total_steps=config.steps,
        x_boundary=BoundaryCondition(config.x_boundary),
    )
    dyn_ss, ana_ss = seed_seq.spawn(2)
    state = init_state(box, dparams, np.random.Generator(np.random.PCG64(dyn_ss)))
    ana_rng = np.random.Generator(np.random.PCG64(ana_ss))
    stride = config.stride or box.n_edges
    prov = {"seed": config.seed, "replica": replica}

    state._advance(config.burn_in, validate=config.validate_invariants)

    stats = list(config.statistics)
    want_triple = bool(
        set(stats) & {STAT_LOCALIZATION_ISING, STAT_SPIN_MISMATCH}
    )
    want_cut_series = _needs_snapshots(stats)
    peierls_edge = (
        config.peierls_edge if config.peierls_edge is not None else central_edge(box)
    )

    records: list[ObservableRecord] = []
    series: list[dict] = []
    gamma_lengths: list[int] = []

    def observer(st: CoupledState):
        out = []
        t = st.t
        if snapshot_sink is not None:
            snapshot_sink(replica, t, st.x_state, st.y_state)
        if STAT_INTERFACE_REPORT in stats:
            out.append(
                ObservableRecord(replica, t, STAT_INTERFACE_REPORT, interface_report_dict(st), prov)
            )
        if STAT_LOCALIZATION_FK in stats:
            out.append(
                ObservableRecord(replica, t, STAT_LOCALIZATION_FK, stat_localization_fk(st), prov)
            )
        if want_triple:
            triple = sp.color_triple(box, st.x_state, st.y_state, ana_rng)
            if STAT_LOCALIZATION_ISING in stats:
                out.append(
                    ObservableRecord(
                        replica, t, STAT_LOCALIZATION_ISING,
                        stat_localization_ising(box, triple), prov,
                    )
                )
            if STAT_SPIN_MISMATCH in stats:
                out.append(
                    ObservableRecord(
                        replica, t, STAT_SPIN_MISMATCH,
                        stat_spin_mismatch(box, triple), prov,
                    )
                )
        if STAT_PEIERLS_DECAY in stats:
            gamma_lengths.append(
                itf.gamma_path_length(box, st.y_state, peierls_edge, config.peierls_n_max)
            )
        if want_cut_series:
            piv = itf.pivotal_set(st)
            cuts = []
            if not st.y_index.tb_connected():
                cuts = [
                    itf.extract_minimal_cut(box, st.y_state, "T"),
                    itf.extract_minimal_cut(box, st.y_state, "B"),
                ]
            series.append({"t": t, "pivotal": piv, "cuts": cuts})
        return out

    _, obs_records = run(
        state,
        config.steps,
        observers=(observer,),
        stride=stride,
        burnin=state.t - 1,
        validate=config.validate_invariants,
    )
    records.extend(obs_records)

    final_t = state.t
    if STAT_PIVOTAL_SPEED in stats and series:
        s_grid = config.speed_s_grid or [stride * k for k in (1, 2, 4)]
        s_grid = [s for s in s_grid if s <= box.n_vertices] or [stride]
        ell_grid = config.speed_ell_grid or [1.0, 2.0, 4.0]
        rows = pivotal_speed_table(box, series, s_grid, ell_grid)
        records.append(
            ObservableRecord(replica, final_t, STAT_PIVOTAL_SPEED, rows, prov)
        )
    if STAT_SEMIDISTANCE_DRIFT in stats and series:
        window = config.drift_window or box.n_vertices
        ell = (
            config.drift_ell
            if config.drift_ell is not None
            else math.ceil(math.log(box.n_vertices))
        )
        values = semidistance_drift_values(box, series, window, ell)
        records.append(
            ObservableRecord(
                replica, final_t, STAT_SEMIDISTANCE_DRIFT,
                {"ell": float(ell), "window": int(window), "values": values}, prov,
            )
        )
    if STAT_PEIERLS_DECAY in stats:
        n_grid = list(range(2, config.peierls_n_max + 1))
        summary = peierls_decay_summary(box, gamma_lengths, params, n_grid)
        summary["edge"] = int(peierls_edge)
        records.append(
            ObservableRecord(replica, final_t, STAT_PEIERLS_DECAY, summary, prov)
        )
    return records, state


def _flatten_scalars(stat: str, value) -> dict:
    if isinstance(value, dict):
        return {
            f"{stat}.{k}": v
            for k, v in value.items()
            if isinstance(v, (int, float)) and not isinstance(v, bool)
        }
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return {stat: value}
    return {}


def summarize(records: list, config: ExperimentConfig) -> dict:
    """Per-statistic aggregates with replica-bootstrap confidence bands."""
    per_key: dict[str, dict[int, list]] = {}
    for rec in records:
        for key, v in _flatten_scalars(rec.stat, rec.value).items():
            per_key.setdefault(key, {}).setdefault(rec.replica, []).append(float(v))
    rng = np.random.default_rng(np.random.SeedSequence((config.seed, 0xB007)))
    out = {}
    for key in sorted(per_key):
        replica_means = [float(np.mean(vs)) for _, vs in sorted(per_key[key].items())]
        values = np.concatenate([vs for _, vs in sorted(per_key[key].items())])
        entry = {
            "mean": float(np.mean(values)),
            "n": int(len(values)),
            "replica_means": replica_means,
        }
        if len(replica_means) >= 2:
            draws = rng.choice(replica_means, size=(500, len(replica_means)), replace=True)
            boots = draws.mean(axis=1)
            entry["ci95"] = [float(np.quantile(boots, 0.025)), float(np.quantile(boots, 0.975))]
        out[key] = entry
    return out


def run_experiment(config: ExperimentConfig, write_snapshots: bool = False) -> ExperimentResult:
    """Run all replicas sequentially and write the result files.

    Outputs under the configured directory: config.json (echo),
    records.jsonl (versioned header plus one record per line),
    summary.json, and per-replica final checkpoints.  Everything is
    deterministic in the master seed.
    """
    config = config.validated()
    box = config.build_box()
    out_dir = config.out_dir or os.environ.get("FKCOUPLING_OUT")
    seeds = _replica_seeds(config.seed, config.replicas)

    sink = None
    snapshot_files = {}
    if write_snapshots:
        if out_dir is None:
            raise ConfigError("snapshot dump needs an output directory")
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        def sink(replica, t, x_state, y_state):  # noqa: E306
            fh = snapshot_files.get(replica)
            if fh is None:
                fh = open(Path(out_dir) / f"snapshots_r{replica}.jsonl", "w", encoding="ascii")
                fh.write(json.dumps({"format": "fkcoupling-snapshots", "version": 1}, sort_keys=True) + "\n")
                snapshot_files[replica] = fh
            fh.write(
                json.dumps(
                    {
                        "replica": replica,
                        "step": int(t),
                        "x": "".join(str(int(v)) for v in x_state),
                        "y": "".join(str(int(v)) for v in y_state),
                    },
                    sort_keys=True,
                )
                + "\n"
            )

    all_records: list[ObservableRecord] = []
    final_states = []
    try:
        for r in range(config.replicas):
            recs, state = run_replica(config, box, r, seeds[r], snapshot_sink=sink)
            all_records.extend(recs)
            final_states.append(state)
    finally:
        for fh in snapshot_files.values():
            fh.close()

    summary = {
        "box": {"dim": config.dim, "side": config.side, "n_vertices": box.n_vertices,
                "n_edges": box.n_edges},
        "params": {"p": config.resolved_params().p, "q": config.q},
        "violations": {
            k: int(sum(s.violations[k] for s in final_states))
            for k in ("dominance", "disconnection", "threshold_order")
        },
        "stats": summarize(all_records, config),
    }

    if out_dir is not None:
        outp = Path(out_dir)
        outp.mkdir(parents=True, exist_ok=True)
        with open(outp / "config.json", "w", encoding="ascii") as fh:
            json.dump(config.to_dict(), fh, sort_keys=True, indent=1)
            fh.write("\n")
        with open(outp / "records.jsonl", "w", encoding="ascii") as fh:
            fh.write(json.dumps(RECORDS_HEADER, sort_keys=True) + "\n")
            for rec in all_records:
                fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")
        with open(outp / "summary.json", "w", encoding="ascii") as fh:
            json.dump(summary, fh, sort_keys=True, indent=1)
            fh.write("\n")
        for r, state in enumerate(final_states):
            save_checkpoint(state, outp / f"checkpoint_r{r}.json")

    return ExperimentResult(config=config, records=all_records, summary=summary, out_dir=out_dir)


def analyze_snapshots(config: ExperimentConfig, snapshot_path) -> list:
    """Recompute per-snapshot statistics from a snapshot dump.

    Uses the same per-replica analysis seed stream as the original run,
    so colorings (and therefore records) reproduce exactly.
    """
    config = config.validated()
    box = config.build_box()
    rows = []
    with open(snapshot_path, "r", encoding="ascii") as fh:
        header = json.loads(fh.readline())
        if header.get("format") != "fkcoupling-snapshots":
            raise ConfigError(f"{snapshot_path} is not a snapshot dump")
        for line in fh:
            rows.append(json.loads(line))
    if not rows:
        return []
    replica = rows[0]["replica"]
    seeds = _replica_seeds(config.seed, config.replicas)
    _, ana_ss = seeds[replica].spawn(2)
    ana_rng = np.random.Generator(np.random.PCG64(ana_ss))
    prov = {"seed": config.seed, "replica": replica, "recomputed": True}

    class _Snap:
        def __init__(self, box, x, y, t):
            self.box = box
            self.x_state = x
            self.y_state = y
            self.t = t

        @property
        def y_index(self):
            from .connectivity import ClusterIndex
            return ClusterIndex(self.box, self.y_state, BoundaryCondition.TB)

    records = []
    stats = list(config.statistics)
    for row in rows:
        x = np.frombuffer(row["x"].encode("ascii"), dtype=np.uint8) - ord("0")
        y = np.frombuffer(row["y"].encode("ascii"), dtype=np.uint8) - ord("0")
        st = _Snap(box, x, y, int(row["step"]))
        if STAT_INTERFACE_REPORT in stats:
            records.append(
                ObservableRecord(replica, st.t, STAT_INTERFACE_REPORT, interface_report_dict(st), prov)
            )
        if STAT_LOCALIZATION_FK in stats:
            records.append(
                ObservableRecord(replica, st.t, STAT_LOCALIZATION_FK, stat_localization_fk(st), prov)
            )
        if set(stats) & {STAT_LOCALIZATION_ISING, STAT_SPIN_MISMATCH}:
            triple = sp.color_triple(box, x, y, ana_rng)
            if STAT_LOCALIZATION_ISING in stats:
                records.append(
                    ObservableRecord(replica, st.t, STAT_LOCALIZATION_ISING,
                                     stat_localization_ising(box, triple), prov)
                )
            if STAT_SPIN_MISMATCH in stats:
                records.append(
                    ObservableRecord(replica, st.t, STAT_SPIN_MISMATCH,
                                     stat_spin_mismatch(box, triple), prov)
                )
    return records
