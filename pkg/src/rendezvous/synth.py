"""Synthetic road networks, gapped trajectories and staged ground truth.

Objects come in encounters of two. A staged (positive) encounter routes both
objects to a common node where they dwell together for at least ``TO``; a
negative encounter places them so that even at the fastest speed the network
allows, no node is shared for ``TO``. Objects never move faster than the
slowest traffic any trace reports, so every travel time a detector derives
from the traces is a lower bound on the object's real travel time.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra as sp_dijkstra
from scipy.spatial import Delaunay

from rendezvous.config import ConfigError, Params
from rendezvous.detect import DETECTORS, npe, prism_candidates, run_detector, score
from rendezvous.gaps import Trajectory, extract_gaps, pair_gaps
from rendezvous.network import HistoricTraces, SpatialNetwork, write_network

log = logging.getLogger(__name__)

AXES = ("objects", "nodes", "emp", "speed", "TO")
_PAD_S = 60.0
_MAX_RETRIES = 200


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    network: str = "grid"
    nodes: int = 400
    extent_m: float = 20000.0
    objects: int = 100
    emp_range: tuple[float, float] = (1800.0, 3600.0)
    ms_range: tuple[float, float] = (1.0, 2.0)
    injection_rate: float = 0.5
    to_s: float = 600.0
    slices: int = 16
    tau: float = 0.25
    congestion: float = 0.0
    horizon_s: float | None = None
    trace_step_s: float = 120.0

    def __post_init__(self):
        object.__setattr__(self, "emp_range", tuple(float(v) for v in self.emp_range))
        object.__setattr__(self, "ms_range", tuple(float(v) for v in self.ms_range))
        if self.network not in ("grid", "random-planar"):
            raise ConfigError(f"network must be 'grid' or 'random-planar', got {self.network!r}")
        if self.nodes < 4 or self.objects < 2 or self.objects % 2:
            raise ConfigError("need at least 4 nodes and an even object count >= 2")
        lo, hi = self.emp_range
        if not 0 < lo <= hi:
            raise ConfigError("emp_range must satisfy 0 < lo <= hi")
        if not lo > 1.2 * self.to_s:
            raise ConfigError("emp_range lower bound must exceed 1.2 * TO so a dwell fits inside a gap")
        vlo, vhi = self.ms_range
        if not 0 < vlo <= vhi:
            raise ConfigError("ms_range must satisfy 0 < lo <= hi")
        if not 0 <= self.injection_rate <= 1:
            raise ConfigError("injection_rate must lie in [0, 1]")
        if not 0 <= self.congestion < 1:
            raise ConfigError("congestion must lie in [0, 1)")
        if self.extent_m <= 0 or self.to_s <= 0 or self.trace_step_s <= 0:
            raise ConfigError("extent, TO and trace step must be positive")
        if self.slices < 2:
            raise ConfigError("slices must be >= 2")

    @property
    def horizon(self) -> float:
        if self.horizon_s is not None:
            return float(self.horizon_s)
        return max(4 * 3600.0, self.objects * 400.0)

    @property
    def object_speed(self) -> float:
        """Upper bound on object speed: the slowest speed any trace can report."""
        return self.ms_range[0] * (1 - self.congestion)

    def params(self, **overrides) -> Params:
        """Detector parameters matching this scenario."""
        p = Params(
            theta_s=self.emp_range[0],
            ms=self.ms_range[1],
            slices=self.slices,
            tau=self.tau,
            to_s=self.to_s,
            default_speed=self.ms_range[1],
        )
        return p.with_(**overrides) if overrides else p

    def to_dict(self) -> dict:
        d = asdict(self)
        d["emp_range"] = list(self.emp_range)
        d["ms_range"] = list(self.ms_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        return cls(**d)


@dataclass
class Scenario:
    config: ScenarioConfig
    net: SpatialNetwork
    trajectories: list[Trajectory]
    traces: HistoricTraces
    truth: set[tuple[str, int]]
    labeled_pairs: dict[str, int]
    staged: list[dict] = field(default_factory=list)

    def params(self, **overrides) -> Params:
        return self.config.params(**overrides)


def make_network(kind: str, n: int, extent: float, rng: np.random.Generator) -> SpatialNetwork:
    if kind == "grid":
        side = max(2, int(round(math.sqrt(n))))
        pitch = extent / (side - 1)
        ii, jj = np.meshgrid(np.arange(side), np.arange(side))
        xy = np.column_stack([ii.ravel() * pitch, jj.ravel() * pitch])
        ids = np.arange(side * side)
        right = ids[(ids % side) < side - 1]
        up = ids[ids < side * (side - 1)]
        ef = np.concatenate([right, up])
        et = np.concatenate([right + 1, up + side])
    else:
        xy = rng.uniform(0, extent, size=(n, 2))
        tri = Delaunay(xy)
        s = tri.simplices
        e = np.sort(np.vstack([s[:, [0, 1]], s[:, [1, 2]], s[:, [0, 2]]]), axis=1)
        e = np.unique(e, axis=0)
        ef, et = e[:, 0], e[:, 1]
        ids = np.arange(n)
    length = np.hypot(*(xy[et] - xy[ef]).T)
    return SpatialNetwork(ids, xy, ef, et, length)


def _graph(net: SpatialNetwork, weights: np.ndarray) -> csr_matrix:
    n = net.n_nodes
    return csr_matrix((weights, (net.arc_src, net.arc_dst)), shape=(n, n))


def _edge_speed(cfg: ScenarioConfig, base: np.ndarray, phase: np.ndarray, t) -> np.ndarray:
    period = 2 * 3600.0
    g = 0.5 * (1 - np.cos(2 * np.pi * np.asarray(t) / period + phase))
    return base * (1 - cfg.congestion * g)


def _make_traces(cfg: ScenarioConfig, net: SpatialNetwork, rng: np.random.Generator) -> HistoricTraces:
    """One probe record per edge midpoint every ``trace_step_s`` seconds."""
    lo, hi = cfg.ms_range
    ne = len(net.edge_from)
    base = rng.uniform(lo, hi, size=ne)
    mid = 0.5 * (net.xy[net.edge_from] + net.xy[net.edge_to])
    phase = 2 * np.pi * mid[:, 0] / cfg.extent_m
    times = np.arange(0.0, cfg.horizon + cfg.trace_step_s, cfg.trace_step_s)
    speed = _edge_speed(cfg, base[None, :], phase[None, :], times[:, None])
    t = np.repeat(times, ne)
    xy = np.tile(mid, (len(times), 1))
    oid = np.array([f"probe{e:05d}" for e in range(ne)])[np.tile(np.arange(ne), len(times))]
    return HistoricTraces(oid, t, xy, speed.ravel())


class _Planner:
    """Route lengths on the unweighted-by-time network (lengths only)."""

    def __init__(self, net: SpatialNetwork, fastest: float):
        self.net = net
        self.length_graph = _graph(net, net.arc_length)
        self.fastest = fastest
        self._cache: dict[int, np.ndarray] = {}

    def dist(self, node: int) -> np.ndarray:
        d = self._cache.get(node)
        if d is None:
            d = sp_dijkstra(self.length_graph, directed=True, indices=node)
            self._cache[node] = d
        return d

    def dist_to(self, node: int) -> np.ndarray:
        if self.net.directed:
            return sp_dijkstra(self.length_graph.T.tocsr(), directed=True, indices=node)
        return self.dist(node)


def _plan_object(rng, planner: _Planner, meet: int, T0: float, dwell_end: float, cfg: ScenarioConfig):
    """Start/end nodes and gap times for an object that sits at ``meet`` over [T0, dwell_end]."""
    v = cfg.object_speed * rng.uniform(0.7, 1.0)
    D = rng.uniform(*cfg.emp_range)
    spare = D - (dwell_end - T0)
    if spare <= 0:
        return None
    wait = rng.uniform(0, 0.1 * spare)
    reach = (spare - wait) * v
    d_from = planner.dist_to(meet)
    d_to = planner.dist(meet)
    starts = np.nonzero(d_from <= 0.5 * reach)[0]
    ends = np.nonzero(d_to <= 0.5 * reach)[0]
    s = int(rng.choice(starts))
    e = int(rng.choice(ends))
    tau1 = d_from[s] / v
    t_s = T0 - wait - tau1
    t_e = t_s + D
    arrive = t_s + tau1
    leave = t_e - d_to[e] / v
    return {"start": s, "end": e, "t_s": float(t_s), "t_e": float(t_e), "arrive": float(arrive),
            "leave": float(leave), "speed": float(v), "meet": meet}


def fastest_overlap(planner: _Planner, a: dict, b: dict) -> float:
    """Largest availability overlap over all nodes under the fastest possible speeds."""
    f = planner.fastest
    ea_a = a["t_s"] + planner.dist(a["start"]) / f
    ld_a = a["t_e"] - planner.dist_to(a["end"]) / f
    ea_b = b["t_s"] + planner.dist(b["start"]) / f
    ld_b = b["t_e"] - planner.dist_to(b["end"]) / f
    ok = (ea_a <= ld_a) & (ea_b <= ld_b)
    if not ok.any():
        return -math.inf
    ov = np.minimum(ld_a, ld_b) - np.maximum(ea_a, ea_b)
    return float(ov[ok].max())


def generate(cfg: ScenarioConfig, out_dir: str | Path | None = None) -> Scenario:
    """Build a scenario; with ``out_dir`` also write it as CSV/JSON files."""
    rng = np.random.default_rng(cfg.seed)
    net = make_network(cfg.network, cfg.nodes, cfg.extent_m, rng)
    traces = _make_traces(cfg, net, rng)
    planner = _Planner(net, cfg.ms_range[1])
    n_enc = cfg.objects // 2
    width = len(str(cfg.objects - 1))
    lo_t = cfg.emp_range[1] + _PAD_S
    hi_t = cfg.horizon - cfg.emp_range[1] - _PAD_S
    if hi_t <= lo_t:
        raise ConfigError("horizon too short for the gap durations")
    trajs, truth, labeled, staged = [], set(), {}, []
    for k in range(n_enc):
        oa, ob = f"o{2 * k:0{width}d}", f"o{2 * k + 1:0{width}d}"
        pid = f"{oa}#0|{ob}#0"
        positive = rng.random() < cfg.injection_rate
        for _ in range(_MAX_RETRIES):
            T0 = rng.uniform(lo_t, hi_t)
            meet = int(rng.integers(net.n_nodes))
            if positive:
                dwell_end = T0 + cfg.to_s * rng.uniform(1.05, 1.2)
                a = _plan_object(rng, planner, meet, T0, dwell_end, cfg)
                b = _plan_object(rng, planner, meet, T0, dwell_end, cfg)
            else:
                other = int(rng.integers(net.n_nodes))
                T1 = T0 + rng.uniform(-0.5, 0.5) * cfg.emp_range[0]
                a = _plan_object(rng, planner, meet, T0, T0 + rng.uniform(0, cfg.to_s), cfg)
                b = _plan_object(rng, planner, other, T1, T1 + rng.uniform(0, cfg.to_s), cfg)
            if a is None or b is None:
                continue
            if not positive and fastest_overlap(planner, a, b) >= cfg.to_s:
                continue
            break
        else:
            raise ConfigError(f"could not stage encounter {k} after {_MAX_RETRIES} attempts")
        for oid, plan in ((oa, a), (ob, b)):
            ps, pe = net.xy[plan["start"]], net.xy[plan["end"]]
            t = [plan["t_s"] - _PAD_S, plan["t_s"], plan["t_e"], plan["t_e"] + _PAD_S]
            trajs.append(Trajectory(oid, t, [ps, ps, pe, pe]))
        labeled[pid] = int(positive)
        if positive:
            truth.add((pid, int(net.node_ids[meet])))
        staged.append({"pair_id": pid, "label": int(positive), "a": a, "b": b})
    sc = Scenario(cfg, net, trajs, traces, truth, labeled, staged)
    if out_dir is not None:
        write_scenario(sc, out_dir)
    return sc


def _fmt(v: float) -> str:
    return repr(float(v))


def write_scenario(sc: Scenario, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_network(sc.net, out / "nodes.csv", out / "edges.csv")
    with open(out / "trajectories.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["object_id", "t_unix_s", "x", "y"])
        for tr in sc.trajectories:
            for t, (x, y) in zip(tr.t, tr.xy):
                w.writerow([tr.object_id, _fmt(t), _fmt(x), _fmt(y)])
    tr = sc.traces
    buf = io.StringIO()
    buf.write("object_id,t_unix_s,x,y,speed_mps\n")
    for o, t, (x, y), s in zip(tr.object_id.tolist(), tr.t.tolist(), tr.xy.tolist(), tr.speed.tolist()):
        buf.write(f"{o},{t!r},{x!r},{y!r},{s!r}\n")
    (out / "traces.csv").write_text(buf.getvalue())
    with open(out / "truth.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["pair_id", "node_id", "label"])
        positives = {pid: n for pid, n in sc.truth}
        for pid in sorted(sc.labeled_pairs):
            label = sc.labeled_pairs[pid]
            w.writerow([pid, positives.get(pid, "") if label else "", label])
    (out / "scenario.json").write_text(json.dumps(sc.config.to_dict(), sort_keys=True, indent=1) + "\n")
    return out


def load_truth(path: str | Path) -> tuple[set[tuple[str, int]], dict[str, int]]:
    truth, labeled = set(), {}
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            label = int(row["label"])
            labeled[row["pair_id"]] = label
            if label and row["node_id"]:
                truth.add((row["pair_id"], int(row["node_id"])))
    return truth, labeled


def evaluate(
    net: SpatialNetwork,
    trajectories: list[Trajectory],
    traces: HistoricTraces,
    truth: set[tuple[str, int]],
    labeled: dict[str, int],
    params: Params,
    detectors=DETECTORS,
) -> dict:
    """Run detectors and score them; one flat row of metrics."""
    gaps = extract_gaps(trajectories, params.theta_s, params.ms)
    pairs = pair_gaps(gaps, params.resolution)
    index = traces.index_for(net, params.trace_snap_m)
    row = {"nodes": net.n_nodes, "objects": len(trajectories), "gaps": len(gaps), "pairs": len(pairs)}
    labeled_pairs = [p for p in pairs if p.pair_id in labeled]
    universe = {(p.pair_id, n) for p in labeled_pairs for n in prism_candidates(net, p)}
    row["labeled_pairs"] = len(labeled)
    row["prism_candidates"] = len(universe)
    for d in detectors:
        rep = run_detector(d, net, index, pairs, params)
        tag = d.replace("-", "_")
        got = {(pid, n) for pid, n in rep.node_set() if pid in labeled}
        p, r, a = score(got, truth, universe)
        row[f"{tag}_npe"] = npe(net.n_nodes, len(rep.bounded_nodes()))
        row[f"{tag}_precision"] = p
        row[f"{tag}_recall"] = r
        row[f"{tag}_accuracy"] = a
        row[f"{tag}_rendezvous"] = len(rep.node_set())
        row[f"{tag}_time_s"] = rep.wall_time
        row[f"{tag}_slices"] = rep.counters.slices_processed
        row[f"{tag}_sp_runs"] = rep.counters.sp_runs
    return row


def evaluate_scenario(sc: Scenario, params: Params | None = None, detectors=DETECTORS) -> dict:
    params = params or sc.params()
    return evaluate(sc.net, sc.trajectories, sc.traces, sc.truth, sc.labeled_pairs, params, detectors)


def run_matrix(base: ScenarioConfig, axis: str, values, detectors=DETECTORS) -> list[dict]:
    """One row per axis value.

    ``objects``, ``nodes`` and ``emp`` regenerate the scenario; ``speed``
    (detection MS) and ``TO`` rerun detection on the base scenario so the
    only thing that changes along the axis is the parameter itself.
    """
    if axis not in AXES:
        raise ConfigError(f"axis must be one of {', '.join(AXES)}")
    rows = []
    shared = generate(base) if axis in ("speed", "TO") else None
    for v in values:
        t0 = time.perf_counter()
        if axis == "objects":
            sc = generate(replace(base, objects=int(v)))
            params = sc.params()
        elif axis == "nodes":
            sc = generate(replace(base, nodes=int(v)))
            params = sc.params()
        elif axis == "emp":
            lo, hi = v if isinstance(v, (tuple, list)) else (float(v), float(v) * base.emp_range[1] / base.emp_range[0])
            sc = generate(replace(base, emp_range=(lo, hi)))
            params = sc.params()
        elif axis == "speed":
            sc = shared
            params = sc.params(ms=float(v))
        else:
            sc = shared
            params = sc.params(to_s=float(v))
        row = {"axis": axis, "value": v if not isinstance(v, (tuple, list)) else f"{v[0]}-{v[1]}"}
        row.update(evaluate_scenario(sc, params, detectors))
        row["cell_time_s"] = time.perf_counter() - t0
        rows.append(row)
        log.info("matrix %s=%s done in %.1f s", axis, row["value"], row["cell_time_s"])
    return rows


def write_rows(rows: list[dict], path: str | Path) -> None:
    keys: list[str] = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
