"""Command-line entry point: ``rendezvous {detect,synth,eval,pair,bench}``.

Exit codes: 0 success, 2 validation or configuration error, 1 internal error.
Every run writes ``run.json`` into its output directory; passing it back via
``--config`` reproduces the run.
"""

from __future__ import annotations

import argparse
import json
import logging
import multiprocessing as mp
import sys
from dataclasses import replace
from pathlib import Path

from rendezvous import __version__
from rendezvous.config import ConfigError, Params
from rendezvous.detect import DETECTORS, DetectorReport, dump_geojson, run_detector
from rendezvous.gaps import extract_gaps, load_trajectories, pair_gaps
from rendezvous.network import ContractError, HistoricTraces, IngestionError, load_network, load_traces
from rendezvous.synth import AXES, ScenarioConfig, evaluate, generate, load_truth, run_matrix, write_rows

log = logging.getLogger("rendezvous")

_PARAM_FLAGS = {
    "theta_s": "theta_s",
    "slices": "slices",
    "tau": "tau",
    "to_s": "to_s",
    "ms": "ms",
    "snap_radius": "anchor_snap_m",
    "trace_snap": "trace_snap_m",
    "default_speed": "default_speed",
    "resolution": "resolution",
}


class UsageError(Exception):
    pass


def _params_args(p: argparse.ArgumentParser) -> None:
    d = Params()
    g = p.add_argument_group("detection parameters")
    g.add_argument("--theta-s", type=float, default=d.theta_s, help="minimum gap duration in seconds")
    g.add_argument("--slices", type=int, default=d.slices, help="slice count K (K+1 samples)")
    g.add_argument("--tau", type=float, default=d.tau, help="weight-drift threshold for recomputing profiles")
    g.add_argument("--to-s", type=float, default=d.to_s, help="time-overlap threshold in seconds")
    g.add_argument("--ms", type=float, default=d.ms, help="maximum speed in m/s")
    g.add_argument("--snap-radius", type=float, default=d.anchor_snap_m, help="anchor snap radius in meters")
    g.add_argument("--trace-snap", type=float, default=d.trace_snap_m, help="trace-to-edge radius in meters")
    g.add_argument("--default-speed", type=float, default=d.default_speed, help="fallback speed in m/s")
    g.add_argument("--resolution", type=int, default=d.resolution, help="polygon vertices for region tests")


def _network_args(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--network-nodes", required=required, help="nodes CSV: node_id,x,y")
    p.add_argument("--network-edges", required=required, help="edges CSV: from_id,to_id,length_m[,oneway]")
    p.add_argument("--trajectories", required=required, help="trajectory CSV: object_id,t_unix_s,x,y")
    p.add_argument("--traces", help="historic traces CSV: object_id,t_unix_s,x,y,speed_mps")
    p.add_argument("--geodetic", action="store_true", help="inputs are lon/lat; project locally")


def _scenario_args(p: argparse.ArgumentParser) -> None:
    d = ScenarioConfig()
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--network", choices=("grid", "random-planar"), default=d.network)
    p.add_argument("--nodes", type=int, default=d.nodes)
    p.add_argument("--extent-m", type=float, default=d.extent_m)
    p.add_argument("--objects", type=int, default=d.objects)
    p.add_argument("--emp-min", type=float, default=d.emp_range[0])
    p.add_argument("--emp-max", type=float, default=d.emp_range[1])
    p.add_argument("--speed-min", type=float, default=d.ms_range[0])
    p.add_argument("--speed-max", type=float, default=d.ms_range[1])
    p.add_argument("--injection-rate", type=float, default=d.injection_rate)
    p.add_argument("--to-s", type=float, default=d.to_s)
    p.add_argument("--slices", type=int, default=d.slices)
    p.add_argument("--tau", type=float, default=d.tau)
    p.add_argument("--congestion", type=float, default=d.congestion)
    p.add_argument("--horizon-s", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rendezvous", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="detect rendezvous nodes")
    _network_args(p, required=False)
    _params_args(p)
    p.add_argument("--detector", choices=DETECTORS, default="dc-tgard")
    p.add_argument("--out", required=False, help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="worker processes over gap pairs")
    p.add_argument("--config", help="run.json of an earlier run to repeat")

    p = sub.add_parser("pair", help="dump candidate gap pairs")
    _network_args(p, required=False)
    _params_args(p)
    p.add_argument("--out", help="output directory")
    p.add_argument("--config", help="run.json of an earlier run to repeat")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    _scenario_args(p)
    p.add_argument("--out", help="dataset directory (must not exist or be empty)")
    p.add_argument("--config", help="run.json of an earlier run to repeat")

    p = sub.add_parser("eval", help="score detectors on a dataset with truth labels")
    p.add_argument("--data", help="dataset directory from `synth`")
    p.add_argument("--detector", choices=DETECTORS + ("all",), default="all")
    _params_args(p)
    p.add_argument("--out", help="output directory")
    p.add_argument("--config", help="run.json of an earlier run to repeat")

    p = sub.add_parser("bench", help="run a parameter sweep over synthetic scenarios")
    _scenario_args(p)
    p.add_argument("--axis", choices=AXES, default="objects")
    p.add_argument("--values", help="comma-separated axis values")
    p.add_argument("--out", help="output directory")
    p.add_argument("--config", help="run.json of an earlier run to repeat")
    return ap


def parse_args(argv: list[str] | None) -> argparse.Namespace:
    ap = build_parser()
    args = ap.parse_args(argv)
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        saved = json.loads(path.read_text())
        if saved.get("command") != args.command:
            raise UsageError(f"{path} records a `{saved.get('command')}` run, not `{args.command}`")
        sub = ap._subparsers._group_actions[0].choices[args.command]
        sub.set_defaults(**saved["args"])
        args = ap.parse_args(argv)
    elif args.command == "eval" and args.data and (Path(args.data) / "scenario.json").is_file():
        # Detection defaults follow the scenario; explicit flags still win.
        cfg = ScenarioConfig.from_dict(json.loads((Path(args.data) / "scenario.json").read_text()))
        p = cfg.params()
        sub = ap._subparsers._group_actions[0].choices["eval"]
        sub.set_defaults(**{flag: getattr(p, f) for flag, f in _PARAM_FLAGS.items()})
        args = ap.parse_args(argv)
    if not getattr(args, "out", None):
        raise UsageError("--out is required")
    return args


def _params(args) -> Params:
    return Params().with_(**{field: getattr(args, flag) for flag, field in _PARAM_FLAGS.items()})


def _require(args, *names) -> None:
    for n in names:
        v = getattr(args, n)
        if not v:
            raise UsageError(f"--{n.replace('_', '-')} is required")
        if not Path(v).is_file():
            raise UsageError(f"file not found: {v}")


def _record(args, out: Path, extra: dict | None = None) -> None:
    saved = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose", "out")}
    for k in ("network_nodes", "network_edges", "trajectories", "traces", "data"):
        if saved.get(k):
            saved[k] = str(Path(saved[k]).resolve())
    doc = {"command": args.command, "version": __version__, "args": saved}
    if extra:
        doc.update(extra)
    (out / "run.json").write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def _load_inputs(args):
    _require(args, "network_nodes", "network_edges", "trajectories")
    if args.traces:
        _require(args, "traces")
    net = load_network(args.network_nodes, args.network_edges, geodetic=args.geodetic)
    trajs = load_trajectories(args.trajectories, net.projection)
    traces = load_traces(args.traces, net.projection) if args.traces else HistoricTraces.empty()
    return net, trajs, traces


_WORK: dict = {}


def _work(chunk):
    w = _WORK
    return run_detector(w["detector"], w["net"], w["index"], chunk, w["params"])


def _run_parallel(detector, net, index, pairs, params, jobs) -> DetectorReport:
    if jobs <= 1 or len(pairs) < 2 or "fork" not in mp.get_all_start_methods():
        return run_detector(detector, net, index, pairs, params)
    _WORK.update(detector=detector, net=net, index=index, params=params)
    chunks = [pairs[i::jobs] for i in range(jobs)]
    with mp.get_context("fork").Pool(jobs) as pool:
        parts = pool.map(_work, chunks)
    total = DetectorReport(detector)
    for part in parts:
        total.merge(part)
    total.nodes = {k: total.nodes[k] for k in sorted(total.nodes)}
    return total


def cmd_detect(args) -> int:
    params = _params(args)
    net, trajs, traces = _load_inputs(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    gaps = extract_gaps(trajs, params.theta_s, params.ms)
    pairs = pair_gaps(gaps, params.resolution)
    index = traces.index_for(net, params.trace_snap_m)
    report = _run_parallel(args.detector, net, index, pairs, params, args.jobs)
    (out / "rendezvous.geojson").write_text(dump_geojson(net, report))
    metrics = report.to_dict()
    metrics.update(gaps=len(gaps), pairs=len(pairs), params=params.to_dict())
    (out / "metrics.json").write_text(json.dumps(metrics, sort_keys=True, indent=1) + "\n")
    _record(args, out)
    log.info("%d pair(s), %d rendezvous node(s)", len(pairs), metrics["rendezvous_nodes"])
    return 0


def cmd_pair(args) -> int:
    params = _params(args)
    net, trajs, _ = _load_inputs(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pairs = pair_gaps(extract_gaps(trajs, params.theta_s, params.ms), params.resolution)
    rows = []
    for p in pairs:
        rows.append(
            {
                "pair_id": p.pair_id,
                "first_gap": p.first.gap_id,
                "second_gap": p.second.gap_id,
                "overlap_start": p.overlap_range[0],
                "overlap_end": p.overlap_range[1],
                "region_nodes": len(net.nodes_in(p.region)),
            }
        )
    (out / "pairs.json").write_text(json.dumps(rows, sort_keys=True, indent=1) + "\n")
    _record(args, out)
    return 0


def _scenario(args) -> ScenarioConfig:
    return ScenarioConfig(
        seed=args.seed,
        network=args.network,
        nodes=args.nodes,
        extent_m=args.extent_m,
        objects=args.objects,
        emp_range=(args.emp_min, args.emp_max),
        ms_range=(args.speed_min, args.speed_max),
        injection_rate=args.injection_rate,
        to_s=args.to_s,
        slices=args.slices,
        tau=args.tau,
        congestion=args.congestion,
        horizon_s=args.horizon_s,
    )


def cmd_synth(args) -> int:
    cfg = _scenario(args)
    out = Path(args.out)
    if out.exists() and (not out.is_dir() or any(out.iterdir())):
        raise UsageError(f"output directory already exists and is not empty: {out}")
    sc = generate(cfg, out)
    _record(args, out, {"detect_params": sc.params().to_dict()})
    log.info("wrote %d trajectories, %d positive label(s) to %s", len(sc.trajectories), len(sc.truth), out)
    return 0


def cmd_eval(args) -> int:
    if not args.data:
        raise UsageError("--data is required")
    data = Path(args.data)
    truth_path = data / "truth.csv"
    if not truth_path.is_file():
        raise UsageError(f"truth file not found: {truth_path}")
    for name in ("nodes.csv", "edges.csv", "trajectories.csv"):
        if not (data / name).is_file():
            raise UsageError(f"file not found: {data / name}")
    params = _params(args)
    net = load_network(data / "nodes.csv", data / "edges.csv")
    trajs = load_trajectories(data / "trajectories.csv")
    traces = load_traces(data / "traces.csv") if (data / "traces.csv").is_file() else HistoricTraces.empty()
    truth, labeled = load_truth(truth_path)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dets = DETECTORS if args.detector == "all" else (args.detector,)
    rows = [evaluate(net, trajs, traces, truth, labeled, params, dets)] if trajs else []
    write_rows(rows, out / "results.csv")
    summary = {"detectors": list(dets), "rows": len(rows)}
    if rows:
        for d in dets:
            tag = d.replace("-", "_")
            summary[d] = {k[len(tag) + 1:]: v for k, v in rows[0].items() if k.startswith(tag + "_")}
    (out / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=1, default=str) + "\n")
    _record(args, out)
    return 0


def _axis_values(axis: str, text: str | None) -> list:
    if not text:
        raise UsageError("--values is required for bench")
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--values must be numbers: {text}") from None
    return [int(v) for v in vals] if axis in ("objects", "nodes") else vals


def cmd_bench(args) -> int:
    base = _scenario(args)
    values = _axis_values(args.axis, args.values)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = run_matrix(base, args.axis, values)
    write_rows(rows, out / "matrix.csv")
    _record(args, out)
    return 0


COMMANDS = {"detect": cmd_detect, "pair": cmd_pair, "synth": cmd_synth, "eval": cmd_eval, "bench": cmd_bench}


def main(argv: list[str] | None = None) -> int:
    try:
        args = parse_args(argv)
    except UsageError as e:
        print(f"rendezvous: error: {e}", file=sys.stderr)
        return 2
    except SystemExit as e:
        return 0 if e.code in (0, None) else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError, IngestionError, ContractError, FileNotFoundError) as e:
        print(f"rendezvous: error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001
        log.exception("internal error")
        print(f"rendezvous: internal error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
