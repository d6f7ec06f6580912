"""Command-line pipelines: simulate, extract, train, predict, evaluate,
importance.

Every subcommand is deterministic given its flags and config file; seeds
default to fixed constants. Exit codes: 0 success, 1 data error, 2 usage
error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import evaluate, learn, simulate, traceio
from .errors import HasProfilerError
from .features import WindowConfig, extract_samples, concat_datasets
from .packets import build_flows

DEFAULT_SEED = 1234


def _load_config(path) -> dict[str, str]:
    cfg = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        cfg[key.strip()] = value.strip()
    return cfg


def _window_config(args) -> WindowConfig:
    cfg = _load_config(args.config) if args.config else {}
    ts = args.ts if args.ts is not None else float(cfg.get("ts", 1.0))
    tw = args.tw if args.tw is not None else cfg.get("tw", "1,5,10,20")
    if isinstance(tw, str):
        tw = tuple(float(x) for x in tw.split(","))
    h_t = args.h_t if args.h_t is not None else float(cfg.get("h_t", 0.1))
    h_s = args.h_s if args.h_s is not None else int(cfg.get("h_s", 100))
    return WindowConfig(sampling_period_s=ts, window_durations_s=tw,
                        iat_threshold_s=h_t, ul_size_threshold_bytes=h_s)


def _config_int(args, cfg_key: str, arg_value, default: int) -> int:
    if arg_value is not None:
        return arg_value
    cfg = _load_config(args.config) if args.config else {}
    return int(cfg.get(cfg_key, default))


def _add_window_flags(parser):
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--ts", type=float, help="sampling period (s)")
    parser.add_argument("--tw", help="comma-separated window durations (s)")
    parser.add_argument("--h-t", dest="h_t", type=float,
                        help="DLload IAT threshold (s)")
    parser.add_argument("--h-s", dest="h_s", type=int,
                        help="ULnPckts size threshold (bytes)")


def cmd_simulate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = []
    for rep in range(args.reps):
        seed = args.seed + rep
        if args.scenario in simulate.SCENARIO_IDS:
            script = simulate.make_scenario_script(
                args.scenario, seed, video_duration_s=args.video_duration,
                vbr_sigma=args.vbr_sigma)
            trace = simulate.simulate_has(script)
        elif args.scenario == "download":
            trace = simulate.simulate_download(args.video_duration, seed=seed)
        elif args.scenario == "web":
            trace = simulate.simulate_web(args.video_duration, seed=seed)
        else:
            raise SystemExit(2)
        entry = simulate.write_trace(trace, out, f"{args.scenario}-r{rep}")
        entry["seed"] = seed
        manifest.append(entry)
        print(f"wrote {entry['trace']} ({len(trace.packets)} packets)")
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return 0


def cmd_extract(args) -> int:
    cfg = _window_config(args)
    parts = []
    for trace_path in args.traces:
        trace_path = Path(trace_path)
        label_path = Path(str(trace_path).replace(".packets.csv",
                                                  ".labels.csv")) \
            if args.labels is None else Path(args.labels)
        if not label_path.exists():
            print(f"error: label file {label_path} not found", file=sys.stderr)
            return 1
        meta, packets = traceio.read_packet_csv(trace_path)
        labels = traceio.read_labels(label_path)
        family = ("HAS", "NonHAS") if args.task == "flow" else \
            ("Filling", "Steady", "Depleting", "Unclear")
        labels = [iv for iv in labels if iv.label in family]
        scenario = meta.trace_id.split("-")[0] if meta.trace_id else None
        ds = extract_samples(packets, meta.client_ip, labels, cfg,
                             scenario=scenario)
        if ds.n_samples == 0:
            print(f"warning: no samples from {trace_path.name}",
                  file=sys.stderr)
        parts.append(ds)
    ds = concat_datasets(parts)
    traceio.write_dataset_csv(ds, args.out)
    print(f"wrote {args.out}: {ds.n_samples} samples x {ds.n_features} "
          f"features")
    return 0


def _model_spec(args) -> evaluate.ModelSpec:
    return evaluate.ModelSpec(
        kind=args.model,
        n_trees=_config_int(args, "n_trees", args.n_trees, 30),
        knn_k=_config_int(args, "knn_k", args.knn_k, 1),
        seed=_config_int(args, "seed", args.seed, DEFAULT_SEED))


def cmd_train(args) -> int:
    ds = traceio.read_dataset_csv(args.dataset)
    model = _model_spec(args).train(ds)
    learn.save_model(model, args.out)
    print(f"trained {args.model} on {ds.n_samples} samples -> {args.out}")
    return 0


def cmd_predict(args) -> int:
    model = learn.load_model(args.model_file)
    meta, packets = traceio.read_packet_csv(args.trace)
    cfg = _window_config(args)
    flows = build_flows(packets, meta.client_ip)
    ts = cfg.sampling_period_s
    from .features import feature_vector
    end = max((p.time for p in packets), default=0.0)
    for i in range(1, int(np.ceil(end / ts)) + 1):
        t_w = i * ts
        for key in sorted(flows, key=lambda k: k.to_string()):
            flow = flows[key]
            times = flow.arrays()[0]
            lo = np.searchsorted(times, t_w - ts, side="left")
            hi = np.searchsorted(times, t_w, side="left")
            if hi == lo:
                continue    # empty second, never predicted
            x = np.asarray(feature_vector(flow, t_w, cfg).values)
            code = int(evaluate.predict_batch(model, x.reshape(1, -1))[0])
            print(f"{t_w:g},{key.to_string()},{model.class_names[code]}")
    return 0


def cmd_evaluate(args) -> int:
    ds = traceio.read_dataset_csv(args.dataset)
    spec = _model_spec(args)
    k = _config_int(args, "k", args.k, 10)
    report = evaluate.cross_validate(ds, spec, k=k, seed=spec.seed)
    report.runtime = evaluate.benchmark(spec, ds,
                                        repetitions=args.benchmark_reps)
    print(f"{args.model}, {k}-fold cross-validation, "
          f"N={ds.n_samples}, M={ds.n_features}")
    print(f"overall accuracy: {report.overall_accuracy:.4f}")
    print(report.pooled.to_text())
    if report.per_scenario:
        print("per-scenario accuracy:")
        for tag, acc in report.per_scenario.items():
            print(f"  {tag}: {acc:.4f}")
    rt = report.runtime
    print(f"training time: mean {rt.train_mean_s:.3f} s, "
          f"std {rt.train_std_s:.3f} s")
    print(f"prediction time per 1000 samples: "
          f"mean {rt.predict_per_1000_mean_ms:.2f} ms, "
          f"std {rt.predict_per_1000_std_ms:.2f} ms")
    for note in report.warnings:
        print(f"warning: {note}", file=sys.stderr)
    if args.report:
        Path(args.report).write_text(report.to_json())
    return 0


def cmd_importance(args) -> int:
    ds = traceio.read_dataset_csv(args.dataset)
    spec = _model_spec(args)
    model = spec.train(ds)
    if not isinstance(model, learn.ForestModel):
        print("error: importance requires a forest model", file=sys.stderr)
        return 1
    result = learn.permutation_importance(model, ds, seed=spec.seed)
    if result.degenerate:
        print("warning: all raw importances <= 0; scores unnormalized",
              file=sys.stderr)
    order = np.argsort(-result.scores)
    for idx in order:
        print(f"{ds.feature_names[idx]:>16} {result.scores[idx]:8.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hasprofiler",
        description="HAS traffic profiling: simulate, extract features, "
                    "train and evaluate flow/buffer-state classifiers")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate labeled traces")
    p.add_argument("--scenario", required=True,
                   choices=list(simulate.SCENARIO_IDS) + ["download", "web"])
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--video-duration", type=float, default=420.0)
    p.add_argument("--vbr-sigma", type=float, default=0.2)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("extract", help="compute features from traces")
    p.add_argument("traces", nargs="+", help="packet CSV files")
    p.add_argument("--labels", help="label file (default: per-trace twin)")
    p.add_argument("--task", choices=["flow", "buffer"], default="flow")
    p.add_argument("--out", required=True)
    _add_window_flags(p)
    p.set_defaults(func=cmd_extract)

    for name, fn in [("train", cmd_train), ("evaluate", cmd_evaluate),
                     ("importance", cmd_importance)]:
        p = sub.add_parser(name)
        p.add_argument("--dataset", required=True)
        p.add_argument("--model", choices=["forest", "knn", "tree"],
                       default="forest")
        p.add_argument("--n-trees", dest="n_trees", type=int)
        p.add_argument("--knn-k", dest="knn_k", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--config")
        if name == "train":
            p.add_argument("--out", required=True)
        if name == "evaluate":
            p.add_argument("--k", type=int)
            p.add_argument("--report", help="write JSON report here")
            p.add_argument("--benchmark-reps", type=int, default=3)
        p.set_defaults(func=fn)

    p = sub.add_parser("predict", help="per-second predictions for a trace")
    p.add_argument("--model-file", required=True)
    p.add_argument("--trace", required=True)
    _add_window_flags(p)
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except HasProfilerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
