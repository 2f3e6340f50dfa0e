"""Command-line entry point: ``hierforest simulate | cluster | pipeline``.

Every option may also come from a JSON file given with ``--config`` (keys are
option names with dashes or underscores). Explicit flags win over the file,
which wins over built-in defaults. ``HIERFOREST_OUT`` sets the default output
directory. Exit status: 0 success, 1 runtime or data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from .dataset import DatasetError
from .forest import ForestConfig, ForestError
from .text_cluster import ClusterError, LINKAGES, MODES, cluster_labels, read_labels
from . import pipeline, simulate, svg

log = logging.getLogger("hierforest")


class UsageError(Exception):
    pass


DEFAULTS = {
    "simulate": {"scenario": "all", "n": 500, "b": 100, "noise_sd": 1.0, "n_trees": 500,
                 "mtry_rule": "round", "feed": "oob", "level": 0.9, "threads": 1, "seed": None},
    "cluster": {"column": None, "k": None, "k_max": 10, "mode": "soundex-jw",
                "linkage": "average", "input": None},
    "synth": {"n": 20000, "seed": None, "link": 0.9, "start": "2009-01-01", "end": "2014-12-31"},
    "reason": {"input": None, "seed": None, "n_trees": 100, "min_node_size": 10,
               "proxies": ",".join(pipeline.PipelineConfig.proxies), "reason_k": 6,
               "clothing_k": 10, "train_fraction": 0.8, "threads": 1},
    "occurrence": {"input": None, "seed": None, "n_trees": 100, "min_node_size": 10,
                   "proxies": ",".join(pipeline.PipelineConfig.proxies), "reason_k": 6,
                   "clothing_k": 10, "train_fraction": 0.8, "cutoff": "2014-01-01",
                   "level": 0.9, "district": None, "threads": 1},
}
SEEDED = {"simulate", "synth", "reason", "occurrence"}


def _common(p):
    p.add_argument("--out", help="output directory (default: $HIERFOREST_OUT or ./out)")
    p.add_argument("--config", help="JSON file of option values")
    p.add_argument("--threads", type=int, help="worker threads (results do not depend on it)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hierforest", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="Monte Carlo comparison of the two forest arms")
    s.add_argument("--scenario", choices=simulate.SCENARIOS + ("all",))
    s.add_argument("--n", type=int, help="train and test size per replicate")
    s.add_argument("--b", type=int, help="number of replicates")
    s.add_argument("--seed", type=int)
    s.add_argument("--noise-sd", type=float)
    s.add_argument("--n-trees", type=int)
    s.add_argument("--mtry-rule", choices=("floor", "round"))
    s.add_argument("--feed", choices=("oob", "in-sample"))
    s.add_argument("--level", type=float, help="prediction-interval level")
    _common(s)

    c = sub.add_parser("cluster", help="phonetic clustering of free-text labels")
    c.add_argument("--input", help="CSV file of labels")
    c.add_argument("--column", help="label column (default: first)")
    c.add_argument("--k", type=int, help="force the number of clusters")
    c.add_argument("--k-max", type=int, help="largest k considered by the elbow rule")
    c.add_argument("--mode", choices=MODES)
    c.add_argument("--linkage", choices=LINKAGES)
    _common(c)

    p = sub.add_parser("pipeline", help="field-interview workflow")
    psub = p.add_subparsers(dest="step", required=True)
    ps = psub.add_parser("synth", help="write synthetic interview records")
    ps.add_argument("--n", type=int)
    ps.add_argument("--seed", type=int)
    ps.add_argument("--link", type=float, help="proxy-to-race link strength in [0, 1]")
    ps.add_argument("--start")
    ps.add_argument("--end")
    _common(ps)
    for name, helptext in (("reason", "incident-reason accuracy, hier vs naive"),
                           ("occurrence", "daily-count forecast, hier vs naive")):
        q = psub.add_parser(name, help=helptext)
        q.add_argument("--input", help="records CSV")
        q.add_argument("--seed", type=int)
        q.add_argument("--n-trees", type=int)
        q.add_argument("--min-node-size", type=int, help="classification forests")
        q.add_argument("--proxies", help="comma-separated proxy columns for race")
        q.add_argument("--reason-k", type=int)
        q.add_argument("--clothing-k", type=int)
        q.add_argument("--train-fraction", type=float)
        if name == "occurrence":
            q.add_argument("--cutoff", help="first test date (YYYY-MM-DD)")
            q.add_argument("--level", type=float)
            q.add_argument("--district", help="forecast one district instead of the city")
        _common(q)
    return ap


def resolve(args) -> argparse.Namespace:
    """Merge flags over the config file over defaults."""
    key = args.step if args.command == "pipeline" else args.command
    conf = {}
    if args.config:
        try:
            conf = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(conf, dict):
            raise UsageError("config file must hold a JSON object")
        conf = {k.replace("-", "_"): v for k, v in conf.items()}
        unknown = set(conf) - set(DEFAULTS[key]) - {"out"}
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    merged = dict(DEFAULTS[key])
    merged["out"] = os.environ.get("HIERFOREST_OUT") or "out"
    merged.update(conf)
    for k, v in vars(args).items():
        if v is not None:
            merged[k] = v
    if key in SEEDED and merged.get("seed") is None:
        raise UsageError("--seed is required")
    if merged.get("threads") is not None and merged["threads"] < 1:
        raise UsageError("--threads must be at least 1")
    return argparse.Namespace(**merged)


def _out(a) -> Path:
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(a) -> int:
    if a.n < 10 or a.b < 1 or a.n_trees < 1:
        raise UsageError("need --n >= 10, --b >= 1 and --n-trees >= 1")
    if a.noise_sd <= 0 or not 0 < a.level < 1:
        raise UsageError("need --noise-sd > 0 and 0 < --level < 1")
    out = _out(a)
    cfg = replace(simulate.STUDY_FOREST, n_trees=a.n_trees, mtry_rule=a.mtry_rule)
    scenarios = simulate.SCENARIOS if a.scenario == "all" else (a.scenario,)
    for sc in scenarios:
        spec = simulate.ScenarioSpec(sc, n=a.n, b=a.b, noise_sd=a.noise_sd, seed=a.seed)
        res = simulate.run_study(spec, cfg, cfg, cfg, feed=a.feed, level=a.level, threads=a.threads)
        path = simulate.write_table(res, out / f"{sc}_table.csv")
        simulate.plot_predictions(res, out)
        print(f"{sc}: wrote {path}")
        for row in simulate.table_rows(res):
            print("  " + ", ".join(f"{k}={v}" for k, v in row.items() if k != "scenario"))
    return 0


def cmd_cluster(a) -> int:
    if a.input is None:
        raise UsageError("--input is required")
    if a.k is not None and a.k <= 0:
        raise UsageError("--k must be positive")
    if a.k_max < 3:
        raise UsageError("--k-max must be at least 3")
    labels = read_labels(a.input, a.column)
    if not labels:
        raise ClusterError("no labels found")
    model = cluster_labels(labels, k=a.k, k_max=a.k_max, mode=a.mode, linkage=a.linkage)
    out = _out(a)
    model.write_assignments(out / "assignments.csv")
    model.write_curve(out / "elbow_curve.csv")
    model.write_dendrogram(out / "dendrogram.svg")
    if model.curve is not None:
        ks = list(range(1, len(model.curve) + 1))
        svg.curve_plot(out / "elbow.svg", ks, {"within-cluster cost": model.curve},
                       title="elbow curve", xlabel="k", ylabel="medoid cost", mark=model.k)
    how = "forced" if a.k is not None else "elbow"
    print(f"k={model.k} ({how}) for {len(labels)} labels; wrote {out / 'assignments.csv'}")
    return 0


def _pipeline_cfg(a) -> pipeline.PipelineConfig:
    proxies = tuple(p for p in a.proxies.split(",") if p) if isinstance(a.proxies, str) else tuple(a.proxies)
    if not proxies:
        raise UsageError("--proxies must name at least one column")
    if a.n_trees < 1 or a.min_node_size < 1:
        raise UsageError("--n-trees and --min-node-size must be positive")
    if not 0 < a.train_fraction < 1:
        raise UsageError("--train-fraction must lie in (0, 1)")
    if a.reason_k < 1 or a.clothing_k < 1:
        raise UsageError("cluster counts must be positive")
    extra = {}
    if hasattr(a, "cutoff"):
        extra = {"cutoff": a.cutoff, "level": a.level, "district": a.district}
    return pipeline.PipelineConfig(reason_k=a.reason_k, clothing_k=a.clothing_k, proxies=proxies,
                                   n_trees=a.n_trees, min_node_size_class=a.min_node_size,
                                   train_fraction=a.train_fraction, **extra)


def cmd_synth(a) -> int:
    if a.n < 1:
        raise UsageError("--n must be positive")
    if not 0 <= a.link <= 1:
        raise UsageError("--link must lie in [0, 1]")
    rec = pipeline.synth_generate(pipeline.SynthSpec(n=a.n, seed=a.seed, link=a.link,
                                                     start=a.start, end=a.end))
    path = _out(a) / "records.csv"
    pipeline.write_records(rec, path)
    print(f"wrote {len(rec)} records to {path}")
    return 0


def _records(a):
    if a.input is None:
        raise UsageError("--input is required")
    return pipeline.read_records(a.input)


def cmd_reason(a) -> int:
    cfg = _pipeline_cfg(a)
    rec = _records(a)
    pre = pipeline.preprocess(rec, cfg)
    res = pipeline.reason_experiment(pre, cfg, seed=a.seed, threads=a.threads)
    out = _out(a)
    path = out / "reason_accuracy.csv"
    with open(path, "w") as fh:
        fh.write("arm,accuracy,n_test\n")
        for arm in ("hier", "naive"):
            fh.write(f"{arm},{res.accuracy[arm]:.6f},{res.n_test[arm]}\n")
    with open(out / "reason_race.csv", "w") as fh:
        fh.write("race_accuracy,majority_rate\n")
        fh.write(f"{res.race_accuracy:.6f},{res.majority_race_rate:.6f}\n")
    pre.reason_model.write_assignments(out / "reason_clusters.csv")
    pre.clothing_model.write_assignments(out / "clothing_clusters.csv")
    print(f"reason accuracy: hier {res.accuracy['hier']:.4f}, naive {res.accuracy['naive']:.4f} "
          f"on {res.n_test['hier']} test rows; bottom-layer race accuracy {res.race_accuracy:.4f}")
    return 0


def cmd_occurrence(a) -> int:
    cfg = _pipeline_cfg(a)
    if not 0 < cfg.level < 1:
        raise UsageError("--level must lie in (0, 1)")
    rec = _records(a)
    pre = pipeline.preprocess(rec, cfg)
    reason = pipeline.reason_experiment(pre, cfg, seed=a.seed, threads=a.threads)
    _, res = pipeline.occurrence_experiment(rec, pre, reason, cfg, seed=a.seed, threads=a.threads)
    out = _out(a)
    with open(out / "occurrence_metrics.csv", "w") as fh:
        fh.write("arm,bias,sd_over_n,sd_conventional,mse,pi_coverage,n_test\n")
        for arm in ("hier", "naive"):
            r = res[arm].report
            fh.write(f"{arm},{r.bias:.6f},{r.sd:.6f},{r.sd_conventional:.6f},{r.mse:.6f},"
                     f"{r.pi_coverage:.6f},{len(res[arm].truth)}\n")
    pipeline.write_forecast(res, out / "forecast.csv")
    pipeline.plot_forecast(res, out / "forecast.svg")
    for arm in ("hier", "naive"):
        r = res[arm].report
        print(f"{arm}: mse {r.mse:.4f}, {cfg.level:.0%} interval coverage {r.pi_coverage:.4f} "
              f"over {len(res[arm].truth)} days")
    return 0


COMMANDS = {"simulate": cmd_simulate, "cluster": cmd_cluster, "synth": cmd_synth,
            "reason": cmd_reason, "occurrence": cmd_occurrence}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        a = resolve(args)
        key = args.step if args.command == "pipeline" else args.command
        return COMMANDS[key](a)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"hierforest: error: {exc}", file=sys.stderr)
        return 2
    except (DatasetError, ForestError, ClusterError, pipeline.PipelineError, ValueError,
            OSError) as exc:
        print(f"hierforest: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
