"""Command-line interface.

Every subcommand takes ``--config FILE`` (a JSON document of RunConfig fields)
and flags that override individual fields. Stages communicate only through
the files in ``--out``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 training failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .errors import ConfigError, IGTError, InvalidPlan
from .synth import default_plan, synth_generate

logger = logging.getLogger("igt")

# flag -> (RunConfig field, type)
_OVERRIDES = {
    "data": ("data_dir", str),
    "out": ("out_dir", str),
    "granularity": ("granularity", str),
    "train_fraction": ("train_fraction", float),
    "tau": ("tau", float),
    "kappa": ("kappa", float),
    "decision_window": ("decision_window", int),
    "policy": ("transform_policy", str),
    "arch": ("arch", str),
    "epochs": ("epochs", int),
    "batch_size": ("batch_size", int),
    "lr": ("lr", float),
    "seed": ("seed", int),
    "catalog": ("catalog_path", str),
    "labels": ("labels_path", str),
    "workers": ("workers", int),
}


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--data", help="directory holding logon/device/file/email/http CSVs")
    p.add_argument("--out", help="artifact directory")
    p.add_argument("--granularity", choices=["week", "day", "session"])
    p.add_argument("--train-fraction", type=float)
    p.add_argument("--tau", type=float, help="percentile of training scores used as lambda")
    p.add_argument("--kappa", type=float, help="flagged fraction above which a user is flagged")
    p.add_argument("--decision-window", type=int, help="trailing test windows for the user decision")
    p.add_argument("--policy", choices=["geometric", "full", "simplified"])
    p.add_argument("--no-prune", action="store_true", help="keep every candidate transform")
    p.add_argument("--arch", choices=["tiny", "wrn"])
    p.add_argument("--paper-scale", action="store_true", help="wide residual network, 200 epochs")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--catalog", help="feature catalog JSON")
    p.add_argument("--labels", help="manifest.json or a CSV of malicious event ids")
    p.add_argument("--no-baselines", action="store_true")
    p.add_argument("--workers", type=int)


def load_config(args) -> pipeline.RunConfig:
    base: dict = {}
    if getattr(args, "config", None):
        try:
            base = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    for flag, (name, _) in _OVERRIDES.items():
        v = getattr(args, flag, None)
        if v is not None:
            base[name] = v
    if getattr(args, "no_prune", False):
        base["prune"] = False
    if getattr(args, "no_baselines", False):
        base["baselines"] = False
    cfg = pipeline.RunConfig.from_json(base)
    if getattr(args, "paper_scale", False):
        cfg = pipeline.paper_scale(cfg)
    if not cfg.out_dir:
        raise ConfigError("--out is required")
    return cfg


def _need_data(cfg) -> None:
    if not cfg.data_dir:
        raise ConfigError("--data is required")
    if not Path(cfg.data_dir).is_dir():
        raise ConfigError(f"data directory {cfg.data_dir} does not exist")


def cmd_synth(args) -> int:
    if args.malicious > max(1, args.users // 10):
        raise InvalidPlan("at most 10% of users may be malicious")
    plan = default_plan(args.users, args.days, args.malicious, seed=args.seed)
    m = synth_generate(plan, args.seed, args.out)
    print(f"wrote {m['n_events']} events for {args.users} users to {args.out}; "
          f"malicious: {', '.join(m['malicious_users']) or 'none'}")
    return 0


def cmd_ingest(args) -> int:
    cfg = load_config(args)
    _need_data(cfg)
    events = pipeline._stage("ingest", pipeline.stage_ingest, cfg)
    print(f"{len(events)} events")
    return 0


def cmd_featurize(args) -> int:
    cfg = load_config(args)
    users, skipped = pipeline._stage("featurize", pipeline.stage_featurize, cfg)
    print(f"{len(users)} users featurized, {len(skipped)} skipped")
    return 0


def cmd_select(args) -> int:
    cfg = load_config(args)
    users = pipeline.load_features(cfg)
    kept = pipeline._stage("select", pipeline.stage_select, cfg, users)
    print(f"{len(kept)} transforms kept: {', '.join(t.name for t in kept)}")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args)
    users = pipeline.load_features(cfg)
    transforms = pipeline.load_transforms(cfg)
    pipeline._stage("train", pipeline.stage_train, cfg, users, transforms)
    print(f"trained {len(users)} models")
    return 0


def cmd_score(args) -> int:
    cfg = load_config(args)
    users = pipeline.load_features(cfg)
    transforms = pipeline.load_transforms(cfg)
    models = pipeline.load_models(cfg, users)
    scores = pipeline._stage("score", pipeline.stage_score, cfg, users, models, transforms)
    flagged = sorted(u for u, s in scores.items() if s.flagged)
    print(f"flagged users: {', '.join(flagged) or 'none'}")
    return 0


def _print_reports(summary) -> None:
    reports = summary.get("reports")
    if not reports:
        print("no labels available; reports skipped")
        return
    for level in ("instance", "user"):
        r = reports[level]
        print(f"{level:8s} DR={r['DR']:6.2f} PR={r['PR']:6.2f} FPR={r['FPR']:6.2f} F1={r['F1']:6.2f} "
              f"AUROC={r['AUROC']}")
    for name, v in reports.get("baselines_instance_auroc", {}).items():
        print(f"baseline {name}: instance AUROC={v}")


def cmd_evaluate(args) -> int:
    cfg = load_config(args)
    users = pipeline.load_features(cfg)
    scores = pipeline.load_scores(cfg)
    summary = pipeline._stage("evaluate", pipeline.stage_evaluate, cfg, users, scores)
    _print_reports(summary)
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args)
    grid = [float(v) for v in args.grid.split(",")] if args.grid else None
    rows = pipeline.sweep(cfg, args.param, grid)
    for r in rows:
        print(f"{args.param}={r[args.param]:g}: instance F1={r['instance_F1']:.2f} user F1={r['user_F1']:.2f}")
    return 0


def cmd_run(args) -> int:
    cfg = load_config(args)
    _need_data(cfg)
    summary = pipeline.run_pipeline(cfg)
    _print_reports(summary)
    print(f"flagged users: {', '.join(summary['flagged_users']) or 'none'}")
    print(f"run summary sha256: {pipeline.summary_hash(cfg.out_dir)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="igt", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic CERT-format corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--users", type=int, default=20)
    p.add_argument("--days", type=int, default=120)
    p.add_argument("--malicious", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    for name, func, helptext in (
        ("ingest", cmd_ingest, "parse source CSVs into events.jsonl"),
        ("featurize", cmd_featurize, "bucket events and build normalized feature vectors"),
        ("select-transforms", cmd_select, "prune the candidate transformation set"),
        ("train", cmd_train, "train one self-labelling classifier per user"),
        ("score", cmd_score, "score windows and flag instances and users"),
        ("evaluate", cmd_evaluate, "instance and user reports plus baselines"),
        ("run", cmd_run, "all stages"),
    ):
        p = sub.add_parser(name, help=helptext)
        _add_run_flags(p)
        p.set_defaults(func=func)

    p = sub.add_parser("sweep", help="F1 over a tau or kappa grid from stored scores")
    _add_run_flags(p)
    p.add_argument("--param", choices=["tau", "kappa"], required=True)
    p.add_argument("--grid", help="comma-separated values in percent")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except IGTError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
