"""Command line entry point: ``poseng {search,eval,aggregate,export,enumerate}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from poseng.aggregate import ExperimentSetting, average_percentiles, heatmap_export, universal_config, write_heatmap_csv
from poseng.errors import PosengError
from poseng.harness.config import RunConfig, load_config, parse_space
from poseng.harness.export import export_position_map
from poseng.harness.pipeline import (
    build_evaluator,
    dump_report,
    evaluate_theta,
    load_split,
    read_report,
    run_pipeline,
    with_overrides,
    write_report,
)
from poseng.harness.cache import ScoreCache
from poseng.positions import GapVector
from poseng.prompts import gaps_to_position_map
from poseng.search import ScoreTable, enumerate_space, icl_space, rag_space
from poseng.tokenizer import ByteTokenizer

log = logging.getLogger("poseng")


def parse_theta(text: str, labels) -> GapVector:
    """``"A=1900,B=400"``; labels not mentioned default to 0."""
    given = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        label, _, value = part.partition("=")
        given[label.strip()] = int(value)
    unknown = set(given) - set(labels)
    if unknown:
        raise PosengError(f"unknown gap labels {sorted(unknown)}; expected {list(labels)}")
    return GapVector((label, given.get(label, 0)) for label in labels)


def _config(args) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    return with_overrides(config, seed=args.seed, workers=args.workers, out=args.out, cache=args.cache)


def cmd_search(args) -> int:
    config = _config(args)
    report = run_pipeline(config)
    if config.out:
        path = write_report(report, config.out)
        print(f"wrote {path}")
    else:
        sys.stdout.write(dump_report(report))
    base, best = report["baseline"], report["best"]
    print(
        f"baseline {base['theta']}: train={base['train']} test={base['test']}\n"
        f"best     {best['theta']}: train={best['train']} test={best['test']}\n"
        f"improvement: {report['improvement']}  invalid candidates: {len(report['invalid'])}",
        file=sys.stderr,
    )
    return 0


def cmd_eval(args) -> int:
    config = _config(args)
    theta = parse_theta(args.theta, config.space.labels)
    evaluator = build_evaluator(config)
    dataset = load_split(config, args.split)
    cache = ScoreCache(config.cache, namespace=config.fingerprint()) if config.cache else None
    score = evaluate_theta(evaluator, dataset, theta, cache)
    print(json.dumps({"theta": theta.to_dict(), "split": args.split, "n": len(dataset), "score": score}))
    return 0


def cmd_aggregate(args) -> int:
    tables = {}
    for run in args.runs:
        report = read_report(run)
        setting = ExperimentSetting(report["setting"]["dataset"], int(report["setting"]["n_context"]))
        if setting in tables:
            raise PosengError(f"duplicate experiment setting {setting} (from {run})")
        tables[setting] = ScoreTable.from_rows(report["table"])
    report = average_percentiles(tables)
    best = universal_config(report)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    summary = {
        "settings": [str(s) for s in report.settings],
        "universal": best.to_dict(),
        "universal_percentile": report.average[best],
        "percentiles": report.to_rows(),
    }
    (out / "percentiles.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    labels = set(best.labels)
    if labels == {"A", "B"}:
        write_heatmap_csv(heatmap_export(report), out / "heatmap.csv")
    print(f"universal configuration {best.to_dict()} with average percentile {report.average[best]:.1f}")
    return 0


def cmd_export(args) -> int:
    config = _config(args)
    theta = parse_theta(args.theta, config.space.labels)
    dataset = load_split(config, args.split)
    prompt = dataset.template(args.sample).render(ByteTokenizer())
    position_map = gaps_to_position_map(prompt, theta)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    path = export_position_map(prompt, position_map, out / f"position_map_{args.split}_{args.sample}.json")
    print(f"wrote {path}")
    return 0


def cmd_enumerate(args) -> int:
    if args.preset:
        space = {"rag": rag_space, "icl": icl_space}[args.preset]()
    elif args.config:
        space = load_config(args.config).space
    elif args.space:
        space = parse_space(json.loads(args.space))
    else:
        space = rag_space()
    candidates = enumerate_space(space)
    print(len(candidates))
    if args.list:
        for theta in candidates:
            print(json.dumps(theta.to_dict()))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="poseng", description="Position engineering on a desk-scale transformer.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="run configuration (JSON)")
        p.add_argument("--seed", type=int, help="override model and synthetic dataset seeds")
        p.add_argument("--workers", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--cache", help="score journal (JSON Lines)")

    p = sub.add_parser("search", help="grid search on train, apply the winner to test")
    common(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("eval", help="score one gap vector on a split")
    common(p)
    p.add_argument("--theta", default="", help="e.g. A=1900,B=400 (missing labels are 0)")
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("aggregate", help="percentile report and heatmap across run outputs")
    p.add_argument("runs", nargs="+", help="run directories or report.json files")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("export", help="write a position-map file for one sample")
    common(p)
    p.add_argument("--theta", default="")
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--sample", type=int, default=0)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("enumerate", help="print the candidate count (and list)")
    p.add_argument("--config")
    p.add_argument("--preset", choices=("rag", "icl"))
    p.add_argument("--space", help="inline JSON space description")
    p.add_argument("--list", action="store_true")
    p.set_defaults(func=cmd_enumerate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (PosengError, OSError, KeyError) as exc:
        print(f"poseng: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
