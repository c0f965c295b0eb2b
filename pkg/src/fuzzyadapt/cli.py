"""Command-line interface: simulate, rulegen, sweep, inspect-kb.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import __version__
from .adaptation_schemas import AdaptationEngine, KnowledgeBase
from .domain_model import FixtureError, load_fixture
from .experiment_harness import (
    DEFAULT_THRESHOLD,
    DEFAULT_THRESHOLD_SWEEP,
    SCHEMAS,
    TRACE_KINDS,
    ConfigError,
    RunConfig,
    emit_report,
    run_experiment,
    sweep,
)

log = logging.getLogger(__name__)

_CONTEXT_ALIASES = {"quasi": "quasi_noisy"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fuzzyadapt", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-run progress")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one schema over one generated trace")
    sim.add_argument("--schema", required=True, choices=SCHEMAS)
    sim.add_argument(
        "--context",
        required=True,
        choices=sorted(set(TRACE_KINDS) | set(_CONTEXT_ALIASES)),
        help="trace kind (quasi is shorthand for quasi_noisy)",
    )
    sim.add_argument("--steps", type=int, default=500)
    sim.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--warmup", type=int, default=50, help="black-box warm-up steps")
    sim.add_argument("--model", default=None, help="model JSON file (default: bundled fixture)")
    sim.add_argument("--out", default="runs", help="output directory for CSV/JSON reports")

    gen = sub.add_parser("rulegen", help="dump a generated rule set as JSON")
    gen.add_argument("--relation", required=True, choices=["evo", "sat", "adp"])
    gen.add_argument("--model", default=None)
    gen.add_argument("--out", default=None, help="write JSON here instead of stdout")

    sw = sub.add_parser("sweep", help="threshold/schema grid from a JSON config file")
    sw.add_argument("--config", required=True, help="JSON file with schemas/contexts/thresholds/steps/seed/out")

    kb = sub.add_parser("inspect-kb", help="summarize a persisted knowledge base")
    kb.add_argument("file")
    return parser


def _cmd_simulate(args) -> int:
    config = RunConfig(
        schema=args.schema,
        context=_CONTEXT_ALIASES.get(args.context, args.context),
        steps=args.steps,
        threshold=args.threshold,
        seed=args.seed,
        warmup=args.warmup,
        model_path=args.model,
    )
    report = run_experiment(config)
    csv_path, json_path = emit_report(report, args.out)
    agg = report.aggregates
    print(f"wrote {csv_path} and {json_path}")
    print(
        f"{config.schema}/{config.context}: {agg['steps']} steps, "
        f"median deviation {agg['median_deviation']:.4g}, "
        f"mean wall time {agg['mean_wall_time_s'] * 1e3:.2f} ms"
    )
    return 0


def _cmd_rulegen(args) -> int:
    model = load_fixture(args.model)
    engine = AdaptationEngine(model)
    rules = {"evo": engine.evo_rules, "sat": engine.sat_rules, "adp": engine.adp_rules}[args.relation]
    relation = model.relations[args.relation.upper()]
    doc = {
        "relation": args.relation,
        "sources": [e.name for e in relation.sources],
        "targets": [e.name for e in relation.targets],
        "rules": [
            {
                "if": [[int(i), label] for i, label in r.antecedent],
                "then": [[int(j), label] for j, label in r.consequent],
            }
            for r in rules
        ],
    }
    text = json.dumps(doc, indent=1)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        print(f"wrote {len(rules)} rules to {args.out}")
    else:
        print(text)
    return 0


def _cmd_sweep(args) -> int:
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.config}: line {exc.lineno}: {exc.msg}") from exc
    known = {"schemas", "contexts", "thresholds", "steps", "seed", "out", "warmup", "model"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"{args.config}: unknown fields {sorted(unknown)}")
    model = load_fixture(doc.get("model"))
    reports = sweep(
        schemas=doc.get("schemas", list(SCHEMAS)),
        contexts=doc.get("contexts", list(TRACE_KINDS)),
        thresholds=doc.get("thresholds", list(DEFAULT_THRESHOLD_SWEEP)),
        steps=doc.get("steps", 500),
        seed=doc.get("seed", 0),
        model=model,
        out_dir=doc.get("out", "runs"),
        warmup=doc.get("warmup", 50),
    )
    for report in reports:
        agg = report.aggregates
        reuse = agg["mode_counts"].get("reused", 0)
        print(
            f"{report.config.schema}/{report.config.context}"
            f"@{report.config.threshold:g}: median deviation {agg['median_deviation']:.4g}, "
            f"reused {reuse}/{agg['steps']}"
        )
    return 0


def _cmd_inspect_kb(args) -> int:
    kb = KnowledgeBase.load(args.file)
    print(f"kind: {kb.kind}")
    print(f"prior variables: {sorted(kb.prior_mfs)}")
    print(f"entries: {len(kb.entries)}")
    for i, entry in enumerate(kb.entries):
        key = ", ".join(f"{v:.4g}" for v in entry.key)
        if "mfs" in entry.payload:
            detail = f"{len(entry.payload['mfs'])} variables"
        else:
            centers = np.asarray(entry.payload["centers"])
            detail = f"{centers.shape[0]} clusters"
        print(f"  [{i}] key=({key}) {detail}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    handlers = {
        "simulate": _cmd_simulate,
        "rulegen": _cmd_rulegen,
        "sweep": _cmd_sweep,
        "inspect-kb": _cmd_inspect_kb,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, FixtureError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - single CLI boundary
        log.debug("runtime failure", exc_info=True)
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
