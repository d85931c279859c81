# cli.py
"""
Command-line entry point.

    python cli.py synth --kind lookup_qa --n 200 --seed 0 --out data/
    python cli.py convert --task rte --input RTE/train.tsv --out rte_train.jsonl
    python cli.py train --config plan.json --out runs/rte
    python cli.py eval --checkpoint runs/rte/checkpoint --data rte_dev.jsonl --task rte
    python cli.py gradcheck --seed 0
    python cli.py compare --out runs/compare --pdf

Exit code 0 on success. On failure one JSON error record goes to stderr and
the exit code is 1.
"""
from __future__ import annotations

import argparse
import json
import logging
import pathlib
import sys
from typing import Any, Optional, Sequence

from harness.converters import convert
from harness.datasets import load_dataset, save_dataset
from harness.experiments import ComparisonSetup, compare_intermediate_training
from harness.gradcheck import DEFAULT_EPS, gradcheck
from harness.pipeline import evaluate
from harness.synthetic import SUITE_KINDS, generate_synthetic_suite
from model.checkpoint import load_checkpoint, load_checkpoint_vocab, save_checkpoint
from model.encoder import EncoderConfig
from model.span_decoder import DecodeMode
from nlp.reformulation import BucketSpec, LabelSet
from nlp.tasks import METRICS, get_template
from nlp.tokenizer import Vocabulary, build_vocabulary
from training.plan import RunConfig, load_plan
from training.trainer import random_restarts
from utils import settings
from utils.reporting import export_comparison_pdf, write_json, write_jsonl

logger = logging.getLogger("spanex")

# init_std well above the training default keeps gradients far above finite-difference noise
GRADCHECK_CONFIG = {
    "num_layers": 2,
    "hidden_dim": 16,
    "num_heads": 2,
    "ffn_dim": 32,
    "vocab_size": 32,
    "max_positions": 16,
    "init_std": 0.5,
}
CHECKPOINT_SUBDIR = "checkpoint"


class GradientCheckFailed(RuntimeError):
    pass


def _read_json(path: Optional[str]) -> dict[str, Any]:
    if not path:
        return {}
    return json.loads(pathlib.Path(path).read_text(encoding="utf-8"))


def _print_json(payload: Any) -> None:
    print(json.dumps(payload, sort_keys=True))


def _model_config(raw: dict[str, Any], vocab_size: int) -> EncoderConfig:
    raw = {"dtype": settings.get("SPANEX_DTYPE"), **raw, "vocab_size": vocab_size}
    return EncoderConfig.from_dict(raw)


# ──────────────────────────────────────────────────────────────── commands
def cmd_synth(args: argparse.Namespace) -> int:
    train, dev = generate_synthetic_suite(
        args.kind, args.n, args.seed, args.vocab_size, dev_n=args.dev_n
    )
    out = pathlib.Path(args.out)
    paths = {
        "train": str(save_dataset(train, out / f"{args.kind}_train.jsonl")),
        "dev": str(save_dataset(dev, out / f"{args.kind}_dev.jsonl")),
    }
    _print_json({"kind": args.kind, "train": len(train), "dev": len(dev), "files": paths})
    return 0


def cmd_convert(args: argparse.Namespace) -> int:
    kwargs = {}
    if get_template(args.task).labels is not None:
        kwargs = {"definitional": args.definitional, "layout": args.layout}
    examples = convert(args.input, args.task, **kwargs)
    path = save_dataset(examples, args.out)
    _print_json({"task": args.task, "examples": len(examples), "file": str(path)})
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    plan_file = load_plan(args.config)
    run = plan_file.run
    overrides: dict[str, Any] = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.restarts is not None:
        overrides["restarts"] = args.restarts
    if args.mode is not None:
        overrides["decode_mode"] = args.mode
    run = run.with_overrides(overrides)

    plan = plan_file.plan
    if plan_file.vocab_path is not None:
        vocab = Vocabulary.from_file(plan_file.vocab_path)
    else:
        vocab = build_vocabulary(
            text
            for task in plan.tasks.values()
            for ex in (*task.train, *task.dev)
            for text in (ex.source_text, ex.auxiliary_text)
        )
    config = _model_config(dict(plan_file.model), len(vocab))

    result = random_restarts(plan, run, model_config=config, vocab=vocab, max_len=plan_file.max_len)
    best = result.best
    out = pathlib.Path(args.out)
    summary = {
        "target_task": result.target_task,
        "best_seed": result.best_seed,
        "scores": {str(s): v for s, v in result.scores.items()},
        "stages": [
            {
                "stage": r.stage,
                "steps": r.steps,
                "best_metric": r.best_metric,
                "final_metric": r.final_metric,
            }
            for r in best.stages
        ],
    }
    save_checkpoint(
        best.model,
        out / CHECKPOINT_SUBDIR,
        vocab=vocab,
        metadata={"seed": result.best_seed, "max_len": plan_file.max_len, "target_task": result.target_task},
    )
    write_jsonl((r.to_dict() for r in best.records), out / "report.jsonl")
    write_json(summary, out / "summary.json")
    _print_json(summary)
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    model = load_checkpoint(args.checkpoint)
    vocab = load_checkpoint_vocab(args.checkpoint)
    examples = load_dataset(args.data)

    labels: Optional[LabelSet] = None
    buckets: Optional[BucketSpec] = None
    metric = args.metric
    if args.task:
        template = get_template(args.task)
        labels = template.definitional_labels if args.definitional else template.labels
        buckets = template.buckets
        metric = metric or template.metric
    metric = metric or "exact_match"

    report = evaluate(
        model,
        examples,
        vocab,
        metric=metric,
        max_len=args.max_len or settings.get_int("SPANEX_MAX_LEN"),
        labels=labels,
        buckets=buckets,
        mode=args.mode or DecodeMode.INDEPENDENT,
    )
    if args.out:
        write_json(report.to_dict(), args.out)
    _print_json(report.to_dict())
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    config = EncoderConfig.from_dict({**GRADCHECK_CONFIG, **_read_json(args.config)})
    failed = []
    for seed in range(args.seed, args.seed + args.seeds):
        for check in gradcheck(config, seed, eps=args.eps, max_entries=args.max_entries):
            _print_json({"seed": seed, **check.to_dict()})
            if not check.passed:
                failed.append(f"{check.name}@{seed}")
    if failed:
        raise GradientCheckFailed(f"{len(failed)} tensor check(s) failed: {', '.join(failed)}")
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    raw = _read_json(args.config)
    setup_raw = dict(raw.get("setup", {}))
    if args.seeds is not None:
        setup_raw["seeds"] = args.seeds
    setup = ComparisonSetup(**setup_raw)
    run = RunConfig.from_dict(raw.get("run", {}))
    if args.seed is not None:
        run = run.with_overrides({"seed": args.seed})
    model_config = {"dtype": settings.get("SPANEX_DTYPE"), **raw.get("model", {})}
    report = compare_intermediate_training(
        setup,
        model_config=model_config,
        run=run,
        max_len=int(raw.get("max_len") or settings.get_int("SPANEX_MAX_LEN")),
    )
    out = pathlib.Path(args.out)
    write_json(report, out / "comparison.json")
    if args.pdf:
        export_comparison_pdf(report, out / "comparison.pdf")
    _print_json(report)
    return 0


# ─────────────────────────────────────────────────────────────────── parser
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spanex", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic train/dev suite as JSONL")
    p.add_argument("--kind", choices=SUITE_KINDS, required=True)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--dev-n", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vocab-size", type=int, default=64)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("convert", help="convert GLUE TSV / SQuAD JSON to JSONL")
    p.add_argument("--task", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--definitional", action="store_true", help="use long label descriptions")
    p.add_argument("--layout", choices=("segmented", "unsegmented"), default="segmented")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("train", help="run a training plan and save the best checkpoint")
    p.add_argument("--config", required=True, help="training plan JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--restarts", type=int, default=None)
    p.add_argument("--mode", choices=[m.value for m in DecodeMode], default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a JSONL dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--task", default=None, help="task template supplying labels/buckets/metric")
    p.add_argument("--metric", choices=METRICS, default=None)
    p.add_argument("--definitional", action="store_true")
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--mode", choices=[m.value for m in DecodeMode], default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of every gradient tensor")
    p.add_argument("--config", default=None, help="encoder config JSON (overrides the small default)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--eps", type=float, default=DEFAULT_EPS, help="finite-difference step")
    p.add_argument("--max-entries", type=int, default=None)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("compare", help="from-scratch vs intermediate-task training on a small target")
    p.add_argument("--config", default=None, help='JSON with optional "setup", "model", "run", "max_len"')
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--seeds", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--pdf", action="store_true")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(
        level=settings.get("SPANEX_LOG_LEVEL").upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as e:
        logger.exception("%s failed", args.command)
        print(
            json.dumps({"error": type(e).__name__, "message": str(e), "command": args.command}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
