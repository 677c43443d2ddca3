#!/usr/bin/env python3
"""Evaluate the pipeline over a benchmark slice against a live provider.

Thin wrapper over the library so experiment runs are reproducible from the
command line. Records every model call into a cassette, so a finished run can
be re-scored or re-inspected offline with `--mode replay`.

Example:
    python3 scripts/run_eval.py \
        --dataset data/wikitq/random-split-1-dev.tsv --dataset-format wikitq-tsv \
        --base-url https://api.example.com/v1 --model some-model \
        --cassette runs/dev1/cassette --report runs/dev1/report.json --limit 50
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from tablefocus import gateway as gw
from tablefocus.evaluation import evaluate, load_dataset
from tablefocus.pipeline import PipelineConfig, build_backend, run_instance


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--dataset", required=True)
    parser.add_argument("--dataset-format", default="jsonl",
                        choices=("jsonl", "wikitq-tsv", "tabfact-json"))
    parser.add_argument("--limit", type=int, help="evaluate only the first N instances")
    parser.add_argument("--mode", default="record", choices=("record", "replay", "passthrough"))
    parser.add_argument("--cassette", required=True)
    parser.add_argument("--base-url")
    parser.add_argument("--model")
    parser.add_argument("--api-key-env", default="TF_API_KEY")
    parser.add_argument("--parallelism", type=int, default=4)
    parser.add_argument("--peek-size", type=int, default=25)
    parser.add_argument("--b-max", type=int, default=6)
    parser.add_argument("--report", help="write the JSON report here")
    parser.add_argument("--trace-dir", help="write one trace JSON per instance here")
    args = parser.parse_args()

    config = PipelineConfig(
        peek_size=args.peek_size,
        b_max=args.b_max,
        backend_mode=args.mode,
        cassette_path=args.cassette,
    )
    inner = None
    if args.mode in ("record", "passthrough"):
        if not args.base_url or not args.model:
            parser.error(f"{args.mode} mode requires --base-url and --model")
        inner = gw.HttpBackend(base_url=args.base_url, model=args.model, api_key_env=args.api_key_env)
    lm = gw.Gateway(build_backend(config, inner=inner))

    instances, skipped = load_dataset(args.dataset, format=args.dataset_format)
    if skipped:
        print(f"skipped {skipped} malformed records", file=sys.stderr)
    if args.limit:
        instances = instances[: args.limit]

    def run_one(instance):
        answer, trace = run_instance(
            instance.table, instance.question, lm, config, task_kind=instance.task_kind
        )
        return answer, trace.to_dict()

    report = evaluate(instances, run_one, parallelism=args.parallelism, trace_dir=args.trace_dir)
    print(f"total: {report.total}  correct: {report.correct}  accuracy: {report.accuracy:.4f}")
    print(f"strategies: {report.strategy_counts}")
    print(f"mean condensation ratio: {report.mean_condensation_ratio}")
    print(f"predicted cost: {report.predicted_cost_total:.1f}  tallied: {report.tallied_cost_total:.1f}")
    if args.report:
        Path(args.report).parent.mkdir(parents=True, exist_ok=True)
        Path(args.report).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
