#!/usr/bin/env python3
"""Offline demonstration of the full pipeline.

Runs one question about a small table twice: first in record mode against a
scripted stand-in model, then in replay mode purely from the cassette, and
shows that answers and traces are deterministic. Useful as a smoke check that
an installation works without any network access.

Usage: python3 scripts/demo_offline.py [--keep DIR]
"""

from __future__ import annotations

import argparse
import sys
import tempfile
from pathlib import Path

from tablefocus import gateway as gw
from tablefocus.core import Table, render_markdown
from tablefocus.pipeline import PipelineConfig, run_instance

TABLE = Table.make(
    ["Rider", "Country", "Wins"],
    [
        ["Jacky Martin", "Belgium", "3"],
        ["Paolo Conti", "Italy", "5"],
        ["Bram Peeters", "Belgium", "2"],
        ["Hans Weber", "Germany", "1"],
        ["Luc Van Damme", "Belgium", "2"],
        ["Pierre Dubois", "France", "4"],
    ],
)
QUESTION = "Total wins by Belgian riders?"

PROGRAM = """\
import csv
import os

with open(os.environ["TM_TABLE_PATH"]) as fh:
    rows = list(csv.DictReader(fh))
print(sum(int(r["Wins"]) for r in rows if r["Country"] == "Belgium"))
"""

SCRIPTED_REPLIES = {
    "structure_extraction": ["key column: Rider"],
    "column_ranking": ["Country, Wins, Rider"],
    "column_lookup": ["Country, Wins"],
    "row_lookup_sql": ["```sql\nSELECT * FROM t WHERE country = 'Belgium'\n```"],
    "information_estimation": ["Yes, sufficient."],
    "verbalization": ["Belgian riders and their win counts."],
    "strategy_assessment": ["symbolic"],
    "textual_guidance": ["Filter to Belgium, then sum the Wins column."],
    "symbolic_reasoning": [f"```python\n{PROGRAM}```"],
    "answer_formatting": ["7"],
}


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--keep", help="directory to keep the cassette in (default: temp)")
    args = parser.parse_args()

    workdir = Path(args.keep) if args.keep else Path(tempfile.mkdtemp(prefix="tf-demo-"))
    cassette_dir = workdir / "cassette"

    print("table:")
    print(render_markdown(TABLE))
    print(f"\nquestion: {QUESTION}\n")

    record_config = PipelineConfig(backend_mode="record", cassette_path=str(cassette_dir))
    record_backend = gw.Cassette(cassette_dir, "record", inner=gw.ScriptedBackend(SCRIPTED_REPLIES))
    answer, trace = run_instance(TABLE, QUESTION, gw.Gateway(record_backend), record_config)
    print(f"[record] answer: {answer.value!r}  strategy: {trace.strategy}")

    replay_config = PipelineConfig(backend_mode="replay", cassette_path=str(cassette_dir))
    replays = []
    for i in (1, 2):
        answer_r, trace_r = run_instance(TABLE, QUESTION, gw.Gateway(gw.Cassette(cassette_dir, "replay")), replay_config)
        replays.append((answer_r, trace_r.to_json()))
        print(f"[replay {i}] answer: {answer_r.value!r}  cost: {trace_r.cost_total:.1f}")

    deterministic = replays[0][1] == replays[1][1] and replays[0][0] == replays[1][0]
    print(f"\nreplay traces byte-identical: {deterministic}")
    print(f"cassette: {cassette_dir} ({len(list(cassette_dir.glob('*.json')))} entries)")
    return 0 if deterministic and answer.value == "7" else 1


if __name__ == "__main__":
    sys.exit(main())
