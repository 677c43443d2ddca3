"""Table content understanding: sufficiency estimation, iterative focus-table
re-construction, and verbalization into a natural-language description."""

from __future__ import annotations

from dataclasses import dataclass

from . import gateway as gw
from .core import render_markdown
from .normalize import NormalizedTable
from .sqlrows import RowSet
from .structure import RankedColumns, TableOfFocus, construct_focus
from .trace import ReasoningTrace, digest


@dataclass(frozen=True)
class SufficiencyVerdict:
    sufficient: bool
    raw_reply: str


@dataclass(frozen=True)
class VerbalizedTable:
    text: str
    source_focus_hash: str

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("verbalized text must be non-empty")


def focus_hash(focus: TableOfFocus) -> str:
    return digest(render_markdown(focus.table, with_addresses=False))


def estimate_information(
    focus: TableOfFocus,
    question: str,
    lm: gw.Gateway,
    trace: ReasoningTrace | None = None,
) -> SufficiencyVerdict:
    """Ask whether the focus table suffices; unparseable replies default to sufficient.

    The optimistic default is deliberate: a spurious "insufficient" inflates the
    reconstruction count, while a spurious "sufficient" is recoverable by the
    full-table retry at reasoning time.
    """
    request, response = lm.complete(
        "information_estimation",
        {"table": render_markdown(focus.table), "question": question},
    )
    if trace is not None:
        trace.record_lm("information_estimation", gw.request_key(request), response.text)
    try:
        verdict = gw.parse_bool(response.text)
    except gw.UnparseableReply:
        if trace is not None:
            trace.warn("sufficiency reply unparseable; defaulted to sufficient")
        verdict = True
    return SufficiencyVerdict(sufficient=verdict, raw_reply=response.text)


def reconstruct_focus(
    table: NormalizedTable,
    question: str,
    rows: RowSet,
    initial_columns: tuple[str, ...],
    ranked: RankedColumns,
    lm: gw.Gateway,
    trace: ReasoningTrace | None = None,
) -> TableOfFocus:
    """Grow the focus column set until a sufficiency check passes or candidates run out.

    The row set is frozen; candidate columns are appended in ranked order, one
    per iteration, with one sufficiency estimation before each append. The
    reconstruction count is the number of columns added.
    """
    if not initial_columns:
        raise ValueError("initial column set must be non-empty")
    candidates = [c for c in ranked.order if c not in initial_columns]
    columns = list(initial_columns)
    while True:
        focus = construct_focus(table, rows, columns, reconstruction_count=len(columns) - len(initial_columns))
        verdict = estimate_information(focus, question, lm, trace=trace)
        if verdict.sufficient or not candidates:
            return focus
        columns.append(candidates.pop(0))


def verbalize(
    focus: TableOfFocus,
    lm: gw.Gateway,
    trace: ReasoningTrace | None = None,
) -> VerbalizedTable:
    """Model description of the focus table; empty replies get a mechanical fallback."""
    if focus.table.column_count < 1:
        raise ValueError("cannot verbalize a table with no columns")
    request, response = lm.complete("verbalization", {"table": render_markdown(focus.table)})
    if trace is not None:
        trace.record_lm("verbalization", gw.request_key(request), response.text)
    text = response.text.strip()
    if not text:
        text = mechanical_description(focus)
        if trace is not None:
            trace.warn("empty verbalization reply; used the mechanical fallback description")
    return VerbalizedTable(text=text, source_focus_hash=focus_hash(focus))


def mechanical_description(focus: TableOfFocus) -> str:
    """Deterministic fallback: "Row i: header=value; ..." per row."""
    parts = []
    for i, row in enumerate(focus.table.rows):
        cells = "; ".join(f"{h}={c}" for h, c in zip(focus.table.headers, row))
        parts.append(f"Row {i + 1}: {cells}.")
    if not parts:
        return "The table has columns " + ", ".join(focus.table.headers) + " and no rows."
    return " ".join(parts)
