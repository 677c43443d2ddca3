"""Table structure understanding: header/key-column extraction, column ranking
and selection, SQL row lookup, and construction of the initial focus table.

Every model-reply repair here is a silent degrade with a trace warning, never a
hard failure: the pipeline must produce an answer for every instance.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from . import gateway as gw
from .core import CellSelection, Table, peek, project, render_markdown
from .normalize import NormalizedTable
from .sqlrows import RowSet, SqlError, SqlSchema, build_schema, execute_row_lookup, is_aggregate_query
from .trace import ReasoningTrace

DEFAULT_PEEK_SIZE = 25
DEFAULT_B_MAX = 6


@dataclass(frozen=True)
class StructureInfo:
    headers: tuple[str, ...]
    key_column: str
    peek_used: int

    def __post_init__(self) -> None:
        if self.key_column not in self.headers:
            raise ValueError("key column must be one of the headers")


@dataclass(frozen=True)
class RankedColumns:
    order: tuple[str, ...]


@dataclass(frozen=True)
class TableOfFocus:
    table: Table
    selected_rows: RowSet
    selected_columns: tuple[str, ...]
    reconstruction_count: int
    condensation_ratio: float


def _peek_markdown(table: NormalizedTable, k: int) -> str:
    return render_markdown(peek(table.table, k), with_addresses=False)


def extract_structure(
    table: NormalizedTable,
    k: int,
    lm: gw.Gateway,
    trace: ReasoningTrace | None = None,
) -> StructureInfo:
    """Headers come from the table itself; the key column comes from the model,
    validated against the headers and repaired to the first header if invalid."""
    if k < 1:
        raise ValueError("peek size must be >= 1")
    headers = table.table.headers
    request, response = lm.complete("structure_extraction", {"table": _peek_markdown(table, k)})
    if trace is not None:
        trace.record_lm("structure_extraction", gw.request_key(request), response.text)

    reply = response.text
    match = re.search(r"key\s*column\s*[:\-]\s*(.+)", reply, re.IGNORECASE)
    candidate = (match.group(1) if match else reply).strip().strip("\"'`.")
    lowered = {h.lower(): h for h in headers}
    key = lowered.get(candidate.lower())
    if key is None:
        for header in headers:
            if header.lower() in candidate.lower():
                key = header
                break
    if key is None:
        key = headers[0]
        if trace is not None:
            trace.warn(f"key column reply {candidate!r} names no header; repaired to {key!r}")
    return StructureInfo(headers=headers, key_column=key, peek_used=min(k, table.table.row_count))


def rank_columns(
    table: NormalizedTable,
    question: str,
    k: int,
    lm: gw.Gateway,
    trace: ReasoningTrace | None = None,
) -> RankedColumns:
    """Model-provided relevance order, repaired into a true permutation of the headers."""
    headers = table.table.headers
    request, response = lm.complete(
        "column_ranking",
        {"table": _peek_markdown(table, k), "headers": ", ".join(headers), "question": question},
    )
    if trace is not None:
        trace.record_lm("column_ranking", gw.request_key(request), response.text)
    try:
        items, dropped = gw.parse_delimited_list(response.text, expected_universe=headers)
    except gw.EmptyList:
        if trace is not None:
            trace.warn("column ranking reply unparseable; fell back to original header order")
        return RankedColumns(order=tuple(headers))
    if dropped and trace is not None:
        trace.warn(f"column ranking dropped unknown items: {dropped}")
    order: list[str] = []
    for item in items:
        if item not in order:
            order.append(item)
    for header in headers:  # repair omissions in original order
        if header not in order:
            order.append(header)
    return RankedColumns(order=tuple(order))


def column_lookup(
    ranked: RankedColumns,
    question: str,
    b_max: int,
    lm: gw.Gateway,
    table: NormalizedTable,
    k: int = DEFAULT_PEEK_SIZE,
    key_column: str | None = None,
    trace: ReasoningTrace | None = None,
) -> tuple[str, ...]:
    """Select the initial focus columns, capped at b_max, never empty, key included."""
    if b_max < 1:
        raise ValueError("b_max must be >= 1")
    request, response = lm.complete(
        "column_lookup",
        {"table": _peek_markdown(table, k), "headers": ", ".join(ranked.order), "question": question},
    )
    if trace is not None:
        trace.record_lm("column_lookup", gw.request_key(request), response.text)
    try:
        items, dropped = gw.parse_delimited_list(response.text, expected_universe=ranked.order)
    except gw.EmptyList:
        if trace is not None:
            trace.warn("column lookup reply unparseable; fell back to the top-ranked column")
        items, dropped = [ranked.order[0]], []
    if dropped and trace is not None:
        trace.warn(f"column lookup dropped unknown items: {dropped}")

    selected: list[str] = []
    for item in items:
        if item not in selected:
            selected.append(item)
        if len(selected) >= b_max:
            break
    if not selected:
        selected = [ranked.order[0]]
    if key_column is not None and key_column not in selected:
        selected.append(key_column)
    return tuple(selected)


def row_lookup(
    table: NormalizedTable,
    question: str,
    lm: gw.Gateway,
    k: int = DEFAULT_PEEK_SIZE,
    schema: SqlSchema | None = None,
    trace: ReasoningTrace | None = None,
) -> RowSet:
    """Generate and execute row-filtering SQL; every failure degrades to all rows.

    The prompt is rendered from a peek of the table, but the SQL executes
    against the full normalized table so the row set covers all rows.
    """
    schema = schema or build_schema(table)
    request, response = lm.complete(
        "row_lookup_sql",
        {"table": _peek_markdown(table, k), "schema": schema.describe(), "question": question},
    )
    if trace is not None:
        trace.record_lm("row_lookup_sql", gw.request_key(request), response.text)
    sql = gw.extract_code_block(response.text).strip()
    m = table.table.row_count
    all_rows = tuple(range(m))

    if is_aggregate_query(sql) and "where" not in sql.lower():
        if trace is not None:
            trace.warn("row lookup SQL is aggregate-only; selected all rows")
        return RowSet(indices=all_rows, sql=sql, empty_reason="aggregate-only query; selected all rows")
    try:
        return execute_row_lookup(table, sql, schema=schema)
    except SqlError as exc:
        if trace is not None:
            trace.warn(f"row lookup SQL failed ({type(exc).__name__}: {exc}); selected all rows")
        return RowSet(indices=all_rows, sql=sql, empty_reason=f"sql failure: {type(exc).__name__}")


def construct_focus(
    table: NormalizedTable,
    rows: RowSet,
    columns: list[str] | tuple[str, ...],
    reconstruction_count: int = 0,
) -> TableOfFocus:
    """Project the normalized table onto (rows, columns) in original order."""
    if not columns:
        raise ValueError("focus requires at least one column")
    header_index = {h: j for j, h in enumerate(table.table.headers)}
    unknown = [c for c in columns if c not in header_index]
    if unknown:
        raise IndexError(f"columns not present in table: {unknown}")
    col_indices = sorted(header_index[c] for c in columns)
    selection = CellSelection(row_indices=tuple(rows.indices), column_indices=tuple(col_indices))
    focus_table = project(table.table, selection)
    area_full = table.table.row_count * table.table.column_count
    area_focus = focus_table.row_count * focus_table.column_count
    ratio = area_focus / area_full if area_full > 0 else 1.0
    return TableOfFocus(
        table=focus_table,
        selected_rows=rows,
        selected_columns=tuple(table.table.headers[j] for j in col_indices),
        reconstruction_count=reconstruction_count,
        condensation_ratio=ratio,
    )
