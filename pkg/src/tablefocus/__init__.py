"""Table question answering via focused sub-table construction, verbalization,
and adaptive textual/symbolic reasoning."""

from .core import (
    CellSelection,
    ParseError,
    SizeMetrics,
    Table,
    TransposeError,
    measure,
    parse_table,
    peek,
    project,
    render_markdown,
    transpose,
)
from .normalize import ColumnKind, NormalizedTable, Orientation, detect_orientation, infer_column_kind, normalize
from .pipeline import PipelineConfig, run_instance
from .reasoning import Answer, ExecutorProfile
from .structure import TableOfFocus

__all__ = [
    "Answer",
    "CellSelection",
    "ColumnKind",
    "ExecutorProfile",
    "NormalizedTable",
    "Orientation",
    "ParseError",
    "PipelineConfig",
    "SizeMetrics",
    "Table",
    "TableOfFocus",
    "TransposeError",
    "detect_orientation",
    "infer_column_kind",
    "measure",
    "normalize",
    "parse_table",
    "peek",
    "project",
    "render_markdown",
    "run_instance",
    "transpose",
]

__version__ = "0.1.0"
