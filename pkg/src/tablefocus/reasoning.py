"""Adaptive table reasoning: strategy choice, chain-of-thought, text-guided
program generation, sandboxed execution, answer formatting, and fallbacks.

Fallback ladder: executor failure -> textual reasoning on the same inputs;
abstaining answer (or an empty focus) -> one textual retry against the full
normalized table plus the verbalized focus.
"""

from __future__ import annotations

import csv
import io
import os
import subprocess
import tempfile
import time
from dataclasses import dataclass, field

from . import gateway as gw
from .content import VerbalizedTable, mechanical_description
from .core import render_markdown
from .normalize import NormalizedTable
from .structure import TableOfFocus
from .trace import ReasoningTrace, digest

TABLE_PATH_ENV = "TM_TABLE_PATH"
QUESTION_ENV = "TM_QUESTION"

_ABSTAIN_MARKERS = (
    "cannot answer",
    "can't answer",
    "cannot be answered",
    "not in the table",
    "no answer",
    "unable to answer",
    "not enough information",
    "insufficient information",
)


class EmptyAnswer(Exception):
    pass


@dataclass(frozen=True)
class Strategy:
    value: str  # textual | symbolic

    def __post_init__(self) -> None:
        if self.value not in ("textual", "symbolic"):
            raise ValueError(f"unknown strategy: {self.value!r}")


@dataclass(frozen=True)
class Guidance:
    text: str


@dataclass(frozen=True)
class ExecutionResult:
    stdout: str
    exit_status: int
    duration_ms: float
    timed_out: bool

    @property
    def answer_line(self) -> str:
        """Last non-empty stdout line, the executor's answer channel."""
        lines = [ln.strip() for ln in self.stdout.splitlines() if ln.strip()]
        return lines[-1] if lines else ""


@dataclass(frozen=True)
class Answer:
    value: str
    task_kind: str  # qa | fact_verification
    abstained: bool = False

    def __post_init__(self) -> None:
        if self.task_kind not in ("qa", "fact_verification"):
            raise ValueError(f"unknown task kind: {self.task_kind!r}")
        if self.task_kind == "fact_verification" and not self.abstained and self.value not in ("True", "False"):
            raise ValueError("fact verification answers must be 'True' or 'False'")


@dataclass(frozen=True)
class ExecutorProfile:
    """How generated programs are run: interpreter, extension, limits."""

    command: tuple[str, ...] = ("python3",)
    extension: str = ".py"
    timeout_s: float = 10.0
    memory_mb: int = 512


_STRATEGY_SYNONYMS = {
    "retrieval": "textual",
    "chain-of-thought": "textual",
    "chain of thought": "textual",
    "text": "textual",
    "program": "symbolic",
    "code": "symbolic",
    "python": "symbolic",
    "sql": "symbolic",
    "calculation": "symbolic",
}


def assess_strategy(
    focus: TableOfFocus,
    verbal: VerbalizedTable,
    question: str,
    lm: gw.Gateway,
    trace: ReasoningTrace | None = None,
) -> Strategy:
    """Choose textual or symbolic reasoning; unparseable replies default to textual."""
    request, response = lm.complete(
        "strategy_assessment",
        {"table": render_markdown(focus.table), "description": verbal.text, "question": question},
    )
    if trace is not None:
        trace.record_lm("strategy_assessment", gw.request_key(request), response.text)
    try:
        choice = gw.parse_choice(response.text, ["textual", "symbolic"], synonyms=_STRATEGY_SYNONYMS)
    except gw.UnparseableReply:
        if trace is not None:
            trace.warn("strategy reply unparseable; defaulted to textual")
        choice = "textual"
    return Strategy(value=choice)


def textual_reasoning(
    table_markdown: str,
    verbal: VerbalizedTable,
    question: str,
    lm: gw.Gateway,
    trace: ReasoningTrace | None = None,
) -> str:
    """Full chain-of-thought reply, unmodified; extraction happens in format_answer."""
    request, response = lm.complete(
        "textual_reasoning",
        {"table": table_markdown, "description": verbal.text, "question": question},
    )
    if trace is not None:
        trace.record_lm("textual_reasoning", gw.request_key(request), response.text)
    return response.text


def generate_guidance(
    focus: TableOfFocus,
    verbal: VerbalizedTable,
    question: str,
    lm: gw.Gateway,
    trace: ReasoningTrace | None = None,
) -> Guidance:
    request, response = lm.complete(
        "textual_guidance",
        {"table": render_markdown(focus.table), "description": verbal.text, "question": question},
    )
    if trace is not None:
        trace.record_lm("textual_guidance", gw.request_key(request), response.text)
    text = response.text.strip()
    if not text:
        text = "Answer step by step."
        if trace is not None:
            trace.warn("empty guidance reply; used the default guidance")
    return Guidance(text=text)


def symbolic_reasoning(
    focus: TableOfFocus,
    verbal: VerbalizedTable,
    question: str,
    guidance: Guidance,
    lm: gw.Gateway,
    trace: ReasoningTrace | None = None,
) -> str:
    """Program text extracted from the model reply (first fence, else whole reply)."""
    request, response = lm.complete(
        "symbolic_reasoning",
        {
            "table": render_markdown(focus.table),
            "description": verbal.text,
            "question": question,
            "guidance": guidance.text,
        },
    )
    if trace is not None:
        trace.record_lm("symbolic_reasoning", gw.request_key(request), response.text)
    return gw.extract_code_block(response.text)


def focus_as_csv(focus: TableOfFocus) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(focus.table.headers)
    writer.writerows(focus.table.rows)
    return buffer.getvalue()


def _limit_resources(memory_mb: int):
    def apply() -> None:
        try:
            import resource

            limit = memory_mb * 1024 * 1024
            resource.setrlimit(resource.RLIMIT_AS, (limit, limit))
        except Exception:
            pass

    return apply


def execute_program(
    program: str,
    focus: TableOfFocus,
    profile: ExecutorProfile = ExecutorProfile(),
    question: str = "",
) -> ExecutionResult:
    """Run an untrusted generated program in an isolated working directory.

    The focus table is written as table.csv and exported via TM_TABLE_PATH; the
    question via TM_QUESTION. The child gets a minimal environment, a memory
    cap, and a wall-clock timeout.
    """
    with tempfile.TemporaryDirectory(prefix="tf-exec-") as workdir:
        program_path = os.path.join(workdir, f"program{profile.extension}")
        table_path = os.path.join(workdir, "table.csv")
        with open(program_path, "w", encoding="utf-8") as fh:
            fh.write(program)
        with open(table_path, "w", encoding="utf-8") as fh:
            fh.write(focus_as_csv(focus))
        env = {
            "PATH": os.environ.get("PATH", "/usr/bin:/bin"),
            "HOME": workdir,
            TABLE_PATH_ENV: table_path,
            QUESTION_ENV: question,
        }
        start = time.monotonic()
        try:
            completed = subprocess.run(
                list(profile.command) + [program_path],
                cwd=workdir,
                env=env,
                capture_output=True,
                text=True,
                timeout=profile.timeout_s,
                preexec_fn=_limit_resources(profile.memory_mb),
            )
            duration = (time.monotonic() - start) * 1000.0
            return ExecutionResult(
                stdout=completed.stdout,
                exit_status=completed.returncode,
                duration_ms=duration,
                timed_out=False,
            )
        except subprocess.TimeoutExpired as exc:
            duration = (time.monotonic() - start) * 1000.0
            stdout = exc.stdout.decode("utf-8", "replace") if isinstance(exc.stdout, bytes) else (exc.stdout or "")
            return ExecutionResult(stdout=stdout, exit_status=-1, duration_ms=duration, timed_out=True)


def looks_abstaining(text: str) -> bool:
    lowered = text.lower()
    return any(marker in lowered for marker in _ABSTAIN_MARKERS)


def format_answer(
    question: str,
    raw: str,
    task_kind: str,
    lm: gw.Gateway,
    trace: ReasoningTrace | None = None,
) -> Answer:
    """Condense a raw reasoning result into the final short-form answer."""
    if not raw.strip():
        raise EmptyAnswer("raw reasoning result is empty")
    request, response = lm.complete("answer_formatting", {"question": question, "reasoning": raw})
    if trace is not None:
        trace.record_lm("answer_formatting", gw.request_key(request), response.text)
    formatted = response.text.strip()
    if not formatted:
        raise EmptyAnswer("formatted answer is blank")
    if looks_abstaining(formatted):
        return Answer(value="", task_kind=task_kind, abstained=True)
    if task_kind == "fact_verification":
        try:
            verdict = gw.parse_choice(
                formatted, ["True", "False"], synonyms={"yes": "True", "no": "False", "holds": "True"}
            )
        except gw.UnparseableReply:
            return Answer(value="", task_kind=task_kind, abstained=True)
        return Answer(value=verdict, task_kind=task_kind)
    return Answer(value=formatted, task_kind=task_kind)


def answer_adaptive(
    table: NormalizedTable,
    focus: TableOfFocus,
    verbal: VerbalizedTable,
    question: str,
    task_kind: str,
    lm: gw.Gateway,
    profile: ExecutorProfile = ExecutorProfile(),
    trace: ReasoningTrace | None = None,
    full_table_fallback: bool = True,
    reasoning_table: str = "focus",
) -> tuple[Answer, ReasoningTrace]:
    """One terminal answer per run, with bounded fallbacks and a complete trace.

    ``reasoning_table="full"`` reasons over the full normalized table plus the
    verbalized focus from the start instead of only on fallback.
    """
    trace = trace if trace is not None else ReasoningTrace()
    focus_markdown = render_markdown(focus.table)
    full_markdown = render_markdown(table.table)
    primary_markdown = full_markdown if reasoning_table == "full" else focus_markdown

    try:
        strategy = assess_strategy(focus, verbal, question, lm, trace=trace)
        trace.strategy = strategy.value
        raw: str | None = None

        if strategy.value == "symbolic":
            guidance = generate_guidance(focus, verbal, question, lm, trace=trace)
            trace.guidance = guidance.text
            program = symbolic_reasoning(focus, verbal, question, guidance, lm, trace=trace)
            trace.program = program
            result = execute_program(program, focus, profile=profile, question=question)
            trace.execution = {
                "exit_status": result.exit_status,
                "timed_out": result.timed_out,
                "stdout_digest": digest(result.stdout),
            }
            trace.record_exec(result.exit_status, result.timed_out, digest(result.stdout))
            if result.timed_out or result.exit_status != 0 or not result.answer_line:
                reason = (
                    "timeout" if result.timed_out
                    else "nonzero exit" if result.exit_status != 0
                    else "empty output"
                )
                trace.fallbacks.append(f"textual (executor {reason})")
                raw = textual_reasoning(primary_markdown, verbal, question, lm, trace=trace)
            else:
                raw = result.answer_line
        else:
            raw = textual_reasoning(primary_markdown, verbal, question, lm, trace=trace)

        try:
            answer = format_answer(question, raw, task_kind, lm, trace=trace)
        except EmptyAnswer:
            trace.warn("empty formatted answer")
            answer = Answer(value="", task_kind=task_kind, abstained=True)

        needs_full_retry = (answer.abstained or focus.table.row_count == 0) and full_table_fallback
        if needs_full_retry and reasoning_table != "full":
            trace.fallbacks.append("full_table_retry")
            raw = textual_reasoning(full_markdown, verbal, question, lm, trace=trace)
            try:
                answer = format_answer(question, raw, task_kind, lm, trace=trace)
            except EmptyAnswer:
                answer = Answer(value="", task_kind=task_kind, abstained=True)
    except Exception as exc:  # terminal failure still yields an answer plus trace
        trace.warn(f"terminal failure: {type(exc).__name__}: {exc}")
        answer = Answer(value="", task_kind=task_kind, abstained=True)

    trace.answer = {"value": answer.value, "task_kind": answer.task_kind, "abstained": answer.abstained}
    return answer, trace
