"""Adaptive reasoning: strategy choice, sandboxed execution, answer formatting,
and the fallback ladder."""

from __future__ import annotations

import pytest

from tablefocus import gateway as gw
from tablefocus.content import VerbalizedTable
from tablefocus.normalize import skip_normalization
from tablefocus.reasoning import (
    Answer,
    ExecutionResult,
    ExecutorProfile,
    Strategy,
    answer_adaptive,
    assess_strategy,
    execute_program,
    focus_as_csv,
    format_answer,
    looks_abstaining,
)
from tablefocus.sqlrows import RowSet
from tablefocus.structure import construct_focus
from tablefocus.trace import ReasoningTrace

from conftest import RIDERS_TABLE, make_gateway

NORM = skip_normalization(RIDERS_TABLE)
FOCUS = construct_focus(NORM, RowSet(indices=(0, 2, 4), sql="..."), ["Rider", "Country", "Wins"])
VERBAL = VerbalizedTable(text="Three Belgian riders with wins 3, 2, 2.", source_focus_hash="h")


class TestStrategyAndAnswerTypes:
    def test_strategy_validation(self):
        with pytest.raises(ValueError):
            Strategy("magical")

    def test_fact_verification_answers_constrained(self):
        with pytest.raises(ValueError):
            Answer(value="maybe", task_kind="fact_verification")
        Answer(value="True", task_kind="fact_verification")
        Answer(value="", task_kind="fact_verification", abstained=True)

    def test_unknown_task_kind(self):
        with pytest.raises(ValueError):
            Answer(value="x", task_kind="oracle")

    def test_answer_line_is_last_nonempty(self):
        result = ExecutionResult(stdout="a\n\n b \n\n", exit_status=0, duration_ms=1.0, timed_out=False)
        assert result.answer_line == "b"
        empty = ExecutionResult(stdout="\n\n", exit_status=0, duration_ms=1.0, timed_out=False)
        assert empty.answer_line == ""


class TestAssessStrategy:
    def test_direct_labels(self):
        lm = make_gateway({"strategy_assessment": ["symbolic"]})
        assert assess_strategy(FOCUS, VERBAL, "q", lm).value == "symbolic"

    @pytest.mark.parametrize("reply,expected", [
        ("write python code", "symbolic"),
        ("a program would help", "symbolic"),
        ("chain-of-thought is enough", "textual"),
        ("simple retrieval", "textual"),
    ])
    def test_synonyms(self, reply, expected):
        lm = make_gateway({"strategy_assessment": [reply]})
        assert assess_strategy(FOCUS, VERBAL, "q", lm).value == expected

    def test_unparseable_defaults_to_textual(self):
        lm = make_gateway({"strategy_assessment": ["whatever works"]})
        trace = ReasoningTrace()
        assert assess_strategy(FOCUS, VERBAL, "q", lm, trace=trace).value == "textual"
        assert any("defaulted to textual" in w for w in trace.warnings)


class TestExecuteProgram:
    def test_table_and_question_exposed_via_env(self):
        program = (
            "import os\n"
            "print(open(os.environ['TM_TABLE_PATH']).readline().strip())\n"
            "print(os.environ['TM_QUESTION'])\n"
        )
        result = execute_program(program, FOCUS, question="the question?")
        assert result.exit_status == 0
        assert result.stdout.splitlines()[0] == "Rider,Country,Wins"
        assert result.answer_line == "the question?"

    def test_focus_as_csv_round_trips(self):
        text = focus_as_csv(FOCUS)
        lines = text.strip().splitlines()
        assert lines[0] == "Rider,Country,Wins"
        assert len(lines) == 4

    def test_nonzero_exit(self):
        result = execute_program("import sys; sys.exit(3)", FOCUS)
        assert result.exit_status == 3
        assert not result.timed_out

    def test_stderr_not_in_answer_channel(self):
        result = execute_program("import sys; print('ans'); print('noise', file=sys.stderr)", FOCUS)
        assert result.answer_line == "ans"

    def test_timeout(self):
        profile = ExecutorProfile(timeout_s=0.5)
        result = execute_program("while True: pass", FOCUS, profile=profile)
        assert result.timed_out
        assert result.exit_status == -1

    def test_runs_in_isolated_workdir(self):
        result = execute_program("import os; print(os.getcwd())", FOCUS)
        assert "tf-exec-" in result.answer_line


class TestFormatAnswer:
    def test_plain_qa(self):
        lm = make_gateway({"answer_formatting": ["  7  "]})
        got = format_answer("q", "reasoning...", "qa", lm)
        assert got == Answer(value="7", task_kind="qa")

    def test_abstention_markers(self):
        assert looks_abstaining("I cannot answer this")
        assert looks_abstaining("Not enough information given")
        assert not looks_abstaining("42")
        lm = make_gateway({"answer_formatting": ["The question cannot be answered."]})
        assert format_answer("q", "r", "qa", lm).abstained

    def test_fact_verification_parsing(self):
        lm = make_gateway({"answer_formatting": ["The claim is true", "no way", "perhaps"]})
        assert format_answer("q", "r", "fact_verification", lm).value == "True"
        assert format_answer("q", "r", "fact_verification", lm).value == "False"
        assert format_answer("q", "r", "fact_verification", lm).abstained

    def test_empty_inputs_raise(self):
        from tablefocus.reasoning import EmptyAnswer

        lm = make_gateway({"answer_formatting": [""]})
        with pytest.raises(EmptyAnswer):
            format_answer("q", "   ", "qa", lm)
        with pytest.raises(EmptyAnswer):
            format_answer("q", "r", "qa", lm)


class _RecordingBackend:
    """Scripted backend that also remembers every request it saw."""

    def __init__(self, replies):
        self.inner = gw.ScriptedBackend(replies)
        self.requests = []

    def send(self, request):
        self.requests.append(request)
        return self.inner.send(request)


class TestAnswerAdaptive:
    def test_textual_path(self):
        lm = make_gateway({
            "strategy_assessment": ["textual"],
            "textual_reasoning": ["sum is 7. Answer: 7"],
            "answer_formatting": ["7"],
        })
        answer, trace = answer_adaptive(NORM, FOCUS, VERBAL, "q", "qa", lm)
        assert answer == Answer(value="7", task_kind="qa")
        assert trace.strategy == "textual"
        assert trace.fallbacks == []

    def test_symbolic_path_uses_executor_output(self):
        lm = make_gateway({
            "strategy_assessment": ["symbolic"],
            "textual_guidance": ["sum the wins"],
            "symbolic_reasoning": ["```python\nprint(3 + 2 + 2)\n```"],
            "answer_formatting": ["7"],
        })
        answer, trace = answer_adaptive(NORM, FOCUS, VERBAL, "q", "qa", lm)
        assert answer.value == "7"
        assert trace.strategy == "symbolic"
        assert trace.program == "print(3 + 2 + 2)"
        assert trace.execution["exit_status"] == 0

    def test_executor_failure_falls_back_to_textual(self):
        lm = make_gateway({
            "strategy_assessment": ["symbolic"],
            "textual_guidance": ["g"],
            "symbolic_reasoning": ["```python\nimport sys\nsys.exit(2)\n```"],
            "textual_reasoning": ["Answer: 7"],
            "answer_formatting": ["7"],
        })
        answer, trace = answer_adaptive(NORM, FOCUS, VERBAL, "q", "qa", lm)
        assert answer.value == "7"
        assert any("nonzero exit" in f for f in trace.fallbacks)

    def test_executor_timeout_falls_back_to_textual(self):
        lm = make_gateway({
            "strategy_assessment": ["symbolic"],
            "textual_guidance": ["g"],
            "symbolic_reasoning": ["```python\nwhile True: pass\n```"],
            "textual_reasoning": ["Answer: 7"],
            "answer_formatting": ["7"],
        })
        answer, trace = answer_adaptive(
            NORM, FOCUS, VERBAL, "q", "qa", lm, profile=ExecutorProfile(timeout_s=0.5)
        )
        assert answer.value == "7"
        assert any("timeout" in f for f in trace.fallbacks)

    def test_abstention_triggers_full_table_retry(self):
        backend = _RecordingBackend({
            "strategy_assessment": ["textual"],
            "textual_reasoning": ["cannot answer from this", "found it. Answer: 1"],
            "answer_formatting": ["cannot answer", "1"],
        })
        lm = gw.Gateway(backend)
        answer, trace = answer_adaptive(NORM, FOCUS, VERBAL, "q", "qa", lm)
        assert answer.value == "1"
        assert "full_table_retry" in trace.fallbacks
        retry = [r for r in backend.requests if r.template_id == "textual_reasoning"][1]
        assert "Hans Weber" in retry.rendered  # non-focus row appears only in the full table

    def test_abstention_respected_when_fallback_disabled(self):
        lm = make_gateway({
            "strategy_assessment": ["textual"],
            "textual_reasoning": ["cannot answer"],
            "answer_formatting": ["cannot answer"],
        })
        answer, trace = answer_adaptive(NORM, FOCUS, VERBAL, "q", "qa", lm, full_table_fallback=False)
        assert answer.abstained
        assert "full_table_retry" not in trace.fallbacks

    def test_full_reasoning_table_variant(self):
        backend = _RecordingBackend({
            "strategy_assessment": ["textual"],
            "textual_reasoning": ["Answer: 1"],
            "answer_formatting": ["1"],
        })
        lm = gw.Gateway(backend)
        answer, _ = answer_adaptive(NORM, FOCUS, VERBAL, "q", "qa", lm, reasoning_table="full")
        first = [r for r in backend.requests if r.template_id == "textual_reasoning"][0]
        assert "Hans Weber" in first.rendered
        assert answer.value == "1"

    def test_terminal_failure_yields_abstained_answer(self):
        lm = make_gateway({})  # every call raises TransportError
        answer, trace = answer_adaptive(NORM, FOCUS, VERBAL, "q", "qa", lm)
        assert answer.abstained
        assert any("terminal failure" in w for w in trace.warnings)
        assert trace.answer == {"value": "", "task_kind": "qa", "abstained": True}
