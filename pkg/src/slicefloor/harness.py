"""Best-of-k scoring of model outputs and sweep reports.

For each test case the model is sampled ``k`` times; the case counts as legal
if any sample parses to a legal tree, and its score is the lowest dead-space
ratio among legal samples. Per module count the report gives

* success rate ``S = 100 * N_legal / N_total``,
* optimal rate ``O = 100 * N_optimal / N_total``,
* mean dead-space ratio ``D`` over legal cases only.

All three are exact fractions; decimals appear only in exported text.

Raw-log lines (one per case, written before scoring)::

    {"module_count", "case_index", "prompt", "outputs", "system_hash", "user_hash", "error"}

The hash fields make a raw log loadable as a replay file.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import re
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import BinaryIO, Iterable, Mapping, Optional, Sequence, TextIO, Union

from .core import EvalResult, ModuleDef, evaluate, format_ratio
from .datagen import Instance, load_instruction
from .encoding import ParseError, format_module_list, parse_module_list, parse_slicing_expr
from .llm_client import CompletionRequest, Endpoint, LLMClientError, complete_many, text_hash
from .rng import derive_seed

CSV_COLUMNS = (
    "module_count",
    "case_index",
    "classification",
    "best_output",
    "best_dead_space_ratio",
    "best_dead_space_ratio_exact",
)

_TOKEN = r"(?<![A-Za-z0-9_])(?:[Pp]_?\d+|[HVhv])(?![A-Za-z0-9_(])"
_RUN_RE = re.compile(rf"{_TOKEN}(?:\s*;\s*{_TOKEN})*")


class Classification(str, enum.Enum):
    ILLEGAL = "illegal"
    LEGAL_SUBOPTIMAL = "legal_suboptimal"
    OPTIMAL = "optimal"

    def __str__(self) -> str:
        return self.value


def extract_expression(raw: str, strict: bool = False) -> str:
    """Longest ``;``-joined run of leaf/operator tokens in ``raw``.

    Strips surrounding prose, code fences and trailing punctuation. Ties go to
    the earliest run. In strict mode the text is returned untouched.
    """
    if strict:
        return raw
    best = ""
    best_len = 0
    for match in _RUN_RE.finditer(raw):
        n_tokens = match.group(0).count(";") + 1
        if n_tokens > best_len:
            best, best_len = match.group(0), n_tokens
    return best


@dataclass(frozen=True)
class SampleResult:
    expression: str
    legal: bool
    error_kind: Optional[str] = None
    eval: Optional[EvalResult] = None


@dataclass(frozen=True)
class TrialOutcome:
    case_index: int
    module_count: int
    raw_outputs: tuple[str, ...]
    parse_results: tuple[SampleResult, ...]
    best_eval: Optional[EvalResult]
    best_index: Optional[int]
    classification: Classification
    transport_error: Optional[str] = None


def score_trial(
    modules: Sequence[ModuleDef],
    raw_outputs: Sequence[str],
    case_index: int = 0,
    strict: bool = False,
    transport_error: Optional[str] = None,
) -> TrialOutcome:
    results = []
    best_eval: Optional[EvalResult] = None
    best_index: Optional[int] = None
    for i, raw in enumerate(raw_outputs):
        expr = extract_expression(raw, strict)
        try:
            tree = parse_slicing_expr(expr, modules)
        except ParseError as exc:
            results.append(SampleResult(expr, False, exc.kind.value))
            continue
        ev = evaluate(tree, modules)
        results.append(SampleResult(expr, True, None, ev))
        if best_eval is None or ev.dead_space_ratio < best_eval.dead_space_ratio:
            best_eval, best_index = ev, i
    if best_eval is None:
        cls = Classification.ILLEGAL
    elif best_eval.total_dead_space == 0:
        cls = Classification.OPTIMAL
    else:
        cls = Classification.LEGAL_SUBOPTIMAL
    return TrialOutcome(
        case_index, len(modules), tuple(raw_outputs), tuple(results), best_eval, best_index, cls, transport_error
    )


@dataclass(frozen=True)
class CountSummary:
    module_count: int
    n_total: int
    n_legal: int
    n_optimal: int
    success_rate: Fraction
    optimal_rate: Fraction
    mean_dead_space_ratio: Optional[Fraction]
    trials: tuple[TrialOutcome, ...]

    @property
    def case_matrix(self) -> list[Optional[Fraction]]:
        return [t.best_eval.dead_space_ratio if t.best_eval else None for t in self.trials]


@dataclass(frozen=True)
class SweepReport:
    k: int
    seed: int
    strict: bool = False
    counts: tuple[CountSummary, ...] = field(default_factory=tuple)

    def summary(self, module_count: int) -> CountSummary:
        for c in self.counts:
            if c.module_count == module_count:
                return c
        raise KeyError(module_count)


def summarize(module_count: int, trials: Sequence[TrialOutcome]) -> CountSummary:
    trials = tuple(sorted(trials, key=lambda t: t.case_index))
    n_total = len(trials)
    legal = [t for t in trials if t.best_eval is not None]
    n_optimal = sum(1 for t in trials if t.classification is Classification.OPTIMAL)
    if n_total == 0:
        s = o = Fraction(0)
    else:
        s = Fraction(100 * len(legal), n_total)
        o = Fraction(100 * n_optimal, n_total)
    d = sum((t.best_eval.dead_space_ratio for t in legal), Fraction(0)) / len(legal) if legal else None
    return CountSummary(module_count, n_total, len(legal), n_optimal, s, o, d, trials)


def aggregate(trials: Iterable[TrialOutcome], k: int, seed: int = 0, strict: bool = False) -> SweepReport:
    groups: dict[int, list[TrialOutcome]] = {}
    for t in trials:
        groups.setdefault(t.module_count, []).append(t)
    return SweepReport(k, seed, strict, tuple(summarize(c, groups[c]) for c in sorted(groups)))


def case_seed(seed: int, module_count: int, case_index: int) -> int:
    return derive_seed(derive_seed(seed, module_count), case_index)


def _modules_of(case: Union[Instance, Sequence[ModuleDef]]) -> Sequence[ModuleDef]:
    return case.modules if isinstance(case, Instance) else case


def run_sweep(
    groups: Mapping[int, Sequence[Union[Instance, Sequence[ModuleDef]]]],
    endpoint: Endpoint,
    k: int = 5,
    seed: int = 0,
    *,
    instruction: Optional[str] = None,
    model: str = "",
    temperature: float = 1.0,
    max_tokens: int = 1024,
    concurrency: int = 1,
    raw_log: Optional[TextIO] = None,
    strict: bool = False,
) -> SweepReport:
    """Query ``endpoint`` ``k`` times per case and score every case.

    Cases are visited in (module count, case index) order. Client errors mark
    the case illegal with its error text kept in ``transport_error``; they do
    not stop the sweep.
    """
    system = load_instruction() if instruction is None else instruction
    keys: list[tuple[int, int, Sequence[ModuleDef]]] = []
    requests: list[CompletionRequest] = []
    for count in sorted(groups):
        for case_index, case in enumerate(groups[count]):
            modules = _modules_of(case)
            keys.append((count, case_index, modules))
            requests.append(
                CompletionRequest(
                    model=model,
                    system=system,
                    user=format_module_list(modules),
                    k=k,
                    temperature=temperature,
                    max_tokens=max_tokens,
                    seed=case_seed(seed, count, case_index),
                )
            )
    results = complete_many(endpoint, requests, concurrency)

    if raw_log is not None:
        for (count, case_index, _), req, res in zip(keys, requests, results):
            raw_log.write(raw_log_line(count, case_index, req, res) + "\n")

    trials = []
    for (count, case_index, modules), res in zip(keys, results):
        if isinstance(res, LLMClientError):
            trial = score_trial(modules, [], case_index, strict, transport_error=f"{type(res).__name__}: {res}")
        else:
            trial = score_trial(modules, res.raw_texts, case_index, strict)
        trials.append(_with_count(trial, count))
    return aggregate(trials, k, seed, strict)


def _with_count(trial: TrialOutcome, count: int) -> TrialOutcome:
    return trial if trial.module_count == count else replace(trial, module_count=count)


def raw_log_line(count: int, case_index: int, request: CompletionRequest, result) -> str:
    error = f"{type(result).__name__}: {result}" if isinstance(result, LLMClientError) else None
    outputs = [] if error else result.raw_texts
    return json.dumps(
        {
            "module_count": count,
            "case_index": case_index,
            "prompt": request.user,
            "outputs": outputs,
            "system_hash": text_hash(request.system),
            "user_hash": text_hash(request.user),
            "error": error,
        },
        ensure_ascii=False,
    )


def rescore_raw_log(lines: Iterable[str], k: int, seed: int = 0, strict: bool = False) -> SweepReport:
    """Rebuild a report from a persisted raw log; scoring needs only prompts and outputs."""
    trials = []
    for line in lines:
        if not line.strip():
            continue
        obj = json.loads(line)
        modules = parse_module_list(obj["prompt"])
        trial = score_trial(modules, obj["outputs"], obj["case_index"], strict, obj.get("error"))
        trials.append(_with_count(trial, obj["module_count"]))
    return aggregate(trials, k, seed, strict)


def _ratio(value: Optional[Fraction]):
    if value is None:
        return None
    return {"exact": str(value), "decimal": format_ratio(value)}


def report_to_dict(report: SweepReport) -> dict:
    return {
        "k": report.k,
        "seed": report.seed,
        "extraction": "strict" if report.strict else "lenient",
        "counts": [
            {
                "module_count": c.module_count,
                "n_total": c.n_total,
                "n_legal": c.n_legal,
                "n_optimal": c.n_optimal,
                "success_rate": _ratio(c.success_rate),
                "optimal_rate": _ratio(c.optimal_rate),
                "mean_dead_space_ratio": _ratio(c.mean_dead_space_ratio),
                "cases": [
                    {
                        "case_index": t.case_index,
                        "classification": t.classification.value,
                        "best_output": t.best_index,
                        "best_dead_space_ratio": _ratio(t.best_eval.dead_space_ratio if t.best_eval else None),
                        "legal_outputs": sum(1 for r in t.parse_results if r.legal),
                        "error_kinds": [r.error_kind for r in t.parse_results],
                        "transport_error": t.transport_error,
                    }
                    for t in c.trials
                ],
            }
            for c in report.counts
        ],
    }


def export_report(report: SweepReport, fmt: str, sink: BinaryIO) -> int:
    """Write ``json`` (full structure) or ``csv`` (one row per case); returns bytes written.

    CSV columns, in order: module_count, case_index, classification,
    best_output, best_dead_space_ratio, best_dead_space_ratio_exact. Illegal
    cases leave the three best_* cells empty.
    """
    if fmt == "json":
        data = (json.dumps(report_to_dict(report), indent=2) + "\n").encode("utf-8")
    elif fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for c in report.counts:
            for t in c.trials:
                ratio = t.best_eval.dead_space_ratio if t.best_eval else None
                writer.writerow(
                    [
                        c.module_count,
                        t.case_index,
                        t.classification.value,
                        "" if t.best_index is None else t.best_index,
                        "" if ratio is None else format_ratio(ratio),
                        "" if ratio is None else str(ratio),
                    ]
                )
        data = buf.getvalue().encode("utf-8")
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    sink.write(data)
    return len(data)


def format_table(report: SweepReport) -> str:
    lines = [f"{'modules':>7}  {'N':>4}  {'S(%)':>8}  {'O(%)':>8}  {'D':>10}"]
    for c in report.counts:
        d = "-" if c.mean_dead_space_ratio is None else format_ratio(c.mean_dead_space_ratio, 4)
        lines.append(
            f"{c.module_count:>7}  {c.n_total:>4}  {format_ratio(c.success_rate, 2):>8}  "
            f"{format_ratio(c.optimal_rate, 2):>8}  {d:>10}"
        )
    return "\n".join(lines)
