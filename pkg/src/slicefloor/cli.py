"""Command line entry point: ``slicefloor <command> ...``.

Exit codes: 0 success, 1 operational failure (illegal expression, infeasible
config, endpoint failure, bad input file), 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .annealer import SAConfig, anneal, repair
from .core import evaluate, format_ratio, place
from .datagen import FLAVORS, GenConfig, InfeasibleConfigError, evaluation_groups, iter_instances, load_instruction, record_json, to_record
from .encoding import ParseError, format_module_list, parse_module_list, parse_slicing_expr, serialize_slicing_expr
from .harness import export_report, extract_expression, format_table, rescore_raw_log, run_sweep, score_trial
from .llm_client import CompletionRequest, LLMClientError, load_endpoint_config, open_endpoint
from .oracle import DEFAULT_CAP, OracleCapExceeded, brute_force_optimum
from .render import RenderStyle, render_svg

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _modules(args):
    text = args.modules_str if args.modules_str is not None else Path(args.modules_file).read_text("utf-8")
    return parse_module_list(text.strip())


def _expr(args) -> str:
    if args.expr is not None:
        return args.expr
    if args.expr_file is not None:
        return Path(args.expr_file).read_text("utf-8").strip()
    raise UsageError("one of --expr or --expr-file is required")


def _counts(text: str) -> list[int]:
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = (int(v) for v in part.split("..", 1))
            out.extend(range(lo, hi + 1))
        else:
            out.append(int(part))
    if not out or min(out) < 1:
        raise UsageError(f"bad --counts {text!r}")
    return sorted(set(out))


def _gen_overrides(args) -> dict:
    return dict(
        width_range=(args.width_min, args.width_max),
        height_range=(args.height_min, args.height_max),
        min_side=args.min_side,
        id_pool=(args.id_min, args.id_max),
    )


def _sa_config(args) -> SAConfig:
    return SAConfig(
        seed=args.seed,
        initial_acceptance=args.initial_acceptance,
        cooling_alpha=args.alpha,
        moves_per_temperature=args.moves,
        min_temperature_ratio=args.min_temp_ratio,
        max_evaluations=args.budget,
    )


def _describe(result) -> str:
    env = result.envelope
    return f"DS={result.total_dead_space} envelope={env.width}x{env.height} D={format_ratio(result.dead_space_ratio)}"


def _instruction(args) -> str:
    return Path(args.instruction_file).read_text("utf-8") if args.instruction_file else load_instruction()


def _endpoint(args):
    if args.replay:
        return open_endpoint(f"replay:{args.replay}", on_missing=args.on_missing)
    if args.endpoint is None:
        raise UsageError("one of --endpoint or --replay is required")
    return open_endpoint(args.endpoint, args.config, on_missing=args.on_missing)


class _HashingWriter:
    def __init__(self, fh):
        self.fh = fh
        self.sha = hashlib.sha256()

    def write(self, data: bytes) -> int:
        self.sha.update(data)
        return self.fh.write(data)


def cmd_gen(args) -> int:
    cfg = GenConfig(module_count=args.modules, seed=args.seed, **_gen_overrides(args))
    instruction = _instruction(args)
    out = Path(args.out)
    n = 0
    with open(out, "wb", buffering=1 << 20) as fh:
        sink = _HashingWriter(fh)
        for inst in iter_instances(cfg, args.count, args.jobs):
            sink.write(record_json(to_record(inst, instruction), args.flavor).encode("utf-8") + b"\n")
            n += 1
    print(f"count={n} modules={args.modules} seed={args.seed} flavor={args.flavor} sha256={sink.sha.hexdigest()} out={out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    modules = _modules(args)
    text = _expr(args)
    if args.extract:
        text = extract_expression(text)
    try:
        tree = parse_slicing_expr(text, modules)
    except ParseError as exc:
        print(f"illegal {exc.kind.value}: {exc.detail} (token {exc.position})")
        return EXIT_FAIL
    print(_describe(evaluate(tree, modules)))
    return EXIT_OK


def cmd_oracle(args) -> int:
    modules = _modules(args)
    result = brute_force_optimum(modules, args.cap)
    witness = serialize_slicing_expr(result.witness_tree, modules)
    print(f"min_DS={result.min_dead_space} witness={witness} examined={result.expressions_examined}")
    return EXIT_OK


def cmd_anneal(args) -> int:
    modules = _modules(args)
    initial = parse_slicing_expr(args.init_expr, modules) if args.init_expr else None
    trace = anneal(modules, _sa_config(args), initial)
    expr = serialize_slicing_expr(trace.best_tree, modules)
    print(f"{_describe(trace.best_eval)} evaluations={trace.evaluations_used} expr={expr}")
    if args.svg:
        Path(args.svg).write_text(render_svg(place(trace.best_tree, modules), modules), "utf-8")
    return EXIT_OK


def cmd_infer(args) -> int:
    modules = _modules(args)
    endpoint = _endpoint(args)
    request = CompletionRequest(
        model=args.model,
        system=_instruction(args),
        user=format_module_list(modules),
        k=args.k,
        temperature=args.temperature,
        max_tokens=args.max_tokens,
        seed=args.seed,
    )
    try:
        batch = endpoint.complete(request)
        texts, error = batch.raw_texts, None
    except LLMClientError as exc:
        texts, error = [], f"{type(exc).__name__}: {exc}"
        print(f"endpoint error: {error}", file=sys.stderr)
    trial = score_trial(modules, texts, strict=args.strict, transport_error=error)
    for i, res in enumerate(trial.parse_results):
        status = _describe(res.eval) if res.legal else f"illegal {res.error_kind}"
        print(f"sample {i}: {status} expr={res.expression}")
    if trial.best_eval is not None:
        best_expr = trial.parse_results[trial.best_index].expression
        print(f"best: sample {trial.best_index} {_describe(trial.best_eval)} class={trial.classification.value}")
    else:
        best_expr = texts[0] if texts else ""
        print(f"best: none class={trial.classification.value}")
    if args.repair == "sa":
        tree, provenance = repair(modules, best_expr, _sa_config(args), extract=not args.strict)
        print(f"repair: provenance={provenance.value} {_describe(evaluate(tree, modules))} expr={serialize_slicing_expr(tree, modules)}")
        return EXIT_OK
    return EXIT_OK if trial.best_eval is not None else EXIT_FAIL


def cmd_sweep(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.rescore:
        with open(args.rescore, encoding="utf-8") as fh:
            report = rescore_raw_log(fh, args.k, args.seed, args.strict)
    else:
        counts = _counts(args.counts)
        groups = evaluation_groups(counts, args.samples, args.seed, **_gen_overrides(args))
        endpoint = _endpoint(args)
        concurrency = args.jobs
        if args.config and not args.jobs_set:
            concurrency = load_endpoint_config(args.config).concurrency
        with open(out_dir / "raw.jsonl", "w", encoding="utf-8", newline="\n") as raw:
            report = run_sweep(
                groups,
                endpoint,
                args.k,
                args.seed,
                instruction=_instruction(args),
                model=args.model,
                temperature=args.temperature,
                max_tokens=args.max_tokens,
                concurrency=concurrency,
                raw_log=raw,
                strict=args.strict,
            )
    with open(out_dir / "report.json", "wb") as fh:
        export_report(report, "json", fh)
    with open(out_dir / "report.csv", "wb") as fh:
        export_report(report, "csv", fh)
    print(format_table(report))
    return EXIT_OK


def cmd_render(args) -> int:
    modules = _modules(args)
    tree = parse_slicing_expr(_expr(args), modules)
    svg = render_svg(place(tree, modules), modules, RenderStyle(scale=args.scale))
    if args.out in (None, "-"):
        sys.stdout.write(svg)
    else:
        Path(args.out).write_text(svg, "utf-8")
    return EXIT_OK


def _add_modules(p):
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--modules-str", help='module list, e.g. "P_0(2,3);P_1(4,5)"')
    g.add_argument("--modules-file", help="file holding a module list")


def _add_expr(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--expr", help='post-order slicing expression, e.g. "P_0;P_1;V"')
    g.add_argument("--expr-file", help="file holding a slicing expression")


def _add_gen_ranges(p):
    p.add_argument("--width-min", type=int, default=1000)
    p.add_argument("--width-max", type=int, default=25000)
    p.add_argument("--height-min", type=int, default=1000)
    p.add_argument("--height-max", type=int, default=25000)
    p.add_argument("--min-side", type=int, default=4, help="smallest module side (default: 4)")
    p.add_argument("--id-min", type=int, default=0)
    p.add_argument("--id-max", type=int, default=99)


def _add_sa(p, budget: int):
    d = SAConfig()
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=int, default=budget, help=f"max cost evaluations (default: {budget})")
    p.add_argument("--alpha", type=float, default=d.cooling_alpha, help="geometric cooling factor")
    p.add_argument("--initial-acceptance", type=float, default=d.initial_acceptance)
    p.add_argument("--moves", type=int, default=d.moves_per_temperature, help="proposals per temperature, times n")
    p.add_argument("--min-temp-ratio", type=float, default=d.min_temperature_ratio)


def _add_llm(p):
    p.add_argument("--endpoint", help="'live' (needs --config) or 'replay:<file>'")
    p.add_argument("--replay", help="replay file; shorthand for --endpoint replay:<file>")
    p.add_argument("--config", help="endpoint config file (key = value lines)")
    p.add_argument("--on-missing", choices=("error", "empty"), default="error", help="replay behaviour for unknown prompts")
    p.add_argument("--k", type=int, default=5, help="samples per prompt (default: 5)")
    p.add_argument("--model", default="")
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--max-tokens", type=int, default=1024)
    p.add_argument("--instruction-file", help="system instruction (default: bundled template)")
    p.add_argument("--strict", action="store_true", help="parse outputs verbatim, no expression extraction")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slicefloor", description="Slicing floorplan tools.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    jobs_default = os.cpu_count() or 1

    p = sub.add_parser("gen", help="generate an optimal-floorplan fine-tuning dataset")
    p.add_argument("--modules", type=int, required=True, help="modules per instance")
    p.add_argument("--count", type=int, required=True, help="number of records")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output JSONL path")
    p.add_argument("--flavor", choices=FLAVORS, default="generic")
    p.add_argument("--instruction-file", help="instruction text (default: bundled template)")
    p.add_argument("--jobs", type=int, default=jobs_default, help="worker processes")
    _add_gen_ranges(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("eval", help="score one slicing expression")
    _add_modules(p)
    _add_expr(p)
    p.add_argument("--extract", action="store_true", help="pull the expression out of surrounding text first")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("oracle", help="exhaustive minimum dead space for small module sets")
    _add_modules(p)
    p.add_argument("--cap", type=int, default=DEFAULT_CAP, help=f"largest module count allowed (default: {DEFAULT_CAP})")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("anneal", help="simulated annealing floorplanner")
    _add_modules(p)
    _add_sa(p, SAConfig().max_evaluations)
    p.add_argument("--init-expr", help="start from this expression instead of a random one")
    p.add_argument("--svg", help="also write the best floorplan as SVG")
    p.set_defaults(func=cmd_anneal)

    p = sub.add_parser("infer", help="sample expressions from an endpoint and score them")
    _add_modules(p)
    _add_llm(p)
    _add_sa(p, 20_000)
    p.add_argument("--repair", choices=("none", "sa"), default="none", help="post-process the best output with the annealer")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("sweep", help="success/optimal rate and dead-space sweep over module counts")
    _add_llm(p)
    p.add_argument("--counts", default="13..19", help="module counts, e.g. 13..19 or 14,16 (default: 13..19)")
    p.add_argument("--samples", type=int, default=50, help="test cases per count (default: 50)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".", help="where report.json, report.csv and raw.jsonl go")
    p.add_argument("--rescore", help="rebuild reports from an existing raw.jsonl instead of querying")
    p.add_argument("--jobs", type=int, default=None, help="requests in flight")
    _add_gen_ranges(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("render", help="draw a floorplan as SVG")
    _add_modules(p)
    _add_expr(p)
    p.add_argument("--out", help="SVG path (default: stdout)")
    p.add_argument("--scale", type=float, default=1.0)
    p.set_defaults(func=cmd_render)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "sweep":
        args.jobs_set = args.jobs is not None
        if args.jobs is None:
            args.jobs = 1
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except ParseError as exc:
        print(f"error: {exc.kind.value}: {exc.detail}", file=sys.stderr)
        return EXIT_FAIL
    except (InfeasibleConfigError, OracleCapExceeded, LLMClientError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
