"""Simulated annealing over normalized Polish expressions.

This is the conventional floorplanner the language model is paired with: it
searches from scratch when the model output is unusable, and polishes a legal
model output otherwise. Cost is total dead space; there is no wirelength term.

Expressions are token lists: module positions are ints, cuts are ``"H"`` or
``"V"``. Normalized means no two equal operators are adjacent.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

from .core import Cut, CutKind, EvalResult, Leaf, ModuleDef, Node, evaluate, postorder
from .encoding import ParseError, parse_slicing_expr
from .rng import SplitMix64

OPERATORS = ("H", "V")
_FLIP = {"H": "V", "V": "H"}


@dataclass(frozen=True)
class SAConfig:
    seed: int = 0
    initial_acceptance: float = 0.9
    cooling_alpha: float = 0.9
    moves_per_temperature: int = 60  # multiplied by the module count
    min_temperature_ratio: float = 1e-4
    max_evaluations: int = 200_000  # 0 disables search entirely

    def __post_init__(self):
        if not 0 < self.initial_acceptance < 1:
            raise ValueError("initial_acceptance must lie in (0, 1)")
        if not 0 < self.cooling_alpha < 1:
            raise ValueError("cooling_alpha must lie in (0, 1)")
        if self.moves_per_temperature < 1:
            raise ValueError("moves_per_temperature must be positive")
        if self.min_temperature_ratio <= 0:
            raise ValueError("min_temperature_ratio must be positive")
        if self.max_evaluations < 0:
            raise ValueError("max_evaluations must be non-negative")


@dataclass
class AnnealTrace:
    best_tree: Node
    best_eval: EvalResult
    evaluations_used: int
    accepted_moves: int
    best_cost_series: list[int] = field(default_factory=list)


class Provenance(str, enum.Enum):
    LLM_DIRECT = "llm_direct"
    LLM_POLISHED = "llm_polished"
    SA_FALLBACK = "sa_fallback"

    def __str__(self) -> str:
        return self.value


def _cluster(node: Node, kind: CutKind) -> list[Node]:
    if isinstance(node, Cut) and node.kind is kind:
        return _cluster(node.left, kind) + _cluster(node.right, kind)
    return [node]


def normalize_tree(tree: Node) -> Node:
    """Re-associate same-kind cut chains into left-deep form.

    Merging is associative along one direction, so the floorplan (and its
    dead space) is unchanged; only the tree shape becomes canonical.
    """
    if isinstance(tree, Leaf):
        return tree
    kids = [normalize_tree(child) for child in _cluster(tree, tree.kind)]
    acc = kids[0]
    for kid in kids[1:]:
        acc = Cut(tree.kind, acc, kid)
    return acc


def tree_to_polish(tree: Node) -> list:
    return [n.index if isinstance(n, Leaf) else n.kind.value for n in postorder(normalize_tree(tree))]


def polish_to_tree(expr: Sequence) -> Node:
    stack: list[Node] = []
    for tok in expr:
        if tok in OPERATORS:
            r = stack.pop()
            l = stack.pop()
            stack.append(Cut(CutKind(tok), l, r))
        else:
            stack.append(Leaf(tok))
    if len(stack) != 1:
        raise ValueError("not a complete Polish expression")
    return stack[0]


def is_normalized(expr: Sequence, n: int) -> bool:
    """Balloting property, operand coverage, and no equal adjacent operators."""
    if len(expr) != 2 * n - 1:
        return False
    operands = operators = 0
    prev = None
    seen = set()
    for tok in expr:
        if tok in OPERATORS:
            operators += 1
            if tok == prev or operators >= operands:
                return False
        else:
            operands += 1
            seen.add(tok)
        prev = tok
    return operands == n and seen == set(range(n))


def random_expression(n: int, rng: SplitMix64) -> list:
    """Random permutation of operands with alternating operators: always normalized."""
    perm = list(range(n))
    rng.shuffle(perm)
    op = rng.below(2)
    expr: list = [perm[0]]
    for p in perm[1:]:
        expr.append(p)
        expr.append(OPERATORS[op])
        op ^= 1
    return expr


def _cost(expr: Sequence, widths: Sequence[int], heights: Sequence[int]) -> int:
    """Envelope area of a Polish expression."""
    stack: list[tuple[int, int]] = []
    push = stack.append
    pop = stack.pop
    for tok in expr:
        if tok == "V":
            w2, h2 = pop()
            w1, h1 = pop()
            push((w1 + w2, h1 if h1 > h2 else h2))
        elif tok == "H":
            w2, h2 = pop()
            w1, h1 = pop()
            push((w1 if w1 > w2 else w2, h1 + h2))
        else:
            push((widths[tok], heights[tok]))
    w, h = stack[0]
    return w * h


def propose(expr: list, rng: SplitMix64) -> list:
    """One random neighbour of a normalized expression (the input is not modified).

    Move 1 swaps two operands adjacent in operand order, move 2 complements a
    maximal operator chain, move 3 swaps an adjacent operand/operator pair when
    the result stays normalized. Move 3 falls back to move 1 if no swap is legal.
    """
    new = list(expr)
    move = rng.below(3)
    if move == 2:
        candidates = []
        operators = 0
        for i in range(len(new) - 1):
            a, b = new[i], new[i + 1]
            a_op = a in OPERATORS
            b_op = b in OPERATORS
            if not a_op and b_op:
                # operator moves left to position i
                if 2 * operators + 1 < i and (i == 0 or new[i - 1] != b):
                    candidates.append(i)
            elif a_op and not b_op:
                # operator moves right to position i + 1
                if i + 2 >= len(new) or new[i + 2] != a:
                    candidates.append(i)
            if a_op:
                operators += 1
        if candidates:
            i = candidates[rng.below(len(candidates))]
            new[i], new[i + 1] = new[i + 1], new[i]
            return new
        move = 0
    if move == 0:
        slots = [i for i, tok in enumerate(new) if tok not in OPERATORS]
        k = rng.below(len(slots) - 1)
        a, b = slots[k], slots[k + 1]
        new[a], new[b] = new[b], new[a]
        return new
    chains = []
    i = 0
    while i < len(new):
        if new[i] in OPERATORS:
            j = i
            while j < len(new) and new[j] in OPERATORS:
                j += 1
            chains.append((i, j))
            i = j
        else:
            i += 1
    start, stop = chains[rng.below(len(chains))]
    for j in range(start, stop):
        new[j] = _FLIP[new[j]]
    return new


def anneal(modules: Sequence[ModuleDef], cfg: SAConfig = SAConfig(), initial: Node | None = None) -> AnnealTrace:
    """Minimise total dead space, starting from ``initial`` or a random expression.

    Deterministic in ``(modules, cfg, initial)``. The recorded best only
    changes on strict improvement.
    """
    n = len(modules)
    if n < 1:
        raise ValueError("need at least one module")
    rng = SplitMix64(cfg.seed)
    widths = [m.width for m in modules]
    heights = [m.height for m in modules]
    area_sum = sum(m.area for m in modules)

    current = tree_to_polish(initial) if initial is not None else random_expression(n, rng)
    cur_cost = _cost(current, widths, heights) - area_sum
    evals = 1
    best, best_cost = current, cur_cost
    accepted = 0
    series: list[int] = []

    def finish() -> AnnealTrace:
        tree = polish_to_tree(best)
        return AnnealTrace(tree, evaluate(tree, modules), evals, accepted, series)

    if n == 1 or best_cost == 0 or cfg.max_evaluations <= evals:
        return finish()

    # starting temperature from the mean uphill step around the start state
    uphill = []
    for _ in range(min(max(20, 2 * n), cfg.max_evaluations - evals)):
        cand = propose(current, rng)
        cost = _cost(cand, widths, heights) - area_sum
        evals += 1
        if cost > cur_cost:
            uphill.append(cost - cur_cost)
        if cost < best_cost:
            best, best_cost = cand, cost
    if uphill:
        t0 = -(sum(uphill) / len(uphill)) / math.log(cfg.initial_acceptance)
    else:
        t0 = max(1.0, float(cur_cost))
    temperature = t0
    floor = t0 * cfg.min_temperature_ratio
    per_level = cfg.moves_per_temperature * n

    while evals < cfg.max_evaluations and temperature >= floor and best_cost > 0:
        for _ in range(per_level):
            if evals >= cfg.max_evaluations:
                break
            cand = propose(current, rng)
            cost = _cost(cand, widths, heights) - area_sum
            evals += 1
            delta = cost - cur_cost
            if delta <= 0 or rng.random() < math.exp(-delta / temperature):
                current, cur_cost = cand, cost
                accepted += 1
                if cost < best_cost:
                    best, best_cost = cand, cost
                    if best_cost == 0:
                        break
        series.append(best_cost)
        temperature *= cfg.cooling_alpha
    return finish()


def repair(
    modules: Sequence[ModuleDef],
    raw_llm_output: str,
    cfg: SAConfig = SAConfig(),
    extract: bool = True,
) -> tuple[Node, Provenance]:
    """Turn any model output into a legal tree.

    A legal output is returned as is when the search budget is zero, and used
    as the annealing start state otherwise. Anything unparsable falls back to
    annealing from a random expression.
    """
    text = raw_llm_output
    if extract:
        from .harness import extract_expression

        text = extract_expression(raw_llm_output)
    try:
        tree = parse_slicing_expr(text, modules)
    except ParseError:
        return anneal(modules, cfg).best_tree, Provenance.SA_FALLBACK
    if cfg.max_evaluations == 0:
        return tree, Provenance.LLM_DIRECT
    trace = anneal(modules, cfg, initial=tree)
    if trace.best_eval.total_dead_space >= evaluate(tree, modules).total_dead_space:
        return tree, Provenance.LLM_POLISHED
    return trace.best_tree, Provenance.LLM_POLISHED
