"""Text formats: module lists (``P_5(5412,522);P_83(3442,1961)``) and post-order
slicing expressions (``P_83;P_87;V;P_5;H``).

Input is lenient about case, a missing underscore in leaf names (``p0``) and
whitespace around ``;``.
Output is always canonical so datasets stay byte-stable.
"""

from __future__ import annotations

import enum
import re
from typing import Sequence

from .core import Cut, CutKind, Leaf, ModuleDef, Node, postorder


class ParseErrorKind(str, enum.Enum):
    EMPTY_INPUT = "EmptyInput"
    MALFORMED_TOKEN = "MalformedToken"
    UNKNOWN_MODULE = "UnknownModule"
    DUPLICATE_LEAF = "DuplicateLeaf"
    MISSING_MODULES = "MissingModules"
    STACK_UNDERFLOW = "StackUnderflow"
    NON_SINGULAR_RESULT = "NonSingularResult"
    BAD_DIMENSION = "BadDimension"

    def __str__(self) -> str:
        return self.value


class ParseError(ValueError):
    def __init__(self, kind: ParseErrorKind, position: int, detail: str):
        super().__init__(f"{kind.value} at token {position}: {detail}")
        self.kind = kind
        self.position = position
        self.detail = detail


_MODULE_RE = re.compile(r"[Pp]_(\d+)\((.*)\)", re.DOTALL)
_LEAF_RE = re.compile(r"[Pp]_?(\d+)")
_INT_RE = re.compile(r"[+-]?\d+")


def parse_module_list(text: str) -> list[ModuleDef]:
    if not text.strip():
        raise ParseError(ParseErrorKind.EMPTY_INPUT, 0, "no modules given")
    modules: list[ModuleDef] = []
    seen: set[int] = set()
    for pos, raw in enumerate(text.split(";")):
        token = raw.strip()
        match = _MODULE_RE.fullmatch(token)
        if match is None:
            raise ParseError(ParseErrorKind.MALFORMED_TOKEN, pos, f"expected P_<id>(<w>,<h>), got {token!r}")
        dims = [d.strip() for d in match.group(2).split(",")]
        if len(dims) != 2:
            raise ParseError(ParseErrorKind.MALFORMED_TOKEN, pos, f"expected two dimensions in {token!r}")
        if not all(_INT_RE.fullmatch(d) for d in dims):
            raise ParseError(ParseErrorKind.BAD_DIMENSION, pos, f"non-integer dimension in {token!r}")
        mid, w, h = int(match.group(1)), int(dims[0]), int(dims[1])
        try:
            module = ModuleDef(mid, w, h)
        except ValueError as exc:
            raise ParseError(ParseErrorKind.BAD_DIMENSION, pos, str(exc)) from None
        if mid in seen:
            raise ParseError(ParseErrorKind.DUPLICATE_LEAF, pos, f"module id {mid} listed twice")
        seen.add(mid)
        modules.append(module)
    return modules


def format_module_list(modules: Sequence[ModuleDef]) -> str:
    return ";".join(f"P_{m.id}({m.width},{m.height})" for m in modules)


def parse_slicing_expr(text: str, modules: Sequence[ModuleDef]) -> Node:
    """Parse a post-order expression against ``modules``.

    Structure is checked before identity: malformed tokens and stack arity
    errors are reported even when the module ids are also wrong. Leaves
    become :class:`Leaf` nodes holding the module's position in ``modules``.
    """
    if not text.strip():
        raise ParseError(ParseErrorKind.EMPTY_INPUT, 0, "empty expression")
    tokens: list[str | int] = []
    depth = 0
    for pos, raw in enumerate(text.split(";")):
        token = raw.strip()
        upper = token.upper()
        if upper in ("H", "V"):
            if depth < 2:
                raise ParseError(
                    ParseErrorKind.STACK_UNDERFLOW, pos, f"operator {upper} needs two operands, stack has {depth}"
                )
            depth -= 1
            tokens.append(upper)
            continue
        match = _LEAF_RE.fullmatch(token)
        if match is None:
            raise ParseError(ParseErrorKind.MALFORMED_TOKEN, pos, f"unexpected token {token!r}")
        depth += 1
        tokens.append(int(match.group(1)))
    if depth != 1:
        raise ParseError(ParseErrorKind.NON_SINGULAR_RESULT, len(tokens) - 1, f"{depth} subtrees left on the stack")

    index_of = {m.id: i for i, m in enumerate(modules)}
    used: set[int] = set()
    stack: list[Node] = []
    for pos, tok in enumerate(tokens):
        if isinstance(tok, str):
            right = stack.pop()
            left = stack.pop()
            stack.append(Cut(CutKind(tok), left, right))
            continue
        if tok not in index_of:
            raise ParseError(ParseErrorKind.UNKNOWN_MODULE, pos, f"P_{tok} is not in the module list")
        if tok in used:
            raise ParseError(ParseErrorKind.DUPLICATE_LEAF, pos, f"P_{tok} appears more than once")
        used.add(tok)
        stack.append(Leaf(index_of[tok]))
    if len(used) != len(modules):
        missing = sorted(set(index_of) - used)
        raise ParseError(
            ParseErrorKind.MISSING_MODULES, len(tokens) - 1, "unused modules: " + ",".join(f"P_{m}" for m in missing)
        )
    return stack[0]


def tree_tokens(tree: Node, modules: Sequence[ModuleDef]) -> list[str]:
    return [
        f"P_{modules[node.index].id}" if isinstance(node, Leaf) else node.kind.value
        for node in postorder(tree)
    ]


def serialize_slicing_expr(tree: Node, modules: Sequence[ModuleDef]) -> str:
    return ";".join(tree_tokens(tree, modules))
