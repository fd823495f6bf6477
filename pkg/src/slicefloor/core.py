"""Exact integer geometry for slicing floorplans.

A slicing tree is built from two node types: :class:`Leaf` refers to a module
by its position in the instance's module list, :class:`Cut` joins two
sub-floorplans. ``H`` stacks its children (left child at the bottom), ``V``
puts them side by side (left child on the left).

Every routine here walks trees iteratively so deep, chain-shaped trees coming
out of a language model do not hit the recursion limit.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal, localcontext
from fractions import Fraction
from typing import Iterator, Sequence, Union

MAX_SIDE = 2**31 - 1


class CutKind(str, enum.Enum):
    H = "H"  # children stacked, left child at the bottom
    V = "V"  # children side by side, left child on the left

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class ModuleDef:
    id: int
    width: int
    height: int

    def __post_init__(self):
        for name in ("id", "width", "height"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool):
                raise TypeError(f"module {name} must be an int, got {value!r}")
        if self.id < 0:
            raise ValueError(f"module id must be non-negative, got {self.id}")
        if not (1 <= self.width <= MAX_SIDE and 1 <= self.height <= MAX_SIDE):
            raise ValueError(
                f"module P_{self.id} has invalid size {self.width}x{self.height}"
            )

    @property
    def area(self) -> int:
        return self.width * self.height

    @property
    def name(self) -> str:
        return f"P_{self.id}"


@dataclass(frozen=True)
class Envelope:
    width: int
    height: int

    @property
    def area(self) -> int:
        return self.width * self.height


@dataclass(frozen=True)
class Leaf:
    index: int


@dataclass(frozen=True)
class Cut:
    kind: CutKind
    left: "Node"
    right: "Node"


Node = Union[Leaf, Cut]
SlicingTree = Node


@dataclass(frozen=True)
class EvalResult:
    total_dead_space: int
    envelope: Envelope
    module_area_sum: int
    dead_space_ratio: Fraction

    @property
    def optimal(self) -> bool:
        return self.total_dead_space == 0


@dataclass(frozen=True)
class PlacedModule:
    id: int
    x: int
    y: int


@dataclass(frozen=True)
class Placement:
    modules: tuple[PlacedModule, ...]
    envelope: Envelope

    def __iter__(self) -> Iterator[PlacedModule]:
        return iter(self.modules)

    def __len__(self) -> int:
        return len(self.modules)


class TreeStructureError(ValueError):
    """A tree does not reference every module of its instance exactly once."""


def merge(a: Envelope, b: Envelope, kind: CutKind) -> Envelope:
    if kind is CutKind.V:
        return Envelope(a.width + b.width, max(a.height, b.height))
    return Envelope(max(a.width, b.width), a.height + b.height)


def pair_dead_space(a: Envelope, b: Envelope, kind: CutKind) -> int:
    """Dead space created by joining ``a`` and ``b`` at one cut.

    Side by side, the lower block leaves a gap of its own width times the
    height difference; stacked, the narrower block leaves its height times the
    width difference. Both equal the merged area minus the two child areas.
    """
    if kind is CutKind.V:
        shorter = a if a.height <= b.height else b
        return shorter.width * abs(a.height - b.height)
    narrower = a if a.width <= b.width else b
    return narrower.height * abs(a.width - b.width)


def postorder(tree: Node) -> Iterator[Node]:
    """Yield nodes left subtree, right subtree, root."""
    stack: list[tuple[Node, bool]] = [(tree, False)]
    while stack:
        node, expanded = stack.pop()
        if isinstance(node, Leaf) or expanded:
            yield node
        else:
            stack.append((node, True))
            stack.append((node.right, False))
            stack.append((node.left, False))


def leaves(tree: Node) -> list[int]:
    return [node.index for node in postorder(tree) if isinstance(node, Leaf)]


def leaf_count(tree: Node) -> int:
    return sum(1 for node in postorder(tree) if isinstance(node, Leaf))


def check_tree(tree: Node, n_modules: int) -> None:
    """Raise :class:`TreeStructureError` unless leaves are a permutation of the modules."""
    indices = leaves(tree)
    if sorted(indices) != list(range(n_modules)):
        raise TreeStructureError(
            f"tree leaves {sorted(indices)} do not cover modules 0..{n_modules - 1} exactly once"
        )


def evaluate(tree: Node, modules: Sequence[ModuleDef]) -> EvalResult:
    """Total dead space of ``tree``, accumulated cut by cut on an envelope stack."""
    check_tree(tree, len(modules))
    stack: list[Envelope] = []
    dead = 0
    for node in postorder(tree):
        if isinstance(node, Leaf):
            m = modules[node.index]
            stack.append(Envelope(m.width, m.height))
        else:
            b = stack.pop()
            a = stack.pop()
            dead += pair_dead_space(a, b, node.kind)
            stack.append(merge(a, b, node.kind))
    (envelope,) = stack
    area_sum = sum(m.area for m in modules)
    if dead != envelope.area - area_sum:
        raise AssertionError(
            f"dead space bookkeeping drifted: {dead} != {envelope.area} - {area_sum}"
        )
    return EvalResult(dead, envelope, area_sum, Fraction(dead, area_sum))


def envelopes(tree: Node, modules: Sequence[ModuleDef]) -> dict[int, Envelope]:
    """Bounding envelope of every subtree, keyed by ``id(node)``."""
    out: dict[int, Envelope] = {}
    for node in postorder(tree):
        if isinstance(node, Leaf):
            m = modules[node.index]
            out[id(node)] = Envelope(m.width, m.height)
        else:
            out[id(node)] = merge(out[id(node.left)], out[id(node.right)], node.kind)
    return out


def place(tree: Node, modules: Sequence[ModuleDef]) -> Placement:
    """Lower-left coordinates of every module, with the root cell anchored at (0, 0)."""
    check_tree(tree, len(modules))
    env = envelopes(tree, modules)
    placed: list[PlacedModule] = []
    stack: list[tuple[Node, int, int]] = [(tree, 0, 0)]
    while stack:
        node, x, y = stack.pop()
        if isinstance(node, Leaf):
            placed.append(PlacedModule(modules[node.index].id, x, y))
            continue
        left = env[id(node.left)]
        if node.kind is CutKind.V:
            stack.append((node.right, x + left.width, y))
        else:
            stack.append((node.right, x, y + left.height))
        stack.append((node.left, x, y))
    return Placement(tuple(placed), env[id(tree)])


def is_optimal(result: EvalResult) -> bool:
    return result.total_dead_space == 0


def format_ratio(value: Fraction, places: int = 6) -> str:
    """Decimal rendering of an exact ratio, rounded half-even, trailing zeros dropped."""
    with localcontext() as ctx:
        ctx.prec = 60
        q = Decimal(value.numerator) / Decimal(value.denominator)
        text = format(q.quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_EVEN), "f")
    if "." in text:
        text = text.rstrip("0").rstrip(".")
    return "0" if text in ("", "-0") else text
