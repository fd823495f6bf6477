"""Exhaustive search over every slicing expression for small module sets.

Enumeration order (which fixes the reported witness on ties):

1. tree shapes, recursively: left subtree size 1..n-1, left shapes outer,
   right shapes inner;
2. leaf permutations in lexicographic order;
3. operator labels as a binary counter, bit ``i`` labelling the ``i``-th
   internal node in post-order, 0 for ``H`` and 1 for ``V``.

For each shape, all (permutation, labelling) pairs are scored at once with
numpy, so n = 7 (about 42.6 million expressions) takes seconds.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .core import Cut, CutKind, Leaf, ModuleDef, Node

DEFAULT_CAP = 7

Shape = Optional[tuple]  # None is a leaf, (left, right) a cut


class OracleCapExceeded(ValueError):
    pass


@dataclass(frozen=True)
class OracleResult:
    min_dead_space: int
    witness_tree: Node
    expressions_examined: int


def expression_count(n: int) -> int:
    """Catalan(n-1) * n! * 2**(n-1)."""
    catalan = math.comb(2 * (n - 1), n - 1) // n
    return catalan * math.factorial(n) * 2 ** (n - 1)


@lru_cache(maxsize=None)
def shapes(n: int) -> tuple[Shape, ...]:
    if n == 1:
        return (None,)
    out = []
    for k in range(1, n):
        for left in shapes(k):
            for right in shapes(n - k):
                out.append((left, right))
    return tuple(out)


def _shape_program(shape: Shape) -> list[tuple]:
    """Post-order program: ("leaf", slot) or ("cut", internal_index)."""
    prog: list[tuple] = []
    counters = [0, 0]

    def walk(s):
        if s is None:
            prog.append(("leaf", counters[0]))
            counters[0] += 1
            return
        walk(s[0])
        walk(s[1])
        prog.append(("cut", counters[1]))
        counters[1] += 1

    walk(shape)
    return prog


def build_tree(shape: Shape, perm: Sequence[int], labels: int) -> Node:
    stack: list[Node] = []
    for op, idx in _shape_program(shape):
        if op == "leaf":
            stack.append(Leaf(perm[idx]))
        else:
            r = stack.pop()
            l = stack.pop()
            kind = CutKind.V if (labels >> idx) & 1 else CutKind.H
            stack.append(Cut(kind, l, r))
    return stack[0]


def brute_force_optimum(modules: Sequence[ModuleDef], cap: int = DEFAULT_CAP) -> OracleResult:
    n = len(modules)
    if n < 1:
        raise ValueError("need at least one module")
    if n > cap:
        raise OracleCapExceeded(f"{n} modules exceeds the exhaustive-search cap of {cap}")
    area_sum = sum(m.area for m in modules)
    if n == 1:
        return OracleResult(0, Leaf(0), 1)

    # int64 is exact while the largest possible envelope area fits
    bound = sum(m.width for m in modules) * sum(m.height for m in modules)
    dtype = np.int64 if bound < 2**62 else object
    widths = np.array([m.width for m in modules], dtype=dtype)
    heights = np.array([m.height for m in modules], dtype=dtype)
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.intp)
    n_labels = 2 ** (n - 1)
    label_ids = np.arange(n_labels, dtype=np.int64)

    best_area = None
    best_key = None
    examined = 0
    for shape in shapes(n):
        stack = []
        for op, idx in _shape_program(shape):
            if op == "leaf":
                slot = perms[:, idx]
                stack.append((widths[slot][:, None], heights[slot][:, None]))
            else:
                wr, hr = stack.pop()
                wl, hl = stack.pop()
                vertical = ((label_ids >> idx) & 1).astype(bool)[None, :]
                w = np.where(vertical, wl + wr, np.maximum(wl, wr))
                h = np.where(vertical, np.maximum(hl, hr), hl + hr)
                stack.append((w, h))
        w, h = stack[0]
        area = np.broadcast_to(w * h, (len(perms), n_labels))
        examined += area.size
        flat = int(np.argmin(area)) if dtype is np.int64 else min(range(area.size), key=lambda i: area.flat[i])
        value = int(area.flat[flat])
        if best_area is None or value < best_area:
            best_area = value
            best_key = (shape, tuple(int(v) for v in perms[flat // n_labels]), flat % n_labels)

    shape, perm, labels = best_key
    return OracleResult(best_area - area_sum, build_tree(shape, perm, labels), examined)
