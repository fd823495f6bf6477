import random

import pytest

from slicefloor.core import Cut, CutKind, Leaf, ModuleDef

WORKED_PROMPT = "P_5(5412,522);P_83(3442,1961);P_87(1970,1961)"
WORKED_OUTPUT = "P_83;P_87;V;P_5;H"

# filled by the acceptance suite, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def worked_modules():
    return [ModuleDef(5, 5412, 522), ModuleDef(83, 3442, 1961), ModuleDef(87, 1970, 1961)]


@pytest.fixture
def small3():
    return [ModuleDef(0, 2, 3), ModuleDef(1, 4, 5), ModuleDef(2, 6, 2)]


def random_modules(rng: random.Random, n: int, max_side: int = 50) -> list[ModuleDef]:
    ids = rng.sample(range(200), n)
    return [ModuleDef(i, rng.randint(1, max_side), rng.randint(1, max_side)) for i in ids]


def random_tree(rng: random.Random, n: int):
    """Uniform-ish random tree over a random leaf permutation; independent of the package."""
    perm = list(range(n))
    rng.shuffle(perm)

    def build(items):
        if len(items) == 1:
            return Leaf(items[0])
        k = rng.randint(1, len(items) - 1)
        return Cut(rng.choice((CutKind.H, CutKind.V)), build(items[:k]), build(items[k:]))

    return build(perm)


def bbox(tree, modules):
    """Reference envelope by plain recursion over the cut rules."""
    if isinstance(tree, Leaf):
        m = modules[tree.index]
        return m.width, m.height
    lw, lh = bbox(tree.left, modules)
    rw, rh = bbox(tree.right, modules)
    if tree.kind is CutKind.V:
        return lw + rw, max(lh, rh)
    return max(lw, rw), lh + rh
