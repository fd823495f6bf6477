"""Optimal instance generation by recursive slicing, and fine-tuning dataset output.

A random outline is cut repeatedly until it holds the requested number of
modules. The cuts themselves form a slicing tree with zero dead space, so
every instance ships with a known optimum.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache
from importlib import resources
from typing import BinaryIO, Iterable, Iterator, Sequence

from .core import MAX_SIDE, Cut, CutKind, Envelope, Leaf, ModuleDef, Node
from .encoding import format_module_list, serialize_slicing_expr
from .rng import SplitMix64, derive_seed

MAX_RETRIES = 100
FLAVORS = ("generic", "chat")


class InfeasibleConfigError(ValueError):
    def __init__(self, message: str, index: int | None = None):
        super().__init__(message if index is None else f"instance {index}: {message}")
        self.message = message
        self.index = index

    def __reduce__(self):
        return type(self), (self.message, self.index)


@dataclass(frozen=True)
class GenConfig:
    module_count: int
    width_range: tuple[int, int] = (1000, 25000)
    height_range: tuple[int, int] = (1000, 25000)
    min_side: int = 4
    id_pool: tuple[int, int] = (0, 99)
    seed: int = 0

    def __post_init__(self):
        if self.module_count < 1:
            raise ValueError("module_count must be at least 1")
        if self.min_side < 1:
            raise ValueError("min_side must be positive")
        for name in ("width_range", "height_range"):
            lo, hi = getattr(self, name)
            if not (1 <= lo <= hi <= MAX_SIDE):
                raise ValueError(f"{name} {lo}..{hi} is empty or out of bounds")
        lo, hi = self.id_pool
        if lo < 0 or hi < lo:
            raise ValueError(f"id_pool {lo}..{hi} is empty")
        if hi - lo + 1 < self.module_count:
            raise ValueError(f"id_pool {lo}..{hi} has fewer than {self.module_count} labels")
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class Instance:
    modules: tuple[ModuleDef, ...]
    optimal_tree: Node
    seed: int
    module_count: int
    outline: Envelope


@dataclass(frozen=True)
class DatasetRecord:
    instruction: str
    prompt: str
    completion: str


@lru_cache(maxsize=None)
def load_instruction(version: str = "v1") -> str:
    return resources.files("slicefloor.data").joinpath(f"instruction_{version}.txt").read_text("utf-8")


def _slice(cfg: GenConfig, rng: SplitMix64) -> Instance | None:
    """One slicing attempt; None when every leaf became too small to cut further."""
    ms2 = 2 * cfg.min_side
    width = rng.randint(*cfg.width_range)
    height = rng.randint(*cfg.height_range)
    # node arrays: kind is None for leaves
    ws, hs = [width], [height]
    kind: list[CutKind | None] = [None]
    left: list[int] = [-1]
    right: list[int] = [-1]
    active = [0]
    n_leaves = 1
    while n_leaves < cfg.module_count:
        if not active:
            return None
        pos = rng.below(len(active))
        node = active[pos]
        w, h = ws[node], hs[node]
        dirs = []
        if w >= ms2:
            dirs.append(CutKind.V)
        if h >= ms2:
            dirs.append(CutKind.H)
        if not dirs:
            active[pos] = active[-1]
            active.pop()
            continue
        d = dirs[rng.below(len(dirs))]
        if d is CutKind.V:
            at = rng.randint(cfg.min_side, w - cfg.min_side)
            parts = ((at, h), (w - at, h))
        else:
            at = rng.randint(cfg.min_side, h - cfg.min_side)
            parts = ((w, at), (w, h - at))
        first = len(ws)
        for pw, ph in parts:
            ws.append(pw)
            hs.append(ph)
            kind.append(None)
            left.append(-1)
            right.append(-1)
        kind[node] = d
        left[node] = first
        right[node] = first + 1
        active[pos] = first
        active.append(first + 1)
        n_leaves += 1

    # labels are drawn in post-order leaf order; Leaf indices follow ascending id
    ids = rng.sample(cfg.id_pool[0], cfg.id_pool[1], cfg.module_count)
    by_id = sorted(range(len(ids)), key=ids.__getitem__)
    position = [0] * len(ids)
    for pos, leaf in enumerate(by_id):
        position[leaf] = pos
    sizes: list[tuple[int, int]] = []
    built: list[Node] = []
    stack = [(0, False)]
    while stack:
        node, expanded = stack.pop()
        if kind[node] is None:
            built.append(Leaf(position[len(sizes)]))
            sizes.append((ws[node], hs[node]))
        elif expanded:
            r = built.pop()
            l = built.pop()
            built.append(Cut(kind[node], l, r))
        else:
            stack.append((node, True))
            stack.append((right[node], False))
            stack.append((left[node], False))
    modules = tuple(ModuleDef(ids[leaf], *sizes[leaf]) for leaf in by_id)
    return Instance(modules, built[0], cfg.seed, cfg.module_count, Envelope(width, height))


def generate_instance(cfg: GenConfig) -> Instance:
    """Slice a random outline into ``cfg.module_count`` modules.

    Deterministic in ``cfg``. When an attempt runs out of cuttable leaves the
    outline is redrawn from the next derived seed, up to ``MAX_RETRIES`` times.
    """
    for attempt in range(MAX_RETRIES + 1):
        seed = cfg.seed if attempt == 0 else derive_seed(cfg.seed, attempt)
        rng = SplitMix64(seed)
        instance = _slice(cfg, rng)
        if instance is not None:
            return instance
    raise InfeasibleConfigError(
        f"could not cut {cfg.module_count} modules with min_side={cfg.min_side} "
        f"after {MAX_RETRIES} retries (seed {cfg.seed})"
    )


def instance_config(cfg: GenConfig, index: int) -> GenConfig:
    return replace(cfg, seed=derive_seed(cfg.seed, index))


def _generate_indexed(args: tuple[GenConfig, int]) -> Instance:
    cfg, index = args
    try:
        return generate_instance(instance_config(cfg, index))
    except InfeasibleConfigError as exc:
        raise InfeasibleConfigError(exc.message, index) from None


def iter_instances(cfg: GenConfig, count: int, jobs: int = 1) -> Iterator[Instance]:
    """Instances ``0..count-1`` in index order; each depends only on ``(cfg.seed, index)``."""
    if count < 0:
        raise ValueError("count must be non-negative")
    work = ((cfg, i) for i in range(count))
    if jobs <= 1:
        yield from map(_generate_indexed, work)
        return
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        yield from pool.map(_generate_indexed, work, chunksize=256)


def generate_dataset(cfg: GenConfig, count: int, jobs: int = 1) -> list[Instance]:
    if count < 1:
        raise ValueError("count must be at least 1")
    return list(iter_instances(cfg, count, jobs))


def to_record(instance: Instance, instruction_template: str | None = None) -> DatasetRecord:
    instruction = load_instruction() if instruction_template is None else instruction_template
    if not instruction:
        raise ValueError("instruction template is empty")
    return DatasetRecord(
        instruction=instruction,
        prompt=format_module_list(instance.modules),
        completion=serialize_slicing_expr(instance.optimal_tree, instance.modules),
    )


def record_json(record: DatasetRecord, flavor: str) -> str:
    if flavor == "generic":
        obj = {"instruction": record.instruction, "input": record.prompt, "output": record.completion}
    elif flavor == "chat":
        obj = {
            "messages": [
                {"role": "system", "content": record.instruction},
                {"role": "user", "content": record.prompt},
                {"role": "assistant", "content": record.completion},
            ]
        }
    else:
        raise ValueError(f"unknown flavor {flavor!r}; expected one of {FLAVORS}")
    return json.dumps(obj, ensure_ascii=False)


def emit_jsonl(records: Iterable[DatasetRecord], flavor: str, out: BinaryIO) -> int:
    """Write one JSON object per line to a binary sink; returns the record count."""
    if flavor not in FLAVORS:
        raise ValueError(f"unknown flavor {flavor!r}; expected one of {FLAVORS}")
    n = 0
    for record in records:
        out.write(record_json(record, flavor).encode("utf-8") + b"\n")
        n += 1
    return n


def evaluation_groups(counts: Sequence[int], samples: int, seed: int, **overrides) -> dict[int, list[Instance]]:
    """Held-out evaluation instances per module count, seeded independently per count."""
    return {
        c: generate_dataset(GenConfig(module_count=c, seed=derive_seed(seed, c), **overrides), samples)
        for c in counts
    }

