"""Block graphs and the two pruning passes: edge weight, then dice coefficient."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

from .blocking import Block
from .errors import ConfigError, DataError
from .graph import WILDCARD, Node, PropertyGraph, natural_key

Pair = tuple[str, str]

DEFAULT_DICE_GRID = tuple(round(0.05 * i, 2) for i in range(21))


@dataclass
class EdgeStats:
    """Collection-wide facts about one co-occurring pair."""

    block_sizes: list[int] = field(default_factory=list)
    weight: float = 0.0
    dice: float | None = None


@dataclass
class BlockGraph:
    """Complete co-occurrence graph of one block; ``edges`` shrinks as passes prune it."""

    query: str
    nodes: list[str]
    edges: list[Pair]
    stats: dict[Pair, EdgeStats]

    def with_edges(self, edges: Iterable[Pair]) -> "BlockGraph":
        return BlockGraph(self.query, self.nodes, list(edges), self.stats)


def build_block_graphs(blocks: Sequence[Block]) -> list[BlockGraph]:
    stats: dict[Pair, EdgeStats] = {}
    graphs = []
    for blk in blocks:
        pairs = blk.pairs()
        for p in pairs:
            stats.setdefault(p, EdgeStats()).block_sizes.append(len(blk))
        graphs.append(BlockGraph(blk.query, blk.sorted_members(), pairs, stats))
    return graphs


@dataclass(frozen=True)
class Normalizers:
    alpha: float
    beta: float


def normalizers(registry: Mapping[Pair, Sequence[int]]) -> Normalizers:
    """β = max |𝔹(e)| and α = max Σ 1/|B_i| over every edge."""
    if not registry:
        return Normalizers(1.0, 1.0)
    beta = max(len(sizes) for sizes in registry.values())
    alpha = max(sum(1.0 / s for s in sizes) for sizes in registry.values())
    return Normalizers(alpha, float(beta))


def edge_weight(e: Pair, registry: Mapping[Pair, Sequence[int]], norms: Normalizers) -> float:
    """Harmonic mean of the block-count and inverse-block-size scores."""
    sizes = registry[e]
    if not sizes:
        raise ConfigError(f"edge {e} belongs to no block")
    cbs = len(sizes) / norms.beta
    arcs = sum(1.0 / s for s in sizes) / norms.alpha
    return 2.0 * arcs * cbs / (arcs + cbs)


def compute_weights(bgs: Sequence[BlockGraph]) -> Normalizers:
    """Fill ``EdgeStats.weight`` for every edge of ``bgs``; returns the normalizers used."""
    registry: dict[Pair, list[int]] = {}
    owners: dict[Pair, EdgeStats] = {}
    for bg in bgs:
        for e in bg.edges:
            if e not in owners:
                owners[e] = bg.stats[e]
                registry[e] = bg.stats[e].block_sizes
    norms = normalizers(registry)
    for e, st in owners.items():
        st.weight = edge_weight(e, registry, norms)
    for bg in bgs:  # block graphs built apart from each other keep separate stats
        if bgs and bg.stats is not bgs[0].stats:
            for e in bg.edges:
                bg.stats[e].weight = owners[e].weight
    return norms


def average_weight(bgs: Sequence[BlockGraph]) -> float:
    """Mean weight over the edges of every block graph (shared edges count once per graph)."""
    total, count = 0.0, 0
    for bg in bgs:
        for e in bg.edges:
            total += bg.stats[e].weight
            count += 1
    return total / count if count else 0.0


def prune_by_weight(bgs: Sequence[BlockGraph], avw: float | None = None) -> list[BlockGraph]:
    """Drop edges whose weight is strictly below the global average."""
    if avw is None:
        avw = average_weight(bgs)
    return [bg.with_edges(e for e in bg.edges if bg.stats[e].weight >= avw) for bg in bgs]


@lru_cache(maxsize=1 << 16)
def _charset(value: str) -> frozenset[str]:
    return frozenset(c for c in value.casefold() if not c.isspace())


def dice(v: Node, w: Node) -> float | None:
    """Mean character-set dice over shared, non-wildcard attributes; ``None`` marks a cross-type pair."""
    common = [a for a in v.attrs if a in w.attrs and v.attrs[a] != WILDCARD and w.attrs[a] != WILDCARD]
    if not common:
        return None
    total = 0.0
    for a in common:
        x, y = _charset(v.attrs[a]), _charset(w.attrs[a])
        if not x and not y:
            total += 1.0
        else:
            total += 2.0 * len(x & y) / (len(x) + len(y))
    return total / len(common)


def compute_dice(bgs: Sequence[BlockGraph], graph: PropertyGraph) -> None:
    seen: set[Pair] = set()
    for bg in bgs:
        for e in bg.edges:
            if e not in seen:
                seen.add(e)
                bg.stats[e].dice = dice(graph.nodes[e[0]], graph.nodes[e[1]])


def _sample_recall(samples: Sequence[tuple[float | None, bool]], theta: float) -> float:
    positives = [d for d, m in samples if m]
    kept = sum(1 for d in positives if d is not None and d >= theta)
    return kept / len(positives)


def learn_dice_threshold(samples: Sequence[tuple[float | None, bool]], grid: Sequence[float] = DEFAULT_DICE_GRID,
                         epsilon: float = 0.01) -> float:
    """Largest grid value whose sample recall stays within ``epsilon`` of the recall at 0.

    ``samples`` are (dice value, is-match) pairs; a ``None`` dice is pruned at
    every threshold.
    """
    if not samples:
        raise ConfigError("no labelled pairs to learn the dice threshold from; set it manually")
    if not any(m for _, m in samples):
        raise ConfigError("labelled pairs hold no true match; set the dice threshold manually")
    if not 0 <= epsilon < 1:
        raise ConfigError("epsilon must be in [0, 1)")
    if not grid:
        raise ConfigError("empty threshold grid")
    base = _sample_recall(samples, 0.0)
    floor = (1.0 - epsilon) * base
    best = None
    for t in sorted(grid):
        if not 0 <= t <= 1:
            raise ConfigError(f"dice thresholds lie in [0, 1], got {t}")
        if _sample_recall(samples, t) >= floor - 1e-12:
            best = t
    return float(best if best is not None else min(grid))


def prune_by_dice(bg: BlockGraph, theta: float) -> BlockGraph:
    if not 0 <= theta <= 1:
        raise ConfigError("dice threshold must be in [0, 1]")
    return bg.with_edges(e for e in bg.edges if bg.stats[e].dice is not None and bg.stats[e].dice >= theta)


def surviving_pairs(bgs: Iterable[BlockGraph]) -> set[Pair]:
    out: set[Pair] = set()
    for bg in bgs:
        out.update(bg.edges)
    return out


@dataclass
class PruneResult:
    weighted: list[BlockGraph]
    final: list[BlockGraph]
    avw: float
    theta: float
    norms: Normalizers

    @property
    def candidates(self) -> set[Pair]:
        return surviving_pairs(self.final)


def prune(bgs: Sequence[BlockGraph], graph: PropertyGraph, theta: float) -> PruneResult:
    """Weight pass against the global average, then the dice pass."""
    norms = compute_weights(bgs)
    avw = average_weight(bgs)
    compute_dice(bgs, graph)
    weighted = prune_by_weight(bgs, avw)
    final = [prune_by_dice(bg, theta) for bg in weighted]
    return PruneResult(weighted, final, avw, theta, norms)


def _fmt(x: float | None) -> str:
    if x is None:
        return "cross"
    return repr(round(x, 12)) if math.isfinite(x) else str(x)


def dump_pruned_pairs(original: Sequence[BlockGraph], result: PruneResult, path) -> None:
    """CSV of every co-occurring pair and the last stage it survived."""
    after_weight = surviving_pairs(result.weighted)
    after_dice = surviving_pairs(result.final)
    stats: dict[Pair, EdgeStats] = {}
    for bg in original:
        for e in bg.edges:
            stats.setdefault(e, bg.stats[e])
    order = sorted(stats, key=lambda p: (natural_key(p[0]), natural_key(p[1])))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["v", "v2", "weight", "dice", "survived"])
        for e in order:
            stage = "dice" if e in after_dice else "weight" if e in after_weight else "block"
            w.writerow([e[0], e[1], _fmt(stats[e].weight), _fmt(stats[e].dice), stage])


def load_pruned_pairs(path, stage: str = "dice") -> set[Pair]:
    """Pairs of a pruned-pairs CSV that survived ``stage`` (block, weight or dice)."""
    rank = {"block": 0, "weight": 1, "dice": 2}
    if stage not in rank:
        raise ConfigError(f"unknown stage {stage!r}")
    out: set[Pair] = set()
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            try:
                reached = rank[row["survived"]]
                pair = (row["v"], row["v2"])
            except KeyError:
                raise DataError(f"{path}: expected columns v, v2, weight, dice, survived") from None
            if reached >= rank[stage]:
                out.add(pair)
    return out
