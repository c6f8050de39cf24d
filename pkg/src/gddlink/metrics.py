"""Ground truth, pair-level quality metrics, and the duplicate/noise generator."""

from __future__ import annotations

import random
import string
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .distance import levenshtein
from .errors import ConfigError, DataError
from .graph import Node, PropertyGraph, ordered_pair, sort_ids

Pair = tuple[str, str]


@dataclass
class GroundTruth:
    pairs: set[Pair]
    label_counts: dict[str, int] = field(default_factory=dict)

    @classmethod
    def from_graph(cls, graph: PropertyGraph, labels: Iterable[str] | None = None) -> "GroundTruth":
        """Same-label node pairs sharing an eid."""
        wanted = set(labels) if labels is not None else None
        groups: dict[tuple[str, str], list[str]] = {}
        for node in graph.nodes.values():
            if node.eid is None or (wanted is not None and node.label not in wanted):
                continue
            groups.setdefault((node.label, node.eid), []).append(node.id)
        pairs = set()
        for members in groups.values():
            m = sort_ids(members)
            pairs.update((m[i], m[j]) for i in range(len(m)) for j in range(i + 1, len(m)))
        counts = Counter(n.label for n in graph.nodes.values())
        return cls(pairs, dict(counts))

    def __contains__(self, pair) -> bool:
        return ordered_pair(*pair) in self.pairs

    def __len__(self) -> int:
        return len(self.pairs)


@dataclass(frozen=True)
class PairMetrics:
    precision: float
    recall: float
    f1: float
    true_positives: int
    predicted: int
    actual: int

    @property
    def empty_prediction(self) -> bool:
        return self.predicted == 0


def f1_score(precision: float, recall: float) -> float:
    return 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)


def pair_metrics(pred: Iterable[Pair], truth: GroundTruth) -> PairMetrics:
    """Precision, recall and F1 of predicted pairs; an empty prediction has precision 0."""
    if not truth.pairs:
        raise ConfigError("ground truth holds no pair; recall is undefined")
    p = {ordered_pair(a, b) for a, b in pred if a != b}
    tp = len(p & truth.pairs)
    precision = tp / len(p) if p else 0.0
    recall = tp / len(truth.pairs)
    return PairMetrics(precision, recall, f1_score(precision, recall), tp, len(p), len(truth.pairs))


def cssr_g(cands: Iterable[Pair], graph: PropertyGraph) -> float:
    """Candidate count over the number of possible same-label pairs of the labels involved."""
    pairs = {ordered_pair(a, b) for a, b in cands}
    if not pairs:
        return 0.0
    labels = set()
    for a, b in pairs:
        la, lb = graph.nodes[a].label, graph.nodes[b].label
        if la != lb:
            raise DataError(f"candidate pair ({a}, {b}) mixes labels {la!r} and {lb!r}")
        labels.add(la)
    denom = 0
    for l in labels:
        n = len(graph.nodes_with_label(l))
        if n < 2:
            raise DataError(f"label {l!r} has fewer than two nodes")
        denom += n * (n - 1) // 2
    return len(pairs) / denom


def _block_pairs(block) -> list[Pair]:
    if hasattr(block, "edges"):
        return list(block.edges)
    if hasattr(block, "pairs"):
        return list(block.pairs())
    members = sort_ids(block)
    return [(members[i], members[j]) for i in range(len(members)) for j in range(i + 1, len(members))]


def purity(blocks: Sequence, truth: GroundTruth) -> float:
    """Mean over blocks of the share of true pairs; a block without pairs counts as 1."""
    if not blocks:
        raise ConfigError("purity needs at least one block")
    total = 0.0
    for blk in blocks:
        pairs = _block_pairs(blk)
        total += 1.0 if not pairs else sum(1 for p in pairs if p in truth) / len(pairs)
    return total / len(blocks)


def metrics_table(report: Mapping[str, object]) -> str:
    width = max(len(k) for k in report)
    lines = []
    for k, v in report.items():
        text = f"{v:.4f}" if isinstance(v, float) else str(v)
        lines.append(f"{k.ljust(width)}  {text}")
    return "\n".join(lines)


# -- noise -----------------------------------------------------------------

UNCHANGED, EDITED, DELETED = "unchanged", "edit-distance-2", "delete-value"


@dataclass
class NoiseSpec:
    label: str
    duplicate_rate: float = 0.1
    attribute_noise: bool = True
    structural_noise: bool = False
    max_edge_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        for name in ("duplicate_rate", "max_edge_fraction"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")


_EDIT_ALPHABET = string.ascii_lowercase + string.digits


def _single_edit(value: str, rng: random.Random) -> str:
    ops = ["insert"] + (["substitute", "delete"] if value else [])
    op = rng.choice(ops)
    if op == "insert":
        i = rng.randrange(len(value) + 1)
        return value[:i] + rng.choice(_EDIT_ALPHABET) + value[i:]
    i = rng.randrange(len(value))
    if op == "delete":
        return value[:i] + value[i + 1:]
    return value[:i] + rng.choice(_EDIT_ALPHABET) + value[i + 1:]


def edit_distance_two(value: str, rng: random.Random) -> str:
    """Two random single-character edits, redrawn until the result is exactly distance 2 away."""
    while True:
        out = _single_edit(_single_edit(value, rng), rng)
        if levenshtein(value, out) == 2:
            return out


@dataclass
class NoiseLog:
    duplicates: dict[str, str] = field(default_factory=dict)  # duplicate id -> original id
    attribute_ops: dict[tuple[str, str], str] = field(default_factory=dict)
    removed_edges: dict[str, int] = field(default_factory=dict)


def _fresh_id(base: str, taken: set[str]) -> str:
    candidate = f"{base}_dup"
    n = 1
    while candidate in taken:
        n += 1
        candidate = f"{base}_dup{n}"
    return candidate


def generate_noisy(graph: PropertyGraph, spec: NoiseSpec) -> tuple[PropertyGraph, GroundTruth, NoiseLog]:
    """Add noisy duplicates of a sample of ``spec.label`` nodes.

    Every node of the target label gets an eid (its id when it had none), and
    each duplicate shares its original's eid. A deleted value becomes the
    empty string.
    """
    rng = random.Random(spec.seed)
    targets = sort_ids(graph.nodes_with_label(spec.label))
    if spec.duplicate_rate > 0 and not targets:
        raise DataError(f"no node carries label {spec.label!r}")
    count = round(spec.duplicate_rate * len(targets))
    chosen = sort_ids(rng.sample(targets, count))

    nodes: dict[str, Node] = {}
    for nid in sort_ids(graph.nodes):
        n = graph.nodes[nid]
        if n.label == spec.label and n.eid is None:
            n = Node(n.id, n.label, n.id, dict(n.attrs))
        nodes[nid] = n
    edges = list(graph.edges)
    taken = set(nodes)
    log = NoiseLog()
    for orig_id in chosen:
        orig = nodes[orig_id]
        dup_id = _fresh_id(orig_id, taken)
        taken.add(dup_id)
        attrs = {}
        for a in sorted(orig.attrs):
            value = orig.attrs[a]
            op = rng.choice((UNCHANGED, EDITED, DELETED)) if spec.attribute_noise else UNCHANGED
            if op == EDITED:
                value = edit_distance_two(value, rng)
            elif op == DELETED:
                value = ""
            attrs[a] = value
            log.attribute_ops[(dup_id, a)] = op
        nodes[dup_id] = Node(dup_id, orig.label, orig.eid, attrs)
        own = [(dup_id if s == orig_id else s, l, dup_id if d == orig_id else d) for s, l, d in graph.incident_edges(orig_id)]
        if spec.structural_noise and own:
            frac = rng.uniform(0.0, spec.max_edge_fraction)
            drop = int(frac * len(own))
            removed = set(rng.sample(range(len(own)), drop))
            own = [e for i, e in enumerate(own) if i not in removed]
            log.removed_edges[dup_id] = drop
        edges.extend(own)
        log.duplicates[dup_id] = orig_id
    noisy = PropertyGraph([nodes[k] for k in sort_ids(nodes)], edges)
    return noisy, GroundTruth.from_graph(noisy, [spec.label]), log
