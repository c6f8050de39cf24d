"""Rule-confirmed matching with witnesses, link assembly, and a cosine kNN matcher."""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .embed_struct import EmbeddingTable
from .errors import ConfigError, NotFoundError
from .gdd import Gdd, GraphRow, measure, rank_rules
from .graph import PropertyGraph, labels_match, natural_key, ordered_pair, sort_ids
from .patterns import iter_homomorphisms

SATISFIED, NO_PATTERN, VIOLATED = "satisfied-rule", "no-pattern-match", "constraints-violated"

Pair = tuple[str, str]


@dataclass(frozen=True)
class Witness:
    rule: str
    assignment: dict
    distances: tuple[tuple[str, float, float], ...]  # (constraint, measured, threshold)

    def to_json(self) -> dict:
        return {
            "rule": self.rule,
            "h": {k: self.assignment[k] for k in sorted(self.assignment)},
            "distances": [{"constraint": c, "distance": d, "threshold": t} for c, d, t in self.distances],
        }


@dataclass(frozen=True)
class MatchDecision:
    pair: Pair
    linked: bool
    reason: str
    witness: Witness | None = None

    def __post_init__(self):
        if self.linked != (self.reason == SATISFIED) or self.linked != (self.witness is not None):
            raise ValueError("linked decisions carry a witness and the satisfied-rule reason, others neither")

    def to_json(self) -> dict:
        out = {"pair": list(self.pair), "linked": self.linked, "reason": self.reason}
        if self.witness is not None:
            out["witness"] = self.witness.to_json()
        return out


def rule_ids(rules: Sequence[Gdd]) -> list[str]:
    return [g.name or f"r{i}" for i, g in enumerate(rules)]


def _distances(rule: Gdd, row) -> tuple[tuple[str, float, float], ...]:
    return tuple((str(c), float(measure(c, row)), c.threshold) for c in rule.lhs)


def confirm_match(pair: Pair, rules: Sequence[Gdd], graph: PropertyGraph, ranked: bool = False) -> MatchDecision:
    """Link ``pair`` when some rule has a match pinning it to the eid variables that meets the LHS.

    Rules are tried in rank order (pass ``ranked=True`` when already sorted);
    both orientations of the pair are tried for each rule.
    """
    a, b = pair
    for v in pair:
        if v not in graph.nodes:
            raise NotFoundError(f"unknown node {v!r}")
    order = list(rules) if ranked else rank_rules(rules)
    names = rule_ids(order)
    saw_match = False
    homs: dict[tuple, list[dict]] = {}  # rules often share a scope; enumerate each once
    for name, rule in zip(names, order):
        x, y = rule.eid_vars
        orientations = [(a, b)] if a == b else [(a, b), (b, a)]
        for p, q in orientations:
            if not (labels_match(rule.scope.label(x), graph.nodes[p].label)
                    and labels_match(rule.scope.label(y), graph.nodes[q].label)):
                continue
            key = (rule.scope, x, y, p, q)
            if key not in homs:
                homs[key] = list(iter_homomorphisms(graph, rule.scope, {x: p, y: q}))
            for h in homs[key]:
                saw_match = True
                row = GraphRow(graph, h)
                dists = _distances(rule, row)
                if all(d <= t for _, d, t in dists):
                    return MatchDecision(ordered_pair(a, b), True, SATISFIED, Witness(name, h, dists))
    return MatchDecision(ordered_pair(a, b), False, VIOLATED if saw_match else NO_PATTERN)


def replay_witness(decision: MatchDecision, rules: Sequence[Gdd], graph: PropertyGraph) -> bool:
    """Re-check that the witness is a homomorphism satisfying its rule's LHS."""
    if decision.witness is None:
        return False
    by_name = dict(zip(rule_ids(rank_rules(rules)), rank_rules(rules)))
    rule = by_name.get(decision.witness.rule)
    if rule is None:
        return False
    h = decision.witness.assignment
    if set(h) != set(rule.scope.vars):
        return False
    if {h[rule.eid_vars[0]], h[rule.eid_vars[1]]} != set(decision.pair):
        return False
    for v in rule.scope.vars:
        if not labels_match(rule.scope.label(v), graph.nodes[h[v]].label):
            return False
    if not all(graph.has_edge(h[s], h[d], l) for s, l, d in rule.scope.edges):
        return False
    row = GraphRow(graph, h)
    return all(measure(c, row) <= c.threshold for c in rule.lhs)


class UnionFind:
    def __init__(self):
        self.parent: dict[str, str] = {}

    def find(self, x: str) -> str:
        self.parent.setdefault(x, x)
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: str, b: str) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            if natural_key(rb) < natural_key(ra):
                ra, rb = rb, ra
            self.parent[rb] = ra

    def groups(self) -> list[list[str]]:
        out: dict[str, list[str]] = {}
        for x in self.parent:
            out.setdefault(self.find(x), []).append(x)
        return sorted((sort_ids(g) for g in out.values()), key=lambda g: natural_key(g[0]))


@dataclass
class LinkedEntityGraph:
    pairs: list[Pair]
    clusters: list[list[str]]
    decisions: list[MatchDecision] = field(default_factory=list)

    @classmethod
    def from_pairs(cls, pairs: Iterable[Pair], decisions: Sequence[MatchDecision] = ()) -> "LinkedEntityGraph":
        ps = sorted({ordered_pair(a, b) for a, b in pairs if a != b}, key=lambda p: (natural_key(p[0]), natural_key(p[1])))
        uf = UnionFind()
        for a, b in ps:
            uf.union(a, b)
        return cls(ps, uf.groups(), list(decisions))

    def pair_set(self) -> set[Pair]:
        return set(self.pairs)


def _confirm_chunk(args) -> list[MatchDecision]:
    pairs, rules, graph = args
    return [confirm_match(p, rules, graph, ranked=True) for p in pairs]


def link_entities(cands: Iterable[Pair], rules: Sequence[Gdd], graph: PropertyGraph, workers: int = 1) -> LinkedEntityGraph:
    if not rules:
        raise ConfigError("linking needs at least one rule")
    ranked = rank_rules(rules)
    pairs = sorted({ordered_pair(a, b) for a, b in cands}, key=lambda p: (natural_key(p[0]), natural_key(p[1])))
    if workers > 1 and len(pairs) > 1:
        size = (len(pairs) + workers - 1) // workers
        chunks = [(pairs[i:i + size], ranked, graph) for i in range(0, len(pairs), size)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            decisions = [d for part in pool.map(_confirm_chunk, chunks) for d in part]
    else:
        decisions = _confirm_chunk((pairs, ranked, graph))
    return LinkedEntityGraph.from_pairs((d.pair for d in decisions if d.linked), decisions)


def write_match_report(decisions: Sequence[MatchDecision], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in decisions:
            fh.write(json.dumps(d.to_json(), sort_keys=True, ensure_ascii=False) + "\n")


def write_links(graph_out: LinkedEntityGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for a, b in graph_out.pairs:
            fh.write(f"{a}\t{b}\n")


def read_links(path) -> list[Pair]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line:
                a, _, b = line.partition("\t")
                out.append(ordered_pair(a, b))
    return out


def knn_match(emb: EmbeddingTable, k: int, labels: Mapping[str, str] | None = None) -> set[Pair]:
    """Each node's ``k`` nearest same-label neighbours by cosine, as unordered pairs.

    Ties keep index order (a stable sort on descending similarity).
    """
    if k < 1:
        raise ConfigError("k must be >= 1")
    labels = labels or {}
    groups: dict[str, list[int]] = {}
    for i, key in enumerate(emb.keys):
        groups.setdefault(labels.get(key, ""), []).append(i)
    unit = emb.normalized()
    out: set[Pair] = set()
    for idx in groups.values():
        if len(idx) < 2:
            continue
        sub = unit[idx]
        sims = sub @ sub.T
        for r, i in enumerate(idx):
            row = sims[r].copy()
            row[r] = -np.inf
            order = np.argsort(-row, kind="stable")[:min(k, len(idx) - 1)]
            for c in order:
                out.add(ordered_pair(emb.keys[i], emb.keys[idx[c]]))
    return out
