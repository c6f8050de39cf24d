"""Graph patterns, homomorphism matching, pseudo-relations and a small frequent-pattern miner."""

from __future__ import annotations

import csv
import io
import itertools
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, Mapping, Sequence

from .errors import ConfigError
from .graph import WILDCARD, PropertyGraph, labels_match, natural_key

PatternEdge = tuple[str, str, str]


@dataclass(frozen=True)
class GraphPattern:
    vars: tuple[str, ...]
    var_labels: Mapping[str, str]
    edges: tuple[PatternEdge, ...] = ()
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "vars", tuple(self.vars))
        object.__setattr__(self, "edges", tuple(tuple(e) for e in self.edges))
        object.__setattr__(self, "var_labels", dict(self.var_labels))
        if not self.vars:
            raise ConfigError("a pattern needs at least one variable")
        if len(set(self.vars)) != len(self.vars):
            raise ConfigError(f"pattern {self.name!r} repeats a variable name")
        for v in self.vars:
            if v not in self.var_labels:
                raise ConfigError(f"variable {v!r} has no label")
        for src, label, dst in self.edges:
            if src not in self.var_labels or dst not in self.var_labels:
                raise ConfigError(f"pattern edge ({src}, {label}, {dst}) uses an undeclared variable")
        if not self._connected():
            raise ConfigError(f"pattern {self.name!r} is not connected")

    def __hash__(self) -> int:
        return hash((self.vars, tuple(sorted(self.var_labels.items())), self.edges))

    def __eq__(self, other) -> bool:
        if not isinstance(other, GraphPattern):
            return NotImplemented
        return (self.vars, dict(self.var_labels), self.edges) == (other.vars, dict(other.var_labels), other.edges)

    def _connected(self) -> bool:
        adj = {v: set() for v in self.vars}
        for s, _, d in self.edges:
            adj[s].add(d)
            adj[d].add(s)
        seen = {self.vars[0]}
        stack = [self.vars[0]]
        while stack:
            for u in adj[stack.pop()]:
                if u not in seen:
                    seen.add(u)
                    stack.append(u)
        return len(seen) == len(self.vars)

    def label(self, var: str) -> str:
        return self.var_labels[var]

    def adjacency(self) -> dict[str, list[str]]:
        """Undirected variable adjacency; shared, so callers must not mutate it."""
        return self._adjacency

    @cached_property
    def _adjacency(self) -> dict[str, list[str]]:
        adj: dict[str, list[str]] = {v: [] for v in self.vars}
        for s, _, d in self.edges:
            if d not in adj[s]:
                adj[s].append(d)
            if s not in adj[d]:
                adj[d].append(s)
        return adj

    @cached_property
    def automorphisms(self) -> tuple[dict[str, str], ...]:
        """Non-identity label- and edge-preserving variable permutations."""
        edge_set = set(self.edges)
        found = []
        for perm in itertools.permutations(self.vars):
            sigma = dict(zip(self.vars, perm))
            if all(sigma[v] == v for v in self.vars):
                continue
            if any(self.var_labels[v] != self.var_labels[sigma[v]] for v in self.vars):
                continue
            if {(sigma[s], l, sigma[d]) for s, l, d in self.edges} == edge_set:
                found.append(sigma)
        return tuple(found)

    def same_label_pairs(self) -> list[tuple[str, str]]:
        return [
            (a, b)
            for a, b in itertools.combinations(self.vars, 2)
            if self.var_labels[a] == self.var_labels[b] and self.var_labels[a] != WILDCARD
        ]

    def to_json(self) -> dict:
        out = {
            "vars": [{"name": v, "label": self.var_labels[v]} for v in self.vars],
            "edges": [{"src": s, "label": l, "dst": d} for s, l, d in self.edges],
        }
        if self.name:
            out["name"] = self.name
        return out

    @classmethod
    def from_json(cls, obj: Mapping) -> "GraphPattern":
        try:
            vars_ = [v["name"] for v in obj["vars"]]
            labels = {v["name"]: v["label"] for v in obj["vars"]}
            edges = [(e["src"], e["label"], e["dst"]) for e in obj.get("edges", [])]
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed pattern object: {exc}") from None
        return cls(tuple(vars_), labels, tuple(edges), obj.get("name", ""))

    def __str__(self) -> str:
        name = self.name or "Q"
        return f"{name}[{', '.join(self.vars)}]"

    def describe(self) -> str:
        parts = [f"({s}:{self.var_labels[s]})-[{l}]->({d}:{self.var_labels[d]})" for s, l, d in self.edges]
        return "; ".join(parts) or ", ".join(f"({v}:{self.var_labels[v]})" for v in self.vars)


def load_pattern_file(path) -> GraphPattern:
    with open(path, encoding="utf-8") as fh:
        return GraphPattern.from_json(json.load(fh))


@dataclass
class MatchList:
    pattern: GraphPattern
    rows: list[dict[str, str]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self) -> Iterator[dict[str, str]]:
        return iter(self.rows)

    def as_tuples(self) -> list[tuple[str, ...]]:
        return [tuple(r[v] for v in self.pattern.vars) for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.pattern.vars)
        writer.writerows(self.as_tuples())
        return buf.getvalue()


def _candidates(graph: PropertyGraph, label: str) -> list[str]:
    return graph.nodes_with_label(label)


def _plan(pattern: GraphPattern, graph: PropertyGraph, pinned: Mapping[str, str]) -> list[str]:
    """Variable order: pinned first, then smallest label set, then stay connected."""
    adj = pattern.adjacency()
    order = [v for v in pattern.vars if v in pinned]
    remaining = [v for v in pattern.vars if v not in pinned]
    size = {v: graph.label_count(pattern.label(v)) for v in remaining}
    while remaining:
        frontier = [v for v in remaining if any(u in order for u in adj[v])] or remaining
        nxt = min(frontier, key=lambda v: (size[v], pattern.vars.index(v)))
        order.append(nxt)
        remaining.remove(nxt)
    return order


def iter_homomorphisms(
    graph: PropertyGraph, pattern: GraphPattern, pinned: Mapping[str, str] | None = None
) -> Iterator[dict[str, str]]:
    """Yield every homomorphism (as var -> node) extending ``pinned``.

    No symmetry reduction is applied here; see :func:`match_pattern`.
    """
    pinned = dict(pinned or {})
    for var, node in pinned.items():
        if node not in graph.nodes or not labels_match(pattern.label(var), graph.nodes[node].label):
            return
    order = _plan(pattern, graph, pinned)
    # edges to check when a variable is bound: those whose other end is bound earlier
    pos = {v: i for i, v in enumerate(order)}
    checks: dict[str, list[PatternEdge]] = {v: [] for v in order}
    for s, l, d in pattern.edges:
        later = s if pos[s] >= pos[d] else d
        checks[later].append((s, l, d))
    adj = pattern.adjacency()
    assignment: dict[str, str] = {}

    def candidates(var: str) -> Iterable[str]:
        if var in pinned:
            return (pinned[var],)
        label = pattern.label(var)
        bound = [u for u in adj[var] if u in assignment]
        if not bound:
            return _candidates(graph, label)
        anchor = bound[0]
        pool = graph.neighbors(assignment[anchor], label)
        return pool

    def extend(i: int) -> Iterator[dict[str, str]]:
        if i == len(order):
            yield dict(assignment)
            return
        var = order[i]
        for node in candidates(var):
            assignment[var] = node
            if all(graph.has_edge(assignment[s], assignment[d], l) for s, l, d in checks[var]):
                yield from extend(i + 1)
            del assignment[var]

    yield from extend(0)


def _row_key(pattern: GraphPattern, row: Mapping[str, str]) -> tuple:
    return tuple(natural_key(row[v]) for v in pattern.vars)


def canonical_row(pattern: GraphPattern, row: Mapping[str, str]) -> bool:
    """True when ``row`` is the representative of its symmetry class.

    Rows that an automorphism maps onto themselves (the ``x = x'`` case)
    are rejected; among the images of a row under the automorphisms only
    the one that sorts first is kept.
    """
    key = _row_key(pattern, row)
    for sigma in pattern.automorphisms:
        image = {v: row[sigma[v]] for v in pattern.vars}
        if all(image[v] == row[v] for v in pattern.vars):
            return False
        if _row_key(pattern, image) < key:
            return False
    return True


def match_pattern(graph: PropertyGraph, pattern: GraphPattern) -> MatchList:
    rows = [r for r in iter_homomorphisms(graph, pattern) if canonical_row(pattern, r)]
    rows.sort(key=lambda r: _row_key(pattern, r))
    return MatchList(pattern, rows)


# -- mining ----------------------------------------------------------------


def _label_triples(graph: PropertyGraph) -> list[tuple[str, str, str]]:
    triples = {(graph.nodes[s].label, l, graph.nodes[d].label) for s, l, d in graph.edges}
    return sorted(triples)


def canonical_code(pattern: GraphPattern) -> tuple:
    """Permutation-invariant code of a label-level pattern (small patterns only)."""
    best = None
    n = len(pattern.vars)
    for perm in itertools.permutations(range(n)):
        idx = {pattern.vars[i]: perm[i] for i in range(n)}
        labels = tuple(pattern.var_labels[v] for v in sorted(pattern.vars, key=lambda v: idx[v]))
        edges = tuple(sorted((idx[s], l, idx[d]) for s, l, d in pattern.edges))
        code = (labels, edges)
        if best is None or code < best:
            best = code
    return best


def _pattern_from_code(code: tuple, name: str = "") -> GraphPattern:
    labels, edges = code
    names = [f"x{i}" for i in range(len(labels))]
    return GraphPattern(
        tuple(names),
        {names[i]: labels[i] for i in range(len(labels))},
        tuple((names[s], l, names[d]) for s, l, d in edges),
        name,
    )


def _extensions(pattern: GraphPattern, triples: Sequence[tuple[str, str, str]]) -> Iterator[GraphPattern]:
    fresh = f"x{len(pattern.vars)}"
    existing = set(pattern.edges)
    for var in pattern.vars:
        lab = pattern.var_labels[var]
        for sl, el, dl in triples:
            if sl == lab:
                yield GraphPattern(pattern.vars + (fresh,), {**pattern.var_labels, fresh: dl},
                                   pattern.edges + ((var, el, fresh),))
            if dl == lab:
                yield GraphPattern(pattern.vars + (fresh,), {**pattern.var_labels, fresh: sl},
                                   pattern.edges + ((fresh, el, var),))
    for a, b in itertools.permutations(pattern.vars, 2):
        for sl, el, dl in triples:
            if sl == pattern.var_labels[a] and dl == pattern.var_labels[b] and (a, el, b) not in existing:
                yield GraphPattern(pattern.vars, pattern.var_labels, pattern.edges + ((a, el, b),))


def mine_frequent_patterns(graph: PropertyGraph, min_support: int, max_edges: int) -> list[GraphPattern]:
    """All connected label-level patterns with at most ``max_edges`` edges and
    at least ``min_support`` (symmetry-reduced) matches.

    Growth is edge by edge. Match counts are not anti-monotone under adding a
    fresh variable, so only patterns with no match at all stop growing.
    """
    if min_support < 1 or max_edges < 1:
        raise ConfigError("min_support and max_edges must be at least 1")
    triples = _label_triples(graph)
    level: dict[tuple, GraphPattern] = {}
    for sl, el, dl in triples:
        p = GraphPattern(("x0", "x1"), {"x0": sl, "x1": dl}, (("x0", el, "x1"),))
        level.setdefault(canonical_code(p), p)
    counts: dict[tuple, int] = {}
    seen: set[tuple] = set()
    for size in range(1, max_edges + 1):
        alive: dict[tuple, GraphPattern] = {}
        for code, p in level.items():
            seen.add(code)
            c = len(match_pattern(graph, p))
            if c > 0:
                counts[code] = c
                alive[code] = p
        if size == max_edges:
            break
        nxt: dict[tuple, GraphPattern] = {}
        for p in alive.values():
            for q in _extensions(p, triples):
                code = canonical_code(q)
                if code not in seen and code not in nxt:
                    nxt[code] = q
        level = nxt
    frequent = sorted((code for code, c in counts.items() if c >= min_support),
                      key=lambda code: (len(code[1]), code))
    return [_pattern_from_code(code, f"P{i}") for i, code in enumerate(frequent)]


# -- pseudo-relations ------------------------------------------------------

EID = "eid"


@dataclass
class PseudoRelation:
    """Tabular view of a match list: one row per match.

    Column keys are ``(var, attribute)``; each variable also gets an
    ``(var, "eid")`` column and, for every requested relation ``r``, an
    ``(var, "->r")`` column holding the frozenset of targets.
    """

    pattern: GraphPattern
    columns: list[tuple[str, str]]
    rows: list[dict[tuple[str, str], object]]
    assignments: list[dict[str, str]]

    def __len__(self) -> int:
        return len(self.rows)

    def column_values(self, column: tuple[str, str]) -> list:
        return [r[column] for r in self.rows]


def relation_key(relation: str) -> str:
    return "->" + relation


def to_pseudo_relation(
    graph: PropertyGraph,
    matches: MatchList,
    attrs: Iterable[str],
    relations: Iterable[str] = (),
) -> PseudoRelation:
    attrs = list(dict.fromkeys(attrs))
    if not attrs:
        raise ConfigError("to_pseudo_relation needs at least one attribute")
    relations = list(dict.fromkeys(relations))
    pattern = matches.pattern
    columns: list[tuple[str, str]] = []
    for v in pattern.vars:
        columns += [(v, a) for a in attrs]
        columns += [(v, relation_key(r)) for r in relations]
        columns.append((v, EID))
    rows = []
    for m in matches.rows:
        row: dict[tuple[str, str], object] = {}
        for v in pattern.vars:
            node = graph.nodes[m[v]]
            for a in attrs:
                row[(v, a)] = node.attrs.get(a, WILDCARD)
            for r in relations:
                row[(v, relation_key(r))] = frozenset(graph.relation_targets(node.id, r))
            row[(v, EID)] = node.eid if node.eid is not None else WILDCARD
        rows.append(row)
    return PseudoRelation(pattern, columns, rows, [dict(m) for m in matches.rows])
