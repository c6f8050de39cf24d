"""Property-graph data model, JSON-lines ingestion and relational conversion."""

from __future__ import annotations

import configparser
import csv
import io
import json
import re
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import IO, Iterable, Iterator, Mapping

from .errors import ConfigError, DataError, LoadError, NotFoundError

WILDCARD = "*"

_DIGITS = re.compile(r"(\d+)")


@lru_cache(maxsize=1 << 20)
def natural_key(node_id: str) -> tuple:
    """Sort key that orders ``v3`` before ``v10``."""
    parts = _DIGITS.split(node_id)
    return tuple((0, int(p), p) if p.isdigit() else (1, 0, p) for p in parts if p != "")


def sort_ids(ids: Iterable[str]) -> list[str]:
    return sorted(ids, key=natural_key)


def ordered_pair(a: str, b: str) -> tuple[str, str]:
    return (a, b) if natural_key(a) <= natural_key(b) else (b, a)


def labels_match(a: str, b: str) -> bool:
    return a == b or a == WILDCARD or b == WILDCARD


def _to_number(value: str) -> float | None:
    try:
        return float(value)
    except (TypeError, ValueError):
        return None


@dataclass(frozen=True)
class Node:
    id: str
    label: str
    eid: str | None = None
    attrs: dict[str, str] = field(default_factory=dict)

    @cached_property
    def _numbers(self) -> dict[str, float | None]:
        return {k: _to_number(v) for k, v in self.attrs.items()}

    def number(self, attr: str) -> float | None:
        """Numeric reading of an attribute, or None when it is absent or not numeric."""
        return self._numbers.get(attr)

    def to_record(self) -> dict:
        rec: dict = {"id": self.id, "label": self.label}
        if self.eid is not None:
            rec["eid"] = self.eid
        rec["attrs"] = dict(self.attrs)
        return rec


Edge = tuple[str, str, str]


def _targets() -> defaultdict:
    return defaultdict(set)  # module-level so graphs pickle for worker processes


class PropertyGraph:
    """Directed labelled multigraph with attribute lists on nodes.

    Immutable after construction. Adjacency is indexed in both directions
    because neighbourhoods and walks ignore edge direction.
    """

    def __init__(self, nodes: Iterable[Node] = (), edges: Iterable[Edge] = ()):
        self.nodes: dict[str, Node] = {}
        for node in nodes:
            if node.id in self.nodes:
                raise DataError(f"duplicate node id {node.id!r}")
            self.nodes[node.id] = node
        self.edges: list[Edge] = []
        self._out: dict[str, dict[str, set[str]]] = defaultdict(_targets)
        self._in: dict[str, dict[str, set[str]]] = defaultdict(_targets)
        self._nbrs: dict[str, set[str]] = defaultdict(set)
        for src, label, dst in edges:
            for end in (src, dst):
                if end not in self.nodes:
                    raise DataError(f"edge ({src!r}, {label!r}, {dst!r}) references unknown node {end!r}")
            if not label:
                raise DataError(f"edge ({src!r}, {dst!r}) has an empty label")
            self.edges.append((src, label, dst))
            self._out[src][dst].add(label)
            self._in[dst][src].add(label)
            self._nbrs[src].add(dst)
            self._nbrs[dst].add(src)
        self.label_index: dict[str, set[str]] = defaultdict(set)
        for node in self.nodes.values():
            self.label_index[node.label].add(node.id)
        self.label_index = dict(self.label_index)
        self._nbr_cache: dict[tuple[str, str], list[str]] = {}
        self._sorted_labels: dict[str, list[str]] = {}

    def __len__(self) -> int:
        return len(self.nodes)

    def __contains__(self, node_id: str) -> bool:
        return node_id in self.nodes

    def __getitem__(self, node_id: str) -> Node:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise NotFoundError(f"unknown node {node_id!r}") from None

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PropertyGraph):
            return NotImplemented
        return self.nodes == other.nodes and sorted(self.edges) == sorted(other.edges)

    @property
    def labels(self) -> list[str]:
        return sorted(self.label_index)

    def label_count(self, label: str) -> int:
        return len(self.nodes) if label == WILDCARD else len(self.label_index.get(label, ()))

    def nodes_with_label(self, label: str) -> list[str]:
        if label not in self._sorted_labels:
            ids = self.nodes if label == WILDCARD else self.label_index.get(label, ())
            self._sorted_labels[label] = sort_ids(ids)
        return list(self._sorted_labels[label])

    def has_edge(self, src: str, dst: str, label: str = WILDCARD) -> bool:
        labels = self._out.get(src, {}).get(dst)
        if not labels:
            return False
        return label == WILDCARD or label in labels or WILDCARD in labels

    def out_neighbors(self, v: str, label: str = WILDCARD) -> set[str]:
        return {u for u, ls in self._out.get(v, {}).items() if label == WILDCARD or label in ls}

    def in_neighbors(self, v: str, label: str = WILDCARD) -> set[str]:
        return {u for u, ls in self._in.get(v, {}).items() if label == WILDCARD or label in ls}

    def relation_targets(self, v: str, relation: str) -> set[str]:
        """Nodes reached from ``v`` over outgoing edges labelled ``relation``."""
        return self.out_neighbors(v, relation)

    @cached_property
    def _incident(self) -> dict[str, list[Edge]]:
        inc: dict[str, list[Edge]] = defaultdict(list)
        for e in self.edges:
            inc[e[0]].append(e)
            if e[2] != e[0]:
                inc[e[2]].append(e)
        return inc

    def incident_edges(self, v: str) -> list[Edge]:
        return list(self._incident.get(v, ()))

    def degree(self, v: str) -> int:
        return len(self._incident.get(v, ()))

    def neighbors(self, v: str, label: str = WILDCARD) -> list[str]:
        """Undirected neighbours of ``v`` whose label matches ``label``, naturally sorted."""
        if v not in self.nodes:
            raise NotFoundError(f"unknown node {v!r}")
        key = (v, label)
        cached = self._nbr_cache.get(key)
        if cached is None:
            cached = sort_ids(u for u in self._nbrs.get(v, ()) if labels_match(self.nodes[u].label, label))
            self._nbr_cache[key] = cached
        return cached


def neighbors_by_label(graph: PropertyGraph, v: str, label: str) -> list[str]:
    return list(graph.neighbors(v, label))


def _read_lines(source: IO[str] | str | Iterable[str]) -> Iterator[tuple[int, str]]:
    if isinstance(source, str):
        source = io.StringIO(source)
    for lineno, line in enumerate(source, 1):
        if line.strip():
            yield lineno, line


def _parse_record(line: str, lineno: int, source: str) -> dict:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise LoadError(f"malformed JSON ({exc.msg})", lineno, source) from None
    if not isinstance(rec, dict):
        raise LoadError("record is not a JSON object", lineno, source)
    return rec


def _attr_value(value) -> str:
    if isinstance(value, bool) or value is None or isinstance(value, (list, dict)):
        raise TypeError(f"unsupported attribute value {value!r}")
    if isinstance(value, float) and value.is_integer():
        return repr(value)
    return str(value)


def load_graph(nodes_source, edges_source) -> PropertyGraph:
    """Build a graph from ``nodes.jsonl`` and ``edges.jsonl`` record streams."""
    nodes: dict[str, Node] = {}
    for lineno, line in _read_lines(nodes_source):
        rec = _parse_record(line, lineno, "nodes")
        try:
            node_id = str(rec["id"])
            label = str(rec["label"])
            attrs = {str(k): _attr_value(v) for k, v in (rec.get("attrs") or {}).items()}
        except (KeyError, TypeError, AttributeError) as exc:
            raise LoadError(f"bad node record ({exc})", lineno, "nodes") from None
        if node_id in nodes:
            raise LoadError(f"duplicate node id {node_id!r}", lineno, "nodes")
        eid = rec.get("eid")
        nodes[node_id] = Node(node_id, label, None if eid is None else str(eid), attrs)
    edges: list[Edge] = []
    for lineno, line in _read_lines(edges_source):
        rec = _parse_record(line, lineno, "edges")
        try:
            edge = (str(rec["src"]), str(rec["label"]), str(rec["dst"]))
        except KeyError as exc:
            raise LoadError(f"bad edge record (missing {exc})", lineno, "edges") from None
        for end in (edge[0], edge[2]):
            if end not in nodes:
                raise LoadError(f"edge {edge} references unknown node {end!r}", lineno, "edges")
        if not edge[1]:
            raise LoadError(f"edge {edge} has an empty label", lineno, "edges")
        edges.append(edge)
    return PropertyGraph(nodes.values(), edges)


def dump_graph(graph: PropertyGraph, nodes_out: IO[str], edges_out: IO[str]) -> None:
    for node_id in sort_ids(graph.nodes):
        nodes_out.write(json.dumps(graph.nodes[node_id].to_record(), sort_keys=False) + "\n")
    for src, label, dst in graph.edges:
        edges_out.write(json.dumps({"src": src, "label": label, "dst": dst}) + "\n")


def read_graph_files(nodes_path, edges_path) -> PropertyGraph:
    with open(nodes_path, encoding="utf-8") as nf, open(edges_path, encoding="utf-8") as ef:
        return load_graph(nf, ef)


def write_graph_files(graph: PropertyGraph, nodes_path, edges_path) -> None:
    with open(nodes_path, "w", encoding="utf-8") as nf, open(edges_path, "w", encoding="utf-8") as ef:
        dump_graph(graph, nf, ef)


# -- relational -> graph ---------------------------------------------------


@dataclass
class TableSpec:
    label: str
    id_column: str
    attr_columns: list[str]
    eid_column: str | None = None


@dataclass
class ForeignKey:
    table: str
    column: str
    target: str
    edge_label: str


@dataclass
class RelationalSchemaConfig:
    tables: dict[str, TableSpec]
    foreign_keys: list[ForeignKey] = field(default_factory=list)

    def __post_init__(self):
        for fk in self.foreign_keys:
            if fk.table not in self.tables:
                raise ConfigError(f"foreign key source table {fk.table!r} is not declared")
            if fk.target not in self.tables:
                raise ConfigError(f"foreign key {fk.table}.{fk.column} targets undeclared table {fk.target!r}")
            if not fk.edge_label:
                raise ConfigError(f"foreign key {fk.table}.{fk.column} has an empty edge label")

    @classmethod
    def from_ini(cls, text: str) -> "RelationalSchemaConfig":
        """Parse the converter config.

        ::

            [table:paper]
            label = paper
            id = id
            attrs = title, year
            eid = key          ; optional

            [fk:paper.venue_id]
            target = venue
            label = published_in
        """
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"unreadable schema config: {exc}") from None
        tables: dict[str, TableSpec] = {}
        fks: list[ForeignKey] = []
        for section in parser.sections():
            sec = parser[section]
            if section.startswith("table:"):
                name = section[len("table:"):].strip()
                if "id" not in sec:
                    raise ConfigError(f"[{section}] lacks an 'id' entry")
                attrs = [a.strip() for a in sec.get("attrs", "").split(",") if a.strip()]
                tables[name] = TableSpec(sec.get("label", name), sec["id"], attrs, sec.get("eid"))
            elif section.startswith("fk:"):
                table, _, column = section[len("fk:"):].strip().partition(".")
                if not column or "target" not in sec:
                    raise ConfigError(f"[{section}] must be fk:<table>.<column> with a 'target'")
                fks.append(ForeignKey(table, column, sec["target"], sec.get("label", "")))
            else:
                raise ConfigError(f"unknown section [{section}]")
        if not tables:
            raise ConfigError("schema config declares no tables")
        return cls(tables, fks)


def _table_node_id(table: str, key: str) -> str:
    return f"{table}:{key}"


def convert_relational(tables: Mapping[str, IO[str] | str], config: RelationalSchemaConfig) -> PropertyGraph:
    """One node per row, one edge per non-empty foreign-key cell."""
    rows: dict[str, list[dict[str, str]]] = {}
    for name, spec in config.tables.items():
        if name not in tables:
            raise ConfigError(f"table {name!r} declared in config but not supplied")
        src = tables[name]
        if isinstance(src, str):
            src = io.StringIO(src)
        reader = csv.DictReader(src)
        header = reader.fieldnames or []
        needed = [spec.id_column, *spec.attr_columns]
        if spec.eid_column:
            needed.append(spec.eid_column)
        needed += [fk.column for fk in config.foreign_keys if fk.table == name]
        missing = [c for c in needed if c not in header]
        if header and missing:
            raise ConfigError(f"table {name!r} lacks declared column(s) {missing}")
        # a headerless empty stream is an empty table
        rows[name] = list(reader) if header else []

    nodes: list[Node] = []
    seen: set[str] = set()
    for name, spec in config.tables.items():
        for row in rows[name]:
            key = row[spec.id_column]
            node_id = _table_node_id(name, key)
            if node_id in seen:
                raise DataError(f"table {name!r} repeats id {key!r}")
            seen.add(node_id)
            attrs = {c: row[c] for c in spec.attr_columns if row.get(c, "") != ""}
            eid = row.get(spec.eid_column) if spec.eid_column else None
            nodes.append(Node(node_id, spec.label, eid or None, attrs))

    edges: list[Edge] = []
    unresolved: list[tuple[str, int, str]] = []
    for fk in config.foreign_keys:
        for rowno, row in enumerate(rows[fk.table], 1):
            cell = row.get(fk.column, "")
            if cell == "":
                continue
            target = _table_node_id(fk.target, cell)
            if target not in seen:
                unresolved.append((fk.table, rowno, fk.column, cell))
                continue
            src = _table_node_id(fk.table, row[config.tables[fk.table].id_column])
            edges.append((src, fk.edge_label, target))
    if unresolved:
        listing = ", ".join(f"({t}, row {r}, {c}={v!r})" for t, r, c, v in unresolved)
        raise DataError(f"unresolvable foreign key value(s): {listing}")
    return PropertyGraph(nodes, edges)
