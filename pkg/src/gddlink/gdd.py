"""Graph differential dependencies: constraints, evaluation, discovery and ranking."""

from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .distance import DistanceFunction
from .errors import ConfigError, EvaluationError
from .graph import WILDCARD, PropertyGraph
from .patterns import EID, GraphPattern, PseudoRelation, relation_key

log = logging.getLogger(__name__)

CC, VC = "CC", "VC"
EID_CC, EID_VC = "eid-CC", "eid-VC"
REL_CC, REL_VC = "rel-CC", "rel-VC"
FORMS = (CC, VC, EID_CC, EID_VC, REL_CC, REL_VC)
_TWO_VAR = (VC, EID_VC, REL_VC)

DEFAULT_EDIT_GRID = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)


@dataclass(frozen=True)
class DistanceConstraint:
    """One LHS/RHS literal.

    ``attr`` is the attribute for CC/VC and the relation name for the rel
    forms; ``attr2`` is the right-hand attribute of a VC comparing two
    different attributes.
    """

    form: str
    vars: tuple[str, ...]
    attr: str = ""
    threshold: float = 0.0
    fn: DistanceFunction = DistanceFunction("normalized-edit")
    constant: str | None = None
    attr2: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "vars", tuple(self.vars))
        if self.form not in FORMS:
            raise ConfigError(f"unknown constraint form {self.form!r}")
        want = 2 if self.form in _TWO_VAR else 1
        if len(self.vars) != want:
            raise ConfigError(f"{self.form} constraint needs {want} variable(s), got {self.vars}")
        if self.form in (CC, EID_CC, REL_CC) and self.constant is None:
            raise ConfigError(f"{self.form} constraint needs a constant")
        if self.form in (EID_CC, EID_VC, REL_CC, REL_VC) and self.threshold != 0:
            raise ConfigError(f"{self.form} constraints carry threshold 0")
        if self.form in (CC, VC, REL_CC, REL_VC) and not self.attr:
            raise ConfigError(f"{self.form} constraint needs an attribute or relation name")

    @property
    def right_attr(self) -> str:
        return self.attr2 or self.attr

    def item(self) -> tuple:
        """Identity of the constraint ignoring its threshold."""
        return (self.form, self.vars, self.attr, self.right_attr, self.constant, self.fn.kind)

    def to_json(self) -> dict:
        out: dict = {"form": self.form}
        if len(self.vars) == 1:
            out["var"] = self.vars[0]
        else:
            out["vars"] = list(self.vars)
        if self.attr:
            out["attr"] = self.attr
        if self.attr2 and self.attr2 != self.attr:
            out["attr2"] = self.attr2
        if self.constant is not None:
            out["constant"] = self.constant
        if self.form in (CC, VC):
            out["fn"] = self.fn.kind
        out["t"] = self.threshold
        return out

    @classmethod
    def from_json(cls, obj: Mapping) -> "DistanceConstraint":
        try:
            vars_ = tuple(obj["vars"]) if "vars" in obj else (obj["var"],)
            return cls(
                form=obj["form"],
                vars=vars_,
                attr=obj.get("attr", ""),
                threshold=float(obj.get("t", 0.0)),
                fn=DistanceFunction(obj.get("fn", "normalized-edit")),
                constant=None if obj.get("constant") is None else str(obj["constant"]),
                attr2=obj.get("attr2"),
            )
        except KeyError as exc:
            raise ConfigError(f"constraint object lacks {exc}") from None

    def __str__(self) -> str:
        rel = "=" if self.threshold == 0 else "≤"
        t = "0" if self.threshold == 0 else f"{self.threshold:g}"
        if self.form == VC:
            x, y = self.vars
            if self.right_attr == self.attr:
                return f"δ_{self.attr}({x}, {y}) {rel} {t}"
            return f"δ_{self.attr}{self.right_attr}({x}.{self.attr}, {y}.{self.right_attr}) {rel} {t}"
        if self.form == CC:
            return f"δ_{self.attr}({self.vars[0]}.{self.attr}, \"{self.constant}\") {rel} {t}"
        if self.form == EID_VC:
            return f"δ_eid({self.vars[0]}, {self.vars[1]}) = 0"
        if self.form == EID_CC:
            return f"δ_eid({self.vars[0]}.eid, \"{self.constant}\") = 0"
        if self.form == REL_VC:
            return f"δ_≡({self.vars[0]}.{self.attr}, {self.vars[1]}.{self.attr}) = 0"
        return f"δ_≡({self.vars[0]}.{self.attr}, {self.constant}) = 0"


class GraphRow(Mapping):
    """Pseudo-relation-style row view over a live assignment in a graph."""

    def __init__(self, graph: PropertyGraph, assignment: Mapping[str, str]):
        self.graph = graph
        self.assignment = assignment

    def __getitem__(self, key):
        var, col = key
        node = self.graph.nodes[self.assignment[var]]
        if col == EID:
            return node.eid if node.eid is not None else WILDCARD
        if col.startswith("->"):
            return frozenset(self.graph.relation_targets(node.id, col[2:]))
        return node.attrs.get(col, WILDCARD)

    def __iter__(self):
        return iter(())

    def __len__(self) -> int:
        return 0


def _cell(row: Mapping, var: str, col: str, name: str):
    try:
        return row[(var, col)]
    except KeyError:
        raise EvaluationError(f"row has no column for {var}.{name}") from None


def measure(c: DistanceConstraint, row: Mapping) -> float:
    """Distance of the row on ``c``'s operands (0/1 for eid and relation forms)."""
    if c.form == VC:
        x, y = c.vars
        return c.fn(_cell(row, x, c.attr, c.attr), _cell(row, y, c.right_attr, c.right_attr))
    if c.form == CC:
        return c.fn(_cell(row, c.vars[0], c.attr, c.attr), c.constant)
    if c.form == EID_VC:
        a = _cell(row, c.vars[0], EID, "eid")
        b = _cell(row, c.vars[1], EID, "eid")
        # both eids known and equal; mere presence of eids is not enough
        return 0.0 if a != WILDCARD and b != WILDCARD and a == b else 1.0
    if c.form == EID_CC:
        return 0.0 if _cell(row, c.vars[0], EID, "eid") == c.constant else 1.0
    key = relation_key(c.attr)
    if c.form == REL_VC:
        a = _cell(row, c.vars[0], key, c.attr)
        b = _cell(row, c.vars[1], key, c.attr)
        return 0.0 if a and b and (a & b) else 1.0
    return 0.0 if c.constant in _cell(row, c.vars[0], key, c.attr) else 1.0


def eval_constraint(c: DistanceConstraint, row: Mapping) -> bool:
    return measure(c, row) <= c.threshold


@dataclass(frozen=True)
class Gdd:
    scope: GraphPattern
    lhs: tuple[DistanceConstraint, ...]
    rhs: tuple[DistanceConstraint, ...]
    support: int = 0
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "lhs", tuple(self.lhs))
        object.__setattr__(self, "rhs", tuple(self.rhs))
        if self.support < 0:
            raise ConfigError("support must be non-negative")
        for c in (*self.lhs, *self.rhs):
            for v in c.vars:
                if v not in self.scope.var_labels:
                    raise ConfigError(f"constraint {c} uses variable {v!r} not in scope {self.scope}")
        eid_rhs = [c for c in self.rhs if c.form == EID_VC]
        if len(eid_rhs) != 1 or len(self.rhs) != 1:
            raise ConfigError("a linking rule's RHS is exactly one eid variable-constraint")

    @classmethod
    def linking(cls, scope: GraphPattern, lhs: Iterable[DistanceConstraint], eid_vars: tuple[str, str],
                support: int = 0, name: str = "") -> "Gdd":
        rhs = (DistanceConstraint(EID_VC, tuple(eid_vars)),)
        return cls(scope, tuple(lhs), rhs, support, name)

    @property
    def eid_vars(self) -> tuple[str, str]:
        return self.rhs[0].vars  # type: ignore[return-value]

    @property
    def attributes(self) -> set[str]:
        out = set()
        for c in self.lhs:
            if c.form in (CC, VC):
                out.add(c.attr)
                out.add(c.right_attr)
        return out

    def to_json(self) -> dict:
        out = {
            "scope": self.scope.to_json(),
            "lhs": [c.to_json() for c in self.lhs],
            "rhs": {"eid_vars": list(self.eid_vars)},
            "support": self.support,
        }
        if self.name:
            out["name"] = self.name
        return out

    @classmethod
    def from_json(cls, obj: Mapping, default_name: str = "") -> "Gdd":
        try:
            scope = GraphPattern.from_json(obj["scope"])
            lhs = [DistanceConstraint.from_json(c) for c in obj.get("lhs", [])]
            eid_vars = tuple(obj["rhs"]["eid_vars"])
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed rule object: {exc}") from None
        return cls.linking(scope, lhs, eid_vars, int(obj.get("support", 0)), obj.get("name", default_name))

    def serialize(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, ensure_ascii=False)

    def __str__(self) -> str:
        lhs = " ∧ ".join(str(c) for c in self.lhs) or "∅"
        x, y = self.eid_vars
        head = f"{self.name}: " if self.name else ""
        return f"{head}({self.scope}, {{{lhs}}} → δ_eid({x}, {y}) = 0)"


def satisfies_lhs(g: Gdd, row: Mapping) -> bool:
    return all(eval_constraint(c, row) for c in g.lhs)


def rank_rules(rules: Iterable[Gdd]) -> list[Gdd]:
    """Higher support first, then fewer LHS constraints, then serialization order."""
    return sorted(rules, key=lambda g: (-g.support, len(g.lhs), g.serialize()))


def save_rules(rules: Sequence[Gdd], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([g.to_json() for g in rules], fh, indent=2, ensure_ascii=False)
        fh.write("\n")


def load_rules(path) -> list[Gdd]:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"rule file {path} is not valid JSON: {exc}") from None
    if not isinstance(data, list):
        raise ConfigError("rule file must hold a JSON array")
    return [Gdd.from_json(obj, f"r{i}") for i, obj in enumerate(data)]


# -- discovery -------------------------------------------------------------


@dataclass
class AttributeSpec:
    fn: str = "normalized-edit"
    grid: Sequence[float] | None = None
    constants: Sequence[str] = ()

    def thresholds(self) -> list[float]:
        if self.grid is not None:
            grid = self.grid
        elif self.fn in ("normalized-edit", "jaccard-token"):
            grid = DEFAULT_EDIT_GRID
        else:
            grid = (0.0,)
        return sorted({float(t) for t in grid}, reverse=True)


@dataclass
class DiscoveryConfig:
    eid_vars: tuple[str, str]
    attributes: dict[str, AttributeSpec] = field(default_factory=dict)
    relations: Sequence[str] = ()

    @classmethod
    def from_json(cls, obj: Mapping, eid_vars: tuple[str, str]) -> "DiscoveryConfig":
        attrs = {
            name: AttributeSpec(spec.get("fn", "normalized-edit"), spec.get("grid"), tuple(spec.get("constants", ())))
            for name, spec in obj.get("attributes", {}).items()
        }
        return cls(tuple(eid_vars), attrs, tuple(obj.get("relations", ())))


@dataclass(frozen=True)
class _Item:
    """A constraint family: every member differs only in its threshold."""

    key: tuple
    make: object  # threshold -> DistanceConstraint
    grid: tuple[float, ...]  # loosest first


def _items(config: DiscoveryConfig) -> list[_Item]:
    x, y = config.eid_vars
    items: list[_Item] = []
    for attr in sorted(config.attributes):
        spec = config.attributes[attr]
        fn = DistanceFunction(spec.fn)
        grid = tuple(spec.thresholds())
        items.append(_Item((VC, attr), lambda t, a=attr, f=fn: DistanceConstraint(VC, (x, y), a, t, f), grid))
        for var in (x, y):
            for const in spec.constants:
                items.append(_Item(
                    (CC, attr, var, const),
                    lambda t, a=attr, f=fn, v=var, c=const: DistanceConstraint(CC, (v,), a, t, f, constant=c),
                    grid,
                ))
    for rel in sorted(config.relations):
        items.append(_Item((REL_VC, rel), lambda t, r=rel: DistanceConstraint(REL_VC, (x, y), r, 0.0), (0.0,)))
    return items


def _bits(mask: np.ndarray) -> int:
    return int.from_bytes(np.packbits(mask, bitorder="little").tobytes(), "little")


def _generalizes(general: dict, specific: dict) -> bool:
    """True when LHS ``general`` is implied by LHS ``specific``."""
    return all(k in specific and specific[k] <= t for k, t in general.items())


def discover_gdds(pr: PseudoRelation, config: DiscoveryConfig, min_support: int) -> list[Gdd]:
    """Minimal valid linking rules over one pseudo-relation.

    A candidate LHS picks at most one threshold per constraint family. It is
    valid when every eid-complete row it selects has equal eids on
    ``config.eid_vars``; support counts those selected rows. Rows with a
    wildcard eid on either designated variable are ignored throughout.
    """
    x, y = config.eid_vars
    for v in (x, y):
        if (v, EID) not in pr.columns:
            raise ConfigError(f"pseudo-relation lacks an eid column for variable {v!r}")
    rows = [r for r in pr.rows if r[(x, EID)] != WILDCARD and r[(y, EID)] != WILDCARD]
    n = len(rows)
    all_bits = (1 << n) - 1
    eq = _bits(np.array([r[(x, EID)] == r[(y, EID)] for r in rows], dtype=bool))
    neq = all_bits & ~eq

    items = _items(config)
    masks: dict[tuple, dict[float, int]] = {}
    for item in items:
        probe = item.make(item.grid[0])
        dists = np.array([measure(probe, r) for r in rows], dtype=float)
        masks[item.key] = {t: _bits(dists <= t) for t in item.grid}

    found: list[dict] = []
    supports: list[int] = []

    def redundant(lhs: dict) -> bool:
        return any(_generalizes(f, lhs) for f in found)

    def emit(sat: int, lhs: dict) -> bool:
        support = (sat & eq).bit_count()
        if support < min_support:
            return False
        if sat & neq:
            return False
        found.append(lhs)
        supports.append(support)
        return True

    if emit(all_bits, {}):
        return _to_rules(pr.pattern, config, items, found, supports)

    alive: set[frozenset] = {frozenset()}
    by_key = {it.key: it for it in items}
    keys = [it.key for it in items]
    for k in range(1, len(keys) + 1):
        next_alive: set[frozenset] = set()
        for combo in itertools.combinations(keys, k):
            fs = frozenset(combo)
            if any(fs - {c} not in alive for c in combo):
                continue
            loosest = all_bits
            for c in combo:
                loosest &= masks[c][by_key[c].grid[0]]
            if (loosest & eq).bit_count() < min_support:
                continue
            grids = [by_key[c].grid for c in combo]
            loosest_valid = False
            for ts in itertools.product(*grids):
                lhs = dict(zip(combo, ts))
                if redundant(lhs):
                    continue
                sat = all_bits
                for c, t in lhs.items():
                    sat &= masks[c][t]
                if emit(sat, lhs) and all(t == g[0] for t, g in zip(ts, grids)):
                    loosest_valid = True
            if not loosest_valid:
                next_alive.add(fs)
        alive = next_alive
        if not alive:
            break
    return _to_rules(pr.pattern, config, items, found, supports)


def _to_rules(scope, config, items, found, supports) -> list[Gdd]:
    by_key = {it.key: it for it in items}
    rules = []
    for i, lhs in enumerate(found):
        # discovery order visits generalizations first, so this only guards the invariant
        if any(j != i and _generalizes(g, lhs) for j, g in enumerate(found)):
            continue
        constraints = tuple(by_key[k].make(t) for k, t in sorted(lhs.items(), key=lambda kv: repr(kv[0])))
        rules.append(Gdd.linking(scope, constraints, config.eid_vars, supports[i]))
    return rank_rules(rules)


def default_discovery_config(graph: PropertyGraph, pattern: GraphPattern, eid_vars: tuple[str, str],
                             overrides: Mapping | None = None) -> DiscoveryConfig:
    """Normalized-edit VCs over every attribute seen on the eid variables' label."""
    label = pattern.var_labels[eid_vars[0]]
    names: set[str] = set()
    for node_id in graph.nodes_with_label(label):
        names.update(graph.nodes[node_id].attrs)
    attrs = {a: AttributeSpec() for a in sorted(names)}
    relations: tuple = ()
    if overrides:
        for a, spec in overrides.get("attributes", {}).items():
            attrs[a] = AttributeSpec(spec.get("fn", "normalized-edit"), spec.get("grid"),
                                     tuple(spec.get("constants", ())))
        if "only" in overrides:
            attrs = {a: s for a, s in attrs.items() if a in set(overrides["only"])}
        relations = tuple(overrides.get("relations", ()))
    return DiscoveryConfig(tuple(eid_vars), attrs, relations)
