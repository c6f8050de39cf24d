"""Seeded synthetic inputs shared by the unit and acceptance tests."""

from __future__ import annotations

import numpy as np

from gddlink.embed_struct import EmbeddingTable
from gddlink.pipeline import PipelineConfig


def planted_vectors(n_base: int = 500, dim: int = 64, max_dist: float = 0.1, seed: int = 0):
    """``n_base`` random unit vectors plus one duplicate each at cosine distance U(0, max_dist).

    Returns the table and the planted duplicate pairs as ordered key tuples.
    """
    rng = np.random.default_rng(seed)
    base = rng.normal(size=(n_base, dim))
    base /= np.linalg.norm(base, axis=1, keepdims=True)
    noise = rng.normal(size=(n_base, dim))
    noise -= np.sum(noise * base, axis=1, keepdims=True) * base
    noise /= np.linalg.norm(noise, axis=1, keepdims=True)
    cos = 1.0 - rng.uniform(0.0, max_dist, size=n_base)
    dup = cos[:, None] * base + np.sqrt(1.0 - cos ** 2)[:, None] * noise
    keys = [f"b{i}" for i in range(n_base)] + [f"d{i}" for i in range(n_base)]
    table = EmbeddingTable(keys, np.vstack([base, dup]))
    truth = {tuple(sorted((f"b{i}", f"d{i}"))) for i in range(n_base)}
    return table, truth


def vectors_at_angle(angle: float, dim: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    a = rng.normal(size=dim)
    a /= np.linalg.norm(a)
    n = rng.normal(size=dim)
    n -= (n @ a) * a
    n /= np.linalg.norm(n)
    return a, np.cos(angle) * a + np.sin(angle) * n


def random_linking_case(seed: int, max_nodes: int = 50):
    """Seeded random graph (at most three labels) with a few random linking rules."""
    import random

    from gddlink.gdd import VC, DistanceConstraint, Gdd
    from gddlink.graph import Node, PropertyGraph
    from gddlink.patterns import GraphPattern

    rng = random.Random(seed)
    labels = ["a", "b", "c"][: rng.randint(1, 3)]
    n = rng.randint(2, max_nodes)
    pool = ["ann", "anne", "bob", "bobby", "", "*", "cat", "kat"]
    nodes = []
    for i in range(n):
        attrs = {k: rng.choice(pool) for k in ("A", "B") if rng.random() < 0.85}
        eid = rng.choice(["e1", "e2", "e3", None])
        nodes.append(Node(f"n{i}", rng.choice(labels), eid, attrs))
    edges = {(f"n{rng.randrange(n)}", rng.choice("rs"), f"n{rng.randrange(n)}") for _ in range(rng.randint(0, 2 * n))}
    graph = PropertyGraph(nodes, sorted(edges))

    rules = []
    for r in range(rng.randint(1, 3)):
        lab = rng.choice(labels + ["*"])
        shape = rng.choice(["edge", "shared", "path"])
        var_labels = {"x": lab, "y": lab}
        if shape == "edge":
            vars_, pedges = ("x", "y"), (("x", rng.choice("rs*"), "y"),)
        else:
            var_labels["z"] = rng.choice(labels + ["*"])
            vars_ = ("x", "y", "z")
            if shape == "shared":
                pedges = (("x", rng.choice("rs"), "z"), ("y", rng.choice("rs"), "z"))
            else:
                pedges = (("x", rng.choice("rs"), "z"), ("z", rng.choice("rs"), "y"))
        scope = GraphPattern(vars_, var_labels, pedges)
        lhs = [DistanceConstraint(VC, ("x", "y"), attr, rng.choice([0.0, 0.2, 0.25, 0.5]))
               for attr in ("A", "B") if rng.random() < 0.6]
        rules.append(Gdd.linking(scope, lhs, ("x", "y"), rng.randint(0, 5), f"g{r}"))
    return graph, rules



def as_oracle_rules(rules):
    """Plain tuples for the brute-force evaluator in the oracles module."""
    out = []
    for g in rules:
        lhs = [(c.attr, c.vars[0], c.vars[1], c.threshold) for c in g.lhs]
        out.append((g.scope.vars, g.scope.var_labels, g.scope.edges, g.eid_vars, lhs))
    return out


def random_discovery_case(seed: int):
    """Random attributes, descending grids, two-sided records and a minimum support."""
    import random

    rng = random.Random(seed)
    n_attr = rng.randint(1, 4)
    attrs = [f"A{i}" for i in range(n_attr)]
    grids = [sorted(rng.sample([0.0, 0.1, 0.2, 0.25, 0.34, 0.5, 0.67], rng.randint(1, 6)), reverse=True)
             for _ in attrs]
    records = []
    for _ in range(rng.randint(0, 8)):
        def value():
            return rng.choice(["", "*", "ab", "ac", "abc", "bc", "a", "cab"])
        eids = rng.choice([("e1", "e1"), ("e1", "e2"), ("e1", "e1"), ("*", "e1")])
        left = {a: value() for a in attrs}
        right = {a: (left[a] if rng.random() < 0.4 else value()) for a in attrs}
        left["eid"], right["eid"] = eids
        records.append((left, right))
    return attrs, grids, records, rng.randint(1, 3)



def pseudo_relation(attrs, records):
    """Hand-built pseudo-relation over Q3; each record is (left dict, right dict)."""
    from gddlink.datasets import video_patterns
    from gddlink.patterns import EID, PseudoRelation

    q3 = video_patterns()["Q3"]
    columns = [(v, a) for v in q3.vars for a in attrs] + [(v, EID) for v in q3.vars]
    rows = []
    for left, right in records:
        row = {}
        for var, rec in (("x", left), ("x'", right), ("y", {})):
            for a in attrs:
                row[(var, a)] = rec.get(a, "*")
            row[(var, EID)] = rec.get("eid", "*")
        rows.append(row)
    return PseudoRelation(q3, columns, rows, [{} for _ in rows])


# Settings under which the twelve-node graph links exactly its two duplicate pairs:
# small embeddings, coarse two-bit buckets, no distance cut and every labelled node
# used to learn the dice threshold.
TOY_SETTINGS = {
    "target_label": "user",
    "struct.dim": "16",
    "attr.train.dim": "16",
    "attr.latent_dim": "8",
    "block.b": "2",
    "block.max_dist": "2.0",
    "block.cap": "100",
    "prune.validation_fraction": "1.0",
}


def toy_config(output) -> PipelineConfig:
    cfg = PipelineConfig.from_mapping(TOY_SETTINGS)
    cfg.output = str(output)
    return cfg


def toy_config_text() -> str:
    return "".join(f"{k} = {v}\n" for k, v in TOY_SETTINGS.items())
