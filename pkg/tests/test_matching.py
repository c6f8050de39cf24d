import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gddlink.embed_struct import EmbeddingTable
from gddlink.errors import ConfigError, NotFoundError
from gddlink.matching import (
    NO_PATTERN,
    SATISFIED,
    VIOLATED,
    LinkedEntityGraph,
    UnionFind,
    confirm_match,
    knn_match,
    link_entities,
    read_links,
    replay_witness,
    write_links,
    write_match_report,
)

from fixtures import as_oracle_rules, random_linking_case
from oracles import brute_knn, brute_linked


def test_name_rule_links_absolem_pair(toy, rules):
    d = confirm_match(("v4", "v3"), rules, toy)
    assert d.linked and d.reason == SATISFIED
    assert d.pair == ("v3", "v4")
    assert d.witness.rule == "phi2"
    assert {d.witness.assignment["x"], d.witness.assignment["x'"]} == {"v3", "v4"}
    assert d.witness.assignment["y"] == "v7"
    assert replay_witness(d, rules, toy)


def test_phone_rule_links_hatter_pair(toy, rules):
    d = confirm_match(("v10", "v11"), rules, toy)
    assert d.linked and d.witness.rule == "phi1"


def test_shared_ip_but_different_people(toy, rules):
    d = confirm_match(("v3", "v10"), rules, toy)
    assert not d.linked and d.reason == VIOLATED and d.witness is None
    assert not replay_witness(d, rules, toy)


def test_no_shared_ip(toy, rules):
    d = confirm_match(("v2", "v3"), rules, toy)
    assert d.reason == NO_PATTERN


def test_unknown_node(toy, rules):
    with pytest.raises(NotFoundError):
        confirm_match(("v3", "zz"), rules, toy)


def test_link_entities_on_user_pairs(toy, rules):
    users = toy.nodes_with_label("user")
    out = link_entities(itertools.combinations(users, 2), rules, toy)
    assert out.pairs == [("v3", "v4"), ("v10", "v11")]
    assert out.clusters == [["v3", "v4"], ["v10", "v11"]]
    assert len(out.decisions) == 15
    with pytest.raises(ConfigError):
        link_entities([("v3", "v4")], [], toy)


def test_workers_do_not_change_links(toy, rules):
    users = toy.nodes_with_label("user")
    one = link_entities(itertools.combinations(users, 2), rules, toy)
    two = link_entities(itertools.combinations(users, 2), rules, toy, workers=2)
    assert one.pairs == two.pairs
    assert [d.to_json() for d in one.decisions] == [d.to_json() for d in two.decisions]


def test_clusters_are_transitive():
    out = LinkedEntityGraph.from_pairs([("b", "c"), ("a", "b"), ("x", "y"), ("c", "c")])
    assert out.clusters == [["a", "b", "c"], ["x", "y"]]
    uf = UnionFind()
    uf.union("v10", "v2")
    assert uf.find("v10") == "v2"


def test_link_files(tmp_path, toy, rules):
    users = toy.nodes_with_label("user")
    out = link_entities(itertools.combinations(users, 2), rules, toy)
    write_links(out, tmp_path / "links.tsv")
    assert read_links(tmp_path / "links.tsv") == out.pairs
    write_match_report(out.decisions, tmp_path / "report.jsonl")
    rows = [json.loads(l) for l in (tmp_path / "report.jsonl").read_text().splitlines()]
    assert sum(r["linked"] for r in rows) == 2
    assert all("witness" in r for r in rows if r["linked"])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000))
def test_confirm_match_agrees_with_brute_force(seed):
    graph, rules = random_linking_case(seed, max_nodes=14)
    nodes = {v: n.label for v, n in graph.nodes.items()}
    attrs = {v: n.attrs for v, n in graph.nodes.items()}
    oracle_rules = as_oracle_rules(rules)
    for a, b in itertools.combinations(sorted(graph.nodes), 2):
        d = confirm_match((a, b), rules, graph)
        assert d.linked == brute_linked((a, b), oracle_rules, nodes, set(graph.edges), attrs)
        if d.linked:
            assert replay_witness(d, rules, graph)


def test_knn_examples():
    emb = EmbeddingTable(["a", "b", "c", "d"], np.array([[1.0, 0.0], [0.9, 0.1], [0.0, 1.0], [0.1, 1.0]]))
    assert knn_match(emb, 1) == {("a", "b"), ("c", "d")}
    assert knn_match(emb, 1, {"a": "u", "b": "v", "c": "u", "d": "v"}) == {("a", "c"), ("b", "d")}
    with pytest.raises(ConfigError):
        knn_match(emb, 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4))
def test_knn_matches_exhaustive_scan(seed, k):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 12))
    vecs = rng.normal(size=(n, 3))
    groups = [str(g) for g in rng.integers(0, 2, size=n)]
    keys = [f"k{i}" for i in range(n)]
    got = knn_match(EmbeddingTable(keys, vecs), k, dict(zip(keys, groups)))
    want = {(keys[i], keys[j]) for i, j in brute_knn(vecs, k, groups)}
    assert got == want
