import itertools
import math
import random

import pytest
from hypothesis import given, strategies as st

from gddlink.blocking import Block
from gddlink.datasets import tournament_graph
from gddlink.errors import ConfigError, DataError
from gddlink.graph import Node, PropertyGraph
from gddlink.metrics import (
    DELETED,
    EDITED,
    GroundTruth,
    NoiseSpec,
    cssr_g,
    edit_distance_two,
    f1_score,
    generate_noisy,
    metrics_table,
    pair_metrics,
    purity,
)
from gddlink.pruning import BlockGraph, dice

from oracles import levenshtein_dp


def test_truth_from_toy_eids(toy):
    truth = GroundTruth.from_graph(toy)
    assert truth.pairs == {("v3", "v4"), ("v10", "v11")}
    assert ("v4", "v3") in truth


def test_perfect_prediction(toy):
    m = pair_metrics([("v4", "v3"), ("v10", "v11")], GroundTruth.from_graph(toy))
    assert (m.precision, m.recall, m.f1) == (1.0, 1.0, 1.0)


def test_f1_formula():
    assert f1_score(0.8, 0.5) == pytest.approx(0.6154, abs=1e-4)
    assert f1_score(0.0, 0.0) == 0.0


def test_empty_prediction_and_empty_truth(toy):
    m = pair_metrics([], GroundTruth.from_graph(toy))
    assert m.empty_prediction and m.f1 == 0.0
    with pytest.raises(ConfigError):
        pair_metrics([("v3", "v4")], GroundTruth(set()))


def test_cssr(toy):
    users = toy.nodes_with_label("user")
    pairs = list(itertools.combinations(users, 2))
    assert cssr_g(pairs[:10], toy) == pytest.approx(10 / 15)
    assert cssr_g(pairs, toy) == 1.0
    assert cssr_g([], toy) == 0.0
    with pytest.raises(DataError):
        cssr_g([("v3", "v7")], toy)


def test_purity():
    truth = GroundTruth({("a", "b"), ("b", "c")})
    assert purity([Block("a", frozenset("abc"))], truth) == pytest.approx(2 / 3)
    assert purity([Block("a", frozenset("a")), Block("b", frozenset("b"))], truth) == 1.0
    half = BlockGraph("a", ["a", "b", "d"], [("a", "b"), ("a", "d")], {})
    assert purity([Block("a", frozenset("ab")), half], truth) == pytest.approx(0.75)
    with pytest.raises(ConfigError):
        purity([], truth)


def test_metrics_table():
    text = metrics_table({"f1": 0.5, "pairs": 3})
    assert text.splitlines() == ["f1     0.5000", "pairs  3"]


@given(st.text("abc", max_size=6), st.integers(0, 1000))
def test_edit_distance_two(value, seed):
    out = edit_distance_two(value, random.Random(seed))
    assert levenshtein_dp(value, out) == 2


@pytest.fixture(scope="module")
def small_tournament():
    return tournament_graph(seed=3, persons=120, teams=8, matches=40, tournaments=4)


def test_exact_copies_without_noise(small_tournament):
    noisy, truth, log = generate_noisy(small_tournament, NoiseSpec("person", 0.1, False, False, seed=1))
    assert len(log.duplicates) == 12 == len(truth)
    for dup, orig in log.duplicates.items():
        assert noisy.nodes[dup].attrs == noisy.nodes[orig].attrs
        assert dice(noisy.nodes[dup], noisy.nodes[orig]) == 1.0
        assert noisy.degree(dup) == noisy.degree(orig)


def test_attribute_noise_is_two_edits_or_deletion(small_tournament):
    noisy, _, log = generate_noisy(small_tournament, NoiseSpec("person", 0.2, True, False, seed=2))
    ops = set(log.attribute_ops.values())
    assert {EDITED, DELETED} <= ops
    for (dup, attr), op in log.attribute_ops.items():
        before = noisy.nodes[log.duplicates[dup]].attrs[attr]
        after = noisy.nodes[dup].attrs[attr]
        if op == EDITED:
            assert levenshtein_dp(before, after) == 2
        elif op == DELETED:
            assert after == ""
        else:
            assert after == before


def test_structural_noise_keeps_half_the_edges(small_tournament):
    noisy, _, log = generate_noisy(small_tournament, NoiseSpec("person", 0.3, False, True, seed=4))
    assert any(log.removed_edges.values())
    for dup, orig in log.duplicates.items():
        assert noisy.degree(dup) >= math.ceil(0.5 * small_tournament.degree(orig))


def test_noise_is_seeded(small_tournament):
    spec = NoiseSpec("person", 0.1, True, True, seed=9)
    assert generate_noisy(small_tournament, spec)[0] == generate_noisy(small_tournament, spec)[0]


def test_noise_spec_errors():
    with pytest.raises(ConfigError):
        NoiseSpec("person", 1.5)
    with pytest.raises(DataError):
        generate_noisy(PropertyGraph([Node("a", "x")]), NoiseSpec("person", 0.1))
