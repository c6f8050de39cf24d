import math

import numpy as np
import pytest

from gddlink.blocking import (
    Block,
    BlockParams,
    block_pair_count,
    build_lsh_index,
    candidate_pairs,
    dump_blocks,
    generate_blocks,
    hash_codes,
    load_blocks,
    query_block,
)
from gddlink.embed_struct import EmbeddingTable, TrainConfig, random_walks, metapath_schemes, train_skipgram
from gddlink.errors import ConfigError, DataError, NotFoundError

from fixtures import planted_vectors, vectors_at_angle
from oracles import hyperplane_collision


def test_identical_vectors_share_every_bucket():
    emb = EmbeddingTable(["a", "b", "c"], np.array([[1.0, 2.0, 0.5], [2.0, 4.0, 1.0], [-1.0, 0.3, 2.0]]))
    index = build_lsh_index(emb, L=8, b=6)
    assert np.array_equal(index.codes[:, 0], index.codes[:, 1])


def test_opposite_vectors_have_complementary_codes():
    rng = np.random.default_rng(3)
    planes = rng.normal(size=(4, 10, 5))
    v = rng.normal(size=(1, 5))
    a, b = hash_codes(planes, v), hash_codes(planes, -v)
    assert np.array_equal(a ^ b, np.full_like(a, (1 << 10) - 1))


@pytest.mark.parametrize("angle,bits", [(0.3, 4), (0.8, 3), (1.5, 2)])
def test_collision_rate_matches_hyperplane_formula(angle, bits):
    rng = np.random.default_rng(int(angle * 100) + bits)
    a, b = vectors_at_angle(angle, 16, rng)
    tables = 4000
    index = build_lsh_index(EmbeddingTable(["a", "b"], np.vstack([a, b])), L=tables, b=bits, seed=11)
    rate = float(np.mean(index.codes[:, 0] == index.codes[:, 1]))
    p = hyperplane_collision(angle, bits)
    assert abs(rate - p) <= 3 * math.sqrt(p * (1 - p) / tables)


def test_max_dist_zero_keeps_only_exact_direction():
    emb = EmbeddingTable(["q", "same", "near"], np.array([[1.0, 0.0], [3.0, 0.0], [1.0, 0.05]]))
    index = build_lsh_index(emb, L=4, b=2)
    assert query_block(index, "q", emb, 0.0, 10).members == {"q", "same"}


def test_cap_one_is_the_query_alone():
    emb = EmbeddingTable(["q", "p"], np.array([[1.0, 0.0], [1.0, 0.0]]))
    assert query_block(build_lsh_index(emb), "q", emb, 0.5, 1).members == {"q"}


def test_cap_keeps_nearest():
    emb = EmbeddingTable(["q", "a", "b", "c"], np.array([[1.0, 0.0], [1.0, 0.2], [1.0, 0.01], [1.0, 0.1]]))
    index = build_lsh_index(emb, L=1, b=1, seed=0)
    index.tables[0] = {int(index.codes[0, 0]): [0, 1, 2, 3]}  # force one bucket
    index.codes[0, :] = index.codes[0, 0]
    assert query_block(index, "q", emb, 1.0, 3).members == {"q", "b", "c"}


def test_query_errors():
    emb = EmbeddingTable(["q"], np.ones((1, 2)))
    index = build_lsh_index(emb)
    with pytest.raises(NotFoundError):
        query_block(index, "zz", emb, 0.3, 5)
    with pytest.raises(ConfigError):
        query_block(index, "q", emb, 0.3, 0)
    with pytest.raises(ConfigError):
        build_lsh_index(emb, L=0)
    with pytest.raises(DataError):
        build_lsh_index(EmbeddingTable([], np.zeros((0, 2))))


def test_label_filter():
    emb = EmbeddingTable(["q", "p"], np.array([[1.0, 0.0], [1.0, 0.0]]))
    labels = {"q": "user", "p": "video"}
    assert query_block(build_lsh_index(emb), "q", emb, 0.5, 5, labels).members == {"q"}


@pytest.mark.parametrize("seed", range(3))
def test_toy_block_of_v3(toy, patterns, seed):
    cfg = TrainConfig(dim=16, epochs=5, walks_per_node=10, walk_length=16, seed=seed)
    schemes = metapath_schemes(patterns["Q3"], [("x", "x'")])
    emb = train_skipgram(random_walks(toy, schemes, cfg), cfg).table.subset(toy.nodes_with_label("user"))
    index = build_lsh_index(emb, L=16, b=2, seed=seed)
    assert query_block(index, "v3", emb, 0.5, 20).members == {"v3", "v4", "v10", "v11"}


def test_block_pairs():
    blk = Block("a", frozenset("abcdef"))
    assert blk.num_pairs() == len(blk.pairs()) == 15
    with pytest.raises(DataError):
        Block("z", frozenset("ab"))


def test_generate_merges_spaces():
    s = EmbeddingTable(["a", "b", "c"], np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
    t = EmbeddingTable(["a", "b", "c"], np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]]))
    params = BlockParams(L=4, b=2, max_dist=0.1, cap=5)
    blocks = {b.query: b for b in generate_blocks(s, t, params)}
    assert blocks["a"].members == {"a", "b", "c"}
    assert blocks["a"].source == "merged"
    only = {b.query: b for b in generate_blocks(s, None, params)}
    assert only["a"].members == {"a", "b"}
    assert candidate_pairs(only.values()) == {("a", "b")}
    assert block_pair_count(only.values()) == 2
    with pytest.raises(ConfigError):
        generate_blocks(None, None, params)


def test_planted_duplicates_mostly_recovered():
    emb, truth = planted_vectors(200, 32, 0.1, seed=1)
    blocks = generate_blocks(emb, None, BlockParams())
    found = candidate_pairs(blocks)
    assert len(truth & found) / len(truth) >= 0.9


def test_dump_load_round_trip(tmp_path):
    blocks = [Block("v1", frozenset({"v1", "a,b", "100%"})), Block("x", frozenset({"x"}))]
    path = tmp_path / "blocks.tsv"
    dump_blocks(blocks, path)
    assert load_blocks(path, "structural") == blocks
    path.write_text("q\tp\n")
    with pytest.raises(DataError):
        load_blocks(path)
