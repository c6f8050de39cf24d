import numpy as np
import pytest

from gddlink.embed_attr import (
    ATTRIBUTE,
    ENTITY,
    TOKEN,
    AttrEmbedConfig,
    AutoEncoder,
    SifConfig,
    attribute_embeddings,
    build_tripartite,
    sif_aggregate,
    train_autoencoder,
    tripartite_walks,
)
from gddlink.embed_struct import EmbeddingTable, TrainConfig
from gddlink.errors import ConfigError, DataError
from gddlink.graph import Node

from oracles import central_difference


def test_shared_token_links_two_users_and_attribute(toy, rules):
    tg = build_tripartite(toy, rules)
    assert tg.attributes == ["FIRSTNAME", "LASTNAME", "PHONE"]
    entities = [k for k, _ in tg.neighbors(TOKEN + "absolem", ENTITY)]
    assert entities == [ENTITY + "v3", ENTITY + "v4"]
    assert tg.neighbors(TOKEN + "absolem", ATTRIBUTE) == [(ATTRIBUTE + "LASTNAME", 2)]
    assert "v0" not in tg.entities or not tg.weights.get(ENTITY + "v0")


def test_walks_cycle_through_classes(toy, rules):
    tg = build_tripartite(toy, rules, labels=["user"])
    walks = tripartite_walks(tg, length=9, starts=3, seed=1)
    assert len(walks) == 6 * 3
    cycle = (ENTITY, TOKEN, ATTRIBUTE, TOKEN)
    for w in walks:
        assert len(w) == 9
        for i, k in enumerate(w):
            assert k.startswith(cycle[i % 4])
        for a, b in zip(w, w[1:]):
            assert b in tg.weights[a]


def test_sif_weights():
    cfg = SifConfig(1e-3, {"common": 9e-3, "rare": 1e-3})
    assert cfg.weight("rare") == pytest.approx(0.5)
    assert cfg.weight("common") == pytest.approx(0.1)
    assert cfg.weight("unseen") == 1.0


def test_sif_opposite_tokens_cancel():
    tokens = EmbeddingTable(["up", "down"], np.array([[1.0, 2.0], [-1.0, -2.0]]))
    node = Node("n", "x", None, {"A": "up down"})
    assert np.allclose(sif_aggregate(node, tokens, SifConfig()), 0.0)


def test_sif_average_and_empty():
    tokens = EmbeddingTable(["a", "b"], np.array([[2.0, 0.0], [0.0, 4.0]]))
    cfg = SifConfig(1.0, {"a": 1.0, "b": 0.0})
    node = Node("n", "x", None, {"A": "a b"})
    assert np.allclose(sif_aggregate(node, tokens, cfg), [(0.5 * 2) / 2, 4 / 2])
    assert np.allclose(sif_aggregate(Node("m", "x", None, {"A": "*"}), tokens, cfg), 0.0)
    # an unseen token borrows the vocabulary mean
    assert np.allclose(sif_aggregate(Node("k", "x", None, {"A": "zz"}), tokens, cfg), [1.0, 2.0])


def _relative_error(a, b):
    num = np.linalg.norm(a - b)
    den = max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)
    return num / den


@pytest.mark.parametrize("seed", range(20))
def test_autoencoder_gradients(seed):
    rng = np.random.default_rng(seed)
    n_in = int(rng.integers(3, 7))
    latent = int(rng.integers(1, n_in))
    ae = AutoEncoder(n_in, latent, int(rng.integers(latent, 8)), seed=seed)
    for p in ae.params:
        p += rng.normal(0, 0.1, size=p.shape)  # non-zero biases
    x = rng.normal(size=(int(rng.integers(2, 6)), n_in))
    _, grads = ae.loss_and_grads(x)
    numeric = central_difference(lambda: ae.loss(x), ae.params)
    for g, ng in zip(grads, numeric):
        assert _relative_error(g, ng) <= 1e-4


def test_autoencoder_loss_decreases():
    x = np.random.default_rng(0).normal(size=(40, 6))
    result = train_autoencoder(x, 3, epochs=150, lr=1e-2, seed=1)
    assert result.losses[-1] < 0.5 * result.losses[0]
    assert result.latent.shape == (40, 3)
    assert np.all(np.isfinite(result.latent))


def test_duplicate_inputs_share_latent():
    x = np.random.default_rng(1).normal(size=(5, 4))
    x[3] = x[1]
    z = train_autoencoder(x, 2, epochs=5).latent
    assert np.array_equal(z[1], z[3])


def test_autoencoder_input_errors():
    with pytest.raises(DataError):
        train_autoencoder([[1.0, 2.0], [1.0]], 1)
    with pytest.raises(DataError):
        train_autoencoder(np.zeros((0, 3)), 1)
    with pytest.raises(ConfigError):
        AutoEncoder(4, 4)


def test_autoencoder_file_round_trip(tmp_path):
    ae = AutoEncoder(5, 2, seed=3)
    path = tmp_path / "ae.txt"
    ae.save(path)
    again = AutoEncoder.load(path)
    x = np.random.default_rng(2).normal(size=(3, 5))
    assert np.allclose(again.encode(x), ae.encode(x))
    path.write_text("garbage\n")
    with pytest.raises(DataError):
        AutoEncoder.load(path)


def test_attribute_embeddings_cover_users(toy, rules):
    cfg = AttrEmbedConfig(TrainConfig(dim=8, epochs=2, seed=0), latent_dim=4, ae_epochs=20)
    emb = attribute_embeddings(toy, rules, cfg, labels=["user"])
    assert emb.keys == ["v2", "v3", "v4", "v5", "v10", "v11"]
    assert emb.dim == 4
    assert emb == attribute_embeddings(toy, rules, cfg, labels=["user"])
