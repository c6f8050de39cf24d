"""Attribute embeddings: tripartite token walks, SIF averaging and an auto-encoder."""

from __future__ import annotations

import bisect
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .distance import tokens as split_tokens
from .embed_struct import EmbeddingTable, TrainConfig, train_skipgram
from .errors import ConfigError, DataError
from .gdd import Gdd
from .graph import WILDCARD, Node, PropertyGraph, sort_ids

ENTITY, TOKEN, ATTRIBUTE = "e:", "t:", "a:"
_CYCLE = (ENTITY, TOKEN, ATTRIBUTE, TOKEN)


def attribute_set(rules: Iterable[Gdd]) -> set[str]:
    out: set[str] = set()
    for g in rules:
        out |= g.attributes
    return out


@dataclass
class TripartiteGraph:
    """Entity/token/attribute graph; edge weights count token occurrences."""

    entities: list[str]
    attributes: list[str]
    weights: dict[str, Counter] = field(default_factory=dict)

    @property
    def tokens(self) -> list[str]:
        return sorted(k[len(TOKEN):] for k in self.weights if k.startswith(TOKEN))

    def neighbors(self, item: str, cls: str) -> list[tuple[str, int]]:
        return sorted((k, w) for k, w in self.weights.get(item, {}).items() if k.startswith(cls))

    def token_counts(self) -> Counter:
        """Occurrences per token over all entities."""
        out = Counter()
        for e in self.entities:
            for k, w in self.weights.get(ENTITY + e, {}).items():
                out[k[len(TOKEN):]] += w
        return out


def node_tokens(node: Node, attributes: Iterable[str]) -> list[tuple[str, str]]:
    """(attribute, token) occurrences over the node's non-wildcard values."""
    out = []
    for a in sorted(attributes):
        value = node.attrs.get(a)
        if value is None or value == WILDCARD:
            continue
        out.extend((a, t) for t in split_tokens(value))
    return out


def build_tripartite(graph: PropertyGraph, rules: Sequence[Gdd] = (), attributes: Iterable[str] | None = None,
                     labels: Iterable[str] | None = None) -> TripartiteGraph:
    """Tripartite graph over the rules' attributes, or every attribute when there are none."""
    attrs = set(attributes) if attributes is not None else attribute_set(rules)
    if not attrs:
        attrs = {a for n in graph.nodes.values() for a in n.attrs}
    wanted = set(labels) if labels is not None else None
    entities = [v for v in sort_ids(graph.nodes) if wanted is None or graph.nodes[v].label in wanted]
    weights: dict[str, Counter] = {}
    for v in entities:
        weights.setdefault(ENTITY + v, Counter())
        for a, t in node_tokens(graph.nodes[v], attrs):
            ek, tk, ak = ENTITY + v, TOKEN + t, ATTRIBUTE + a
            weights[ek][tk] += 1
            weights.setdefault(tk, Counter())[ek] += 1
            weights[tk][ak] += 1
            weights.setdefault(ak, Counter())[tk] += 1
    return TripartiteGraph(entities, sorted(attrs), weights)


class _WeightedChoice:
    def __init__(self, items: list[tuple[str, int]]):
        self.items = [k for k, _ in items]
        total = 0
        self.cum = []
        for _, w in items:
            total += w
            self.cum.append(total)

    def draw(self, rng: random.Random) -> str:
        return self.items[bisect.bisect_right(self.cum, rng.random() * self.cum[-1])]


def tripartite_walks(tg: TripartiteGraph, length: int = 12, starts: int = 8, seed: int = 0) -> list[list[str]]:
    """Walks cycling entity, token, attribute, token, entity... weighted by multiplicity."""
    rng = random.Random(seed)
    choices: dict[tuple[str, str], _WeightedChoice | None] = {}

    def choice(item: str, cls: str):
        key = (item, cls)
        if key not in choices:
            nb = tg.neighbors(item, cls)
            choices[key] = _WeightedChoice(nb) if nb else None
        return choices[key]

    walks = []
    for e in tg.entities:
        if not tg.weights.get(ENTITY + e):
            continue
        for _ in range(starts):
            cur = ENTITY + e
            walk = [cur]
            for step in range(1, length):
                ch = choice(cur, _CYCLE[step % len(_CYCLE)])
                if ch is None:
                    break
                cur = ch.draw(rng)
                walk.append(cur)
            walks.append(walk)
    return walks


def token_embeddings(tg: TripartiteGraph, cfg: TrainConfig, length: int = 12, starts: int = 8) -> EmbeddingTable:
    """Skip-gram over tripartite walks with tokens as the only centres."""
    if not tg.tokens:
        raise DataError("tripartite graph has no tokens")
    walks = tripartite_walks(tg, length, starts, cfg.seed)
    labels = {k: k[:2] for w in walks for k in w}
    model = train_skipgram(walks, cfg, labels=labels, centers=lambda k: k.startswith(TOKEN))
    table = model.table
    keys = [k for k in table.keys if k.startswith(TOKEN)]
    return EmbeddingTable([k[len(TOKEN):] for k in keys], table.matrix[[table.index[k] for k in keys]])


@dataclass
class SifConfig:
    a: float = 1e-3
    freq: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.a <= 0:
            raise ConfigError("SIF smoothing must be positive")

    @classmethod
    def from_counts(cls, counts: Mapping[str, int], a: float = 1e-3) -> "SifConfig":
        total = sum(counts.values())
        return cls(a, {t: c / total for t, c in counts.items()} if total else {})

    def weight(self, token: str) -> float:
        return self.a / (self.a + self.freq.get(token, 0.0))


def sif_aggregate(node: Node, tokens: EmbeddingTable, cfg: SifConfig, attributes: Iterable[str] | None = None) -> np.ndarray:
    """Frequency-weighted token average; unseen tokens use the vocabulary mean."""
    attrs = attributes if attributes is not None else node.attrs.keys()
    occ = [t for _, t in node_tokens(node, attrs)]
    out = np.zeros(tokens.dim)
    if not occ:
        return out
    fallback = None
    for t in occ:
        if t in tokens:
            vec = tokens[t]
        else:
            if fallback is None:
                fallback = tokens.matrix.mean(axis=0) if len(tokens) else np.zeros(tokens.dim)
            vec = fallback
        out += cfg.weight(t) * vec
    return out / len(occ)


# -- auto-encoder ----------------------------------------------------------

_PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3", "W4", "b4")


class AutoEncoder:
    """input → hidden (ReLU) → latent, mirrored back; squared-error reconstruction."""

    def __init__(self, input_dim: int, latent_dim: int, hidden_dim: int | None = None, seed: int = 0,
                 params: Sequence[np.ndarray] | None = None):
        if not 0 < latent_dim < input_dim:
            raise ConfigError(f"latent dim must be in (0, {input_dim}), got {latent_dim}")
        self.input_dim = input_dim
        self.latent_dim = latent_dim
        self.hidden_dim = hidden_dim or max(latent_dim, (input_dim + latent_dim) // 2)
        if params is not None:
            self.params = [np.array(p, dtype=np.float64) for p in params]
            return
        rng = np.random.default_rng(seed)
        shapes = [(input_dim, self.hidden_dim), (self.hidden_dim, latent_dim),
                  (latent_dim, self.hidden_dim), (self.hidden_dim, input_dim)]
        self.params = []
        for fan_in, fan_out in shapes:
            self.params.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
            self.params.append(np.zeros(fan_out))

    def encode(self, x: np.ndarray) -> np.ndarray:
        w1, b1, w2, b2 = self.params[:4]
        return np.maximum(0.0, x @ w1 + b1) @ w2 + b2

    def decode(self, z: np.ndarray) -> np.ndarray:
        w3, b3, w4, b4 = self.params[4:]
        return np.maximum(0.0, z @ w3 + b3) @ w4 + b4

    def loss(self, x: np.ndarray) -> float:
        r = self.decode(self.encode(x)) - x
        return float(np.mean(np.sum(r * r, axis=1)))

    def loss_and_grads(self, x: np.ndarray) -> tuple[float, list[np.ndarray]]:
        w1, b1, w2, b2, w3, b3, w4, b4 = self.params
        n = x.shape[0]
        a1 = x @ w1 + b1
        h1 = np.maximum(0.0, a1)
        z = h1 @ w2 + b2
        a3 = z @ w3 + b3
        h3 = np.maximum(0.0, a3)
        out = h3 @ w4 + b4
        r = out - x
        loss = float(np.sum(r * r) / n)
        d_out = 2.0 * r / n
        g_w4, g_b4 = h3.T @ d_out, d_out.sum(axis=0)
        d_a3 = (d_out @ w4.T) * (a3 > 0)
        g_w3, g_b3 = z.T @ d_a3, d_a3.sum(axis=0)
        d_z = d_a3 @ w3.T
        g_w2, g_b2 = h1.T @ d_z, d_z.sum(axis=0)
        d_a1 = (d_z @ w2.T) * (a1 > 0)
        g_w1, g_b1 = x.T @ d_a1, d_a1.sum(axis=0)
        return loss, [g_w1, g_b1, g_w2, g_b2, g_w3, g_b3, g_w4, g_b4]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"autoencoder {self.input_dim} {self.hidden_dim} {self.latent_dim}\n")
            for name, p in zip(_PARAM_NAMES, self.params):
                shape = p.shape if p.ndim == 2 else (1, p.shape[0])
                fh.write(f"{name} {shape[0]} {shape[1]}\n")
                fh.write(" ".join(repr(float(v)) for v in p.ravel()) + "\n")

    @classmethod
    def load(cls, path) -> "AutoEncoder":
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        head = lines[0].split() if lines else []
        if len(head) != 4 or head[0] != "autoencoder":
            raise DataError(f"{path}: not an auto-encoder weight file")
        n, h, l = map(int, head[1:])
        params = []
        for i, name in enumerate(_PARAM_NAMES):
            meta = lines[1 + 2 * i].split()
            if meta[0] != name:
                raise DataError(f"{path}: expected {name}, found {meta[0]}")
            rows, cols = int(meta[1]), int(meta[2])
            vals = np.array([float(v) for v in lines[2 + 2 * i].split()])
            if vals.size != rows * cols:
                raise DataError(f"{path}: {name} holds {vals.size} values, header says {rows}x{cols}")
            params.append(vals.reshape(rows, cols) if name.startswith("W") else vals)
        return cls(n, l, h, params=params)


@dataclass
class AutoEncoderResult:
    model: AutoEncoder
    latent: np.ndarray
    losses: list[float]


def train_autoencoder(vectors: Sequence[Sequence[float]] | np.ndarray, latent_dim: int, epochs: int = 200,
                      lr: float = 1e-3, batch_size: int = 64, hidden_dim: int | None = None,
                      seed: int = 0) -> AutoEncoderResult:
    """Adam on mean squared reconstruction; ``losses`` holds the full-data loss per epoch."""
    try:
        x = np.asarray(vectors, dtype=np.float64)
    except ValueError:
        raise DataError("input vectors have inconsistent dimensions") from None
    if x.ndim != 2 or x.shape[0] == 0:
        raise DataError("need a non-empty list of equal-length vectors")
    model = AutoEncoder(x.shape[1], latent_dim, hidden_dim, seed)
    rng = np.random.default_rng([seed, 7])
    m = [np.zeros_like(p) for p in model.params]
    v = [np.zeros_like(p) for p in model.params]
    b1, b2, eps = 0.9, 0.999, 1e-8
    t = 0
    losses = []
    for _ in range(epochs):
        order = rng.permutation(len(x))
        for start in range(0, len(x), batch_size):
            _, grads = model.loss_and_grads(x[order[start:start + batch_size]])
            t += 1
            for i, g in enumerate(grads):
                m[i] = b1 * m[i] + (1 - b1) * g
                v[i] = b2 * v[i] + (1 - b2) * g * g
                model.params[i] -= lr * (m[i] / (1 - b1 ** t)) / (np.sqrt(v[i] / (1 - b2 ** t)) + eps)
        losses.append(model.loss(x))
    return AutoEncoderResult(model, model.encode(x), losses)


@dataclass
class AttrEmbedConfig:
    train: TrainConfig = field(default_factory=lambda: TrainConfig(dim=64))
    latent_dim: int = 32
    ae_epochs: int = 200
    walk_length: int = 12
    starts: int = 8
    sif_a: float = 1e-3


def attribute_embeddings(graph: PropertyGraph, rules: Sequence[Gdd], cfg: AttrEmbedConfig,
                         labels: Iterable[str] | None = None) -> EmbeddingTable:
    """Node vectors: token walks, SIF averaging, then the encoder's latent codes."""
    tg = build_tripartite(graph, rules, labels=labels)
    tok = token_embeddings(tg, cfg.train, cfg.walk_length, cfg.starts)
    sif = SifConfig.from_counts(tg.token_counts(), cfg.sif_a)
    x = np.array([sif_aggregate(graph.nodes[e], tok, sif, tg.attributes) for e in tg.entities])
    # SIF weights shrink vectors to ~1e-2; rescaling keeps the auto-encoder's loss well conditioned
    scale = float(np.mean(np.linalg.norm(x, axis=1)))
    if scale > 0:
        x = x / scale
    latent_dim = min(cfg.latent_dim, tok.dim - 1)
    result = train_autoencoder(x, latent_dim, cfg.ae_epochs, seed=cfg.train.seed)
    return EmbeddingTable(tg.entities, result.latent)
