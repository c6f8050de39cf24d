"""Meta-path guided random walks and skip-gram embeddings with negative sampling."""

from __future__ import annotations

import itertools
import random
import string
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence
from urllib.parse import quote, unquote

import numpy as np

from .errors import ConfigError, DataError, NotFoundError
from .graph import PropertyGraph, labels_match, natural_key, sort_ids
from .patterns import GraphPattern


@dataclass(frozen=True)
class MetaPathScheme:
    """Symmetric label path; walks cycle through ``labels[:-1]``."""

    labels: tuple[str, ...]
    edge_labels: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "edge_labels", tuple(self.edge_labels))
        if len(self.labels) < 2 or self.labels[0] != self.labels[-1]:
            raise ConfigError(f"meta-path scheme must start and end on the same label: {self.labels}")
        if self.labels != self.labels[::-1]:
            raise ConfigError(f"meta-path scheme must be symmetric: {self.labels}")

    @property
    def cycle(self) -> tuple[str, ...]:
        return self.labels[:-1]

    def __str__(self) -> str:
        return "-".join(self.labels)


def lift_pattern(pattern: GraphPattern, shared: Iterable[str], suffix: str = "'") -> GraphPattern:
    """Glue a renamed copy of ``pattern`` onto itself at the ``shared`` variables.

    Lifting a one-user scope such as user-watched-video-has-genre at the genre
    variable gives a two-user scope whose users meet through a common genre.
    """
    shared = set(shared)
    unknown = shared - set(pattern.vars)
    if unknown:
        raise ConfigError(f"cannot share undeclared variables {sorted(unknown)}")
    rename = {v: v if v in shared else v + suffix for v in pattern.vars}
    clash = {rename[v] for v in pattern.vars if v not in shared} & set(pattern.vars)
    if clash:
        raise ConfigError(f"renamed variables clash with existing ones: {sorted(clash)}")
    vars_ = tuple(pattern.vars) + tuple(rename[v] for v in pattern.vars if v not in shared)
    labels = dict(pattern.var_labels)
    labels.update({rename[v]: pattern.var_labels[v] for v in pattern.vars})
    edges = tuple(pattern.edges) + tuple(
        (rename[s], l, rename[d]) for s, l, d in pattern.edges if not (s in shared and d in shared)
    )
    return GraphPattern(vars_, labels, edges, pattern.name + "^" if pattern.name else "")


def _simple_paths(adj: Mapping[str, list[tuple[str, str]]], start: str, goal: str):
    stack = [(start, [start], [])]
    while stack:
        node, path, elabels = stack.pop()
        if node == goal and len(path) > 1:
            yield path, elabels
            continue
        for nxt, lab in adj[node]:
            if nxt not in path:
                stack.append((nxt, path + [nxt], elabels + [lab]))


def _contains(outer: tuple, inner: tuple) -> bool:
    n = len(inner)
    return any(outer[i:i + n] == inner for i in range(len(outer) - n + 1))


def metapath_schemes(scope: GraphPattern, pairs: Sequence[tuple[str, str]] | None = None) -> list[MetaPathScheme]:
    """Symmetric label paths linking same-label variables of ``scope``.

    ``pairs`` restricts the variable pairs considered (a linking rule passes
    its eid variables). A scheme whose label sequence occurs inside a longer
    emitted scheme is dropped since walks along the longer one cover it.
    """
    adj: dict[str, list[tuple[str, str]]] = {v: [] for v in scope.vars}
    for s, lab, d in scope.edges:
        adj[s].append((d, lab))
        adj[d].append((s, lab))
    if pairs is None:
        pairs = [(a, b) for a, b in itertools.combinations(scope.vars, 2) if scope.var_labels[a] == scope.var_labels[b]]
    found: dict[tuple, MetaPathScheme] = {}
    for a, b in pairs:
        if a not in adj or b not in adj:
            raise ConfigError(f"variables {a!r}, {b!r} not both in scope")
        for x, y in ((a, b), (b, a)):
            for path, elabels in _simple_paths(adj, x, y):
                labels = tuple(scope.var_labels[v] for v in path)
                if labels[0] != labels[-1]:
                    continue
                if labels != labels[::-1]:
                    elabels = elabels + elabels[::-1]
                    labels = labels + labels[::-1][1:]
                found.setdefault(labels, MetaPathScheme(labels, tuple(elabels)))
    keys = sorted(found, key=lambda k: (-len(k), k))
    kept: list[tuple] = []
    for k in keys:
        if not any(_contains(o, k) for o in kept):
            kept.append(k)
    return [found[k] for k in sorted(kept)]


@dataclass
class TrainConfig:
    dim: int = 128
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    lr: float = 0.025
    min_lr_ratio: float = 1e-4
    walks_per_node: int = 10
    walk_length: int = 20
    ns_exponent: float = 0.75
    batch_size: int = 0  # 0 picks a size from the vocabulary
    seed: int = 0
    workers: int = 1

    def validate(self) -> None:
        if self.dim < 1:
            raise ConfigError("dim must be >= 1")
        if self.negatives < 1:
            raise ConfigError("negatives must be >= 1")
        if self.window < 1:
            raise ConfigError("window must be >= 1")
        if self.epochs < 0 or self.walks_per_node < 1 or self.walk_length < 1:
            raise ConfigError("epochs, walks_per_node and walk_length must be positive")
        if self.lr <= 0:
            raise ConfigError("learning rate must be positive")


@dataclass
class WalkCorpus:
    sequences: list[list[str]]
    provenance: list[str]
    labels: dict[str, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.sequences)

    def tokens(self) -> int:
        return sum(len(s) for s in self.sequences)


def _walk_chunk(args) -> list[list[str]]:
    graph, cycle, starts, walks_per_node, length, seed = args
    rng = random.Random(seed)
    out = []
    for v in starts:
        for _ in range(walks_per_node):
            walk = [v]
            cur = v
            for step in range(1, length):
                nbrs = graph.neighbors(cur, cycle[step % len(cycle)])
                if not nbrs:
                    break
                cur = nbrs[rng.randrange(len(nbrs))]
                walk.append(cur)
            out.append(walk)
    return out


_CHUNK = 256


def random_walks(graph: PropertyGraph, schemes: Sequence[MetaPathScheme], cfg: TrainConfig,
                 length: int | None = None) -> WalkCorpus:
    """Label-guided first-order walks, ``cfg.walks_per_node`` per start node and scheme.

    Each chunk of start nodes draws from its own seed, so the corpus does not
    depend on how many workers generate it.
    """
    if not schemes:
        raise ConfigError("random_walks needs at least one meta-path scheme")
    length = length or cfg.walk_length
    jobs = []
    owners = []
    seeds = np.random.SeedSequence(cfg.seed)
    for scheme in schemes:
        starts = [v for v in sort_ids(graph.nodes) if labels_match(graph.nodes[v].label, scheme.labels[0])]
        for i in range(0, len(starts), _CHUNK):
            child = seeds.spawn(1)[0]
            seed = int(child.generate_state(1, dtype=np.uint64)[0])
            jobs.append((graph, scheme.cycle, starts[i:i + _CHUNK], cfg.walks_per_node, length, seed))
            owners.append(str(scheme))
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_walk_chunk, jobs))
    else:
        results = [_walk_chunk(j) for j in jobs]
    seqs, prov = [], []
    for owner, walks in zip(owners, results):
        seqs.extend(walks)
        prov.extend([owner] * len(walks))
    labels = {v: graph.nodes[v].label for s in seqs for v in s}
    return WalkCorpus(seqs, prov, labels)


# -- embedding tables --------------------------------------------------------

_SAFE = string.punctuation.replace("%", "")
_MAGIC = b"GDDE"


class EmbeddingTable:
    """Dense vectors keyed by node or token id, stored row-wise in ``matrix``."""

    def __init__(self, keys: Sequence[str], matrix: np.ndarray):
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != len(keys):
            raise DataError(f"matrix shape {matrix.shape} does not fit {len(keys)} keys")
        self.keys = list(keys)
        self.matrix = matrix
        self.index = {k: i for i, k in enumerate(self.keys)}
        if len(self.index) != len(self.keys):
            raise DataError("duplicate embedding keys")

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return len(self.keys)

    def __contains__(self, key) -> bool:
        return key in self.index

    def __getitem__(self, key) -> np.ndarray:
        try:
            return self.matrix[self.index[key]]
        except KeyError:
            raise NotFoundError(f"no embedding for {key!r}") from None

    def __eq__(self, other) -> bool:
        return (isinstance(other, EmbeddingTable) and self.keys == other.keys
                and np.array_equal(self.matrix, other.matrix))

    def subset(self, keys: Iterable[str]) -> "EmbeddingTable":
        keys = list(keys)
        return EmbeddingTable(keys, self.matrix[[self.index[k] for k in keys]] if keys else np.zeros((0, self.dim)))

    def normalized(self) -> np.ndarray:
        norms = np.linalg.norm(self.matrix, axis=1, keepdims=True)
        return np.divide(self.matrix, norms, out=np.zeros_like(self.matrix), where=norms > 0)

    def cosine(self, a: str, b: str) -> float:
        va, vb = self[a], self[b]
        den = np.linalg.norm(va) * np.linalg.norm(vb)
        return float(va @ vb / den) if den > 0 else 0.0

    def save_text(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{len(self.keys)} {self.dim}\n")
            for k, row in zip(self.keys, self.matrix):
                fh.write(quote(k, safe=_SAFE) + " " + " ".join(repr(float(x)) for x in row) + "\n")

    @classmethod
    def load_text(cls, path) -> "EmbeddingTable":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().split()
            try:
                count, dim = int(header[0]), int(header[1])
            except (IndexError, ValueError):
                raise DataError(f"{path}: bad embedding header") from None
            keys, rows = [], []
            for lineno, line in enumerate(fh, start=2):
                parts = line.split()
                if len(parts) != dim + 1:
                    raise DataError(f"{path}:{lineno}: expected {dim} values")
                keys.append(unquote(parts[0]))
                rows.append([float(x) for x in parts[1:]])
        if len(keys) != count:
            raise DataError(f"{path}: header says {count} rows, found {len(keys)}")
        return cls(keys, np.array(rows, dtype=np.float64).reshape(count, dim))

    def save_binary(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(_MAGIC + struct.pack("<II", len(self.keys), self.dim))
            for k in self.keys:
                raw = k.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)) + raw)
            fh.write(self.matrix.astype("<f8").tobytes())

    @classmethod
    def load_binary(cls, path) -> "EmbeddingTable":
        with open(path, "rb") as fh:
            data = fh.read()
        if data[:4] != _MAGIC:
            raise DataError(f"{path}: not a binary embedding file")
        count, dim = struct.unpack_from("<II", data, 4)
        pos = 12
        keys = []
        for _ in range(count):
            (n,) = struct.unpack_from("<I", data, pos)
            keys.append(data[pos + 4:pos + 4 + n].decode("utf-8"))
            pos += 4 + n
        matrix = np.frombuffer(data, dtype="<f8", count=count * dim, offset=pos).reshape(count, dim)
        return cls(keys, matrix.astype(np.float64))

    def save(self, path) -> None:
        (self.save_binary if str(path).endswith(".bin") else self.save_text)(path)

    @classmethod
    def load(cls, path) -> "EmbeddingTable":
        return cls.load_binary(path) if str(path).endswith(".bin") else cls.load_text(path)


# -- skip-gram -------------------------------------------------------------


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def log_sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    return -np.logaddexp(0.0, -x)


def skipgram_pairs(sequences: Sequence[Sequence[str]], index: Mapping[str, int], window: int,
                   centers: Callable[[str], bool] | None = None) -> np.ndarray:
    """(center, context) index pairs within ``window`` positions, in corpus order."""
    out = []
    for seq in sequences:
        ids = [index[t] for t in seq]
        for i, c in enumerate(ids):
            if centers is not None and not centers(seq[i]):
                continue
            lo, hi = max(0, i - window), min(len(ids), i + window + 1)
            for j in range(lo, hi):
                if j != i:
                    out.append((c, ids[j]))
    return np.array(out, dtype=np.int64).reshape(-1, 2)


class NegativeSampler:
    """Draws negatives from the context's label pool with p(w) ∝ count(w)^exponent."""

    def __init__(self, counts: np.ndarray, groups: np.ndarray, exponent: float):
        self.groups = groups
        self.pools: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        for g in np.unique(groups):
            members = np.flatnonzero(groups == g)
            w = counts[members].astype(np.float64) ** exponent
            self.pools[int(g)] = (members, np.cumsum(w) / w.sum())

    def sample(self, contexts: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
        out = np.empty((len(contexts), k), dtype=np.int64)
        ctx_groups = self.groups[contexts]
        for g, (members, cdf) in self.pools.items():
            rows = np.flatnonzero(ctx_groups == g)
            if rows.size:
                draws = np.searchsorted(cdf, rng.random((rows.size, k)), side="right")
                out[rows] = members[np.minimum(draws, len(members) - 1)]
        return out


def skipgram_objective(center: np.ndarray, context: np.ndarray, pairs: np.ndarray, negatives: np.ndarray) -> float:
    """Mean of log σ(u·v) + Σ log σ(−w·v) over the given pairs and fixed negatives."""
    if len(pairs) == 0:
        return 0.0
    v = center[pairs[:, 0]]
    u = context[pairs[:, 1]]
    w = context[negatives]
    pos = log_sigmoid(np.einsum("ij,ij->i", u, v))
    neg = log_sigmoid(-np.einsum("ikj,ij->ik", w, v)).sum(axis=1)
    return float(np.mean(pos + neg))


def scatter_add(target: np.ndarray, idx: np.ndarray, rows: np.ndarray) -> None:
    """``np.add.at(target, idx, rows)`` for 2-d rows, via one sort and a segmented sum."""
    if len(idx) == 0:
        return
    order = np.argsort(idx, kind="stable")
    sorted_idx = idx[order]
    starts = np.flatnonzero(np.r_[True, sorted_idx[1:] != sorted_idx[:-1]])
    target[sorted_idx[starts]] += np.add.reduceat(rows[order], starts, axis=0)


@dataclass
class SkipGramModel:
    table: EmbeddingTable
    context: np.ndarray
    history: list[float] = field(default_factory=list)


_VALIDATION_PAIRS = 20000


def train_skipgram(corpus: WalkCorpus | Sequence[Sequence[str]], cfg: TrainConfig,
                   labels: Mapping[str, str] | None = None,
                   centers: Callable[[str], bool] | None = None) -> SkipGramModel:
    """Negative-sampling skip-gram trained by minibatch SGD with linear decay.

    ``history`` holds the objective on a fixed sample of pairs and negatives,
    before training and after each epoch.
    """
    cfg.validate()
    if isinstance(corpus, WalkCorpus):
        sequences = corpus.sequences
        labels = labels if labels is not None else corpus.labels
    else:
        sequences = [list(s) for s in corpus]
    vocab = sorted({t for s in sequences for t in s}, key=natural_key)
    if not vocab:
        raise DataError("cannot train on an empty corpus")
    index = {t: i for i, t in enumerate(vocab)}
    counts = np.zeros(len(vocab), dtype=np.int64)
    for s in sequences:
        for t in s:
            counts[index[t]] += 1
    labels = labels or {}
    label_ids = {l: i for i, l in enumerate(sorted({labels.get(t, "") for t in vocab}))}
    groups = np.array([label_ids[labels.get(t, "")] for t in vocab], dtype=np.int64)
    sampler = NegativeSampler(counts, groups, cfg.ns_exponent)

    rng = np.random.default_rng(cfg.seed)
    n, d = len(vocab), cfg.dim
    center = rng.uniform(-0.5 / d, 0.5 / d, size=(n, d))
    context = np.zeros((n, d))
    pairs = skipgram_pairs(sequences, index, cfg.window, centers)

    val_rng = np.random.default_rng([cfg.seed, 1])
    val = pairs if len(pairs) <= _VALIDATION_PAIRS else pairs[val_rng.choice(len(pairs), _VALIDATION_PAIRS, replace=False)]
    val_neg = sampler.sample(val[:, 1], cfg.negatives, val_rng) if len(val) else np.zeros((0, cfg.negatives), np.int64)
    history = [skipgram_objective(center, context, val, val_neg)]

    batch = cfg.batch_size or int(min(512, max(1, n // 4)))
    total_steps = max(1, cfg.epochs * ((len(pairs) + batch - 1) // batch))
    step = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(len(pairs))
        for start in range(0, len(pairs), batch):
            lr = cfg.lr * max(cfg.min_lr_ratio, 1.0 - step / total_steps)
            step += 1
            b = pairs[order[start:start + batch]]
            c, u = b[:, 0], b[:, 1]
            negs = sampler.sample(u, cfg.negatives, rng)
            vv = center[c]
            uu = context[u]
            ww = context[negs]
            g_pos = 1.0 - sigmoid(np.einsum("ij,ij->i", uu, vv))
            g_neg = -sigmoid(np.einsum("ikj,ij->ik", ww, vv))
            d_center = g_pos[:, None] * uu + np.einsum("ik,ikj->ij", g_neg, ww)
            ctx_idx = np.concatenate([u, negs.ravel()])
            ctx_grad = np.concatenate([g_pos[:, None] * vv, (g_neg[:, :, None] * vv[:, None, :]).reshape(-1, d)])
            scatter_add(context, ctx_idx, lr * ctx_grad)
            scatter_add(center, c, lr * d_center)
        history.append(skipgram_objective(center, context, val, val_neg))
    return SkipGramModel(EmbeddingTable(vocab, center), context, history)


def structural_embeddings(graph: PropertyGraph, schemes: Sequence[MetaPathScheme], cfg: TrainConfig) -> EmbeddingTable:
    """Walk the graph along ``schemes`` and train skip-gram vectors for every visited node."""
    corpus = random_walks(graph, schemes, cfg)
    model = train_skipgram(corpus, cfg)
    return model.table
