"""Random-hyperplane LSH over embedding spaces and query-centred blocks."""

from __future__ import annotations

import string
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence
from urllib.parse import quote, unquote

import numpy as np

from .embed_struct import EmbeddingTable
from .errors import ConfigError, DataError, NotFoundError
from .graph import natural_key, sort_ids

STRUCTURAL, ATTRIBUTE, MERGED = "structural", "attribute", "merged"

_ID_SAFE = "".join(c for c in string.punctuation if c not in "%,")


def encode_id(node_id: str) -> str:
    return quote(node_id, safe=_ID_SAFE)


def decode_id(text: str) -> str:
    return unquote(text)


@dataclass
class LshIndex:
    planes: np.ndarray  # (L, b, d), unit rows
    keys: list[str]
    codes: np.ndarray  # (L, n) bucket keys
    tables: list[dict[int, list[int]]]
    source: str = STRUCTURAL

    @property
    def num_tables(self) -> int:
        return self.planes.shape[0]

    @property
    def bits(self) -> int:
        return self.planes.shape[1]

    def __post_init__(self):
        self._pos = {k: i for i, k in enumerate(self.keys)}

    def position(self, key: str) -> int:
        try:
            return self._pos[key]
        except KeyError:
            raise NotFoundError(f"{key!r} is not indexed") from None

    def candidates(self, key: str) -> set[int]:
        """Positions sharing at least one bucket with ``key``."""
        pos = self.position(key)
        out: set[int] = set()
        for t, table in enumerate(self.tables):
            out.update(table[int(self.codes[t, pos])])
        return out


def hash_codes(planes: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """Bucket key per table: bit j set when the j-th hyperplane projection is ≥ 0."""
    bits = np.einsum("lbd,nd->lnb", planes, vectors) >= 0
    weights = 1 << np.arange(planes.shape[1], dtype=np.int64)
    return (bits.astype(np.int64) * weights).sum(axis=2)


def build_lsh_index(emb: EmbeddingTable, L: int = 16, b: int = 12, seed: int = 0, source: str = STRUCTURAL) -> LshIndex:
    if L < 1 or b < 1:
        raise ConfigError("LSH needs at least one table and one bit")
    if b > 62:
        raise ConfigError("at most 62 bits per table")
    if len(emb) == 0:
        raise DataError("cannot index an empty embedding table")
    rng = np.random.default_rng(seed)
    planes = rng.normal(size=(L, b, emb.dim))
    planes /= np.linalg.norm(planes, axis=2, keepdims=True)
    codes = hash_codes(planes, emb.normalized())
    tables = []
    for t in range(L):
        table: dict[int, list[int]] = {}
        for i, c in enumerate(codes[t]):
            table.setdefault(int(c), []).append(i)
        tables.append(table)
    return LshIndex(planes, list(emb.keys), codes, tables, source)


@dataclass(frozen=True)
class Block:
    query: str
    members: frozenset
    source: str = STRUCTURAL

    def __post_init__(self):
        object.__setattr__(self, "members", frozenset(self.members))
        if self.query not in self.members:
            raise DataError(f"block of {self.query!r} must contain its query")

    def __len__(self) -> int:
        return len(self.members)

    def sorted_members(self) -> list[str]:
        return sort_ids(self.members)

    def pairs(self) -> list[tuple[str, str]]:
        m = self.sorted_members()
        return [(m[i], m[j]) for i in range(len(m)) for j in range(i + 1, len(m))]

    def num_pairs(self) -> int:
        n = len(self.members)
        return n * (n - 1) // 2


def query_block(index: LshIndex, q: str, emb: EmbeddingTable, max_dist: float, cap: int,
                labels: Mapping[str, str] | None = None, unit: np.ndarray | None = None) -> Block:
    """Same-label bucket mates of ``q`` within cosine distance ``max_dist``, nearest ``cap`` kept.

    ``unit`` is ``emb.normalized()``, passed in to avoid recomputing it per query.
    """
    if cap < 1:
        raise ConfigError("block cap must be >= 1")
    qpos = index.position(q)
    if q not in emb:
        raise NotFoundError(f"no embedding for query {q!r}")
    cand = [index.keys[i] for i in index.candidates(q) if i != qpos]
    if labels is not None:
        cand = [c for c in cand if labels.get(c) == labels.get(q)]
    scored = []
    if cand:
        if unit is None:
            unit = emb.normalized()
        dist = 1.0 - unit[[emb.index[c] for c in cand]] @ unit[emb.index[q]]
        scored = [(float(d), natural_key(c), c) for d, c in zip(dist, cand) if d <= max_dist + 1e-12]
        scored.sort()
    members = [q] + [c for _, _, c in scored[:cap - 1]]
    return Block(q, frozenset(members), index.source)


@dataclass
class BlockParams:
    L: int = 16
    b: int = 12
    max_dist: float = 0.3
    cap: int = 20
    seed: int = 0


def generate_blocks(struct_emb: EmbeddingTable | None, attr_emb: EmbeddingTable | None, params: BlockParams,
                    labels: Mapping[str, str] | None = None, queries: Iterable[str] | None = None) -> list[Block]:
    """One block per query: its structural block merged with its attribute block."""
    spaces = []
    if struct_emb is not None and len(struct_emb):
        spaces.append((struct_emb, build_lsh_index(struct_emb, params.L, params.b, params.seed, STRUCTURAL),
                       struct_emb.normalized()))
    if attr_emb is not None and len(attr_emb):
        spaces.append((attr_emb, build_lsh_index(attr_emb, params.L, params.b, params.seed + 1, ATTRIBUTE),
                       attr_emb.normalized()))
    if not spaces:
        raise ConfigError("blocking needs at least one embedding table")
    if queries is None:
        keys: set[str] = set()
        for emb, _, _ in spaces:
            keys.update(emb.keys)
        queries = keys
    source = MERGED if len(spaces) > 1 else spaces[0][1].source
    blocks = []
    for q in sort_ids(queries):
        members: set[str] = {q}
        for emb, index, unit in spaces:
            if q in emb:
                members |= query_block(index, q, emb, params.max_dist, params.cap, labels, unit).members
        blocks.append(Block(q, frozenset(members), source))
    return blocks


def candidate_pairs(blocks: Iterable[Block]) -> set[tuple[str, str]]:
    out = set()
    for blk in blocks:
        out.update(blk.pairs())
    return out


def block_pair_count(blocks: Iterable[Block]) -> int:
    """Candidate pairs counted per block, before cross-block deduplication."""
    return sum(b.num_pairs() for b in blocks)


def dump_blocks(blocks: Sequence[Block], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for blk in blocks:
            fh.write(encode_id(blk.query) + "\t" + ",".join(encode_id(m) for m in blk.sorted_members()) + "\n")


def load_blocks(path, source: str = MERGED) -> list[Block]:
    blocks = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            q, sep, rest = line.partition("\t")
            if not sep:
                raise DataError(f"{path}:{lineno}: expected query<TAB>members")
            members = {decode_id(m) for m in rest.split(",") if m}
            query = decode_id(q)
            if query not in members:
                raise DataError(f"{path}:{lineno}: block members omit the query {query!r}")
            blocks.append(Block(query, frozenset(members), source))
    return blocks
