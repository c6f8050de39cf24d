"""End-to-end linking: embed, block, prune, match, evaluate."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import random
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .blocking import BlockParams, block_pair_count, candidate_pairs, dump_blocks, generate_blocks
from .embed_attr import AttrEmbedConfig, attribute_embeddings
from .embed_struct import MetaPathScheme, TrainConfig, metapath_schemes, random_walks, train_skipgram
from .errors import ConfigError, DataError, GddLinkError, StageError
from .gdd import Gdd, default_discovery_config, discover_gdds, load_rules, rank_rules
from .graph import PropertyGraph, read_graph_files
from .matching import LinkedEntityGraph, knn_match, link_entities, write_links, write_match_report
from .metrics import GroundTruth, cssr_g, pair_metrics, purity
from .patterns import GraphPattern, match_pattern, mine_frequent_patterns, to_pseudo_relation
from .pruning import (
    DEFAULT_DICE_GRID,
    build_block_graphs,
    dice,
    dump_pruned_pairs,
    learn_dice_threshold,
    prune,
)

log = logging.getLogger(__name__)

FULL, STRUCTURAL_ONLY, ATTRIBUTE_ONLY = "full", "structural-only", "attribute-only"
MODES = (FULL, STRUCTURAL_ONLY, ATTRIBUTE_ONLY)
LEARN = "learn"


@dataclass
class PruneConfig:
    dice_threshold: Any = LEARN  # a number in [0, 1] or "learn"
    epsilon: float = 0.01
    grid: tuple = DEFAULT_DICE_GRID
    validation_fraction: float = 0.2


@dataclass
class PipelineConfig:
    nodes: str = ""
    edges: str = ""
    rules: str = ""
    output: str = "out"
    mode: str = FULL
    seed: int = 0
    workers: int = 1
    knn_k: int = 1
    target_label: str = ""
    struct: TrainConfig = field(default_factory=TrainConfig)
    attr: AttrEmbedConfig = field(default_factory=AttrEmbedConfig)
    block: BlockParams = field(default_factory=BlockParams)
    prune: PruneConfig = field(default_factory=PruneConfig)

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.knn_k < 1:
            raise ConfigError("knn_k must be >= 1")
        t = self.prune.dice_threshold
        if t != LEARN and not (isinstance(t, (int, float)) and 0 <= t <= 1):
            raise ConfigError(f"dice_threshold must be 'learn' or a number in [0, 1], got {t!r}")
        if not 0 < self.prune.validation_fraction <= 1:
            raise ConfigError("validation_fraction must be in (0, 1]")
        self.struct.validate()
        self.attr.train.validate()

    def seeded(self) -> "PipelineConfig":
        """Copy whose component seeds derive from ``seed``."""
        out = dataclasses.replace(self)
        out.struct = dataclasses.replace(self.struct, seed=self.seed, workers=self.workers)
        out.attr = dataclasses.replace(self.attr, train=dataclasses.replace(self.attr.train, seed=self.seed + 1))
        out.block = dataclasses.replace(self.block, seed=self.seed + 2)
        return out

    def set(self, key: str, raw: str) -> None:
        """Assign a dotted ``key`` from its string form, coerced to the field's type."""
        target: Any = self
        parts = key.strip().split(".")
        for p in parts[:-1]:
            if not dataclasses.is_dataclass(target) or not hasattr(target, p):
                raise ConfigError(f"unknown configuration key {key!r}")
            target = getattr(target, p)
        name = parts[-1]
        if not dataclasses.is_dataclass(target) or name not in {f.name for f in dataclasses.fields(target)}:
            raise ConfigError(f"unknown configuration key {key!r}")
        current = getattr(target, name)
        setattr(target, name, _coerce(key, raw.strip(), current))

    @classmethod
    def from_mapping(cls, values: Mapping[str, str]) -> "PipelineConfig":
        cfg = cls()
        for k, v in values.items():
            cfg.set(k, v)
        return cfg

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


def _coerce(key: str, raw: str, current: Any) -> Any:
    try:
        if key.endswith("dice_threshold"):
            return LEARN if raw == LEARN else float(raw)
        if isinstance(current, bool):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1", "yes")
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        if isinstance(current, tuple):
            return tuple(float(x) for x in raw.split(",") if x.strip())
        return raw
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {key}") from None


def parse_config_text(text: str) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"config line {lineno}: expected key = value")
        out[key.strip()] = value.strip()
    return out


def load_config(path) -> PipelineConfig:
    with open(path, encoding="utf-8") as fh:
        return PipelineConfig.from_mapping(parse_config_text(fh.read()))


# -- discovery ---------------------------------------------------------------


@dataclass
class DiscoverySettings:
    min_support: int = 2
    pattern_support: int = 2
    max_edges: int = 2
    top_n: int = 20
    max_matches: int = 50000
    target_label: str = ""


def eid_labels(graph: PropertyGraph) -> set[str]:
    return {n.label for n in graph.nodes.values() if n.eid is not None}


def discover_rules(graph: PropertyGraph, settings: DiscoverySettings,
                   patterns: Sequence[GraphPattern] | None = None, overrides: Mapping | None = None) -> list[Gdd]:
    """Mine (or take) scopes, then discover and rank linking rules over each same-label pair."""
    labels = {settings.target_label} if settings.target_label else eid_labels(graph)
    if not labels or not any(graph.nodes[n].eid is not None for l in labels for n in graph.nodes_with_label(l)):
        raise DataError("discovery needs an eid-labelled graph: no node of the target label carries an eid")
    if patterns is None:
        patterns = mine_frequent_patterns(graph, settings.pattern_support, settings.max_edges)
    rules: list[Gdd] = []
    for p in patterns:
        pairs = [(a, b) for a, b in p.same_label_pairs() if p.var_labels[a] in labels]
        if not pairs:
            continue
        matches = match_pattern(graph, p)
        if len(matches) > settings.max_matches:
            log.warning("skipping scope %s: %d matches exceed max_matches", p, len(matches))
            continue
        for a, b in pairs:
            config = default_discovery_config(graph, p, (a, b), overrides)
            if not config.attributes:
                continue
            pr = to_pseudo_relation(graph, matches, sorted(config.attributes), config.relations)
            rules.extend(discover_gdds(pr, config, settings.min_support))
    ranked = rank_rules(rules)[: settings.top_n]
    if not ranked:
        log.warning("no rule reached min_support=%d", settings.min_support)
    return [dataclasses.replace(g, name=f"r{i}") for i, g in enumerate(ranked)]


# -- run -------------------------------------------------------------------


def rule_schemes(rules: Sequence[Gdd]) -> list[MetaPathScheme]:
    found: dict[tuple, MetaPathScheme] = {}
    for g in rules:
        for s in metapath_schemes(g.scope, [g.eid_vars]):
            found.setdefault(s.labels, s)
    return [found[k] for k in sorted(found)]


def target_labels(rules: Sequence[Gdd], cfg: PipelineConfig) -> list[str]:
    if cfg.target_label:
        return [cfg.target_label]
    return sorted({g.scope.var_labels[g.eid_vars[0]] for g in rules})


def validation_slice(graph: PropertyGraph, labels: Sequence[str], fraction: float, seed: int) -> set[str]:
    """Nodes of whole eid groups, sampled by seed until ``fraction`` of the labelled nodes is covered."""
    groups: dict[tuple[str, str], list[str]] = {}
    for l in labels:
        for v in graph.nodes_with_label(l):
            eid = graph.nodes[v].eid
            if eid is not None:
                groups.setdefault((l, eid), []).append(v)
    keys = sorted(groups)
    random.Random(seed).shuffle(keys)
    total = sum(len(v) for v in groups.values())
    out: set[str] = set()
    for k in keys:
        if len(out) >= fraction * total:
            break
        out.update(groups[k])
    return out


def choose_dice_threshold(graph: PropertyGraph, pairs: Iterable[tuple[str, str]], labels: Sequence[str],
                          prune_cfg: PruneConfig, seed: int) -> tuple[float, str]:
    """The configured ϑ, or one learned on the candidate pairs inside the validation slice.

    Returns the threshold and its source: configured, learned or fallback
    (0 when the slice holds no labelled true pair).
    """
    if prune_cfg.dice_threshold != LEARN:
        return float(prune_cfg.dice_threshold), "configured"
    slice_nodes = validation_slice(graph, labels, prune_cfg.validation_fraction, seed)
    samples = []
    for a, b in sorted(pairs):
        if a in slice_nodes and b in slice_nodes:
            samples.append((dice(graph.nodes[a], graph.nodes[b]), graph.nodes[a].eid == graph.nodes[b].eid))
    try:
        return learn_dice_threshold(samples, prune_cfg.grid, prune_cfg.epsilon), "learned"
    except ConfigError as exc:
        log.warning("dice threshold falls back to 0: %s", exc)
        return 0.0, "fallback"


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out: Path, artifacts: Sequence[str], status: str, failed: str | None = None) -> None:
    lines = [f"status {status}"]
    if failed:
        lines.append(f"failed-stage {failed}")
    for name in sorted(artifacts):
        p = out / name
        if p.exists():
            lines.append(f"{_sha256(p)}  {name}")
    (out / "MANIFEST").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


@dataclass
class RunResult:
    links: LinkedEntityGraph
    report: dict
    metrics: dict | None
    output: Path


def run_pipeline(cfg: PipelineConfig, graph: PropertyGraph | None = None, rules: Sequence[Gdd] | None = None) -> RunResult:
    """Run every stage and write its artifacts under ``cfg.output``.

    On a stage failure the artifacts written so far stay in place and the
    MANIFEST is marked incomplete.
    """
    cfg.validate()
    cfg = cfg.seeded()
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    artifacts: list[str] = []
    timings: dict[str, float] = {}
    stage = "load"
    started = False  # errors before the first stage keep their own type

    def timed(name: str, fn):
        nonlocal stage
        stage = name
        start = time.perf_counter()
        result = fn()
        timings[name] = round(time.perf_counter() - start, 6)
        return result

    try:
        if graph is None:
            if not cfg.nodes or not cfg.edges:
                raise ConfigError("nodes and edges paths are required")
            graph = timed("load", lambda: read_graph_files(cfg.nodes, cfg.edges))
        if rules is None:
            rules = load_rules(cfg.rules) if cfg.rules else []
        rules = rank_rules(rules)
        if cfg.mode == FULL and not rules:
            raise ConfigError("full mode needs a non-empty rule set")
        labels = target_labels(rules, cfg)
        if not labels:
            raise ConfigError("no target label: supply rules or target_label")
        label_of = {v: n.label for v, n in graph.nodes.items()}
        targets = [v for l in labels for v in graph.nodes_with_label(l)]
        schemes = rule_schemes(rules) if cfg.mode in (FULL, STRUCTURAL_ONLY) else []
        if cfg.mode in (FULL, STRUCTURAL_ONLY) and not schemes:
            raise ConfigError("rules yield no meta-path scheme for structural embedding")
        started = True

        struct_emb = attr_emb = None
        if cfg.mode in (FULL, STRUCTURAL_ONLY):

            def embed_struct():
                corpus = random_walks(graph, schemes, cfg.struct)
                table = train_skipgram(corpus, cfg.struct).table
                return table.subset([v for v in targets if v in table])

            struct_emb = timed("embed-structural", embed_struct)
            struct_emb.save_binary(out / "struct_emb.bin")
            artifacts.append("struct_emb.bin")
        if cfg.mode in (FULL, ATTRIBUTE_ONLY):
            attr_emb = timed("embed-attribute", lambda: attribute_embeddings(graph, rules, cfg.attr, labels))
            attr_emb.save_binary(out / "attr_emb.bin")
            artifacts.append("attr_emb.bin")

        blocks = timed("block", lambda: generate_blocks(struct_emb, attr_emb, cfg.block, label_of, targets))
        dump_blocks(blocks, out / "blocks.tsv")
        artifacts.append("blocks.tsv")
        c_b_pairs = candidate_pairs(blocks)

        bgs = build_block_graphs(blocks)
        theta, theta_source = timed("learn-threshold",
                                    lambda: choose_dice_threshold(graph, c_b_pairs, labels, cfg.prune, cfg.seed))
        pruned = timed("prune", lambda: prune(bgs, graph, theta))
        dump_pruned_pairs(bgs, pruned, out / "pruned_pairs.csv")
        artifacts.append("pruned_pairs.csv")
        c_p = pruned.candidates

        if cfg.mode == FULL:
            linked = timed("match", lambda: link_entities(c_p, rules, graph, cfg.workers))
        else:
            emb = struct_emb if cfg.mode == STRUCTURAL_ONLY else attr_emb

            def knn():
                pairs = knn_match(emb, cfg.knn_k, label_of) & c_p
                return LinkedEntityGraph.from_pairs(pairs)

            linked = timed("match", knn)
        write_links(linked, out / "links.tsv")
        write_match_report(linked.decisions, out / "match_report.jsonl")
        artifacts += ["links.tsv", "match_report.jsonl"]

        report = {
            "mode": cfg.mode,
            "ablation": cfg.mode != FULL,
            "matcher": "gdd" if cfg.mode == FULL else f"knn(k={cfg.knn_k}) within pruned candidates",
            "target_labels": labels,
            "rules": [g.name or f"r{i}" for i, g in enumerate(rules)],
            "counts": {
                "nodes": len(graph.nodes),
                "blocks": len(blocks),
                "C_b": block_pair_count(blocks),
                "C_b_unique": len(c_b_pairs),
                "after_weight": len({e for bg in pruned.weighted for e in bg.edges}),
                "C_p": len(c_p),
                "C_m": len(linked.pairs),
                "clusters": len(linked.clusters),
            },
            "avW": pruned.avw,
            "dice_threshold": theta,
            "dice_threshold_source": theta_source,
            "seed": cfg.seed,
        }
        metrics = None
        truth = GroundTruth.from_graph(graph, labels)
        if truth.pairs:
            def evaluate():
                m = pair_metrics(linked.pairs, truth)
                return {
                    "precision": m.precision,
                    "recall": m.recall,
                    "f1": m.f1,
                    "empty_prediction": m.empty_prediction,
                    "true_positives": m.true_positives,
                    "predicted": m.predicted,
                    "actual": m.actual,
                    "cssr_g": cssr_g(c_p, graph),
                    "cssr_g_blocking": cssr_g(c_b_pairs, graph),
                    "purity_blocks": purity(blocks, truth),
                    "purity_weight": purity(pruned.weighted, truth),
                    "purity_dice": purity(pruned.final, truth),
                    "recall_blocking": len(c_b_pairs & truth.pairs) / len(truth.pairs),
                    "recall_pruned": len(c_p & truth.pairs) / len(truth.pairs),
                }

            metrics = timed("eval", evaluate)
            _dump_json(out / "metrics.json", metrics)
            artifacts.append("metrics.json")
        _dump_json(out / "report.json", report)
        artifacts.append("report.json")
    except Exception as exc:
        _dump_json(out / "timings.json", timings)
        write_manifest(out, artifacts, "incomplete", stage)
        if not started and isinstance(exc, (GddLinkError, OSError)):
            raise
        raise StageError(stage, exc) from exc
    _dump_json(out / "timings.json", timings)
    write_manifest(out, artifacts, "complete")
    return RunResult(linked, report, metrics, out)
