"""Command-line entry point: one subcommand per pipeline stage plus ``run``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 stage failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .blocking import dump_blocks, generate_blocks, load_blocks
from .datasets import tournament_graph, video_platform_graph
from .embed_attr import attribute_embeddings
from .embed_struct import EmbeddingTable, random_walks, train_skipgram
from .errors import ConfigError, DataError, GddLinkError, StageError
from .gdd import load_rules, save_rules
from .graph import RelationalSchemaConfig, convert_relational, read_graph_files, write_graph_files
from .matching import LinkedEntityGraph, knn_match, link_entities, read_links, write_links, write_match_report
from .metrics import GroundTruth, NoiseSpec, cssr_g, generate_noisy, metrics_table, pair_metrics, purity
from .patterns import load_pattern_file
from .pipeline import (
    FULL,
    MODES,
    DiscoverySettings,
    PipelineConfig,
    choose_dice_threshold,
    discover_rules,
    load_config,
    rule_schemes,
    run_pipeline,
    target_labels,
)
from .pruning import build_block_graphs, dump_pruned_pairs, load_pruned_pairs, prune

log = logging.getLogger("gddlink")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_STAGE = 0, 2, 3, 4


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else PipelineConfig()
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        cfg.set(key, value)
    for name in ("seed", "workers", "mode"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    cfg.validate()
    return cfg.seeded()


def _graph(args):
    return read_graph_files(args.nodes, args.edges)


def _rules(path):
    return load_rules(path) if path else []


def _labels(rules, cfg: PipelineConfig, explicit: str | None = None) -> list[str]:
    if explicit:
        return [explicit]
    labels = target_labels(rules, cfg)
    if not labels:
        raise ConfigError("no target label: pass --label, target_label or a rule file")
    return labels


# -- subcommands ---------------------------------------------------------------


def cmd_convert(args) -> int:
    schema = RelationalSchemaConfig.from_ini(Path(args.schema).read_text(encoding="utf-8"))
    tables = {}
    for item in args.table:
        name, sep, path = item.partition("=")
        if not sep:
            raise ConfigError(f"--table expects name=path, got {item!r}")
        tables[name] = Path(path).read_text(encoding="utf-8")
    graph = convert_relational(tables, schema)
    write_graph_files(graph, args.nodes_out, args.edges_out)
    print(f"{len(graph.nodes)} nodes, {len(graph.edges)} edges")
    return EXIT_OK


def cmd_discover(args) -> int:
    graph = _graph(args)
    settings = DiscoverySettings(args.min_support, args.pattern_support, args.max_edges, args.top_n,
                                 args.max_matches, args.label or "")
    patterns = [load_pattern_file(p) for p in args.pattern] if args.pattern else None
    overrides = json.loads(Path(args.overrides).read_text(encoding="utf-8")) if args.overrides else None
    rules = discover_rules(graph, settings, patterns, overrides)
    save_rules(rules, args.out)
    print(f"{len(rules)} rules written to {args.out}")
    return EXIT_OK


def cmd_embed(args) -> int:
    cfg = _config(args)
    graph = _graph(args)
    rules = _rules(args.rules)
    labels = _labels(rules, cfg, args.label)
    targets = [v for l in labels for v in graph.nodes_with_label(l)]
    if args.kind == "structural":
        schemes = rule_schemes(rules)
        if not schemes:
            raise ConfigError("structural embedding needs rules that yield a meta-path scheme")
        table = train_skipgram(random_walks(graph, schemes, cfg.struct), cfg.struct).table
        table = table.subset([v for v in targets if v in table])
    else:
        table = attribute_embeddings(graph, rules, cfg.attr, labels)
    table.save(args.out)
    print(f"{len(table)} vectors of dimension {table.dim} written to {args.out}")
    return EXIT_OK


def cmd_block(args) -> int:
    cfg = _config(args)
    graph = _graph(args)
    struct = EmbeddingTable.load(args.struct_emb) if args.struct_emb else None
    attr = EmbeddingTable.load(args.attr_emb) if args.attr_emb else None
    label_of = {v: n.label for v, n in graph.nodes.items()}
    blocks = generate_blocks(struct, attr, cfg.block, label_of)
    dump_blocks(blocks, args.out)
    print(f"{len(blocks)} blocks written to {args.out}")
    return EXIT_OK


def cmd_prune(args) -> int:
    cfg = _config(args)
    graph = _graph(args)
    blocks = load_blocks(args.blocks)
    bgs = build_block_graphs(blocks)
    labels = _labels(_rules(args.rules), cfg, args.label)
    pairs = {e for bg in bgs for e in bg.edges}
    theta, source = choose_dice_threshold(graph, pairs, labels, cfg.prune, cfg.seed)
    result = prune(bgs, graph, theta)
    dump_pruned_pairs(bgs, result, args.out)
    print(f"avW={result.avw:.6f} dice threshold={theta} ({source}); {len(result.candidates)} pairs kept")
    return EXIT_OK


def cmd_match(args) -> int:
    cfg = _config(args)
    graph = _graph(args)
    cands = load_pruned_pairs(args.candidates)
    if cfg.mode == FULL:
        rules = _rules(args.rules)
        linked = link_entities(cands, rules, graph, cfg.workers)
    else:
        if not args.emb:
            raise ConfigError("ablation modes match by kNN and need --emb")
        emb = EmbeddingTable.load(args.emb)
        label_of = {v: n.label for v, n in graph.nodes.items()}
        linked = LinkedEntityGraph.from_pairs(knn_match(emb, cfg.knn_k, label_of) & cands)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_links(linked, out / "links.tsv")
    write_match_report(linked.decisions, out / "match_report.jsonl")
    print(f"{len(linked.pairs)} linked pairs in {len(linked.clusters)} clusters")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _config(args)
    for name in ("nodes", "edges", "rules", "output"):
        value = getattr(args, name)
        if value:
            setattr(cfg, name, value)
    rules = None
    if args.discover:
        graph = read_graph_files(cfg.nodes, cfg.edges)
        rules = discover_rules(graph, DiscoverySettings(target_label=cfg.target_label))
        result = run_pipeline(cfg, graph=graph, rules=rules)
    else:
        result = run_pipeline(cfg)
    print(metrics_table(result.report["counts"]))
    if result.metrics is not None:
        shown = {k: v for k, v in result.metrics.items() if k in ("precision", "recall", "f1", "cssr_g")}
        print(metrics_table(shown))
    print(f"artifacts in {result.output}")
    return EXIT_OK


def cmd_eval(args) -> int:
    graph = _graph(args)
    labels = [args.label] if args.label else None
    truth = GroundTruth.from_graph(graph, labels)
    links = read_links(args.links)
    m = pair_metrics(links, truth)
    report = {"precision": m.precision, "recall": m.recall, "f1": m.f1, "empty_prediction": m.empty_prediction,
              "true_positives": m.true_positives, "predicted": m.predicted, "actual": m.actual,
              "cssr_g": cssr_g(links, graph)}
    if args.blocks:
        report["purity_blocks"] = purity(load_blocks(args.blocks), truth)
    if args.json:
        Path(args.json).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(metrics_table(report))
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.dataset == "video":
        graph = video_platform_graph()
    elif args.dataset == "tournament":
        graph = tournament_graph(seed=args.seed)
    else:
        if not (args.nodes and args.edges):
            raise ConfigError("synth needs --nodes and --edges or --dataset")
        graph = _graph(args)
    spec = NoiseSpec(args.label, args.rate, not args.no_attribute_noise, args.structural_noise,
                     args.max_edge_fraction, args.seed)
    noisy, truth, _ = generate_noisy(graph, spec)
    write_graph_files(noisy, args.nodes_out, args.edges_out)
    print(f"{len(noisy.nodes)} nodes, {len(noisy.edges)} edges, {len(truth)} true pairs")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------


def _add_graph(p, required: bool = True) -> None:
    p.add_argument("--nodes", required=required, help="nodes JSON-lines file")
    p.add_argument("--edges", required=required, help="edges JSON-lines file")


def _add_config(p) -> None:
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one configuration key")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--mode", choices=MODES)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gddlink", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="relational tables to graph files")
    p.add_argument("--schema", required=True, help="INI schema config")
    p.add_argument("--table", action="append", required=True, metavar="NAME=CSV")
    p.add_argument("--nodes-out", required=True)
    p.add_argument("--edges-out", required=True)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("discover", help="mine scopes and discover linking rules")
    _add_graph(p)
    p.add_argument("--out", required=True, help="rule file to write")
    p.add_argument("--pattern", action="append", help="pattern JSON file; skips mining")
    p.add_argument("--overrides", help="JSON file with per-attribute distance settings")
    p.add_argument("--label", help="target node label")
    p.add_argument("--min-support", type=int, default=2)
    p.add_argument("--pattern-support", type=int, default=2)
    p.add_argument("--max-edges", type=int, default=2)
    p.add_argument("--top-n", type=int, default=20)
    p.add_argument("--max-matches", type=int, default=50000)
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser("embed", help="structural or attribute node embeddings")
    _add_graph(p)
    _add_config(p)
    p.add_argument("--kind", choices=("structural", "attribute"), required=True)
    p.add_argument("--rules")
    p.add_argument("--label")
    p.add_argument("--out", required=True, help=".bin for binary, anything else for text")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("block", help="LSH blocks from one or two embedding tables")
    _add_graph(p)
    _add_config(p)
    p.add_argument("--struct-emb")
    p.add_argument("--attr-emb")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_block)

    p = sub.add_parser("prune", help="weight and dice pruning of a block dump")
    _add_graph(p)
    _add_config(p)
    p.add_argument("--blocks", required=True)
    p.add_argument("--rules")
    p.add_argument("--label")
    p.add_argument("--out", required=True, help="pruned-pairs CSV")
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("match", help="confirm pruned candidates")
    _add_graph(p)
    _add_config(p)
    p.add_argument("--candidates", required=True, help="pruned-pairs CSV")
    p.add_argument("--rules")
    p.add_argument("--emb", help="embedding table for kNN in ablation modes")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("run", help="every stage end to end")
    _add_graph(p, required=False)
    _add_config(p)
    p.add_argument("--rules")
    p.add_argument("--output")
    p.add_argument("--discover", action="store_true", help="discover rules from the input graph's eids first")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="score links against eid ground truth")
    _add_graph(p)
    p.add_argument("--links", required=True)
    p.add_argument("--label")
    p.add_argument("--blocks")
    p.add_argument("--json", help="also write the metrics as JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="add noisy duplicates to a graph")
    _add_graph(p, required=False)
    p.add_argument("--dataset", choices=("video", "tournament"), help="built-in graph instead of --nodes/--edges")
    p.add_argument("--label", required=True)
    p.add_argument("--rate", type=float, default=0.1)
    p.add_argument("--no-attribute-noise", action="store_true")
    p.add_argument("--structural-noise", action="store_true")
    p.add_argument("--max-edge-fraction", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--nodes-out", required=True)
    p.add_argument("--edges-out", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, GddLinkError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
