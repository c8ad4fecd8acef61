"""The ``cuisim`` command line: one binary, one subcommand per pipeline stage.

Every run that writes an artifact also writes ``<artifact>.run.json``, a
machine-readable manifest with the config hash, input digests and counters.
Exit codes: 0 success, 1 domain error, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

from . import graph as graphmod
from . import ingest as ingestmod
from . import labeler as labelermod
from . import linking as linkingmod
from . import retrieval as retrievalmod
from .config import RunConfig, load_config, load_plan
from .errors import ConfigError, CuisimError
from .similarity import score_pair


def _require_file(path: str | Path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{what} not found: {p}")
    return p


def _digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_run_manifest(
    out_path: Path,
    command: str,
    config: RunConfig,
    inputs: list[Path],
    counters: dict,
) -> None:
    manifest = {
        "command": command,
        "config_sha256": config.config_hash(),
        "inputs": {str(p): _digest(p) for p in inputs},
        "counters": counters,
        "generated_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    manifest_path = Path(f"{out_path}.run.json")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_catalog_arg(args) -> ingestmod.ConceptCatalog:
    return ingestmod.load_catalog(_require_file(args.catalog, "catalog snapshot"))


def _load_graph_arg(path: str | None) -> graphmod.ConceptGraph | None:
    if not path:
        return None
    return graphmod.load_graph(_require_file(path, "graph snapshot"))


def cmd_ingest(args, config: RunConfig) -> int:
    section = config.section("ingest")
    vocabs = frozenset(args.vocabs.split(",")) if args.vocabs else frozenset(section["vocabularies"])
    rels = frozenset(args.rels.split(",")) if args.rels else frozenset(section["relations"])
    mrconso = _require_file(args.mrconso, "MRCONSO.RRF")
    mrsty = _require_file(args.mrsty, "MRSTY.RRF")
    mrrel = _require_file(args.mrrel, "MRREL.RRF")
    catalog, counts = ingestmod.ingest_rrf(mrconso, mrsty, mrrel, vocabs, rels)
    out = Path(args.out)
    ingestmod.save_catalog(catalog, out)
    if args.strings_out:
        catalog_digest = _digest(out)
        with open(args.strings_out, "w", encoding="utf-8") as fh:
            fh.write(f"# cuisim-strings v1 catalog_sha256={catalog_digest}\n")
            for cui, s in catalog.iter_strings():
                fh.write(f"{cui}\t{s}\n")
    counters = {name: vars(c) for name, c in counts.items()}
    counters["catalog"] = catalog.summary.as_dict()
    _write_run_manifest(out, "ingest", config, [mrconso, mrsty, mrrel], counters)
    print(json.dumps(counters["catalog"]))
    return 0


def cmd_graph(args, config: RunConfig) -> int:
    if args.graph_command == "build":
        catalog = _load_catalog_arg(args)
        synonym_rels = frozenset(
            args.synonym_rels.split(",")
            if args.synonym_rels
            else config.section("ingest")["synonym_relations"]
        )
        g = graphmod.build_graph(catalog, synonym_rels)
        out = Path(args.out)
        graphmod.save_graph(g, out)
        stats = g.stats()
        _write_run_manifest(out, "graph build", config, [Path(args.catalog)], stats)
        print(json.dumps(stats))
        return 0
    # stats
    g = graphmod.load_graph(_require_file(args.graph, "graph snapshot"))
    print(json.dumps(g.stats()))
    return 0


def cmd_mentions(args, config: RunConfig) -> int:
    from . import reports as reportsmod

    annotations_path = _require_file(args.annotations, "annotation file")
    cues = None
    cue_path = args.cue_lexicon or config.section("paths")["cue_lexicon"]
    if cue_path:
        cues = reportsmod.load_cue_lexicon(_require_file(cue_path, "cue lexicon"))
    rule_config = config.rule_config()
    per_report = []
    n_mentions = 0
    for ann in reportsmod.read_annotations(annotations_path):
        corrected = reportsmod.apply_assertion_rules(ann, cues, rule_config)
        mentions = reportsmod.merge_granularities(corrected, rule_config)
        n_mentions += len(mentions)
        per_report.append((ann.report_id, mentions))
    out = Path(args.out)
    reportsmod.write_mentions(out, per_report)
    counters = {"reports": len(per_report), "mentions": n_mentions}
    _write_run_manifest(out, "mentions", config, [annotations_path], counters)
    print(json.dumps(counters))
    return 0


def cmd_link(args, config: RunConfig) -> int:
    catalog = _load_catalog_arg(args)
    candidates_path = _require_file(args.candidates, "candidate file")
    type_config = config.semantic_type_config()
    stats = linkingmod.LinkStats()
    cui_sets = [
        linkingmod.link_report(report_id, mentions, type_config, stats)
        for report_id, mentions in linkingmod.read_candidate_file(candidates_path, catalog)
    ]
    out = Path(args.out)
    linkingmod.write_cui_sets(out, cui_sets)
    counters = {"reports": len(cui_sets), **vars(stats)}
    _write_run_manifest(out, "link", config, [candidates_path, Path(args.catalog)], counters)
    print(json.dumps(counters))
    return 0


def cmd_score(args, config: RunConfig) -> int:
    a = linkingmod.read_cui_set(_require_file(args.set_a, "CuiSet file"))
    b = linkingmod.read_cui_set(_require_file(args.set_b, "CuiSet file"))
    g = _load_graph_arg(args.graph)
    breakdown = score_pair(a, b, config.distance_config(), g)
    print(json.dumps(breakdown.as_dict(), indent=2))
    return 0


def cmd_search(args, config: RunConfig) -> int:
    query = linkingmod.read_cui_set(_require_file(args.query, "query CuiSet"))
    index = retrievalmod.build_index(
        _require_file(args.index, "CuiSet index file"),
        strict=config.section("run")["strict"],
    )
    g = _load_graph_arg(args.graph)
    search_cfg = config.section("search")
    depth: int | None
    if args.discovery_depth is not None:
        depth = None if args.discovery_depth < 0 else args.discovery_depth
    else:
        depth = search_cfg["discovery_depth"] if search_cfg["discovery_enabled"] else None
    k = args.k if args.k is not None else search_cfg["k"]
    result = retrievalmod.search(
        query,
        index,
        graph=g,
        config=config.distance_config(),
        k=k,
        discovery_depth=depth,
        workers=config.section("run")["workers"],
    )
    lines = [
        {
            "rank": i + 1,
            "report_id": e.report_id,
            "score": e.score,
            "breakdown": e.breakdown.as_dict(),
        }
        for i, e in enumerate(result.entries)
    ]
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            for line in lines:
                fh.write(json.dumps(line, ensure_ascii=False) + "\n")
        _write_run_manifest(
            Path(args.out), "search", config, [Path(args.query), Path(args.index)],
            {"results": len(lines)},
        )
    else:
        for line in lines:
            print(json.dumps(line, ensure_ascii=False))
    return 0


def cmd_harness(args, config: RunConfig) -> int:
    plan, class_labels, per_query_k = load_plan(_require_file(args.plan, "plan file"))
    index = retrievalmod.build_index(
        _require_file(args.index, "CuiSet index file"),
        class_labels=class_labels,
        strict=config.section("run")["strict"],
    )
    g = _load_graph_arg(args.graph)
    depth = None if args.discovery_depth is None or args.discovery_depth < 0 else args.discovery_depth
    result = retrievalmod.run_harness(
        plan,
        index,
        graph=g,
        config=config.distance_config(),
        per_query_k=per_query_k,
        discovery_depth=depth,
        workers=config.section("run")["workers"],
    )
    inputs = [Path(args.plan), Path(args.index)]
    counters = {
        "searches_issued": result.searches_issued,
        "retrieved": len(result.rows),
        "per_class": dict(sorted(result.per_class_counts.items())),
    }
    out_csv = Path(args.out_csv)
    retrievalmod.write_manifest_csv(result, out_csv)
    _write_run_manifest(out_csv, "harness", config, inputs, counters)
    if args.out_jsonl:
        retrievalmod.write_manifest_jsonl(result, args.out_jsonl)
    print(json.dumps(counters))
    return 0


def cmd_label(args, config: RunConfig) -> int:
    catalog = _load_catalog_arg(args)
    labels_cfg = config.section("labels")
    label_names = tuple(labels_cfg["names"])
    vocab = labelermod.build_label_vocabulary(
        label_names, catalog, overrides=labels_cfg["overrides"]
    )
    cui_sets, _ = linkingmod.read_cui_sets(
        _require_file(args.cui_sets, "CuiSet file"),
        strict=config.section("run")["strict"],
    )
    old = None
    inputs = [Path(args.cui_sets), Path(args.catalog)]
    if args.old_labels and not args.no_retrieval:
        old_path = _require_file(args.old_labels, "old labels CSV")
        old = labelermod.read_labels_csv(old_path, label_names)
        inputs.append(old_path)
    measure = args.measure or labels_cfg["measure"]
    labeled, stats = labelermod.label_dataset(
        cui_sets,
        old,
        vocab,
        catalog,
        measure=measure,
        fallback_depth=int(labels_cfg["fallback_depth"]),
        strict=config.section("run")["strict"],
    )
    out = Path(args.out)
    labelermod.write_labels_csv(out, labeled, label_names)
    if args.audit:
        labelermod.write_label_audit(args.audit, labeled)
    counters = {
        "reports": stats.reports,
        "compared": stats.compared,
        "missing_old": stats.missing_old,
        "changed_vs_old": dict(sorted(stats.changed_vs_old.items())),
    }
    _write_run_manifest(out, "label", config, inputs, counters)
    print(json.dumps(counters))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cuisim",
        description="Ontology-backed similarity, retrieval and labeling over report CUI sets.",
    )
    parser.add_argument("--config", help="TOML run configuration file")
    parser.add_argument("--workers", type=int, help="override [run] workers")
    parser.add_argument("--strict", dest="strict", action="store_true", default=None,
                        help="abort on malformed inputs")
    parser.add_argument("--no-strict", dest="strict", action="store_false",
                        help="skip and count malformed inputs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse UMLS RRF files into a catalog snapshot")
    p.add_argument("--mrconso", required=True)
    p.add_argument("--mrsty", required=True)
    p.add_argument("--mrrel", required=True)
    p.add_argument("--out", required=True, help="catalog snapshot path (.json or .json.gz)")
    p.add_argument("--vocabs", help="comma-separated source vocabularies (default SNOMEDCT_US)")
    p.add_argument("--rels", help="comma-separated relation allow-list")
    p.add_argument("--strings-out", help="TSV dump of (cui, string) pairs for the embedding index")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("graph", help="build or inspect the concept graph")
    gsub = p.add_subparsers(dest="graph_command", required=True)
    gb = gsub.add_parser("build", help="build the graph snapshot from a catalog")
    gb.add_argument("--catalog", required=True)
    gb.add_argument("--out", required=True)
    gb.add_argument("--synonym-rels", help="comma-separated synonym relation codes (default SY)")
    gs = gsub.add_parser("stats", help="print node/edge/component counts")
    gs.add_argument("--graph", required=True)
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser(
        "mentions",
        help="apply the assertion rules to annotations and emit normalized mentions",
    )
    p.add_argument("--annotations", required=True, help="annotation JSON-lines file")
    p.add_argument("--out", required=True, help="mention JSON-lines output")
    p.add_argument("--cue-lexicon", help="negation cue lexicon (default: bundled)")
    p.set_defaults(func=cmd_mentions)

    p = sub.add_parser("link", help="select best CUIs for pre-scored mention candidates")
    p.add_argument("--candidates", required=True, help="candidate JSON-lines from the extraction front end")
    p.add_argument("--catalog", required=True)
    p.add_argument("--out", required=True, help="CuiSet JSON-lines output")
    p.set_defaults(func=cmd_link)

    p = sub.add_parser("score", help="score two CuiSet JSON files and print the breakdown")
    p.add_argument("set_a")
    p.add_argument("set_b")
    p.add_argument("--graph", help="graph snapshot for synonym expansion")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("search", help="rank indexed reports against a query CuiSet")
    p.add_argument("--query", required=True)
    p.add_argument("--index", required=True, help="CuiSet JSON-lines file")
    p.add_argument("--graph")
    p.add_argument("-k", type=int, default=None)
    p.add_argument("--discovery-depth", type=int, default=None,
                   help="BFS discovery depth; negative disables discovery")
    p.add_argument("--out", help="write results as JSON lines instead of stdout")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("harness", help="run the round-robin retrieval experiment")
    p.add_argument("--plan", required=True, help="harness plan TOML")
    p.add_argument("--index", required=True)
    p.add_argument("--graph")
    p.add_argument("--discovery-depth", type=int, default=None)
    p.add_argument("--out-csv", required=True)
    p.add_argument("--out-jsonl")
    p.set_defaults(func=cmd_harness)

    p = sub.add_parser("label", help="generate ontology-backed labels")
    p.add_argument("--cui-sets", required=True)
    p.add_argument("--catalog", required=True)
    p.add_argument("--old-labels", help="CheXpert-style CSV of existing labels")
    p.add_argument("--no-retrieval", action="store_true", help="phase 1 only")
    p.add_argument("--measure", choices=["containment", "jaccard"])
    p.add_argument("--out", required=True, help="labels CSV output")
    p.add_argument("--audit", help="phase-2 audit JSON-lines output")
    p.set_defaults(func=cmd_label)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        if args.workers is not None:
            config.raw["run"]["workers"] = args.workers
        if args.strict is not None:
            config.raw["run"]["strict"] = args.strict
        return args.func(args, config)
    except ConfigError as exc:
        print(f"cuisim: config error: {exc}", file=sys.stderr)
        return 2
    except CuisimError as exc:
        print(f"cuisim: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
