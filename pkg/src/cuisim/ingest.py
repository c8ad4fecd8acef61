"""UMLS RRF ingestion: MRCONSO / MRSTY / MRREL parsing and the concept catalog.

The parsers assume the standard pipe-delimited UMLS release layout with no
header row (MRCONSO 18 columns, MRREL 16, MRSTY 6).  Rows that do not meet
the layout are skipped and counted, never fatal; an unreadable file or an
ingest that yields zero concept records is fatal.
"""

from __future__ import annotations

import gzip
import json
import re
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable

from .errors import IngestError

CUI_RE = re.compile(r"^C[0-9]{7}$")
TUI_RE = re.compile(r"^T[0-9]{3}$")

MRCONSO_COLS = 18
MRREL_COLS = 16
MRSTY_COLS = 6

DEFAULT_VOCABS = frozenset({"SNOMEDCT_US"})
DEFAULT_RELS = frozenset({"PAR", "CHD", "RB", "RN", "SY"})

SNAPSHOT_FORMAT = "cuisim-catalog"
SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class ConceptRecord:
    """One UMLS concept restricted to the configured vocabularies."""

    cui: str
    preferred_name: str
    strings: tuple[str, ...]
    source_vocabularies: frozenset[str]


@dataclass(frozen=True)
class SemanticTypeAssignment:
    cui: str
    tui: str
    semantic_type: str


@dataclass(frozen=True)
class RelationRecord:
    """A directed MRREL row (cui1, rel, cui2); rel is from the allow-list.

    For hierarchical codes the UMLS orientation is kept: a (c, PAR, p) row
    means p is a parent of c, and a (p, CHD, c) row means c is a child of p.
    """

    cui1: str
    rel: str
    cui2: str


@dataclass
class ParseCounts:
    """Row accounting for one RRF file."""

    total_rows: int = 0
    kept_rows: int = 0
    malformed_rows: int = 0
    filtered_rows: int = 0


@dataclass
class CatalogSummary:
    records: int = 0
    semantic_types: int = 0
    relations: int = 0
    dangling_relations_dropped: int = 0
    dangling_semantic_types_dropped: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class ConceptCatalog:
    """Immutable after build; safe for concurrent read access."""

    records: dict[str, ConceptRecord]
    semantic_types: dict[str, tuple[SemanticTypeAssignment, ...]]
    relations: tuple[RelationRecord, ...]
    summary: CatalogSummary = field(default_factory=CatalogSummary)
    _parents: dict[str, tuple[str, ...]] | None = field(
        default=None, repr=False, compare=False
    )

    def semantic_type_names(self, cui: str) -> tuple[str, ...]:
        return tuple(sorted({a.semantic_type for a in self.semantic_types.get(cui, ())}))

    def parents(self, cui: str) -> tuple[str, ...]:
        """Parent CUIs recovered from the directed PAR/CHD relation rows."""
        if self._parents is None:
            parents: dict[str, set[str]] = defaultdict(set)
            for rel in self.relations:
                if rel.rel == "PAR":
                    parents[rel.cui1].add(rel.cui2)
                elif rel.rel == "CHD":
                    parents[rel.cui2].add(rel.cui1)
            self._parents = {c: tuple(sorted(ps)) for c, ps in parents.items()}
        return self._parents.get(cui, ())

    def iter_strings(self) -> Iterable[tuple[str, str]]:
        """All (cui, surface string) pairs, e.g. for the embedding-index dump."""
        for cui in sorted(self.records):
            for s in self.records[cui].strings:
                yield cui, s


def _open_text(path: str | Path, mode: str = "rt") -> IO[str]:
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, mode, encoding="utf-8")
    return open(path, mode, encoding="utf-8")


def _iter_rrf_rows(path: str | Path) -> Iterable[list[str]]:
    """Yield pipe-split rows; the trailing empty field after the final pipe
    is dropped so indices match the documented column layout."""
    try:
        with _open_text(path) as fh:
            for line in fh:
                parts = line.rstrip("\n").split("|")
                if parts and parts[-1] == "":
                    parts.pop()
                yield parts
    except OSError as exc:
        raise IngestError(f"cannot read RRF file {path}: {exc}") from exc


def parse_mrconso(
    path: str | Path,
    vocab_filter: frozenset[str] | set[str] = DEFAULT_VOCABS,
) -> tuple[list[ConceptRecord], ParseCounts]:
    """Aggregate MRCONSO rows into one record per CUI.

    Keeps ENG rows whose source vocabulary (column 11) is in ``vocab_filter``.
    The preferred name is the first surviving row with term status ``P``,
    falling back to the lexicographically smallest string.
    """
    counts = ParseCounts()
    strings: dict[str, set[str]] = defaultdict(set)
    vocabs: dict[str, set[str]] = defaultdict(set)
    preferred: dict[str, str] = {}

    for parts in _iter_rrf_rows(path):
        counts.total_rows += 1
        if len(parts) < MRCONSO_COLS:
            counts.malformed_rows += 1
            continue
        cui, lang, status, sab, string = (
            parts[0],
            parts[1],
            parts[2],
            parts[11],
            parts[14],
        )
        if not CUI_RE.match(cui) or not string:
            counts.malformed_rows += 1
            continue
        if lang != "ENG" or sab not in vocab_filter:
            counts.filtered_rows += 1
            continue
        counts.kept_rows += 1
        strings[cui].add(string)
        vocabs[cui].add(sab)
        if status == "P" and cui not in preferred:
            preferred[cui] = string

    if not strings:
        raise IngestError(f"no concept records survived ingestion of {path}")

    records = [
        ConceptRecord(
            cui=cui,
            preferred_name=preferred.get(cui, min(strings[cui])),
            strings=tuple(sorted(strings[cui])),
            source_vocabularies=frozenset(vocabs[cui]),
        )
        for cui in sorted(strings)
    ]
    return records, counts


def parse_mrsty(path: str | Path) -> tuple[list[SemanticTypeAssignment], ParseCounts]:
    """Parse MRSTY rows into deduplicated semantic-type assignments."""
    counts = ParseCounts()
    seen: set[SemanticTypeAssignment] = set()
    for parts in _iter_rrf_rows(path):
        counts.total_rows += 1
        if len(parts) < 4:
            counts.malformed_rows += 1
            continue
        cui, tui, name = parts[0], parts[1], parts[3]
        if not CUI_RE.match(cui) or not TUI_RE.match(tui) or not name:
            counts.malformed_rows += 1
            continue
        assignment = SemanticTypeAssignment(cui=cui, tui=tui, semantic_type=name)
        if assignment in seen:
            counts.filtered_rows += 1
            continue
        seen.add(assignment)
        counts.kept_rows += 1
    return sorted(seen, key=lambda a: (a.cui, a.tui, a.semantic_type)), counts


def parse_mrrel(
    path: str | Path,
    rel_allowlist: frozenset[str] | set[str] = DEFAULT_RELS,
) -> tuple[list[RelationRecord], ParseCounts]:
    """Parse MRREL rows, keeping allow-listed relations.

    Self-loops are dropped; duplicate unordered pairs carrying the same rel
    code keep their first occurrence (orientation preserved).
    """
    counts = ParseCounts()
    out: list[RelationRecord] = []
    seen: set[tuple[str, str, str]] = set()
    for parts in _iter_rrf_rows(path):
        counts.total_rows += 1
        if len(parts) < 5:
            counts.malformed_rows += 1
            continue
        cui1, rel, cui2 = parts[0], parts[3], parts[4]
        if not CUI_RE.match(cui1) or not CUI_RE.match(cui2) or not rel:
            counts.malformed_rows += 1
            continue
        if rel not in rel_allowlist or cui1 == cui2:
            counts.filtered_rows += 1
            continue
        key = (min(cui1, cui2), max(cui1, cui2), rel)
        if key in seen:
            counts.filtered_rows += 1
            continue
        seen.add(key)
        counts.kept_rows += 1
        out.append(RelationRecord(cui1=cui1, rel=rel, cui2=cui2))
    return out, counts


def merge_records(records: Iterable[ConceptRecord]) -> dict[str, ConceptRecord]:
    """Merge records by CUI; order independent, so shard merge order cannot
    change the catalog."""
    merged: dict[str, ConceptRecord] = {}
    for rec in records:
        prev = merged.get(rec.cui)
        if prev is None:
            merged[rec.cui] = rec
            continue
        merged[rec.cui] = ConceptRecord(
            cui=rec.cui,
            preferred_name=min(prev.preferred_name, rec.preferred_name),
            strings=tuple(sorted(set(prev.strings) | set(rec.strings))),
            source_vocabularies=prev.source_vocabularies | rec.source_vocabularies,
        )
    return merged


def build_catalog(
    records: Iterable[ConceptRecord],
    assignments: Iterable[SemanticTypeAssignment],
    relations: Iterable[RelationRecord],
) -> ConceptCatalog:
    """Assemble the catalog, dropping references to unknown CUIs."""
    by_cui = merge_records(records)

    kept_sty: dict[str, list[SemanticTypeAssignment]] = defaultdict(list)
    dangling_sty = 0
    for a in assignments:
        if a.cui in by_cui:
            kept_sty[a.cui].append(a)
        else:
            dangling_sty += 1

    kept_rel: list[RelationRecord] = []
    dangling_rel = 0
    for r in relations:
        if r.cui1 in by_cui and r.cui2 in by_cui:
            kept_rel.append(r)
        else:
            dangling_rel += 1

    semantic_types = {
        cui: tuple(sorted(v, key=lambda a: (a.tui, a.semantic_type)))
        for cui, v in sorted(kept_sty.items())
    }
    summary = CatalogSummary(
        records=len(by_cui),
        semantic_types=sum(len(v) for v in semantic_types.values()),
        relations=len(kept_rel),
        dangling_relations_dropped=dangling_rel,
        dangling_semantic_types_dropped=dangling_sty,
    )
    return ConceptCatalog(
        records=by_cui,
        semantic_types=semantic_types,
        relations=tuple(kept_rel),
        summary=summary,
    )


def ingest_rrf(
    mrconso: str | Path,
    mrsty: str | Path,
    mrrel: str | Path,
    vocab_filter: frozenset[str] | set[str] = DEFAULT_VOCABS,
    rel_allowlist: frozenset[str] | set[str] = DEFAULT_RELS,
) -> tuple[ConceptCatalog, dict[str, ParseCounts]]:
    """Run the three parsers and build the catalog in one step."""
    records, conso_counts = parse_mrconso(mrconso, vocab_filter)
    assignments, sty_counts = parse_mrsty(mrsty)
    relations, rel_counts = parse_mrrel(mrrel, rel_allowlist)
    catalog = build_catalog(records, assignments, relations)
    return catalog, {
        "mrconso": conso_counts,
        "mrsty": sty_counts,
        "mrrel": rel_counts,
    }


def save_catalog(catalog: ConceptCatalog, path: str | Path) -> None:
    """Write the versioned JSON snapshot (gzipped when the path ends in .gz)."""
    payload = {
        "format": SNAPSHOT_FORMAT,
        "version": SNAPSHOT_VERSION,
        "records": [
            {
                "cui": r.cui,
                "preferred_name": r.preferred_name,
                "strings": list(r.strings),
                "source_vocabularies": sorted(r.source_vocabularies),
            }
            for _, r in sorted(catalog.records.items())
        ],
        "semantic_types": [
            {"cui": a.cui, "tui": a.tui, "semantic_type": a.semantic_type}
            for cui in sorted(catalog.semantic_types)
            for a in catalog.semantic_types[cui]
        ],
        "relations": [[r.cui1, r.rel, r.cui2] for r in catalog.relations],
        "summary": catalog.summary.as_dict(),
    }
    with _open_text(path, "wt") as fh:
        json.dump(payload, fh, ensure_ascii=False)
        fh.write("\n")


def load_catalog(path: str | Path) -> ConceptCatalog:
    try:
        with _open_text(path) as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise IngestError(f"cannot read catalog snapshot {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise IngestError(f"corrupt catalog snapshot {path}: {exc}") from exc
    if payload.get("format") != SNAPSHOT_FORMAT:
        raise IngestError(f"{path} is not a catalog snapshot")
    if payload.get("version") != SNAPSHOT_VERSION:
        raise IngestError(
            f"unsupported catalog snapshot version {payload.get('version')!r}"
        )

    records = {
        r["cui"]: ConceptRecord(
            cui=r["cui"],
            preferred_name=r["preferred_name"],
            strings=tuple(r["strings"]),
            source_vocabularies=frozenset(r["source_vocabularies"]),
        )
        for r in payload["records"]
    }
    sty: dict[str, list[SemanticTypeAssignment]] = defaultdict(list)
    for a in payload["semantic_types"]:
        sty[a["cui"]].append(SemanticTypeAssignment(a["cui"], a["tui"], a["semantic_type"]))
    relations = tuple(RelationRecord(c1, rel, c2) for c1, rel, c2 in payload["relations"])
    summary = CatalogSummary(**payload.get("summary", {}))
    return ConceptCatalog(
        records=records,
        semantic_types={
            cui: tuple(sorted(v, key=lambda a: (a.tui, a.semantic_type)))
            for cui, v in sorted(sty.items())
        },
        relations=relations,
        summary=summary,
    )
