"""Candidate filtering, best-CUI selection and the per-report CUI set.

Candidate lists come from the embedding front end as JSON lines, one report
per line:

    {"report_id": "r1", "mentions": [
        {"isolated_text": "effusion", "context_text": "pleural effusion",
         "kind": "observation", "assertion": "present", "span": [4, 4],
         "source": "merged",
         "isolated_candidates": [{"cui": "C0013687", "score": 0.97}, ...],
         "context_candidates": [{"cui": "C0032227", "score": 0.95}, ...]}]}

Semantic types are always resolved against the local catalog, never trusted
from the front end.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .errors import DataError
from .ingest import ConceptCatalog
from .reports import ASSERTION_RANK, Assertion, EntityKind, Mention, MentionSource

MAX_CANDIDATES = 128

# The four observation and five anatomy semantic types are a documented
# reconstruction: the source method names their counts but not the types.
DEFAULT_OBSERVATION_TYPES = frozenset(
    {
        "Disease or Syndrome",
        "Sign or Symptom",
        "Pathologic Function",
        "Finding",
    }
)
DEFAULT_ANATOMY_TYPES = frozenset(
    {
        "Body Part, Organ, or Organ Component",
        "Body Location or Region",
        "Body Space or Junction",
        "Tissue",
        "Body System",
    }
)


@dataclass(frozen=True)
class SemanticTypeConfig:
    observation_types: frozenset[str] = DEFAULT_OBSERVATION_TYPES
    anatomy_types: frozenset[str] = DEFAULT_ANATOMY_TYPES

    def allowlist(self, kind: EntityKind) -> frozenset[str]:
        if kind is EntityKind.OBSERVATION:
            return self.observation_types
        return self.anatomy_types


@dataclass(frozen=True)
class LinkCandidate:
    cui: str
    score: float
    semantic_types: frozenset[str] = frozenset()


@dataclass
class MentionCandidates:
    mention: Mention
    isolated_candidates: list[LinkCandidate]
    context_candidates: list[LinkCandidate]


@dataclass(frozen=True)
class LinkedConcept:
    """The winning CUI for one mention, plus both per-list heads which the
    labeler consumes as the (isolated, surface) pair."""

    cui: str
    assertion: Assertion
    kind: EntityKind
    score: float
    provenance: str  # "isolated" | "context"
    mention_ref: int
    semantic_types: tuple[str, ...] = ()
    isolated_cui: str | None = None
    isolated_score: float | None = None
    context_cui: str | None = None
    context_score: float | None = None


@dataclass(frozen=True)
class ConceptMeta:
    kind: EntityKind
    semantic_types: tuple[str, ...]
    score: float


@dataclass
class CuiSet:
    """A report as a set of (CUI, assertion) elements; the comparison unit."""

    report_id: str
    elements: dict[str, Assertion]
    concept_meta: dict[str, ConceptMeta] = field(default_factory=dict)
    mentions: tuple[LinkedConcept, ...] = ()

    def cuis(self) -> frozenset[str]:
        return frozenset(self.elements)

    def extended(self, added: dict[str, Assertion], donor: "CuiSet") -> "CuiSet":
        """Copy with extra elements, pulling concept metadata from ``donor``."""
        elements = dict(self.elements)
        meta = dict(self.concept_meta)
        for cui, assertion in added.items():
            elements[cui] = assertion
            if cui not in meta and cui in donor.concept_meta:
                meta[cui] = donor.concept_meta[cui]
        return CuiSet(
            report_id=self.report_id,
            elements=elements,
            concept_meta=meta,
            mentions=self.mentions,
        )


def _sort_candidates(candidates: Iterable[LinkCandidate]) -> list[LinkCandidate]:
    return sorted(candidates, key=lambda c: (-c.score, c.cui))


def filter_candidates(
    candidates: list[LinkCandidate],
    kind: EntityKind,
    type_config: SemanticTypeConfig = SemanticTypeConfig(),
) -> list[LinkCandidate]:
    """Keep candidates with at least one allow-listed semantic type for the
    mention's entity kind; order is preserved."""
    allowed = type_config.allowlist(kind)
    return [c for c in candidates if c.semantic_types & allowed]


def select_best(
    filtered_isolated: list[LinkCandidate],
    filtered_context: list[LinkCandidate],
    mention: Mention,
    mention_ref: int,
) -> LinkedConcept | None:
    """Pick the single highest-scoring candidate across both lists.

    Ties break toward the lexicographically smaller CUI, then toward the
    isolated list.  Returns None when both lists are empty after filtering.
    """
    iso_head = filtered_isolated[0] if filtered_isolated else None
    ctx_head = filtered_context[0] if filtered_context else None
    contenders = []
    if iso_head is not None:
        contenders.append((-iso_head.score, iso_head.cui, 0, iso_head, "isolated"))
    if ctx_head is not None:
        contenders.append((-ctx_head.score, ctx_head.cui, 1, ctx_head, "context"))
    if not contenders:
        return None
    contenders.sort(key=lambda t: t[:3])
    _, _, _, winner, provenance = contenders[0]
    return LinkedConcept(
        cui=winner.cui,
        assertion=mention.assertion,
        kind=mention.kind,
        score=winner.score,
        provenance=provenance,
        mention_ref=mention_ref,
        semantic_types=tuple(sorted(winner.semantic_types)),
        isolated_cui=iso_head.cui if iso_head else None,
        isolated_score=iso_head.score if iso_head else None,
        context_cui=ctx_head.cui if ctx_head else None,
        context_score=ctx_head.score if ctx_head else None,
    )


def report_to_cui_set(
    mentions_with_links: Iterable[LinkedConcept], report_id: str
) -> CuiSet:
    """Deduplicate linked concepts into a CuiSet; a positive finding anywhere
    in the report dominates colliding assertions."""
    linked = tuple(mentions_with_links)
    elements: dict[str, Assertion] = {}
    meta: dict[str, ConceptMeta] = {}
    for lc in linked:
        prev = elements.get(lc.cui)
        if prev is None or ASSERTION_RANK[lc.assertion] > ASSERTION_RANK[prev]:
            elements[lc.cui] = lc.assertion
        if lc.cui not in meta or lc.score > meta[lc.cui].score:
            meta[lc.cui] = ConceptMeta(
                kind=lc.kind, semantic_types=lc.semantic_types, score=lc.score
            )
    return CuiSet(
        report_id=report_id, elements=elements, concept_meta=meta, mentions=linked
    )


@dataclass
class LinkStats:
    mentions: int = 0
    linked: int = 0
    unlinked: int = 0


def link_report(
    report_id: str,
    mention_candidates: list[MentionCandidates],
    type_config: SemanticTypeConfig = SemanticTypeConfig(),
    stats: LinkStats | None = None,
) -> CuiSet:
    """Filter, select and assemble one report's CuiSet.

    Mentions whose candidate lists empty out after filtering are dropped and
    counted, never fatal.
    """
    stats = stats if stats is not None else LinkStats()
    linked: list[LinkedConcept] = []
    for ref, mc in enumerate(mention_candidates):
        stats.mentions += 1
        iso = filter_candidates(_sort_candidates(mc.isolated_candidates), mc.mention.kind, type_config)
        ctx = filter_candidates(_sort_candidates(mc.context_candidates), mc.mention.kind, type_config)
        choice = select_best(iso, ctx, mc.mention, ref)
        if choice is None:
            stats.unlinked += 1
            continue
        stats.linked += 1
        linked.append(choice)
    return report_to_cui_set(linked, report_id)


def _resolve(raw_candidates: list[dict], catalog: ConceptCatalog, where: str) -> list[LinkCandidate]:
    out = []
    for c in raw_candidates[:MAX_CANDIDATES]:
        score = float(c["score"])
        if not -1.0 <= score <= 1.0:
            raise DataError(f"{where}: candidate score {score} outside [-1, 1]")
        cui = str(c["cui"])
        out.append(
            LinkCandidate(
                cui=cui,
                score=score,
                semantic_types=frozenset(catalog.semantic_type_names(cui)),
            )
        )
    return _sort_candidates(out)


def parse_candidate_record(
    raw: dict, catalog: ConceptCatalog
) -> tuple[str, list[MentionCandidates]]:
    report_id = str(raw.get("report_id", ""))
    if not report_id:
        raise DataError("candidate record without report_id")
    mentions = []
    for i, m in enumerate(raw.get("mentions", [])):
        where = f"report {report_id} mention {i}"
        mention = Mention(
            isolated_text=str(m["isolated_text"]),
            context_text=str(m.get("context_text", m["isolated_text"])),
            kind=EntityKind(m["kind"]),
            assertion=Assertion(m["assertion"]),
            source=MentionSource(m.get("source", "merged")),
            span=tuple(m.get("span", (0, 0))),
        )
        mentions.append(
            MentionCandidates(
                mention=mention,
                isolated_candidates=_resolve(m.get("isolated_candidates", []), catalog, where),
                context_candidates=_resolve(m.get("context_candidates", []), catalog, where),
            )
        )
    return report_id, mentions


def read_candidate_file(
    path: str | Path, catalog: ConceptCatalog
) -> list[tuple[str, list[MentionCandidates]]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(parse_candidate_record(json.loads(line), catalog))
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
    return out


def cui_set_to_dict(cs: CuiSet) -> dict:
    return {
        "report_id": cs.report_id,
        "elements": [[cui, cs.elements[cui].value] for cui in sorted(cs.elements)],
        "concept_meta": {
            cui: {
                "kind": m.kind.value,
                "semantic_types": list(m.semantic_types),
                "score": m.score,
            }
            for cui, m in sorted(cs.concept_meta.items())
        },
        "mentions": [
            {
                "mention_ref": lc.mention_ref,
                "cui": lc.cui,
                "assertion": lc.assertion.value,
                "kind": lc.kind.value,
                "score": lc.score,
                "provenance": lc.provenance,
                "semantic_types": list(lc.semantic_types),
                "isolated_cui": lc.isolated_cui,
                "isolated_score": lc.isolated_score,
                "context_cui": lc.context_cui,
                "context_score": lc.context_score,
            }
            for lc in cs.mentions
        ],
    }


def cui_set_from_dict(raw: dict) -> CuiSet:
    elements: dict[str, Assertion] = {}
    for cui, a in raw.get("elements", []):
        assertion = Assertion(a)
        prev = elements.get(cui)
        # Foreign files may repeat a CUI; apply the collision rule.
        if prev is None or ASSERTION_RANK[assertion] > ASSERTION_RANK[prev]:
            elements[cui] = assertion
    meta = {
        cui: ConceptMeta(
            kind=EntityKind(m["kind"]),
            semantic_types=tuple(m.get("semantic_types", ())),
            score=float(m.get("score", 0.0)),
        )
        for cui, m in raw.get("concept_meta", {}).items()
    }
    mentions = tuple(
        LinkedConcept(
            cui=m["cui"],
            assertion=Assertion(m["assertion"]),
            kind=EntityKind(m["kind"]),
            score=float(m["score"]),
            provenance=m.get("provenance", "isolated"),
            mention_ref=int(m.get("mention_ref", i)),
            semantic_types=tuple(m.get("semantic_types", ())),
            isolated_cui=m.get("isolated_cui"),
            isolated_score=m.get("isolated_score"),
            context_cui=m.get("context_cui"),
            context_score=m.get("context_score"),
        )
        for i, m in enumerate(raw.get("mentions", []))
    )
    report_id = str(raw.get("report_id", ""))
    if not report_id:
        raise DataError("CuiSet record without report_id")
    return CuiSet(report_id=report_id, elements=elements, concept_meta=meta, mentions=mentions)


def write_cui_sets(path: str | Path, cui_sets: Iterable[CuiSet]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for cs in cui_sets:
            fh.write(json.dumps(cui_set_to_dict(cs), ensure_ascii=False))
            fh.write("\n")


def read_cui_sets(path: str | Path, strict: bool = True) -> tuple[list[CuiSet], int]:
    """Read a CuiSet JSON-lines file; returns (sets, skipped_lines).

    In strict mode a malformed line is fatal; otherwise it is skipped and
    counted.
    """
    out: list[CuiSet] = []
    skipped = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(cui_set_from_dict(json.loads(line)))
            except (json.JSONDecodeError, DataError, KeyError, ValueError) as exc:
                if strict:
                    raise DataError(f"{path}:{lineno}: malformed CuiSet line: {exc}") from exc
                skipped += 1
    return out, skipped


def read_cui_set(path: str | Path) -> CuiSet:
    """Read a single CuiSet from a JSON object file (or one-line JSONL)."""
    text = Path(path).read_text(encoding="utf-8").strip()
    try:
        return cui_set_from_dict(json.loads(text.splitlines()[0] if "\n" in text else text))
    except (json.JSONDecodeError, IndexError) as exc:
        raise DataError(f"{path}: not a CuiSet JSON file: {exc}") from exc


def assertion_histogram(cui_sets: Iterable[CuiSet]) -> Counter:
    counter: Counter = Counter()
    for cs in cui_sets:
        counter.update(a.value for a in cs.elements.values())
    return counter
