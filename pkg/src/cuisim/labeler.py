"""Ontology-backed disease labeling.

Phase 1 maps each linked mention to at most one label by matching its
surface (context) and isolated CUIs against the label vocabulary, falling
back to parent CUIs, and marks labels 1 / 0 / -1 from the mention
assertions.  Phase 2 arbitrates between the old and new label sets with an
asymmetric containment index over the report's CUIs.
"""

from __future__ import annotations

import csv
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Collection, Iterable

from .errors import ConfigError, DataError
from .ingest import ConceptCatalog
from .linking import CuiSet
from .reports import Assertion

# CheXpert-style class names; override via configuration.
DEFAULT_LABELS = (
    "No Finding",
    "Atelectasis",
    "Cardiomegaly",
    "Consolidation",
    "Edema",
    "Pleural Effusion",
    "Pneumonia",
    "Pneumothorax",
)

UNMENTIONED = None  # CSV blank

_ASSERTION_VALUE = {Assertion.PRESENT: 1, Assertion.ABSENT: 0, Assertion.UNCERTAIN: -1}
# A positive mark beats uncertainty beats an explicit negative.
_VALUE_RANK = {1: 2, -1: 1, 0: 0}

_PUNCT_RE = re.compile(r"[^0-9a-z]+")

CANDIDATE_ORDER = ("intersection", "old", "new", "union")


def normalize_label_text(text: str) -> str:
    return " ".join(_PUNCT_RE.sub(" ", text.casefold()).split())


@dataclass(frozen=True)
class LabelVocabulary:
    labels: tuple[str, ...]
    label_cuis: dict[str, frozenset[str]]

    def cuis_for(self, labels: Iterable[str]) -> frozenset[str]:
        out: set[str] = set()
        for label in labels:
            out |= self.label_cuis[label]
        return frozenset(out)


@dataclass
class LabelAssignment:
    report_id: str
    values: dict[str, int | None]
    attributions: tuple[tuple[int, str], ...] = ()  # (mention_ref, label)


@dataclass(frozen=True)
class CandidateScore:
    labels: frozenset[str]
    score: float


@dataclass
class LabelComparison:
    candidates: dict[str, CandidateScore]
    selected: str
    degenerate: bool = False


def build_label_vocabulary(
    label_names: Iterable[str],
    catalog: ConceptCatalog,
    overrides: dict[str, Collection[str]] | None = None,
) -> LabelVocabulary:
    """Match label names against catalog concept strings.

    Comparison is case-folded, punctuation-stripped and whitespace-collapsed.
    Explicit per-label CUI overrides replace matching entirely; a label with
    no matches and no override is a configuration error.
    """
    overrides = overrides or {}
    by_norm: dict[str, set[str]] = {}
    for cui, record in catalog.records.items():
        for s in record.strings:
            by_norm.setdefault(normalize_label_text(s), set()).add(cui)

    labels = tuple(label_names)
    label_cuis: dict[str, frozenset[str]] = {}
    for label in labels:
        if label in overrides:
            cuis = frozenset(overrides[label])
        else:
            cuis = frozenset(by_norm.get(normalize_label_text(label), set()))
        if not cuis:
            raise ConfigError(
                f"label {label!r} matches no catalog concept and has no override"
            )
        label_cuis[label] = cuis
    return LabelVocabulary(labels=labels, label_cuis=label_cuis)


def _label_matches(cui: str | None, score: float | None, vocab: LabelVocabulary):
    if cui is None or score is None:
        return
    for label, cuis in vocab.label_cuis.items():
        if cui in cuis:
            yield label, score, cui


def _parent_matches(
    cui: str | None,
    score: float | None,
    vocab: LabelVocabulary,
    catalog: ConceptCatalog,
    depth: int,
):
    if cui is None or score is None or depth < 1:
        return
    frontier = [cui]
    seen = {cui}
    for _ in range(depth):
        parents: list[str] = []
        for c in frontier:
            parents.extend(p for p in catalog.parents(c) if p not in seen)
        if not parents:
            return
        for p in parents:
            seen.add(p)
            yield from _label_matches(p, score, vocab)
        frontier = parents


def phase1_label(
    report: CuiSet,
    vocab: LabelVocabulary,
    catalog: ConceptCatalog,
    fallback_depth: int = 1,
) -> LabelAssignment:
    """Preliminary labels from the report's linked mentions.

    Each mention contributes at most one label: among the matches reached by
    its context and isolated CUIs (after the one-step parent fallback), only
    the one reached via the higher linking score is kept.  Conflicting marks
    across mentions resolve 1 > -1 > 0; untouched labels stay unmentioned.
    """
    values: dict[str, int | None] = {label: UNMENTIONED for label in vocab.labels}
    attributions: list[tuple[int, str]] = []
    for lc in report.mentions:
        pairs = [(lc.context_cui, lc.context_score), (lc.isolated_cui, lc.isolated_score)]
        matches = []
        for cui, score in pairs:
            matches.extend(_label_matches(cui, score, vocab))
        if not matches:
            for cui, score in pairs:
                matches.extend(_parent_matches(cui, score, vocab, catalog, fallback_depth))
        if not matches:
            continue
        # Best score wins; ties break on the via-CUI, then the label name.
        matches.sort(key=lambda m: (-m[1], m[2], m[0]))
        label = matches[0][0]
        attributions.append((lc.mention_ref, label))
        value = _ASSERTION_VALUE[lc.assertion]
        prev = values[label]
        if prev is UNMENTIONED or _VALUE_RANK[value] > _VALUE_RANK[prev]:
            values[label] = value
    return LabelAssignment(
        report_id=report.report_id, values=values, attributions=tuple(attributions)
    )


def _report_cuis(report: CuiSet | Collection[str]) -> frozenset[str]:
    if isinstance(report, CuiSet):
        return report.cuis()
    return frozenset(report)


def containment_index(report: CuiSet | Collection[str], label_cuis: Collection[str]) -> float:
    """|R ∩ L| / |R| over CUIs, assertion-insensitive; 0.0 for an empty R."""
    r = _report_cuis(report)
    if not r:
        return 0.0
    return len(r & frozenset(label_cuis)) / len(r)


def jaccard_cuis(report: CuiSet | Collection[str], label_cuis: Collection[str]) -> float:
    """|R ∩ L| / |R ∪ L| over CUIs; the phase-2 ablation measure."""
    r = _report_cuis(report)
    l = frozenset(label_cuis)
    union = r | l
    if not union:
        return 0.0
    return len(r & l) / len(union)


def positive_labels(assignment: LabelAssignment) -> frozenset[str]:
    return frozenset(label for label, v in assignment.values.items() if v == 1)


def phase2_select(
    report: CuiSet,
    old_labels: LabelAssignment,
    new_labels: LabelAssignment,
    vocab: LabelVocabulary,
    measure: str = "containment",
) -> LabelComparison:
    """Choose among old, new, intersection and union positive-label sets.

    Candidates are scored by containment (or Jaccard) of the report CUIs in
    the candidate's CUI expansion; ties resolve toward the most conservative
    candidate: intersection > old > new > union.
    """
    if measure == "containment":
        score_fn = containment_index
    elif measure == "jaccard":
        score_fn = jaccard_cuis
    else:
        raise ConfigError(f"unknown phase-2 measure {measure!r}")
    old_pos = positive_labels(old_labels)
    new_pos = positive_labels(new_labels)
    sets = {
        "intersection": old_pos & new_pos,
        "old": old_pos,
        "new": new_pos,
        "union": old_pos | new_pos,
    }
    candidates = {
        name: CandidateScore(labels=frozenset(labels), score=score_fn(report, vocab.cuis_for(labels)))
        for name, labels in sets.items()
    }
    selected = CANDIDATE_ORDER[0]
    for name in CANDIDATE_ORDER[1:]:
        if candidates[name].score > candidates[selected].score:
            selected = name
    return LabelComparison(
        candidates=candidates,
        selected=selected,
        degenerate=not report.elements,
    )


def _final_values(
    vocab: LabelVocabulary,
    winning: frozenset[str],
    new_labels: LabelAssignment,
) -> dict[str, int | None]:
    """Winning set members become positive; other labels keep their phase-1
    negative/uncertain marks (phase 2 only arbitrates positives)."""
    out: dict[str, int | None] = {}
    for label in vocab.labels:
        if label in winning:
            out[label] = 1
        elif new_labels.values.get(label) in (0, -1):
            out[label] = new_labels.values[label]
        else:
            out[label] = UNMENTIONED
    return out


@dataclass
class LabeledReport:
    report_id: str
    phase1: LabelAssignment
    final: LabelAssignment
    comparison: LabelComparison | None = None
    missing_old: bool = False


@dataclass
class LabelRunStats:
    reports: int = 0
    compared: int = 0
    missing_old: int = 0
    changed_vs_old: Counter = field(default_factory=Counter)


def label_dataset(
    cui_sets: Iterable[CuiSet],
    old_labels: dict[str, LabelAssignment] | None,
    vocab: LabelVocabulary,
    catalog: ConceptCatalog,
    measure: str = "containment",
    fallback_depth: int = 1,
    strict: bool = False,
) -> tuple[list[LabeledReport], LabelRunStats]:
    """Run phase 1 then phase 2 per report, preserving input order.

    With no old-labels file the output is the phase-1 assignment (the
    no-retrieval mode); a report missing from the old labels falls back to
    phase 1 and is flagged, unless strict mode aborts.
    """
    out: list[LabeledReport] = []
    stats = LabelRunStats()
    for cs in cui_sets:
        stats.reports += 1
        phase1 = phase1_label(cs, vocab, catalog, fallback_depth=fallback_depth)
        old = old_labels.get(cs.report_id) if old_labels is not None else None
        if old_labels is not None and old is None:
            if strict:
                raise DataError(f"report {cs.report_id!r} missing from old labels")
            stats.missing_old += 1
            out.append(
                LabeledReport(
                    report_id=cs.report_id,
                    phase1=phase1,
                    final=LabelAssignment(cs.report_id, dict(phase1.values), phase1.attributions),
                    missing_old=True,
                )
            )
            continue
        if old is None:
            final = LabelAssignment(cs.report_id, dict(phase1.values), phase1.attributions)
            out.append(LabeledReport(report_id=cs.report_id, phase1=phase1, final=final))
            continue
        comparison = phase2_select(cs, old, phase1, vocab, measure=measure)
        stats.compared += 1
        winning = comparison.candidates[comparison.selected].labels
        final = LabelAssignment(cs.report_id, _final_values(vocab, winning, phase1))
        for label in vocab.labels:
            if final.values[label] != old.values.get(label, UNMENTIONED):
                stats.changed_vs_old[label] += 1
        out.append(
            LabeledReport(
                report_id=cs.report_id, phase1=phase1, final=final, comparison=comparison
            )
        )
    return out, stats


def _parse_label_value(raw: str, where: str) -> int | None:
    raw = raw.strip()
    if raw == "":
        return UNMENTIONED
    try:
        value = float(raw)
    except ValueError as exc:
        raise DataError(f"{where}: invalid label value {raw!r}") from exc
    if value not in (1.0, 0.0, -1.0):
        raise DataError(f"{where}: label value {raw!r} outside {{1.0, 0.0, -1.0, blank}}")
    return int(value)


def read_labels_csv(path: str | Path, labels: tuple[str, ...]) -> dict[str, LabelAssignment]:
    """CheXpert-style CSV: first column is the report id, one column per
    label, values in {1.0, 0.0, -1.0, blank}."""
    out: dict[str, LabelAssignment] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration as exc:
            raise DataError(f"{path}: empty labels file") from exc
        missing = [label for label in labels if label not in header[1:]]
        if missing:
            raise DataError(f"{path}: label columns missing from header: {missing}")
        col_of = {name: i for i, name in enumerate(header)}
        for lineno, row in enumerate(reader, 2):
            if not row or not row[0].strip():
                continue
            rid = row[0].strip()
            values = {
                label: _parse_label_value(row[col_of[label]], f"{path}:{lineno}")
                for label in labels
            }
            if rid in out:
                raise DataError(f"{path}:{lineno}: duplicate report id {rid!r}")
            out[rid] = LabelAssignment(report_id=rid, values=values)
    return out


def write_labels_csv(path: str | Path, labeled: Iterable[LabeledReport], labels: tuple[str, ...]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["report_id", *labels])
        for item in labeled:
            row = [item.report_id]
            for label in labels:
                v = item.final.values.get(label, UNMENTIONED)
                row.append("" if v is UNMENTIONED else f"{float(v):.1f}")
            writer.writerow(row)


def write_label_audit(path: str | Path, labeled: Iterable[LabeledReport]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for item in labeled:
            record = {
                "report_id": item.report_id,
                "phase1": item.phase1.values,
                "attributions": list(item.phase1.attributions),
                "final": item.final.values,
                "missing_old": item.missing_old,
            }
            if item.comparison is not None:
                record["comparison"] = {
                    "selected": item.comparison.selected,
                    "degenerate": item.comparison.degenerate,
                    "candidates": {
                        name: {"labels": sorted(c.labels), "score": c.score}
                        for name, c in item.comparison.candidates.items()
                    },
                }
            fh.write(json.dumps(record, ensure_ascii=False))
            fh.write("\n")
