"""Report ranking and the round-robin long-tail retrieval harness."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .errors import DataError
from .graph import ConceptGraph, bfs_discover, discover_candidate_reports
from .linking import CuiSet, read_cui_sets
from .similarity import ComparisonBreakdown, DistanceConfig, score_pair

MANIFEST_COLUMNS = ("report_id", "class", "query_id", "round", "rank", "score")


@dataclass
class ReportIndex:
    """CuiSets by report id plus the inverted CUI -> report ids map."""

    reports: dict[str, CuiSet]
    inverted: dict[str, frozenset[str]]
    class_labels: dict[str, str] | None = None
    skipped_lines: int = 0

    def verify(self) -> None:
        """Check that ``inverted`` is exactly the transpose of ``reports``."""
        for cui, ids in self.inverted.items():
            for rid in ids:
                if cui not in self.reports[rid].elements:
                    raise DataError(f"inverted index lists {rid} under {cui} spuriously")
        for rid, cs in self.reports.items():
            for cui in cs.elements:
                if rid not in self.inverted.get(cui, frozenset()):
                    raise DataError(f"inverted index misses {rid} under {cui}")


def index_from_cui_sets(
    cui_sets: Iterable[CuiSet],
    class_labels: dict[str, str] | None = None,
    skipped_lines: int = 0,
) -> ReportIndex:
    reports: dict[str, CuiSet] = {}
    for cs in cui_sets:
        if cs.report_id in reports:
            raise DataError(f"duplicate report id {cs.report_id!r} in CuiSet input")
        reports[cs.report_id] = cs
    if not reports:
        raise DataError("refusing to build an empty report index")
    inverted_sets: dict[str, set[str]] = {}
    for rid, cs in reports.items():
        for cui in cs.elements:
            inverted_sets.setdefault(cui, set()).add(rid)
    index = ReportIndex(
        reports=reports,
        inverted={cui: frozenset(ids) for cui, ids in inverted_sets.items()},
        class_labels=class_labels,
        skipped_lines=skipped_lines,
    )
    index.verify()
    return index


def build_index(
    cui_set_file: str | Path,
    class_labels: dict[str, str] | None = None,
    strict: bool = True,
) -> ReportIndex:
    cui_sets, skipped = read_cui_sets(cui_set_file, strict=strict)
    return index_from_cui_sets(cui_sets, class_labels=class_labels, skipped_lines=skipped)


@dataclass(frozen=True)
class RankedEntry:
    report_id: str
    score: float
    breakdown: ComparisonBreakdown


@dataclass
class RankedResult:
    query_id: str
    entries: list[RankedEntry]


def search(
    query: CuiSet,
    index: ReportIndex,
    graph: ConceptGraph | None = None,
    config: DistanceConfig = DistanceConfig(),
    k: int = 10,
    discovery_depth: int | None = None,
    candidates: frozenset[str] | None = None,
    workers: int = 1,
) -> RankedResult:
    """Rank candidate reports against the query.

    ``discovery_depth=None`` disables BFS discovery and considers every
    report.  ``candidates`` further restricts the pool (the harness passes
    its retrieval set here).  Ties break on ascending report id, so results
    are deterministic and worker-count independent.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if discovery_depth is None:
        pool = frozenset(index.reports)
    else:
        if graph is None:
            raise DataError("discovery requires a concept graph")
        discovered = bfs_discover(graph, query.cuis(), discovery_depth)
        pool = discover_candidate_reports(discovered, index)
    if candidates is not None:
        pool &= candidates

    ordered = sorted(pool)

    def score_one(rid: str) -> RankedEntry:
        breakdown = score_pair(query, index.reports[rid], config, graph)
        return RankedEntry(report_id=rid, score=breakdown.score, breakdown=breakdown)

    if workers > 1 and len(ordered) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool_exec:
            entries = list(pool_exec.map(score_one, ordered))
    else:
        entries = [score_one(rid) for rid in ordered]

    entries.sort(key=lambda e: (-e.score, e.report_id))
    return RankedResult(query_id=query.report_id, entries=entries[:k])


@dataclass(frozen=True)
class HarnessPlan:
    """The balanced/query/retrieval split driving the round-robin run."""

    classes: tuple[str, ...]
    queries_per_class: int = 10
    balanced_ids: frozenset[str] = frozenset()
    query_ids: frozenset[str] = frozenset()
    retrieval_ids: frozenset[str] = frozenset()
    per_class_budget: int | None = None
    per_query_take: int | None = None

    def validate(self) -> None:
        if not self.classes:
            raise DataError("harness plan needs at least one class")
        if self.queries_per_class < 1:
            raise DataError("queries_per_class must be >= 1")
        if not self.query_ids <= self.balanced_ids:
            extra = sorted(self.query_ids - self.balanced_ids)[:5]
            raise DataError(f"query ids not contained in balanced set: {extra}")
        held_out = self.balanced_ids - self.query_ids
        if not held_out <= self.retrieval_ids:
            missing = sorted(held_out - self.retrieval_ids)[:5]
            raise DataError(
                f"(balanced - queries) must be contained in the retrieval set; missing {missing}"
            )

    def budget(self) -> int:
        """Per-class budget; defaults to a balanced-dataset-sized run split
        evenly over the classes (706 reference samples)."""
        if self.per_class_budget is not None:
            return self.per_class_budget
        return math.ceil(706 / len(self.classes))

    def take_per_query(self) -> int:
        if self.per_query_take is not None:
            return self.per_query_take
        return math.ceil(self.budget() / self.queries_per_class)


@dataclass(frozen=True)
class ManifestRow:
    report_id: str
    class_name: str
    query_id: str
    round: int
    rank: int
    score: float
    breakdown: ComparisonBreakdown


@dataclass
class HarnessResult:
    rows: list[ManifestRow]
    searches_issued: int
    per_class_counts: dict[str, int]
    query_order: list[tuple[int, str, str]] = field(default_factory=list)  # (round, class, qid)


def _class_queries(plan: HarnessPlan, index: ReportIndex) -> dict[str, list[str]]:
    if index.class_labels is None:
        raise DataError("harness requires class labels on the report index")
    grouped: dict[str, list[str]] = {cls: [] for cls in plan.classes}
    for qid in sorted(plan.query_ids):
        cls = index.class_labels.get(qid)
        if cls is None:
            raise DataError(f"query report {qid!r} has no class label")
        if cls not in grouped:
            raise DataError(f"query report {qid!r} labeled with unplanned class {cls!r}")
        grouped[cls].append(qid)
    return {cls: qids[: plan.queries_per_class] for cls, qids in grouped.items()}


def run_harness(
    plan: HarnessPlan,
    index: ReportIndex,
    graph: ConceptGraph | None = None,
    config: DistanceConfig = DistanceConfig(),
    per_query_k: int | None = None,
    discovery_depth: int | None = None,
    workers: int = 1,
) -> HarnessResult:
    """Round-robin retrieval: round r issues the r-th query of each class in
    class order, accumulating results without replacement across the run.

    Each query contributes up to ``plan.take_per_query()`` previously unseen
    reports (capped by the remaining class budget); a duplicate is skipped
    and the next-ranked report takes its place.
    """
    plan.validate()
    queries = _class_queries(plan, index)
    budget = plan.budget()
    take_quota = plan.take_per_query()
    retrieved: set[str] = set()
    counts = {cls: 0 for cls in plan.classes}
    rows: list[ManifestRow] = []
    query_order: list[tuple[int, str, str]] = []
    searches = 0

    for round_ix in range(plan.queries_per_class):
        for cls in plan.classes:
            if counts[cls] >= budget:
                continue
            class_queries = queries[cls]
            if round_ix >= len(class_queries):
                continue
            qid = class_queries[round_ix]
            if qid not in index.reports:
                raise DataError(f"query report {qid!r} missing from the index")
            k = per_query_k if per_query_k is not None else len(plan.retrieval_ids)
            result = search(
                index.reports[qid],
                index,
                graph=graph,
                config=config,
                k=max(k, 1),
                discovery_depth=discovery_depth,
                candidates=plan.retrieval_ids,
                workers=workers,
            )
            searches += 1
            query_order.append((round_ix, cls, qid))
            take = min(take_quota, budget - counts[cls])
            for rank, entry in enumerate(result.entries, start=1):
                if take == 0:
                    break
                if entry.report_id in retrieved:
                    continue
                retrieved.add(entry.report_id)
                counts[cls] += 1
                take -= 1
                rows.append(
                    ManifestRow(
                        report_id=entry.report_id,
                        class_name=cls,
                        query_id=qid,
                        round=round_ix,
                        rank=rank,
                        score=entry.score,
                        breakdown=entry.breakdown,
                    )
                )
    return HarnessResult(
        rows=rows,
        searches_issued=searches,
        per_class_counts=counts,
        query_order=query_order,
    )


def write_manifest_csv(result: HarnessResult, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_COLUMNS)
        for row in result.rows:
            writer.writerow(
                [
                    row.report_id,
                    row.class_name,
                    row.query_id,
                    row.round,
                    row.rank,
                    repr(row.score),
                ]
            )


def write_manifest_jsonl(result: HarnessResult, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in result.rows:
            fh.write(
                json.dumps(
                    {
                        "report_id": row.report_id,
                        "class": row.class_name,
                        "query_id": row.query_id,
                        "round": row.round,
                        "rank": row.rank,
                        "score": row.score,
                        "breakdown": row.breakdown.as_dict(),
                    },
                    ensure_ascii=False,
                )
            )
            fh.write("\n")
