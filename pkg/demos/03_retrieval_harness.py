#!/usr/bin/env python3
"""The round-robin long-tail retrieval harness on a synthetic corpus.

Three disease classes, two queries each, a retrieval pool of sixty
reports: round r searches the r-th query of each class in class order,
accumulating per-class results without replacement.
"""

import random

from cuisim import DistanceConfig, HarnessPlan, run_harness
from cuisim.linking import ConceptMeta, CuiSet
from cuisim.reports import Assertion, EntityKind
from cuisim.retrieval import index_from_cui_sets

CLASS_ANCHOR = {
    "Pneumonia": "C0000001",
    "Edema": "C0000002",
    "Pneumothorax": "C0000003",
}
FILLER = [f"C00000{i:02d}" for i in range(4, 20)]


def synthetic_report(rng, report_id, anchor=None):
    cuis = set(rng.sample(FILLER, rng.randint(2, 5)))
    if anchor:
        cuis.add(anchor)
    elements = {c: Assertion(rng.choice(["present", "present", "absent"])) for c in sorted(cuis)}
    if anchor:
        elements[anchor] = Assertion.PRESENT
    meta = {
        c: ConceptMeta(kind=EntityKind.OBSERVATION, semantic_types=("Finding",), score=1.0)
        for c in elements
    }
    return CuiSet(report_id=report_id, elements=elements, concept_meta=meta)


def main():
    rng = random.Random(7)
    classes = list(CLASS_ANCHOR)

    reports, class_labels = [], {}
    queries, retrieval = [], []
    for cls in classes:
        for i in range(2):
            rid = f"q-{cls.lower()}-{i}"
            reports.append(synthetic_report(rng, rid, CLASS_ANCHOR[cls]))
            class_labels[rid] = cls
            queries.append(rid)
    for i in range(60):
        rid = f"pool-{i:02d}"
        anchor = CLASS_ANCHOR[classes[i % 3]] if i % 2 == 0 else None
        reports.append(synthetic_report(rng, rid, anchor))
        retrieval.append(rid)

    index = index_from_cui_sets(reports, class_labels=class_labels)
    plan = HarnessPlan(
        classes=tuple(classes),
        queries_per_class=2,
        balanced_ids=frozenset(queries),
        query_ids=frozenset(queries),
        retrieval_ids=frozenset(retrieval),
        per_class_budget=6,
    )
    print(f"plan: {len(classes)} classes x {plan.queries_per_class} queries, "
          f"budget {plan.budget()}/class, {plan.take_per_query()} per query")

    result = run_harness(plan, index, config=DistanceConfig(), per_query_k=30)
    print(f"searches issued: {result.searches_issued}")
    print(f"retrieved per class: {result.per_class_counts}")
    print("\nround class         query            -> retrieved       rank score")
    for row in result.rows:
        print(f"{row.round:>5} {row.class_name:<13} {row.query_id:<16} -> "
              f"{row.report_id:<15} {row.rank:>4} {row.score:.4f}")


if __name__ == "__main__":
    main()
