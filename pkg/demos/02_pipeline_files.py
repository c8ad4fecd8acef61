#!/usr/bin/env python3
"""The whole pipeline at the file level, inside a temp directory.

Builds a six-concept RRF release, ingests it, builds the graph, corrects a
RadGraph-style annotation ("No consolidations in the lung" — the model
leaves the anatomy positive), links hand-made candidates, and scores the
resulting CuiSets.
"""

import json
import tempfile
from pathlib import Path

from cuisim import build_graph, ingest_rrf, link_report, score_pair
from cuisim.linking import LinkCandidate, MentionCandidates
from cuisim.reports import apply_assertion_rules, merge_granularities, parse_annotation
from cuisim.similarity import DistanceConfig

CONSO = """\
C0000001|ENG|P|L1|PF|S1|Y|A1||1||SNOMEDCT_US|PT|1|Consolidation|0|N||
C0000002|ENG|P|L2|PF|S2|Y|A2||2||SNOMEDCT_US|PT|2|Lung|0|N||
C0000003|ENG|P|L3|PF|S3|Y|A3||3||SNOMEDCT_US|PT|3|Pneumonia|0|N||
C0000004|ENG|P|L4|PF|S4|Y|A4||4||SNOMEDCT_US|PT|4|Lung opacity|0|N||
"""
STY = """\
C0000001|T046|A1|Pathologic Function|AT1||
C0000002|T023|A1|Body Part, Organ, or Organ Component|AT2||
C0000003|T047|A1|Disease or Syndrome|AT3||
C0000004|T033|A1|Finding|AT4||
"""
REL = """\
C0000001|A1|CUI|SY|C0000004|A4|CUI||R1||S|S||N|N||
C0000003|A3|CUI|PAR|C0000001|A1|CUI||R2||S|S||N|N||
"""

ANNOTATION = {
    "report_id": "demo",
    "text": "No consolidations in the lung .",
    "entities": [
        {"tokens": "consolidations", "start_ix": 1, "end_ix": 1,
         "label": "OBS-DA", "relations": [["located_at", 1]]},
        {"tokens": "lung", "start_ix": 4, "end_ix": 4, "label": "ANAT-DP", "relations": []},
    ],
    "sentences": [
        {"sentence_ix": 0, "text": "No consolidations in the lung .",
         "entities": [
             {"tokens": "consolidations", "start_ix": 1, "end_ix": 1,
              "label": "OBS-DA", "relations": [["located_at", 1]]},
             {"tokens": "lung", "start_ix": 4, "end_ix": 4, "label": "ANAT-DP",
              "relations": []},
         ]},
    ],
}


def main():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        (tmp / "MRCONSO.RRF").write_text(CONSO)
        (tmp / "MRSTY.RRF").write_text(STY)
        (tmp / "MRREL.RRF").write_text(REL)

        catalog, counts = ingest_rrf(
            tmp / "MRCONSO.RRF", tmp / "MRSTY.RRF", tmp / "MRREL.RRF"
        )
        print(f"ingested {catalog.summary.records} concepts, "
              f"{catalog.summary.relations} relations")

        graph = build_graph(catalog)
        print(f"graph: {json.dumps(graph.stats())}")

        annotation = parse_annotation(ANNOTATION)
        print("\nraw assertions:", {e.tokens: e.assertion.value for e in annotation.report_level})
        corrected = apply_assertion_rules(annotation)
        print("corrected:     ", {e.tokens: e.assertion.value for e in corrected.report_level})

        mentions = merge_granularities(corrected)
        print("merged mentions:", [(m.isolated_text, m.assertion.value, m.source.value) for m in mentions])

        # Candidates would come from the embedding front end; hand-made here.
        by_text = {
            "consolidations": LinkCandidate("C0000001", 0.96, frozenset({"Pathologic Function"})),
            "lung": LinkCandidate("C0000002", 0.99, frozenset({"Body Part, Organ, or Organ Component"})),
        }
        candidates = [
            MentionCandidates(mention=m, isolated_candidates=[by_text[m.isolated_text]],
                              context_candidates=[])
            for m in mentions
        ]
        cui_set = link_report("demo", candidates)
        print("\nCuiSet:", {c: a.value for c, a in cui_set.elements.items()})

        # A second report asserting opacity present, via the synonym CUI.
        import dataclasses

        from cuisim.reports import Assertion

        positive_mention = dataclasses.replace(mentions[0], assertion=Assertion.PRESENT)
        other = link_report(
            "other",
            [MentionCandidates(
                mention=positive_mention,
                isolated_candidates=[LinkCandidate("C0000004", 0.9, frozenset({"Finding"}))],
                context_candidates=[],
            )],
        )
        breakdown = score_pair(cui_set, other, DistanceConfig(), graph)
        print("\nscore vs contradicting synonym report:", round(breakdown.score, 4))
        print("contradicted CUIs (via synonym expansion):", sorted(breakdown.contradicted_cuis))


if __name__ == "__main__":
    main()
