#!/usr/bin/env python3
"""Two-phase labeling: CUI-to-label matching with parent fallback, then
containment arbitration between the old and new label sets.

The report mentions "bacterial pneumonia" (not itself a label concept, so
its parent carries the match) and negates effusion; the old labels claim
effusion only. Phase 2 decides which set the report's CUIs support.
"""

import tempfile
from pathlib import Path

from cuisim import build_label_vocabulary, ingest_rrf, phase1_label, phase2_select
from cuisim.labeler import LabelAssignment
from cuisim.linking import LinkedConcept, report_to_cui_set
from cuisim.reports import Assertion, EntityKind

CONSO = """\
C0000001|ENG|P|L1|PF|S1|Y|A1||1||SNOMEDCT_US|PT|1|Pneumonia|0|N||
C0000002|ENG|P|L2|PF|S2|Y|A2||2||SNOMEDCT_US|PT|2|Bacterial pneumonia|0|N||
C0000003|ENG|P|L3|PF|S3|Y|A3||3||SNOMEDCT_US|PT|3|Pleural effusion|0|N||
"""
STY = """\
C0000001|T047|A1|Disease or Syndrome|AT1||
C0000002|T047|A1|Disease or Syndrome|AT2||
C0000003|T047|A1|Disease or Syndrome|AT3||
"""
REL = "C0000002|A2|CUI|PAR|C0000001|A1|CUI||R1||S|S||N|N||\n"

LABELS = ("Pneumonia", "Pleural Effusion")


def linked(ref, cui, score, assertion):
    return LinkedConcept(
        cui=cui, assertion=Assertion(assertion), kind=EntityKind.OBSERVATION,
        score=score, provenance="isolated", mention_ref=ref,
        isolated_cui=cui, isolated_score=score,
    )


def main():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        (tmp / "MRCONSO.RRF").write_text(CONSO)
        (tmp / "MRSTY.RRF").write_text(STY)
        (tmp / "MRREL.RRF").write_text(REL)
        catalog, _ = ingest_rrf(tmp / "MRCONSO.RRF", tmp / "MRSTY.RRF", tmp / "MRREL.RRF")

    vocab = build_label_vocabulary(LABELS, catalog)
    print("label vocabulary:")
    for label in LABELS:
        print(f"  {label:<17} -> {sorted(vocab.label_cuis[label])}")

    report = report_to_cui_set(
        [linked(0, "C0000002", 0.93, "present"),   # bacterial pneumonia
         linked(1, "C0000003", 0.90, "absent")],   # no effusion
        "demo",
    )
    print("\nreport CUIs:", {c: a.value for c, a in report.elements.items()})

    phase1 = phase1_label(report, vocab, catalog)
    print("\nphase 1 (parent fallback carries C0000002 -> C0000001):")
    print(" ", phase1.values)

    old = LabelAssignment("demo", {"Pneumonia": None, "Pleural Effusion": 1})
    comparison = phase2_select(report, old, phase1, vocab)
    print("\nphase 2 candidates (containment of report CUIs in each set):")
    for name in ("intersection", "old", "new", "union"):
        c = comparison.candidates[name]
        print(f"  {name:<13} labels={sorted(c.labels) or '{}'} score={c.score:.3f}")
    print(f"selected: {comparison.selected}")
    print("(the new set loses: phase 2 compares raw report CUIs, and the report"
          "\n holds the child concept, not the Pneumonia label CUI itself)")


if __name__ == "__main__":
    main()
