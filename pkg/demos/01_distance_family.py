#!/usr/bin/env python3
"""The distance family, step by step.

Three toy impressions — "lower left pneumothorax", "lower left pneumonia",
"upper right pneumothorax" — show how the preference vector makes the same
set representation serve different tasks: zero out anatomy types and the
shared disease dominates; zero out disease types and the shared location
dominates.
"""

from cuisim import DistanceConfig, PreferenceVector
from cuisim.linking import ConceptMeta, CuiSet
from cuisim.reports import Assertion, EntityKind
from cuisim.similarity import prototypical, symmetric_tversky, tversky, weighted_distance

DISEASE = "Disease or Syndrome"
LOCATION = "Body Location or Region"

CONCEPTS = {
    "C0032326": ("pneumothorax", DISEASE),
    "C0032285": ("pneumonia", DISEASE),
    "C1282910": ("lower", LOCATION),
    "C0443246": ("left", LOCATION),
    "C1282911": ("upper", LOCATION),
    "C0444532": ("right", LOCATION),
}


def report(report_id, cuis, negated=()):
    elements = {
        cui: Assertion.ABSENT if cui in negated else Assertion.PRESENT for cui in cuis
    }
    meta = {
        cui: ConceptMeta(
            kind=EntityKind.OBSERVATION,
            semantic_types=(CONCEPTS[cui][1],),
            score=1.0,
        )
        for cui in cuis
    }
    return CuiSet(report_id=report_id, elements=elements, concept_meta=meta)


def describe(cs):
    return "{" + ", ".join(CONCEPTS[c][0] for c in sorted(cs.elements)) + "}"


def main():
    r1 = report("r1", ["C0032326", "C1282910", "C0443246"])  # lower left pneumothorax
    r2 = report("r2", ["C0032285", "C1282910", "C0443246"])  # lower left pneumonia
    r3 = report("r3", ["C0032326", "C1282911", "C0444532"])  # upper right pneumothorax

    print("reports:")
    for r in (r1, r2, r3):
        print(f"  {r.report_id} = {describe(r)}")

    print("\nunweighted measures on (r1, r2):")
    print(f"  tversky(1, 1)  = {tversky(r1, r2, 1.0, 1.0):.4f}   (Jaccard)")
    print(f"  tversky(.5,.5) = {tversky(r1, r2, 0.5, 0.5):.4f}   (Dice)")
    print(f"  symmetric(0,1) = {symmetric_tversky(r1, r2):.4f}")
    print(f"  prototypical   = {prototypical(r1, r2):.4f}")

    print("\ntask 1: disease detection (anatomy/location weighted 0)")
    detection = DistanceConfig(preference=PreferenceVector(weights={LOCATION: 0}))
    for other in (r2, r3):
        score = weighted_distance(r1, other, detection).score
        print(f"  d(r1, {other.report_id}) = {score:.4f}")
    print("  -> r3 wins: it describes the same disease.")

    print("\ntask 2: disease localization (disease types weighted 0)")
    localization = DistanceConfig(preference=PreferenceVector(weights={DISEASE: 0}))
    for other in (r2, r3):
        score = weighted_distance(r1, other, localization).score
        print(f"  d(r1, {other.report_id}) = {score:.4f}")
    print("  -> r2 wins: it describes the same location.")

    print("\ncontradictions: r1 vs r1-with-pneumothorax-negated")
    r1_neg = report("r1n", ["C0032326", "C1282910", "C0443246"], negated=["C0032326"])
    breakdown = weighted_distance(r1, r1_neg, DistanceConfig())
    print(f"  score = {breakdown.score:.4f}")
    print(f"  contradicted = {sorted(breakdown.contradicted_cuis)}")
    print(f"  components   = inter {float(breakdown.intersection_weight)}, "
          f"max-diff {float(breakdown.max_difference_weight)}, "
          f"contr {float(breakdown.contradiction_weight)}")


if __name__ == "__main__":
    main()
