"""Candidate filtering, best-CUI selection and CuiSet assembly."""

from __future__ import annotations

import pytest

from cuisim.linking import (
    CuiSet,
    LinkCandidate,
    LinkStats,
    MentionCandidates,
    cui_set_from_dict,
    cui_set_to_dict,
    filter_candidates,
    link_report,
    read_cui_sets,
    report_to_cui_set,
    select_best,
    write_cui_sets,
)
from cuisim.reports import Assertion, EntityKind, Mention, MentionSource

OBS = EntityKind.OBSERVATION
ANAT = EntityKind.ANATOMY

DOS = frozenset({"Disease or Syndrome"})
FINDING = frozenset({"Finding"})
BODY = frozenset({"Body Part, Organ, or Organ Component"})
DRUG = frozenset({"Pharmacologic Substance"})


def mention(text, kind=OBS, assertion="present", span=(0, 0)):
    return Mention(
        isolated_text=text,
        context_text=text,
        kind=kind,
        assertion=Assertion(assertion),
        source=MentionSource.MERGED,
        span=span,
    )


def cand(cui, score, types=DOS):
    return LinkCandidate(cui=cui, score=score, semantic_types=types)


class TestFilterCandidates:
    def test_allowlisted_type_kept(self):
        kept = filter_candidates([cand("C0000001", 0.9, DOS)], OBS)
        assert len(kept) == 1

    def test_disallowed_type_dropped(self):
        assert filter_candidates([cand("C0000001", 0.9, DRUG)], OBS) == []

    def test_empty_input(self):
        assert filter_candidates([], OBS) == []

    def test_order_preserving_subsequence(self):
        candidates = [
            cand("C0000001", 0.9, DOS),
            cand("C0000002", 0.8, DRUG),
            cand("C0000003", 0.7, FINDING),
            cand("C0000004", 0.6, BODY),
        ]
        kept = filter_candidates(candidates, OBS)
        assert [c.cui for c in kept] == ["C0000001", "C0000003"]
        # Subsequence of the input ordering.
        it = iter(candidates)
        assert all(any(c == x for x in it) for c in kept)

    def test_anatomy_allowlist(self):
        kept = filter_candidates([cand("C0000009", 0.8, BODY)], ANAT)
        assert len(kept) == 1
        assert filter_candidates([cand("C0000001", 0.9, DOS)], ANAT) == []


class TestSelectBest:
    def test_isolated_wins_on_score(self):
        m = mention("pneumonia")
        choice = select_best([cand("C0000001", 0.91)], [cand("C0000002", 0.88)], m, 0)
        assert choice.cui == "C0000001"
        assert choice.provenance == "isolated"
        assert choice.isolated_cui == "C0000001" and choice.context_cui == "C0000002"

    def test_tie_breaks_to_smaller_cui(self):
        m = mention("pneumonia")
        choice = select_best([cand("C0000009", 0.90)], [cand("C0000002", 0.90)], m, 0)
        assert choice.cui == "C0000002"
        assert choice.provenance == "context"

    def test_both_empty_returns_none(self):
        assert select_best([], [], mention("x"), 0) is None

    def test_permutation_of_equal_scores_is_canonical(self):
        m = mention("edema")
        a = [cand("C0000008", 0.9), cand("C0000014", 0.9)]
        for ordering in (a, list(reversed(a))):
            ordered = sorted(ordering, key=lambda c: (-c.score, c.cui))
            choice = select_best(ordered, [], m, 0)
            assert choice.cui == "C0000008"


class TestReportToCuiSet:
    def _lc(self, cui, assertion, score=0.9):
        m = mention("x", assertion=assertion)
        return select_best([cand(cui, score)], [], m, 0)

    def test_same_cui_same_assertion_dedupes(self):
        cs = report_to_cui_set([self._lc("C0000001", "present"), self._lc("C0000001", "present")], "r")
        assert len(cs.elements) == 1

    def test_present_beats_absent(self):
        cs = report_to_cui_set([self._lc("C0000001", "absent"), self._lc("C0000001", "present")], "r")
        assert cs.elements["C0000001"] is Assertion.PRESENT

    def test_present_beats_uncertain_beats_absent(self):
        cs = report_to_cui_set([self._lc("C1", "uncertain"), self._lc("C1", "absent")], "r")
        assert cs.elements["C1"] is Assertion.UNCERTAIN

    def test_empty_links_valid(self):
        cs = report_to_cui_set([], "r")
        assert cs.elements == {}

    def test_meta_keeps_best_score(self):
        cs = report_to_cui_set([self._lc("C1", "present", 0.5), self._lc("C1", "present", 0.8)], "r")
        assert cs.concept_meta["C1"].score == 0.8

    def test_size_bound(self):
        links = [self._lc(f"C{i % 3}", "present") for i in range(10)]
        cs = report_to_cui_set(links, "r")
        assert len(cs.elements) <= len(links)


# -- 20-mention end-to-end fixture ------------------------------------------
# Hand-annotated mentions with hand-picked candidate lists; linking must
# reproduce the hand-assigned CUI column exactly.
# (text, kind, assertion, isolated candidates, context candidates, expected)
END_TO_END = [
    ("pneumonia", OBS, "present", [("C0000001", 0.97, DOS)], [], "C0000001"),
    ("pneumothorax", OBS, "absent", [("C0000003", 0.95, DOS)], [("C0000003", 0.91, DOS)], "C0000003"),
    ("effusion", OBS, "present", [("C0000004", 0.85, DOS)], [("C0000004", 0.93, DOS)], "C0000004"),
    ("atelectasis", OBS, "uncertain", [("C0000005", 0.92, DOS)], [], "C0000005"),
    ("cardiomegaly", OBS, "present", [("C0000006", 0.94, FINDING | DOS)], [], "C0000006"),
    ("consolidation", OBS, "absent",
     [("C0000007", 0.90, frozenset({"Pathologic Function"}))], [], "C0000007"),
    ("edema", OBS, "present",
     [("C0000008", 0.89, frozenset({"Pathologic Function"})), ("C0000014", 0.88, DOS)], [], "C0000008"),
    ("pulmonary edema", OBS, "present",
     [("C0000008", 0.80, frozenset({"Pathologic Function"}))], [("C0000014", 0.96, DOS)], "C0000014"),
    ("lung", ANAT, "present", [("C0000009", 0.99, BODY)], [], "C0000009"),
    ("heart", ANAT, "present", [("C0000010", 0.98, BODY)], [], "C0000010"),
    ("pleura", ANAT, "absent", [("C0000011", 0.88, frozenset({"Tissue"}))], [], "C0000011"),
    ("left lower lobe", ANAT, "present",
     [("C0000012", 0.91, frozenset({"Body Location or Region"}))], [], "C0000012"),
    ("opacity", OBS, "present",
     [("C0000015", 0.87, FINDING), ("C0000016", 0.86, FINDING)], [], "C0000015"),
    ("airspace opacity", OBS, "uncertain",
     [("C0000016", 0.84, FINDING)], [("C0000015", 0.84, FINDING)], "C0000015"),  # tie -> smaller CUI
    ("bacterial pneumonia", OBS, "present",
     [("C0000018", 0.93, DOS)], [("C0000001", 0.90, DOS)], "C0000018"),
    ("infectious pneumonia", OBS, "present",
     [("C0000002", 0.92, DOS)], [("C0000002", 0.95, DOS)], "C0000002"),
    ("normal chest", OBS, "present", [("C0000013", 0.81, FINDING)], [], "C0000013"),
    # Anatomy mention whose observation-typed candidate must be filtered out.
    ("chest wall", ANAT, "present",
     [("C0000001", 0.95, DOS), ("C0000017", 0.82, frozenset({"Body Location or Region"}))],
     [], "C0000017"),
    # Observation mention with only drug-typed candidates: unlinked.
    ("contrast agent", OBS, "present", [("C0000099", 0.90, DRUG)], [], None),
    # Filtering applies before the cross-list max: the lower in-type context
    # candidate beats the higher off-type isolated one.
    ("enlarged heart", OBS, "present",
     [("C0000010", 0.96, BODY)], [("C0000006", 0.83, FINDING | DOS)], "C0000006"),
]


class TestEndToEndFixture:
    def _mention_candidates(self):
        out = []
        for i, (text, kind, assertion, iso, ctx, _) in enumerate(END_TO_END):
            out.append(
                MentionCandidates(
                    mention=mention(text, kind, assertion, span=(i, i)),
                    isolated_candidates=[cand(c, s, t) for c, s, t in iso],
                    context_candidates=[cand(c, s, t) for c, s, t in ctx],
                )
            )
        return out

    def test_reproduces_hand_assigned_cuis(self):
        stats = LinkStats()
        cs = link_report("fixture", self._mention_candidates(), stats=stats)
        expected_by_ref = {i: row[5] for i, row in enumerate(END_TO_END)}
        got_by_ref = {lc.mention_ref: lc.cui for lc in cs.mentions}
        for ref, expected in expected_by_ref.items():
            if expected is None:
                assert ref not in got_by_ref
            else:
                assert got_by_ref.get(ref) == expected, END_TO_END[ref][0]
        assert stats.mentions == 20
        assert stats.unlinked == 1
        assert stats.linked == 19

    def test_assertions_carried(self):
        cs = link_report("fixture", self._mention_candidates())
        assert cs.elements["C0000003"] is Assertion.ABSENT
        assert cs.elements["C0000005"] is Assertion.UNCERTAIN
        assert cs.elements["C0000001"] is Assertion.PRESENT


class TestCuiSetSerialization:
    def test_round_trip(self, tmp_path):
        stats = LinkStats()
        mentions = [
            MentionCandidates(
                mention=mention("pneumonia"),
                isolated_candidates=[cand("C0000001", 0.9)],
                context_candidates=[cand("C0000002", 0.7)],
            )
        ]
        cs = link_report("r1", mentions, stats=stats)
        path = tmp_path / "sets.jsonl"
        write_cui_sets(path, [cs])
        loaded, skipped = read_cui_sets(path)
        assert skipped == 0
        assert loaded[0].report_id == cs.report_id
        assert loaded[0].elements == cs.elements
        assert loaded[0].concept_meta == cs.concept_meta
        assert loaded[0].mentions == cs.mentions

    def test_dict_round_trip_preserves_everything(self):
        cs = CuiSet(
            report_id="x",
            elements={"C0000001": Assertion.ABSENT},
            concept_meta={},
            mentions=(),
        )
        assert cui_set_from_dict(cui_set_to_dict(cs)).elements == cs.elements

    def test_lenient_skips_malformed_lines(self, tmp_path):
        path = tmp_path / "sets.jsonl"
        path.write_text('{"report_id": "ok", "elements": []}\nnot json\n')
        loaded, skipped = read_cui_sets(path, strict=False)
        assert len(loaded) == 1 and skipped == 1

    def test_strict_raises_on_malformed(self, tmp_path):
        from cuisim.errors import DataError

        path = tmp_path / "sets.jsonl"
        path.write_text("not json\n")
        with pytest.raises(DataError):
            read_cui_sets(path, strict=True)


def test_score_out_of_range_rejected(catalog):
    from cuisim.errors import DataError
    from cuisim.linking import parse_candidate_record

    raw = {
        "report_id": "r",
        "mentions": [
            {"isolated_text": "x", "kind": "observation", "assertion": "present",
             "isolated_candidates": [{"cui": "C0000001", "score": 1.5}],
             "context_candidates": []}
        ],
    }
    with pytest.raises(DataError):
        parse_candidate_record(raw, catalog)


def test_candidate_types_resolved_from_catalog(catalog):
    from cuisim.linking import parse_candidate_record

    raw = {
        "report_id": "r",
        "mentions": [
            {"isolated_text": "pneumonia", "kind": "observation", "assertion": "present",
             "isolated_candidates": [{"cui": "C0000001", "score": 0.9}],
             "context_candidates": [{"cui": "C0000009", "score": 0.8}]}
        ],
    }
    _, mcs = parse_candidate_record(raw, catalog)
    assert mcs[0].isolated_candidates[0].semantic_types == {"Disease or Syndrome"}
    assert mcs[0].context_candidates[0].semantic_types == {"Body Part, Organ, or Organ Component"}
