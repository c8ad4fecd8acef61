"""CLI subcommands: artifacts, exit codes, golden files, idempotency."""

from __future__ import annotations

import json
import os

import pytest

from cuisim.cli import build_parser, main

from conftest import DATA_DIR, RRF_DIR

RETRIEVAL_DIR = DATA_DIR / "retrieval"
LABELER_DIR = DATA_DIR / "labeler"


def run(argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def catalog_snapshot(tmp_path_factory):
    out = tmp_path_factory.mktemp("snap") / "catalog.json"
    code = run(
        ["ingest", "--mrconso", RRF_DIR / "MRCONSO.RRF", "--mrsty", RRF_DIR / "MRSTY.RRF",
         "--mrrel", RRF_DIR / "MRREL.RRF", "--out", out]
    )
    assert code == 0
    return out


@pytest.fixture(scope="module")
def graph_snapshot(tmp_path_factory, catalog_snapshot):
    out = tmp_path_factory.mktemp("snap") / "graph.json"
    assert run(["graph", "build", "--catalog", catalog_snapshot, "--out", out]) == 0
    return out


class TestHelp:
    def test_every_subcommand_help_exits_zero(self, capsys):
        for argv in (
            ["--help"],
            ["ingest", "--help"],
            ["graph", "--help"],
            ["graph", "build", "--help"],
            ["graph", "stats", "--help"],
            ["mentions", "--help"],
            ["link", "--help"],
            ["score", "--help"],
            ["search", "--help"],
            ["harness", "--help"],
            ["label", "--help"],
        ):
            with pytest.raises(SystemExit) as exc:
                build_parser().parse_args(argv)
            assert exc.value.code == 0
            assert capsys.readouterr().out


class TestIngestCommand:
    def test_run_manifest_written(self, catalog_snapshot):
        manifest = json.loads((catalog_snapshot.parent / "catalog.json.run.json").read_text())
        assert manifest["command"] == "ingest"
        assert len(manifest["inputs"]) == 3
        assert manifest["counters"]["mrconso"]["malformed_rows"] == 3

    def test_strings_dump(self, tmp_path, catalog_snapshot):
        out = tmp_path / "cat.json"
        strings = tmp_path / "strings.tsv"
        code = run(
            ["ingest", "--mrconso", RRF_DIR / "MRCONSO.RRF", "--mrsty", RRF_DIR / "MRSTY.RRF",
             "--mrrel", RRF_DIR / "MRREL.RRF", "--out", out, "--strings-out", strings]
        )
        assert code == 0
        lines = strings.read_text().splitlines()
        assert lines[0].startswith("# cuisim-strings v1 catalog_sha256=")
        assert any(line == "C0000001\tPneumonia" for line in lines)

    def test_missing_input_exits_2(self, tmp_path, capsys):
        code = run(
            ["ingest", "--mrconso", tmp_path / "missing.RRF", "--mrsty", RRF_DIR / "MRSTY.RRF",
             "--mrrel", RRF_DIR / "MRREL.RRF", "--out", tmp_path / "c.json"]
        )
        assert code == 2
        assert "missing.RRF" in capsys.readouterr().err

    def test_domain_error_exits_1(self, tmp_path, capsys):
        # Filter that keeps zero records: a fatal ingest error, not usage.
        code = run(
            ["ingest", "--mrconso", RRF_DIR / "MRCONSO.RRF", "--mrsty", RRF_DIR / "MRSTY.RRF",
             "--mrrel", RRF_DIR / "MRREL.RRF", "--out", tmp_path / "c.json",
             "--vocabs", "NOPE"]
        )
        assert code == 1
        assert "no concept records" in capsys.readouterr().err


class TestGraphCommand:
    def test_stats_output(self, graph_snapshot, capsys):
        assert run(["graph", "stats", "--graph", graph_snapshot]) == 0
        stats = json.loads(capsys.readouterr().out)
        assert stats["nodes"] == 18
        assert stats["edges"] == 7
        assert stats["connected_components"] >= 1


class TestMentionsCommand:
    def test_rules_applied_and_mentions_emitted(self, tmp_path, capsys):
        ann = {
            "report_id": "rX",
            "text": "No consolidations in the lung .",
            "entities": [
                {"tokens": "consolidations", "start_ix": 1, "end_ix": 1,
                 "label": "OBS-DA", "relations": [["located_at", 1]]},
                {"tokens": "lung", "start_ix": 4, "end_ix": 4, "label": "ANAT-DP",
                 "relations": []},
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
        src = tmp_path / "annotations.jsonl"
        src.write_text(json.dumps(ann) + "\n")
        out = tmp_path / "mentions.jsonl"
        assert run(["mentions", "--annotations", src, "--out", out]) == 0
        record = json.loads(out.read_text().splitlines()[0])
        assert record["report_id"] == "rX"
        by_text = {m["isolated_text"]: m for m in record["mentions"]}
        assert by_text["consolidations"]["assertion"] == "absent"
        assert by_text["lung"]["assertion"] == "absent"
        assert by_text["lung"]["source"] == "merged"


class TestScoreCommand:
    def test_identical_sets_score_one(self, tmp_path, capsys):
        record = {"report_id": "q", "elements": [["C0000001", "present"]],
                  "concept_meta": {}, "mentions": []}
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        a.write_text(json.dumps(record))
        b.write_text(json.dumps(record))
        assert run(["score", a, b]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["score"] == 1.0
        assert out["measure"] == "weighted"
        assert set(out) >= {
            "intersection_weight", "max_difference_weight", "min_difference_weight",
            "contradiction_weight", "contradicted_cuis",
        }

    def test_contradicted_cuis_reported(self, tmp_path, capsys):
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        a.write_text(json.dumps({"report_id": "a", "elements": [["C0000001", "present"], ["C0000002", "present"]]}))
        b.write_text(json.dumps({"report_id": "b", "elements": [["C0000001", "absent"], ["C0000002", "present"]]}))
        assert run(["score", a, b]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["contradicted_cuis"] == ["C0000001"]
        assert out["score"] == 0.5


class TestSearchCommand:
    def test_search_stdout(self, tmp_path, capsys):
        query = tmp_path / "query.json"
        first = (RETRIEVAL_DIR / "cuisets_30.jsonl").read_text().splitlines()[0]
        query.write_text(first)
        assert run(["search", "--query", query, "--index", RETRIEVAL_DIR / "cuisets_30.jsonl", "-k", "3"]) == 0
        lines = [json.loads(x) for x in capsys.readouterr().out.splitlines()]
        assert len(lines) == 3
        assert lines[0]["report_id"] == "r00"
        assert lines[0]["score"] == 1.0
        assert [x["rank"] for x in lines] == [1, 2, 3]


class TestHarnessCommand:
    def test_golden_manifest(self, tmp_path):
        out_csv = tmp_path / "manifest.csv"
        code = run(
            ["harness", "--plan", RETRIEVAL_DIR / "plan.toml",
             "--index", RETRIEVAL_DIR / "cuisets_harness.jsonl",
             "--out-csv", out_csv, "--out-jsonl", tmp_path / "manifest.jsonl"]
        )
        assert code == 0
        golden = (RETRIEVAL_DIR / "golden_manifest.csv").read_text()
        assert out_csv.read_text() == golden
        jsonl = [json.loads(x) for x in (tmp_path / "manifest.jsonl").read_text().splitlines()]
        assert len(jsonl) == len(golden.splitlines()) - 1
        assert all("breakdown" in row for row in jsonl)

    def test_idempotent_artifacts(self, tmp_path):
        first = tmp_path / "m1.csv"
        second = tmp_path / "m2.csv"
        for out in (first, second):
            assert run(
                ["harness", "--plan", RETRIEVAL_DIR / "plan.toml",
                 "--index", RETRIEVAL_DIR / "cuisets_harness.jsonl", "--out-csv", out]
            ) == 0
        assert first.read_bytes() == second.read_bytes()

    def test_worker_override_keeps_output(self, tmp_path):
        base = tmp_path / "w1.csv"
        threaded = tmp_path / "w4.csv"
        assert run(["harness", "--plan", RETRIEVAL_DIR / "plan.toml",
                    "--index", RETRIEVAL_DIR / "cuisets_harness.jsonl", "--out-csv", base]) == 0
        assert run(["--workers", "4", "harness", "--plan", RETRIEVAL_DIR / "plan.toml",
                    "--index", RETRIEVAL_DIR / "cuisets_harness.jsonl", "--out-csv", threaded]) == 0
        assert base.read_bytes() == threaded.read_bytes()

    def test_broken_plan_exits_1(self, tmp_path, capsys):
        plan = tmp_path / "plan.toml"
        plan.write_text(
            'classes = ["X"]\nqueries_per_class = 1\n'
            'balanced_ids = ["b-no-finding-00", "b-no-finding-01"]\n'
            'query_ids = ["b-no-finding-00"]\nretrieval_ids = []\n'
            '[class_labels]\n"b-no-finding-00" = "X"\n'
        )
        code = run(["harness", "--plan", plan,
                    "--index", RETRIEVAL_DIR / "cuisets_harness.jsonl",
                    "--out-csv", tmp_path / "m.csv"])
        assert code == 1
        assert "retrieval set" in capsys.readouterr().err


class TestLabelCommand:
    def _config(self, tmp_path):
        cfg = tmp_path / "config.toml"
        cfg.write_text(
            "[labels]\n"
            'names = ["No Finding", "Atelectasis", "Cardiomegaly", "Consolidation",'
            ' "Edema", "Pleural Effusion", "Pneumonia", "Pneumothorax"]\n'
            "[labels.overrides]\n"
            '"No Finding" = ["C0000013"]\n'
        )
        return cfg

    def test_label_with_old_labels(self, tmp_path, catalog_snapshot, capsys):
        out = tmp_path / "labels.csv"
        audit = tmp_path / "audit.jsonl"
        code = run(
            ["--config", self._config(tmp_path), "label",
             "--cui-sets", LABELER_DIR / "cuisets_labeler.jsonl",
             "--catalog", catalog_snapshot,
             "--old-labels", LABELER_DIR / "old_labels.csv",
             "--out", out, "--audit", audit]
        )
        assert code == 0
        counters = json.loads(capsys.readouterr().out)
        assert counters["reports"] == 10 and counters["compared"] == 10
        rows = out.read_text().splitlines()
        assert rows[0].startswith("report_id,")
        assert len(rows) == 11
        audit_rows = [json.loads(x) for x in audit.read_text().splitlines()]
        assert all("comparison" in row for row in audit_rows)
        r09 = next(r for r in audit_rows if r["report_id"] == "r09")
        assert r09["comparison"]["selected"] == "union"

    def test_no_retrieval_mode(self, tmp_path, catalog_snapshot):
        out = tmp_path / "labels.csv"
        code = run(
            ["--config", self._config(tmp_path), "label",
             "--cui-sets", LABELER_DIR / "cuisets_labeler.jsonl",
             "--catalog", catalog_snapshot,
             "--old-labels", LABELER_DIR / "old_labels.csv",
             "--no-retrieval", "--out", out]
        )
        assert code == 0
        # r04 phase-1 value is -1; phase 2 would lift it to 1.
        row = next(x for x in out.read_text().splitlines() if x.startswith("r04,"))
        assert "-1.0" in row

    def test_jaccard_measure_flag(self, tmp_path, catalog_snapshot):
        out = tmp_path / "labels.csv"
        code = run(
            ["--config", self._config(tmp_path), "label",
             "--cui-sets", LABELER_DIR / "cuisets_labeler.jsonl",
             "--catalog", catalog_snapshot,
             "--old-labels", LABELER_DIR / "old_labels.csv",
             "--measure", "jaccard", "--out", out]
        )
        assert code == 0


class TestConfigPlumbing:
    def test_missing_config_exits_2(self, tmp_path, capsys):
        code = run(["--config", tmp_path / "nope.toml", "graph", "stats", "--graph", "x.json"])
        assert code == 2
        assert "nope.toml" in capsys.readouterr().err

    def test_unknown_config_key_exits_2(self, tmp_path, capsys):
        cfg = tmp_path / "config.toml"
        cfg.write_text("[distance]\nalhpa = 0.5\n")
        code = run(["--config", cfg, "graph", "stats", "--graph", "x.json"])
        assert code == 2
        assert "alhpa" in capsys.readouterr().err

    def test_env_override(self, tmp_path, capsys, catalog_snapshot):
        record = {"report_id": "q", "elements": [["C0000001", "present"], ["C0000002", "absent"]]}
        other = {"report_id": "p", "elements": [["C0000001", "present"]]}
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        a.write_text(json.dumps(record))
        b.write_text(json.dumps(other))
        os.environ["CUISIM_DISTANCE_MEASURE"] = "tversky"
        os.environ["CUISIM_DISTANCE_ALPHA"] = "1.0"
        try:
            assert run(["score", a, b]) == 0
            out = json.loads(capsys.readouterr().out)
            assert out["measure"] == "tversky"
        finally:
            del os.environ["CUISIM_DISTANCE_MEASURE"]
            del os.environ["CUISIM_DISTANCE_ALPHA"]
