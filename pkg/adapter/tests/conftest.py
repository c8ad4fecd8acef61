from __future__ import annotations

import json
import subprocess
from pathlib import Path

import pytest

# (cui, term_status, string, tui, semantic type) -- one row per string.
CATALOG_ROWS = [
    ("C0000001", "P", "pneumonia", "T047", "Disease or Syndrome"),
    ("C0000002", "P", "pneumothorax", "T047", "Disease or Syndrome"),
    ("C0000003", "P", "effusion", "T047", "Disease or Syndrome"),
    ("C0000004", "P", "consolidation", "T046", "Pathologic Function"),
    ("C0000004", "S", "consolidations", "T046", "Pathologic Function"),
    ("C0000005", "P", "edema", "T046", "Pathologic Function"),
    ("C0000006", "P", "cardiomegaly", "T033", "Finding"),
    ("C0000007", "P", "atelectasis", "T047", "Disease or Syndrome"),
    ("C0000008", "P", "lung", "T023", "Body Part, Organ, or Organ Component"),
    ("C0000008", "S", "lungs", "T023", "Body Part, Organ, or Organ Component"),
    ("C0000009", "P", "heart", "T023", "Body Part, Organ, or Organ Component"),
    ("C0000010", "P", "pleura", "T024", "Tissue"),
    ("C0000010", "S", "pleural", "T024", "Tissue"),
    ("C0000011", "P", "chest", "T029", "Body Location or Region"),
    ("C0000012", "P", "small", "T033", "Finding"),
    ("C0000013", "P", "mild", "T033", "Finding"),
    ("C0000014", "P", "left", "T029", "Body Location or Region"),
    ("C0000015", "P", "right", "T029", "Body Location or Region"),
    ("C0000016", "P", "lower", "T029", "Body Location or Region"),
    ("C0000017", "P", "upper", "T029", "Body Location or Region"),
    ("C0000018", "P", "enlarged", "T033", "Finding"),
    ("C0000019", "P", "large", "T033", "Finding"),
]

FIVE_REPORTS = [
    ("r1", "Small pleural effusion . No pneumothorax ."),
    ("r2", "There is pneumonia in the lung ."),
    ("r3", "Mild cardiomegaly . Possible edema in the lung ."),
    ("r4", "No consolidations in the lung ."),
    ("r5", ""),
]


def _conso_line(cui, status, string):
    fields = [cui, "ENG", status, "L1", "PF", "S1", "Y", "A1", "", "1", "",
              "SNOMEDCT_US", "PT", "1", string, "0", "N", ""]
    return "|".join(fields) + "|"


def _sty_line(cui, tui, sty):
    return "|".join([cui, tui, "A1.2", sty, "AT1", ""]) + "|"


def write_rrf(directory: Path) -> None:
    conso, sty_seen, sty = [], set(), []
    for cui, status, string, tui, sem in CATALOG_ROWS:
        conso.append(_conso_line(cui, status, string))
        if (cui, tui) not in sty_seen:
            sty_seen.add((cui, tui))
            sty.append(_sty_line(cui, tui, sem))
    (directory / "MRCONSO.RRF").write_text("\n".join(conso) + "\n")
    (directory / "MRSTY.RRF").write_text("\n".join(sty) + "\n")
    (directory / "MRREL.RRF").write_text(
        "|".join(["C0000004", "A4", "CUI", "SY", "C0000003", "A3", "CUI", "",
                  "R1", "", "S", "S", "", "N", "N", ""]) + "|\n"
    )


def run_cli(*argv) -> subprocess.CompletedProcess:
    """Run a console script (cuisim / extract) and require success."""
    proc = subprocess.run(
        [str(a) for a in argv], capture_output=True, text=True
    )
    assert proc.returncode == 0, f"{argv}:\n{proc.stdout}\n{proc.stderr}"
    return proc


@pytest.fixture(scope="session")
def workspace(tmp_path_factory) -> Path:
    """Catalog snapshot + string dump built through the primary CLI."""
    ws = tmp_path_factory.mktemp("adapter-ws")
    write_rrf(ws)
    run_cli(
        "cuisim", "ingest",
        "--mrconso", ws / "MRCONSO.RRF", "--mrsty", ws / "MRSTY.RRF",
        "--mrrel", ws / "MRREL.RRF",
        "--out", ws / "catalog.json", "--strings-out", ws / "strings.tsv",
    )
    with open(ws / "reports.jsonl", "w", encoding="utf-8") as fh:
        for rid, text in FIVE_REPORTS:
            fh.write(json.dumps({"report_id": rid, "text": text}) + "\n")
    return ws
