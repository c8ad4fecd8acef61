from __future__ import annotations

import random
import time
from pathlib import Path

import pytest

SESSION_START = time.monotonic()


def pytest_runtest_logreport(report):
    """One visible pass/fail line per acceptance criterion."""
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    status = "PASS" if report.passed else "FAIL"
    print(f"\n[{status}] {name}", flush=True)

from cuisim.ingest import ingest_rrf
from cuisim.graph import build_graph
from cuisim.linking import ConceptMeta, CuiSet
from cuisim.reports import Assertion, EntityKind

DATA_DIR = Path(__file__).parent / "data"
RRF_DIR = DATA_DIR / "rrf"

# Planted defect counts in the RRF fixtures (see data/gen_fixtures.py).
PLANTED_MALFORMED = {"mrconso": 3, "mrsty": 1, "mrrel": 1}
PLANTED_DANGLING_RELATIONS = 1


@pytest.fixture(scope="session")
def catalog_and_counts():
    return ingest_rrf(
        RRF_DIR / "MRCONSO.RRF", RRF_DIR / "MRSTY.RRF", RRF_DIR / "MRREL.RRF"
    )


@pytest.fixture(scope="session")
def catalog(catalog_and_counts):
    return catalog_and_counts[0]


@pytest.fixture(scope="session")
def concept_graph(catalog):
    return build_graph(catalog)


def make_cui_set(
    report_id: str,
    elements: dict[str, str],
    types: dict[str, tuple[str, ...]] | None = None,
) -> CuiSet:
    """Tiny constructor for tests: assertions as strings, optional semantic
    types per CUI in the concept metadata."""
    types = types or {}
    parsed = {cui: Assertion(a) for cui, a in elements.items()}
    meta = {
        cui: ConceptMeta(
            kind=EntityKind.OBSERVATION,
            semantic_types=tuple(types.get(cui, ())),
            score=1.0,
        )
        for cui in parsed
    }
    return CuiSet(report_id=report_id, elements=parsed, concept_meta=meta)


def random_pair(rng: random.Random, universe: int = 12, max_size: int = 8):
    """A random pair of CuiSets over a small CUI universe, mixing assertions."""
    cuis = [f"C{i:07d}" for i in range(1, universe + 1)]
    assertions = ["present", "absent", "uncertain"]

    def one(name):
        size = rng.randint(0, max_size)
        chosen = rng.sample(cuis, min(size, len(cuis)))
        return make_cui_set(name, {c: rng.choice(assertions) for c in chosen})

    return one("A"), one("B")
