"""Report annotation backends.

The adapter emits raw model-style annotations and performs zero assertion
correction: negation propagation, orphan-anatomy handling and
short-phrase fixes all live downstream.  Two backends:

- ``radgraph-xl``: wraps the published RadGraph-XL checkpoint (needs the
  optional model dependencies and local weights).
- ``lexicon``: a deterministic offline annotator for fixtures and tests.
  It mimics the wrapped model's behaviour, including its bias of never
  negating anatomies.

Output schema per report (one JSON line):

    {"report_id", "text",
     "entities": [{"tokens", "start_ix", "end_ix", "label",
                   "relations": [[type, target_ix]]}],
     "sentences": [{"sentence_ix", "text", "token_offset", "entities": [...]}]}
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable

from .errors import AdapterError

NEGATION_CUES = frozenset(
    {"no", "not", "without", "absence", "absent", "free", "negative",
     "clear", "resolved", "denies", "neither", "nor"}
)
UNCERTAINTY_CUES = frozenset(
    {"possible", "possibly", "may", "might", "question", "questionable",
     "suspected", "suspicious", "equivocal", "cannot"}
)


def load_lexicon(path: str | Path | None = None) -> dict[tuple[str, ...], str]:
    if path is None:
        text = resources.files("cuisim_adapter.data").joinpath("terms.tsv").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    lexicon: dict[tuple[str, ...], str] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        term, label = line.split("\t")
        lexicon[tuple(term.lower().split())] = label
    return lexicon


@dataclass
class _Span:
    start: int
    end: int  # inclusive
    label: str  # anatomy | observation


def _sentence_ranges(tokens: list[str]) -> list[tuple[int, int]]:
    """Half-open token ranges, split after each '.' token."""
    ranges = []
    start = 0
    for i, tok in enumerate(tokens):
        if tok == ".":
            ranges.append((start, i + 1))
            start = i + 1
    if start < len(tokens):
        ranges.append((start, len(tokens)))
    return ranges


def _find_terms(tokens: list[str], lexicon, lo: int, hi: int) -> list[_Span]:
    lowered = [t.lower().strip(",.;:") for t in tokens]
    max_len = max((len(k) for k in lexicon), default=1)
    spans = []
    i = lo
    while i < hi:
        match = None
        for n in range(min(max_len, hi - i), 0, -1):
            if tuple(lowered[i:i + n]) in lexicon:
                match = n
                break
        if match:
            spans.append(_Span(i, i + match - 1, lexicon[tuple(lowered[i:i + match])]))
            i += match
        else:
            i += 1
    return spans


def _assertion_suffix(span: _Span, tokens: list[str], lo: int) -> str:
    if span.label == "anatomy":
        return "DP"  # the wrapped model does not negate anatomies
    window = [t.lower().strip(",.;:") for t in tokens[lo:span.start]]
    if any(t in NEGATION_CUES for t in window):
        return "DA"
    if any(t in UNCERTAINTY_CUES for t in window):
        return "U"
    return "DP"


def _entities_for_range(tokens, lexicon, lo, hi, offset):
    """Entities with spans relative to ``offset``; relations within the range."""
    spans = _find_terms(tokens, lexicon, lo, hi)
    entities = []
    for s in spans:
        suffix = _assertion_suffix(s, tokens, lo)
        label = "ANAT-DP" if s.label == "anatomy" else f"OBS-{suffix}"
        entities.append(
            {
                "tokens": " ".join(tokens[s.start:s.end + 1]),
                "start_ix": s.start - offset,
                "end_ix": s.end - offset,
                "label": label,
                "relations": [],
            }
        )
    # Adjacent entities chain as modifiers (earlier modifies later);
    # observations locate at every anatomy in the range.
    for i in range(len(spans) - 1):
        if spans[i].end + 1 == spans[i + 1].start:
            entities[i]["relations"].append(["modify", i + 1])
    for i, s in enumerate(spans):
        if s.label != "observation":
            continue
        for j, other in enumerate(spans):
            if other.label == "anatomy" and not _chained(spans, i, j):
                entities[i]["relations"].append(["located_at", j])
    return entities


def _chained(spans, i, j) -> bool:
    return abs(spans[i].start - spans[j].end) == 1 or abs(spans[j].start - spans[i].end) == 1


class LexiconAnnotator:
    """Deterministic offline annotator over a surface-term lexicon."""

    name = "lexicon"
    version = "1"

    def __init__(self, lexicon_path: str | Path | None = None):
        self.lexicon = load_lexicon(lexicon_path)

    def annotate(self, report_id: str, text: str) -> dict:
        tokens = text.split()
        ranges = _sentence_ranges(tokens)
        report_entities = []
        for lo, hi in ranges:
            base = len(report_entities)
            ents = _entities_for_range(tokens, self.lexicon, lo, hi, offset=0)
            for e in ents:
                e["relations"] = [[t, ix + base] for t, ix in e["relations"]]
            report_entities.extend(ents)
        sentences = []
        for ix, (lo, hi) in enumerate(ranges):
            sentences.append(
                {
                    "sentence_ix": ix,
                    "text": " ".join(tokens[lo:hi]),
                    "token_offset": lo,
                    "entities": _entities_for_range(tokens, self.lexicon, lo, hi, offset=lo),
                }
            )
        return {
            "report_id": report_id,
            "text": text,
            "entities": report_entities,
            "sentences": sentences,
        }


class RadGraphXLAnnotator:
    """Wraps the published RadGraph-XL checkpoint (pinned in models.lock).

    Loading happens lazily; a missing package or missing weights is a fatal
    adapter error with a diagnostic, never a silent fallback.
    """

    name = "radgraph-xl"
    version = "1"

    def __init__(self):
        try:
            from radgraph import RadGraph  # type: ignore[import-not-found]
        except ImportError as exc:
            raise AdapterError(
                "radgraph-xl backend requires the 'radgraph' package and local "
                f"model weights (see models.lock): {exc}"
            ) from exc
        try:
            self._model = RadGraph(model_type="radgraph-xl")
        except Exception as exc:  # model download/load failure
            raise AdapterError(f"failed to load radgraph-xl weights: {exc}") from exc

    def annotate(self, report_id: str, text: str) -> dict:
        tokens = text.split()
        ranges = _sentence_ranges(tokens)
        report_entities = self._run(text)
        sentences = []
        for ix, (lo, hi) in enumerate(ranges):
            sent_text = " ".join(tokens[lo:hi])
            sentences.append(
                {
                    "sentence_ix": ix,
                    "text": sent_text,
                    "token_offset": lo,
                    "entities": self._run(sent_text),
                }
            )
        return {
            "report_id": report_id,
            "text": text,
            "entities": report_entities,
            "sentences": sentences,
        }

    def _run(self, text: str) -> list[dict]:
        if not text.strip():
            return []
        output = self._model([text])
        annotation = output.get("0", {})
        raw_entities = annotation.get("entities", {})
        keys = sorted(raw_entities, key=int)
        index_of = {k: i for i, k in enumerate(keys)}
        entities = []
        for k in keys:
            e = raw_entities[k]
            entities.append(
                {
                    "tokens": e["tokens"],
                    "start_ix": int(e["start_ix"]),
                    "end_ix": int(e["end_ix"]),
                    "label": e["label"],
                    "relations": [
                        [rel, index_of[target]]
                        for rel, target in e.get("relations", [])
                        if target in index_of
                    ],
                }
            )
        return entities


BACKENDS = {"lexicon": LexiconAnnotator, "radgraph-xl": RadGraphXLAnnotator}


def make_annotator(backend: str, lexicon_path: str | Path | None = None):
    if backend not in BACKENDS:
        raise AdapterError(f"unknown annotation backend {backend!r}; expected one of {sorted(BACKENDS)}")
    if backend == "lexicon":
        return LexiconAnnotator(lexicon_path)
    return RadGraphXLAnnotator()


def read_reports(path: str | Path) -> Iterable[tuple[str, str]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise AdapterError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if "report_id" not in record or "text" not in record:
                raise AdapterError(f"{path}:{lineno}: report needs report_id and text")
            yield str(record["report_id"]), str(record["text"])


def annotate_file(in_path: str | Path, out_path: str | Path, annotator) -> int:
    n = 0
    with open(out_path, "w", encoding="utf-8") as fh:
        for report_id, text in read_reports(in_path):
            fh.write(json.dumps(annotator.annotate(report_id, text), ensure_ascii=False))
            fh.write("\n")
            n += 1
    meta = {
        "kind": "annotations",
        "annotator": annotator.name,
        "annotator_version": annotator.version,
        "reports": n,
    }
    with open(f"{out_path}.meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return n
