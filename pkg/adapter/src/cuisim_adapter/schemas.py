"""JSON schemas for the adapter's two output artifacts.

These mirror the input contracts published by the downstream package
(annotation JSON for the mention normalizer, candidate JSON for the
linker); every output line must validate.
"""

from __future__ import annotations

import json
from pathlib import Path

import jsonschema

from .errors import AdapterError

_ENTITY = {
    "type": "object",
    "required": ["tokens", "start_ix", "end_ix", "label"],
    "properties": {
        "tokens": {"type": "string"},
        "start_ix": {"type": "integer", "minimum": 0},
        "end_ix": {"type": "integer", "minimum": 0},
        "label": {"enum": ["ANAT-DP", "OBS-DP", "OBS-DA", "OBS-U"]},
        "relations": {
            "type": "array",
            "items": {
                "type": "array",
                "prefixItems": [{"type": "string"}, {"type": "integer", "minimum": 0}],
                "minItems": 2,
                "maxItems": 2,
            },
        },
    },
    "additionalProperties": False,
}

ANNOTATION_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["report_id", "text", "entities", "sentences"],
    "properties": {
        "report_id": {"type": "string", "minLength": 1},
        "text": {"type": "string"},
        "entities": {"type": "array", "items": _ENTITY},
        "sentences": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["sentence_ix", "text", "token_offset", "entities"],
                "properties": {
                    "sentence_ix": {"type": "integer", "minimum": 0},
                    "text": {"type": "string"},
                    "token_offset": {"type": "integer", "minimum": 0},
                    "entities": {"type": "array", "items": _ENTITY},
                },
                "additionalProperties": False,
            },
        },
    },
    "additionalProperties": False,
}

_CANDIDATE = {
    "type": "object",
    "required": ["cui", "score"],
    "properties": {
        "cui": {"type": "string", "pattern": "^C[0-9]{7}$"},
        "score": {"type": "number", "minimum": -1.0, "maximum": 1.0},
    },
    "additionalProperties": False,
}

CANDIDATES_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["report_id", "mentions"],
    "properties": {
        "report_id": {"type": "string", "minLength": 1},
        "mentions": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["isolated_text", "kind", "assertion",
                             "isolated_candidates", "context_candidates"],
                "properties": {
                    "isolated_text": {"type": "string"},
                    "context_text": {"type": "string"},
                    "kind": {"enum": ["anatomy", "observation"]},
                    "assertion": {"enum": ["present", "absent", "uncertain"]},
                    "source": {"enum": ["report_level", "sentence_level", "merged"]},
                    "span": {"type": "array", "items": {"type": "integer"}},
                    "isolated_candidates": {"type": "array", "items": _CANDIDATE, "maxItems": 128},
                    "context_candidates": {"type": "array", "items": _CANDIDATE, "maxItems": 128},
                },
                "additionalProperties": False,
            },
        },
    },
    "additionalProperties": False,
}


def _validate_file(path: str | Path, schema: dict, check_sorted_scores: bool = False) -> int:
    validator = jsonschema.Draft202012Validator(schema)
    n = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            errors = sorted(validator.iter_errors(record), key=str)
            if errors:
                raise AdapterError(f"{path}:{lineno}: schema violation: {errors[0].message}")
            if check_sorted_scores:
                for m in record.get("mentions", []):
                    for key in ("isolated_candidates", "context_candidates"):
                        scores = [c["score"] for c in m[key]]
                        if scores != sorted(scores, reverse=True):
                            raise AdapterError(
                                f"{path}:{lineno}: {key} not sorted by descending score"
                            )
            n += 1
    return n


def validate_annotations(path: str | Path) -> int:
    return _validate_file(path, ANNOTATION_SCHEMA)


def validate_candidates(path: str | Path) -> int:
    return _validate_file(path, CANDIDATES_SCHEMA, check_sorted_scores=True)
