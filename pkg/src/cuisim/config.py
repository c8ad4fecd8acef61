"""Declarative run configuration.

One TOML file with a section per module; unknown keys are rejected so typos
fail fast.  Environment variables prefixed ``CUISIM_`` override scalar
values (``CUISIM_DISTANCE_ALPHA=0.3`` overrides ``[distance] alpha``); CLI
flags override both.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .ingest import DEFAULT_RELS, DEFAULT_VOCABS
from .labeler import DEFAULT_LABELS
from .linking import DEFAULT_ANATOMY_TYPES, DEFAULT_OBSERVATION_TYPES, SemanticTypeConfig
from .reports import AssertionRuleConfig
from .retrieval import HarnessPlan
from .similarity import DistanceConfig, PreferenceVector

ENV_PREFIX = "CUISIM_"

# section -> key -> default (None means "scalar, no default").  Nested dicts
# mark sub-tables with free-form keys.
_SCHEMA: dict[str, dict[str, Any]] = {
    "paths": {
        "catalog": "",
        "graph": "",
        "cui_sets": "",
        "old_labels": "",
        "cue_lexicon": "",
    },
    "ingest": {
        "vocabularies": sorted(DEFAULT_VOCABS),
        "relations": sorted(DEFAULT_RELS),
        "synonym_relations": ["SY"],
    },
    "distance": {
        "measure": "weighted",
        "alpha": 0.0,
        "beta": 1.0,
        "contradictions": True,
        "synonym_expansion": True,
        "expand_both": False,
        "synonym_transitive": True,
        "double_count_contradictions": False,
        "default_weight": 1.0,
        "aggregate": "max",
        "preference": {},  # free-form: semantic type -> weight
    },
    "semantic_types": {
        "observation": sorted(DEFAULT_OBSERVATION_TYPES),
        "anatomy": sorted(DEFAULT_ANATOMY_TYPES),
    },
    "report_rules": {
        "propagation_scope": "component",
        "bare_anatomy_assertion": "keep",
        "merge_conflict_policy": "sentence",
        "short_phrase_max_entities": 2,
        "short_phrase_max_head_tokens": 3,
        "modify_relations": ["modify"],
    },
    "labels": {
        "names": list(DEFAULT_LABELS),
        "fallback_depth": 1,
        "measure": "containment",
        "overrides": {},  # free-form: label -> [cuis]
    },
    "search": {
        "k": 10,
        "discovery_enabled": False,
        "discovery_depth": 10,
    },
    "run": {
        "strict": True,
        "workers": 1,
    },
}

_FREEFORM_KEYS = {("distance", "preference"), ("labels", "overrides")}


def _check_keys(data: dict, schema: dict, context: str) -> None:
    for key, value in data.items():
        if key not in schema:
            raise ConfigError(f"unknown config key {context}{key!r}")
        if isinstance(schema[key], dict) and not isinstance(value, dict):
            raise ConfigError(f"config key {context}{key!r} must be a table")


def _coerce_env(raw: str, current: Any) -> Any:
    if isinstance(current, bool):
        if raw.lower() in ("1", "true", "yes"):
            return True
        if raw.lower() in ("0", "false", "no"):
            return False
        raise ConfigError(f"cannot parse boolean override {raw!r}")
    if isinstance(current, int) and not isinstance(current, bool):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    return raw


@dataclass
class RunConfig:
    raw: dict[str, dict[str, Any]] = field(default_factory=dict)
    source_path: Path | None = None

    def __post_init__(self):
        merged: dict[str, dict[str, Any]] = {}
        _check_keys(self.raw, _SCHEMA, "")
        for section, keys in _SCHEMA.items():
            given = self.raw.get(section, {})
            if not isinstance(given, dict):
                raise ConfigError(f"config section {section!r} must be a table")
            _check_keys(given, keys, f"{section}.")
            merged[section] = {}
            for key, default in keys.items():
                if (section, key) in _FREEFORM_KEYS:
                    merged[section][key] = dict(given.get(key, default))
                elif isinstance(default, list):
                    merged[section][key] = list(given.get(key, default))
                else:
                    merged[section][key] = given.get(key, default)
        self.raw = merged
        self._apply_env()

    def _apply_env(self) -> None:
        for name, raw in sorted(os.environ.items()):
            if not name.startswith(ENV_PREFIX):
                continue
            rest = name[len(ENV_PREFIX):].lower()
            for section in sorted(_SCHEMA, key=len, reverse=True):
                prefix = section + "_"
                if rest.startswith(prefix):
                    key = rest[len(prefix):]
                    if key in _SCHEMA[section] and (section, key) not in _FREEFORM_KEYS:
                        self.raw[section][key] = _coerce_env(raw, self.raw[section][key])
                    break

    # -- typed views -------------------------------------------------------

    def section(self, name: str) -> dict[str, Any]:
        return self.raw[name]

    def distance_config(self) -> DistanceConfig:
        d = self.raw["distance"]
        preference = PreferenceVector(
            weights=d["preference"],
            default_weight=d["default_weight"],
            aggregate=d["aggregate"],
        )
        return DistanceConfig(
            measure=d["measure"],
            alpha=float(d["alpha"]),
            beta=float(d["beta"]),
            contradictions_enabled=d["contradictions"],
            synonym_expansion_enabled=d["synonym_expansion"],
            expand_both=d["expand_both"],
            synonym_transitive=d["synonym_transitive"],
            double_count_contradictions=d["double_count_contradictions"],
            preference=preference,
        )

    def semantic_type_config(self) -> SemanticTypeConfig:
        s = self.raw["semantic_types"]
        return SemanticTypeConfig(
            observation_types=frozenset(s["observation"]),
            anatomy_types=frozenset(s["anatomy"]),
        )

    def rule_config(self) -> AssertionRuleConfig:
        r = self.raw["report_rules"]
        return AssertionRuleConfig(
            propagation_scope=r["propagation_scope"],
            bare_anatomy_assertion=r["bare_anatomy_assertion"],
            merge_conflict_policy=r["merge_conflict_policy"],
            short_phrase_max_entities=int(r["short_phrase_max_entities"]),
            short_phrase_max_head_tokens=int(r["short_phrase_max_head_tokens"]),
            modify_relations=frozenset(r["modify_relations"]),
        )

    def config_hash(self) -> str:
        canonical = json.dumps(self.raw, sort_keys=True, default=str)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    return RunConfig(raw=data, source_path=path)


_PLAN_KEYS = {
    "classes",
    "queries_per_class",
    "per_class_budget",
    "per_query_take",
    "per_query_k",
    "balanced_ids",
    "query_ids",
    "retrieval_ids",
    "balanced_ids_file",
    "query_ids_file",
    "retrieval_ids_file",
    "class_labels",
    "class_labels_file",
}


def _ids_from(data: dict, key: str, base: Path) -> frozenset[str]:
    if key in data:
        return frozenset(str(x) for x in data[key])
    file_key = f"{key}_file"
    if file_key in data:
        path = base / data[file_key]
        if not path.is_file():
            raise ConfigError(f"id list file not found: {path}")
        return frozenset(
            ln.strip() for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()
        )
    return frozenset()


def load_plan(path: str | Path) -> tuple[HarnessPlan, dict[str, str] | None, int | None]:
    """Load a harness plan TOML; returns (plan, class labels, per_query_k)."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"plan file not found: {path}")
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    unknown = set(data) - _PLAN_KEYS
    if unknown:
        raise ConfigError(f"unknown plan keys: {sorted(unknown)}")
    if "classes" not in data:
        raise ConfigError(f"plan {path} must list classes")
    base = path.parent

    class_labels: dict[str, str] | None = None
    if "class_labels" in data:
        class_labels = {str(k): str(v) for k, v in data["class_labels"].items()}
    elif "class_labels_file" in data:
        labels_path = base / data["class_labels_file"]
        if not labels_path.is_file():
            raise ConfigError(f"class labels file not found: {labels_path}")
        class_labels = {}
        with open(labels_path, encoding="utf-8", newline="") as fh:
            for row in csv.reader(fh):
                if len(row) >= 2 and row[0].strip() and row[0] != "report_id":
                    class_labels[row[0].strip()] = row[1].strip()

    plan = HarnessPlan(
        classes=tuple(str(c) for c in data["classes"]),
        queries_per_class=int(data.get("queries_per_class", 10)),
        balanced_ids=_ids_from(data, "balanced_ids", base),
        query_ids=_ids_from(data, "query_ids", base),
        retrieval_ids=_ids_from(data, "retrieval_ids", base),
        per_class_budget=int(data["per_class_budget"]) if "per_class_budget" in data else None,
        per_query_take=int(data["per_query_take"]) if "per_query_take" in data else None,
    )
    per_query_k = int(data["per_query_k"]) if "per_query_k" in data else None
    return plan, class_labels, per_query_k
