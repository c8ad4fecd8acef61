"""RadGraph-style report annotations and the assertion-correction rules.

The annotation JSON schema (one report per line in a .jsonl file):

    {"report_id": "r1",
     "text": "No consolidations in the lung .",
     "entities": [ ... report-level entities ... ],
     "sentences": [{"sentence_ix": 0, "text": "...", "token_offset": 0,
                    "entities": [ ... ]}]}

where each entity is

    {"tokens": "consolidations", "start_ix": 1, "end_ix": 1,
     "label": "OBS-DA", "relations": [["located_at", 2]]}

Labels map as ANAT-DP -> anatomy/present, OBS-DP -> observation/present,
OBS-DA -> observation/absent, OBS-U -> observation/uncertain.  Spans are
inclusive indices into the whitespace token stream of the owning text;
relation targets index entities in the same entity list.  ``token_offset``
is the sentence's first token position within the report token stream and
is derived from the sentence texts when omitted.
"""

from __future__ import annotations

import json
import re
from collections import defaultdict
from dataclasses import dataclass, replace
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable

from .errors import DataError


class Assertion(str, Enum):
    PRESENT = "present"
    ABSENT = "absent"
    UNCERTAIN = "uncertain"


class EntityKind(str, Enum):
    ANATOMY = "anatomy"
    OBSERVATION = "observation"


class MentionSource(str, Enum):
    REPORT_LEVEL = "report_level"
    SENTENCE_LEVEL = "sentence_level"
    MERGED = "merged"


# Positive findings dominate when assertions collide.
ASSERTION_RANK = {Assertion.PRESENT: 2, Assertion.UNCERTAIN: 1, Assertion.ABSENT: 0}

_LABEL_MAP = {
    "ANAT-DP": (EntityKind.ANATOMY, Assertion.PRESENT),
    "OBS-DP": (EntityKind.OBSERVATION, Assertion.PRESENT),
    "OBS-DA": (EntityKind.OBSERVATION, Assertion.ABSENT),
    "OBS-U": (EntityKind.OBSERVATION, Assertion.UNCERTAIN),
}

DEFAULT_MODIFY_RELATIONS = frozenset({"modify"})


@dataclass(frozen=True)
class AnnotatedEntity:
    tokens: str
    span: tuple[int, int]
    kind: EntityKind
    assertion: Assertion
    relations: tuple[tuple[str, int], ...] = ()


@dataclass(frozen=True)
class SentenceAnnotation:
    sentence_ix: int
    text: str
    token_offset: int
    entities: tuple[AnnotatedEntity, ...]


@dataclass(frozen=True)
class ReportAnnotation:
    report_id: str
    text: str
    report_level: tuple[AnnotatedEntity, ...]
    sentence_level: tuple[SentenceAnnotation, ...]


@dataclass(frozen=True)
class Mention:
    """A normalized entity mention ready for linking."""

    isolated_text: str
    context_text: str
    kind: EntityKind
    assertion: Assertion
    source: MentionSource
    span: tuple[int, int]  # report-level token offsets, for ordering/dedup


@dataclass(frozen=True)
class AssertionRuleConfig:
    propagation_scope: str = "component"  # or "one_hop"
    bare_anatomy_assertion: str = "keep"  # or "absent"
    merge_conflict_policy: str = "sentence"  # or "report"
    short_phrase_max_entities: int = 2
    short_phrase_max_head_tokens: int = 3
    modify_relations: frozenset[str] = DEFAULT_MODIFY_RELATIONS


def load_cue_lexicon(path: str | Path | None = None) -> tuple[str, ...]:
    """One negation cue per line; blank lines and # comments ignored."""
    if path is None:
        text = resources.files("cuisim.data").joinpath("negation_cues.txt").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    cues = [ln.strip() for ln in text.splitlines()]
    return tuple(c for c in cues if c and not c.startswith("#"))


def _parse_entity(raw: dict, n_tokens: int, n_entities: int, where: str) -> AnnotatedEntity:
    try:
        label = raw["label"]
        kind, assertion = _LABEL_MAP[label]
    except KeyError as exc:
        raise DataError(f"{where}: unknown or missing entity label {raw.get('label')!r}") from exc
    start, end = int(raw["start_ix"]), int(raw["end_ix"])
    if not (0 <= start <= end < n_tokens):
        raise DataError(f"{where}: entity span ({start}, {end}) outside token stream of length {n_tokens}")
    relations = []
    for rel_type, target in raw.get("relations", ()):
        target = int(target)
        if not (0 <= target < n_entities):
            raise DataError(f"{where}: relation target {target} out of range")
        relations.append((str(rel_type), target))
    return AnnotatedEntity(
        tokens=str(raw["tokens"]),
        span=(start, end),
        kind=kind,
        assertion=assertion,
        relations=tuple(relations),
    )


def parse_annotation(raw: dict) -> ReportAnnotation:
    report_id = str(raw.get("report_id", ""))
    if not report_id:
        raise DataError("annotation without report_id")
    text = str(raw.get("text", ""))
    n_report_tokens = len(text.split())

    report_entities_raw = raw.get("entities", [])
    report_level = tuple(
        _parse_entity(e, n_report_tokens, len(report_entities_raw), f"report {report_id}")
        for e in report_entities_raw
    )

    sentences = []
    next_offset = 0
    for s in raw.get("sentences", []):
        sent_text = str(s.get("text", ""))
        n_sent_tokens = len(sent_text.split())
        offset = int(s["token_offset"]) if "token_offset" in s else next_offset
        ents_raw = s.get("entities", [])
        ents = tuple(
            _parse_entity(e, n_sent_tokens, len(ents_raw), f"report {report_id} sentence {s.get('sentence_ix')}")
            for e in ents_raw
        )
        sentences.append(
            SentenceAnnotation(
                sentence_ix=int(s.get("sentence_ix", len(sentences))),
                text=sent_text,
                token_offset=offset,
                entities=ents,
            )
        )
        next_offset = offset + n_sent_tokens
    return ReportAnnotation(
        report_id=report_id,
        text=text,
        report_level=report_level,
        sentence_level=tuple(sentences),
    )


def read_annotations(path: str | Path) -> list[ReportAnnotation]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(parse_annotation(json.loads(line)))
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
    return out


def _adjacency(entities: tuple[AnnotatedEntity, ...]) -> dict[int, set[int]]:
    adj: dict[int, set[int]] = defaultdict(set)
    for i, e in enumerate(entities):
        for _, target in e.relations:
            adj[i].add(target)
            adj[target].add(i)
    return adj


def _protected_indices(entities, adj) -> set[int]:
    """Entities carrying a positive observation linkage: a present observation
    itself, or anything directly related to one."""
    present_obs = {
        i
        for i, e in enumerate(entities)
        if e.kind is EntityKind.OBSERVATION and e.assertion is Assertion.PRESENT
    }
    protected = set(present_obs)
    for i in range(len(entities)):
        if adj[i] & present_obs:
            protected.add(i)
    return protected


def _propagate_in_list(entities, scope: str) -> tuple[AnnotatedEntity, ...]:
    if not entities:
        return entities
    adj = _adjacency(entities)
    protected = _protected_indices(entities, adj)
    absent = {i for i, e in enumerate(entities) if e.assertion is Assertion.ABSENT}
    if scope == "one_hop":
        marked = set(absent)
        for i in absent:
            marked |= adj[i]
    else:
        marked = set()
        for i in absent:
            if i in marked:
                continue
            stack, component = [i], {i}
            while stack:
                node = stack.pop()
                for nbr in adj[node]:
                    if nbr not in component:
                        component.add(nbr)
                        stack.append(nbr)
            marked |= component
    return tuple(
        replace(e, assertion=Assertion.ABSENT)
        if i in marked and i not in protected
        else e
        for i, e in enumerate(entities)
    )


def propagate_negations(
    annotation: ReportAnnotation, config: AssertionRuleConfig = AssertionRuleConfig()
) -> ReportAnnotation:
    """Spread each negated entity's absence through its relation component.

    Entities linked to a positively asserted observation keep their
    assertion; uncertainty never spreads.
    """
    scope = config.propagation_scope
    return replace(
        annotation,
        report_level=_propagate_in_list(annotation.report_level, scope),
        sentence_level=tuple(
            replace(s, entities=_propagate_in_list(s.entities, scope))
            for s in annotation.sentence_level
        ),
    )


def _negate_orphans_in_list(entities, bare_policy: str) -> tuple[AnnotatedEntity, ...]:
    if not entities:
        return entities
    adj = _adjacency(entities)
    out = []
    for i, e in enumerate(entities):
        if e.kind is not EntityKind.ANATOMY:
            out.append(e)
            continue
        obs_neighbors = [
            entities[j] for j in adj[i] if entities[j].kind is EntityKind.OBSERVATION
        ]
        if obs_neighbors:
            if not any(o.assertion is Assertion.PRESENT for o in obs_neighbors):
                out.append(replace(e, assertion=Assertion.ABSENT))
            else:
                out.append(e)
        elif bare_policy == "absent":
            out.append(replace(e, assertion=Assertion.ABSENT))
        else:
            # A bare anatomy mention is not a finding claim; leave it alone.
            out.append(e)
    return tuple(out)


def negate_orphan_anatomies(
    annotation: ReportAnnotation, config: AssertionRuleConfig = AssertionRuleConfig()
) -> ReportAnnotation:
    """Negate anatomies whose related observations are all non-positive."""
    policy = config.bare_anatomy_assertion
    return replace(
        annotation,
        report_level=_negate_orphans_in_list(annotation.report_level, policy),
        sentence_level=tuple(
            replace(s, entities=_negate_orphans_in_list(s.entities, policy))
            for s in annotation.sentence_level
        ),
    )


def _compile_cues(cues: Iterable[str]) -> re.Pattern:
    alternatives = "|".join(re.escape(c) for c in sorted(cues, key=len, reverse=True))
    return re.compile(rf"\b(?:{alternatives})\b", re.IGNORECASE)


def _head_index(entities, modify_relations) -> int | None:
    if len(entities) == 1:
        return 0
    # Two entities: one must modify the other; the target is the head.
    for i, e in enumerate(entities):
        for rel_type, target in e.relations:
            if rel_type in modify_relations and target != i:
                return target
    return None


def fix_short_phrase_assertions(
    annotation: ReportAnnotation,
    cues: tuple[str, ...] | None = None,
    config: AssertionRuleConfig = AssertionRuleConfig(),
) -> ReportAnnotation:
    """Override model assertions for short noun-phrase sentences.

    Sentences with a single head entity plus at most one modifier are forced
    to present unless a negation cue occurs in the sentence text, in which
    case they are forced to absent.  Longer sentences are untouched.
    """
    if cues is None:
        cues = load_cue_lexicon()
    cue_re = _compile_cues(cues)
    sentences = []
    for s in annotation.sentence_level:
        ents = s.entities
        if not ents or len(ents) > config.short_phrase_max_entities:
            sentences.append(s)
            continue
        head = _head_index(ents, config.modify_relations)
        if head is None:
            sentences.append(s)
            continue
        start, end = ents[head].span
        if end - start + 1 > config.short_phrase_max_head_tokens:
            sentences.append(s)
            continue
        forced = Assertion.ABSENT if cue_re.search(s.text) else Assertion.PRESENT
        sentences.append(
            replace(s, entities=tuple(replace(e, assertion=forced) for e in ents))
        )
    return replace(annotation, sentence_level=tuple(sentences))


def apply_assertion_rules(
    annotation: ReportAnnotation,
    cues: tuple[str, ...] | None = None,
    config: AssertionRuleConfig = AssertionRuleConfig(),
) -> ReportAnnotation:
    """The full correction pipeline in its documented order."""
    annotation = propagate_negations(annotation, config)
    annotation = negate_orphan_anatomies(annotation, config)
    annotation = fix_short_phrase_assertions(annotation, cues, config)
    return annotation


def _normalize(text: str) -> str:
    return " ".join(text.casefold().split())


def _modifier_closure(entities, index: int, modify_relations) -> set[int]:
    """The entity plus everything that (transitively) modifies it."""
    modifiers_of: dict[int, set[int]] = defaultdict(set)
    for i, e in enumerate(entities):
        for rel_type, target in e.relations:
            if rel_type in modify_relations:
                modifiers_of[target].add(i)
    closure = {index}
    stack = [index]
    while stack:
        node = stack.pop()
        for m in modifiers_of[node]:
            if m not in closure:
                closure.add(m)
                stack.append(m)
    return closure


def _entity_mentions(entities, offset: int, source: MentionSource, modify_relations):
    mentions = []
    for i, e in enumerate(entities):
        members = sorted(_modifier_closure(entities, i, modify_relations), key=lambda j: entities[j].span)
        context = " ".join(entities[j].tokens for j in members)
        mentions.append(
            Mention(
                isolated_text=e.tokens,
                context_text=context,
                kind=e.kind,
                assertion=e.assertion,
                source=source,
                span=(offset + e.span[0], offset + e.span[1]),
            )
        )
    return mentions


def _resolve_assertion(mentions: list[Mention]) -> Assertion:
    return max((m.assertion for m in mentions), key=lambda a: ASSERTION_RANK[a])


def mention_to_dict(m: Mention) -> dict:
    return {
        "isolated_text": m.isolated_text,
        "context_text": m.context_text,
        "kind": m.kind.value,
        "assertion": m.assertion.value,
        "source": m.source.value,
        "span": list(m.span),
    }


def write_mentions(path: str | Path, per_report: Iterable[tuple[str, list[Mention]]]) -> None:
    """One JSON line per report: {"report_id", "mentions": [...]}; the
    mention-strings input consumed by the embedding front end."""
    with open(path, "w", encoding="utf-8") as fh:
        for report_id, mentions in per_report:
            fh.write(
                json.dumps(
                    {"report_id": report_id, "mentions": [mention_to_dict(m) for m in mentions]},
                    ensure_ascii=False,
                )
            )
            fh.write("\n")


def merge_granularities(
    annotation: ReportAnnotation, config: AssertionRuleConfig = AssertionRuleConfig()
) -> list[Mention]:
    """Union report-level and sentence-level mentions, collapsing duplicates.

    Two mentions are duplicates when their normalized isolated text and kind
    match and their report-level token spans overlap.  On assertion conflict
    the sentence level wins (local context is more reliable for negation
    scope) unless configured otherwise; the richest context text is kept.
    """
    rels = config.modify_relations
    pool = _entity_mentions(annotation.report_level, 0, MentionSource.REPORT_LEVEL, rels)
    for s in annotation.sentence_level:
        pool.extend(_entity_mentions(s.entities, s.token_offset, MentionSource.SENTENCE_LEVEL, rels))

    groups: dict[tuple[str, EntityKind], list[Mention]] = defaultdict(list)
    for m in pool:
        groups[(_normalize(m.isolated_text), m.kind)].append(m)

    merged: list[Mention] = []
    preferred_level = (
        MentionSource.SENTENCE_LEVEL
        if config.merge_conflict_policy == "sentence"
        else MentionSource.REPORT_LEVEL
    )
    for _, members in groups.items():
        members.sort(key=lambda m: m.span)
        clusters: list[list[Mention]] = []
        for m in members:
            if clusters and m.span[0] <= max(x.span[1] for x in clusters[-1]):
                clusters[-1].append(m)
            else:
                clusters.append([m])
        for cluster in clusters:
            sources = {m.source for m in cluster}
            if len(sources) > 1:
                source = MentionSource.MERGED
            else:
                source = next(iter(sources))
            favored = [m for m in cluster if m.source is preferred_level] or cluster
            assertion = _resolve_assertion(favored)
            context = min(
                cluster,
                key=lambda m: (-len(m.context_text.split()), m.source is not preferred_level, m.context_text),
            ).context_text
            span = (min(m.span[0] for m in cluster), max(m.span[1] for m in cluster))
            base = cluster[0]
            merged.append(
                Mention(
                    isolated_text=base.isolated_text,
                    context_text=context,
                    kind=base.kind,
                    assertion=assertion,
                    source=source,
                    span=span,
                )
            )
    merged.sort(key=lambda m: (m.span, _normalize(m.isolated_text), m.kind.value))
    return merged
