"""The preference-weighted set-distance family.

Four measures over (CUI, assertion) sets:

    tversky             |A∩B| / (|A∩B| + a·|A\\B| + b·|B\\A|)
    symmetric           |A∩B| / (|A∩B| + b·(a·dmin + (1-a)·dmax))
    prototypical        |A∩B| / (|A∩B| + b·dmax)
    weighted            SW(A∩B) / (SW(A∩B) + max(SW(A\\B), SW(B\\A)) + SW(contr))

where dmin/dmax are the smaller/larger set difference and SW sums per-CUI
preference weights.  Intersection means same CUI with the same assertion.
A CUI asserted present on one side and absent on the other is a
contradiction; contradicted CUIs leave the intersection/difference tallies
and are charged to the contradiction term instead.

All tallies and quotients are computed in exact rational arithmetic
(``fractions.Fraction``) and rounded to float exactly once, so algebraic
identities (Jaccard/Dice special cases, scale invariance of the preference
vector, symmetry) hold bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Mapping

from .errors import ConfigError
from .graph import ConceptGraph, synonym_expand
from .linking import CuiSet
from .reports import Assertion

MEASURES = ("tversky", "symmetric", "prototypical", "weighted")

_CONTRADICTING = frozenset({Assertion.PRESENT, Assertion.ABSENT})


def _as_fraction(value) -> Fraction:
    f = Fraction(value)
    if f < 0:
        raise ConfigError(f"preference weights must be >= 0, got {value}")
    return f


@dataclass(frozen=True)
class PreferenceVector:
    """Per-semantic-type weights; types not listed fall back to the default.

    A concept's weight is the maximum (or, if configured, the sum) over its
    semantic types.  Setting a type to 0 filters it out of the comparison.
    """

    weights: Mapping[str, Fraction] = field(default_factory=dict)
    default_weight: Fraction = Fraction(1)
    aggregate: str = "max"

    def __post_init__(self):
        object.__setattr__(
            self, "weights", {k: _as_fraction(v) for k, v in dict(self.weights).items()}
        )
        object.__setattr__(self, "default_weight", _as_fraction(self.default_weight))
        if self.aggregate not in ("max", "sum"):
            raise ConfigError(f"unknown weight aggregate {self.aggregate!r}")
        if self.default_weight == 0 and not any(w > 0 for w in self.weights.values()):
            raise ConfigError("all-zero preference vector rejected")

    def weight_for(self, semantic_types: Iterable[str]) -> Fraction:
        per_type = [self.weights.get(t, self.default_weight) for t in semantic_types]
        if not per_type:
            return self.default_weight
        if self.aggregate == "sum":
            return sum(per_type, Fraction(0))
        return max(per_type)

    def scaled(self, factor) -> "PreferenceVector":
        factor = Fraction(factor)
        if factor <= 0:
            raise ConfigError("scale factor must be > 0")
        return PreferenceVector(
            weights={k: w * factor for k, w in self.weights.items()},
            default_weight=self.default_weight * factor,
            aggregate=self.aggregate,
        )


@dataclass(frozen=True)
class DistanceConfig:
    measure: str = "weighted"
    alpha: float = 0.0
    beta: float = 1.0
    contradictions_enabled: bool = True
    synonym_expansion_enabled: bool = True
    expand_both: bool = False
    synonym_transitive: bool = True
    double_count_contradictions: bool = False
    preference: PreferenceVector = field(default_factory=PreferenceVector)

    def __post_init__(self):
        if self.measure not in MEASURES:
            raise ConfigError(f"unknown measure {self.measure!r}; expected one of {MEASURES}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.beta <= 0:
            raise ConfigError(f"beta must be > 0, got {self.beta}")


@dataclass(frozen=True)
class ComparisonBreakdown:
    """The comparison's audit record.

    Weight components are exact rationals; ``score`` is their quotient
    rounded once to float.  For the unweighted measures the components are
    plain pair counts and the contradiction term is informational only.
    """

    intersection_weight: Fraction
    max_difference_weight: Fraction
    min_difference_weight: Fraction
    contradiction_weight: Fraction
    score: float
    contradicted_cuis: frozenset[str] = frozenset()
    degenerate: bool = False
    measure: str = "weighted"

    def as_dict(self) -> dict:
        return {
            "score": self.score,
            "measure": self.measure,
            "intersection_weight": float(self.intersection_weight),
            "max_difference_weight": float(self.max_difference_weight),
            "min_difference_weight": float(self.min_difference_weight),
            "contradiction_weight": float(self.contradiction_weight),
            "contradicted_cuis": sorted(self.contradicted_cuis),
            "degenerate": self.degenerate,
        }


def _pair_counts(A: CuiSet, B: CuiSet) -> tuple[int, int, int]:
    inter = sum(1 for c, a in A.elements.items() if B.elements.get(c) == a)
    return inter, len(A.elements) - inter, len(B.elements) - inter


def _quotient(numerator: Fraction, denominator: Fraction, both_empty: bool) -> tuple[float, bool]:
    if both_empty:
        return 1.0, False
    if denominator == 0:
        return 0.0, True
    return float(numerator / denominator), False


def _counting_score(measure: str, A: CuiSet, B: CuiSet, alpha: float, beta: float) -> tuple[float, bool]:
    i, a_diff, b_diff = _pair_counts(A, B)
    if measure == "tversky":
        den = Fraction(i) + Fraction(alpha) * a_diff + Fraction(beta) * b_diff
    elif measure == "symmetric":
        small, large = min(a_diff, b_diff), max(a_diff, b_diff)
        den = Fraction(i) + Fraction(beta) * (Fraction(alpha) * small + (1 - Fraction(alpha)) * large)
    else:  # prototypical
        den = Fraction(i) + Fraction(beta) * max(a_diff, b_diff)
    return _quotient(Fraction(i), den, not A.elements and not B.elements)


def tversky(A: CuiSet, B: CuiSet, alpha: float = 1.0, beta: float = 1.0) -> float:
    """Asymmetric set similarity; (1, 1) is Jaccard, (0.5, 0.5) is Dice."""
    return _counting_score("tversky", A, B, alpha, beta)[0]


def symmetric_tversky(A: CuiSet, B: CuiSet, alpha: float = 0.0, beta: float = 1.0) -> float:
    """Symmetric reformulation: the larger difference takes the (1 - alpha)
    share, so swapping the arguments cannot change the score."""
    return _counting_score("symmetric", A, B, alpha, beta)[0]


def prototypical(A: CuiSet, B: CuiSet, beta: float = 1.0) -> float:
    """Only the prototype side (the larger difference) penalizes the score."""
    return _counting_score("prototypical", A, B, 0.0, beta)[0]


def count_contradictions(A: CuiSet, B: CuiSet) -> tuple[int, frozenset[str]]:
    """CUIs asserted present on one side and absent on the other; uncertain
    never contradicts."""
    hits = frozenset(
        c
        for c, a in A.elements.items()
        if c in B.elements and {a, B.elements[c]} == _CONTRADICTING
    )
    return len(hits), hits


def _weight_lookup(A: CuiSet, B: CuiSet, preference: PreferenceVector):
    def weight(cui: str) -> Fraction:
        meta_a = A.concept_meta.get(cui)
        meta_b = B.concept_meta.get(cui)
        types: set[str] = set()
        if meta_a:
            types.update(meta_a.semantic_types)
        if meta_b:
            types.update(meta_b.semantic_types)
        return preference.weight_for(sorted(types))

    return weight


def weighted_distance(
    A: CuiSet,
    B: CuiSet,
    config: DistanceConfig = DistanceConfig(),
    graph: ConceptGraph | None = None,
) -> ComparisonBreakdown:
    """The preference-weighted measure with contradiction penalty.

    When synonym expansion is enabled (and a graph is given) the target set
    A is expanded against the candidate B before comparison; ``expand_both``
    makes the expansion symmetric.
    """
    if config.synonym_expansion_enabled and graph is not None:
        A_cmp = synonym_expand(A, B, graph, transitive=config.synonym_transitive)
        B_cmp = (
            synonym_expand(B, A, graph, transitive=config.synonym_transitive)
            if config.expand_both
            else B
        )
    else:
        A_cmp, B_cmp = A, B

    if config.contradictions_enabled:
        _, contradicted = count_contradictions(A_cmp, B_cmp)
    else:
        contradicted = frozenset()

    weight = _weight_lookup(A_cmp, B_cmp, config.preference)
    zero = Fraction(0)
    w_inter = zero
    w_a_diff = zero
    w_b_diff = zero
    w_contr = zero

    for cui in sorted(set(A_cmp.elements) | set(B_cmp.elements)):
        in_a = cui in A_cmp.elements
        in_b = cui in B_cmp.elements
        if cui in contradicted:
            w_contr += weight(cui)
            if not config.double_count_contradictions:
                continue
        if in_a and in_b and A_cmp.elements[cui] == B_cmp.elements[cui]:
            w_inter += weight(cui)
            continue
        if in_a:
            w_a_diff += weight(cui)
        if in_b:
            w_b_diff += weight(cui)

    both_empty = not A_cmp.elements and not B_cmp.elements
    w_max = max(w_a_diff, w_b_diff)
    w_min = min(w_a_diff, w_b_diff)
    score, degenerate = _quotient(w_inter, w_inter + w_max + w_contr, both_empty)
    return ComparisonBreakdown(
        intersection_weight=w_inter,
        max_difference_weight=w_max,
        min_difference_weight=w_min,
        contradiction_weight=w_contr,
        score=score,
        contradicted_cuis=contradicted,
        degenerate=degenerate,
        measure="weighted",
    )


def score_pair(
    A: CuiSet,
    B: CuiSet,
    config: DistanceConfig = DistanceConfig(),
    graph: ConceptGraph | None = None,
) -> ComparisonBreakdown:
    """Score one pair with the configured measure, returning the breakdown.

    The unweighted measures report plain pair counts as their components;
    contradictions are detected for auditability but only the weighted
    measure charges them to the denominator.
    """
    if config.measure == "weighted":
        return weighted_distance(A, B, config, graph)

    if config.synonym_expansion_enabled and graph is not None:
        A_cmp = synonym_expand(A, B, graph, transitive=config.synonym_transitive)
        B_cmp = (
            synonym_expand(B, A, graph, transitive=config.synonym_transitive)
            if config.expand_both
            else B
        )
    else:
        A_cmp, B_cmp = A, B

    score, degenerate = _counting_score(config.measure, A_cmp, B_cmp, config.alpha, config.beta)
    i, a_diff, b_diff = _pair_counts(A_cmp, B_cmp)
    if config.contradictions_enabled:
        _, contradicted = count_contradictions(A_cmp, B_cmp)
    else:
        contradicted = frozenset()
    return ComparisonBreakdown(
        intersection_weight=Fraction(i),
        max_difference_weight=Fraction(max(a_diff, b_diff)),
        min_difference_weight=Fraction(min(a_diff, b_diff)),
        contradiction_weight=Fraction(0),
        score=score,
        contradicted_cuis=contradicted,
        degenerate=degenerate,
        measure=config.measure,
    )


def replace_preference(config: DistanceConfig, preference: PreferenceVector) -> DistanceConfig:
    return replace(config, preference=preference)
