"""cuisim: ontology-backed similarity, retrieval and labeling for radiology
report concept sets."""

from .errors import ConfigError, CuisimError, DataError, IngestError
from .graph import (
    ConceptGraph,
    DiscoveryResult,
    EdgeKind,
    bfs_discover,
    build_graph,
    discover_candidate_reports,
    load_graph,
    save_graph,
    synonym_expand,
)
from .ingest import (
    ConceptCatalog,
    ConceptRecord,
    RelationRecord,
    SemanticTypeAssignment,
    build_catalog,
    ingest_rrf,
    load_catalog,
    parse_mrconso,
    parse_mrrel,
    parse_mrsty,
    save_catalog,
)
from .labeler import (
    LabelAssignment,
    LabelComparison,
    LabelVocabulary,
    build_label_vocabulary,
    containment_index,
    label_dataset,
    phase1_label,
    phase2_select,
)
from .linking import (
    CuiSet,
    LinkCandidate,
    LinkedConcept,
    MentionCandidates,
    SemanticTypeConfig,
    filter_candidates,
    link_report,
    read_cui_sets,
    report_to_cui_set,
    select_best,
    write_cui_sets,
)
from .reports import (
    AnnotatedEntity,
    Assertion,
    AssertionRuleConfig,
    EntityKind,
    Mention,
    MentionSource,
    ReportAnnotation,
    apply_assertion_rules,
    fix_short_phrase_assertions,
    load_cue_lexicon,
    merge_granularities,
    negate_orphan_anatomies,
    propagate_negations,
)
from .retrieval import (
    HarnessPlan,
    RankedResult,
    ReportIndex,
    build_index,
    run_harness,
    search,
)
from .similarity import (
    ComparisonBreakdown,
    DistanceConfig,
    PreferenceVector,
    count_contradictions,
    prototypical,
    score_pair,
    symmetric_tversky,
    tversky,
    weighted_distance,
)

__version__ = "0.1.0"
