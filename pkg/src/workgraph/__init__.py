"""Work-activity ontology engine: DAG queries, classification into the
ontology, hierarchy-aware agreement, roll-up tallies, market allocation and
sunburst rendering."""

from .aggregation import Assignment, NodeTally, coverage, percentages, slice_by_year, tally, top_activities
from .agreement import AnnotationSet, bootstrap_ci, mean_pairwise_kappa, mean_wup, weighted_kappa, wup
from .classification import (
    ClassificationResult,
    ScriptedModel,
    Strategy,
    batch_classify,
    classify,
    detect_hallucination,
    specificity,
)
from .ingest import (
    AppRecord,
    RobotSubclass,
    SegmentShare,
    decompose_task,
    emit_prompt_ontology,
    load_records,
    load_snapshot,
    save_snapshot,
)
from .market import MarketConfig, adjustment_factor, app_market_shares, relative_prices, robot_revenue_pipeline
from .ontology import (
    ActivityNode,
    ActivitySnapshot,
    NodeKind,
    SpecializationEdge,
    closure,
    depth,
    resolve_property,
    snapshot_stats,
    validate,
)
from .search import HashingEmbedder, hybrid_search, keyword_search, near_duplicates, semantic_search
from .viz import build_sunburst, emit_doc, emit_svg

__version__ = "0.1.0"

__all__ = [
    "ActivityNode",
    "ActivitySnapshot",
    "AnnotationSet",
    "AppRecord",
    "Assignment",
    "ClassificationResult",
    "HashingEmbedder",
    "MarketConfig",
    "NodeKind",
    "NodeTally",
    "RobotSubclass",
    "ScriptedModel",
    "SegmentShare",
    "SpecializationEdge",
    "Strategy",
    "adjustment_factor",
    "app_market_shares",
    "batch_classify",
    "bootstrap_ci",
    "build_sunburst",
    "classify",
    "closure",
    "coverage",
    "decompose_task",
    "depth",
    "detect_hallucination",
    "emit_doc",
    "emit_prompt_ontology",
    "emit_svg",
    "hybrid_search",
    "keyword_search",
    "load_records",
    "load_snapshot",
    "mean_pairwise_kappa",
    "mean_wup",
    "near_duplicates",
    "percentages",
    "relative_prices",
    "resolve_property",
    "robot_revenue_pipeline",
    "save_snapshot",
    "semantic_search",
    "slice_by_year",
    "snapshot_stats",
    "specificity",
    "tally",
    "top_activities",
    "validate",
    "weighted_kappa",
    "wup",
]
