"""Schema matching and mapping assistant.

Builds ranked attribute alignments between relational schemas with a sampled
LLM behind a replaceable gateway, represents and executes mapping rules,
scores predicted mappings against gold ones, and serves a human review loop.
"""

from .model import (
    AttributeDef,
    BroadType,
    Correspondence,
    ForeignKey,
    Instance,
    LabeledNull,
    RelationDef,
    SchemaDef,
    classify_broad_type,
    load_schema,
    save_schema,
    sample_values,
)
from .rules import (
    Atom,
    Constant,
    FilterPred,
    Rule,
    RuleClass,
    RuleMapping,
    Transform,
    Variable,
    classify_rule,
    lrd_translation,
    relations_of_rule,
)
from .transforms import TransformRegistry, apply_transform
from .chase import chase
from .sqlscript import parse_rule_script, render_mapping_sql, render_sql
from .validation import validate_instance
from .prompts import (
    Direction,
    PromptKind,
    PromptSpec,
    TransformOptions,
    build_mapgen_prompt,
    build_match_prompt,
    build_rank_prompt,
    serialize_relation,
)
from .gateway import (
    CompletionRequest,
    CompletionResponse,
    Gateway,
    HttpBackend,
    MockBackend,
    RecordingBackend,
    option_logprobs,
    parse_structured,
)
from .pipeline import (
    AggregationMethod,
    FusionMethod,
    MatchConfig,
    MatchResult,
    ScoredCandidate,
    aggregate,
    confidence_score,
    early_stop,
    fuse,
    prefilter,
    run_match,
    sample_candidates,
    stable_match,
)
from .evaluation import (
    OverlapScore,
    generate_eval_instance,
    join_overlap,
    metrics_at_k,
    plan_chunks,
    plan_chunks_overlap_aware,
    row_set_metrics,
    run_mrpp_experiment,
    table_overlap,
)
from .service import AssistantService, JobKind, JobState, JobStore, Verdict

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
