"""Two-stage content-moderation cascade.

A similarity router filters an item stream against a bank of high-risk
seed exemplars; a pluggable ranker backend answers single-token questions
whose logits become calibrated probabilities; fusion combines the
fine-grained and overall answers; metrics and a traffic simulator close
the evaluation loop.
"""

from .core import (
    EmbeddingVector,
    IssueTag,
    IssueTaxonomy,
    ModerationLabel,
    QuestionTarget,
    ScorePair,
    VideoItem,
    validate_item,
)
from .fusion import FusionConfig, FusionMethod, fuse, fusion_sweep
from .metrics import EvalReport, OnlineReport, ScoredSample, evaluate_scores, max_f1, online_report, pr_auc, roc_auc
from .pipeline import DecisionRecord, FinalState, RunConfig, compare_runs, run_cascade, simulate_stream
from .ranker import (
    BackendRequest,
    BackendResponse,
    PromptTemplate,
    QuestionSpec,
    RankerVerdict,
    TemplateId,
    default_templates,
    rank,
    render_prompt,
    transform_logits,
)
from .backends import HttpBackend, MockBackend
from .router import (
    Provenance,
    RouterDecision,
    SeedBank,
    SeedEntry,
    add_manual_seed,
    calibrate_threshold,
    cosine_similarity,
    remove_seed,
    route,
    select_seeds_centroid,
)

__version__ = "0.1.0"
