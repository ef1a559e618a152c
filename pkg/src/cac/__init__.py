"""Bounded cognitive agent over an explicit, append-only knowledge base.

The pieces: a deterministic embedding layer (`embedder`), the append-only
knowledge base with similarity retrieval (`kb`), backends for action/content
generation (`backend`), the goal-stack agent (`agent`), the teacher
compilation loop (`teacher`), analysis probes (`harness`), persistence and
run machinery (`store`, `runs`, `config`), the HTTP service (`service`), and
the `cac` CLI (`cli`).
"""

from .agent import (
    AgentConfig,
    AttemptResult,
    ModelState,
    Problem,
    StepRecord,
    apply_action,
    grade,
    render_prompt,
    run_attempt,
    score_options,
    select_action,
)
from .backend import (
    ActionTag,
    BackendRequest,
    BackendResponse,
    ChatCompletionsBackend,
    ChatEndpoint,
    RecordingBackend,
    ReplayBackend,
    ScriptedBackend,
    ScriptedBackendTable,
    ScriptedRule,
)
from .embedder import (
    EmbedderConfig,
    EmbeddingVector,
    ReferenceEmbedder,
    RemoteEmbedder,
    build_embedder,
    cosine,
    embed,
)
from .errors import (
    BackendError,
    CacError,
    ConfigurationError,
    ConflictError,
    DimensionMismatchError,
    ReplayError,
    StoreError,
    ValidationError,
)
from .harness import (
    AblationReport,
    FanProbeConfig,
    FanReport,
    ablate_and_rerun,
    corpus_stats,
    fan_effect_probe,
    retrieval_oracle,
)
from .kb import (
    AblationView,
    DeclarativeMemory,
    DMDraft,
    KnowledgeBase,
    Provenance,
    RetrievalHit,
    RetrievalQuery,
    ScoreWeights,
    ablation_view,
    append_dms,
    preview_hits,
    retrieve,
    score_dm,
)
from .teacher import (
    CheatFilterConfig,
    CompilationLog,
    CompilationStats,
    CompileConfig,
    ScriptedTeacher,
    ToolCall,
    cheat_filter,
    compile_corpus,
    compile_problem,
    handle_tool_call,
)

__version__ = "0.1.0"
