"""Post-compilation analysis: does success really depend on the knowledge?

Three probes: an independent brute-force retrieval oracle (recomputes every
score from raw text, ignoring cached keys), knowledge ablation against answer
persistence, and synthetic fan-effect curves showing retrieval degrade as
distractors share cues with a query. Plus corpus-level compile statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from .agent import AgentConfig, AttemptResult, Problem, run_attempt
from .backend import Backend
from .embedder import Embedder, EmbedderConfig, build_embedder, token_index, tokenize
from .errors import ValidationError
from .kb import (
    DMDraft,
    KBView,
    KnowledgeBase,
    Provenance,
    RetrievalQuery,
    RetrievalHit,
    ScoreWeights,
    ablation_view,
    append_dms,
    retrieve,
)
from .teacher import CompilationLog, CompilationStats, stats_from_logs

VERDICT_KNOWLEDGE_DEPENDENT = "knowledge_dependent"
VERDICT_PRIOR_KNOWLEDGE_SUSPECT = "prior_knowledge_suspect"
VERDICT_INCONCLUSIVE = "inconclusive"


def _oracle_dot(query_vec, key_vec) -> float:
    # Correctly rounded dot product over the query's nonzero components; the
    # skipped terms are exact zeros, so this equals the dense fsum bit-for-bit.
    if query_vec.is_zero or key_vec.is_zero:
        return 0.0
    key_values = key_vec.values
    dot = math.fsum(v * key_values[i] for i, v in query_vec.nonzero.items())
    return min(1.0, max(-1.0, dot))


def retrieval_oracle(
    kb_view: KBView,
    query: RetrievalQuery,
    k: int,
    embedder: Embedder | None = None,
    weights: ScoreWeights = ScoreWeights(),
) -> list[RetrievalHit]:
    """Exhaustive-scan reference ranking.

    Re-embeds every memory's condition texts (never reads the cached keys),
    scores with its own dot product, full stable sort, earlier-id tie rule.
    Intentionally shares no retrieval/scoring/sorting code with the production
    path; a stale key cache makes the two disagree, by design.
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    if embedder is None:
        embedder = build_embedder(kb_view.embedder_config)
    q_goal = embedder.embed(query.goal_text)
    q_wm = embedder.embed(query.wm_text)
    rows: list[tuple[float, int, str]] = []
    for dm in kb_view.live_dms():
        goal_term = _oracle_dot(q_goal, embedder.embed(dm.goal_condition))
        wm_term = _oracle_dot(q_wm, embedder.embed(dm.wm_condition))
        rows.append((weights.goal * goal_term + weights.wm * wm_term, dm.seq, dm.id))
    rows.sort(key=lambda row: (-row[0], row[1]))
    return [RetrievalHit(dm_id=dm_id, score=score) for score, _, dm_id in rows[:k]]


@dataclass(frozen=True)
class AblationReport:
    problem_id: str
    base_outcome: str
    removed_ids: tuple[str, ...]
    ablated_outcome: str
    verdict: str
    base_result: AttemptResult
    ablated_result: AttemptResult
    base_trace_ref: str | None = None
    ablated_trace_ref: str | None = None

    def to_dict(self) -> dict:
        return {
            "problem_id": self.problem_id,
            "base_outcome": self.base_outcome,
            "removed_ids": list(self.removed_ids),
            "ablated_outcome": self.ablated_outcome,
            "verdict": self.verdict,
            "base_trace_ref": self.base_trace_ref,
            "ablated_trace_ref": self.ablated_trace_ref,
            "base_result": self.base_result.to_dict(),
            "ablated_result": self.ablated_result.to_dict(),
        }


def ablation_verdict(base_outcome: str, ablated_outcome: str) -> str:
    """Pure function of the two outcomes.

    Base not correct gives no signal (inconclusive). A correct base that
    survives ablation points at prior knowledge inside the model; one that
    flips to any non-correct outcome shows the answer depended on the removed
    knowledge.
    """
    if base_outcome != "correct":
        return VERDICT_INCONCLUSIVE
    if ablated_outcome == "correct":
        return VERDICT_PRIOR_KNOWLEDGE_SUSPECT
    return VERDICT_KNOWLEDGE_DEPENDENT


def ablate_and_rerun(
    kb: KnowledgeBase,
    dm_ids: Sequence[str],
    problem: Problem,
    backend: Backend,
    embedder: Embedder | None = None,
    config: AgentConfig = AgentConfig(),
    *,
    base_result: AttemptResult | None = None,
) -> AblationReport:
    """Run the attempt on the base KB and on the ablated view, then compare.

    Unknown ids fail before any backend call. A precomputed base result may be
    supplied to avoid re-running the baseline.
    """
    view = ablation_view(kb, dm_ids)  # validates ids up front
    if embedder is None:
        embedder = build_embedder(kb.embedder_config)
    if base_result is None:
        base_result = run_attempt(problem, kb, backend, embedder, config)
    ablated_result = run_attempt(problem, view, backend, embedder, config)
    return AblationReport(
        problem_id=problem.id,
        base_outcome=base_result.outcome,
        removed_ids=tuple(sorted(dm_ids)),
        ablated_outcome=ablated_result.outcome,
        verdict=ablation_verdict(base_result.outcome, ablated_result.outcome),
        base_result=base_result,
        ablated_result=ablated_result,
    )


def top_retrieved_ids(result: AttemptResult) -> list[str]:
    """Convenience ablation-candidate selector: every DM the trace retrieved.

    Heuristic only; which knowledge counts as "core" is a judgment call that
    stays with the caller.
    """
    seen: list[str] = []
    for step in result.history:
        if step.retrieved and step.retrieved.dm_id not in seen:
            seen.append(step.retrieved.dm_id)
    return seen


@dataclass(frozen=True)
class FanProbeConfig:
    """A target memory, its designed query, and a distractor recipe.

    Distractor conditions are built from the templates by substituting a
    counter for ``{i}``. With ``avoid_query_collisions`` the generator skips
    any instantiation whose tokens hash into a bucket the query occupies, so
    distractor scores are exactly zero against the query (the zero-overlap
    regime). ``n_max``/``n_step`` control the KB sizes probed:
    n = 0, n_step, 2*n_step, ..., n_max distractors.
    """

    query_goal: str
    query_wm: str
    target_description: str
    target_goal_condition: str
    target_wm_condition: str
    distractor_goal_template: str
    distractor_wm_template: str
    n_max: int = 500
    n_step: int = 10
    avoid_query_collisions: bool = False
    weights: ScoreWeights = field(default_factory=ScoreWeights)

    def to_dict(self) -> dict:
        return {
            "query_goal": self.query_goal,
            "query_wm": self.query_wm,
            "target_description": self.target_description,
            "target_goal_condition": self.target_goal_condition,
            "target_wm_condition": self.target_wm_condition,
            "distractor_goal_template": self.distractor_goal_template,
            "distractor_wm_template": self.distractor_wm_template,
            "n_max": self.n_max,
            "n_step": self.n_step,
            "avoid_query_collisions": self.avoid_query_collisions,
        }

    @classmethod
    def from_dict(cls, data) -> "FanProbeConfig":
        return cls(
            query_goal=data["query_goal"],
            query_wm=data.get("query_wm", ""),
            target_description=data["target_description"],
            target_goal_condition=data["target_goal_condition"],
            target_wm_condition=data["target_wm_condition"],
            distractor_goal_template=data["distractor_goal_template"],
            distractor_wm_template=data["distractor_wm_template"],
            n_max=int(data.get("n_max", 500)),
            n_step=int(data.get("n_step", 10)),
            avoid_query_collisions=bool(data.get("avoid_query_collisions", False)),
        )


@dataclass(frozen=True)
class FanProbeRow:
    n_distractors: int
    target_rank: int  # 1-based
    target_score: float
    margin: float | None  # target score minus best non-target score; None when alone

    def to_dict(self) -> dict:
        return {
            "n_distractors": self.n_distractors,
            "target_rank": self.target_rank,
            "target_score": self.target_score,
            "margin": self.margin,
        }


@dataclass(frozen=True)
class FanReport:
    config: FanProbeConfig
    rows: tuple[FanProbeRow, ...]
    crossover_n: int | None  # first probed n with target rank > 1
    max_rank: int
    query_collision_free: bool  # distractor tokens never hash into query buckets

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "rows": [row.to_dict() for row in self.rows],
            "crossover_n": self.crossover_n,
            "max_rank": self.max_rank,
            "query_collision_free": self.query_collision_free,
        }

    def csv_lines(self) -> list[str]:
        lines = ["n_distractors,target_rank,target_score,margin"]
        for row in self.rows:
            margin = "" if row.margin is None else repr(row.margin)
            lines.append(f"{row.n_distractors},{row.target_rank},{repr(row.target_score)},{margin}")
        return lines


def _query_bucket_set(config: FanProbeConfig, dimension: int) -> set[int]:
    buckets: set[int] = set()
    for text in (config.query_goal, config.query_wm):
        for token in tokenize(text):
            buckets.add(token_index(token, dimension))
    return buckets


def _collides(texts: Sequence[str], buckets: set[int], dimension: int) -> bool:
    return any(
        token_index(token, dimension) in buckets for text in texts for token in tokenize(text)
    )


def generate_distractors(config: FanProbeConfig, dimension: int) -> list[DMDraft]:
    """Instantiate the distractor templates, optionally skipping any
    instantiation whose tokens land in a query hash bucket."""
    buckets = _query_bucket_set(config, dimension)
    drafts: list[DMDraft] = []
    counter = 0
    budget = 50 * config.n_max + 1000  # generous scan bound before giving up
    while len(drafts) < config.n_max and counter < budget:
        counter += 1
        goal = config.distractor_goal_template.replace("{i}", str(counter))
        wm = config.distractor_wm_template.replace("{i}", str(counter))
        if config.avoid_query_collisions and _collides((goal, wm), buckets, dimension):
            continue
        drafts.append(
            DMDraft(
                kind="fact",
                description=f"Distractor entry {counter}.",
                goal_condition=goal,
                wm_condition=wm,
                provenance=Provenance(author="human"),
            )
        )
    if len(drafts) < config.n_max:
        raise ValidationError(
            f"could not generate {config.n_max} collision-free distractors within {budget} tries"
        )
    return drafts


def fan_effect_probe(
    config: FanProbeConfig, embedder: Embedder | None = None
) -> FanReport:
    """Rank-vs-KB-size curve for the target memory under its designed query.

    For each probed n a synthetic KB holds the target (added first) plus the
    first n distractors; the target's 1-based rank and its score margin over
    the best distractor are recorded. Also reports whether the distractor
    tokens stay out of the query's hash buckets (exact zero-overlap regime).
    """
    embedder_config = embedder.config if embedder is not None else EmbedderConfig()
    if embedder is None:
        embedder = build_embedder(embedder_config)
    target = DMDraft(
        kind="fact",
        description=config.target_description,
        goal_condition=config.target_goal_condition,
        wm_condition=config.target_wm_condition,
        provenance=Provenance(author="human"),
    )
    distractors = generate_distractors(config, embedder_config.dimension)
    query = RetrievalQuery(goal_text=config.query_goal, wm_text=config.query_wm)
    query_buckets = _query_bucket_set(config, embedder_config.dimension)
    collision_free = not any(
        _collides((d.goal_condition, d.wm_condition), query_buckets, embedder_config.dimension)
        for d in distractors
    )

    rows: list[FanProbeRow] = []
    ns = list(range(0, config.n_max + 1, config.n_step))
    if ns[-1] != config.n_max:
        ns.append(config.n_max)
    for n in ns:
        kb = KnowledgeBase(embedder_config=embedder_config)
        kb = append_dms(kb, [target] + distractors[:n], embedder=embedder)
        hits = retrieve(kb, query, len(kb), embedder=embedder, weights=config.weights)
        target_id = kb.dms[0].id
        rank = next(i for i, hit in enumerate(hits, start=1) if hit.dm_id == target_id)
        target_score = next(hit.score for hit in hits if hit.dm_id == target_id)
        others = [hit.score for hit in hits if hit.dm_id != target_id]
        margin = (target_score - max(others)) if others else None
        rows.append(
            FanProbeRow(n_distractors=n, target_rank=rank, target_score=target_score, margin=margin)
        )
    crossover = next((row.n_distractors for row in rows if row.target_rank > 1), None)
    return FanReport(
        config=config,
        rows=tuple(rows),
        crossover_n=crossover,
        max_rank=max(row.target_rank for row in rows),
        query_collision_free=collision_free,
    )


def corpus_stats(logs: Sequence[CompilationLog]) -> CompilationStats:
    """Iteration statistics (population sd) and KB growth from one compile run."""
    if not logs:
        return stats_from_logs([], seed_size=0, final_size=0, curve=(0,))
    seed = logs[0].kb_size_before
    curve = [seed] + [log.kb_size_after for log in logs]
    return stats_from_logs(
        logs, seed_size=seed, final_size=logs[-1].kb_size_after, curve=curve
    )
