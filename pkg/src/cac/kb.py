"""The explicit knowledge base: append-only declarative memories plus retrieval.

Retrieval follows a query-key-value scheme: the agent's goal and working
memory texts are embedded as the query, each memory's two applicability
conditions are the cached keys, and the memory's description is the value
injected into the agent's prompt. The store itself is append-only; "removing"
knowledge is expressed as a non-destructive :class:`AblationView`.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Iterable, Iterator, Mapping, Sequence, Union

from .embedder import Embedder, EmbedderConfig, EmbeddingVector, build_embedder, cosine
from .errors import ValidationError

DM_KINDS = ("fact", "policy_cue")
DEFAULT_GOAL_WEIGHT = 0.5
DEFAULT_WM_WEIGHT = 0.5
DEFAULT_CREATED_AT = "1970-01-01T00:00:00Z"


@dataclass(frozen=True)
class Provenance:
    author: str = "teacher"  # "teacher" | "human"
    problem_id: str | None = None
    compile_iteration: int | None = None
    created_at: str = DEFAULT_CREATED_AT

    def __post_init__(self) -> None:
        if self.author not in ("teacher", "human"):
            raise ValidationError(f"unknown provenance author {self.author!r}", field="author")

    def to_dict(self) -> dict:
        return {
            "author": self.author,
            "problem_id": self.problem_id,
            "compile_iteration": self.compile_iteration,
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Provenance":
        return cls(
            author=data["author"],
            problem_id=data.get("problem_id"),
            compile_iteration=data.get("compile_iteration"),
            created_at=data.get("created_at", DEFAULT_CREATED_AT),
        )


@dataclass(frozen=True)
class DMDraft:
    """A declarative memory before the KB assigns its identity and keys."""

    kind: str
    description: str
    goal_condition: str
    wm_condition: str
    provenance: Provenance = Provenance()

    def validate(self) -> None:
        if self.kind not in DM_KINDS:
            raise ValidationError(f"unknown DM kind {self.kind!r}", field="kind")
        for name in ("description", "goal_condition", "wm_condition"):
            if not getattr(self, name).strip():
                raise ValidationError(f"DM draft field {name!r} must be non-empty", field=name)

    def text_fields(self) -> tuple[str, str, str]:
        return (self.description, self.goal_condition, self.wm_condition)


@dataclass(frozen=True)
class DeclarativeMemory:
    """One explicit knowledge item with cached condition-key embeddings."""

    id: str
    seq: int
    kind: str
    description: str
    goal_condition: str
    wm_condition: str
    provenance: Provenance
    key_goal: EmbeddingVector
    key_wm: EmbeddingVector


@dataclass(frozen=True)
class RetrievalQuery:
    goal_text: str
    wm_text: str = ""

    def __post_init__(self) -> None:
        if not self.goal_text.strip():
            raise ValidationError("retrieval query goal_text must be non-empty", field="goal_text")


@dataclass(frozen=True)
class RetrievalHit:
    dm_id: str
    score: float


@dataclass(frozen=True)
class ScoreWeights:
    goal: float = DEFAULT_GOAL_WEIGHT
    wm: float = DEFAULT_WM_WEIGHT


def _content_hash(draft: DMDraft) -> str:
    payload = "\x1f".join((draft.kind,) + draft.text_fields()).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()[:8]


def dm_id_for(seq: int, draft: DMDraft) -> str:
    return f"dm-{seq:06d}-{_content_hash(draft)}"


@dataclass(frozen=True)
class KnowledgeBase:
    """Append-only, immutable sequence of declarative memories.

    Each committed append batch is one revision; ``batch_sizes[r]`` is the
    number of memories batch ``r+1`` added, so any prior revision's contents
    are a strict prefix of any later one's.
    """

    embedder_config: EmbedderConfig
    dms: tuple[DeclarativeMemory, ...] = ()
    batch_sizes: tuple[int, ...] = ()

    @property
    def revision(self) -> int:
        return len(self.batch_sizes)

    def __len__(self) -> int:
        return len(self.dms)

    @cached_property
    def _by_id(self) -> dict[str, DeclarativeMemory]:
        return {dm.id: dm for dm in self.dms}

    def get(self, dm_id: str) -> DeclarativeMemory:
        try:
            return self._by_id[dm_id]
        except KeyError:
            raise ValidationError(f"unknown DM id {dm_id!r}") from None

    def ids(self) -> list[str]:
        return [dm.id for dm in self.dms]

    def live_dms(self) -> Iterator[DeclarativeMemory]:
        return iter(self.dms)

    def at_revision(self, revision: int) -> "KnowledgeBase":
        """The KB as it stood after commit ``revision`` (0 = empty)."""
        if revision < 0 or revision > self.revision:
            raise ValidationError(f"revision {revision} outside 0..{self.revision}")
        count = sum(self.batch_sizes[:revision])
        return KnowledgeBase(
            embedder_config=self.embedder_config,
            dms=self.dms[:count],
            batch_sizes=self.batch_sizes[:revision],
        )

    def describe(self) -> str:
        return f"kb(revision={self.revision}, dms={len(self.dms)})"


@dataclass(frozen=True)
class AblationView:
    """Read-only projection of a KB with selected memories removed.

    The base KB is untouched; the view is labeled with the base revision it
    was derived from so reports can cite exactly what was ablated.
    """

    base: KnowledgeBase
    removed_ids: frozenset[str]

    @property
    def embedder_config(self) -> EmbedderConfig:
        return self.base.embedder_config

    @property
    def base_revision(self) -> int:
        return self.base.revision

    def get(self, dm_id: str) -> DeclarativeMemory:
        if dm_id in self.removed_ids:
            raise ValidationError(f"DM id {dm_id!r} is removed in this ablation view")
        return self.base.get(dm_id)

    def live_dms(self) -> Iterator[DeclarativeMemory]:
        return (dm for dm in self.base.dms if dm.id not in self.removed_ids)

    def describe(self) -> str:
        return f"ablation(base_revision={self.base_revision}, removed={len(self.removed_ids)})"


KBView = Union[KnowledgeBase, AblationView]


def append_dms(
    kb: KnowledgeBase,
    drafts: Sequence[DMDraft],
    *,
    embedder: Embedder | None = None,
) -> KnowledgeBase:
    """Commit a batch of drafts as the next revision.

    Ids are assigned here, never by callers. The whole batch is embedded
    before anything is committed, so an embedder failure aborts atomically.
    An empty batch is a no-op (same revision).
    """
    if not drafts:
        return kb
    for draft in drafts:
        draft.validate()
    if embedder is None:
        embedder = build_embedder(kb.embedder_config)
    new_dms: list[DeclarativeMemory] = []
    for offset, draft in enumerate(drafts):
        seq = len(kb.dms) + offset
        new_dms.append(
            DeclarativeMemory(
                id=dm_id_for(seq, draft),
                seq=seq,
                kind=draft.kind,
                description=draft.description,
                goal_condition=draft.goal_condition,
                wm_condition=draft.wm_condition,
                provenance=draft.provenance,
                key_goal=embedder.embed(draft.goal_condition),
                key_wm=embedder.embed(draft.wm_condition),
            )
        )
    return KnowledgeBase(
        embedder_config=kb.embedder_config,
        dms=kb.dms + tuple(new_dms),
        batch_sizes=kb.batch_sizes + (len(new_dms),),
    )


def score_dm(
    dm: DeclarativeMemory,
    query: RetrievalQuery,
    embedder: Embedder,
    weights: ScoreWeights = ScoreWeights(),
) -> float:
    """weights.goal * cos(embed(goal_text), key_goal) + weights.wm * cos(embed(wm_text), key_wm)."""
    goal_term, wm_term = score_components(dm, query, embedder)
    return weights.goal * goal_term + weights.wm * wm_term


def score_components(
    dm: DeclarativeMemory, query: RetrievalQuery, embedder: Embedder
) -> tuple[float, float]:
    """The two cosine terms of a DM's score, before weighting."""
    return (
        cosine(embedder.embed(query.goal_text), dm.key_goal),
        cosine(embedder.embed(query.wm_text), dm.key_wm),
    )


def retrieve(
    kb: KBView,
    query: RetrievalQuery,
    k: int,
    *,
    embedder: Embedder | None = None,
    weights: ScoreWeights = ScoreWeights(),
) -> list[RetrievalHit]:
    """The k highest-scoring memories, ties broken by earlier id.

    Deterministic: identical (kb revision, query, k, embedder config) yields
    an identical hit list. ``retrieve(kb, q, k)`` is always a prefix of
    ``retrieve(kb, q, k + 1)`` because the underlying sort is total.
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    if embedder is None:
        embedder = build_embedder(kb.embedder_config)
    q_goal = embedder.embed(query.goal_text)
    q_wm = embedder.embed(query.wm_text)
    # Hot path: same documented formula as `embedder.cosine` (fsum over the
    # sparse intersection, clamped), evaluated with the query maps hoisted.
    goal_map = None if q_goal.is_zero else q_goal.nonzero
    wm_map = None if q_wm.is_zero else q_wm.nonzero
    gw, ww = weights.goal, weights.wm
    fsum = math.fsum
    scored: list[tuple[float, int, str]] = []
    for dm in kb.live_dms():
        score = 0.0
        if goal_map is not None:
            key = dm.key_goal
            if not key.is_zero:
                small, big = goal_map, key.nonzero
                if len(small) > len(big):
                    small, big = big, small
                dot = fsum(v * big[i] for i, v in small.items() if i in big)
                score = gw * min(1.0, max(-1.0, dot))
        if wm_map is not None:
            key = dm.key_wm
            if not key.is_zero:
                small, big = wm_map, key.nonzero
                if len(small) > len(big):
                    small, big = big, small
                dot = fsum(v * big[i] for i, v in small.items() if i in big)
                score += ww * min(1.0, max(-1.0, dot))
        scored.append((score, dm.seq, dm.id))
    scored.sort(key=lambda row: (-row[0], row[1]))
    return [RetrievalHit(dm_id=dm_id, score=score) for score, _, dm_id in scored[:k]]


def preview_hits(
    kb: KBView,
    goal_text: str,
    wm_text: str,
    k: int,
    *,
    embedder: Embedder | None = None,
    weights: ScoreWeights = ScoreWeights(),
) -> list[dict]:
    """Ranked retrieval preview with per-term score components.

    One payload shared by the teacher's preview tool, the CLI inspector, and
    the HTTP API, so every surface reports identical numbers.
    """
    if embedder is None:
        embedder = build_embedder(kb.embedder_config)
    query = RetrievalQuery(goal_text=goal_text, wm_text=wm_text)
    hits = retrieve(kb, query, k, embedder=embedder, weights=weights)
    items: list[dict] = []
    for rank, hit in enumerate(hits, start=1):
        dm = kb.get(hit.dm_id)
        goal_term, wm_term = score_components(dm, query, embedder)
        items.append(
            {
                "rank": rank,
                "dm_id": hit.dm_id,
                "score": hit.score,
                "goal_term": goal_term,
                "wm_term": wm_term,
                "kind": dm.kind,
                "description": dm.description,
                "goal_condition": dm.goal_condition,
                "wm_condition": dm.wm_condition,
            }
        )
    return items


def ablation_view(kb: KnowledgeBase, removed_ids: Iterable[str]) -> AblationView:
    """Non-destructive view of the KB without the given memories."""
    removed = frozenset(removed_ids)
    unknown = sorted(removed - set(kb.ids()))
    if unknown:
        raise ValidationError(f"unknown DM ids in ablation set: {unknown}")
    return AblationView(base=kb, removed_ids=removed)


def verify_key_cache(kb: KnowledgeBase, embedder: Embedder | None = None) -> list[str]:
    """Ids whose cached keys disagree with recomputation from the raw texts."""
    if embedder is None:
        embedder = build_embedder(kb.embedder_config)
    stale: list[str] = []
    for dm in kb.dms:
        if (
            embedder.embed(dm.goal_condition).values != dm.key_goal.values
            or embedder.embed(dm.wm_condition).values != dm.key_wm.values
        ):
            stale.append(dm.id)
    return stale


def with_stale_key(kb: KnowledgeBase, dm_id: str, key_goal: EmbeddingVector) -> KnowledgeBase:
    """Corrupt one cached key (test fixture for the cache-coherence negative control)."""
    dms = tuple(
        replace(dm, key_goal=key_goal) if dm.id == dm_id else dm for dm in kb.dms
    )
    return KnowledgeBase(embedder_config=kb.embedder_config, dms=dms, batch_sizes=kb.batch_sizes)
