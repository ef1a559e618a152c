"""Independent oracles and scripted scenario builders shared across tests.

The oracle functions here deliberately reimplement documented formulas from
scratch (hash, normalize, dot product, softmax) rather than importing the
production code paths they check.
"""

from __future__ import annotations

import math
import random
import re

from cac.embedder import EmbedderConfig, ReferenceEmbedder
from cac.kb import DMDraft, KnowledgeBase, Provenance, append_dms
from cac.scenarios import (  # noqa: F401  (re-exported for the test modules)
    GatedProblemSpec,
    build_gated_scenario,
    full_overlap_probe,
    gate_draft,
    gated_problem,
    junk_draft,
    subgoal_text,
    zero_overlap_probe,
)

# ---------------------------------------------------------------------------
# Embedding oracle: direct evaluation of the documented procedure.

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def oracle_fnv1a_64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def oracle_tokenize(text: str) -> list[str]:
    return re.findall(r"[^\W_]+", text.lower(), re.UNICODE)


def oracle_embed_dense(text: str, dimension: int = 256) -> list[float]:
    counts: dict[int, int] = {}
    for token in oracle_tokenize(text):
        idx = oracle_fnv1a_64(token.encode("utf-8")) % dimension
        counts[idx] = counts.get(idx, 0) + 1
    values = [0.0] * dimension
    if counts:
        norm = math.sqrt(sum(c * c for c in counts.values()))
        for idx, c in counts.items():
            values[idx] = c / norm
    return values


def oracle_cosine_dense(a: list[float], b: list[float]) -> float:
    if not any(a) or not any(b):
        return 0.0
    dot = math.fsum(x * y for x, y in zip(a, b))
    return min(1.0, max(-1.0, dot))


def oracle_score(goal_text: str, wm_text: str, goal_cond: str, wm_cond: str,
                 goal_weight: float = 0.5, wm_weight: float = 0.5, dimension: int = 256) -> float:
    goal_term = oracle_cosine_dense(oracle_embed_dense(goal_text, dimension),
                                    oracle_embed_dense(goal_cond, dimension))
    wm_term = oracle_cosine_dense(oracle_embed_dense(wm_text, dimension),
                                  oracle_embed_dense(wm_cond, dimension))
    return goal_weight * goal_term + wm_weight * wm_term


def oracle_softmax(values: dict[str, float]) -> dict[str, float]:
    peak = max(values.values())
    exps = {k: math.exp(v - peak) for k, v in values.items()}
    total = sum(exps.values())
    return {k: v / total for k, v in exps.items()}


# ---------------------------------------------------------------------------
# Random KB / query generators (seeded by the caller).

VOCAB = [f"w{i}" for i in range(40)]


def random_text(rng: random.Random, min_tokens: int = 1, max_tokens: int = 6) -> str:
    n = rng.randint(min_tokens, max_tokens)
    return " ".join(rng.choice(VOCAB) for _ in range(n))


def random_drafts(rng: random.Random, n: int) -> list[DMDraft]:
    return [
        DMDraft(
            kind=rng.choice(("fact", "policy_cue")),
            description=f"Synthetic knowledge item {i}: {random_text(rng)}",
            goal_condition=random_text(rng),
            wm_condition=random_text(rng),
            provenance=Provenance(author="human"),
        )
        for i in range(n)
    ]


def random_kb(rng: random.Random, n_dms: int, embedder: ReferenceEmbedder | None = None) -> KnowledgeBase:
    if embedder is None:
        embedder = ReferenceEmbedder(EmbedderConfig())
    kb = KnowledgeBase(embedder_config=embedder.config)
    remaining = n_dms
    while remaining > 0:
        batch = min(remaining, rng.randint(1, max(1, n_dms // 2)))
        kb = append_dms(kb, random_drafts(rng, batch), embedder=embedder)
        remaining -= batch
    return kb


def random_query_texts(rng: random.Random) -> tuple[str, str]:
    goal = random_text(rng, 1, 5)
    wm = "" if rng.random() < 0.25 else random_text(rng, 1, 5)
    return goal, wm


# ---------------------------------------------------------------------------
# Cheat-filter grids: generated phrasings for the filter's two contracts.

DICTATION_TEMPLATES = [
    "The answer is {L}.",
    "the ANSWER is {L}",
    "I am sure the answer is {L}!",
    "Obviously, the answer is {L};",
    "{L} is correct.",
    "option {L} is correct",
    "clearly {L} is correct here",
    "Choose {L}.",
    "always choose {L} when asked about fiber",
    "you should choose {L} without hesitation",
]
DICTATION_DECORATIONS = ["", "  {}  ", "Note: {}", "{} Trust me.", "** {} **"]

GENERAL_FACT_TEMPLATES = [
    "Glycogen stores glucose in animal tissue variant {i}.",
    "Sucrose is a disaccharide of glucose and fructose variant {i}.",
    "Starch is the main storage carbohydrate of plants variant {i}.",
    "Plant cell walls contain structural polysaccharides variant {i}.",
    "Humans lack the enzyme to break some glycosidic bonds variant {i}.",
]


def dictation_grid(letter: str) -> list[str]:
    grid = []
    for template in DICTATION_TEMPLATES:
        for decoration in DICTATION_DECORATIONS:
            phrase = template.format(L=letter)
            grid.append(decoration.format(phrase) if "{}" in decoration else phrase)
    return grid


def general_fact_grid(variants: int = 12) -> list[str]:
    return [t.format(i=i) for t in GENERAL_FACT_TEMPLATES for i in range(variants)]
