"""Walk through the deterministic embedding layer and KB retrieval.

Shows: hashed bag-of-words embeddings, the zero-vector convention for empty
text, cosine similarity, appending declarative memories, top-k retrieval with
score components, and a non-destructive ablation view.
"""

from __future__ import annotations

from cac.embedder import EmbedderConfig, ReferenceEmbedder, cosine
from cac.kb import (
    DMDraft,
    KnowledgeBase,
    Provenance,
    RetrievalQuery,
    ablation_view,
    append_dms,
    preview_hits,
    retrieve,
)

embedder = ReferenceEmbedder(EmbedderConfig())

print("== embeddings ==")
vec = embedder.embed("Cellulose is dietary fiber")
print(f"'Cellulose is dietary fiber' -> {len(vec.nonzero)} active buckets, unit norm")
print("case/punctuation insensitive:",
      vec == embedder.embed("cellulose IS dietary-fiber"))
print("empty text is the zero vector:", embedder.embed("").is_zero)
print("shared tokens raise similarity:",
      f"{cosine(embedder.embed('starch is storage'), embedder.embed('glycogen is storage')):.3f}")
print("disjoint tokens score zero:",
      cosine(embedder.embed("alpha beta"), embedder.embed("gamma delta")))

print()
print("== an explicit knowledge base ==")
kb = KnowledgeBase(embedder_config=embedder.config)
drafts = [
    DMDraft(
        kind="fact",
        description="Cellulose is dietary fiber in plants and is not digestible by humans.",
        goal_condition="identify the dietary fiber option",
        wm_condition="the question concerns carbohydrates",
        provenance=Provenance(author="human"),
    ),
    DMDraft(
        kind="fact",
        description="Glycogen is the storage polysaccharide of animals.",
        goal_condition="identify the animal storage carbohydrate",
        wm_condition="the question concerns carbohydrates",
        provenance=Provenance(author="human"),
    ),
    DMDraft(
        kind="policy_cue",
        description="If the working memory already names the fiber, answer the question.",
        goal_condition="solve the question",
        wm_condition="cellulose is the dietary fiber",
        provenance=Provenance(author="human"),
    ),
]
kb = append_dms(kb, drafts, embedder=embedder)
print(f"appended {len(kb)} memories -> revision {kb.revision}")

query = RetrievalQuery(
    goal_text="identify the dietary fiber option",
    wm_text="the question concerns carbohydrates",
)
print()
print("top-2 for the fiber query:")
for hit in retrieve(kb, query, 2, embedder=embedder):
    print(f"  {hit.dm_id}  score={hit.score:.4f}")

print()
print("score components via the shared preview payload:")
for item in preview_hits(kb, query.goal_text, query.wm_text, 2, embedder=embedder):
    print(f"  rank {item['rank']}: goal_term={item['goal_term']:.3f} "
          f"wm_term={item['wm_term']:.3f}  {item['description'][:60]}")

print()
print("== ablation view (the base KB never changes) ==")
top_id = retrieve(kb, query, 1, embedder=embedder)[0].dm_id
view = ablation_view(kb, [top_id])
print("removed:", top_id)
print("new top-1:", retrieve(view, query, 1, embedder=embedder)[0].dm_id)
print("base KB still has", len(kb), "memories at revision", kb.revision)
