"""Knowledge ablation against answer persistence.

Two contrasting runs: an agent whose success genuinely depends on a taught
memory (removing it flips the outcome: knowledge_dependent), and an agent
that answers correctly with no retrieved knowledge at all (removal changes
nothing: prior_knowledge_suspect, the signature of latent prior knowledge).
"""

from __future__ import annotations

from cac.agent import AgentConfig
from cac.embedder import EmbedderConfig, ReferenceEmbedder
from cac.harness import ablate_and_rerun
from cac.kb import KnowledgeBase
from cac.scenarios import GatedProblemSpec, build_gated_scenario, gated_problem
from cac.teacher import compile_corpus

embedder = ReferenceEmbedder(EmbedderConfig())

print("== case 1: success depends on the compiled knowledge ==")
spec = GatedProblemSpec(
    problem=gated_problem("dependent-case", "Which transformation stores light as sugar?"),
    gate_description="Captured light ends up as stored sugar energy.",
)
backend, teacher = build_gated_scenario([spec])
kb = KnowledgeBase(embedder_config=embedder.config)
kb, _, _ = compile_corpus([spec.problem], kb, backend, teacher, embedder,
                          clock=lambda: "2026-03-01T00:00:00Z")
gate_id = kb.dms[0].id
report = ablate_and_rerun(kb, [gate_id], spec.problem, backend, embedder, AgentConfig())
print(f"removed {gate_id}")
print(f"base: {report.base_outcome}  ablated: {report.ablated_outcome}")
print(f"verdict: {report.verdict}")

print()
print("== case 2: the executor never needed the knowledge ==")
free_spec = GatedProblemSpec(
    problem=gated_problem("latent-case", "Which transformation is answered from prior knowledge?"),
    gate_description=None,
)
free_backend, _ = build_gated_scenario([free_spec])
report = ablate_and_rerun(kb, kb.ids(), free_spec.problem, free_backend, embedder, AgentConfig())
print(f"removed all {len(kb)} memories")
print(f"base: {report.base_outcome}  ablated: {report.ablated_outcome}")
print(f"verdict: {report.verdict}")
print()
print("a correct answer that survives total ablation is evidence the model,")
print("not the knowledge base, supplied the answer")
