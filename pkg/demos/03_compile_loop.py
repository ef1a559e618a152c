"""Drive the failure-driven compilation loop over a scripted three-problem
corpus and watch the knowledge base grow.

Problem one needs no teaching, problem two needs one memory, and problem
three only succeeds after the teacher wastes two turns on filler, so the
iteration counts come out exactly [1, 2, 4].
"""

from __future__ import annotations

from cac.embedder import EmbedderConfig, ReferenceEmbedder
from cac.kb import KnowledgeBase
from cac.scenarios import GatedProblemSpec, build_gated_scenario, gated_problem
from cac.teacher import compile_corpus

specs = [
    GatedProblemSpec(
        problem=gated_problem("demo-easy", "Which transformation needs no taught knowledge?"),
        gate_description=None,
    ),
    GatedProblemSpec(
        problem=gated_problem("demo-one", "Which transformation stores light energy as sugar?"),
        gate_description="Green tissue converts captured light into stored sugar energy.",
    ),
    GatedProblemSpec(
        problem=gated_problem("demo-slow", "Which transformation resists the first two lessons?"),
        gate_description="Stored sugar energy originates from captured light in green tissue.",
        junk_before_gate=2,
    ),
]

backend, teacher = build_gated_scenario(specs)
embedder = ReferenceEmbedder(EmbedderConfig())
kb = KnowledgeBase(embedder_config=embedder.config)

kb, stats, logs = compile_corpus(
    [spec.problem for spec in specs], kb, backend, teacher, embedder,
    clock=lambda: "2026-03-01T00:00:00Z",
)

for log in logs:
    print(f"{log.problem_id}: {log.final_outcome} after {len(log.iterations)} iteration(s)")
    for record in log.iterations:
        taught = f", taught {len(record.accepted_ids)}" if record.accepted_ids else ""
        rejected = f", filtered {len(record.rejected)}" if record.rejected else ""
        print(f"  iteration {record.index}: attempt {record.attempt.outcome}{taught}{rejected}")

print()
print(f"iterations per problem: {[len(log.iterations) for log in logs]}")
print(f"mean {stats.iterations_mean:.3f}, population sd {stats.iterations_sd:.3f}, "
      f"max {stats.iterations_max}")
print(f"KB growth curve: {list(stats.kb_size_curve)} (+{stats.total_dms} memories)")
print()
print("final knowledge base:")
for dm in kb.dms:
    origin = f"{dm.provenance.problem_id} iter {dm.provenance.compile_iteration}"
    print(f"  [{dm.id}] ({origin}) {dm.description[:60]}")
