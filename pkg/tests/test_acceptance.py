"""Acceptance suite: one test per release criterion, each printing a
pass/fail line with its elapsed time against the stated runtime limit.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines as they complete.
"""

from __future__ import annotations

import json
import math
import random
import time
from contextlib import contextmanager

import httpx
import pytest

from cac.agent import AgentConfig, run_attempt
from cac.backend import ChatCompletionsBackend, ChatEndpoint
from cac.cli import main as cac_main
from cac.config import BackendProfile, load_config
from cac.embedder import EmbedderConfig, ReferenceEmbedder
from cac.fixtures import (
    EXPECTED_PREDICTED,
    EXPECTED_STACKS,
    EXPECTED_TAGS,
    FINAL_OPTION_PROBS,
    fiber_agent_config,
    fiber_backend,
    fiber_backend_table,
    fiber_kb,
    fiber_problem,
    fixture_embedder,
)
from cac.harness import (
    ablate_and_rerun,
    fan_effect_probe,
    generate_distractors,
    retrieval_oracle,
)
from cac.kb import DMDraft, KnowledgeBase, Provenance, RetrievalQuery, append_dms, retrieve
from cac.runs import execute_replay, execute_solve
from cac.scenarios import (
    GatedProblemSpec,
    build_gated_scenario,
    full_overlap_probe,
    gated_problem,
    zero_overlap_probe,
)
from cac.store import load_kb, save_kb
from cac.teacher import cheat_filter, compile_corpus

from helpers import (
    dictation_grid,
    general_fact_grid,
    random_kb,
    random_query_texts,
)

PINNED_FULL_OVERLAP_CROSSOVER = 10  # brute-force pinned: every distractor
# carries all query cues plus junk, so the target drops to rank n+1 at the
# first probed KB size with distractors (n_step = 10).


@contextmanager
def criterion(name: str, limit_s: float):
    started = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"[ACCEPTANCE FAIL] {name}")
        raise
    elapsed = time.perf_counter() - started
    print(f"[ACCEPTANCE PASS] {name} ({elapsed:.2f}s, limit {limit_s:.0f}s)")
    assert elapsed < limit_s, f"{name} took {elapsed:.2f}s, over the {limit_s:.0f}s limit"


def test_reference_trace_replay():
    """Scripted backend + 4-memory fixture KB reproduce the documented trace."""
    with criterion("reference trace replay", 1.0):
        embedder = fixture_embedder()
        result = run_attempt(
            fiber_problem(), fiber_kb(embedder), fiber_backend(), embedder, fiber_agent_config()
        )
        assert len(result.history) == 4
        assert [step.chosen_tag for step in result.history] == list(EXPECTED_TAGS)
        stacks = [result.history[0].state_before.goal_stack]
        stacks += [step.state_after.goal_stack for step in result.history]
        assert tuple(stacks) == EXPECTED_STACKS
        for letter, prob in FINAL_OPTION_PROBS.items():
            assert result.option_distribution[letter] == pytest.approx(prob, abs=1e-3)
        assert result.predicted_letter == EXPECTED_PREDICTED
        assert result.outcome == "correct"


def test_retrieval_oracle_equivalence():
    """100 randomized KBs (up to 1000 DMs) x 100 queries x k in {1,5,20}:
    production retrieval equals the brute-force oracle exactly."""
    with criterion("retrieval oracle equivalence", 60.0):
        rng = random.Random(20260809)
        embedder = ReferenceEmbedder(EmbedderConfig())
        sizes = [1000 if i < 3 else max(1, int(1000 ** rng.random())) for i in range(100)]
        for size in sizes:
            kb = random_kb(rng, size, embedder)
            for _ in range(100):
                goal, wm = random_query_texts(rng)
                query = RetrievalQuery(goal_text=goal, wm_text=wm)
                full = retrieval_oracle(kb, query, len(kb), embedder)
                for k in (1, 5, 20):
                    assert retrieve(kb, query, k, embedder=embedder) == full[:k]


def test_monotonicity_and_revision_log_replay(tmp_path):
    """Composing a 5-problem scripted corpus leaves a strict prefix chain of
    revisions whose replay reconstructs the final KB byte-identically."""
    with criterion("KB monotonicity and log replay", 5.0):
        specs = [
            GatedProblemSpec(problem=gated_problem("m0", "Monotonic question zero?"),
                             gate_description=None),
            GatedProblemSpec(problem=gated_problem("m1", "Monotonic question one?"),
                             gate_description="Monotonic gate knowledge one."),
            GatedProblemSpec(problem=gated_problem("m2", "Monotonic question two?"),
                             gate_description="Monotonic gate knowledge two.",
                             junk_before_gate=1),
            GatedProblemSpec(problem=gated_problem("m3", "Monotonic question three?"),
                             gate_description="Monotonic gate knowledge three."),
            GatedProblemSpec(problem=gated_problem("m4", "Monotonic question four?"),
                             gate_description="Monotonic gate knowledge four.",
                             junk_before_gate=2),
        ]
        backend, teacher = build_gated_scenario(specs)
        embedder = fixture_embedder()
        kb = KnowledgeBase(embedder_config=embedder.config)
        kb, stats, logs = compile_corpus(
            [s.problem for s in specs], kb, backend, teacher, embedder,
            clock=lambda: "2026-03-01T00:00:00Z",
        )
        assert stats.problems_compiled == 5
        assert kb.revision >= 5 and len(kb) == 7  # 4 gates + 3 junk memories

        path = tmp_path / "kb.jsonl"
        save_kb(kb, path)
        replayed = load_kb(path)  # load IS a batch-by-batch replay of the log
        # strict prefix chain across every persisted revision
        previous: list[str] = []
        for revision in range(replayed.revision + 1):
            ids = replayed.at_revision(revision).ids()
            assert ids[: len(previous)] == previous
            if revision > 0:
                assert len(ids) > len(previous)
            previous = ids
        # byte-identical reconstruction
        save_kb(replayed, tmp_path / "kb_replayed.jsonl")
        assert path.read_bytes() == (tmp_path / "kb_replayed.jsonl").read_bytes()


def test_ablation_flip():
    """Removing the memory the solve path depends on flips correct->incorrect
    (knowledge_dependent); a knowledge-free solver stays correct
    (prior_knowledge_suspect)."""
    with criterion("ablation flip", 5.0):
        embedder = fixture_embedder()
        spec = GatedProblemSpec(
            # the id must not appear as a word in the stem: the teacher's gate
            # draft quotes the stem, and the filter's problem-id rule would
            # (correctly) reject it
            problem=gated_problem("abl-case", "Ablation flip question about light?"),
            gate_description="Gate fact: light becomes stored chemical energy.",
        )
        backend, teacher = build_gated_scenario([spec])
        kb = KnowledgeBase(embedder_config=embedder.config)
        kb, _, _ = compile_corpus([spec.problem], kb, backend, teacher, embedder,
                                  clock=lambda: "2026-03-01T00:00:00Z")
        gate_id = kb.dms[0].id
        report = ablate_and_rerun(kb, [gate_id], spec.problem, backend, embedder, AgentConfig())
        assert report.base_outcome == "correct"
        assert report.ablated_outcome == "incorrect"
        assert report.verdict == "knowledge_dependent"

        free_spec = GatedProblemSpec(
            problem=gated_problem("free", "Knowledge-free control question?"),
            gate_description=None,
        )
        free_backend, _ = build_gated_scenario([free_spec])
        control_kb = random_kb(random.Random(1), 5, embedder)
        control = ablate_and_rerun(
            control_kb, control_kb.ids(), free_spec.problem, free_backend, embedder, AgentConfig()
        )
        assert control.base_outcome == "correct"
        assert control.ablated_outcome == "correct"
        assert control.verdict == "prior_knowledge_suspect"


def test_cheat_filter_grids():
    """>=50 answer-dictation phrasings all rejected; >=50 clean general facts
    all accepted."""
    with criterion("cheat filter grids", 1.0):
        problem = fiber_problem()
        dictations = dictation_grid(problem.correct_letter)
        assert len(dictations) >= 50
        drafts = [
            DMDraft(kind="fact", description=text, goal_condition="solve the problem",
                    wm_condition="context", provenance=Provenance(author="teacher"))
            for text in dictations
        ]
        accepted, rejected = cheat_filter(drafts, problem)
        assert accepted == [] and len(rejected) == len(dictations)

        facts = general_fact_grid()
        assert len(facts) >= 50
        drafts = [
            DMDraft(kind="fact", description=text, goal_condition="solve the problem",
                    wm_condition="context", provenance=Provenance(author="teacher"))
            for text in facts
        ]
        accepted, rejected = cheat_filter(drafts, problem)
        assert rejected == [] and len(accepted) == len(facts)


def test_fan_effect_probe():
    """Full-cue-overlap distractors push the target's rank up monotonically,
    crossing rank 1 at the pinned n; collision-free distractors never do,
    through n = 500."""
    with criterion("fan effect probe", 30.0):
        embedder = fixture_embedder()
        full_config = full_overlap_probe(n_max=500, n_step=10)
        report = fan_effect_probe(full_config, embedder)
        ranks = [row.target_rank for row in report.rows]
        assert ranks == sorted(ranks)  # nondecreasing in n
        assert report.crossover_n == PINNED_FULL_OVERLAP_CROSSOVER
        assert report.rows[0].target_rank == 1
        assert report.max_rank > 1

        # brute-force confirmation over the same generated KBs
        distractors = generate_distractors(full_config, embedder.config.dimension)
        target = DMDraft(
            kind="fact",
            description=full_config.target_description,
            goal_condition=full_config.target_goal_condition,
            wm_condition=full_config.target_wm_condition,
            provenance=Provenance(author="human"),
        )
        query = RetrievalQuery(goal_text=full_config.query_goal, wm_text=full_config.query_wm)
        for row in report.rows:
            kb = append_dms(
                KnowledgeBase(embedder_config=embedder.config),
                [target] + distractors[: row.n_distractors],
                embedder=embedder,
            )
            hits = retrieval_oracle(kb, query, len(kb), embedder)
            oracle_rank = next(
                i for i, hit in enumerate(hits, start=1) if hit.dm_id == kb.dms[0].id
            )
            assert oracle_rank == row.target_rank

        zero_report = fan_effect_probe(zero_overlap_probe(n_max=500, n_step=10), embedder)
        assert zero_report.query_collision_free is True
        assert all(row.target_rank == 1 for row in zero_report.rows)
        assert zero_report.rows[-1].n_distractors == 500


def _mock_remote_transport() -> httpx.MockTransport:
    tag_and_letter_logprobs = [
        {"token": "G", "logprob": -3.2},
        {"token": "R", "logprob": -2.9},
        {"token": "A", "logprob": -0.4},
        {"token": "B", "logprob": -0.3},
        {"token": "C", "logprob": -3.6},
        {"token": "D", "logprob": -4.1},
    ]

    def handler(request: httpx.Request) -> httpx.Response:
        body = json.loads(request.content)
        if body.get("logprobs"):
            return httpx.Response(
                200,
                json={"choices": [{"logprobs": {"content": [
                    {"top_logprobs": tag_and_letter_logprobs}
                ]}}]},
            )
        return httpx.Response(
            200, json={"choices": [{"message": {"content": "Answering directly."}}]}
        )

    return httpx.MockTransport(handler)


def test_determinism_and_replay(tmp_path):
    """Two scripted executions write byte-identical trace files, and `cac
    replay` reproduces a recorded remote-backend run offline, byte for byte."""
    with criterion("determinism and replay", 5.0):
        config = load_config(None, environ={})
        profile = BackendProfile(
            kind="scripted", scripted_table=fiber_backend_table(), name="fiber"
        )
        kb = fiber_kb(fixture_embedder())
        execute_solve(fiber_problem(), kb, profile, config, tmp_path / "runs", run_id="det-a")
        execute_solve(fiber_problem(), kb, profile, config, tmp_path / "runs", run_id="det-b")
        trace_a = (tmp_path / "runs" / "det-a" / "traces" / "fiber-mcq-001.jsonl").read_bytes()
        trace_b = (tmp_path / "runs" / "det-b" / "traces" / "fiber-mcq-001.jsonl").read_bytes()
        assert trace_a == trace_b

        # a run recorded against a (mocked) remote chat service, replayed offline
        endpoint = ChatEndpoint(url="http://remote/v1/chat/completions", model="m")
        remote_profile = BackendProfile(kind="remote", endpoint=endpoint, name="remote")
        remote_backend = ChatCompletionsBackend(endpoint, transport=_mock_remote_transport())
        manifest, result = execute_solve(
            fiber_problem(),
            KnowledgeBase(embedder_config=EmbedderConfig()),
            remote_profile,
            config,
            tmp_path / "runs",
            run_id="remote-run",
            backend_override=remote_backend,
        )
        assert result.outcome == "correct"
        # replay via the CLI, which rebuilds everything from the run dir alone
        code = cac_main(["replay", "--run", str(tmp_path / "runs" / "remote-run")])
        assert code == 0
        outcome = execute_replay(tmp_path / "runs" / "remote-run")
        assert outcome.identical


def test_compile_loop_convergence_accounting(tmp_path):
    """A corpus engineered to need 0, 1, and 3 teacher iterations produces
    iteration counts [1, 2, 4]: mean 7/3, population sd sqrt(14)/3, and one
    new memory per teacher turn."""
    with criterion("compile-loop convergence accounting", 5.0):
        specs = [
            GatedProblemSpec(problem=gated_problem("acc0", "Accounting question zero?"),
                             gate_description=None),
            GatedProblemSpec(problem=gated_problem("acc1", "Accounting question one?"),
                             gate_description="Accounting gate knowledge one."),
            GatedProblemSpec(problem=gated_problem("acc2", "Accounting question two?"),
                             gate_description="Accounting gate knowledge two.",
                             junk_before_gate=2),
        ]
        backend, teacher = build_gated_scenario(specs)
        embedder = fixture_embedder()
        kb = KnowledgeBase(embedder_config=embedder.config)
        kb, stats, logs = compile_corpus(
            [s.problem for s in specs], kb, backend, teacher, embedder,
            clock=lambda: "2026-03-01T00:00:00Z",
        )
        assert [len(log.iterations) for log in logs] == [1, 2, 4]
        assert stats.iterations_mean == pytest.approx(7.0 / 3.0, abs=1e-9)
        assert stats.iterations_sd == pytest.approx(math.sqrt(14.0) / 3.0, abs=1e-9)
        assert stats.iterations_max == 4
        assert stats.total_dms == 4  # one gate for acc1; two junk + one gate for acc2
        assert stats.problems_compiled == 3
        assert stats.kb_size_curve == (0, 0, 1, 4)
