"""Run execution: materialize solve/ablate/compile/probe runs on disk.

A run directory is self-contained: the manifest, a KB snapshot, every trace,
and the full backend transcript live inside it, so any run can be reproduced
offline through the replay backend.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .agent import AgentConfig, AttemptResult, Problem, run_attempt
from .backend import Backend, RecordingBackend, ReplayBackend
from .config import BackendProfile, CacConfig
from .embedder import Embedder, EmbedderConfig, ReplayEmbedder, build_embedder
from .errors import StoreError, ValidationError
from .harness import AblationReport, FanProbeConfig, FanReport, ablate_and_rerun, fan_effect_probe
from .kb import KnowledgeBase, ablation_view
from .store import (
    RunManifest,
    TranscriptWriter,
    canonical_json,
    config_hash,
    load_embedding_transcript,
    load_kb,
    load_manifest,
    load_trace,
    load_transcript,
    new_run_id,
    save_kb,
    save_manifest,
    save_trace,
    trace_lines,
    utc_now_iso,
)


@dataclass(frozen=True)
class RunPaths:
    root: Path

    @property
    def manifest(self) -> Path:
        return self.root / "manifest.json"

    @property
    def kb(self) -> Path:
        return self.root / "kb.jsonl"

    def trace(self, problem_id: str, variant: str | None = None) -> Path:
        name = problem_id if variant is None else f"{problem_id}.{variant}"
        return self.root / "traces" / f"{name}.jsonl"

    def transcript(self, name: str = "agent") -> Path:
        return self.root / "transcripts" / f"{name}.jsonl"

    @property
    def report(self) -> Path:
        return self.root / "report.json"


def _build_run_embedder(config: CacConfig, paths: RunPaths) -> Embedder:
    if config.embedder.kind == "remote":
        recorder = TranscriptWriter(paths.transcript("embedder"))
        return build_embedder(config.embedder, recorder=recorder)
    return build_embedder(config.embedder)


def _manifest_skeleton(
    run_id: str,
    mode: str,
    config: CacConfig,
    profile: BackendProfile | None,
    kb: KnowledgeBase | None,
    problem_id: str | None,
    corpus_ref: str | None,
) -> RunManifest:
    snapshot = config.to_dict()
    if profile is not None:
        snapshot["backend_profile"] = {"name": profile.name, "kind": profile.kind}
    return RunManifest(
        run_id=run_id,
        mode=mode,
        config=snapshot,
        config_hash=config_hash(snapshot),
        kb_file="kb.jsonl" if kb is not None else None,
        kb_revision_range=(kb.revision, kb.revision) if kb is not None else None,
        corpus_ref=corpus_ref,
        problem_id=problem_id,
        artifacts={},
        created_at=utc_now_iso(),
    )


def _finish(manifest: RunManifest, artifacts: dict[str, str], run_dir: Path, status: str) -> RunManifest:
    done = RunManifest(
        run_id=manifest.run_id,
        mode=manifest.mode,
        config=manifest.config,
        config_hash=manifest.config_hash,
        kb_file=manifest.kb_file,
        kb_revision_range=manifest.kb_revision_range,
        corpus_ref=manifest.corpus_ref,
        problem_id=manifest.problem_id,
        artifacts=artifacts,
        created_at=manifest.created_at,
        completed_at=utc_now_iso(),
        status=status,
    )
    save_manifest(done, run_dir)
    return done


def execute_solve(
    problem: Problem,
    kb: KnowledgeBase,
    profile: BackendProfile,
    config: CacConfig,
    runs_dir: str | Path,
    *,
    run_id: str | None = None,
    removed_dm_ids: Sequence[str] = (),
    backend_override: Backend | None = None,
) -> tuple[RunManifest, AttemptResult]:
    """One recorded attempt (optionally on an ablation view) in a fresh run dir.

    ``backend_override`` substitutes a pre-built backend for the profile's
    (used to inject mock transports); the transcript is recorded either way.
    """
    run_id = run_id or new_run_id("solve")
    paths = RunPaths(root=Path(runs_dir) / run_id)
    paths.root.mkdir(parents=True, exist_ok=True)
    view = ablation_view(kb, removed_dm_ids) if removed_dm_ids else kb
    save_kb(kb, paths.kb)
    snapshot_problem(problem, paths.root)
    manifest = _manifest_skeleton(run_id, "solve", config, profile, kb, problem.id, None)
    save_manifest(manifest, paths.root)
    embedder = _build_run_embedder(config, paths)
    inner = backend_override if backend_override is not None else profile.build()
    backend = RecordingBackend(inner, TranscriptWriter(paths.transcript()))
    result = run_attempt(problem, view, backend, embedder, config.agent)
    save_trace(result, paths.trace(problem.id))
    artifacts = {
        "trace": f"traces/{problem.id}.jsonl",
        "transcript": "transcripts/agent.jsonl",
    }
    if removed_dm_ids:
        (paths.root / "ablation.json").write_text(
            canonical_json({"removed_dm_ids": sorted(removed_dm_ids)}) + "\n", encoding="utf-8"
        )
        artifacts["ablation"] = "ablation.json"
    status = "completed" if result.outcome != "backend_failure" else "failed"
    manifest = _finish(manifest, artifacts, paths.root, status)
    return manifest, result


def execute_ablate(
    problem: Problem,
    kb: KnowledgeBase,
    dm_ids: Sequence[str],
    profile: BackendProfile,
    config: CacConfig,
    runs_dir: str | Path,
    *,
    run_id: str | None = None,
) -> tuple[RunManifest, AblationReport]:
    """Base + ablated attempts with separate transcripts, plus the verdict report."""
    run_id = run_id or new_run_id("ablate")
    paths = RunPaths(root=Path(runs_dir) / run_id)
    paths.root.mkdir(parents=True, exist_ok=True)
    ablation_view(kb, dm_ids)  # fail on unknown ids before any backend call
    save_kb(kb, paths.kb)
    snapshot_problem(problem, paths.root)
    manifest = _manifest_skeleton(run_id, "ablate", config, profile, kb, problem.id, None)
    save_manifest(manifest, paths.root)
    embedder = _build_run_embedder(config, paths)

    base_backend = RecordingBackend(profile.build(), TranscriptWriter(paths.transcript("base")))
    base_result = run_attempt(problem, kb, base_backend, embedder, config.agent)
    ablated_backend = RecordingBackend(
        profile.build(), TranscriptWriter(paths.transcript("ablated"))
    )
    report = ablate_and_rerun(
        kb, dm_ids, problem, ablated_backend, embedder, config.agent, base_result=base_result
    )
    base_ref = f"traces/{problem.id}.base.jsonl"
    ablated_ref = f"traces/{problem.id}.ablated.jsonl"
    save_trace(report.base_result, paths.trace(problem.id, "base"))
    save_trace(report.ablated_result, paths.trace(problem.id, "ablated"))
    report = AblationReport(
        problem_id=report.problem_id,
        base_outcome=report.base_outcome,
        removed_ids=report.removed_ids,
        ablated_outcome=report.ablated_outcome,
        verdict=report.verdict,
        base_result=report.base_result,
        ablated_result=report.ablated_result,
        base_trace_ref=base_ref,
        ablated_trace_ref=ablated_ref,
    )
    paths.report.write_text(canonical_json(report.to_dict()) + "\n", encoding="utf-8")
    artifacts = {
        "report": "report.json",
        "base_trace": base_ref,
        "ablated_trace": ablated_ref,
        "base_transcript": "transcripts/base.jsonl",
        "ablated_transcript": "transcripts/ablated.jsonl",
    }
    manifest = _finish(manifest, artifacts, paths.root, "completed")
    return manifest, report


def execute_probe(
    probe_config: FanProbeConfig,
    config: CacConfig,
    runs_dir: str | Path,
    *,
    run_id: str | None = None,
    csv: bool = True,
) -> tuple[RunManifest, FanReport]:
    run_id = run_id or new_run_id("probe")
    paths = RunPaths(root=Path(runs_dir) / run_id)
    paths.root.mkdir(parents=True, exist_ok=True)
    manifest = _manifest_skeleton(run_id, "probe", config, None, None, None, None)
    save_manifest(manifest, paths.root)
    embedder = build_embedder(config.embedder)
    report = fan_effect_probe(probe_config, embedder)
    (paths.root / "fan_report.json").write_text(
        canonical_json(report.to_dict()) + "\n", encoding="utf-8"
    )
    artifacts = {"fan_report": "fan_report.json"}
    if csv:
        (paths.root / "fan_curve.csv").write_text(
            "\n".join(report.csv_lines()) + "\n", encoding="utf-8"
        )
        artifacts["fan_curve"] = "fan_curve.csv"
    manifest = _finish(manifest, artifacts, paths.root, "completed")
    return manifest, report


@dataclass(frozen=True)
class ReplayOutcome:
    run_id: str
    problem_id: str
    identical: bool
    reproduced: AttemptResult
    original: AttemptResult


def execute_replay(run_dir: str | Path) -> ReplayOutcome:
    """Reproduce a solve run from its directory alone and diff the results.

    Uses the recorded transcript (no network), the KB snapshot, and the
    manifest's config. Byte-identity is judged on the canonical trace lines.
    """
    root = Path(run_dir)
    manifest = load_manifest(root)
    if manifest.mode != "solve":
        raise ValidationError(f"replay supports solve runs, not {manifest.mode!r}")
    if manifest.problem_id is None or "trace" not in manifest.artifacts:
        raise StoreError(f"{root}: manifest lacks a problem trace to replay")
    kb = load_kb(root / (manifest.kb_file or "kb.jsonl"))
    original = load_trace(root / manifest.artifacts["trace"])
    problem = _problem_from_trace_config(manifest, original, root)

    removed: list[str] = []
    ablation_file = root / "ablation.json"
    if ablation_file.exists():
        removed = json.loads(ablation_file.read_text(encoding="utf-8"))["removed_dm_ids"]
    view = ablation_view(kb, removed) if removed else kb

    embedder_cfg = manifest.config.get("embedder", {})
    if embedder_cfg.get("kind") == "remote":
        recorded = load_embedding_transcript(root / "transcripts" / "embedder.jsonl")
        embedder: Embedder = ReplayEmbedder(EmbedderConfig.from_dict(embedder_cfg), recorded)
    else:
        embedder = build_embedder(kb.embedder_config)

    backend: Backend = ReplayBackend(load_transcript(root / manifest.artifacts["transcript"]))
    agent_config = AgentConfig.from_dict(manifest.config.get("agent", {}))
    reproduced = run_attempt(problem, view, backend, embedder, agent_config)
    identical = trace_lines(reproduced) == trace_lines(original)
    return ReplayOutcome(
        run_id=manifest.run_id,
        problem_id=problem.id,
        identical=identical,
        reproduced=reproduced,
        original=original,
    )


def _problem_from_trace_config(manifest: RunManifest, original: AttemptResult, root: Path) -> Problem:
    problem_file = root / "problem.json"
    if problem_file.exists():
        return Problem.from_dict(json.loads(problem_file.read_text(encoding="utf-8")))
    raise StoreError(f"{root}: problem.json missing; cannot replay")


def snapshot_problem(problem: Problem, run_dir: str | Path) -> None:
    (Path(run_dir) / "problem.json").write_text(
        canonical_json(problem.to_dict()) + "\n", encoding="utf-8"
    )
