"""The ``cac`` command line.

Subcommands: compile | solve | ablate | probe-fan | inspect | serve | replay.
Exit codes: 0 success, 1 domain failure (iteration cap, backend failure,
replay mismatch), 2 usage or configuration error. Every run writes a manifest
into its run directory.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import (
    CacConfig,
    load_backend_profile,
    load_config,
    load_fan_probe_config,
    load_teacher_profile,
)
from .errors import BackendError, CacError, ConfigurationError, ConflictError, StoreError, ValidationError
from .kb import KnowledgeBase, preview_hits
from .embedder import build_embedder
from .runs import execute_ablate, execute_probe, execute_replay, execute_solve
from .store import (
    RunManifest,
    WriterLock,
    canonical_json,
    config_hash,
    load_kb,
    load_problems,
    new_run_id,
    save_compilation_logs,
    save_kb,
    save_manifest,
    utc_now_iso,
)
from .teacher import compile_corpus

EXIT_OK = 0
EXIT_DOMAIN_FAILURE = 1
EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cac", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    compile_p = sub.add_parser("compile", help="run the teacher compilation loop over a corpus")
    compile_p.add_argument("--corpus", required=True, help="problems JSONL file")
    compile_p.add_argument("--kb", required=True, help="KB file (created if missing)")
    compile_p.add_argument("--config", help="cac.toml runtime config")
    compile_p.add_argument("--backend", required=True, help="agent backend profile TOML")
    compile_p.add_argument("--teacher", required=True, help="teacher profile TOML")
    compile_p.add_argument("--runs-dir", default=None)
    compile_p.add_argument("--run-id", default=None)

    solve_p = sub.add_parser("solve", help="run one attempt against the current KB")
    solve_p.add_argument("--kb", required=True)
    solve_p.add_argument("--problem", required=True, help="problem id")
    solve_p.add_argument("--problems", default=None, help="problems JSONL (default from config)")
    solve_p.add_argument("--backend", required=True, help="backend profile TOML")
    solve_p.add_argument("--config", help="cac.toml runtime config")
    solve_p.add_argument("--remove", default=None, help="comma-separated DM ids or @file")
    solve_p.add_argument("--runs-dir", default=None)
    solve_p.add_argument("--run-id", default=None)

    ablate_p = sub.add_parser("ablate", help="base + ablated runs with a dependence verdict")
    ablate_p.add_argument("--kb", required=True)
    ablate_p.add_argument("--remove", required=True, help="comma-separated DM ids or @file")
    ablate_p.add_argument("--problem", required=True)
    ablate_p.add_argument("--problems", default=None)
    ablate_p.add_argument("--backend", required=True)
    ablate_p.add_argument("--config", help="cac.toml runtime config")
    ablate_p.add_argument("--runs-dir", default=None)
    ablate_p.add_argument("--run-id", default=None)

    probe_p = sub.add_parser("probe-fan", help="synthetic fan-effect rank curve")
    probe_p.add_argument("--config", required=True, help="probe recipe TOML")
    probe_p.add_argument("--runtime-config", help="cac.toml runtime config")
    probe_p.add_argument("--runs-dir", default=None)
    probe_p.add_argument("--run-id", default=None)
    probe_p.add_argument("--no-csv", action="store_true")

    inspect_p = sub.add_parser("inspect", help="read-only KB queries")
    inspect_p.add_argument("--kb", required=True)
    inspect_p.add_argument("--list", action="store_true", help="list all DMs")
    inspect_p.add_argument("--id", default=None, help="show one DM")
    inspect_p.add_argument("--retrieve", action="store_true", help="preview retrieval")
    inspect_p.add_argument("--goal", default=None)
    inspect_p.add_argument("--wm", default="")
    inspect_p.add_argument("--k", type=int, default=5)

    serve_p = sub.add_parser("serve", help="start the inspector HTTP service")
    serve_p.add_argument("--config", required=True, help="cac.toml runtime config")
    serve_p.add_argument("--base-dir", default=".")

    replay_p = sub.add_parser("replay", help="reproduce a recorded run offline")
    replay_p.add_argument("--run", required=True, help="run directory (runs/<run_id>)")

    return parser


def _load_runtime_config(path: str | None) -> CacConfig:
    return load_config(path) if path else load_config()


def _parse_remove(raw: str | None) -> list[str]:
    if not raw:
        return []
    if raw.startswith("@"):
        path = Path(raw[1:])
        if not path.exists():
            raise ConfigurationError(f"removal id file not found: {path}")
        return [line.strip() for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
    return [part.strip() for part in raw.split(",") if part.strip()]


def _find_problem(problems, problem_id: str):
    for problem in problems:
        if problem.id == problem_id:
            return problem
    raise ValidationError(f"problem id {problem_id!r} not in corpus")


def _problems_path(args, config: CacConfig) -> str:
    return args.problems or config.service.problems


def cmd_compile(args) -> int:
    config = _load_runtime_config(args.config)
    problems = load_problems(args.corpus)
    kb_path = Path(args.kb)
    kb = load_kb(kb_path) if kb_path.exists() else KnowledgeBase(embedder_config=config.embedder)
    agent_profile = load_backend_profile(args.backend)
    teacher = load_teacher_profile(args.teacher)
    embedder = build_embedder(config.embedder)
    runs_dir = Path(args.runs_dir or config.runs_dir)
    run_id = args.run_id or new_run_id("compile")
    run_dir = runs_dir / run_id

    with WriterLock(kb_path, owner=run_id):
        kb_before = kb.revision
        # persist each problem's growth as it commits; readers never see
        # partial files (atomic replace inside save_kb)
        kb, stats, logs = compile_corpus(
            problems, kb, agent_profile.build(), teacher, embedder, config.compile_,
            on_problem_done=lambda grown, _log: save_kb(grown, kb_path),
        )
        save_kb(kb, kb_path)

    run_dir.mkdir(parents=True, exist_ok=True)
    logs_dir = run_dir / "logs"
    logs_dir.mkdir(exist_ok=True)
    for log in logs:
        (logs_dir / f"{log.problem_id}.json").write_text(
            canonical_json(log.to_dict()) + "\n", encoding="utf-8"
        )
    save_compilation_logs(logs, run_dir / "logs.jsonl")
    (run_dir / "stats.json").write_text(canonical_json(stats.to_dict()) + "\n", encoding="utf-8")
    snapshot = config.to_dict()
    manifest = RunManifest(
        run_id=run_id,
        mode="compile",
        config=snapshot,
        config_hash=config_hash(snapshot),
        kb_file=None,
        kb_revision_range=(kb_before, kb.revision),
        corpus_ref=str(args.corpus),
        problem_id=None,
        artifacts={
            "stats": "stats.json",
            "logs": "logs.jsonl",
            **{f"log:{log.problem_id}": f"logs/{log.problem_id}.json" for log in logs},
        },
        created_at=utc_now_iso(),
        completed_at=utc_now_iso(),
        status="completed",
    )
    save_manifest(manifest, run_dir)

    capped = [log.problem_id for log in logs if log.final_outcome != "compiled"]
    print(
        f"compiled {stats.problems_compiled}/{stats.problems_attempted} problems, "
        f"+{stats.total_dms} DMs, mean iterations {stats.iterations_mean:.3f} "
        f"(sd {stats.iterations_sd:.3f}, max {stats.iterations_max})"
    )
    print(f"kb: {kb_path} now at revision {kb.revision} with {len(kb)} DMs")
    print(f"run: {run_dir}")
    if capped:
        print(f"iteration cap reached on: {', '.join(capped)}", file=sys.stderr)
        return EXIT_DOMAIN_FAILURE
    return EXIT_OK


def cmd_solve(args) -> int:
    config = _load_runtime_config(args.config)
    kb = load_kb(args.kb)
    problems = load_problems(_problems_path(args, config))
    problem = _find_problem(problems, args.problem)
    profile = load_backend_profile(args.backend)
    removed = _parse_remove(args.remove)
    runs_dir = args.runs_dir or config.runs_dir
    manifest, result = execute_solve(
        problem, kb, profile, config, runs_dir,
        run_id=args.run_id, removed_dm_ids=removed,
    )
    print(f"run: {Path(runs_dir) / manifest.run_id}")
    print(
        f"outcome: {result.outcome}"
        + (f", predicted {result.predicted_letter}" if result.predicted_letter else "")
    )
    if result.outcome == "backend_failure":
        print(f"backend failure: {result.failure_detail}", file=sys.stderr)
        return EXIT_DOMAIN_FAILURE
    return EXIT_OK


def cmd_ablate(args) -> int:
    config = _load_runtime_config(args.config)
    kb = load_kb(args.kb)
    problems = load_problems(_problems_path(args, config))
    problem = _find_problem(problems, args.problem)
    profile = load_backend_profile(args.backend)
    removed = _parse_remove(args.remove)
    runs_dir = args.runs_dir or config.runs_dir
    manifest, report = execute_ablate(
        problem, kb, removed, profile, config, runs_dir, run_id=args.run_id
    )
    print(f"run: {Path(runs_dir) / manifest.run_id}")
    print(
        f"base: {report.base_outcome}  ablated: {report.ablated_outcome}  "
        f"verdict: {report.verdict}"
    )
    failures = {report.base_outcome, report.ablated_outcome} & {"backend_failure"}
    return EXIT_DOMAIN_FAILURE if failures else EXIT_OK


def cmd_probe_fan(args) -> int:
    config = _load_runtime_config(args.runtime_config)
    probe_config = load_fan_probe_config(args.config)
    runs_dir = args.runs_dir or config.runs_dir
    manifest, report = execute_probe(
        probe_config, config, runs_dir, run_id=args.run_id, csv=not args.no_csv
    )
    print(f"run: {Path(runs_dir) / manifest.run_id}")
    print("n_distractors  target_rank  margin")
    for row in report.rows:
        margin = "-" if row.margin is None else f"{row.margin:.6f}"
        print(f"{row.n_distractors:>13}  {row.target_rank:>11}  {margin}")
    crossover = "none" if report.crossover_n is None else str(report.crossover_n)
    print(f"crossover at n = {crossover}; max rank {report.max_rank}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    kb = load_kb(args.kb)
    if args.retrieve:
        if not args.goal:
            raise ConfigurationError("--retrieve requires --goal")
        embedder = build_embedder(kb.embedder_config)
        items = preview_hits(kb, args.goal, args.wm, args.k, embedder=embedder)
        print(canonical_json({"items": items, "revision": kb.revision}))
        return EXIT_OK
    if args.id:
        dm = kb.get(args.id)
        print(
            canonical_json(
                {
                    "id": dm.id,
                    "seq": dm.seq,
                    "kind": dm.kind,
                    "description": dm.description,
                    "goal_condition": dm.goal_condition,
                    "wm_condition": dm.wm_condition,
                    "provenance": dm.provenance.to_dict(),
                }
            )
        )
        return EXIT_OK
    # default: summary listing
    print(f"revision {kb.revision}, {len(kb)} DMs")
    if args.list:
        for dm in kb.dms:
            print(f"[{dm.id}] ({dm.kind}) {dm.description}")
    return EXIT_OK


def cmd_serve(args) -> int:
    from .service import serve

    config = load_config(args.config)
    serve(config, base_dir=args.base_dir)
    return EXIT_OK


def cmd_replay(args) -> int:
    outcome = execute_replay(args.run)
    if outcome.identical:
        print(f"replay of {outcome.run_id} reproduced {outcome.problem_id} byte-identically")
        return EXIT_OK
    print(f"replay of {outcome.run_id} DIVERGED from the recorded result", file=sys.stderr)
    return EXIT_DOMAIN_FAILURE


_HANDLERS = {
    "compile": cmd_compile,
    "solve": cmd_solve,
    "ablate": cmd_ablate,
    "probe-fan": cmd_probe_fan,
    "inspect": cmd_inspect,
    "serve": cmd_serve,
    "replay": cmd_replay,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except (ConfigurationError, StoreError, ValidationError, ConflictError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN_FAILURE
    except CacError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN_FAILURE


if __name__ == "__main__":
    sys.exit(main())
