"""Run directories and offline replay.

Executes one recorded attempt into a temporary run directory, shows what got
persisted (manifest, KB snapshot, trace, transcript), then reproduces the
result purely from those files through the replay backend and verifies byte
identity.
"""

from __future__ import annotations

import tempfile
from pathlib import Path

from cac.config import BackendProfile, load_config
from cac.fixtures import fiber_backend_table, fiber_kb, fiber_problem, fixture_embedder
from cac.runs import execute_replay, execute_solve

with tempfile.TemporaryDirectory() as tmp:
    runs_dir = Path(tmp) / "runs"
    config = load_config(None, environ={})
    profile = BackendProfile(kind="scripted", scripted_table=fiber_backend_table(), name="fiber")

    manifest, result = execute_solve(
        fiber_problem(), fiber_kb(fixture_embedder()), profile, config, runs_dir,
        run_id="demo-run",
    )
    run_dir = runs_dir / "demo-run"
    print(f"run {manifest.run_id}: outcome {result.outcome}, predicted {result.predicted_letter}")
    print()
    print("persisted artifacts:")
    for path in sorted(run_dir.rglob("*")):
        if path.is_file():
            print(f"  {path.relative_to(run_dir)}  ({path.stat().st_size} bytes)")

    outcome = execute_replay(run_dir)
    print()
    print("replayed from the run directory alone (no backend, no network):")
    print("byte-identical reproduction:", outcome.identical)
