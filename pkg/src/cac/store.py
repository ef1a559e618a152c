"""Durable storage: KB revision log, traces, transcripts, run manifests.

Everything is JSON-lines with an explicit format_version header and a single
canonical serialization (fixed key order, compact separators, shortest
round-trip floats), so identical values always produce identical bytes —
the property the replay and monotonicity checks lean on.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping, Sequence

from .agent import AttemptResult, Problem
from .embedder import EmbedderConfig, EmbeddingVector
from .errors import ConflictError, StoreError, ValidationError
from .kb import DeclarativeMemory, KnowledgeBase, Provenance

FORMAT_VERSION = 1


def canonical_json(obj: object) -> str:
    """Compact, non-ASCII-preserving JSON with caller-controlled key order."""
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"), allow_nan=False)


def config_hash(config: Mapping) -> str:
    return hashlib.sha256(canonical_json(_sorted(config)).encode("utf-8")).hexdigest()


def _sorted(obj: object) -> object:
    # Hashing ignores dict ordering so semantically equal configs hash equal.
    if isinstance(obj, Mapping):
        return {k: _sorted(obj[k]) for k in sorted(obj)}
    if isinstance(obj, (list, tuple)):
        return [_sorted(v) for v in obj]
    return obj


def _iter_json_lines(path: Path) -> Iterator[tuple[int, int, dict]]:
    """(line_number, byte_offset, parsed) for each non-empty line."""
    data = path.read_bytes()
    offset = 0
    line_no = 0
    for raw in data.split(b"\n"):
        line_no += 1
        if raw.strip():
            try:
                yield line_no, offset, json.loads(raw.decode("utf-8"))
            except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                raise StoreError(
                    f"{path}: undecodable line {line_no} at byte offset {offset}: {exc}",
                    offset=offset,
                ) from None
        offset += len(raw) + 1


# ---------------------------------------------------------------------------
# Knowledge base files: header, then per-batch DM lines closed by commit lines.

def _dm_line(dm: DeclarativeMemory) -> dict:
    return {
        "type": "dm",
        "seq": dm.seq,
        "id": dm.id,
        "kind": dm.kind,
        "description": dm.description,
        "goal_condition": dm.goal_condition,
        "wm_condition": dm.wm_condition,
        "provenance": dm.provenance.to_dict(),
        "key_goal": list(dm.key_goal.values),
        "key_wm": list(dm.key_wm.values),
    }


def _dm_from_line(data: Mapping, dimension: int, path: Path, line_no: int, offset: int) -> DeclarativeMemory:
    key_goal = data["key_goal"]
    key_wm = data["key_wm"]
    for name, key in (("key_goal", key_goal), ("key_wm", key_wm)):
        if len(key) != dimension:
            raise StoreError(
                f"{path}: line {line_no} carries a {len(key)}-length {name} but the header "
                f"dimension is {dimension}",
                offset=offset,
            )
    return DeclarativeMemory(
        id=data["id"],
        seq=int(data["seq"]),
        kind=data["kind"],
        description=data["description"],
        goal_condition=data["goal_condition"],
        wm_condition=data["wm_condition"],
        provenance=Provenance.from_dict(data["provenance"]),
        key_goal=EmbeddingVector(values=tuple(float(v) for v in key_goal)),
        key_wm=EmbeddingVector(values=tuple(float(v) for v in key_wm)),
    )


def save_kb(kb: KnowledgeBase, path: str | os.PathLike) -> None:
    """Write the full revision log: header, then DM lines grouped per commit."""
    target = Path(path)
    lines = [
        canonical_json(
            {
                "format_version": FORMAT_VERSION,
                "kind": "kb",
                "embedder_config": kb.embedder_config.to_dict(),
                "dimension": kb.embedder_config.dimension,
            }
        )
    ]
    cursor = 0
    for revision, size in enumerate(kb.batch_sizes, start=1):
        for dm in kb.dms[cursor : cursor + size]:
            lines.append(canonical_json(_dm_line(dm)))
        lines.append(canonical_json({"type": "commit", "revision": revision, "count": size}))
        cursor += size
    target.parent.mkdir(parents=True, exist_ok=True)
    # Atomic replace: concurrent readers only ever see fully committed files.
    scratch = target.with_name(target.name + ".tmp")
    scratch.write_text("\n".join(lines) + "\n", encoding="utf-8")
    os.replace(scratch, target)


def load_kb(path: str | os.PathLike) -> KnowledgeBase:
    """Replay a KB file: apply each committed batch in order.

    Errors name the offending line's byte offset; a trailing batch without its
    commit line is a truncation error.
    """
    source = Path(path)
    if not source.exists():
        raise StoreError(f"KB file not found: {source}")
    rows = _iter_json_lines(source)
    try:
        _, _, header = next(rows)
    except StopIteration:
        raise StoreError(f"{source}: empty KB file") from None
    if header.get("kind") != "kb":
        raise StoreError(f"{source}: not a KB file (kind={header.get('kind')!r})")
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise StoreError(
            f"{source}: format_version {version!r} needs migration; this build reads {FORMAT_VERSION}"
        )
    embedder_config = EmbedderConfig.from_dict(header["embedder_config"])
    dimension = int(header["dimension"])
    if dimension != embedder_config.dimension:
        raise StoreError(f"{source}: header dimension {dimension} != embedder config")

    dms: list[DeclarativeMemory] = []
    batch_sizes: list[int] = []
    pending: list[DeclarativeMemory] = []
    last_offset = 0
    for line_no, offset, data in rows:
        last_offset = offset
        kind = data.get("type")
        if kind == "dm":
            pending.append(_dm_from_line(data, dimension, source, line_no, offset))
        elif kind == "commit":
            if int(data["count"]) != len(pending):
                raise StoreError(
                    f"{source}: commit at line {line_no} claims {data['count']} DMs, found "
                    f"{len(pending)}",
                    offset=offset,
                )
            if int(data["revision"]) != len(batch_sizes) + 1:
                raise StoreError(
                    f"{source}: commit at line {line_no} has revision {data['revision']}, "
                    f"expected {len(batch_sizes) + 1}",
                    offset=offset,
                )
            dms.extend(pending)
            batch_sizes.append(len(pending))
            pending = []
        else:
            raise StoreError(f"{source}: unknown line type {kind!r} at line {line_no}", offset=offset)
    if pending:
        raise StoreError(
            f"{source}: truncated file: {len(pending)} DM line(s) after the last commit "
            f"(around byte offset {last_offset})",
            offset=last_offset,
        )
    for expected_seq, dm in enumerate(dms):
        if dm.seq != expected_seq:
            raise StoreError(f"{source}: DM seq {dm.seq} out of order (expected {expected_seq})")
    return KnowledgeBase(
        embedder_config=embedder_config, dms=tuple(dms), batch_sizes=tuple(batch_sizes)
    )


def kb_revision_prefixes(path: str | os.PathLike) -> list[list[str]]:
    """Id lists per revision, for prefix-chain verification of a persisted log."""
    kb = load_kb(path)
    return [kb.at_revision(r).ids() for r in range(kb.revision + 1)]


# ---------------------------------------------------------------------------
# Problem corpora.

def save_problems(problems: Sequence[Problem], path: str | os.PathLike) -> None:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    header = canonical_json({"format_version": FORMAT_VERSION, "kind": "problems"})
    lines = [header] + [canonical_json(p.to_dict()) for p in problems]
    target.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_problems(path: str | os.PathLike) -> list[Problem]:
    source = Path(path)
    if not source.exists():
        raise StoreError(f"problem corpus not found: {source}")
    problems: list[Problem] = []
    rows = _iter_json_lines(source)
    try:
        _, _, header = next(rows)
    except StopIteration:
        raise StoreError(f"{source}: empty corpus file") from None
    if header.get("kind") != "problems" or header.get("format_version") != FORMAT_VERSION:
        raise StoreError(f"{source}: not a version-{FORMAT_VERSION} problems file")
    for line_no, offset, data in rows:
        try:
            problems.append(Problem.from_dict(data))
        except (KeyError, ValidationError) as exc:
            raise StoreError(f"{source}: bad problem at line {line_no}: {exc}", offset=offset) from None
    return problems


# ---------------------------------------------------------------------------
# Attempt traces.

def trace_lines(result: AttemptResult) -> list[str]:
    header = {"format_version": FORMAT_VERSION, "kind": "trace", "problem_id": result.problem_id}
    lines = [canonical_json(header)]
    for step in result.history:
        lines.append(canonical_json({"type": "step", **step.to_dict()}))
    summary = result.to_dict()
    del summary["history"]
    lines.append(canonical_json({"type": "result", **summary}))
    return lines


def save_trace(result: AttemptResult, path: str | os.PathLike) -> None:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text("\n".join(trace_lines(result)) + "\n", encoding="utf-8")


def load_trace(path: str | os.PathLike) -> AttemptResult:
    source = Path(path)
    if not source.exists():
        raise StoreError(f"trace file not found: {source}")
    rows = _iter_json_lines(source)
    try:
        _, _, header = next(rows)
    except StopIteration:
        raise StoreError(f"{source}: empty trace file") from None
    if header.get("kind") != "trace" or header.get("format_version") != FORMAT_VERSION:
        raise StoreError(f"{source}: not a version-{FORMAT_VERSION} trace file")
    steps = []
    summary: dict | None = None
    for line_no, offset, data in rows:
        if data.get("type") == "step":
            steps.append(data)
        elif data.get("type") == "result":
            summary = data
        else:
            raise StoreError(f"{source}: unknown trace line type at line {line_no}", offset=offset)
    if summary is None:
        raise StoreError(f"{source}: trace file lacks its result line")
    summary = dict(summary)
    summary["history"] = steps
    return AttemptResult.from_dict(summary)


# ---------------------------------------------------------------------------
# Compilation logs (JSON-lines, one log per problem).

def save_compilation_logs(logs: Sequence, path: str | os.PathLike) -> None:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(
        "\n".join(canonical_json(log.to_dict()) for log in logs) + "\n", encoding="utf-8"
    )


def load_compilation_logs(path: str | os.PathLike) -> list:
    from .teacher import CompilationLog

    source = Path(path)
    if not source.exists():
        raise StoreError(f"compilation log file not found: {source}")
    logs = []
    for line_no, offset, data in _iter_json_lines(source):
        try:
            logs.append(CompilationLog.from_dict(data))
        except (KeyError, TypeError) as exc:
            raise StoreError(
                f"{source}: bad compilation log at line {line_no}: {exc}", offset=offset
            ) from None
    return logs


# ---------------------------------------------------------------------------
# Backend / embedder transcripts.

class TranscriptWriter:
    """Appends one canonical {request, response} line per recorded call."""

    def __init__(self, path: str | os.PathLike):
        self._path = Path(path)
        self._path.parent.mkdir(parents=True, exist_ok=True)
        self._path.write_text("", encoding="utf-8")

    def __call__(self, request: dict, response: dict) -> None:
        line = canonical_json({"request": request, "response": response})
        with self._path.open("a", encoding="utf-8") as sink:
            sink.write(line + "\n")


def load_transcript(path: str | os.PathLike) -> list[tuple[dict, dict]]:
    source = Path(path)
    if not source.exists():
        raise StoreError(f"transcript not found: {source}")
    pairs: list[tuple[dict, dict]] = []
    for line_no, offset, data in _iter_json_lines(source):
        if "request" not in data or "response" not in data:
            raise StoreError(f"{source}: malformed transcript line {line_no}", offset=offset)
        pairs.append((data["request"], data["response"]))
    return pairs


def load_embedding_transcript(path: str | os.PathLike) -> dict[str, list[float]]:
    recorded: dict[str, list[float]] = {}
    for request, response in load_transcript(path):
        if request.get("kind") == "embed":
            recorded[request["input"]] = list(response["embedding"])
    return recorded


# ---------------------------------------------------------------------------
# Run manifests and directories.

@dataclass(frozen=True)
class RunManifest:
    run_id: str
    mode: str  # compile | solve | ablate | probe
    config: dict
    config_hash: str
    kb_file: str | None
    kb_revision_range: tuple[int, int] | None
    corpus_ref: str | None
    problem_id: str | None
    artifacts: dict[str, str]
    created_at: str
    completed_at: str | None = None
    status: str = "running"  # running | completed | failed

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "run_id": self.run_id,
            "mode": self.mode,
            "config": self.config,
            "config_hash": self.config_hash,
            "kb_file": self.kb_file,
            "kb_revision_range": list(self.kb_revision_range) if self.kb_revision_range else None,
            "corpus_ref": self.corpus_ref,
            "problem_id": self.problem_id,
            "artifacts": dict(self.artifacts),
            "created_at": self.created_at,
            "completed_at": self.completed_at,
            "status": self.status,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "RunManifest":
        rr = data.get("kb_revision_range")
        return cls(
            run_id=data["run_id"],
            mode=data["mode"],
            config=dict(data["config"]),
            config_hash=data["config_hash"],
            kb_file=data.get("kb_file"),
            kb_revision_range=(int(rr[0]), int(rr[1])) if rr else None,
            corpus_ref=data.get("corpus_ref"),
            problem_id=data.get("problem_id"),
            artifacts=dict(data.get("artifacts", {})),
            created_at=data["created_at"],
            completed_at=data.get("completed_at"),
            status=data.get("status", "completed"),
        )


def new_run_id(mode: str) -> str:
    return f"{mode}-{time.strftime('%Y%m%dT%H%M%S', time.gmtime())}-{uuid.uuid4().hex[:6]}"


def save_manifest(manifest: RunManifest, run_dir: str | os.PathLike) -> None:
    directory = Path(run_dir)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "manifest.json").write_text(
        canonical_json(manifest.to_dict()) + "\n", encoding="utf-8"
    )


def load_manifest(run_dir: str | os.PathLike) -> RunManifest:
    path = Path(run_dir) / "manifest.json"
    if not path.exists():
        raise StoreError(f"manifest not found: {path}")
    data = json.loads(path.read_text(encoding="utf-8"))
    if data.get("format_version") != FORMAT_VERSION:
        raise StoreError(f"{path}: unsupported manifest version {data.get('format_version')!r}")
    manifest = RunManifest.from_dict(data)
    if config_hash(manifest.config) != manifest.config_hash:
        raise StoreError(f"{path}: config hash does not match the config snapshot")
    return manifest


def verify_manifest_artifacts(manifest: RunManifest, run_dir: str | os.PathLike) -> list[str]:
    """Artifact names whose files are missing (empty when all exist)."""
    directory = Path(run_dir)
    missing = []
    for name, rel in manifest.artifacts.items():
        if not (directory / rel).exists():
            missing.append(name)
    if manifest.kb_file and not (directory / manifest.kb_file).exists():
        missing.append("kb_file")
    return missing


def utc_now_iso() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


# ---------------------------------------------------------------------------
# Single-writer lock on a KB file.

class WriterLock:
    """Exclusive advisory lock (O_CREAT|O_EXCL lockfile next to the KB)."""

    def __init__(self, kb_path: str | os.PathLike, owner: str):
        self._lock_path = Path(str(kb_path) + ".lock")
        self._owner = owner
        self._fd: int | None = None

    @property
    def path(self) -> Path:
        return self._lock_path

    def __enter__(self) -> "WriterLock":
        try:
            self._fd = os.open(self._lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            holder = ""
            try:
                holder = self._lock_path.read_text(encoding="utf-8").strip()
            except OSError:
                pass
            raise ConflictError(
                f"KB writer lock held{f' by {holder}' if holder else ''}: {self._lock_path}"
            ) from None
        os.write(self._fd, self._owner.encode("utf-8"))
        return self

    def __exit__(self, *exc_info: object) -> None:
        if self._fd is not None:
            os.close(self._fd)
            self._fd = None
        try:
            self._lock_path.unlink()
        except FileNotFoundError:
            pass


def is_locked(kb_path: str | os.PathLike) -> bool:
    return Path(str(kb_path) + ".lock").exists()
