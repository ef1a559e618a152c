"""Runtime configuration: TOML files with environment-variable overrides.

Precedence, highest first: ``CAC_<SECTION>_<KEY>`` environment variables,
then the TOML file, then built-in defaults. Override values are parsed as
ints, floats, or booleans when they look like one, otherwise kept as strings.
"""

from __future__ import annotations

import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .agent import AgentConfig
from .backend import (
    Backend,
    ChatCompletionsBackend,
    ChatEndpoint,
    ReplayBackend,
    ScriptedBackend,
    ScriptedBackendTable,
)
from .embedder import EmbedderConfig, RemoteEndpoint
from .errors import ConfigurationError
from .kb import ScoreWeights
from .teacher import CheatFilterConfig, CompileConfig
from .store import load_transcript

ENV_PREFIX = "CAC"

_SECTIONS = ("agent", "weights", "embedder", "compile", "service", "paths")


def _coerce(raw: str) -> object:
    lowered = raw.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    for caster in (int, float):
        try:
            return caster(raw)
        except ValueError:
            continue
    return raw


def _apply_env_overrides(data: dict, environ: Mapping[str, str]) -> dict:
    for name, raw in environ.items():
        if not name.startswith(ENV_PREFIX + "_"):
            continue
        rest = name[len(ENV_PREFIX) + 1 :].lower()
        section = next((s for s in _SECTIONS if rest.startswith(s + "_")), None)
        if section is None:
            continue
        key = rest[len(section) + 1 :]
        data.setdefault(section, {})[key] = _coerce(raw)
    return data


def _read_toml(path: str | os.PathLike) -> dict:
    source = Path(path)
    if not source.exists():
        raise ConfigurationError(f"config file not found: {source}")
    try:
        with source.open("rb") as handle:
            return tomllib.load(handle)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{source}: invalid TOML: {exc}") from None


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8765
    cors_origin: str = "*"
    kb: str = "kb.jsonl"
    problems: str = "corpus/problems.jsonl"
    runs_dir: str = "runs"
    backend_profile: str | None = None
    static_dir: str | None = None
    max_runs_per_profile: int = 1  # backend-driven runs executing concurrently

    def to_dict(self) -> dict:
        return {
            "host": self.host,
            "port": self.port,
            "cors_origin": self.cors_origin,
            "kb": self.kb,
            "problems": self.problems,
            "runs_dir": self.runs_dir,
            "backend_profile": self.backend_profile,
            "static_dir": self.static_dir,
            "max_runs_per_profile": self.max_runs_per_profile,
        }


@dataclass(frozen=True)
class CacConfig:
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    compile_: CompileConfig = field(default_factory=CompileConfig)
    service: ServiceConfig = field(default_factory=ServiceConfig)
    runs_dir: str = "runs"

    def to_dict(self) -> dict:
        return {
            "embedder": self.embedder.to_dict(),
            "agent": self.agent.to_dict(),
            "compile": self.compile_.to_dict(),
            "service": self.service.to_dict(),
            "runs_dir": self.runs_dir,
        }


def load_config(
    path: str | os.PathLike | None = None, environ: Mapping[str, str] | None = None
) -> CacConfig:
    data: dict = {}
    if path is not None:
        data = _read_toml(path)
    data = _apply_env_overrides(data, environ if environ is not None else os.environ)

    weights_data = data.get("weights", {})
    weights = ScoreWeights(
        goal=float(weights_data.get("goal", 0.5)), wm=float(weights_data.get("wm", 0.5))
    )
    agent_data = dict(data.get("agent", {}))
    agent_data["weights"] = {"goal": weights.goal, "wm": weights.wm}
    agent = AgentConfig.from_dict(agent_data)

    embedder_data = data.get("embedder", {})
    remote = None
    if embedder_data.get("remote"):
        remote = RemoteEndpoint.from_dict(embedder_data["remote"])
    embedder = EmbedderConfig(
        kind=embedder_data.get("kind", "reference"),
        dimension=int(embedder_data.get("dimension", 256)),
        remote=remote,
    )

    compile_data = data.get("compile", {})
    compile_config = CompileConfig(
        max_iterations=int(compile_data.get("max_iterations", 150)),
        tool_call_cap=int(compile_data.get("tool_call_cap", 20)),
        preview_k=int(compile_data.get("preview_k", 5)),
        prior_context_iterations=int(compile_data.get("prior_context_iterations", 3)),
        cheat_filter=CheatFilterConfig(
            option_text_rule=bool(compile_data.get("option_text_filter", True))
        ),
        agent=agent,
    )

    service_data = data.get("service", {})
    service = ServiceConfig(
        host=service_data.get("host", "127.0.0.1"),
        port=int(service_data.get("port", 8765)),
        cors_origin=service_data.get("cors_origin", "*"),
        kb=service_data.get("kb", "kb.jsonl"),
        problems=service_data.get("problems", "corpus/problems.jsonl"),
        runs_dir=service_data.get("runs_dir", "runs"),
        backend_profile=service_data.get("backend_profile"),
        static_dir=service_data.get("static_dir"),
        max_runs_per_profile=int(service_data.get("max_runs_per_profile", 1)),
    )

    paths_data = data.get("paths", {})
    return CacConfig(
        embedder=embedder,
        agent=agent,
        compile_=compile_config,
        service=service,
        runs_dir=paths_data.get("runs_dir", "runs"),
    )


def load_fan_probe_config(path: str | os.PathLike):
    """Fan-probe recipe from TOML (top-level keys or a [probe] table)."""
    from .harness import FanProbeConfig

    data = _read_toml(path)
    table = data.get("probe", data)
    try:
        return FanProbeConfig.from_dict(table)
    except KeyError as exc:
        raise ConfigurationError(f"{path}: probe config missing key {exc.args[0]!r}") from None


@dataclass(frozen=True)
class BackendProfile:
    """A named way to reach a backend: scripted table, remote endpoint, or replay."""

    kind: str  # scripted | remote | replay
    scripted_table: ScriptedBackendTable | None = None
    endpoint: ChatEndpoint | None = None
    transcript_path: str | None = None
    name: str = "default"

    def build(self) -> Backend:
        if self.kind == "scripted":
            assert self.scripted_table is not None
            return ScriptedBackend(self.scripted_table)
        if self.kind == "remote":
            assert self.endpoint is not None
            return ChatCompletionsBackend(self.endpoint)
        if self.kind == "replay":
            assert self.transcript_path is not None
            return ReplayBackend(load_transcript(self.transcript_path))
        raise ConfigurationError(f"unknown backend kind {self.kind!r}")


def load_teacher_profile(path: str | os.PathLike):
    """Build a teacher policy from a profile file.

    kind = "scripted" plays back a JSON script of tool-call turns keyed by
    problem id; kind = "remote" adapts a chat endpoint into the tool-call
    protocol.
    """
    from .teacher import RemoteTeacher, ScriptedTeacher, ToolCall

    source = Path(path)
    data = _read_toml(source)
    kind = data.get("kind")
    if kind == "scripted":
        script_ref = data.get("scripted", {}).get("script")
        if not script_ref:
            raise ConfigurationError(f"{source}: scripted teacher needs scripted.script")
        script_path = (source.parent / script_ref).resolve()
        if not script_path.exists():
            raise ConfigurationError(f"teacher script not found: {script_path}")
        raw = json.loads(script_path.read_text(encoding="utf-8"))
        script = {
            problem_id: [
                [ToolCall(kind=c["kind"], args=dict(c.get("args", {}))) for c in turn]
                for turn in turns
            ]
            for problem_id, turns in raw.get("problems", {}).items()
        }
        return ScriptedTeacher(script)
    if kind == "remote":
        remote = data.get("remote")
        if not remote:
            raise ConfigurationError(f"{source}: remote teacher needs a [remote] table")
        return RemoteTeacher(ChatCompletionsBackend(ChatEndpoint.from_dict(remote)))
    raise ConfigurationError(f"{source}: unknown teacher profile kind {kind!r}")


def load_backend_profile(path: str | os.PathLike) -> BackendProfile:
    source = Path(path)
    data = _read_toml(source)
    kind = data.get("kind")
    name = data.get("name", source.stem)
    if kind == "scripted":
        scripted = data.get("scripted", {})
        rules_ref = scripted.get("rules")
        if rules_ref:
            rules_path = (source.parent / rules_ref).resolve()
            if not rules_path.exists():
                raise ConfigurationError(f"scripted rules file not found: {rules_path}")
            table = ScriptedBackendTable.from_dict(
                json.loads(rules_path.read_text(encoding="utf-8"))
            )
        else:
            table = ScriptedBackendTable.from_dict(scripted)
        return BackendProfile(kind="scripted", scripted_table=table, name=name)
    if kind == "remote":
        remote = data.get("remote")
        if not remote:
            raise ConfigurationError(f"{source}: remote profile needs a [remote] table")
        return BackendProfile(kind="remote", endpoint=ChatEndpoint.from_dict(remote), name=name)
    if kind == "replay":
        replay = data.get("replay", {})
        transcript = replay.get("transcript")
        if not transcript:
            raise ConfigurationError(f"{source}: replay profile needs replay.transcript")
        return BackendProfile(
            kind="replay",
            transcript_path=str((source.parent / transcript).resolve()),
            name=name,
        )
    raise ConfigurationError(f"{source}: unknown backend profile kind {kind!r}")
