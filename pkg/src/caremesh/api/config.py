"""Service configuration: one canonical-form file, CM_* env overrides."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

from caremesh import canonical
from caremesh.errors import InvalidArgument


@dataclass
class ServiceConfig:
    bind_host: str = "127.0.0.1"
    bind_port: int = 8420
    log_path: str = "caremesh-events.log"
    token_file: str = "caremesh-tokens.json"
    heartbeat_seconds: float = 15.0
    stream_buffer: int = 1000
    durable: bool = True

    @classmethod
    def load(cls, path: str | Path | None = None) -> "ServiceConfig":
        values: dict = {}
        if path is not None:
            try:
                raw = canonical.loads(Path(path).read_text(encoding="utf-8"))
            except (OSError, ValueError) as exc:
                raise InvalidArgument(f"cannot read config {path}: {exc}") from exc
            if not isinstance(raw, dict):
                raise InvalidArgument("config must be an object")
            unknown = set(raw) - set(cls.__dataclass_fields__)
            if unknown:
                raise InvalidArgument(f"unknown config fields: {sorted(unknown)}")
            values.update(raw)
        for name, caster in (
            ("bind_host", str),
            ("bind_port", int),
            ("log_path", str),
            ("token_file", str),
            ("heartbeat_seconds", float),
            ("stream_buffer", int),
        ):
            env = os.environ.get(f"CM_{name.upper()}")
            if env is not None:
                try:
                    values[name] = caster(env)
                except ValueError as exc:
                    raise InvalidArgument(f"bad CM_{name.upper()}: {exc}") from exc
        env = os.environ.get("CM_DURABLE")
        if env is not None:
            values["durable"] = env.lower() not in ("0", "false", "no")
        return cls(**values)
