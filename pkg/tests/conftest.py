from __future__ import annotations

import json
from types import SimpleNamespace

import pytest

from caremesh.api.config import ServiceConfig
from caremesh.api.server import serve
from caremesh.service import CoordinatorService


@pytest.fixture
def svc():
    service = CoordinatorService(snapshots=False)
    yield service
    service.close()


@pytest.fixture
def team(svc):
    """Three experts and one patient in a single circle."""
    e1 = svc.register_participant("Expert", "Elena", "coach")["id"]
    e2 = svc.register_participant("Expert", "Nadia", "nutrition")["id"]
    e3 = svc.register_participant("Expert", "Pablo", "physician")["id"]
    p1 = svc.register_participant("EndUser", "Ana")["id"]
    circle = svc.create_circle(experts=[e1, e2, e3], patients=[p1])["id"]
    return SimpleNamespace(svc=svc, e1=e1, e2=e2, e3=e3, p1=p1, circle=circle)


@pytest.fixture
def duo(svc):
    """Two experts and two patients: enough to watch task-scoped routing."""
    e1 = svc.register_participant("Expert", "Elena", "coach")["id"]
    e2 = svc.register_participant("Expert", "Nadia", "nutrition")["id"]
    p1 = svc.register_participant("EndUser", "Ana")["id"]
    p2 = svc.register_participant("EndUser", "Berta")["id"]
    circle = svc.create_circle(experts=[e1, e2], patients=[p1, p2])["id"]
    return SimpleNamespace(svc=svc, e1=e1, e2=e2, p1=p1, p2=p2, circle=circle)


def make_token_file(path, count: int = 12) -> dict[str, str]:
    """Pre-provisioned tokens tok-1..tok-N bound to p1..pN."""
    table = {f"tok-{i}": f"p{i}" for i in range(1, count + 1)}
    path.write_text(json.dumps(table), encoding="utf-8")
    return table


@pytest.fixture
def api(tmp_path):
    """A live HTTP server on an ephemeral port with pre-provisioned tokens."""
    tokens = make_token_file(tmp_path / "tokens.json")
    config = ServiceConfig(
        bind_host="127.0.0.1",
        bind_port=0,
        log_path=str(tmp_path / "events.log"),
        token_file=str(tmp_path / "tokens.json"),
        heartbeat_seconds=0.25,
        stream_buffer=64,
    )
    server = serve(config)
    server.start()
    yield SimpleNamespace(
        server=server,
        base=server.base_url,
        tokens=tokens,
        config=config,
        log_path=tmp_path / "events.log",
    )
    server.shutdown()
