"""Wire behavior: auth, error mapping, streams, idempotency, restarts."""

import socket
import time

import httpx
import pytest

from caremesh.api.config import ServiceConfig
from caremesh.api.server import serve
from caremesh.errors import CorruptRecord
from caremesh.harness.scenario import bundled_scenario_path, run_scenario_file
from caremesh.harness.targets import HttpTarget

from conftest import make_token_file


def _client(api):
    return httpx.Client(base_url=api.base, timeout=5)


def _h(i):
    return {"Authorization": f"Bearer tok-{i}"}


def _setup_team(client):
    """Three experts and a patient; returns their ids (p1..p4)."""
    ids = []
    for role, name, domain in (
        ("Expert", "Elena", "coach"),
        ("Expert", "Nadia", "nutrition"),
        ("Expert", "Pablo", "physician"),
        ("EndUser", "Ana", None),
    ):
        body = {"role": role, "display_name": name}
        if domain:
            body["domain"] = domain
        ids.append(client.post("/participants", json=body, headers=_h(1)).json()["id"])
    circle = client.post(
        "/circles", json={"experts": ids[:3], "patients": ids[3:]}, headers=_h(1)
    ).json()["id"]
    return ids, circle


def test_health_and_readiness(api):
    with _client(api) as c:
        assert c.get("/healthz").json() == {"status": "ok"}
        assert c.get("/readyz").json() == {"status": "ok"}


def test_missing_or_unknown_token_is_401(api):
    with _client(api) as c:
        assert c.post("/participants", json={}).status_code == 401
        r = c.get("/mailbox", headers={"Authorization": "Bearer nope"})
        assert r.status_code == 401
        assert r.json()["code"] == "Unauthorized"


def test_dangling_token_can_set_up_but_not_act(api):
    with _client(api) as c:
        # tok-9 maps to p9, which does not exist yet: setup works...
        r = c.post("/participants", json={"role": "EndUser", "display_name": "X"},
                   headers=_h(9))
        assert r.status_code == 200
        # ...identity-bound endpoints do not.
        assert c.get("/mailbox", headers=_h(9)).status_code == 401


def test_me_resolves_the_token_identity(api):
    with _client(api) as c:
        _setup_team(c)
        me = c.get("/me", headers=_h(4)).json()
        assert me["id"] == "p4"
        assert me["role"] == "EndUser"


def test_core_error_codes_surface_verbatim(api):
    with _client(api) as c:
        ids, circle = _setup_team(c)
        r = c.post("/notifications",
                   json={"circle": circle, "type_code": "T1", "payload": {"text": "x"}},
                   headers=_h(4))
        assert (r.status_code, r.json()["code"]) == (422, "RoleMismatch")

        r = c.post("/notifications",
                   json={"circle": "c9", "type_code": "T1", "payload": {"text": "x"}},
                   headers=_h(1))
        assert (r.status_code, r.json()["code"]) == (404, "UnknownCircle")

        nid = c.post("/notifications",
                     json={"circle": circle, "type_code": "T2", "payload": {"text": "x"}},
                     headers=_h(1)).json()["notification_id"]
        ok = c.post(f"/notifications/{nid}/approvals", json={"verdict": "OK"}, headers=_h(2))
        assert ok.status_code == 200
        dup = c.post(f"/notifications/{nid}/approvals", json={"verdict": "OK"}, headers=_h(2))
        assert (dup.status_code, dup.json()["code"]) == (409, "DuplicateResponse")

        bad = c.post("/types", json={"audience": "AllExperts", "code": "T8",
                                     "origin_role": "EndUser", "patient_visible": False,
                                     "requires_approval": True}, headers=_h(1))
        assert (bad.status_code, bad.json()["code"]) == (422, "InvalidSpec")

        missing = c.post("/notifications", json={"circle": circle}, headers=_h(1))
        assert (missing.status_code, missing.json()["code"]) == (400, "BadRequest")


def test_unknown_endpoint_and_wrong_method(api):
    with _client(api) as c:
        assert c.get("/nope", headers=_h(1)).status_code == 404
        assert c.request("PATCH", "/participants", headers=_h(1)).status_code == 405


def test_mailbox_poll_and_ack_roundtrip(api):
    with _client(api) as c:
        ids, circle = _setup_team(c)
        c.post("/notifications",
               json={"circle": circle, "type_code": "T3", "payload": {"text": "hi"}},
               headers=_h(1))
        box = c.get("/mailbox", headers=_h(4)).json()
        assert box["count"] == 1 and box["head"] == 1 and box["cursor"] == 0
        acked = c.post("/mailbox/ack", json={"up_to_seq": 1}, headers=_h(4)).json()
        assert acked == {"cursor": 1, "mailbox": "p4"}
        beyond = c.post("/mailbox/ack", json={"up_to_seq": 9}, headers=_h(4))
        assert (beyond.status_code, beyond.json()["code"]) == (409, "SeqBeyondHead")
        again = c.get("/mailbox", params={"after_seq": 1}, headers=_h(4)).json()
        assert again["count"] == 0 and again["cursor"] == 1


def test_list_circles_shows_only_memberships(api):
    with _client(api) as c:
        ids, circle = _setup_team(c)
        c.post("/participants", json={"role": "Expert", "display_name": "Out",
                                      "domain": "psych"}, headers=_h(1))
        mine = c.get("/circles", headers=_h(1)).json()["circles"]
        assert [x["id"] for x in mine] == [circle]
        assert c.get("/circles", headers=_h(5)).json()["circles"] == []


def test_task_queries_are_scoped(api):
    with _client(api) as c:
        ids, circle = _setup_team(c)
        task = c.post("/tasks", json={"circle": circle, "patient": "p4",
                                      "instructions": ["walk"]}, headers=_h(1)).json()
        # The patient sees their own tasks without parameters.
        mine = c.get("/tasks", headers=_h(4)).json()["tasks"]
        assert [t["id"] for t in mine] == [task["id"]]
        # Circle experts may read circle-level lists; the patient may not.
        assert c.get("/tasks", params={"circle": circle}, headers=_h(2)).status_code == 200
        assert c.get("/tasks", params={"circle": circle}, headers=_h(4)).status_code == 403
        # A stranger (p5 via tok-5) cannot read the task.
        c.post("/participants", json={"role": "EndUser", "display_name": "Z"}, headers=_h(1))
        assert c.get(f"/tasks/{task['id']}", headers=_h(5)).status_code == 403


def _read_sse(port: int, token: str, after_seq: int, *, want_frames: int,
              timeout: float = 3.0) -> bytes:
    sock = socket.create_connection(("127.0.0.1", port), timeout=timeout)
    sock.sendall(
        f"GET /stream?after_seq={after_seq} HTTP/1.1\r\nHost: t\r\n"
        f"Authorization: Bearer {token}\r\n\r\n".encode()
    )
    buf = b""
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline and buf.count(b"\ndata: ") < want_frames:
        try:
            chunk = sock.recv(4096)
        except TimeoutError:
            break
        if not chunk:
            break
        buf += chunk
    sock.close()
    return buf


def test_stream_frames_are_exact_and_resume_works(api):
    with _client(api) as c:
        ids, circle = _setup_team(c)
        for i in range(5):
            c.post("/notifications",
                   json={"circle": circle, "type_code": "T3",
                         "payload": {"text": f"m{i}"}},
                   headers=_h(1))
        raw = _read_sse(api.server.port, "tok-4", 2, want_frames=3)
        headers, body = raw.split(b"\r\n\r\n", 1)
        assert b"text/event-stream" in headers
        frames = [f for f in body.split(b"\n\n") if f and not f.startswith(b":")]
        ids_seen = [int(f.split(b"\n")[0].split(b": ")[1]) for f in frames[:3]]
        assert ids_seen == [3, 4, 5]
        # Byte-exact framing: id line, then data line with canonical body.
        assert frames[0].startswith(b"id: 3\ndata: {")


def test_stream_sends_heartbeats_at_the_configured_interval(api):
    with _client(api) as c:
        _setup_team(c)
    raw = _read_sse(api.server.port, "tok-4", 0, want_frames=99, timeout=0.8)
    assert b":hb\n\n" in raw  # 0.25s interval, so a 0.8s window sees some


def test_stream_is_per_participant(api):
    with _client(api) as c:
        _setup_team(c)
        r = c.get("/stream", params={"mailbox": "p1"}, headers=_h(4))
        assert r.status_code == 403


def test_stream_auth_via_query_token_for_eventsource(api):
    with _client(api) as c:
        _setup_team(c)
    sock = socket.create_connection(("127.0.0.1", api.server.port), timeout=2)
    sock.sendall(b"GET /stream?after_seq=0&token=tok-4 HTTP/1.1\r\nHost: t\r\n\r\n")
    first = sock.recv(64)
    sock.close()
    assert b"200" in first.split(b"\r\n")[0]


def test_idempotency_key_replays_without_new_events(api):
    with _client(api) as c:
        ids, circle = _setup_team(c)
        body = {"circle": circle, "type_code": "T1", "payload": {"text": "once"}}
        key = {"Idempotency-Key": "k-1", **_h(1)}
        first = c.post("/notifications", json=body, headers=key)
        head = c.get("/digest", headers=_h(1)).json()
        second = c.post("/notifications", json=body, headers=key)
        assert first.content == second.content
        assert c.get("/digest", headers=_h(1)).json() == head
        conflict = c.post("/notifications",
                          json={**body, "payload": {"text": "different"}}, headers=key)
        assert (conflict.status_code, conflict.json()["code"]) == (409, "IdempotencyConflict")


def test_cors_preflight(api):
    with _client(api) as c:
        r = c.request("OPTIONS", "/notifications")
        assert r.status_code == 204
        assert r.headers["Access-Control-Allow-Origin"] == "*"
        assert "Idempotency-Key" in r.headers["Access-Control-Allow-Headers"]


def test_restart_replays_the_log(tmp_path):
    make_token_file(tmp_path / "tokens.json")
    config = ServiceConfig(bind_host="127.0.0.1", bind_port=0,
                           log_path=str(tmp_path / "events.log"),
                           token_file=str(tmp_path / "tokens.json"))
    server = serve(config)
    server.start()
    with httpx.Client(base_url=server.base_url, timeout=5) as c:
        ids, circle = _setup_team(c)
        c.post("/notifications",
               json={"circle": circle, "type_code": "T3", "payload": {"text": "hi"}},
               headers=_h(1))
        digest = c.get("/digest", headers=_h(1)).json()
    server.shutdown()

    reborn = serve(config)
    reborn.start()
    with httpx.Client(base_url=reborn.base_url, timeout=5) as c:
        assert c.get("/digest", headers=_h(1)).json() == digest
        assert c.get("/me", headers=_h(4)).json()["display_name"] == "Ana"
        assert c.get("/mailbox", headers=_h(4)).json()["count"] == 1
    reborn.shutdown()


def test_corrupt_log_fails_the_boot(tmp_path):
    make_token_file(tmp_path / "tokens.json")
    log_path = tmp_path / "events.log"
    config = ServiceConfig(bind_host="127.0.0.1", bind_port=0,
                           log_path=str(log_path),
                           token_file=str(tmp_path / "tokens.json"))
    server = serve(config)
    server.start()
    with httpx.Client(base_url=server.base_url, timeout=5) as c:
        _setup_team(c)
    server.shutdown()

    raw = log_path.read_bytes()
    lines = raw.split(b"\n")
    lines[1] = b"x" + lines[1][1:]
    log_path.write_bytes(b"\n".join(lines))
    with pytest.raises(CorruptRecord):
        serve(config)


def test_cli_serve_exits_nonzero_on_corrupt_log(tmp_path, capsys):
    from caremesh import canonical
    from caremesh.harness.cli import main

    make_token_file(tmp_path / "tokens.json")
    log_path = tmp_path / "events.log"
    log_path.write_bytes(b"cm-log v1\ngarbage record\nmore\n")
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(canonical.dumps({
        "bind_host": "127.0.0.1", "bind_port": 0,
        "log_path": str(log_path), "token_file": str(tmp_path / "tokens.json"),
    }))
    assert main(["serve", "--config", str(cfg_path)]) == 1
    assert "LogCorrupt" in capsys.readouterr().err


def test_shutdown_with_open_stream_completes_quickly(tmp_path):
    make_token_file(tmp_path / "tokens.json")
    config = ServiceConfig(bind_host="127.0.0.1", bind_port=0,
                           log_path=str(tmp_path / "events.log"),
                           token_file=str(tmp_path / "tokens.json"),
                           heartbeat_seconds=30.0)
    server = serve(config)
    server.start()
    with httpx.Client(base_url=server.base_url, timeout=5) as c:
        _setup_team(c)
    sock = socket.create_connection(("127.0.0.1", server.port), timeout=2)
    sock.sendall(b"GET /stream?after_seq=0 HTTP/1.1\r\nHost: t\r\n"
                 b"Authorization: Bearer tok-4\r\n\r\n")
    sock.recv(64)
    started = time.monotonic()
    server.shutdown()
    assert time.monotonic() - started < 5
    sock.close()


def test_http_scenarios_match_expectations(tmp_path):
    """The bundled scenarios run over the wire, faults included."""
    tokens = make_token_file(tmp_path / "tokens.json")
    config = ServiceConfig(bind_host="127.0.0.1", bind_port=0,
                           log_path=str(tmp_path / "events.log"),
                           token_file=str(tmp_path / "tokens.json"),
                           heartbeat_seconds=0.2)
    server = serve(config)
    server.start()
    target = HttpTarget(server.base_url, {pid: tok for tok, pid in tokens.items()})
    try:
        report = run_scenario_file(bundled_scenario_path("stream_faults"), target)
        assert report.passed, [o.detail for o in report.outcomes + report.audits if not o.ok]
    finally:
        target.close()
        server.shutdown()
