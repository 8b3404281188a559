"""HTTP/1.1 service wrapping the coordinator 1:1.

Every command endpoint maps onto exactly one core operation; core error
codes surface verbatim as ``{"code", "message"}`` bodies with a fixed status
mapping. The event-stream endpoint frames each delivery as::

    id: <seq>\\n
    data: <canonical body>\\n\\n

with ``:hb\\n\\n`` comment frames at the configured heartbeat interval. All
mutations funnel into the service's single command queue; streams are
independent readers with bounded buffers, so a slow consumer is closed (and
resumes by poll) rather than ever blocking command processing.
"""

from __future__ import annotations

import hashlib
import re
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlsplit

from caremesh import canonical
from caremesh.api.auth import TokenTable
from caremesh.api.config import ServiceConfig
from caremesh.errors import BindFailure, CoordinationError, IdempotencyConflict
from caremesh.eventlog import EventLog
from caremesh.model import Role
from caremesh.service import CoordinatorService

ERROR_STATUS = {
    "InvalidArgument": 400,
    "Unauthorized": 401,
    "Forbidden": 403,
    "UnknownParticipant": 404,
    "UnknownCircle": 404,
    "UnknownNotification": 404,
    "UnknownTask": 404,
    "UnknownGoal": 404,
    "UnknownType": 404,
    "UnknownMailbox": 404,
    "UnknownEndpoint": 404,
    "MethodNotAllowed": 405,
    "DuplicateResponse": 409,
    "SessionClosed": 409,
    "GoalAlreadyReached": 409,
    "TaskNotActive": 409,
    "NoApproversAvailable": 409,
    "CodeCollision": 409,
    "AlreadyMember": 409,
    "SeqBeyondHead": 409,
    "IdempotencyConflict": 409,
    "DomainMissing": 422,
    "DomainForbidden": 422,
    "RoleMismatch": 422,
    "InvalidSpec": 422,
    "NotCircleMember": 422,
    "NotAnApprover": 422,
    "NotTaskOwner": 422,
    "PayloadTooLarge": 422,
    "NoExpertsInCircle": 422,
    "BadRequest": 400,
    "NotReady": 503,
    "StorageFailure": 500,
    "CorruptRecord": 500,
}

_CORS_HEADERS = {
    "Access-Control-Allow-Origin": "*",
    "Access-Control-Allow-Methods": "GET, POST, PATCH, OPTIONS",
    "Access-Control-Allow-Headers": "Authorization, Content-Type, Idempotency-Key",
}


class _HttpReject(Exception):
    def __init__(self, code: str, message: str):
        self.code = code
        self.message = message
        super().__init__(message)


def _need(body: dict, *keys: str) -> None:
    missing = [k for k in keys if k not in body]
    if missing:
        raise _HttpReject("BadRequest", f"missing fields: {missing}")


class ApiServer:
    """Owns the listener, the token table, and the stream lifecycle."""

    def __init__(self, service: CoordinatorService, tokens: TokenTable,
                 config: ServiceConfig):
        self.service = service
        self.tokens = tokens
        self.config = config
        self.stopping = threading.Event()
        self.ready = threading.Event()
        self._idempotency: dict[tuple[str, str], tuple[str, int, bytes]] = {}
        self._idem_lock = threading.Lock()
        outer = self

        class Handler(_Handler):
            ctx = outer

        try:
            self.httpd = ThreadingHTTPServer(
                (config.bind_host, config.bind_port), Handler
            )
        except OSError as exc:
            raise BindFailure(
                f"cannot bind {config.bind_host}:{config.bind_port}: {exc}"
            ) from exc
        self.httpd.daemon_threads = True
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self.httpd.server_address[1]

    @property
    def base_url(self) -> str:
        return f"http://{self.config.bind_host}:{self.port}"

    def start(self) -> None:
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()
        self.ready.set()

    def serve_forever(self) -> None:
        self.ready.set()
        self.httpd.serve_forever()

    def shutdown(self) -> None:
        """Stop accepting, let streams wind down, drain in-flight commands."""
        self.stopping.set()
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
        with self.service._lock:
            pass  # any in-flight command has now completed and is durable
        self.service.close()

    # Idempotency bookkeeping (in-memory, per boot).

    def idem_lookup(self, token: str, key: str, body_hash: str):
        with self._idem_lock:
            entry = self._idempotency.get((token, key))
        if entry is None:
            return None
        cached_hash, status, payload = entry
        if cached_hash != body_hash:
            raise IdempotencyConflict(
                "idempotency key was already used with a different body"
            )
        return status, payload

    def idem_store(self, token: str, key: str, body_hash: str,
                   status: int, payload: bytes) -> None:
        with self._idem_lock:
            self._idempotency[(token, key)] = (body_hash, status, payload)


def serve(config: ServiceConfig) -> ApiServer:
    """Replay the log, load tokens, bind, and return a ready server.

    Readiness reports ok only once replay has completed; because the log is
    replayed before the socket opens, a reachable server is a ready server.
    """
    log = EventLog(config.log_path, durable=config.durable)
    service = CoordinatorService(log, stream_buffer=config.stream_buffer)
    tokens = TokenTable.load(config.token_file)
    return ApiServer(service, tokens, config)


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "caremesh"
    ctx: ApiServer = None  # injected by ApiServer

    def log_message(self, format, *args):  # noqa: A002 - stdlib signature
        pass

    # --- plumbing -----------------------------------------------------------

    def _send_json(self, status: int, payload, extra: dict | None = None) -> None:
        blob = canonical.dump_bytes(payload)
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(blob)))
        for key, value in _CORS_HEADERS.items():
            self.send_header(key, value)
        if extra:
            for key, value in extra.items():
                self.send_header(key, value)
        self.end_headers()
        self.wfile.write(blob)

    def _send_error_payload(self, code: str, message: str) -> None:
        status = ERROR_STATUS.get(code, 422)
        self._send_json(status, {"code": code, "message": message})

    def _read_body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        if length == 0:
            return {}
        raw = self.rfile.read(length)
        try:
            body = canonical.loads(raw)
        except ValueError:
            raise _HttpReject("BadRequest", "body is not well-formed") from None
        if not isinstance(body, dict):
            raise _HttpReject("BadRequest", "body must be an object")
        return body

    def _token(self, query: dict) -> str:
        header = self.headers.get("Authorization", "")
        if header.startswith("Bearer "):
            return header[len("Bearer "):].strip()
        if "token" in query:  # EventSource cannot set headers
            return query["token"]
        return ""

    def _authenticate(self, query: dict) -> tuple[str, str | None]:
        """Returns (token, participant id or None). 401 on unknown token."""
        token = self._token(query)
        participant = self.ctx.tokens.participant_for(token) if token else None
        if not token or participant is None:
            raise _HttpReject("Unauthorized", "missing or unknown token")
        return token, participant

    def _identity(self, query: dict) -> tuple[str, str]:
        """Token must resolve to a *registered* participant."""
        token, participant = self._authenticate(query)
        if participant not in self.ctx.service.state.participants:
            raise _HttpReject(
                "Unauthorized",
                f"token is bound to {participant}, which is not registered yet",
            )
        return token, participant

    # --- request entry points --------------------------------------------------

    def do_OPTIONS(self):
        self.send_response(204)
        for key, value in _CORS_HEADERS.items():
            self.send_header(key, value)
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def do_PATCH(self):
        self._dispatch("PATCH")

    def _dispatch(self, method: str) -> None:
        parts = urlsplit(self.path)
        path = parts.path.rstrip("/") or "/"
        query = {k: v[-1] for k, v in parse_qs(parts.query).items()}
        try:
            path_matched = False
            for route_method, pattern, handler in _ROUTES:
                match = pattern.match(path)
                if match is None:
                    continue
                path_matched = True
                if route_method != method:
                    continue
                handler(self, query, match)
                return
            if path_matched:
                raise _HttpReject("MethodNotAllowed", f"{method} not allowed here")
            raise _HttpReject("UnknownEndpoint", f"no endpoint {path}")
        except _HttpReject as exc:
            self._send_error_payload(exc.code, exc.message)
        except CoordinationError as exc:
            self._send_error_payload(exc.code, str(exc))
        except (BrokenPipeError, ConnectionResetError):
            self.close_connection = True

    # --- commands -----------------------------------------------------------------

    def _command(self, query: dict, fn, *, identity: bool) -> None:
        if not self.ctx.ready.is_set():
            raise _HttpReject("NotReady", "replay has not completed")
        body = self._read_body()
        if identity:
            token, participant = self._identity(query)
        else:
            token, participant = self._authenticate(query)
        idem_key = self.headers.get("Idempotency-Key")
        body_hash = hashlib.sha256(canonical.dump_bytes(body)).hexdigest()
        if idem_key:
            cached = self.ctx.idem_lookup(token, idem_key, body_hash)
            if cached is not None:
                status, payload = cached
                self.send_response(status)
                self.send_header("Content-Type", "application/json; charset=utf-8")
                self.send_header("Content-Length", str(len(payload)))
                for key, value in _CORS_HEADERS.items():
                    self.send_header(key, value)
                self.end_headers()
                self.wfile.write(payload)
                return
        result = fn(participant, body)
        blob = canonical.dump_bytes(result)
        if idem_key:
            self.ctx.idem_store(token, idem_key, body_hash, 200, blob)
        self.send_response(200)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(blob)))
        for key, value in _CORS_HEADERS.items():
            self.send_header(key, value)
        self.end_headers()
        self.wfile.write(blob)

    def ep_register_participant(self, query, match):
        def run(_participant, body):
            _need(body, "role", "display_name")
            return self.ctx.service.register_participant(
                body["role"], body["display_name"], body.get("domain")
            )
        self._command(query, run, identity=False)

    def ep_create_circle(self, query, match):
        def run(_participant, body):
            return self.ctx.service.create_circle(
                body.get("experts", []), body.get("patients", [])
            )
        self._command(query, run, identity=False)

    def ep_add_member(self, query, match):
        circle = match.group(1)

        def run(_participant, body):
            _need(body, "participant")
            return self.ctx.service.add_circle_member(circle, body["participant"])
        self._command(query, run, identity=False)

    def ep_register_type(self, query, match):
        def run(_participant, body):
            _need(body, "code", "origin_role", "audience",
                  "requires_approval", "patient_visible")
            return self.ctx.service.register_notification_type(
                body["code"], body["origin_role"], body["audience"],
                body["requires_approval"], body["patient_visible"],
            )
        self._command(query, run, identity=False)

    def ep_submit_notification(self, query, match):
        def run(participant, body):
            _need(body, "circle", "type_code", "payload")
            return self.ctx.service.submit_notification(
                participant, body["circle"], body["type_code"], body["payload"]
            )
        self._command(query, run, identity=True)

    def ep_respond_approval(self, query, match):
        nid = match.group(1)

        def run(participant, body):
            _need(body, "verdict")
            return self.ctx.service.respond_approval(participant, nid, body["verdict"])
        self._command(query, run, identity=True)

    def ep_create_task(self, query, match):
        def run(participant, body):
            _need(body, "circle", "patient", "instructions")
            return self.ctx.service.create_task(
                participant, body["circle"], body["patient"],
                body["instructions"], body.get("schedule"), body.get("goals"),
            )
        self._command(query, run, identity=True)

    def ep_change_task(self, query, match):
        tid = match.group(1)

        def run(participant, body):
            _need(body, "diff")
            return self.ctx.service.apply_task_change(
                participant, tid, body["diff"], body.get("notify_patient", True)
            )
        self._command(query, run, identity=True)

    def ep_report_progress(self, query, match):
        tid = match.group(1)

        def run(participant, body):
            _need(body, "metrics")
            return self.ctx.service.report_progress(participant, tid, body["metrics"])
        self._command(query, run, identity=True)

    def ep_goal_reached(self, query, match):
        tid, label = match.group(1), match.group(2)

        def run(participant, body):
            return self.ctx.service.record_goal_reached(participant, tid, label)
        self._command(query, run, identity=True)

    def ep_ack(self, query, match):
        def run(participant, body):
            _need(body, "up_to_seq")
            return self.ctx.service.ack(participant, body["up_to_seq"])
        self._command(query, run, identity=True)

    # --- queries ----------------------------------------------------------------

    def ep_healthz(self, query, match):
        self._send_json(200, {"status": "ok"})

    def ep_readyz(self, query, match):
        if self.ctx.ready.is_set() and not self.ctx.stopping.is_set():
            self._send_json(200, {"status": "ok"})
        else:
            self._send_json(503, {"status": "starting"})

    def ep_me(self, query, match):
        _, participant = self._identity(query)
        self._send_json(200, self.ctx.service.get_participant(participant))

    def ep_get_participant(self, query, match):
        self._authenticate(query)
        self._send_json(200, self.ctx.service.get_participant(match.group(1)))

    def ep_get_circle(self, query, match):
        _, participant = self._identity(query)
        circle = self.ctx.service.get_circle(match.group(1))
        if participant not in circle["experts"] + circle["patients"]:
            raise _HttpReject("Forbidden", "not a member of this circle")
        self._send_json(200, circle)

    def ep_list_circles(self, query, match):
        _, participant = self._identity(query)
        self._send_json(200, {"circles": self.ctx.service.list_circles(participant)})

    def ep_get_notification(self, query, match):
        _, participant = self._identity(query)
        notif = self.ctx.service.get_notification(match.group(1))
        circle = self.ctx.service.get_circle(notif["circle"])
        if participant not in circle["experts"] + circle["patients"]:
            raise _HttpReject("Forbidden", "not a member of this circle")
        self._send_json(200, notif)

    def ep_get_task(self, query, match):
        _, participant = self._identity(query)
        task = self.ctx.service.get_task(match.group(1))
        circle = self.ctx.service.get_circle(task["circle"])
        if participant != task["patient"] and participant not in circle["experts"]:
            raise _HttpReject("Forbidden", "tasks are visible to the owner and circle experts")
        self._send_json(200, task)

    def ep_list_tasks(self, query, match):
        _, participant = self._identity(query)
        circle = query.get("circle")
        patient = query.get("patient")
        if circle is None and patient is None:
            me = self.ctx.service.get_participant(participant)
            if me["role"] == Role.END_USER.value:
                patient = participant
            else:
                raise _HttpReject("BadRequest", "experts must scope by circle or patient")
        if circle is not None:
            info = self.ctx.service.get_circle(circle)
            if participant not in info["experts"]:
                raise _HttpReject("Forbidden", "circle task lists are expert-only")
        if patient is not None and patient != participant:
            if not self._shares_circle_as_expert(participant, patient):
                raise _HttpReject("Forbidden", "no shared circle with this patient")
        self._send_json(
            200, {"tasks": self.ctx.service.list_tasks(circle=circle, patient=patient)}
        )

    def _shares_circle_as_expert(self, expert: str, patient: str) -> bool:
        state = self.ctx.service.state
        with self.ctx.service._lock:
            return any(
                expert in c.experts and patient in c.patients
                for c in state.circles.values()
            )

    def ep_list_types(self, query, match):
        self._authenticate(query)
        self._send_json(200, self.ctx.service.list_types())

    def ep_digest(self, query, match):
        self._authenticate(query)
        self._send_json(
            200, {"digest": self.ctx.service.digest(), "head": self.ctx.service.head()}
        )

    def ep_mailbox(self, query, match):
        _, participant = self._identity(query)
        try:
            after_seq = int(query.get("after_seq", 0))
            max_batch = int(query.get("max_batch", 100))
        except ValueError:
            raise _HttpReject("BadRequest", "after_seq and max_batch must be integers") from None
        self._send_json(200, self.ctx.service.poll(participant, after_seq, max_batch))

    # --- the event stream ---------------------------------------------------------

    def ep_stream(self, query, match):
        _, participant = self._identity(query)
        mailbox = query.get("mailbox", participant)
        if mailbox != participant:
            raise _HttpReject("Forbidden", "streams are per-participant")
        try:
            after_seq = int(query.get("after_seq", 0))
        except ValueError:
            raise _HttpReject("BadRequest", "after_seq must be an integer") from None
        if after_seq < 0:
            raise _HttpReject("BadRequest", "after_seq must be >= 0")

        service = self.ctx.service
        sub = service.subscribe(mailbox)  # live first: nothing can fall in between
        self.send_response(200)
        self.send_header("Content-Type", "text/event-stream; charset=utf-8")
        self.send_header("Cache-Control", "no-cache")
        self.send_header("Connection", "close")
        for key, value in _CORS_HEADERS.items():
            self.send_header(key, value)
        self.end_headers()
        self.close_connection = True

        heartbeat = max(self.ctx.config.heartbeat_seconds, 0.05)
        try:
            # Backlog: everything already in the mailbox past the cursor.
            cursor = after_seq
            while True:
                page = service.poll(mailbox, after_seq=cursor, max_batch=500)
                for item in page["deliveries"]:
                    self._write_frame(item)
                    cursor = item["seq"]
                if page["count"] < 500:
                    break
            next_hb = time.monotonic() + heartbeat
            while not self.ctx.stopping.is_set():
                if sub.closed and sub.pending() == 0:
                    break  # overflow: the client falls back to polling
                timeout = min(0.25, max(0.0, next_hb - time.monotonic()))
                item = sub.get(timeout=timeout)
                if item is not None:
                    self._write_frame(item)
                elif time.monotonic() >= next_hb:
                    self.wfile.write(b":hb\n\n")
                    self.wfile.flush()
                    next_hb = time.monotonic() + heartbeat
        except (BrokenPipeError, ConnectionResetError, OSError):
            pass
        finally:
            service.unsubscribe(sub)

    def _write_frame(self, item: dict) -> None:
        frame = b"id: %d\ndata: %s\n\n" % (item["seq"], canonical.dump_bytes(item))
        self.wfile.write(frame)
        self.wfile.flush()


_ROUTES = [
    ("GET", re.compile(r"^/healthz$"), _Handler.ep_healthz),
    ("GET", re.compile(r"^/readyz$"), _Handler.ep_readyz),
    ("GET", re.compile(r"^/me$"), _Handler.ep_me),
    ("POST", re.compile(r"^/participants$"), _Handler.ep_register_participant),
    ("GET", re.compile(r"^/participants/([^/]+)$"), _Handler.ep_get_participant),
    ("POST", re.compile(r"^/circles$"), _Handler.ep_create_circle),
    ("GET", re.compile(r"^/circles$"), _Handler.ep_list_circles),
    ("GET", re.compile(r"^/circles/([^/]+)$"), _Handler.ep_get_circle),
    ("POST", re.compile(r"^/circles/([^/]+)/members$"), _Handler.ep_add_member),
    ("POST", re.compile(r"^/types$"), _Handler.ep_register_type),
    ("GET", re.compile(r"^/types$"), _Handler.ep_list_types),
    ("POST", re.compile(r"^/notifications$"), _Handler.ep_submit_notification),
    ("GET", re.compile(r"^/notifications/([^/]+)$"), _Handler.ep_get_notification),
    ("POST", re.compile(r"^/notifications/([^/]+)/approvals$"), _Handler.ep_respond_approval),
    ("POST", re.compile(r"^/tasks$"), _Handler.ep_create_task),
    ("GET", re.compile(r"^/tasks$"), _Handler.ep_list_tasks),
    ("GET", re.compile(r"^/tasks/([^/]+)$"), _Handler.ep_get_task),
    ("PATCH", re.compile(r"^/tasks/([^/]+)$"), _Handler.ep_change_task),
    ("POST", re.compile(r"^/tasks/([^/]+)/reports$"), _Handler.ep_report_progress),
    ("POST", re.compile(r"^/tasks/([^/]+)/goals/([^/]+)/reached$"), _Handler.ep_goal_reached),
    ("GET", re.compile(r"^/mailbox$"), _Handler.ep_mailbox),
    ("POST", re.compile(r"^/mailbox/ack$"), _Handler.ep_ack),
    ("GET", re.compile(r"^/stream$"), _Handler.ep_stream),
    ("GET", re.compile(r"^/digest$"), _Handler.ep_digest),
]
