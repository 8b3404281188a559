"""Single-writer coordination service.

Binds the engine, the event log, and the live subscriber hub. Every
state-mutating command is serialized through one lock: validate, append
(durable), fold, fan out. Read-only queries take the lock briefly and return
plain canonical dicts. Opening a service replays the log, so a restart is
indistinguishable from never having stopped.
"""

from __future__ import annotations

import threading
from pathlib import Path

from caremesh import events as ev
from caremesh.coordinator import Coordinator, EngineState
from caremesh.eventlog import EventLog
from caremesh.errors import UnknownCircle, UnknownMailbox, UnknownNotification, UnknownTask
from caremesh.mailbox import DEFAULT_MAX_BATCH, SubscriberHub, Subscription

SNAPSHOT_INTERVAL = 1000


class CoordinatorService:
    """The coordinator's in-process face; the HTTP API wraps this 1:1."""

    def __init__(
        self,
        log: EventLog | None = None,
        *,
        stream_buffer: int = 1000,
        snapshots: bool = True,
    ):
        self._log = log if log is not None else EventLog()
        self._coordinator = Coordinator()
        self._hub = SubscriberHub(default_buffer=stream_buffer)
        self._lock = threading.RLock()
        self._snapshots = snapshots and self._log.path is not None
        self._last_snapshot = 0
        for event in self._log.read_from(1):
            self._coordinator.apply(event)
        self._last_snapshot = (self._log.head() // SNAPSHOT_INTERVAL) * SNAPSHOT_INTERVAL

    # --- plumbing -----------------------------------------------------------

    @property
    def state(self) -> EngineState:
        return self._coordinator.state

    @property
    def log(self) -> EventLog:
        return self._log

    def _execute(self, handler, *args, **kwargs) -> dict:
        with self._lock:
            pending, result = handler(*args, **kwargs)
            appended = self._log.append(pending)
            for event in appended:
                self._coordinator.apply(event)
            if self._snapshots and self._log.head() - self._last_snapshot >= SNAPSHOT_INTERVAL:
                self._write_snapshot()
            # Fan out inside the lock so per-mailbox stream order matches
            # seq order; push is non-blocking, slow consumers just overflow.
            for event in appended:
                if event.kind == ev.DELIVERY_ENQUEUED:
                    body = event.body
                    item = {
                        "body": body["body"],
                        "delivery_id": body["delivery_id"],
                        "kind": body["kind"],
                        "mailbox": body["mailbox"],
                        "notification_id": body["notification_id"],
                        "seq": body["seq"],
                    }
                    self._hub.publish(body["mailbox"], item)
        return result

    def _write_snapshot(self) -> None:
        head = self._log.head()
        path = Path(f"{self._log.path}.snap.{head}")
        try:
            path.write_bytes(self.state.canonical_bytes())
        except OSError:
            pass  # snapshots are advisory; replay never needs them
        self._last_snapshot = head

    def close(self) -> None:
        self._hub.close_all()
        self._log.close()

    # --- commands ------------------------------------------------------------

    def register_participant(self, role, display_name, domain=None) -> dict:
        return self._execute(
            self._coordinator.register_participant, role, display_name, domain
        )

    def create_circle(self, experts=(), patients=()) -> dict:
        return self._execute(self._coordinator.create_circle, experts, patients)

    def add_circle_member(self, circle, participant) -> dict:
        return self._execute(self._coordinator.add_circle_member, circle, participant)

    def register_notification_type(
        self, code, origin_role, audience, requires_approval, patient_visible
    ) -> dict:
        return self._execute(
            self._coordinator.register_notification_type,
            code, origin_role, audience, requires_approval, patient_visible,
        )

    def submit_notification(self, sender, circle, type_code, payload) -> dict:
        return self._execute(
            self._coordinator.submit_notification, sender, circle, type_code, payload
        )

    def respond_approval(self, expert, notification_id, verdict) -> dict:
        return self._execute(
            self._coordinator.respond_approval, expert, notification_id, verdict
        )

    def create_task(
        self, creator, circle, patient, instructions, schedule=None, goals=None
    ) -> dict:
        return self._execute(
            self._coordinator.create_task,
            creator, circle, patient, instructions, schedule, goals,
        )

    def apply_task_change(self, editor, task_id, diff, notify_patient=True) -> dict:
        return self._execute(
            self._coordinator.apply_task_change, editor, task_id, diff, notify_patient
        )

    def report_progress(self, patient, task_id, metrics) -> dict:
        return self._execute(
            self._coordinator.report_progress, patient, task_id, metrics
        )

    def record_goal_reached(self, patient, task_id, goal_label) -> dict:
        return self._execute(
            self._coordinator.record_goal_reached, patient, task_id, goal_label
        )

    def ack(self, mailbox, up_to_seq) -> dict:
        return self._execute(self._coordinator.ack_deliveries, mailbox, up_to_seq)

    # --- queries --------------------------------------------------------------

    def get_participant(self, pid: str) -> dict:
        with self._lock:
            return self._coordinator._participant(pid).to_public()

    def get_circle(self, cid: str) -> dict:
        with self._lock:
            return self._coordinator._circle(cid).to_public()

    def list_circles(self, member: str) -> list[dict]:
        with self._lock:
            return [
                self.state.circles[cid].to_public()
                for cid in sorted(self.state.circles)
                if member in self.state.circles[cid].members()
            ]

    def get_notification(self, nid: str) -> dict:
        with self._lock:
            notif = self.state.notifications.get(nid)
            if notif is None:
                raise UnknownNotification(f"no notification {nid!r}")
            out = notif.to_public()
            session = self.state.sessions.get(nid)
            if session is not None:
                out["session"] = session.to_public()
            return out

    def get_task(self, tid: str) -> dict:
        with self._lock:
            task = self.state.tasks.get(tid)
            if task is None:
                raise UnknownTask(f"no task {tid!r}")
            return task.to_public()

    def list_tasks(self, circle: str | None = None, patient: str | None = None) -> list[dict]:
        with self._lock:
            if circle is not None and circle not in self.state.circles:
                raise UnknownCircle(f"no circle {circle!r}")
            out = []
            for tid in sorted(self.state.tasks):
                task = self.state.tasks[tid]
                if circle is not None and task.circle != circle:
                    continue
                if patient is not None and task.patient != patient:
                    continue
                out.append(task.to_public())
            return out

    def list_types(self) -> dict:
        with self._lock:
            return self.state.registry.to_public()

    def poll(self, mailbox: str, after_seq: int = 0, max_batch: int = DEFAULT_MAX_BATCH) -> dict:
        with self._lock:
            deliveries = self.state.mailboxes.poll(mailbox, after_seq, max_batch)
            return {
                "count": len(deliveries),
                "cursor": self.state.mailboxes.cursor(mailbox),
                "deliveries": [d.to_public() for d in deliveries],
                "head": self.state.mailboxes.head(mailbox),
            }

    def mailbox_head(self, mailbox: str) -> int:
        with self._lock:
            return self.state.mailboxes.head(mailbox)

    def cursor(self, mailbox: str) -> int:
        with self._lock:
            return self.state.mailboxes.cursor(mailbox)

    def subscribe(self, mailbox: str, buffer: int | None = None) -> Subscription:
        """Live stream of deliveries enqueued after this call returns."""
        with self._lock:
            if not self.state.mailboxes.exists(mailbox):
                raise UnknownMailbox(f"no mailbox for participant {mailbox!r}")
            return self._hub.subscribe(mailbox, buffer)

    def unsubscribe(self, sub: Subscription) -> None:
        self._hub.unsubscribe(sub)

    def digest(self) -> str:
        with self._lock:
            return self._log.digest()

    def head(self) -> int:
        with self._lock:
            return self._log.head()

    def canonical_state_bytes(self) -> bytes:
        with self._lock:
            return self.state.canonical_bytes()

    # --- replay ---------------------------------------------------------------

    def replay_state_bytes(self) -> bytes:
        """Fold the whole log into a fresh engine; the result must be
        byte-identical to the live canonical state."""
        with self._lock:
            fresh = Coordinator()
            for event in self._log.read_from(1):
                fresh.apply(event)
            return fresh.state.canonical_bytes()


def replay_file(path) -> bytes:
    """Replay an on-disk log from scratch (no recovery: damage raises)."""
    log = EventLog(path, durable=False, recover=False)
    try:
        fresh = Coordinator()
        for event in log.read_from(1):
            fresh.apply(event)
        return fresh.state.canonical_bytes()
    finally:
        log.close()
