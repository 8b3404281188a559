"""The coordination engine: command validation, routing, and the event fold.

Command handlers are pure with respect to state: they validate against the
current :class:`EngineState`, then return ``(events, result)`` without
mutating anything. :meth:`Coordinator.apply` is the only mutator and folds
one event at a time, so replaying the log from empty reconstructs state
exactly. Every identifier is minted from a counter carried in state, which
makes two runs of the same command script byte-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from caremesh import canonical, events as ev
from caremesh.errors import (
    AlreadyMember,
    DomainForbidden,
    DomainMissing,
    DuplicateResponse,
    GoalAlreadyReached,
    InvalidArgument,
    InvalidSpec,
    NoApproversAvailable,
    NoExpertsInCircle,
    NotAnApprover,
    NotCircleMember,
    NotTaskOwner,
    PayloadTooLarge,
    RoleMismatch,
    SeqBeyondHead,
    SessionClosed,
    TaskNotActive,
    UnknownCircle,
    UnknownGoal,
    UnknownNotification,
    UnknownParticipant,
    UnknownTask,
)
from caremesh.events import DomainEvent
from caremesh.mailbox import MailboxStore
from caremesh.model import (
    ApprovalSession,
    Audience,
    CareCircle,
    Delivery,
    DeliveryKind,
    Goal,
    Notification,
    NotificationState,
    NotificationTypeSpec,
    Participant,
    Role,
    SessionOutcome,
    Task,
    TaskStatus,
    Verdict,
)
from caremesh.registry import TypeRegistry, approval_forward_recipients, resolve_recipients

MAX_PAYLOAD_BYTES = 64 * 1024

_COUNTER_KEYS = ("circle", "delivery", "event", "notification", "participant", "task")


@dataclass
class EngineState:
    """Everything replayable. ``counters["event"]`` mirrors the log head."""

    participants: dict[str, Participant] = field(default_factory=dict)
    circles: dict[str, CareCircle] = field(default_factory=dict)
    registry: TypeRegistry = field(default_factory=TypeRegistry)
    notifications: dict[str, Notification] = field(default_factory=dict)
    sessions: dict[str, ApprovalSession] = field(default_factory=dict)
    tasks: dict[str, Task] = field(default_factory=dict)
    mailboxes: MailboxStore = field(default_factory=MailboxStore)
    counters: dict[str, int] = field(
        default_factory=lambda: {k: 0 for k in _COUNTER_KEYS}
    )
    # Derived index: notification id -> [(mailbox, seq)] of its Direct
    # deliveries. Rebuilt by the fold, excluded from the canonical form.
    direct_refs: dict[str, list[tuple[str, int]]] = field(default_factory=dict)

    def canonical_form(self) -> dict:
        return {
            "circles": {cid: c.to_public() for cid, c in self.circles.items()},
            "counters": dict(self.counters),
            "mailboxes": self.mailboxes.canonical_form(),
            "notifications": {nid: n.to_public() for nid, n in self.notifications.items()},
            "participants": {pid: p.to_public() for pid, p in self.participants.items()},
            "sessions": {nid: s.to_public() for nid, s in self.sessions.items()},
            "tasks": {tid: t.to_public() for tid, t in self.tasks.items()},
            "types": self.registry.to_public()["types"],
        }

    def canonical_bytes(self) -> bytes:
        return canonical.dump_bytes(self.canonical_form())


class _Batch:
    """Allocation scratchpad for one command's event batch.

    Ids and per-mailbox seqs are read from state counters and advanced
    locally; the fold advances the real counters by exactly the same amounts
    when the events are applied.
    """

    def __init__(self, state: EngineState):
        self._state = state
        self._counters = dict(state.counters)
        self._mail_heads: dict[str, int] = {}
        self.base_seq = state.counters["event"]

    def next_id(self, key: str, prefix: str) -> str:
        self._counters[key] += 1
        return f"{prefix}{self._counters[key]}"

    def next_mail_seq(self, mailbox: str) -> int:
        head = self._mail_heads.get(mailbox)
        if head is None:
            head = self._state.mailboxes.head(mailbox)
        self._mail_heads[mailbox] = head + 1
        return head + 1


def _parse_role(value) -> Role:
    if isinstance(value, Role):
        return value
    try:
        return Role(value)
    except ValueError:
        raise InvalidArgument(f"unknown role {value!r}") from None


def _normalize_payload(payload) -> dict:
    """Accepts a bare text string or ``{"text", "attachment"?}``."""
    if isinstance(payload, str):
        payload = {"text": payload}
    if not isinstance(payload, dict):
        raise InvalidArgument("payload must be text or an object")
    unknown = set(payload) - {"text", "attachment"}
    if unknown:
        raise InvalidArgument(f"unknown payload fields: {sorted(unknown)}")
    text = payload.get("text")
    if not isinstance(text, str):
        raise InvalidArgument("payload.text must be a string")
    out: dict = {"text": text}
    attachment = payload.get("attachment")
    if attachment is not None:
        if not isinstance(attachment, dict):
            raise InvalidArgument("payload.attachment must be an object")
        out["attachment"] = attachment
    if len(canonical.dump_bytes(out)) > MAX_PAYLOAD_BYTES:
        raise PayloadTooLarge(f"payload exceeds {MAX_PAYLOAD_BYTES} bytes")
    return out


def _normalize_instructions(instructions) -> list[str]:
    if not isinstance(instructions, (list, tuple)) or not all(
        isinstance(i, str) for i in instructions
    ):
        raise InvalidArgument("instructions must be a list of strings")
    return list(instructions)


def _normalize_schedule(schedule) -> dict | None:
    if schedule is None:
        return None
    if not isinstance(schedule, dict):
        raise InvalidArgument("schedule must be an object")
    unknown = set(schedule) - {"text", "start", "end"}
    if unknown:
        raise InvalidArgument(f"unknown schedule fields: {sorted(unknown)}")
    out: dict = {}
    if "text" in schedule:
        if not isinstance(schedule["text"], str):
            raise InvalidArgument("schedule.text must be a string")
        out["text"] = schedule["text"]
    for key in ("start", "end"):
        if key in schedule and schedule[key] is not None:
            if not isinstance(schedule[key], int) or isinstance(schedule[key], bool):
                raise InvalidArgument(f"schedule.{key} must be a logical date (int)")
            out[key] = schedule[key]
    return out


def _normalize_goals(goals) -> list[dict]:
    """Goal declarations are ``{label, target}``; the reached flag is owned
    by the goal-reached command and never client-settable."""
    if goals is None:
        return []
    if not isinstance(goals, (list, tuple)):
        raise InvalidArgument("goals must be a list")
    out = []
    seen = set()
    for g in goals:
        if not isinstance(g, dict) or set(g) - {"label", "target"}:
            raise InvalidArgument("each goal must be {label, target}")
        label, target = g.get("label"), g.get("target", "")
        if not isinstance(label, str) or not label:
            raise InvalidArgument("goal.label must be a non-empty string")
        if not isinstance(target, str):
            raise InvalidArgument("goal.target must be a string")
        if label in seen:
            raise InvalidArgument(f"duplicate goal label {label!r}")
        seen.add(label)
        out.append({"label": label, "target": target})
    return out


def _normalize_metrics(metrics) -> dict:
    if not isinstance(metrics, dict) or not metrics:
        raise InvalidArgument("metrics must be a non-empty object")
    for key, value in metrics.items():
        if not isinstance(key, str):
            raise InvalidArgument("metric names must be strings")
        if isinstance(value, bool) or not isinstance(value, (str, int, float)):
            raise InvalidArgument(f"metric {key!r} must be text or a number")
    return dict(metrics)


class Coordinator:
    """Single logical writer over :class:`EngineState`."""

    def __init__(self, state: EngineState | None = None):
        self.state = state if state is not None else EngineState()

    # --- lookups ----------------------------------------------------------

    def _participant(self, pid: str) -> Participant:
        try:
            return self.state.participants[pid]
        except KeyError:
            raise UnknownParticipant(f"no participant {pid!r}") from None

    def _circle(self, cid: str) -> CareCircle:
        try:
            return self.state.circles[cid]
        except KeyError:
            raise UnknownCircle(f"no circle {cid!r}") from None

    def _task(self, tid: str) -> Task:
        try:
            return self.state.tasks[tid]
        except KeyError:
            raise UnknownTask(f"no task {tid!r}") from None

    # --- command handlers (validate, never mutate) -------------------------

    def register_participant(self, role, display_name: str, domain: str | None = None):
        role = _parse_role(role)
        if not isinstance(display_name, str) or not display_name:
            raise InvalidArgument("display_name must be a non-empty string")
        if role is Role.EXPERT and not domain:
            raise DomainMissing("experts must declare a domain tag")
        if role is Role.END_USER and domain:
            raise DomainForbidden("end-users carry no domain tag")
        batch = _Batch(self.state)
        pid = batch.next_id("participant", "p")
        body = {
            "active": True,
            "display_name": display_name,
            "id": pid,
            "role": role.value,
        }
        if domain:
            body["domain"] = domain
        result = dict(body)
        return [(ev.PARTICIPANT_REGISTERED, body)], result

    def create_circle(self, experts=(), patients=()):
        experts = sorted(set(experts))
        patients = sorted(set(patients))
        for pid in experts:
            if self._participant(pid).role is not Role.EXPERT:
                raise RoleMismatch(f"{pid} is not an expert")
        for pid in patients:
            if self._participant(pid).role is not Role.END_USER:
                raise RoleMismatch(f"{pid} is not an end-user")
        batch = _Batch(self.state)
        cid = batch.next_id("circle", "c")
        body = {"experts": experts, "id": cid, "patients": patients}
        return [(ev.CIRCLE_CREATED, body)], dict(body)

    def add_circle_member(self, circle: str, participant: str):
        c = self._circle(circle)
        p = self._participant(participant)
        if participant in c.members():
            raise AlreadyMember(f"{participant} is already in circle {circle}")
        events = [(ev.CIRCLE_MEMBER_ADDED, {"circle": circle, "participant": participant})]
        experts = set(c.experts)
        patients = set(c.patients)
        (experts if p.role is Role.EXPERT else patients).add(participant)
        result = {"experts": sorted(experts), "id": circle, "patients": sorted(patients)}
        return events, result

    def register_notification_type(
        self, code, origin_role, audience, requires_approval, patient_visible
    ):
        try:
            spec = NotificationTypeSpec(
                code=code,
                origin_role=Role(origin_role),
                audience=Audience(audience),
                requires_approval=bool(requires_approval),
                patient_visible=bool(patient_visible),
            )
        except ValueError as exc:
            raise InvalidSpec(str(exc)) from None
        self.state.registry.check_new(spec)
        result = self.state.registry.to_public()
        result["types"][spec.code] = spec.to_public()
        return [(ev.TYPE_REGISTERED, spec.to_public())], result

    def submit_notification(self, sender: str, circle: str, type_code: str, payload):
        p = self._participant(sender)
        if not p.active:
            raise InvalidArgument(f"sender {sender} is inactive")
        c = self._circle(circle)
        if sender not in c.members():
            raise NotCircleMember(f"{sender} is not a member of {circle}")
        if not c.experts:
            raise NoExpertsInCircle(f"circle {circle} has no experts yet")
        spec = self.state.registry.get(type_code)
        if p.role is not spec.origin_role:
            raise RoleMismatch(
                f"{type_code} originates from {spec.origin_role.value}, "
                f"sender is {p.role.value}"
            )
        payload = _normalize_payload(payload)
        if spec.requires_approval and not (c.experts - {sender}):
            raise NoApproversAvailable(
                f"{type_code} needs peer approval and {circle} has no other experts"
            )
        batch = _Batch(self.state)
        nid, events, count, state = self._notification_events(
            batch, spec, sender, c, payload
        )
        return events, {
            "delivery_count": count,
            "notification_id": nid,
            "state": state,
        }

    def _notification_events(
        self,
        batch: _Batch,
        spec: NotificationTypeSpec,
        sender: str,
        circle: CareCircle,
        payload: dict,
        target_patients: set[str] | None = None,
        pre_events: int = 0,
    ):
        """Shared tail of every notification-producing command."""
        nid = batch.next_id("notification", "n")
        events: list[tuple[str, dict]] = [
            (
                ev.NOTIFICATION_SUBMITTED,
                {
                    "circle": circle.id,
                    "id": nid,
                    "payload": payload,
                    "sender": sender,
                    "type_code": spec.code,
                },
            )
        ]
        body = {
            "circle": circle.id,
            "payload": payload,
            "sender": sender,
            "type_code": spec.code,
        }
        if spec.requires_approval:
            recipients = sorted(circle.experts - {sender})
            kind, state = DeliveryKind.APPROVAL_REQUEST, "AwaitingApproval"
        else:
            recipients = resolve_recipients(spec, circle, sender, target_patients)
            kind, state = DeliveryKind.DIRECT, "Routed"
        for recipient in recipients:
            events.append(self._delivery_event(batch, recipient, nid, kind, body))
        return nid, events, len(recipients), state

    def _delivery_event(
        self, batch: _Batch, mailbox: str, nid: str, kind: DeliveryKind, body: dict
    ):
        return (
            ev.DELIVERY_ENQUEUED,
            {
                "body": body,
                "delivery_id": batch.next_id("delivery", "d"),
                "kind": kind.value,
                "mailbox": mailbox,
                "notification_id": nid,
                "seq": batch.next_mail_seq(mailbox),
            },
        )

    def respond_approval(self, expert: str, notification_id: str, verdict):
        self._participant(expert)
        notif = self.state.notifications.get(notification_id)
        session = self.state.sessions.get(notification_id)
        if notif is None or session is None:
            raise UnknownNotification(
                f"no approval session for notification {notification_id!r}"
            )
        if session.outcome is not SessionOutcome.OPEN:
            raise SessionClosed(
                f"session for {notification_id} already {session.outcome.value}"
            )
        if expert not in session.required_approvers:
            raise NotAnApprover(f"{expert} is not a required approver")
        if session.verdicts[expert] is not Verdict.PENDING:
            raise DuplicateResponse(f"{expert} already responded")
        try:
            v = Verdict(verdict)
        except ValueError:
            raise InvalidArgument(f"verdict must be OK or Reject, got {verdict!r}") from None
        if v is Verdict.PENDING:
            raise InvalidArgument("verdict must be OK or Reject")

        events: list[tuple[str, dict]] = [
            (
                ev.APPROVAL_RECORDED,
                {"expert": expert, "notification_id": notification_id, "verdict": v.value},
            )
        ]
        verdicts = dict(session.verdicts)
        verdicts[expert] = v
        circle = self._circle(notif.circle)
        batch = _Batch(self.state)
        outcome = SessionOutcome.OPEN
        notice = {
            "circle": circle.id,
            "payload": notif.payload,
            "sender": notif.sender,
            "type_code": notif.type_code,
        }
        if v is Verdict.REJECT:
            outcome = SessionOutcome.REJECTED
            events.append(
                (
                    ev.SESSION_CLOSED,
                    {"notification_id": notification_id, "outcome": outcome.value},
                )
            )
            events.append(
                self._delivery_event(
                    batch,
                    notif.sender,
                    notification_id,
                    DeliveryKind.REJECTION_NOTICE,
                    {**notice, "outcome": outcome.value, "rejected_by": expert},
                )
            )
        elif all(x is Verdict.OK for x in verdicts.values()):
            outcome = SessionOutcome.ALL_APPROVED
            events.append(
                (
                    ev.SESSION_CLOSED,
                    {"notification_id": notification_id, "outcome": outcome.value},
                )
            )
            # patient_visible gates the forward even for approval types; an
            # approved-but-invisible notification stays at Approved.
            spec = self.state.registry.get(notif.type_code)
            forward = (
                approval_forward_recipients(circle, notif.sender)
                if spec.patient_visible
                else []
            )
            for patient in forward:
                events.append(
                    self._delivery_event(
                        batch, patient, notification_id, DeliveryKind.DIRECT, notice
                    )
                )
            events.append(
                self._delivery_event(
                    batch,
                    notif.sender,
                    notification_id,
                    DeliveryKind.APPROVAL_RESULT,
                    {**notice, "outcome": outcome.value},
                )
            )
        result = {
            "notification_id": notification_id,
            "outcome": outcome.value,
            "required_approvers": sorted(session.required_approvers),
            "verdicts": {k: x.value for k, x in sorted(verdicts.items())},
        }
        return events, result

    def create_task(
        self, creator: str, circle: str, patient: str,
        instructions, schedule=None, goals=None,
    ):
        p = self._participant(creator)
        if p.role is not Role.EXPERT:
            raise RoleMismatch("tasks are created by experts")
        c = self._circle(circle)
        if creator not in c.experts:
            raise NotCircleMember(f"{creator} is not an expert in {circle}")
        if patient not in c.patients:
            raise NotCircleMember(f"{patient} is not a patient in {circle}")
        instructions = _normalize_instructions(instructions)
        schedule = _normalize_schedule(schedule)
        goals = _normalize_goals(goals)
        batch = _Batch(self.state)
        tid = batch.next_id("task", "t")
        body = {
            "circle": circle,
            "created_by": creator,
            "goals": [{**g, "reached": False} for g in goals],
            "id": tid,
            "instructions": instructions,
            "patient": patient,
            "status": TaskStatus.ACTIVE.value,
            "version": 1,
        }
        if p.domain is not None:
            body["domain"] = p.domain
        if schedule is not None:
            body["schedule"] = schedule
        result = dict(body)
        result["reports"] = []
        return [(ev.TASK_CREATED, body)], result

    def apply_task_change(self, editor: str, task_id: str, diff, notify_patient=True):
        task = self._task(task_id)
        self._participant(editor)
        circle = self._circle(task.circle)
        if editor not in circle.experts:
            raise NotCircleMember(f"{editor} is not an expert in {task.circle}")
        if task.status is not TaskStatus.ACTIVE:
            raise TaskNotActive(f"task {task_id} is {task.status.value}")
        if not isinstance(diff, dict):
            raise InvalidArgument("diff must be an object")
        unknown = set(diff) - {"instructions", "schedule", "goals", "status"}
        if unknown:
            raise InvalidArgument(f"unknown diff fields: {sorted(unknown)}")
        normalized: dict = {}
        if "instructions" in diff:
            normalized["instructions"] = _normalize_instructions(diff["instructions"])
        if "schedule" in diff:
            schedule = _normalize_schedule(diff["schedule"])
            if schedule is not None:
                normalized["schedule"] = schedule
        if "goals" in diff:
            normalized["goals"] = _normalize_goals(diff["goals"])
        if "status" in diff:
            # Completion/withdrawal is itself a change; reactivation is not.
            if diff["status"] not in (TaskStatus.COMPLETED.value, TaskStatus.WITHDRAWN.value):
                raise InvalidArgument("status may only change to Completed or Withdrawn")
            normalized["status"] = diff["status"]
        version = task.version + 1
        events: list[tuple[str, dict]] = [
            (
                ev.TASK_CHANGED,
                {
                    "diff": normalized,
                    "editor": editor,
                    "notify_patient": bool(notify_patient),
                    "task_id": task_id,
                    "version": version,
                },
            )
        ]
        spec = self.state.registry.get("T3" if notify_patient else "T4")
        payload = {
            "text": f"Task {task_id} updated (v{version})",
            "attachment": {"kind": "task_change", "task_id": task_id, "version": version},
        }
        batch = _Batch(self.state)
        nid, notif_events, count, _ = self._notification_events(
            batch, spec, editor, circle, payload, target_patients={task.patient}
        )
        events.extend(notif_events)
        result = {
            "delivery_count": count,
            "diff": normalized,
            "editor": editor,
            "notification_id": nid,
            "notify_patient": bool(notify_patient),
            "task_id": task_id,
            "version": version,
        }
        return events, result

    def report_progress(self, patient: str, task_id: str, metrics):
        self._participant(patient)
        task = self._task(task_id)
        if task.patient != patient:
            raise NotTaskOwner(f"task {task_id} belongs to {task.patient}")
        metrics = _normalize_metrics(metrics)
        circle = self._circle(task.circle)
        report_index = len(task.reports) + 1
        events: list[tuple[str, dict]] = [
            (
                ev.PROGRESS_REPORTED,
                {
                    "metrics": metrics,
                    "patient": patient,
                    "report_index": report_index,
                    "task_id": task_id,
                },
            )
        ]
        spec = self.state.registry.get("T5")
        payload = {
            "text": f"Progress report #{report_index} on task {task_id}",
            "attachment": {
                "kind": "progress_report",
                "report_index": report_index,
                "task_id": task_id,
            },
        }
        batch = _Batch(self.state)
        nid, notif_events, count, state = self._notification_events(
            batch, spec, patient, circle, payload
        )
        events.extend(notif_events)
        created_at = batch.base_seq + len(events) - len(notif_events) + 1
        result = {
            "circle": circle.id,
            "created_at": created_at,
            "delivery_count": count,
            "id": nid,
            "payload": payload,
            "sender": patient,
            "state": state,
            "type_code": spec.code,
        }
        return events, result

    def record_goal_reached(self, patient: str, task_id: str, goal_label: str):
        self._participant(patient)
        task = self._task(task_id)
        if task.patient != patient:
            raise NotTaskOwner(f"task {task_id} belongs to {task.patient}")
        goal = task.goal(goal_label)
        if goal is None:
            raise UnknownGoal(f"task {task_id} has no goal {goal_label!r}")
        if goal.reached:
            raise GoalAlreadyReached(f"goal {goal_label!r} was already reached")
        circle = self._circle(task.circle)
        events: list[tuple[str, dict]] = [
            (
                ev.GOAL_REACHED,
                {"label": goal_label, "patient": patient, "task_id": task_id},
            )
        ]
        spec = self.state.registry.get("T6")
        payload = {
            "text": f"Goal {goal_label!r} reached on task {task_id}",
            "attachment": {"kind": "goal_reached", "label": goal_label, "task_id": task_id},
        }
        batch = _Batch(self.state)
        nid, notif_events, count, state = self._notification_events(
            batch, spec, patient, circle, payload
        )
        events.extend(notif_events)
        created_at = batch.base_seq + len(events) - len(notif_events) + 1
        result = {
            "circle": circle.id,
            "created_at": created_at,
            "delivery_count": count,
            "id": nid,
            "payload": payload,
            "sender": patient,
            "state": state,
            "type_code": spec.code,
        }
        return events, result

    def ack_deliveries(self, mailbox: str, up_to_seq):
        if not isinstance(up_to_seq, int) or isinstance(up_to_seq, bool) or up_to_seq < 0:
            raise InvalidArgument("up_to_seq must be an integer >= 0")
        head = self.state.mailboxes.head(mailbox)  # raises UnknownMailbox
        if up_to_seq > head:
            raise SeqBeyondHead(f"ack {up_to_seq} beyond mailbox head {head}")
        cursor = self.state.mailboxes.cursor(mailbox)
        if up_to_seq <= cursor:
            # Idempotent no-op: the log records state changes, not retries.
            return [], {"cursor": cursor, "mailbox": mailbox}
        events = [(ev.DELIVERY_ACKED, {"mailbox": mailbox, "up_to_seq": up_to_seq})]
        return events, {"cursor": up_to_seq, "mailbox": mailbox}

    # --- the event fold -----------------------------------------------------

    def apply(self, event: DomainEvent) -> None:
        if event.seq != self.state.counters["event"] + 1:
            raise InvalidArgument(
                f"apply out of order: event {event.seq} onto state at "
                f"{self.state.counters['event']}"
            )
        self._APPLY[event.kind](self, event.body, event.seq)
        self.state.counters["event"] = event.seq

    def _apply_participant_registered(self, body: dict, seq: int) -> None:
        p = Participant(
            id=body["id"],
            role=Role(body["role"]),
            display_name=body["display_name"],
            domain=body.get("domain"),
            active=body["active"],
        )
        self.state.participants[p.id] = p
        self.state.mailboxes.create(p.id)
        self.state.counters["participant"] += 1

    def _apply_circle_created(self, body: dict, seq: int) -> None:
        circle = CareCircle(
            id=body["id"], experts=set(body["experts"]), patients=set(body["patients"])
        )
        self.state.circles[circle.id] = circle
        self.state.counters["circle"] += 1

    def _apply_circle_member_added(self, body: dict, seq: int) -> None:
        circle = self.state.circles[body["circle"]]
        member = self.state.participants[body["participant"]]
        if member.role is Role.EXPERT:
            circle.experts.add(member.id)
        else:
            circle.patients.add(member.id)

    def _apply_type_registered(self, body: dict, seq: int) -> None:
        self.state.registry.register(
            NotificationTypeSpec(
                code=body["code"],
                origin_role=Role(body["origin_role"]),
                audience=Audience(body["audience"]),
                requires_approval=body["requires_approval"],
                patient_visible=body["patient_visible"],
            )
        )

    def _apply_notification_submitted(self, body: dict, seq: int) -> None:
        spec = self.state.registry.get(body["type_code"])
        state = (
            NotificationState.AWAITING_APPROVAL
            if spec.requires_approval
            else NotificationState.ROUTED
        )
        notif = Notification(
            id=body["id"],
            type_code=body["type_code"],
            sender=body["sender"],
            circle=body["circle"],
            payload=body["payload"],
            created_at=seq,
            state=state,
        )
        self.state.notifications[notif.id] = notif
        self.state.counters["notification"] += 1
        if spec.requires_approval:
            circle = self.state.circles[notif.circle]
            required = set(circle.experts) - {notif.sender}
            self.state.sessions[notif.id] = ApprovalSession(
                notification_id=notif.id,
                required_approvers=required,
                verdicts={a: Verdict.PENDING for a in required},
            )

    def _apply_approval_recorded(self, body: dict, seq: int) -> None:
        session = self.state.sessions[body["notification_id"]]
        session.verdicts[body["expert"]] = Verdict(body["verdict"])

    def _apply_session_closed(self, body: dict, seq: int) -> None:
        session = self.state.sessions[body["notification_id"]]
        session.outcome = SessionOutcome(body["outcome"])
        notif = self.state.notifications[body["notification_id"]]
        notif.state = (
            NotificationState.APPROVED
            if session.outcome is SessionOutcome.ALL_APPROVED
            else NotificationState.REJECTED
        )

    def _apply_delivery_enqueued(self, body: dict, seq: int) -> None:
        delivery = Delivery(
            delivery_id=body["delivery_id"],
            mailbox=body["mailbox"],
            seq=body["seq"],
            notification_id=body["notification_id"],
            kind=DeliveryKind(body["kind"]),
            body=body["body"],
        )
        self.state.mailboxes.append(delivery)
        self.state.counters["delivery"] += 1
        if delivery.kind is DeliveryKind.DIRECT:
            self.state.direct_refs.setdefault(delivery.notification_id, []).append(
                (delivery.mailbox, delivery.seq)
            )
            notif = self.state.notifications[delivery.notification_id]
            if notif.state is NotificationState.APPROVED:
                notif.state = NotificationState.DELIVERED

    def _apply_delivery_acked(self, body: dict, seq: int) -> None:
        _, newly = self.state.mailboxes.ack(body["mailbox"], body["up_to_seq"])
        flipped = set()
        for d in newly:
            if d.kind is DeliveryKind.DIRECT:
                flipped.add(d.notification_id)
        for nid in flipped:
            notif = self.state.notifications[nid]
            if notif.state is not NotificationState.ROUTED:
                continue
            refs = self.state.direct_refs.get(nid, ())
            if all(self.state.mailboxes.get(m, s).acked for m, s in refs):
                notif.state = NotificationState.DELIVERED

    def _apply_task_created(self, body: dict, seq: int) -> None:
        task = Task(
            id=body["id"],
            patient=body["patient"],
            created_by=body["created_by"],
            domain=body.get("domain"),
            circle=body["circle"],
            instructions=list(body["instructions"]),
            schedule=body.get("schedule"),
            goals=[Goal(g["label"], g["target"], g["reached"]) for g in body["goals"]],
            status=TaskStatus(body["status"]),
            version=body["version"],
        )
        self.state.tasks[task.id] = task
        self.state.counters["task"] += 1

    def _apply_task_changed(self, body: dict, seq: int) -> None:
        task = self.state.tasks[body["task_id"]]
        diff = body["diff"]
        if "instructions" in diff:
            task.instructions = list(diff["instructions"])
        if "schedule" in diff:
            task.schedule = diff["schedule"]
        if "goals" in diff:
            reached = {g.label for g in task.goals if g.reached}
            # Goal flags are monotone: a replacement list never un-reaches.
            task.goals = [
                Goal(g["label"], g["target"], g["label"] in reached)
                for g in diff["goals"]
            ]
        if "status" in diff:
            task.status = TaskStatus(diff["status"])
        task.version = body["version"]

    def _apply_progress_reported(self, body: dict, seq: int) -> None:
        task = self.state.tasks[body["task_id"]]
        task.reports.append(
            {
                "metrics": body["metrics"],
                "report_index": body["report_index"],
                "seq": seq,
            }
        )

    def _apply_goal_reached(self, body: dict, seq: int) -> None:
        task = self.state.tasks[body["task_id"]]
        goal = task.goal(body["label"])
        goal.reached = True

    _APPLY = {
        ev.PARTICIPANT_REGISTERED: _apply_participant_registered,
        ev.CIRCLE_CREATED: _apply_circle_created,
        ev.CIRCLE_MEMBER_ADDED: _apply_circle_member_added,
        ev.TYPE_REGISTERED: _apply_type_registered,
        ev.NOTIFICATION_SUBMITTED: _apply_notification_submitted,
        ev.APPROVAL_RECORDED: _apply_approval_recorded,
        ev.SESSION_CLOSED: _apply_session_closed,
        ev.DELIVERY_ENQUEUED: _apply_delivery_enqueued,
        ev.DELIVERY_ACKED: _apply_delivery_acked,
        ev.TASK_CREATED: _apply_task_created,
        ev.TASK_CHANGED: _apply_task_changed,
        ev.PROGRESS_REPORTED: _apply_progress_reported,
        ev.GOAL_REACHED: _apply_goal_reached,
    }
