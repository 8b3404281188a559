"""Domain types for the coordination engine.

Everything here is a plain record; behavior lives in the coordinator. Each
type knows how to render itself as a canonical-form dict (``to_public``),
which is the shape used on the wire and in state snapshots.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum


class Role(str, Enum):
    EXPERT = "Expert"
    END_USER = "EndUser"


class Audience(str, Enum):
    OTHER_EXPERTS = "OtherExperts"
    PATIENT = "Patient"
    ALL_EXPERTS = "AllExperts"


class NotificationState(str, Enum):
    ROUTED = "Routed"
    AWAITING_APPROVAL = "AwaitingApproval"
    APPROVED = "Approved"
    REJECTED = "Rejected"
    DELIVERED = "Delivered"


class Verdict(str, Enum):
    PENDING = "Pending"
    OK = "OK"
    REJECT = "Reject"


class SessionOutcome(str, Enum):
    OPEN = "Open"
    ALL_APPROVED = "AllApproved"
    REJECTED = "Rejected"


class TaskStatus(str, Enum):
    ACTIVE = "Active"
    COMPLETED = "Completed"
    WITHDRAWN = "Withdrawn"


class DeliveryKind(str, Enum):
    DIRECT = "Direct"
    APPROVAL_REQUEST = "ApprovalRequest"
    APPROVAL_RESULT = "ApprovalResult"
    REJECTION_NOTICE = "RejectionNotice"


@dataclass
class Participant:
    """An expert (with a domain tag) or an end-user; member of care circles."""

    id: str
    role: Role
    display_name: str
    domain: str | None = None
    active: bool = True

    def to_public(self) -> dict:
        out = {
            "active": self.active,
            "display_name": self.display_name,
            "id": self.id,
            "role": self.role.value,
        }
        if self.domain is not None:
            out["domain"] = self.domain
        return out


@dataclass
class CareCircle:
    """A group of experts plus the patient(s) they jointly supervise."""

    id: str
    experts: set[str] = field(default_factory=set)
    patients: set[str] = field(default_factory=set)

    def members(self) -> set[str]:
        return self.experts | self.patients

    def to_public(self) -> dict:
        return {
            "experts": sorted(self.experts),
            "id": self.id,
            "patients": sorted(self.patients),
        }


@dataclass(frozen=True)
class NotificationTypeSpec:
    """Routing rules for one notification type code."""

    code: str
    origin_role: Role
    audience: Audience
    requires_approval: bool
    patient_visible: bool

    def to_public(self) -> dict:
        return {
            "audience": self.audience.value,
            "code": self.code,
            "origin_role": self.origin_role.value,
            "patient_visible": self.patient_visible,
            "requires_approval": self.requires_approval,
        }


@dataclass
class Notification:
    """A typed real-time interaction instance with a lifecycle state.

    ``created_at`` is the event-log sequence number of the submission; all
    ordering is logical, never wall clock.
    """

    id: str
    type_code: str
    sender: str
    circle: str
    payload: dict
    created_at: int
    state: NotificationState

    def to_public(self) -> dict:
        return {
            "circle": self.circle,
            "created_at": self.created_at,
            "id": self.id,
            "payload": self.payload,
            "sender": self.sender,
            "state": self.state.value,
            "type_code": self.type_code,
        }


@dataclass
class ApprovalSession:
    """Tracks which experts must consent before a notification is forwarded."""

    notification_id: str
    required_approvers: set[str]
    verdicts: dict[str, Verdict]
    outcome: SessionOutcome = SessionOutcome.OPEN

    def all_ok(self) -> bool:
        return all(v is Verdict.OK for v in self.verdicts.values())

    def to_public(self) -> dict:
        return {
            "notification_id": self.notification_id,
            "outcome": self.outcome.value,
            "required_approvers": sorted(self.required_approvers),
            "verdicts": {k: v.value for k, v in sorted(self.verdicts.items())},
        }


@dataclass
class Goal:
    label: str
    target: str
    reached: bool = False

    def to_public(self) -> dict:
        return {"label": self.label, "reached": self.reached, "target": self.target}


@dataclass
class Task:
    """A set of instructions assigned by an expert to a patient.

    ``schedule`` is a free-form descriptor: ``{"text": ..., "start": ...,
    "end": ...}`` with logical dates. Goal ``reached`` flags are monotone.
    """

    id: str
    patient: str
    created_by: str
    domain: str | None
    circle: str
    instructions: list[str]
    schedule: dict | None = None
    goals: list[Goal] = field(default_factory=list)
    status: TaskStatus = TaskStatus.ACTIVE
    version: int = 1
    reports: list[dict] = field(default_factory=list)

    def goal(self, label: str) -> Goal | None:
        for g in self.goals:
            if g.label == label:
                return g
        return None

    def to_public(self) -> dict:
        out = {
            "circle": self.circle,
            "created_by": self.created_by,
            "goals": [g.to_public() for g in self.goals],
            "id": self.id,
            "instructions": list(self.instructions),
            "patient": self.patient,
            "reports": list(self.reports),
            "status": self.status.value,
            "version": self.version,
        }
        if self.domain is not None:
            out["domain"] = self.domain
        if self.schedule is not None:
            out["schedule"] = self.schedule
        return out


@dataclass
class Delivery:
    """One mailbox entry. ``seq`` is per-mailbox, strictly increasing from 1."""

    delivery_id: str
    mailbox: str
    seq: int
    notification_id: str
    kind: DeliveryKind
    body: dict
    acked: bool = False

    def to_public(self) -> dict:
        """Wire form; the ack flag is the cursor's business, not the client's."""
        return {
            "body": self.body,
            "delivery_id": self.delivery_id,
            "kind": self.kind.value,
            "mailbox": self.mailbox,
            "notification_id": self.notification_id,
            "seq": self.seq,
        }

    def to_state(self) -> dict:
        out = self.to_public()
        out["acked"] = self.acked
        return out
