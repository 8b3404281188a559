"""Domain events: the append-only vocabulary of the coordinator.

Event bodies carry every fact needed to rebuild state; nothing in state is
derivable only from wall-clock time. ``recorded_at`` exists on the in-memory
record for operators but is never written to disk, so two runs of the same
command script produce byte-identical logs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from caremesh import canonical

PARTICIPANT_REGISTERED = "ParticipantRegistered"
CIRCLE_CREATED = "CircleCreated"
CIRCLE_MEMBER_ADDED = "CircleMemberAdded"
NOTIFICATION_SUBMITTED = "NotificationSubmitted"
APPROVAL_RECORDED = "ApprovalRecorded"
SESSION_CLOSED = "SessionClosed"
TASK_CREATED = "TaskCreated"
TASK_CHANGED = "TaskChanged"
PROGRESS_REPORTED = "ProgressReported"
GOAL_REACHED = "GoalReached"
TYPE_REGISTERED = "TypeRegistered"
DELIVERY_ENQUEUED = "DeliveryEnqueued"
DELIVERY_ACKED = "DeliveryAcked"

EVENT_KINDS = frozenset(
    {
        PARTICIPANT_REGISTERED,
        CIRCLE_CREATED,
        CIRCLE_MEMBER_ADDED,
        NOTIFICATION_SUBMITTED,
        APPROVAL_RECORDED,
        SESSION_CLOSED,
        TASK_CREATED,
        TASK_CHANGED,
        PROGRESS_REPORTED,
        GOAL_REACHED,
        TYPE_REGISTERED,
        DELIVERY_ENQUEUED,
        DELIVERY_ACKED,
    }
)


@dataclass(frozen=True)
class DomainEvent:
    """One append-only log record; the sole source of replayable truth."""

    seq: int
    kind: str
    body: dict
    recorded_at: float = field(default_factory=time.time, compare=False)

    def record_form(self) -> dict:
        """The durable shape: exactly what is framed on disk."""
        return {"body": self.body, "kind": self.kind, "seq": self.seq}

    def record_bytes(self) -> bytes:
        return canonical.dump_bytes(self.record_form())
