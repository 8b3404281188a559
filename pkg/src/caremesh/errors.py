"""Error taxonomy shared by the coordination engine and its API surface.

Every rejection carries a stable ``code`` that surfaces verbatim on the wire
as ``{"code": ..., "message": ...}``. The HTTP layer maps codes to statuses;
the engine itself only raises.
"""

from __future__ import annotations


class CoordinationError(Exception):
    """Base class for command and query rejections."""

    code = "CoordinationError"

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)

    def to_public(self) -> dict:
        return {"code": self.code, "message": str(self)}


# --- participant registration ---------------------------------------------

class DomainMissing(CoordinationError):
    code = "DomainMissing"


class DomainForbidden(CoordinationError):
    code = "DomainForbidden"


# --- lookups ----------------------------------------------------------------

class UnknownParticipant(CoordinationError):
    code = "UnknownParticipant"


class UnknownCircle(CoordinationError):
    code = "UnknownCircle"


class UnknownNotification(CoordinationError):
    code = "UnknownNotification"


class UnknownTask(CoordinationError):
    code = "UnknownTask"


class UnknownGoal(CoordinationError):
    code = "UnknownGoal"


class UnknownType(CoordinationError):
    code = "UnknownType"


class UnknownMailbox(CoordinationError):
    code = "UnknownMailbox"


# --- notification routing ---------------------------------------------------

class RoleMismatch(CoordinationError):
    code = "RoleMismatch"


class NotCircleMember(CoordinationError):
    code = "NotCircleMember"


class NoApproversAvailable(CoordinationError):
    code = "NoApproversAvailable"


class NoExpertsInCircle(CoordinationError):
    code = "NoExpertsInCircle"


class PayloadTooLarge(CoordinationError):
    code = "PayloadTooLarge"


# --- approval sessions -------------------------------------------------------

class SessionClosed(CoordinationError):
    code = "SessionClosed"


class NotAnApprover(CoordinationError):
    code = "NotAnApprover"


class DuplicateResponse(CoordinationError):
    code = "DuplicateResponse"


# --- tasks -------------------------------------------------------------------

class TaskNotActive(CoordinationError):
    code = "TaskNotActive"


class NotTaskOwner(CoordinationError):
    code = "NotTaskOwner"


class GoalAlreadyReached(CoordinationError):
    code = "GoalAlreadyReached"


# --- registry ----------------------------------------------------------------

class CodeCollision(CoordinationError):
    code = "CodeCollision"


class InvalidSpec(CoordinationError):
    code = "InvalidSpec"


# --- circles -----------------------------------------------------------------

class AlreadyMember(CoordinationError):
    code = "AlreadyMember"


# --- mailbox -----------------------------------------------------------------

class SeqBeyondHead(CoordinationError):
    code = "SeqBeyondHead"


# --- generic validation ------------------------------------------------------

class InvalidArgument(CoordinationError):
    code = "InvalidArgument"


# --- storage -----------------------------------------------------------------

class StorageFailure(CoordinationError):
    code = "StorageFailure"


class CorruptRecord(CoordinationError):
    """Framing or checksum violation in the event log; ``seq`` points at the
    first offending record."""

    code = "CorruptRecord"

    def __init__(self, seq: int, message: str = ""):
        self.seq = seq
        super().__init__(message or f"corrupt record at seq {seq}")


# --- service boot --------------------------------------------------------------

class BindFailure(CoordinationError):
    code = "BindFailure"


class LogCorrupt(CoordinationError):
    code = "LogCorrupt"


# --- API-only ----------------------------------------------------------------

class IdempotencyConflict(CoordinationError):
    code = "IdempotencyConflict"
