"""Notification-type registry: the built-in interaction map plus custom codes.

The six built-ins cover expert-to-expert reporting (T1), expert decisions
that need unanimous peer approval before reaching the patient (T2), task
changes with and without patient notification (T3/T4), and patient progress
and goal reports back to the expert team (T5/T6). Custom codes route by the
same spec fields.

Audience resolution, in one place so it stays total and deterministic:

* ``OtherExperts`` / ``AllExperts``: every circle expert except the sender.
* ``Patient``: the circle's patients when ``patient_visible`` is true, plus
  every other circle expert. Peer experts are always informed of
  patient-directed interactions; visibility only gates the patient copy.
* Approval types are the exception: the post-approval forward goes to
  patients only, since the approvers already hold the content as approval
  requests.
"""

from __future__ import annotations

from caremesh.errors import CodeCollision, InvalidSpec, UnknownType
from caremesh.model import Audience, CareCircle, NotificationTypeSpec, Role

BUILTIN_SPECS: tuple[NotificationTypeSpec, ...] = (
    NotificationTypeSpec("T1", Role.EXPERT, Audience.OTHER_EXPERTS, False, False),
    NotificationTypeSpec("T2", Role.EXPERT, Audience.PATIENT, True, True),
    NotificationTypeSpec("T3", Role.EXPERT, Audience.PATIENT, False, True),
    NotificationTypeSpec("T4", Role.EXPERT, Audience.PATIENT, False, False),
    NotificationTypeSpec("T5", Role.END_USER, Audience.ALL_EXPERTS, False, False),
    NotificationTypeSpec("T6", Role.END_USER, Audience.ALL_EXPERTS, False, False),
)

BUILTIN_CODES = frozenset(s.code for s in BUILTIN_SPECS)


def validate_spec(spec: NotificationTypeSpec) -> None:
    """Reject specs that could route around the approval gate."""
    if not spec.code or not spec.code.isascii():
        raise InvalidSpec("type code must be a non-empty ASCII string")
    if spec.requires_approval and spec.origin_role is not Role.EXPERT:
        raise InvalidSpec("approval-gated types must originate from an expert")


class TypeRegistry:
    """Maps type codes to routing specs. Built-ins are fixed and protected."""

    def __init__(self):
        self._specs: dict[str, NotificationTypeSpec] = {
            s.code: s for s in BUILTIN_SPECS
        }

    def get(self, code: str) -> NotificationTypeSpec:
        try:
            return self._specs[code]
        except KeyError:
            raise UnknownType(f"notification type {code!r} is not registered") from None

    def has(self, code: str) -> bool:
        return code in self._specs

    def check_new(self, spec: NotificationTypeSpec) -> None:
        """Validation used by the command handler before emitting an event."""
        validate_spec(spec)
        if spec.code in self._specs:
            raise CodeCollision(f"type code {spec.code!r} is already registered")

    def register(self, spec: NotificationTypeSpec) -> None:
        """Unchecked insert; callers validate first (replay must not re-judge)."""
        self._specs[spec.code] = spec

    def to_public(self) -> dict:
        return {"types": {code: s.to_public() for code, s in sorted(self._specs.items())}}


def resolve_recipients(
    spec: NotificationTypeSpec,
    circle: CareCircle,
    sender: str,
    target_patients: set[str] | None = None,
) -> list[str]:
    """Audience members for a non-approval delivery, sorted, sender excluded.

    ``target_patients`` narrows the patient copy to specific patients (task
    changes address the task's patient, not every patient in the circle).
    """
    others = circle.experts - {sender}
    if spec.audience in (Audience.OTHER_EXPERTS, Audience.ALL_EXPERTS):
        return sorted(others)
    patients: set[str] = set()
    if spec.patient_visible:
        patients = circle.patients if target_patients is None else (
            circle.patients & target_patients
        )
        patients = patients - {sender}
    return sorted(patients | others)


def approval_forward_recipients(
    circle: CareCircle, sender: str, target_patients: set[str] | None = None
) -> list[str]:
    """Patient recipients of an approved notification."""
    patients = circle.patients if target_patients is None else (
        circle.patients & target_patients
    )
    return sorted(patients - {sender})
