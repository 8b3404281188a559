"""Exhaustive cross-check of the approval workflow.

The reference machine below is a deliberately naive, direct simulation of
unanimous consent with fail-fast rejection; it shares no code with the
engine. The oracle enumerates every verdict assignment and every response
ordering for k approvers, drives a fresh engine through each case, and
compares per-response behavior, final outcomes, and the resulting delivery
sets. Any disagreement is a finding; the expected count is zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations, product

from caremesh.errors import CoordinationError
from caremesh.service import CoordinatorService

OK = "OK"
REJECT = "Reject"


class ReferenceApprovalMachine:
    """Unanimous consent, first Reject closes the session immediately."""

    def __init__(self, approvers: list[str]):
        self.verdicts: dict[str, str | None] = {a: None for a in approvers}
        self.outcome = "Open"

    def respond(self, approver: str, verdict: str) -> str:
        """Returns 'recorded' or the error code the engine must raise."""
        if self.outcome != "Open":
            return "SessionClosed"
        if approver not in self.verdicts:
            return "NotAnApprover"
        if self.verdicts[approver] is not None:
            return "DuplicateResponse"
        self.verdicts[approver] = verdict
        if verdict == REJECT:
            self.outcome = "Rejected"
        elif all(v == OK for v in self.verdicts.values()):
            self.outcome = "AllApproved"
        return "recorded"

    def expected_notification_state(self) -> str:
        return {
            "Open": "AwaitingApproval",
            "AllApproved": "Delivered",
            "Rejected": "Rejected",
        }[self.outcome]

    def expected_patient_deliveries(self) -> int:
        return 1 if self.outcome == "AllApproved" else 0

    def expected_sender_notices(self) -> list[str]:
        if self.outcome == "AllApproved":
            return ["ApprovalResult"]
        if self.outcome == "Rejected":
            return ["RejectionNotice"]
        return []


@dataclass
class OracleReport:
    k_max: int
    cases_by_k: dict[int, int] = field(default_factory=dict)
    mismatches: list[str] = field(default_factory=list)

    @property
    def total_cases(self) -> int:
        return sum(self.cases_by_k.values())

    @property
    def passed(self) -> bool:
        return not self.mismatches

    def to_public(self) -> dict:
        return {
            "cases_by_k": {str(k): v for k, v in sorted(self.cases_by_k.items())},
            "k_max": self.k_max,
            "mismatch_count": len(self.mismatches),
            "mismatches": self.mismatches[:50],
            "total_cases": self.total_cases,
        }


def _run_case(k: int, assignment: tuple[str, ...], ordering: tuple[int, ...],
              mismatches: list[str]) -> None:
    label = f"k={k} assignment={assignment} ordering={ordering}"
    service = CoordinatorService()
    sender = service.register_participant("Expert", "Sender", "coordination")["id"]
    approvers = [
        service.register_participant("Expert", f"Approver {i}", f"field{i}")["id"]
        for i in range(k)
    ]
    patient = service.register_participant("EndUser", "Patient")["id"]
    circle = service.create_circle(experts=[sender] + approvers, patients=[patient])["id"]
    nid = service.submit_notification(sender, circle, "T2", {"text": "pending decision"})[
        "notification_id"
    ]

    reference = ReferenceApprovalMachine(approvers)
    for index in ordering:
        approver, verdict = approvers[index], assignment[index]
        expected = reference.respond(approver, verdict)
        try:
            result = service.respond_approval(approver, nid, verdict)
            engine = "recorded"
            engine_outcome = result["outcome"]
        except CoordinationError as exc:
            engine = exc.code
            engine_outcome = None
        if engine != expected:
            mismatches.append(f"{label}: response by {approver} -> engine {engine}, "
                              f"reference {expected}")
            return
        if engine == "recorded" and engine_outcome != reference.outcome:
            mismatches.append(f"{label}: outcome after {approver} -> engine "
                              f"{engine_outcome}, reference {reference.outcome}")
            return

    notif = service.get_notification(nid)
    if notif["state"] != reference.expected_notification_state():
        mismatches.append(f"{label}: final state engine {notif['state']}, "
                          f"reference {reference.expected_notification_state()}")
    session_outcome = notif["session"]["outcome"]
    if session_outcome != reference.outcome:
        mismatches.append(f"{label}: session outcome engine {session_outcome}, "
                          f"reference {reference.outcome}")

    patient_box = service.poll(patient, 0, 1000)["deliveries"]
    patient_direct = [d for d in patient_box if d["notification_id"] == nid]
    if len(patient_direct) != reference.expected_patient_deliveries():
        mismatches.append(f"{label}: patient deliveries engine {len(patient_direct)}, "
                          f"reference {reference.expected_patient_deliveries()}")

    sender_box = service.poll(sender, 0, 1000)["deliveries"]
    notices = [d["kind"] for d in sender_box if d["notification_id"] == nid]
    if notices != reference.expected_sender_notices():
        mismatches.append(f"{label}: sender notices engine {notices}, "
                          f"reference {reference.expected_sender_notices()}")


def run_oracle(k_max: int = 4) -> OracleReport:
    """All verdict assignments x response orderings for k = 1..k_max."""
    if not 1 <= k_max <= 4:
        raise ValueError("k_max must be between 1 and 4")
    report = OracleReport(k_max=k_max)
    for k in range(1, k_max + 1):
        cases = 0
        for assignment in product((OK, REJECT), repeat=k):
            for ordering in permutations(range(k)):
                _run_case(k, assignment, ordering, report.mismatches)
                cases += 1
        report.cases_by_k[k] = cases
    return report
