"""The reference machine itself, and the enumeration bookkeeping."""

from math import factorial

from caremesh.harness.oracle import OK, REJECT, ReferenceApprovalMachine, run_oracle


def test_single_approver_ok_forwards():
    machine = ReferenceApprovalMachine(["a"])
    assert machine.respond("a", OK) == "recorded"
    assert machine.outcome == "AllApproved"
    assert machine.expected_notification_state() == "Delivered"
    assert machine.expected_patient_deliveries() == 1


def test_any_reject_is_terminal_in_every_ordering():
    for first in (OK, REJECT):
        machine = ReferenceApprovalMachine(["a", "b"])
        machine.respond("a", first)
        machine.respond("b", REJECT if first == OK else OK)
        if first == REJECT:
            assert machine.outcome == "Rejected"
        else:
            assert machine.outcome == "Rejected"
        assert machine.expected_patient_deliveries() == 0


def test_duplicate_and_closed_predictions():
    machine = ReferenceApprovalMachine(["a", "b"])
    machine.respond("a", OK)
    assert machine.respond("a", OK) == "DuplicateResponse"
    machine.respond("b", REJECT)
    assert machine.respond("b", OK) == "SessionClosed"
    assert machine.respond("outsider", OK) == "SessionClosed"


def test_case_counts_match_the_combinatorics():
    report = run_oracle(2)
    assert report.cases_by_k == {
        k: (2**k) * factorial(k) for k in (1, 2)
    }
    assert report.total_cases == 2 + 8
    assert report.passed
