"""Participant, circle, and routing behavior of the coordination engine."""

import pytest

from caremesh.coordinator import MAX_PAYLOAD_BYTES
from caremesh.errors import (
    AlreadyMember,
    CodeCollision,
    DomainForbidden,
    DomainMissing,
    InvalidArgument,
    InvalidSpec,
    NoApproversAvailable,
    NotCircleMember,
    PayloadTooLarge,
    RoleMismatch,
    UnknownParticipant,
    UnknownType,
)


def test_register_expert_with_domain(svc):
    ana = svc.register_participant("Expert", "Ana", "nutrition")
    assert ana["role"] == "Expert"
    assert ana["domain"] == "nutrition"
    assert ana["active"] is True


def test_register_end_user_has_no_domain(svc):
    pat = svc.register_participant("EndUser", "Pat")
    assert pat["role"] == "EndUser"
    assert "domain" not in pat


def test_expert_without_domain_is_rejected(svc):
    with pytest.raises(DomainMissing):
        svc.register_participant("Expert", "Bo")


def test_end_user_with_domain_is_rejected(svc):
    with pytest.raises(DomainForbidden):
        svc.register_participant("EndUser", "Pat", "coach")


def test_ids_are_unique_and_deterministic(svc):
    ids = [svc.register_participant("EndUser", f"U{i}")["id"] for i in range(4)]
    assert ids == ["p1", "p2", "p3", "p4"]
    assert len(set(ids)) == 4


def test_circle_membership_is_role_checked(svc):
    expert = svc.register_participant("Expert", "E", "coach")["id"]
    patient = svc.register_participant("EndUser", "P")["id"]
    with pytest.raises(RoleMismatch):
        svc.create_circle(experts=[patient], patients=[])
    with pytest.raises(RoleMismatch):
        svc.create_circle(experts=[expert], patients=[expert])
    with pytest.raises(UnknownParticipant):
        svc.create_circle(experts=["ghost"], patients=[])
    circle = svc.create_circle(experts=[expert], patients=[patient])
    assert circle["experts"] == [expert] and circle["patients"] == [patient]


def test_add_circle_member(svc):
    e1 = svc.register_participant("Expert", "E1", "coach")["id"]
    e2 = svc.register_participant("Expert", "E2", "nutrition")["id"]
    circle = svc.create_circle(experts=[e1], patients=[])["id"]
    updated = svc.add_circle_member(circle, e2)
    assert updated["experts"] == [e1, e2]
    with pytest.raises(AlreadyMember):
        svc.add_circle_member(circle, e2)


# --- routing per the interaction map ------------------------------------------


def test_t1_reaches_other_experts_only(team):
    out = team.svc.submit_notification(team.e1, team.circle, "T1", {"text": "update"})
    assert out["state"] == "Routed"
    assert out["delivery_count"] == 2
    assert team.svc.poll(team.e2)["count"] == 1
    assert team.svc.poll(team.e3)["count"] == 1
    assert team.svc.poll(team.e1)["count"] == 0
    assert team.svc.poll(team.p1)["count"] == 0


def test_t2_opens_session_without_patient_delivery(team):
    out = team.svc.submit_notification(team.e1, team.circle, "T2", {"text": "plan"})
    assert out["state"] == "AwaitingApproval"
    assert out["delivery_count"] == 2
    assert team.svc.poll(team.p1)["count"] == 0
    kinds = [d["kind"] for d in team.svc.poll(team.e2)["deliveries"]]
    assert kinds == ["ApprovalRequest"]


def test_t6_reaches_every_expert(team):
    task = team.svc.create_task(team.e1, team.circle, team.p1, ["walk"], goals=[
        {"label": "g1", "target": "5 km"}])
    out = team.svc.record_goal_reached(team.p1, task["id"], "g1")
    assert out["delivery_count"] == 3
    for expert in (team.e1, team.e2, team.e3):
        assert team.svc.poll(expert)["count"] == 1


def test_patient_cannot_send_expert_types(team):
    with pytest.raises(RoleMismatch):
        team.svc.submit_notification(team.p1, team.circle, "T1", {"text": "x"})


def test_non_member_cannot_send(team):
    outsider = team.svc.register_participant("Expert", "Out", "psychology")["id"]
    with pytest.raises(NotCircleMember):
        team.svc.submit_notification(outsider, team.circle, "T1", {"text": "x"})


def test_unknown_type_is_rejected(team):
    with pytest.raises(UnknownType):
        team.svc.submit_notification(team.e1, team.circle, "T9", {"text": "x"})


def test_t2_with_no_other_experts_is_rejected(svc):
    expert = svc.register_participant("Expert", "Solo", "coach")["id"]
    patient = svc.register_participant("EndUser", "P")["id"]
    circle = svc.create_circle(experts=[expert], patients=[patient])["id"]
    with pytest.raises(NoApproversAvailable):
        svc.submit_notification(expert, circle, "T2", {"text": "x"})


def test_payload_cap_is_enforced(team):
    big = "x" * (MAX_PAYLOAD_BYTES + 1)
    with pytest.raises(PayloadTooLarge):
        team.svc.submit_notification(team.e1, team.circle, "T1", {"text": big})


def test_payload_must_carry_text(team):
    with pytest.raises(InvalidArgument):
        team.svc.submit_notification(team.e1, team.circle, "T1", {"body": "x"})


def test_custom_type_routes_per_its_spec(team):
    state = team.svc.register_notification_type("T7", "Expert", "AllExperts", False, False)
    assert "T7" in state["types"]
    out = team.svc.submit_notification(team.e2, team.circle, "T7", {"text": "hi"})
    assert out["delivery_count"] == 2
    assert team.svc.poll(team.e1)["count"] == 1
    assert team.svc.poll(team.p1)["count"] == 0


def test_custom_type_collision_and_invalid_spec(team):
    with pytest.raises(CodeCollision):
        team.svc.register_notification_type("T2", "Expert", "Patient", False, True)
    with pytest.raises(InvalidSpec):
        team.svc.register_notification_type("T8", "EndUser", "AllExperts", True, False)


def test_sender_never_receives_own_content(team):
    """Sender exclusion across every built-in type a sender can emit."""
    task = team.svc.create_task(team.e1, team.circle, team.p1, ["rest"], goals=[
        {"label": "g", "target": "t"}])
    team.svc.submit_notification(team.e1, team.circle, "T1", {"text": "a"})
    team.svc.submit_notification(team.e2, team.circle, "T3", {"text": "b"})
    team.svc.apply_task_change(team.e3, task["id"], {"instructions": ["x"]}, False)
    team.svc.report_progress(team.p1, task["id"], {"km": 2})
    team.svc.record_goal_reached(team.p1, task["id"], "g")
    for pid in (team.e1, team.e2, team.e3, team.p1):
        for delivery in team.svc.poll(pid, max_batch=100)["deliveries"]:
            if delivery["kind"] in ("Direct", "ApprovalRequest"):
                assert delivery["body"]["sender"] != pid
