import pytest

from caremesh.errors import CodeCollision, InvalidSpec, UnknownType
from caremesh.model import Audience, CareCircle, NotificationTypeSpec, Role
from caremesh.registry import (
    BUILTIN_CODES,
    TypeRegistry,
    approval_forward_recipients,
    resolve_recipients,
)


def test_builtins_are_exactly_the_interaction_map():
    reg = TypeRegistry()
    assert BUILTIN_CODES == {"T1", "T2", "T3", "T4", "T5", "T6"}
    t1, t2, t3 = reg.get("T1"), reg.get("T2"), reg.get("T3")
    t4, t5, t6 = reg.get("T4"), reg.get("T5"), reg.get("T6")
    assert (t1.origin_role, t1.audience, t1.requires_approval) == (
        Role.EXPERT, Audience.OTHER_EXPERTS, False)
    assert (t2.origin_role, t2.audience, t2.requires_approval, t2.patient_visible) == (
        Role.EXPERT, Audience.PATIENT, True, True)
    assert (t3.audience, t3.patient_visible, t3.requires_approval) == (
        Audience.PATIENT, True, False)
    assert (t4.audience, t4.patient_visible) == (Audience.PATIENT, False)
    for spec in (t5, t6):
        assert (spec.origin_role, spec.audience) == (Role.END_USER, Audience.ALL_EXPERTS)
    # Approval can only ever gate expert-originated types.
    for spec in (t1, t2, t3, t4, t5, t6):
        assert not spec.requires_approval or spec.origin_role is Role.EXPERT


def test_unknown_code_raises():
    with pytest.raises(UnknownType):
        TypeRegistry().get("T9")


def test_builtin_codes_are_protected():
    reg = TypeRegistry()
    clash = NotificationTypeSpec("T2", Role.EXPERT, Audience.PATIENT, False, True)
    with pytest.raises(CodeCollision):
        reg.check_new(clash)


def test_approval_requires_expert_origin():
    reg = TypeRegistry()
    bad = NotificationTypeSpec("T7", Role.END_USER, Audience.ALL_EXPERTS, True, False)
    with pytest.raises(InvalidSpec):
        reg.check_new(bad)


def test_custom_registration_round_trip():
    reg = TypeRegistry()
    spec = NotificationTypeSpec("T7", Role.EXPERT, Audience.ALL_EXPERTS, False, False)
    reg.check_new(spec)
    reg.register(spec)
    assert reg.get("T7") is spec
    assert "T7" in reg.to_public()["types"]


def _circle():
    return CareCircle(id="c1", experts={"e1", "e2", "e3"}, patients={"p1", "p2"})


def test_other_experts_excludes_sender():
    reg = TypeRegistry()
    assert resolve_recipients(reg.get("T1"), _circle(), "e1") == ["e2", "e3"]


def test_all_experts_audience_for_patient_reports():
    reg = TypeRegistry()
    assert resolve_recipients(reg.get("T5"), _circle(), "p1") == ["e1", "e2", "e3"]


def test_patient_audience_includes_peers_and_gates_patient_copy():
    reg = TypeRegistry()
    visible = resolve_recipients(reg.get("T3"), _circle(), "e1")
    silent = resolve_recipients(reg.get("T4"), _circle(), "e1")
    assert visible == ["e2", "e3", "p1", "p2"]
    assert silent == ["e2", "e3"]


def test_target_patients_narrow_the_patient_copy():
    reg = TypeRegistry()
    got = resolve_recipients(reg.get("T3"), _circle(), "e1", target_patients={"p2"})
    assert got == ["e2", "e3", "p2"]


def test_approval_forward_goes_to_patients_only():
    assert approval_forward_recipients(_circle(), "e1") == ["p1", "p2"]
    assert approval_forward_recipients(_circle(), "e1", target_patients={"p1"}) == ["p1"]


@pytest.mark.parametrize("n_experts", [2, 3, 5])
@pytest.mark.parametrize("n_patients", [1, 3])
def test_routing_totality_for_wellformed_circles(n_experts, n_patients):
    """Every built-in type from a legal sender yields a non-empty set."""
    reg = TypeRegistry()
    circle = CareCircle(
        id="c",
        experts={f"e{i}" for i in range(n_experts)},
        patients={f"p{i}" for i in range(n_patients)},
    )
    for code in sorted(BUILTIN_CODES):
        spec = reg.get(code)
        sender = "e0" if spec.origin_role is Role.EXPERT else "p0"
        if spec.requires_approval:
            approvers = circle.experts - {sender}
            assert approvers
        else:
            assert resolve_recipients(spec, circle, sender)
