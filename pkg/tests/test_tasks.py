"""Tasks: creation, notified vs silent changes, reports, goal flags."""

import pytest

from caremesh.errors import (
    GoalAlreadyReached,
    NotCircleMember,
    NotTaskOwner,
    TaskNotActive,
    UnknownGoal,
)


@pytest.fixture
def task(duo):
    created = duo.svc.create_task(
        duo.e1, duo.circle, duo.p1,
        ["run 3x per week", "log meals"],
        schedule={"text": "mon/wed/fri", "start": 1, "end": 90},
        goals=[{"label": "weight", "target": "-3 kg"},
               {"label": "distance", "target": "5 km run"}],
    )
    return created


def test_create_task_snapshot(duo, task):
    assert task["created_by"] == duo.e1
    assert task["domain"] == "coach"
    assert task["status"] == "Active"
    assert task["version"] == 1
    assert [g["reached"] for g in task["goals"]] == [False, False]


def test_outsider_cannot_create_or_edit(duo, task):
    stranger = duo.svc.register_participant("Expert", "X", "psychology")["id"]
    with pytest.raises(NotCircleMember):
        duo.svc.create_task(stranger, duo.circle, duo.p1, ["x"])
    with pytest.raises(NotCircleMember):
        duo.svc.apply_task_change(stranger, task["id"], {"instructions": ["y"]}, True)


def test_notified_change_reaches_the_patient(duo, task):
    before = duo.svc.poll(duo.p1)["count"]
    change = duo.svc.apply_task_change(
        duo.e2, task["id"], {"instructions": ["swim twice"]}, notify_patient=True
    )
    box = duo.svc.poll(duo.p1)["deliveries"]
    assert duo.svc.poll(duo.p1)["count"] == before + 1
    attachment = box[-1]["body"]["payload"]["attachment"]
    assert attachment == {"kind": "task_change", "task_id": task["id"], "version": 2}
    assert box[-1]["body"]["type_code"] == "T3"
    assert change["notification_id"].startswith("n")
    # The other patient in the circle is not the task's patient: no copy.
    assert duo.svc.poll(duo.p2)["count"] == 0


def test_silent_change_skips_the_patient_entirely(duo, task):
    duo.svc.apply_task_change(
        duo.e2, task["id"], {"instructions": ["new diet"]}, notify_patient=False
    )
    assert duo.svc.poll(duo.p1)["count"] == 0
    assert duo.svc.poll(duo.p2)["count"] == 0
    # Peer experts are informed of the silent change.
    peers = duo.svc.poll(duo.e1)["deliveries"]
    assert [d["body"]["type_code"] for d in peers] == ["T4"]
    # The task content itself did change for the patient to see on next load.
    assert duo.svc.get_task(task["id"])["instructions"] == ["new diet"]


def test_exactly_one_notification_per_change(duo, task):
    change = duo.svc.apply_task_change(duo.e1, task["id"], {}, notify_patient=True)
    notif = duo.svc.get_notification(change["notification_id"])
    assert notif["type_code"] == "T3"
    change = duo.svc.apply_task_change(duo.e1, task["id"], {}, notify_patient=False)
    assert duo.svc.get_notification(change["notification_id"])["type_code"] == "T4"


def test_empty_diff_bumps_version_and_routes(duo, task):
    change = duo.svc.apply_task_change(duo.e1, task["id"], {}, True)
    assert change["version"] == 2
    assert change["delivery_count"] == 2  # patient + one peer expert
    again = duo.svc.apply_task_change(duo.e1, task["id"], {}, True)
    assert again["version"] == 3
    assert duo.svc.get_task(task["id"])["instructions"] == task["instructions"]


def test_goal_replacement_never_unreaches(duo, task):
    duo.svc.record_goal_reached(duo.p1, task["id"], "weight")
    duo.svc.apply_task_change(
        duo.e1, task["id"],
        {"goals": [{"label": "weight", "target": "-5 kg"},
                   {"label": "sleep", "target": "8h"}]},
        True,
    )
    goals = {g["label"]: g for g in duo.svc.get_task(task["id"])["goals"]}
    assert goals["weight"]["reached"] is True
    assert goals["weight"]["target"] == "-5 kg"
    assert goals["sleep"]["reached"] is False


def test_completed_task_rejects_changes(duo, task):
    duo.svc.apply_task_change(duo.e1, task["id"], {"status": "Completed"}, False)
    assert duo.svc.get_task(task["id"])["status"] == "Completed"
    with pytest.raises(TaskNotActive):
        duo.svc.apply_task_change(duo.e1, task["id"], {"instructions": ["x"]}, True)


def test_progress_report_reaches_all_experts(duo, task):
    out = duo.svc.report_progress(duo.p1, task["id"], {"distance_km": 5})
    assert out["type_code"] == "T5"
    assert out["delivery_count"] == 2
    for expert in (duo.e1, duo.e2):
        box = duo.svc.poll(expert)["deliveries"]
        assert [d["body"]["type_code"] for d in box] == ["T5"]
    stored = duo.svc.get_task(task["id"])["reports"]
    assert stored[0]["metrics"] == {"distance_km": 5}


def test_report_on_foreign_task_is_rejected(duo, task):
    with pytest.raises(NotTaskOwner):
        duo.svc.report_progress(duo.p2, task["id"], {"km": 1})


def test_sequential_reports_arrive_in_submission_order(duo, task):
    """Scripted submission log: mailbox order equals submission order."""
    script = [{"step": i} for i in range(1, 8)]
    for metrics in script:
        duo.svc.report_progress(duo.p1, task["id"], metrics)
    for expert in (duo.e1, duo.e2):
        box = duo.svc.poll(expert, max_batch=100)["deliveries"]
        indices = [d["body"]["payload"]["attachment"]["report_index"] for d in box]
        assert indices == list(range(1, 8))
    reports = duo.svc.get_task(task["id"])["reports"]
    assert [r["metrics"] for r in reports] == script


def test_goal_reached_is_monotone(duo, task):
    out = duo.svc.record_goal_reached(duo.p1, task["id"], "distance")
    assert out["type_code"] == "T6"
    goals = {g["label"]: g["reached"] for g in duo.svc.get_task(task["id"])["goals"]}
    assert goals["distance"] is True
    with pytest.raises(GoalAlreadyReached):
        duo.svc.record_goal_reached(duo.p1, task["id"], "distance")
    with pytest.raises(UnknownGoal):
        duo.svc.record_goal_reached(duo.p1, task["id"], "speed")
    with pytest.raises(NotTaskOwner):
        duo.svc.record_goal_reached(duo.p2, task["id"], "weight")
