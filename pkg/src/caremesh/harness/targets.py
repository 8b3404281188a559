"""Execution targets for the harness: in-process or over the wire.

Both targets speak the same op vocabulary and return plain canonical dicts,
so scenario expectations and audits are target-agnostic. Errors come back as
``{"error": {"code", "message"}}`` instead of raising, because a scenario
step may *expect* a rejection.
"""

from __future__ import annotations

import httpx

from caremesh.errors import CoordinationError
from caremesh.service import CoordinatorService


class TargetError(RuntimeError):
    """The target itself is unusable (connection refused, bad base url)."""


class InProcessTarget:
    """Drives a CoordinatorService directly; actor refs are participant ids."""

    def __init__(self, service: CoordinatorService):
        self.service = service

    def call(self, op: str, actor: str | None, args: dict) -> dict:
        method = getattr(self, f"_op_{op}", None)
        if method is None:
            raise TargetError(f"unsupported op {op!r}")
        try:
            return method(actor, **args)
        except CoordinationError as exc:
            return {"error": exc.to_public()}

    def digest(self) -> str:
        return self.service.digest()

    def close(self) -> None:
        pass

    # Ops. The actor argument mirrors the wire contract: it is the
    # authenticated identity, not a body field.

    def _op_register_participant(self, actor, role, display_name, domain=None):
        return self.service.register_participant(role, display_name, domain)

    def _op_create_circle(self, actor, experts=(), patients=()):
        return self.service.create_circle(experts, patients)

    def _op_add_circle_member(self, actor, circle, participant):
        return self.service.add_circle_member(circle, participant)

    def _op_register_type(self, actor, code, origin_role, audience,
                          requires_approval, patient_visible):
        return self.service.register_notification_type(
            code, origin_role, audience, requires_approval, patient_visible
        )

    def _op_submit_notification(self, actor, circle, type_code, payload):
        return self.service.submit_notification(actor, circle, type_code, payload)

    def _op_respond_approval(self, actor, notification_id, verdict):
        return self.service.respond_approval(actor, notification_id, verdict)

    def _op_create_task(self, actor, circle, patient, instructions,
                        schedule=None, goals=None):
        return self.service.create_task(actor, circle, patient, instructions,
                                        schedule, goals)

    def _op_apply_task_change(self, actor, task_id, diff, notify_patient=True):
        return self.service.apply_task_change(actor, task_id, diff, notify_patient)

    def _op_report_progress(self, actor, task_id, metrics):
        return self.service.report_progress(actor, task_id, metrics)

    def _op_record_goal_reached(self, actor, task_id, goal_label):
        return self.service.record_goal_reached(actor, task_id, goal_label)

    def _op_ack(self, actor, up_to_seq, mailbox=None):
        return self.service.ack(mailbox or actor, up_to_seq)

    def _op_poll(self, actor, after_seq=0, max_batch=100, mailbox=None):
        return self.service.poll(mailbox or actor, after_seq, max_batch)

    def _op_get_notification(self, actor, notification_id):
        return self.service.get_notification(notification_id)

    def _op_get_task(self, actor, task_id):
        return self.service.get_task(task_id)


class HttpTarget:
    """Drives a running API server; actors resolve to bearer tokens.

    ``tokens`` maps participant id -> token. Setup ops (registration,
    circles, types) authenticate with any known token, so the table may be
    provisioned before the participants exist.
    """

    def __init__(self, base_url: str, tokens: dict[str, str], timeout: float = 10.0):
        if not tokens:
            raise TargetError("an HTTP target needs at least one token")
        self.base_url = base_url.rstrip("/")
        self.tokens = dict(tokens)
        self._any_token = next(iter(tokens.values()))
        self._client = httpx.Client(base_url=self.base_url, timeout=timeout)

    def close(self) -> None:
        self._client.close()

    def _headers(self, actor: str | None) -> dict:
        token = self.tokens.get(actor, self._any_token) if actor else self._any_token
        return {"Authorization": f"Bearer {token}"}

    def _request(self, method: str, path: str, actor: str | None,
                 body: dict | None = None, params: dict | None = None) -> dict:
        try:
            response = self._client.request(
                method, path, json=body, params=params, headers=self._headers(actor)
            )
        except httpx.HTTPError as exc:
            raise TargetError(f"{method} {path}: {exc}") from exc
        payload = response.json() if response.content else {}
        if response.status_code >= 400:
            if isinstance(payload, dict) and "code" in payload:
                return {"error": payload}
            return {"error": {"code": f"HTTP{response.status_code}", "message": response.text}}
        return payload

    def call(self, op: str, actor: str | None, args: dict) -> dict:
        method = getattr(self, f"_op_{op}", None)
        if method is None:
            raise TargetError(f"unsupported op {op!r}")
        return method(actor, **args)

    def digest(self) -> str:
        out = self._request("GET", "/digest", None)
        if "error" in out:
            raise TargetError(f"digest query failed: {out['error']}")
        return out["digest"]

    def _op_register_participant(self, actor, role, display_name, domain=None):
        body = {"display_name": display_name, "role": role}
        if domain is not None:
            body["domain"] = domain
        return self._request("POST", "/participants", actor, body)

    def _op_create_circle(self, actor, experts=(), patients=()):
        return self._request(
            "POST", "/circles", actor,
            {"experts": list(experts), "patients": list(patients)},
        )

    def _op_add_circle_member(self, actor, circle, participant):
        return self._request(
            "POST", f"/circles/{circle}/members", actor, {"participant": participant}
        )

    def _op_register_type(self, actor, code, origin_role, audience,
                          requires_approval, patient_visible):
        return self._request(
            "POST", "/types", actor,
            {
                "audience": audience,
                "code": code,
                "origin_role": origin_role,
                "patient_visible": patient_visible,
                "requires_approval": requires_approval,
            },
        )

    def _op_submit_notification(self, actor, circle, type_code, payload):
        return self._request(
            "POST", "/notifications", actor,
            {"circle": circle, "payload": payload, "type_code": type_code},
        )

    def _op_respond_approval(self, actor, notification_id, verdict):
        return self._request(
            "POST", f"/notifications/{notification_id}/approvals", actor,
            {"verdict": verdict},
        )

    def _op_create_task(self, actor, circle, patient, instructions,
                        schedule=None, goals=None):
        body = {"circle": circle, "instructions": instructions, "patient": patient}
        if schedule is not None:
            body["schedule"] = schedule
        if goals is not None:
            body["goals"] = goals
        return self._request("POST", "/tasks", actor, body)

    def _op_apply_task_change(self, actor, task_id, diff, notify_patient=True):
        return self._request(
            "PATCH", f"/tasks/{task_id}", actor,
            {"diff": diff, "notify_patient": notify_patient},
        )

    def _op_report_progress(self, actor, task_id, metrics):
        return self._request(
            "POST", f"/tasks/{task_id}/reports", actor, {"metrics": metrics}
        )

    def _op_record_goal_reached(self, actor, task_id, goal_label):
        return self._request(
            "POST", f"/tasks/{task_id}/goals/{goal_label}/reached", actor, {}
        )

    def _op_ack(self, actor, up_to_seq, mailbox=None):
        return self._request("POST", "/mailbox/ack", actor, {"up_to_seq": up_to_seq})

    def _op_poll(self, actor, after_seq=0, max_batch=100, mailbox=None):
        return self._request(
            "GET", "/mailbox", actor,
            params={"after_seq": after_seq, "max_batch": max_batch},
        )

    def _op_get_notification(self, actor, notification_id):
        return self._request("GET", f"/notifications/{notification_id}", actor)

    def _op_get_task(self, actor, task_id):
        return self._request("GET", f"/tasks/{task_id}", actor)
