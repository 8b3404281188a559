"""Scenario files: scripted casts, steps, and fault directives.

A scenario is line-oriented canonical text: one record per line, blank lines
and ``#`` comments ignored. Record shapes::

    {"name":"approval-forward","record":"scenario"}
    {"display_name":"Elena","domain":"coach","record":"participant",
     "ref":"E1","role":"Expert"}
    {"experts":["E1","E2"],"patients":["P1"],"record":"circle","ref":"C"}
    {"actor":"E1","args":{...},"at":1,"expect":{...},"op":"submit_notification",
     "record":"step","save":{"notification_id":"N1"}}
    {"action":"drop","at":3,"mailbox":"P1","record":"fault"}

``@ref`` strings inside args resolve to ids minted at run time; ``save``
binds result fields to new refs for later steps. Ticks are logical ordering
only; the runner is strictly sequential and never sleeps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from caremesh import canonical
from caremesh.harness.consumers import InProcessConsumer, SseConsumer
from caremesh.harness.targets import HttpTarget, InProcessTarget


class ParseError(ValueError):
    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


@dataclass
class CastMember:
    ref: str
    role: str
    display_name: str
    domain: str | None = None


@dataclass
class CircleDecl:
    ref: str
    experts: list[str]
    patients: list[str]


@dataclass
class Step:
    at: int
    actor: str | None
    op: str
    args: dict
    expect: dict | None = None
    save: dict | None = None
    line_no: int = 0


@dataclass
class Fault:
    at: int
    action: str
    mailbox: str
    line_no: int = 0


@dataclass
class Scenario:
    name: str
    cast: list[CastMember] = field(default_factory=list)
    circles: list[CircleDecl] = field(default_factory=list)
    timeline: list = field(default_factory=list)  # Steps and Faults, in order


_FAULT_ACTIONS = {"subscribe", "drop", "resume"}


def parse_scenario_text(text: str) -> Scenario:
    scenario: Scenario | None = None
    refs: set[str] = set()
    last_tick = 0
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            record = canonical.loads(line)
        except ValueError:
            raise ParseError(line_no, "unparseable record") from None
        if not isinstance(record, dict) or "record" not in record:
            raise ParseError(line_no, "each line must be an object with a 'record' field")
        kind = record["record"]
        if scenario is None:
            if kind != "scenario":
                raise ParseError(line_no, "first record must declare the scenario")
            if not isinstance(record.get("name"), str):
                raise ParseError(line_no, "scenario needs a name")
            scenario = Scenario(name=record["name"])
            continue
        if kind == "participant":
            member = CastMember(
                ref=record.get("ref", ""),
                role=record.get("role", ""),
                display_name=record.get("display_name", ""),
                domain=record.get("domain"),
            )
            if not member.ref or member.ref in refs:
                raise ParseError(line_no, "participant needs a unique ref")
            if member.role not in ("Expert", "EndUser"):
                raise ParseError(line_no, f"unknown role {member.role!r}")
            refs.add(member.ref)
            scenario.cast.append(member)
        elif kind == "circle":
            decl = CircleDecl(
                ref=record.get("ref", ""),
                experts=list(record.get("experts", ())),
                patients=list(record.get("patients", ())),
            )
            if not decl.ref or decl.ref in refs:
                raise ParseError(line_no, "circle needs a unique ref")
            for member in decl.experts + decl.patients:
                if member not in refs:
                    raise ParseError(line_no, f"unknown cast ref {member!r}")
            refs.add(decl.ref)
            scenario.circles.append(decl)
        elif kind == "step":
            at = record.get("at", last_tick)
            if not isinstance(at, int) or at < last_tick:
                raise ParseError(line_no, "ticks must be non-decreasing integers")
            last_tick = at
            actor = record.get("actor")
            if actor is not None and actor not in refs:
                raise ParseError(line_no, f"unknown actor {actor!r}")
            op = record.get("op")
            if not isinstance(op, str):
                raise ParseError(line_no, "step needs an op")
            scenario.timeline.append(
                Step(
                    at=at,
                    actor=actor,
                    op=op,
                    args=record.get("args", {}),
                    expect=record.get("expect"),
                    save=record.get("save"),
                    line_no=line_no,
                )
            )
        elif kind == "fault":
            at = record.get("at", last_tick)
            if not isinstance(at, int) or at < last_tick:
                raise ParseError(line_no, "ticks must be non-decreasing integers")
            last_tick = at
            action = record.get("action")
            if action not in _FAULT_ACTIONS:
                raise ParseError(line_no, f"unknown fault action {action!r}")
            mailbox = record.get("mailbox")
            if mailbox not in refs:
                raise ParseError(line_no, f"unknown mailbox ref {mailbox!r}")
            scenario.timeline.append(
                Fault(at=at, action=action, mailbox=mailbox, line_no=line_no)
            )
        else:
            raise ParseError(line_no, f"unknown record kind {kind!r}")
    if scenario is None:
        raise ParseError(0, "empty scenario file")
    return scenario


def load_scenario(path) -> Scenario:
    return parse_scenario_text(Path(path).read_text(encoding="utf-8"))


def bundled_scenario_path(name: str) -> Path:
    """Path of a scenario shipped inside the package (no extension needed)."""
    from importlib.resources import files

    return Path(str(files("caremesh") / "scenarios" / f"{name}.scenario"))


def _resolve(value, refs: dict):
    if isinstance(value, str) and value.startswith("@"):
        name = value[1:]
        if name not in refs:
            raise KeyError(f"unbound ref {value!r}")
        return refs[name]
    if isinstance(value, list):
        return [_resolve(v, refs) for v in value]
    if isinstance(value, dict):
        return {k: _resolve(v, refs) for k, v in value.items()}
    return value


def _matches(expect: dict, result: dict) -> list[str]:
    """Subset match; returns human-readable mismatches."""
    problems = []
    for key, wanted in expect.items():
        if key == "error":
            got = (result.get("error") or {}).get("code")
            if got != wanted:
                problems.append(f"expected error {wanted!r}, got {got!r}")
            continue
        if "error" in result:
            problems.append(f"expected {key}={wanted!r}, got error {result['error']}")
            continue
        got = result.get(key)
        if got != wanted:
            problems.append(f"expected {key}={wanted!r}, got {got!r}")
    return problems


@dataclass
class StepOutcome:
    at: int
    description: str
    ok: bool
    detail: str = ""

    def to_public(self) -> dict:
        out = {"at": self.at, "description": self.description, "ok": self.ok}
        if self.detail:
            out["detail"] = self.detail
        return out


@dataclass
class ScenarioReport:
    name: str
    outcomes: list[StepOutcome] = field(default_factory=list)
    digest: str = ""
    audits: list[StepOutcome] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(o.ok for o in self.outcomes) and all(a.ok for a in self.audits)

    def to_public(self) -> dict:
        return {
            "audits": [a.to_public() for a in self.audits],
            "digest": self.digest,
            "name": self.name,
            "passed": self.passed,
            "steps": [o.to_public() for o in self.outcomes],
        }


class ScenarioRunner:
    """Executes a scenario against a target, strictly sequentially."""

    def __init__(self, scenario: Scenario, target):
        self.scenario = scenario
        self.target = target
        self.refs: dict[str, str] = {}
        self._consumers: dict[str, object] = {}

    def _consumer_for(self, mailbox_id: str):
        if mailbox_id not in self._consumers:
            if isinstance(self.target, InProcessTarget):
                self._consumers[mailbox_id] = InProcessConsumer(
                    self.target.service, mailbox_id
                )
            elif isinstance(self.target, HttpTarget):
                token = self.target.tokens.get(mailbox_id)
                if token is None:
                    raise KeyError(f"no token provisioned for mailbox {mailbox_id}")
                self._consumers[mailbox_id] = SseConsumer(
                    self.target.base_url, token
                )
            else:
                raise TypeError("target does not support fault directives")
        return self._consumers[mailbox_id]

    def run(self) -> ScenarioReport:
        report = ScenarioReport(name=self.scenario.name)
        self._setup_cast(report)
        if all(o.ok for o in report.outcomes):
            for entry in self.scenario.timeline:
                if isinstance(entry, Step):
                    report.outcomes.append(self._run_step(entry))
                else:
                    report.outcomes.append(self._run_fault(entry))
        self._final_audits(report)
        report.digest = self.target.digest()
        return report

    def _setup_cast(self, report: ScenarioReport) -> None:
        for member in self.scenario.cast:
            args = {"role": member.role, "display_name": member.display_name}
            if member.domain is not None:
                args["domain"] = member.domain
            result = self.target.call("register_participant", None, args)
            if "error" in result:
                report.outcomes.append(
                    StepOutcome(0, f"cast {member.ref}", False, str(result["error"]))
                )
                return
            self.refs[member.ref] = result["id"]
            report.outcomes.append(StepOutcome(0, f"cast {member.ref}={result['id']}", True))
        for decl in self.scenario.circles:
            args = {
                "experts": [self.refs[r] for r in decl.experts],
                "patients": [self.refs[r] for r in decl.patients],
            }
            result = self.target.call("create_circle", None, args)
            if "error" in result:
                report.outcomes.append(
                    StepOutcome(0, f"circle {decl.ref}", False, str(result["error"]))
                )
                return
            self.refs[decl.ref] = result["id"]
            report.outcomes.append(StepOutcome(0, f"circle {decl.ref}={result['id']}", True))

    def _run_step(self, step: Step) -> StepOutcome:
        actor = self.refs[step.actor] if step.actor else None
        try:
            args = _resolve(step.args, self.refs)
        except KeyError as exc:
            return StepOutcome(step.at, f"{step.op}", False, str(exc))
        result = self.target.call(step.op, actor, args)
        description = f"{step.actor or '-'} {step.op}"
        if step.expect is not None:
            expect = _resolve(step.expect, self.refs)
            problems = _matches(expect, result)
            if problems:
                return StepOutcome(step.at, description, False, "; ".join(problems))
        elif "error" in result:
            return StepOutcome(step.at, description, False, str(result["error"]))
        if step.save:
            for result_key, ref in step.save.items():
                if result_key in result:
                    self.refs[ref] = result[result_key]
        return StepOutcome(step.at, description, True)

    def _run_fault(self, fault: Fault) -> StepOutcome:
        mailbox_id = self.refs[fault.mailbox]
        description = f"fault {fault.action} {fault.mailbox}"
        try:
            consumer = self._consumer_for(mailbox_id)
            getattr(consumer, fault.action if fault.action != "subscribe" else "connect")()
        except Exception as exc:
            return StepOutcome(fault.at, description, False, str(exc))
        return StepOutcome(fault.at, description, True)

    def _final_audits(self, report: ScenarioReport) -> None:
        """Every consumed mailbox must assemble to exactly the mailbox log."""
        import time

        for mailbox_id, consumer in self._consumers.items():
            expected = self._full_mailbox(mailbox_id)
            deadline = time.monotonic() + 5.0
            assembled = consumer.assembled()
            while time.monotonic() < deadline:
                if [d["delivery_id"] for d in assembled] == [
                    d["delivery_id"] for d in expected
                ]:
                    break
                time.sleep(0.02)
                assembled = consumer.assembled()
            consumer.stop()
            # One catch-up poll models the client's reconnect-and-poll path.
            if hasattr(consumer, "catch_up"):
                consumer.catch_up()
                assembled = consumer.assembled()
            got = [d["delivery_id"] for d in assembled]
            want = [d["delivery_id"] for d in expected]
            ok = got == want
            detail = "" if ok else f"assembled {got} != mailbox {want}"
            report.audits.append(
                StepOutcome(0, f"loss audit {mailbox_id}", ok, detail)
            )

    def _full_mailbox(self, mailbox_id: str) -> list[dict]:
        out: list[dict] = []
        after = 0
        while True:
            page = self.target.call(
                "poll", mailbox_id, {"after_seq": after, "max_batch": 500}
            )
            if "error" in page:
                raise RuntimeError(f"poll failed during audit: {page['error']}")
            out.extend(page["deliveries"])
            if page["count"] < 500:
                return out
            after = page["deliveries"][-1]["seq"]


def run_scenario_file(path, target) -> ScenarioReport:
    scenario = load_scenario(path)
    return ScenarioRunner(scenario, target).run()
