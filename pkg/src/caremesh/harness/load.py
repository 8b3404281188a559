"""Load and latency measurement against an in-process coordinator.

Scales horizontally the way the domain does: participant growth adds more
care circles of a fixed shape (a handful of experts plus their patients),
never bigger teams. Every participant runs a live subscriber; the measured
quantity is enqueue-to-subscriber latency with monotonic clocks on the
client side only. After the drive phase, a loss audit reconciles every
DeliveryEnqueued event against consumer receipts (stream first, catch-up
poll for anything a dropped or overflowed stream missed).
"""

from __future__ import annotations

import random
import sys
import threading
import time
from dataclasses import dataclass, field

from caremesh import events as ev
from caremesh.service import CoordinatorService

BUILTIN_MIX_KEYS = ("t1", "t2", "t3", "t4", "t5", "t6")


@dataclass
class LoadParams:
    experts: int
    patients: int
    count: int
    mix: dict[str, float] = field(
        default_factory=lambda: {k: 1.0 for k in BUILTIN_MIX_KEYS}
    )
    circle_experts: int = 5
    seed: int = 7
    drain_timeout: float = 15.0

    def normalized_mix(self) -> dict[str, float]:
        mix = {k.lower(): float(v) for k, v in self.mix.items()}
        unknown = set(mix) - set(BUILTIN_MIX_KEYS)
        if unknown:
            raise ValueError(f"mix covers T1..T6 only, got {sorted(unknown)}")
        total = sum(v for v in mix.values() if v > 0)
        if total <= 0:
            raise ValueError("mix weights must sum to a positive value")
        return {k: max(mix.get(k, 0.0), 0.0) / total for k in BUILTIN_MIX_KEYS}


class _Consumer:
    """One live subscriber; records receipt times keyed by delivery id."""

    def __init__(self, service: CoordinatorService, mailbox: str,
                 receipts: dict, lost_streams: list):
        self.service = service
        self.mailbox = mailbox
        self.receipts = receipts
        self.lost_streams = lost_streams
        self.sub = service.subscribe(mailbox)
        self.stop = threading.Event()
        self.thread = threading.Thread(target=self._pump, daemon=True)
        self.thread.start()

    def _pump(self) -> None:
        # A long idle timeout keeps hundreds of parked consumers from
        # churning the scheduler; a push still wakes them immediately.
        while not self.stop.is_set():
            item = self.sub.get(timeout=0.25)
            if item is None:
                if self.sub.closed:
                    if self.sub.overflowed:
                        self.lost_streams.append(self.mailbox)
                    return
                continue
            self.receipts.setdefault(item["delivery_id"], time.monotonic())

    def shutdown(self) -> None:
        self.stop.set()
        self.service.unsubscribe(self.sub)
        self.thread.join(timeout=2)


def _percentile(samples: list[float], q: float) -> float:
    """Nearest-rank percentile; samples must be sorted."""
    if not samples:
        return 0.0
    rank = max(1, int(round(q / 100.0 * len(samples) + 0.5)))
    return samples[min(rank, len(samples)) - 1]


def run_load(params: LoadParams) -> dict:
    mix = params.normalized_mix()
    if params.experts < 1 or params.patients < 1 or params.count < 1:
        raise ValueError("experts, patients, and count must be positive")
    if mix["t2"] > 0 and min(params.circle_experts, params.experts) < 2:
        raise ValueError("an approval mix needs at least two experts per circle")

    rng = random.Random(params.seed)
    # Finer-grained thread switching keeps subscriber wakeups prompt while
    # the generator floods; restored on exit.
    previous_switch = sys.getswitchinterval()
    sys.setswitchinterval(0.001)
    service = CoordinatorService(snapshots=False)

    experts = [
        service.register_participant("Expert", f"Expert {i}", f"field{i % 7}")["id"]
        for i in range(params.experts)
    ]
    patients = [
        service.register_participant("EndUser", f"Patient {i}")["id"]
        for i in range(params.patients)
    ]

    # Fixed-shape circles: chunk experts, deal patients round-robin.
    per = min(params.circle_experts, params.experts)
    circles = []
    for start in range(0, params.experts - per + 1, per):
        circles.append({"experts": experts[start : start + per], "patients": []})
    if not circles:
        circles.append({"experts": list(experts), "patients": []})
    for i, patient in enumerate(patients):
        circles[i % len(circles)]["patients"].append(patient)
    circles = [c for c in circles if c["patients"]]
    for c in circles:
        c["id"] = service.create_circle(experts=c["experts"], patients=c["patients"])["id"]

    # One task per patient; enough goals to absorb the whole T6 share.
    goals_per_patient = max(2, (int(params.count * mix["t6"]) // params.patients) + 2)
    tasks: dict[str, dict] = {}
    for c in circles:
        for patient in c["patients"]:
            goals = [{"label": f"g{i}", "target": f"milestone {i}"}
                     for i in range(goals_per_patient)]
            task = service.create_task(
                c["experts"][0], c["id"], patient,
                ["follow the plan"], goals=goals,
            )
            tasks[patient] = {"id": task["id"], "next_goal": 0, "goals": goals_per_patient}

    receipts: dict[str, float] = {}
    lost_streams: list[str] = []
    consumers = [
        _Consumer(service, pid, receipts, lost_streams) for pid in experts + patients
    ]

    enqueue_t0: dict[str, float] = {}
    seen_seq = service.head()

    def timed(command, *args) -> dict:
        nonlocal seen_seq
        t0 = time.monotonic()
        result = command(*args)
        for event in service.log.read_from(seen_seq + 1):
            if event.kind == ev.DELIVERY_ENQUEUED:
                enqueue_t0[event.body["delivery_id"]] = t0
        seen_seq = service.head()
        return result

    codes = [k.upper() for k in BUILTIN_MIX_KEYS]
    weights = [mix[k] for k in BUILTIN_MIX_KEYS]
    commands = 0
    started = time.monotonic()
    for n in range(params.count):
        code = rng.choices(codes, weights=weights)[0]
        circle = rng.choice(circles)
        if code in ("T1", "T2"):
            sender = rng.choice(circle["experts"])
            if code == "T1":
                timed(service.submit_notification, sender, circle["id"], "T1",
                      {"text": f"field update {n}"})
                commands += 1
            else:
                out = timed(service.submit_notification, sender, circle["id"],
                            "T2", {"text": f"pending decision {n}"})
                commands += 1
                for approver in circle["experts"]:
                    if approver == sender:
                        continue
                    timed(service.respond_approval, approver,
                          out["notification_id"], "OK")
                    commands += 1
        elif code in ("T3", "T4"):
            editor = rng.choice(circle["experts"])
            patient = rng.choice(circle["patients"])
            timed(service.apply_task_change, editor, tasks[patient]["id"],
                  {"instructions": [f"step {n}"]}, code == "T3")
            commands += 1
        elif code == "T5":
            patient = rng.choice(circle["patients"])
            timed(service.report_progress, patient, tasks[patient]["id"],
                  {"distance_km": n % 20, "note": "ok"})
            commands += 1
        else:  # T6
            patient = rng.choice(circle["patients"])
            slot = tasks[patient]
            if slot["next_goal"] >= slot["goals"]:
                continue  # goal budget exhausted; skip rather than error
            timed(service.record_goal_reached, patient, slot["id"],
                  f"g{slot['next_goal']}")
            slot["next_goal"] += 1
            commands += 1
    elapsed = time.monotonic() - started

    # Drain: wait for the stream to cover everything it can, then reconcile.
    deadline = time.monotonic() + params.drain_timeout
    while time.monotonic() < deadline:
        if all(did in receipts for did in enqueue_t0):
            break
        time.sleep(0.01)
    stream_receipts = sum(1 for did in enqueue_t0 if did in receipts)
    for consumer in consumers:
        consumer.shutdown()

    poll_receipts = 0
    missing = {did for did in enqueue_t0 if did not in receipts}
    if missing:
        for pid in experts + patients:
            after = 0
            while True:
                page = service.poll(pid, after_seq=after, max_batch=500)
                for item in page["deliveries"]:
                    if item["delivery_id"] in missing:
                        receipts.setdefault(item["delivery_id"], time.monotonic())
                        missing.discard(item["delivery_id"])
                        poll_receipts += 1
                if page["count"] < 500:
                    break
                after = page["deliveries"][-1]["seq"]

    lost = sorted(missing)
    latencies = sorted(
        (receipts[did] - t0) * 1000.0
        for did, t0 in enqueue_t0.items()
        if did in receipts
    )
    report = {
        "commands": commands,
        "deliveries": len(enqueue_t0),
        "elapsed_s": round(elapsed, 4),
        "experts": params.experts,
        "latency_ms": {
            "max": round(latencies[-1], 3) if latencies else 0.0,
            "p50": round(_percentile(latencies, 50), 3),
            "p95": round(_percentile(latencies, 95), 3),
            "p99": round(_percentile(latencies, 99), 3),
            "samples": len(latencies),
        },
        "lost": len(lost),
        "lost_ids": lost[:20],
        "notifications": params.count,
        "overflowed_streams": len(lost_streams),
        "participants": params.experts + params.patients,
        "patients": params.patients,
        "receipts": {"poll": poll_receipts, "stream": stream_receipts},
        "throughput_cps": round(commands / elapsed, 1) if elapsed > 0 else 0.0,
    }
    service.close()
    sys.setswitchinterval(previous_switch)
    return report
