"""Delivery consumers for fault injection and loss audits.

A consumer attaches to one mailbox, records every delivery it sees (live
stream or catch-up poll), and can be dropped and resumed mid-run. After
deduplication by delivery id, its assembled sequence must equal the mailbox
log exactly: duplicates are tolerated, gaps never.
"""

from __future__ import annotations

import threading

import httpx

from caremesh import canonical
from caremesh.service import CoordinatorService


class AssembledView:
    """Shared bookkeeping: arrival-ordered records plus dedup by id."""

    def __init__(self):
        self.received: list[dict] = []
        self._lock = threading.Lock()

    def add(self, item: dict) -> None:
        with self._lock:
            self.received.append(item)

    def assembled(self) -> list[dict]:
        """Deduplicated deliveries in seq order."""
        with self._lock:
            by_id: dict[str, dict] = {}
            for item in self.received:
                by_id.setdefault(item["delivery_id"], item)
        return sorted(by_id.values(), key=lambda d: d["seq"])

    def max_seq(self) -> int:
        with self._lock:
            return max((d["seq"] for d in self.received), default=0)


class InProcessConsumer:
    """Consumes a mailbox of an in-process service via live subscriptions."""

    def __init__(self, service: CoordinatorService, mailbox: str):
        self.service = service
        self.mailbox = mailbox
        self.view = AssembledView()
        self._sub = None
        self._thread: threading.Thread | None = None
        self._stop = threading.Event()

    def connect(self) -> None:
        self._stop.clear()
        self._sub = self.service.subscribe(self.mailbox)
        self._thread = threading.Thread(target=self._pump, daemon=True)
        self._thread.start()

    def _pump(self) -> None:
        sub = self._sub
        last = 0
        while not self._stop.is_set():
            item = sub.get(timeout=0.05)
            if item is None:
                if sub.closed:
                    break
                continue
            # A live segment must arrive in seq order.
            assert item["seq"] > last, "stream delivered out of order"
            last = item["seq"]
            self.view.add(item)

    def drop(self) -> None:
        self._stop.set()
        if self._sub is not None:
            self.service.unsubscribe(self._sub)
        if self._thread is not None:
            self._thread.join(timeout=2)
        self._sub = None
        self._thread = None

    def resume(self) -> None:
        """Reconnect: go live first, then back-fill by poll so nothing that
        arrived while offline can fall between the two."""
        self.connect()
        self.catch_up()

    def catch_up(self) -> None:
        after = self.view.max_seq()
        while True:
            page = self.service.poll(self.mailbox, after_seq=after, max_batch=500)
            for item in page["deliveries"]:
                self.view.add(item)
            if page["count"] < 500:
                break
            after = page["deliveries"][-1]["seq"]

    def stop(self) -> None:
        self.drop()

    def assembled(self) -> list[dict]:
        return self.view.assembled()


class SseConsumer:
    """Consumes a mailbox over the wire via the event-stream endpoint."""

    def __init__(self, base_url: str, token: str):
        self.base_url = base_url.rstrip("/")
        self.token = token
        self.view = AssembledView()
        self._client: httpx.Client | None = None
        self._thread: threading.Thread | None = None
        self._stop = threading.Event()
        self.connected = threading.Event()

    def connect(self, after_seq: int | None = None) -> None:
        if after_seq is None:
            after_seq = self.view.max_seq()
        self._stop.clear()
        self.connected.clear()
        self._client = httpx.Client(
            base_url=self.base_url, timeout=httpx.Timeout(10.0, read=None)
        )
        self._thread = threading.Thread(
            target=self._pump, args=(self._client, after_seq), daemon=True
        )
        self._thread.start()

    def _pump(self, client: httpx.Client, after_seq: int) -> None:
        headers = {"Authorization": f"Bearer {self.token}"}
        try:
            with client.stream(
                "GET", "/stream", params={"after_seq": after_seq}, headers=headers
            ) as response:
                self.connected.set()
                data: str | None = None
                for line in response.iter_lines():
                    if self._stop.is_set():
                        break
                    if line.startswith(":"):
                        continue  # heartbeat
                    if line.startswith("data: "):
                        data = line[len("data: "):]
                    elif line == "" and data is not None:
                        self.view.add(canonical.loads(data))
                        data = None
        except httpx.HTTPError:
            pass  # dropped connections are the point of this consumer
        finally:
            self.connected.set()

    def drop(self) -> None:
        self._stop.set()
        if self._client is not None:
            self._client.close()
        if self._thread is not None:
            self._thread.join(timeout=5)
        self._client = None
        self._thread = None

    def resume(self) -> None:
        self.connect()

    def catch_up(self) -> None:
        headers = {"Authorization": f"Bearer {self.token}"}
        after = self.view.max_seq()
        with httpx.Client(base_url=self.base_url, timeout=10.0) as client:
            while True:
                response = client.get(
                    "/mailbox",
                    params={"after_seq": after, "max_batch": 500},
                    headers=headers,
                )
                response.raise_for_status()
                page = response.json()
                for item in page["deliveries"]:
                    self.view.add(item)
                if page["count"] < 500:
                    return
                after = page["deliveries"][-1]["seq"]

    def stop(self) -> None:
        self.drop()

    def assembled(self) -> list[dict]:
        return self.view.assembled()
