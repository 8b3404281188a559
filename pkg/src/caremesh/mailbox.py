"""Per-participant mailboxes: ordered delivery queues with ack cursors.

Delivery is at-least-once: polls never consume, live streams may duplicate
what a poll already returned, and consumers deduplicate by ``delivery_id``.
Per-mailbox sequence numbers are gapless from 1, so a client holding cursor
``c`` resumes with ``poll(after_seq=c)`` and misses nothing.

The store itself is replayable state; live subscriptions are runtime-only
and are fanned out by the service after events are durable.
"""

from __future__ import annotations

import queue
import threading

from caremesh.errors import InvalidArgument, SeqBeyondHead, UnknownMailbox
from caremesh.model import Delivery

DEFAULT_MAX_BATCH = 100


class MailboxStore:
    """All mailboxes and cursors. Mutated only by the event fold."""

    def __init__(self):
        self._deliveries: dict[str, list[Delivery]] = {}
        self._cursors: dict[str, int] = {}

    def create(self, mailbox: str) -> None:
        self._deliveries.setdefault(mailbox, [])
        self._cursors.setdefault(mailbox, 0)

    def exists(self, mailbox: str) -> bool:
        return mailbox in self._deliveries

    def _box(self, mailbox: str) -> list[Delivery]:
        try:
            return self._deliveries[mailbox]
        except KeyError:
            raise UnknownMailbox(f"no mailbox for participant {mailbox!r}") from None

    def head(self, mailbox: str) -> int:
        return len(self._box(mailbox))

    def append(self, delivery: Delivery) -> None:
        box = self._box(delivery.mailbox)
        if delivery.seq != len(box) + 1:
            raise InvalidArgument(
                f"mailbox {delivery.mailbox!r} expected seq {len(box) + 1}, "
                f"got {delivery.seq}"
            )
        box.append(delivery)

    def get(self, mailbox: str, seq: int) -> Delivery:
        box = self._box(mailbox)
        if not 1 <= seq <= len(box):
            raise SeqBeyondHead(f"seq {seq} beyond mailbox head {len(box)}")
        return box[seq - 1]

    def poll(
        self, mailbox: str, after_seq: int = 0, max_batch: int = DEFAULT_MAX_BATCH
    ) -> list[Delivery]:
        """Deliveries with seq > after_seq, ascending, never blocking.

        Reads do not consume: polling twice without an ack returns the same
        batch. Gapless per-mailbox seqs make this a plain slice.
        """
        if after_seq < 0:
            raise InvalidArgument("after_seq must be >= 0")
        if max_batch < 1:
            raise InvalidArgument("max_batch must be >= 1")
        box = self._box(mailbox)
        return box[after_seq : after_seq + max_batch]

    def cursor(self, mailbox: str) -> int:
        if mailbox not in self._cursors:
            raise UnknownMailbox(f"no mailbox for participant {mailbox!r}")
        return self._cursors[mailbox]

    def ack(self, mailbox: str, up_to_seq: int) -> tuple[int, list[Delivery]]:
        """Advance the cursor (idempotent, monotone); returns the new cursor
        and the deliveries that just became acked."""
        box = self._box(mailbox)
        if up_to_seq < 0:
            raise InvalidArgument("up_to_seq must be >= 0")
        if up_to_seq > len(box):
            raise SeqBeyondHead(f"ack {up_to_seq} beyond mailbox head {len(box)}")
        old = self._cursors[mailbox]
        if up_to_seq <= old:
            return old, []
        newly = box[old:up_to_seq]
        for d in newly:
            d.acked = True
        self._cursors[mailbox] = up_to_seq
        return up_to_seq, newly

    def canonical_form(self) -> dict:
        return {
            mailbox: {
                "cursor": self._cursors[mailbox],
                "deliveries": [d.to_state() for d in box],
            }
            for mailbox, box in sorted(self._deliveries.items())
        }


class Subscription:
    """Live per-mailbox delivery stream with a bounded buffer.

    Overflow closes the subscription rather than blocking the writer; the
    client resumes by polling from its cursor.
    """

    def __init__(self, mailbox: str, buffer: int):
        self.mailbox = mailbox
        self._queue: queue.Queue = queue.Queue(maxsize=buffer)
        self._closed = threading.Event()
        self.overflowed = False

    @property
    def closed(self) -> bool:
        return self._closed.is_set()

    def push(self, item: dict) -> bool:
        if self.closed:
            return False
        try:
            self._queue.put_nowait(item)
            return True
        except queue.Full:
            self.overflowed = True
            self._closed.set()
            return False

    def get(self, timeout: float | None = None) -> dict | None:
        """Next delivery dict, or None on timeout / after close drains."""
        try:
            item = self._queue.get(timeout=timeout)
        except queue.Empty:
            return None
        if item is None:
            return None
        return item

    def pending(self) -> int:
        return self._queue.qsize()

    def close(self) -> None:
        if not self._closed.is_set():
            self._closed.set()
            try:
                self._queue.put_nowait(None)  # wake a blocked consumer
            except queue.Full:
                pass


class SubscriberHub:
    """Fan-out of freshly enqueued deliveries to live subscriptions.

    A mailbox may have any number of simultaneous subscribers (one per
    device); each receives every delivery in seq order.
    """

    def __init__(self, default_buffer: int = 1000):
        self._default_buffer = default_buffer
        self._subs: dict[str, list[Subscription]] = {}
        self._lock = threading.Lock()

    def subscribe(self, mailbox: str, buffer: int | None = None) -> Subscription:
        sub = Subscription(mailbox, buffer or self._default_buffer)
        with self._lock:
            self._subs.setdefault(mailbox, []).append(sub)
        return sub

    def unsubscribe(self, sub: Subscription) -> None:
        sub.close()
        with self._lock:
            subs = self._subs.get(sub.mailbox, [])
            if sub in subs:
                subs.remove(sub)

    def publish(self, mailbox: str, item: dict) -> None:
        with self._lock:
            subs = list(self._subs.get(mailbox, ()))
        for sub in subs:
            if not sub.push(item):
                self.unsubscribe(sub)

    def close_all(self) -> None:
        with self._lock:
            subs = [s for group in self._subs.values() for s in group]
            self._subs.clear()
        for sub in subs:
            sub.close()
