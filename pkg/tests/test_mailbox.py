import threading

import pytest
from hypothesis import given, settings, strategies as st

from caremesh.errors import InvalidArgument, SeqBeyondHead, UnknownMailbox
from caremesh.mailbox import MailboxStore, SubscriberHub
from caremesh.model import Delivery, DeliveryKind


def _delivery(mailbox, seq, did=None):
    return Delivery(
        delivery_id=did or f"d-{mailbox}-{seq}",
        mailbox=mailbox,
        seq=seq,
        notification_id="n1",
        kind=DeliveryKind.DIRECT,
        body={"text": "x"},
    )


@pytest.fixture
def store():
    s = MailboxStore()
    s.create("alice")
    s.create("bob")
    return s


def test_first_delivery_gets_seq_one(store):
    store.append(_delivery("alice", 1))
    assert [d.seq for d in store.poll("alice")] == [1]


def test_seqs_are_gapless_and_ordered(store):
    store.append(_delivery("alice", 1))
    store.append(_delivery("alice", 2))
    assert [d.seq for d in store.poll("alice")] == [1, 2]
    with pytest.raises(InvalidArgument):
        store.append(_delivery("alice", 4))


def test_unknown_mailbox(store):
    with pytest.raises(UnknownMailbox):
        store.poll("nobody")
    with pytest.raises(UnknownMailbox):
        store.ack("nobody", 0)


def test_poll_window_and_exhaustion(store):
    for seq in range(1, 4):
        store.append(_delivery("alice", seq))
    assert [d.seq for d in store.poll("alice", after_seq=0)] == [1, 2, 3]
    assert store.poll("alice", after_seq=3) == []
    assert [d.seq for d in store.poll("alice", after_seq=1, max_batch=1)] == [2]


def test_poll_does_not_consume(store):
    for seq in range(1, 4):
        store.append(_delivery("alice", seq))
    first = [d.delivery_id for d in store.poll("alice")]
    second = [d.delivery_id for d in store.poll("alice")]
    assert first == second == ["d-alice-1", "d-alice-2", "d-alice-3"]


def test_ack_monotone_and_idempotent(store):
    for seq in range(1, 6):
        store.append(_delivery("alice", seq))
    cursor, newly = store.ack("alice", 5)
    assert cursor == 5 and len(newly) == 5
    cursor, newly = store.ack("alice", 3)
    assert cursor == 5 and newly == []
    cursor, newly = store.ack("alice", 5)
    assert cursor == 5 and newly == []
    with pytest.raises(SeqBeyondHead):
        store.ack("alice", 6)


def test_thousand_enqueues_across_ten_mailboxes():
    """Scripted enqueue log: ten mailboxes, round-robin, 1000 deliveries."""
    store = MailboxStore()
    boxes = [f"m{i}" for i in range(10)]
    for box in boxes:
        store.create(box)
    heads = {box: 0 for box in boxes}
    script = []
    for i in range(1000):
        box = boxes[i % 10]
        heads[box] += 1
        script.append((box, heads[box]))
        store.append(_delivery(box, heads[box], did=f"d{i}"))
    for box in boxes:
        got = [d.seq for d in store.poll(box, max_batch=1000)]
        assert got == list(range(1, 101))
        ids = [d.delivery_id for d in store.poll(box, max_batch=1000)]
        expected = [f"d{i}" for i in range(1000) if boxes[i % 10] == box]
        assert ids == expected


ops = st.lists(
    st.one_of(
        st.just(("enqueue",)),
        st.tuples(st.just("ack"), st.integers(min_value=0, max_value=30)),
        st.tuples(st.just("poll"), st.integers(min_value=0, max_value=30)),
    ),
    max_size=60,
)


@settings(max_examples=200, deadline=None)
@given(ops)
def test_store_matches_reference_queue_model(script):
    """Model check: interleaved enqueue/poll/ack against a plain list+cursor."""
    store = MailboxStore()
    store.create("m")
    model: list[str] = []
    cursor = 0
    for op in script:
        if op[0] == "enqueue":
            seq = len(model) + 1
            store.append(_delivery("m", seq, did=f"d{seq}"))
            model.append(f"d{seq}")
        elif op[0] == "ack":
            up_to = op[1]
            if up_to > len(model):
                with pytest.raises(SeqBeyondHead):
                    store.ack("m", up_to)
            else:
                cursor = max(cursor, up_to)
                assert store.ack("m", up_to)[0] == cursor
        else:
            after = op[1]
            got = [d.delivery_id for d in store.poll("m", after_seq=after, max_batch=100)]
            assert got == model[after : after + 100]
        # Until acked, every enqueued delivery keeps showing up in polls.
        unacked = [d.delivery_id for d in store.poll("m", after_seq=cursor, max_batch=100)]
        assert unacked == model[cursor : cursor + 100]


def test_subscription_receives_live_pushes():
    hub = SubscriberHub()
    sub = hub.subscribe("m")
    hub.publish("m", {"seq": 1, "delivery_id": "d1"})
    assert sub.get(timeout=1)["delivery_id"] == "d1"
    assert sub.get(timeout=0.01) is None


def test_enqueue_before_subscribe_not_on_stream():
    hub = SubscriberHub()
    hub.publish("m", {"seq": 1, "delivery_id": "d1"})
    sub = hub.subscribe("m")
    assert sub.get(timeout=0.01) is None


def test_multiple_subscribers_each_get_everything():
    hub = SubscriberHub()
    subs = [hub.subscribe("m") for _ in range(3)]
    for seq in (1, 2):
        hub.publish("m", {"seq": seq, "delivery_id": f"d{seq}"})
    for sub in subs:
        assert [sub.get(timeout=1)["seq"], sub.get(timeout=1)["seq"]] == [1, 2]


def test_overflow_closes_subscription_not_publisher():
    hub = SubscriberHub(default_buffer=2)
    sub = hub.subscribe("m")
    for seq in range(1, 6):
        hub.publish("m", {"seq": seq, "delivery_id": f"d{seq}"})
    assert sub.overflowed and sub.closed
    drained = [sub.get(timeout=0.01) for _ in range(3)]
    assert [d["seq"] for d in drained if d] == [1, 2]


def test_closed_subscription_wakes_blocked_consumer():
    hub = SubscriberHub()
    sub = hub.subscribe("m")
    got = []

    def consume():
        got.append(sub.get(timeout=5))

    t = threading.Thread(target=consume)
    t.start()
    sub.close()
    t.join(timeout=2)
    assert not t.is_alive()
    assert got == [None]
