from hypothesis import given, strategies as st

from caremesh import canonical

scalars = st.one_of(
    st.none(),
    st.booleans(),
    st.integers(min_value=-(10**12), max_value=10**12),
    st.text(max_size=40),
)
values = st.recursive(
    scalars,
    lambda inner: st.one_of(
        st.lists(inner, max_size=4),
        st.dictionaries(st.text(max_size=10), inner, max_size=4),
    ),
    max_leaves=20,
)


def test_sorted_keys_and_no_whitespace():
    assert canonical.dumps({"b": 1, "a": {"z": 2, "y": 3}}) == '{"a":{"y":3,"z":2},"b":1}'


def test_unicode_passes_through_utf8():
    blob = canonical.dump_bytes({"name": "Ána"})
    assert "Ána".encode("utf-8") in blob


@given(values)
def test_round_trip(value):
    assert canonical.loads(canonical.dumps(value)) == value


@given(values)
def test_key_order_independence(value):
    # Serializing a reconstruction must be byte-identical.
    once = canonical.dumps(value)
    again = canonical.dumps(canonical.loads(once))
    assert once == again
