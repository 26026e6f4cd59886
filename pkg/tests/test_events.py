import pytest
from hypothesis import given, strategies as st

from evcorr.events import (
    LABELS,
    FiveTuple,
    RawEvent,
    RuleLabel,
    canonical_ip,
    canonical_key,
    five_tuple,
    format_ts,
    validate_proto,
)

A, B = "10.0.0.1", "10.0.0.2"


def test_five_tuple_of_dhcp_event(dhcp):
    assert five_tuple(dhcp[0]) == ("192.168.204.69", "192.168.204.1", 68, 67, "udp")


def test_five_tuple_is_stable_and_proto_sensitive():
    ev = RawEvent(1, A, B, 1000, 80, "tcp", 10)
    assert five_tuple(ev) == five_tuple(ev)
    other = RawEvent(1, A, B, 1000, 80, "udp", 10)
    assert five_tuple(ev) != five_tuple(other)


def test_label_rank_order():
    assert [l.rank for l in LABELS] == [0, 1, 2, 3, 4]
    assert RuleLabel.SC.rank < RuleLabel.VC1.rank < RuleLabel.VC2.rank < RuleLabel.VC3.rank < RuleLabel.VC4.rank


def test_key_projection_examples():
    tcp = FiveTuple(A, B, 1000, 80, "tcp")
    udp = FiveTuple(A, B, 1000, 80, "udp")
    assert canonical_key(tcp, RuleLabel.VC1) == canonical_key(udp, RuleLabel.VC1)
    assert canonical_key(tcp, RuleLabel.SC) != canonical_key(udp, RuleLabel.SC)
    assert canonical_key(tcp, RuleLabel.SC) != canonical_key(tcp, RuleLabel.VC4)
    other_sport = FiveTuple(A, B, 1001, 80, "tcp")
    assert canonical_key(tcp, RuleLabel.VC3) == canonical_key(other_sport, RuleLabel.VC3)
    assert canonical_key(tcp, RuleLabel.VC2) != canonical_key(other_sport, RuleLabel.VC2)


def test_key_is_byte_stable():
    # pinned so persisted stores stay comparable across releases
    key = canonical_key(FiveTuple("1.2.3.4", "5.6.7.8", 1, 2, "tcp"), RuleLabel.VC4)
    assert key.hex() == (
        "04" "0010" "00000000000000000000ffff01020304" "0010" "00000000000000000000ffff05060708"
    )


def test_ipv6_and_mapped_addresses():
    assert canonical_ip("::ffff:10.0.0.1") == "10.0.0.1"
    assert canonical_ip("2001:DB8::1") == "2001:db8::1"
    k4 = canonical_key(FiveTuple("10.0.0.1", B, 1, 2, "tcp"), RuleLabel.SC)
    k6 = canonical_key(FiveTuple("2001:db8::1", B, 1, 2, "tcp"), RuleLabel.SC)
    assert k4 != k6
    with pytest.raises(ValueError):
        canonical_ip("300.1.1.1")


def test_raw_event_validation():
    with pytest.raises(ValueError):
        RawEvent(-1, A, B, 1, 2, "tcp", 0)
    with pytest.raises(ValueError):
        RawEvent(0, A, B, 70000, 2, "tcp", 0)
    with pytest.raises(ValueError):
        RawEvent(0, A, B, 1, 2, "tcp", -5)


def test_proto_token():
    assert validate_proto("UDP") == "udp"
    with pytest.raises(ValueError):
        validate_proto("ip v6")
    with pytest.raises(ValueError):
        validate_proto("")


def test_format_ts_exact():
    assert format_ts(1331901635250000) == "1331901635.250000"
    assert format_ts(5) == "0.000005"


addresses = st.sampled_from(["10.0.0.1", "10.0.0.2", "::1", "2001:db8::7"])
ports = st.integers(0, 65535)
protos = st.sampled_from(["tcp", "udp", "icmp", "gre"])
tuples = st.builds(FiveTuple, addresses, addresses, ports, ports, protos)


@given(tuples, tuples)
def test_key_equality_matches_projection(a, b):
    for label in LABELS:
        same = all(getattr(a, f) == getattr(b, f) for f in label.fields)
        assert (canonical_key(a, label) == canonical_key(b, label)) == same


@given(tuples, tuples)
def test_key_monotonicity(a, b):
    eq = {l: canonical_key(a, l) == canonical_key(b, l) for l in LABELS}
    if eq[RuleLabel.SC]:
        assert all(eq.values())
    if eq[RuleLabel.VC1]:
        assert eq[RuleLabel.VC2] and eq[RuleLabel.VC3] and eq[RuleLabel.VC4]
    if eq[RuleLabel.VC2] or eq[RuleLabel.VC3]:
        assert eq[RuleLabel.VC4]


@given(tuples)
def test_labels_never_collide(t):
    keys = {canonical_key(t, l) for l in LABELS}
    assert len(keys) == len(LABELS)
