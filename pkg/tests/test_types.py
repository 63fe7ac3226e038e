import pytest

from splitstore.types import (
    NIL,
    TS_INIT,
    DigestFacility,
    HarnessError,
    HashMode,
    Metadata,
    Timestamp,
    parse_value,
    render_value,
)


def test_initial_timestamp():
    assert TS_INIT.num == 0
    assert TS_INIT.cid == NIL
    assert TS_INIT.render() == "0:nil"


@pytest.mark.parametrize(
    "lo,hi",
    [
        (Timestamp(0, NIL), Timestamp(1, 1)),
        (Timestamp(1, 1), Timestamp(1, 2)),  # same round, higher client wins
        (Timestamp(1, 9), Timestamp(2, 1)),  # round dominates client id
        (Timestamp(3, 2), Timestamp(4, 1)),
    ],
)
def test_timestamp_order_is_lexicographic(lo, hi):
    assert lo < hi
    assert hi > lo
    assert lo <= hi
    assert not hi <= lo
    assert lo.key() < hi.key()


def test_timestamp_increment_brands_the_client():
    ts = Timestamp(4, 7).next_for(2)
    assert ts == Timestamp(5, 2)
    assert TS_INIT.next_for(3) == Timestamp(1, 3)


def test_timestamp_render_parse_round_trip():
    for ts in (TS_INIT, Timestamp(1, 1), Timestamp(12, 34)):
        assert Timestamp.parse(ts.render()) == ts


def test_value_render_round_trips_arbitrary_bytes():
    for val in (b"", b"abc", bytes(range(256))):
        assert parse_value(render_value(val)) == val
    assert render_value(None) is None
    assert parse_value(None) is None


def test_metadata_render():
    md = Metadata(ts=Timestamp(2, 1), replicas=frozenset({3, 1}))
    assert md.render() == {"ts": "2:1", "replicas": [1, 3]}


class TestDigestFacility:
    def test_production_mode_uses_sha256(self):
        d = DigestFacility(HashMode.PRODUCTION)
        assert d.digest(b"abc") == (
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        )
        assert d.collision_resistant()

    def test_oracle_mode_is_injective_by_construction(self):
        d = DigestFacility(HashMode.ORACLE)
        assert d.digest(b"x") != d.digest(b"y")
        assert d.digest(b"x") == d.digest(b"x")
        assert d.collision_resistant()

    def test_forgeable_mode_accepts_planted_collisions(self):
        d = DigestFacility(HashMode.FORGEABLE)
        target = d.digest(b"real")
        d.forge(b"fake", target)
        assert d.digest(b"fake") == target
        assert not d.collision_resistant()
        assert d.collisions  # the forgery is audited

    @pytest.mark.parametrize("mode", [HashMode.PRODUCTION, HashMode.ORACLE])
    def test_forgery_requires_forgeable_mode(self, mode):
        d = DigestFacility(mode)
        with pytest.raises(HarnessError):
            d.forge(b"fake", d.digest(b"real"))
