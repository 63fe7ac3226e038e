import random

import pytest

from splitstore.checker import (
    check_directory_linearizable,
    check_register_exhaustive,
    check_register_linearizable,
    check_run,
    check_wait_freedom,
    lemma_directory_monotone,
    lemma_read_sandwich,
    lemma_timestamp_order,
    lemma_unique_write_timestamps,
    lemma_value_integrity,
    random_history,
)
from splitstore.history import DirOpRecord, OpRecord
from splitstore.simnet import Config, run
from splitstore.types import HarnessError, Metadata, Timestamp


def W(op_id, client, val, invoke, response, num, cid):
    return OpRecord(op_id=op_id, client=client, kind="WRITE", arg=val,
                    invoke=invoke, response=response,
                    ret="OK" if response is not None else None,
                    ts=Timestamp(num, cid))


def R(op_id, client, val, invoke, response, num, cid):
    ts = Timestamp(num, cid)
    return OpRecord(op_id=op_id, client=client, kind="READ", arg=None,
                    invoke=invoke, response=response, ret=val,
                    ts=ts, md_ts=ts)


# -- exhaustive register check ------------------------------------------------


def test_empty_history_is_linearizable():
    assert check_register_exhaustive([]).passed


def test_sequential_history_is_linearizable():
    hist = [W(1, "w1", b"a", 0, 10, 1, 1), R(2, "r1", b"a", 20, 30, 1, 1)]
    assert check_register_exhaustive(hist).passed


def test_read_of_a_never_written_value_fails():
    hist = [W(1, "w1", b"a", 0, 10, 1, 1), R(2, "r1", b"z", 20, 30, 1, 1)]
    res = check_register_exhaustive(hist)
    assert res.passed is False
    assert res.counterexample


def test_new_old_read_inversion_fails():
    hist = [
        W(1, "w1", b"a", 0, 10, 1, 1),
        R(2, "r1", b"a", 20, 30, 1, 1),
        R(3, "r2", None, 40, 50, 0, 0),  # stale: initial state after b"a" was read
    ]
    assert check_register_exhaustive(hist).passed is False


def test_concurrent_reads_may_split_around_a_write():
    hist = [
        W(1, "w1", b"a", 0, 100, 1, 1),
        R(2, "r1", None, 10, 20, 0, 0),
        R(3, "r2", b"a", 30, 40, 1, 1),
    ]
    assert check_register_exhaustive(hist).passed


def test_open_write_may_count_as_applied():
    hist = [
        OpRecord(op_id=1, client="w1", kind="WRITE", arg=b"a", invoke=0,
                 ts=Timestamp(1, 1)),  # never returned
        R(2, "r1", b"a", 10, 20, 1, 1),
    ]
    assert check_register_exhaustive(hist).passed


def test_open_write_may_also_be_dropped():
    hist = [
        OpRecord(op_id=1, client="w1", kind="WRITE", arg=b"a", invoke=0,
                 ts=Timestamp(1, 1)),
        R(2, "r1", None, 10, 20, 0, 0),
    ]
    assert check_register_exhaustive(hist).passed


def test_interleaved_clients_must_stay_sequential():
    bad = [W(1, "w1", b"a", 0, 10, 1, 1), W(2, "w1", b"b", 5, 15, 2, 1)]
    with pytest.raises(HarnessError):
        check_register_exhaustive(bad)


# -- witness ladder -----------------------------------------------------------


def chain(n, stale_read_at=None):
    """n sequential write+read rounds, optionally with one stale read."""
    hist = []
    op_id = 1
    t = 0
    for i in range(1, n + 1):
        hist.append(W(op_id, "w1", bytes([96 + i]), t, t + 5, i, 1))
        op_id += 1
        t += 10
        val, num = bytes([96 + i]), i
        if stale_read_at == i:
            val, num = bytes([96 + i - 1]), i - 1  # reads the superseded value
        hist.append(R(op_id, "r1", val, t, t + 5, num, 1))
        op_id += 1
        t += 10
    return hist


def test_witness_accepts_a_long_clean_history():
    res = check_register_linearizable(chain(10))
    assert res.passed
    assert res.detail == "timestamp witness"
    assert res.witness is not None


def test_witness_failure_is_confirmed_on_a_small_suspect_subset():
    res = check_register_linearizable(chain(10, stale_read_at=6))
    assert res.passed is False
    assert "re-validated" in res.detail
    assert res.counterexample


def test_ladder_agrees_with_exhaustive_on_random_histories():
    rng = random.Random("ladder-vs-exhaustive")
    for _ in range(300):
        hist = random_history(rng)
        full = check_register_exhaustive(hist)
        lad = check_register_linearizable(hist, small_limit=0)
        assert full.passed == lad.passed, [op.render() for op in hist]


# -- directory checking -------------------------------------------------------


def DW(tag, proc, invoke, response, num, cid, replicas=(1, 2)):
    ts = Timestamp(num, cid)
    return DirOpRecord(proc=proc, op="tswrite", tag=tag, invoke=invoke,
                       response=response, ts=ts,
                       md=Metadata(ts=ts, replicas=frozenset(replicas)))


def DR(tag, proc, invoke, response, num, cid, replicas=(1, 2)):
    ts = Timestamp(num, cid)
    md = None if ts == Timestamp(0, 0) else Metadata(ts=ts, replicas=frozenset(replicas))
    return DirOpRecord(proc=proc, op="tsread", tag=tag, invoke=invoke,
                       response=response, ts=ts, md=md)


def test_directory_initial_reads_then_writes():
    ops = [
        DR(1, "r1", 0, 5, 0, 0),
        DW(1, "w1", 10, 20, 1, 1),
        DR(2, "r1", 30, 40, 1, 1),
    ]
    assert check_directory_linearizable(ops).passed


def test_directory_write_with_an_old_timestamp_is_a_no_op():
    ops = [
        DW(1, "w2", 0, 5, 2, 2),
        DR(1, "r1", 10, 15, 2, 2),
        DW(1, "w1", 20, 25, 1, 1),  # superseded before it was invoked
        DR(2, "r1", 30, 35, 2, 2),  # still sees the newer state
    ]
    assert check_directory_linearizable(ops).passed


def test_directory_no_op_write_in_a_long_history():
    # the witness path (not the small exhaustive one) must place the
    # superseded write after the newer state it cannot overwrite
    ops = [DW(1, "w2", 0, 5, 5, 2)]
    t = 10
    for tag in range(2, 11):
        ops.append(DR(tag, "r1", t, t + 5, 5, 2))
        t += 10
    ops.append(DW(2, "w1", t, t + 5, 1, 1))  # stale no-op write, late arrival
    ops.append(DR(11, "r2", t + 10, t + 15, 5, 2))
    res = check_directory_linearizable(ops)
    assert res.passed, res.detail


def test_directory_vanishing_state_fails():
    ops = [
        DW(1, "w1", 0, 5, 1, 1),
        DR(1, "r1", 10, 15, 1, 1),
        DR(2, "r1", 20, 25, 0, 0),  # the directory cannot forget
    ]
    res = check_directory_linearizable(ops)
    assert res.passed is False


def test_directory_metadata_must_match_the_write():
    ops = [
        DW(1, "w1", 0, 5, 1, 1, replicas=(1, 2)),
        DR(1, "r1", 10, 15, 1, 1, replicas=(2, 3)),  # same ts, different payload
    ]
    assert check_directory_linearizable(ops).passed is False


# -- wait-freedom -------------------------------------------------------------


def test_wait_freedom_passes_when_everything_returns():
    hist = [W(1, "w1", b"a", 0, 10, 1, 1)]
    assert check_wait_freedom(hist, set(), budget=100, quiescent=True).passed


def test_wait_freedom_flags_blocked_operations():
    hist = [OpRecord(op_id=1, client="w1", kind="WRITE", arg=b"a", invoke=0)]
    res = check_wait_freedom(hist, set(), budget=100, quiescent=True)
    assert res.passed is False
    assert "blocked" in res.detail


def test_wait_freedom_ignores_crashed_clients():
    hist = [OpRecord(op_id=1, client="w1", kind="WRITE", arg=b"a", invoke=0)]
    assert check_wait_freedom(hist, {"w1"}, budget=100, quiescent=True).passed


def test_wait_freedom_flags_over_budget_operations():
    hist = [W(1, "w1", b"a", 0, 500, 1, 1)]
    res = check_wait_freedom(hist, set(), budget=100, quiescent=True)
    assert res.passed is False
    assert "budget" in res.detail


# -- lemma monitors -----------------------------------------------------------


def test_unique_write_timestamps_lemma():
    good = [W(1, "w1", b"a", 0, 10, 1, 1), W(2, "w2", b"b", 0, 10, 1, 2)]
    assert lemma_unique_write_timestamps(good).passed
    bad = [W(1, "w1", b"a", 0, 10, 1, 1), W(2, "w2", b"b", 0, 10, 1, 1)]
    res = lemma_unique_write_timestamps(bad)
    assert res.passed is False


def test_timestamp_order_lemma():
    good = [W(1, "w1", b"a", 0, 10, 1, 1), W(2, "w2", b"b", 20, 30, 2, 2)]
    assert lemma_timestamp_order(good).passed
    bad = [W(1, "w1", b"a", 0, 10, 2, 1), W(2, "w2", b"b", 20, 30, 1, 2)]
    assert lemma_timestamp_order(bad).passed is False


def test_read_sandwich_lemma():
    ok = R(1, "r1", b"a", 0, 10, 1, 1)
    assert lemma_read_sandwich([ok]).passed
    bad = R(2, "r1", b"a", 0, 10, 2, 1)
    bad.md_ts = Timestamp(1, 1)  # accepted a timestamp above the directory state
    assert lemma_read_sandwich([bad]).passed is False
    revalidated = R(3, "r1", b"a", 0, 10, 2, 1)
    revalidated.md_ts = Timestamp(1, 1)
    revalidated.md2_ts = Timestamp(2, 1)  # second directory read covers it
    assert lemma_read_sandwich([revalidated]).passed


def test_directory_monotone_lemma():
    ops = [
        DR(1, "r1", 0, 5, 2, 2),
        DR(2, "r1", 10, 15, 1, 1),  # observed timestamp went backwards
    ]
    assert lemma_directory_monotone(ops).passed is False
    assert lemma_directory_monotone(list(reversed(ops))).passed is False  # order-independent


def test_value_integrity_lemma():
    clients = {"w1": 1, "r1": 3}
    hist = [W(1, "w1", b"a", 0, 10, 1, 1), R(2, "r1", b"a", 20, 30, 1, 1)]
    assert lemma_value_integrity(hist, clients, collision_resistant=True).passed
    forged = [W(1, "w1", b"a", 0, 10, 1, 1), R(2, "r1", b"z", 20, 30, 1, 1)]
    res = lemma_value_integrity(forged, clients, collision_resistant=True)
    assert res.passed is False
    skipped = lemma_value_integrity(forged, clients, collision_resistant=False)
    assert skipped.passed is None


def test_value_integrity_checks_timestamp_ownership():
    clients = {"w1": 1, "r1": 3}
    hist = [W(1, "w1", b"a", 0, 10, 1, 2),  # timestamp branded with someone else
            R(2, "r1", b"a", 20, 30, 1, 2)]
    assert lemma_value_integrity(hist, clients, collision_resistant=True).passed is False


# -- whole-run verdicts -------------------------------------------------------


def test_check_run_passes_a_clean_simulation():
    verdict = check_run(run(Config(seed=17, ops=2)))
    assert verdict.ok
    assert verdict.results["value-integrity"].passed is True


def test_check_run_skips_integrity_when_digests_are_forgeable():
    verdict = check_run(run(Config(seed=17, ops=2, hash_mode="forgeable")))
    assert verdict.ok  # None is not a failure
    assert verdict.results["value-integrity"].passed is None


def test_random_history_generator_is_deterministic():
    a = [op.render() for op in random_history(random.Random("g"))]
    b = [op.render() for op in random_history(random.Random("g"))]
    assert a == b
