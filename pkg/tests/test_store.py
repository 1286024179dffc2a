import shutil

import pytest
from hypothesis import given, settings
from hypothesis import strategies as hst

from cogmem import store as st
from cogmem.errors import CorruptJournal, StoreUnavailable
from cogmem.store import ContextStore, FaultInjector, SimulatedCrash


def open_store(path, **kw):
    kw.setdefault("fsync", False)
    return ContextStore(path, **kw)


def promote_three():
    return [st.put(st.DURABLE, f"ltm/u/r{i}", {"content": f"record {i}"}) for i in range(3)]


def seed(path):
    s = open_store(path)
    s.put("meta/next_record", 1)
    s.put("turn/000001", {"text": "hello"}, ns=st.session_ns("s1"))
    s.close()


def test_fresh_store_recovers_empty(tmp_path):
    s = open_store(tmp_path / "d")
    assert (s.recovery.replayed, s.recovery.discarded) == (0, 0)
    assert s.commit([]) == 0


def test_sequence_numbers_are_gapless(tmp_path):
    s = open_store(tmp_path / "d")
    seqs = [s.put(f"k{i}", i) for i in range(5)]
    assert seqs == [1, 2, 3, 4, 5]
    assert s.commit([st.Batch.of(st.Op.PUT, [st.put(st.DURABLE, "a", 1)])] * 3) == 8


def test_five_entries_replay_as_five(tmp_path):
    s = open_store(tmp_path / "d")
    for i in range(5):
        s.put(f"k{i}", i)
    s.close()
    again = open_store(tmp_path / "d")
    assert again.recovery.replayed == 5
    assert again.get("k4") == 4


def test_torn_tail_is_discarded(tmp_path):
    s = open_store(tmp_path / "d")
    for i in range(5):
        s.put(f"k{i}", i)
    prefix = s.durable_bytes()
    s.put("k5", 5)
    s.close()
    journal = tmp_path / "d" / st.JOURNAL_FILE
    data = journal.read_bytes()
    journal.write_bytes(data[:-3])
    again = open_store(tmp_path / "d")
    assert again.recovery.discarded == 1
    assert again.recovery.replayed == 5
    assert again.durable_bytes() == prefix
    # the tail was truncated, so later writes land on a clean boundary
    again.put("k9", 9)
    again.close()
    assert open_store(tmp_path / "d").get("k9") == 9


def test_damaged_middle_entry_is_corruption(tmp_path):
    s = open_store(tmp_path / "d")
    for i in range(3):
        s.put(f"k{i}", "x" * 20)
    s.close()
    journal = tmp_path / "d" / st.JOURNAL_FILE
    data = bytearray(journal.read_bytes())
    data[15] ^= 0xFF  # inside the first body
    journal.write_bytes(bytes(data))
    with pytest.raises(CorruptJournal):
        open_store(tmp_path / "d")


def test_unsupported_format_version_is_rejected(tmp_path):
    open_store(tmp_path / "d").snapshot()
    (tmp_path / "d" / st.MANIFEST_FILE).write_text("format_version 99\nsnapshot_sequence 0\n")
    with pytest.raises(CorruptJournal):
        open_store(tmp_path / "d")


def test_snapshot_plus_journal_equals_uninterrupted_state(tmp_path):
    live = open_store(tmp_path / "d", snapshot_every=4)
    for i in range(10):
        live.put(f"k{i % 3}", i)
        live.put(f"s{i}", i, ns=st.session_ns("a"))
    live.commit([st.Batch.of(st.Op.PURGE, [st.purge(st.session_ns("a"))])])
    expected = live.durable_bytes(), live.state_bytes()
    live.close()
    again = open_store(tmp_path / "d")
    assert again.recovery.snapshot_sequence > 0
    assert (again.durable_bytes(), again.state_bytes()) == expected


def test_update_of_missing_key_is_rejected_before_writing(tmp_path):
    s = open_store(tmp_path / "d")
    size = s.journal_path.stat().st_size
    with pytest.raises(KeyError):
        s.commit([st.Batch.of(st.Op.UPDATE, [st.update(st.DURABLE, "nope", 1)])])
    assert s.journal_path.stat().st_size == size


def test_purging_one_session_leaves_others(tmp_path):
    s = open_store(tmp_path / "d")
    s.put("t", 1, ns=st.session_ns("A"))
    s.put("t", 2, ns=st.session_ns("B"))
    s.put("keep", 3)
    s.synchronize("A", [])
    assert s.scan(ns=st.session_ns("A")) == []
    assert s.get("t", st.session_ns("B")) == 2
    assert s.get("keep") == 3
    # again on an already purged session: fine
    s.synchronize("A", [])


def test_synchronize_is_one_promote_batch(tmp_path):
    s = open_store(tmp_path / "d")
    s.put("t", 1, ns=st.session_ns("A"))
    seq = s.synchronize("A", promote_three())
    s.close()
    data = (tmp_path / "d" / st.JOURNAL_FILE).read_bytes()
    entries, _, torn = st.scan_journal(data)
    last = entries[-1][0]
    assert (last.sequence_no, last.operation, torn) == (seq, st.Op.PROMOTE_BATCH, 0)
    assert [m.kind for m in last.payload] == ["put", "put", "put", "purge"]


def test_write_failure_raises_unavailable_and_leaves_state(tmp_path):
    seed(tmp_path / "d")
    s = open_store(tmp_path / "d", faults=FaultInjector(fail_after_bytes=7))
    before = s.state_bytes()
    with pytest.raises(StoreUnavailable):
        s.synchronize("s1", promote_three())
    assert s.state_bytes() == before
    s.faults = None
    s.synchronize("s1", promote_three())  # retry works in place
    assert s.count("ltm/") == 3


def test_read_only_open_changes_no_files(tmp_path):
    seed(tmp_path / "d")
    journal = tmp_path / "d" / st.JOURNAL_FILE
    journal.write_bytes(journal.read_bytes() + b"CJ\x00")  # torn bytes
    before = {p.name: p.read_bytes() for p in (tmp_path / "d").iterdir()}
    ro = open_store(tmp_path / "d", read_only=True)
    assert ro.recovery.discarded == 1
    with pytest.raises(StoreUnavailable):
        ro.put("x", 1)
    assert {p.name: p.read_bytes() for p in (tmp_path / "d").iterdir()} == before


# ------------------------------------------------------- crash injection


def batch_sizes(tmp_path, batches):
    """Journal bytes that committing ``batches`` writes on the seed state."""
    probe = tmp_path / "probe"
    seed(probe)
    faults = FaultInjector()
    s = open_store(probe, faults=faults)
    s.commit(batches)
    post = s.durable_bytes(), s.state_bytes()
    s.close()
    return faults.write_boundaries, post


def crash_outcomes(tmp_path, batches):
    """Cut the commit after every possible byte count and classify what
    recovery finds: 'pre', 'post' or 'partial'."""
    boundaries, post = batch_sizes(tmp_path, batches)
    base = tmp_path / "base"
    seed(base)
    pre_store = open_store(base, read_only=True)
    pre = pre_store.durable_bytes(), pre_store.state_bytes()
    seen = {}
    for cut in range(0, boundaries[-1] + 1):
        work = tmp_path / f"cut{cut}"
        shutil.copytree(base, work)
        s = open_store(work, faults=FaultInjector(crash_after_bytes=cut))
        crashed = False
        try:
            s.commit(batches)
        except SimulatedCrash:
            crashed = True
        state = (lambda r: (r.durable_bytes(), r.state_bytes()))(open_store(work))
        seen[cut] = ("pre" if state == pre else "post" if state == post else "partial", crashed)
        shutil.rmtree(work)
    return boundaries, seen


def test_every_cut_of_a_promote_batch_is_all_or_nothing(tmp_path):
    boundaries, seen = crash_outcomes(tmp_path, [st.Batch.of(st.Op.PROMOTE_BATCH, [*promote_three(), st.purge(st.session_ns("s1"))])])
    assert all(kind != "partial" for kind, _ in seen.values())
    total = boundaries[-1]
    assert seen[total] == ("post", False)
    assert all(seen[c][0] == "pre" for c in range(total))


def test_every_cut_of_a_multi_entry_commit_is_all_or_nothing(tmp_path):
    batches = [st.Batch.of(st.Op.PUT, [m]) for m in promote_three()]
    boundaries, seen = crash_outcomes(tmp_path, batches)
    assert len(boundaries) == 6  # header and body per entry
    assert {kind for kind, _ in seen.values()} == {"pre", "post"}
    assert all(seen[c][0] == "pre" for c in range(boundaries[-1]))


def test_crash_after_flush_before_apply_recovers_full_batch(tmp_path):
    seed(tmp_path / "d")
    s = open_store(tmp_path / "d", faults=FaultInjector(crash_at="after_flush"))
    with pytest.raises(SimulatedCrash):
        s.synchronize("s1", promote_three())
    assert s.count("ltm/") == 0  # not applied in memory
    again = open_store(tmp_path / "d")
    assert again.count("ltm/") == 3
    assert again.scan(ns=st.session_ns("s1")) == []


@pytest.mark.parametrize("point", ["after_snapshot", "after_manifest"])
def test_crash_during_snapshot_loses_nothing(tmp_path, point):
    s = open_store(tmp_path / "d", snapshot_every=1000)
    for i in range(6):
        s.put(f"k{i}", i)
    expected = s.durable_bytes()
    s.faults = FaultInjector(crash_at=point)
    with pytest.raises(SimulatedCrash):
        s.snapshot()
    assert open_store(tmp_path / "d").durable_bytes() == expected


ops = hst.lists(
    hst.tuples(hst.sampled_from(["put", "delete", "purge_session", "put_session"]), hst.integers(0, 4), hst.integers(0, 99)),
    max_size=25,
)


@settings(max_examples=40, deadline=None)
@given(ops, hst.integers(1, 6))
def test_replay_equivalence_under_random_workloads(tmp_path_factory, workload, snap_every):
    path = tmp_path_factory.mktemp("w")
    s = open_store(path, snapshot_every=snap_every)
    for kind, k, v in workload:
        if kind == "put":
            s.put(f"k{k}", v)
        elif kind == "put_session":
            s.put(f"k{k}", v, ns=st.session_ns(f"s{k % 2}"))
        elif kind == "delete":
            s.commit([st.Batch.of(st.Op.PUT, [st.delete(st.DURABLE, f"k{k}")])])
        else:
            s.synchronize(f"s{k % 2}", [])
    expected = s.state_bytes()
    s.close()
    assert open_store(path).state_bytes() == expected
