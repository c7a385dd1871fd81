import random
import threading

import pytest

from satnet.errors import StaleWatchError, ValidationError, WatchOverflowError
from satnet.statestore import ApplicationRecord, StateStore


def test_first_put_is_revision_one():
    assert StateStore().put("nodes/a", {"x": 1}) == 1


def test_last_write_wins():
    s = StateStore()
    r1 = s.put("nodes/a", 1)
    r2 = s.put("nodes/a", 2)
    assert r1 < r2
    assert s.get("nodes/a") == (2, r2)


def test_absent_key():
    assert StateStore().get("links/none") is None


@pytest.mark.parametrize("key", ["", "a", "nodes/", "node/x", "/nodes/x", 5])
def test_bad_namespace(key):
    with pytest.raises(ValidationError):
        StateStore().put(key, 1)


def test_concurrent_puts_gap_free():
    s = StateStore()
    revs, lock = [], threading.Lock()

    def writer(i):
        r = s.put(f"links/k{i}", i)
        with lock:
            revs.append(r)

    threads = [threading.Thread(target=writer, args=(i,)) for i in range(100)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert sorted(revs) == list(range(1, 101))


def test_prefix_scan_against_model():
    s = StateStore()
    model = {}
    for key in ("links/c", "links/a", "nodes/a", "links/b"):
        s.put(key, {"k": key})
        model[key] = {"k": key}
    got = s.get_prefix("links/")
    assert [k for k, _, _ in got] == ["links/a", "links/b", "links/c"]
    assert all(v == model[k] for k, v, _ in got)


def test_canonical_encoding():
    s = StateStore()
    s.put("apps/x", {"b": 1, "a": [1, 2]})
    s.put("apps/y", {"a": [1, 2], "b": 1})
    h = s.history("apps/")
    assert h[0].value == h[1].value == '{"a":[1,2],"b":1}'


def test_watch_then_put():
    s = StateStore()
    w = s.watch("nodes/")
    s.put("nodes/a", 1)
    s.put("links/a", 1)
    (ev,) = w.drain()
    assert (ev.key, ev.kind, ev.decoded(), ev.revision) == ("nodes/a", "put", 1, 1)


def test_watch_replays_history_first():
    s = StateStore()
    s.put("nodes/a", "old")
    w = s.watch("nodes/", from_revision=1)
    s.put("nodes/a", "new")
    assert [e.decoded() for e in w.drain()] == ["old", "new"]


def test_watch_from_revision_bounds():
    s = StateStore()
    s.put("nodes/a", 1)
    with pytest.raises(ValidationError):
        s.watch("nodes/", from_revision=3)
    with pytest.raises(ValidationError):
        s.watch("nodes/", from_revision=0)
    s.watch("nodes/", from_revision=2)


def test_delete_semantics():
    s = StateStore()
    w = s.watch("links/")
    before = s.revision
    assert s.delete("links/missing") == before
    assert w.drain() == []
    s.put("links/x", 1)
    r = s.delete("links/x")
    assert r == s.revision == before + 2
    assert s.get("links/x") is None
    assert [e.kind for e in w.drain()] == ["put", "delete"]


def test_interleaved_log_replay():
    s = StateStore()
    watchers = {p: s.watch(p, from_revision=1) for p in ("links/", "links/a", "nodes/")}
    rng = random.Random(5)
    for _ in range(300):
        key = rng.choice(["links/a", "links/b", "nodes/a"])
        if rng.random() < 0.3:
            s.delete(key)
        else:
            s.put(key, rng.randint(0, 9))
    log = s.history()
    for prefix, w in watchers.items():
        assert w.drain() == [e for e in log if e.key.startswith(prefix)]


def test_compaction_makes_old_watch_stale():
    s = StateStore()
    for i in range(10):
        s.put("nodes/a", i)
    s.compact(6)
    with pytest.raises(StaleWatchError):
        s.watch("nodes/", from_revision=3)
    w = s.watch("nodes/", from_revision=7)
    assert [e.revision for e in w.drain()] == [7, 8, 9, 10]
    assert s.get("nodes/a").value == 9


def test_overflow_is_reported_and_writer_not_blocked():
    s = StateStore()
    w = s.watch("nodes/", capacity=3)
    for i in range(10):
        s.put("nodes/a", i)
    assert s.revision == 10
    with pytest.raises(WatchOverflowError):
        w.drain()
    with pytest.raises(WatchOverflowError):
        w.get(timeout=0)


def test_get_timeout_and_close():
    s = StateStore()
    w = s.watch("nodes/")
    assert w.get(timeout=0.01) is None
    s.put("nodes/a", 1)
    w.close()
    s.put("nodes/b", 1)
    assert list(w) == [e for e in s.history("nodes/a")]


def test_blocking_watcher_sees_later_writes():
    s = StateStore()
    got = []
    with s.watch("apps/") as w:
        def consume():
            for _ in range(5):
                got.append(w.get(timeout=5).decoded())
        t = threading.Thread(target=consume)
        t.start()
        for i in range(5):
            s.put(f"apps/{i}", i)
        t.join(5)
    assert got == [0, 1, 2, 3, 4]


def test_read_your_writes_per_session():
    s = StateStore()
    errors = []

    def session(i):
        for j in range(200):
            r = s.put(f"nodes/s{i}", j)
            got = s.get(f"nodes/s{i}")
            if got.value != j or got.revision < r:
                errors.append((i, j))

    threads = [threading.Thread(target=session, args=(i,)) for i in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert errors == []


def test_application_record():
    rec = ApplicationRecord("app", "gs-a", 0.0, user_defined={"k": "v"})
    assert rec.to_dict()["user_defined"] == {"k": "v"}
    with pytest.raises(ValidationError):
        ApplicationRecord("app", "gs-a", -1.0)
