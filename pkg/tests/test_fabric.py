from __future__ import annotations

import itertools
import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from typeforge.errors import (
    DeadlockDetected, InvalidPid, MismatchedMode, ReadOnlySlot, SelfChannel, UnknownSlot,
)
from typeforge.fabric import KINDS, NOT_READY, Fabric, spawn


def totals(f: Fabric) -> dict[str, int]:
    return {k: v["messages"] for k, v in f.metrics.snapshot()["messages"].items()}


# -- spawning ---------------------------------------------------------------------


def test_spawn_single_process():
    f = spawn(1, 0)
    f.register(0, "x", 5)
    assert f.one_sided_get(0, 0, "x") == 5
    assert f.reduce_sum(0, 2.5) == 2.5
    f.barrier(0)
    assert f.metrics.total_messages() == 0


def test_spawn_eight():
    f = spawn(8, 42)
    assert f.process_count == 8 and f.seed == 42
    assert all(v == 0 for v in totals(f).values())
    assert f.pending_messages() == 0 and all(w == {} for w in f.windows)


def test_spawn_rejects_zero():
    with pytest.raises(ValueError):
        spawn(0, 0)


# -- the PGAS window -------------------------------------------------------------


def test_remote_get_counts_one_message():
    f = spawn(4)
    f.register(3, "b", 7, kind="Int")
    assert f.one_sided_get(1, 3, "b") == 7
    snap = f.metrics.snapshot()["messages"]["one_sided"]
    assert snap == {"messages": 1, "bytes": 4}
    assert f.one_sided_get(3, 3, "b") == 7
    assert f.metrics.snapshot()["messages"]["one_sided"]["messages"] == 1


def test_get_errors():
    f = spawn(2)
    with pytest.raises(UnknownSlot):
        f.one_sided_get(0, 1, "nothing")
    with pytest.raises(InvalidPid):
        f.one_sided_get(0, 2, "nothing")
    with pytest.raises(InvalidPid):
        f.one_sided_get(-1, 0, "nothing")


def test_put_then_get():
    f = spawn(2)
    f.register(1, "x", 0.0)
    f.one_sided_put(0, 1, "x", 9.0)
    assert f.one_sided_get(0, 1, "x") == 9.0
    f.one_sided_put(1, 1, "x", 3.0)
    assert totals(f)["one_sided"] == 2  # the owner's own put is free
    assert f.metrics.snapshot()["messages"]["one_sided"]["bytes"] == 16


def test_put_to_read_only_slot():
    f = spawn(2)
    f.register(1, "c", 1, kind="Int", readonly=True)
    with pytest.raises(ReadOnlySlot):
        f.one_sided_put(0, 1, "c", 2)
    f.one_sided_put(0, 1, "c", 2, writable=True)
    assert f.local_slot(1, "c").value == 2


# -- channels ---------------------------------------------------------------------


def test_channel_transfer_delivers():
    f = spawn(4)
    got = f.run(lambda pid: f.channel_transfer(pid, 3, 1, 42 if pid == 3 else None) if pid in (1, 3) else None)
    assert got[1] == 42 and got[3] == 42
    assert totals(f)["channel"] == 1
    k = f.metrics.kinds["channel"]
    assert k.sends == k.receives == 1


def test_channel_is_a_rendezvous():
    f = spawn(2)
    events = []

    def body(pid):
        if pid == 0:
            f.channel_send(0, 1, "v")
            events.append("send returned")
        else:
            for _ in range(5):
                f.checkpoint(1)
            events.append("receiving")
            assert f.channel_recv(1, 0) == "v"

    f.run(body)
    assert events.index("receiving") < events.index("send returned")


def test_self_channel_rejected():
    f = spawn(2)
    with pytest.raises(SelfChannel):
        f.channel_transfer(0, 1, 1, 5)


@pytest.mark.parametrize("free", [False, True])
def test_cross_wait_is_a_deadlock(free):
    f = spawn(2, free_running=free)
    with pytest.raises(DeadlockDetected) as info:
        f.run(lambda pid: f.channel_recv(pid, 1 - pid))
    assert "pid 0" in str(info.value) and "pid 1" in str(info.value)


def test_direct_wait_outside_run_is_a_deadlock():
    f = spawn(2)
    with pytest.raises(DeadlockDetected):
        f.recv(0, 1, "channel")


# -- reductions and barriers -------------------------------------------------------


def test_blocking_reduction():
    f = spawn(4)
    assert f.run(lambda pid: f.reduce_sum(pid, pid)) == [6.0] * 4
    # three contributions in, three results out
    assert totals(f)["reduction"] == 6


def test_reduction_order_is_by_pid():
    values = [1e16, 1.0, -1e16, 1.0]
    expected = ((values[0] + values[1]) + values[2]) + values[3]
    for seed in range(5):
        f = spawn(4, seed)
        assert f.run(lambda pid: f.reduce_sum(pid, values[pid])) == [expected] * 4


def test_nonblocking_reduction_waits_for_laggard():
    f = spawn(2)
    seen = []

    def body(pid):
        if pid == 0:
            h = f.reduce_sum(0, 1.0, blocking=False)
            seen.append(f.poll(h))
            f.send(0, 1, "channel", "go", 0, "go")
            while (v := f.poll(h)) is NOT_READY:
                pass
            return v
        f.recv(1, 0, "channel", "go")
        h = f.reduce_sum(1, 2.0, blocking=False)
        return f.wait(h)

    assert f.run(body) == [3.0, 3.0]
    assert seen == [NOT_READY]


def test_mismatched_reduction_modes():
    f = spawn(2)
    with pytest.raises(MismatchedMode):
        f.run(lambda pid: f.reduce_sum(pid, 1.0, blocking=pid == 0) if pid == 0 else f.wait(f.reduce_sum(pid, 1.0, blocking=False)))


def test_barrier():
    f = spawn(2)
    order = []

    def body(pid):
        if pid == 1:
            for _ in range(4):
                f.checkpoint(1)
        order.append(("in", pid))
        f.barrier(pid)
        order.append(("out", pid))

    f.run(body)
    last_in = max(i for i, e in enumerate(order) if e[0] == "in")
    first_out = min(i for i, e in enumerate(order) if e[0] == "out")
    assert last_in < first_out
    spawn(1).barrier(0)


def test_missing_barrier_participant_deadlocks():
    f = spawn(3)
    with pytest.raises(DeadlockDetected):
        f.run(lambda pid: f.barrier(pid) if pid != 2 else None)


# -- properties ---------------------------------------------------------------------


bursts = st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)).filter(lambda t: t[0] != t[1]), max_size=30)


@settings(max_examples=40)
@given(burst=bursts, seed=st.integers(0, 1000), free=st.booleans())
def test_fifo_per_pair(burst, seed, free):
    f = spawn(3, seed, free_running=free)
    expected = {(s, d): [n for n, (s2, d2) in enumerate(burst) if (s2, d2) == (s, d)] for s, d in set(burst)}

    def body(pid):
        for n, (s, d) in enumerate(burst):
            if s == pid:
                f.send(s, d, "channel", n, 8, "m")
        got = {}
        for s in range(3):
            want = len(expected.get((s, pid), []))
            got[s] = [f.recv(pid, s, "channel").payload for _ in range(want)]
        return got

    results = f.run(body)
    for (s, d), seq in expected.items():
        assert results[d][s] == seq
    k = f.metrics.kinds["channel"]
    assert k.sends == k.receives == len(burst)
    assert k.bytes == 8 * k.messages
    assert f.pending_messages() == 0


def _linearizable(history, initial) -> bool:
    """Brute force: some order respecting real time explains every get."""
    n = len(history)

    def search(done: frozenset, value) -> bool:
        if len(done) == n:
            return True
        pending = [i for i in range(n) if i not in done]
        for i in pending:
            start = history[i][0]
            # an op may go first only if no other pending op finished before it began
            if any(history[j][1] < start for j in pending if j != i):
                continue
            _, _, op, arg, result = history[i]
            if op == "get" and result != value:
                continue
            if search(done | {i}, arg if op == "put" else value):
                return True
        return False

    return search(frozenset(), initial)


ops = st.lists(st.lists(st.one_of(st.just(("get", None)), st.integers(1, 9).map(lambda v: ("put", v))), max_size=3),
               min_size=2, max_size=3)


@settings(max_examples=40)
@given(script=ops, seed=st.integers(0, 100), free=st.booleans())
def test_window_ops_are_linearizable(script, seed, free):
    procs = len(script)
    f = spawn(procs, seed, free_running=free)
    f.register(0, "x", 0)
    clock = itertools.count()
    tick = threading.Lock()
    history = []

    def now():
        with tick:
            return next(clock)

    def body(pid):
        for op, arg in script[pid]:
            start = now()
            if op == "get":
                result = f.one_sided_get(pid, 0, "x")
            else:
                f.one_sided_put(pid, 0, "x", arg)
                result = None
            end = now()
            with tick:
                history.append((start, end, op, arg, result))

    f.run(body)
    assert _linearizable(history, 0)


def _program(f: Fabric):
    def body(pid):
        n = f.process_count
        f.register(pid, "v", float(pid))
        f.barrier(pid)
        total = f.one_sided_get(pid, (pid + 1) % n, "v")
        f.send(pid, (pid + 1) % n, "channel", total, 8, "ring")
        f.recv(pid, (pid - 1) % n, "channel")
        return f.reduce_sum(pid, total)

    return body


@pytest.mark.parametrize("seed", [0, 7, 123])
def test_same_seed_same_trace(seed):
    logs = []
    for _ in range(2):
        f = spawn(4, seed, trace=True)
        f.run(_program(f))
        logs.append((f.metrics.trace_lines(), f.metrics.snapshot()))
    assert logs[0] == logs[1]
    assert logs[0][0]


def test_trace_line_format():
    f = spawn(2, trace=True)
    f.register(1, "x", 1.0)
    f.one_sided_get(0, 1, "x")
    (line,) = f.metrics.trace_lines()
    seq, src, dst, kind, nbytes, tag = line.split(" ")
    assert (seq, src, dst, kind, nbytes) == ("1", "1", "0", "one_sided", "8")


def test_counters_are_monotone():
    f = spawn(3, 5)
    snaps = []

    def body(pid):
        for step in range(3):
            f.reduce_sum(pid, 1.0)
            if pid == 0:
                with f.lock:
                    snaps.append(f.metrics.snapshot())

    f.run(body)
    for a, b in zip(snaps, snaps[1:]):
        for k in KINDS:
            assert b["messages"][k]["messages"] >= a["messages"][k]["messages"]
            assert b["messages"][k]["bytes"] >= a["messages"][k]["bytes"]
