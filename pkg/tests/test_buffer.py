"""Ring buffer: round trips, FIFO eviction, age bookkeeping."""

import collections

import numpy as np
import pytest

from plastic_replay.buffer import ReplayBuffer, TimestampedTransition
from plastic_replay.errors import EmptyBufferError, OrderingError


def make_tr(t, payload=0.0):
    return TimestampedTransition(
        state=np.array([payload, t]),
        action=t % 3,
        reward=float(payload),
        next_state=np.array([payload + 1, t]),
        done=bool(t % 2),
        timestamp=t,
    )


class TestPush:
    def test_first_insertion(self):
        buf = ReplayBuffer(4)
        assert buf.push(make_tr(0)) == 0
        assert len(buf) == 1

    def test_fifo_eviction(self):
        buf = ReplayBuffer(2)
        for t in range(3):
            buf.push(make_tr(t))
        assert len(buf) == 2
        assert list(buf.timestamps()) == [1, 2]

    def test_non_monotone_rejected(self):
        buf = ReplayBuffer(4)
        buf.push(make_tr(5))
        with pytest.raises(OrderingError):
            buf.push(make_tr(4))

    def test_equal_timestamp_allowed(self):
        buf = ReplayBuffer(4)
        buf.push(make_tr(5))
        buf.push(make_tr(5))
        assert len(buf) == 2

    def test_negative_timestamp_rejected(self):
        buf = ReplayBuffer(4)
        with pytest.raises(OrderingError):
            buf.push(make_tr(-1))

    def test_million_monotone_pushes(self):
        # Counting oracle over a scripted insertion log: after n monotone
        # pushes into capacity n, everything is live and nothing evicted.
        n = 1_000_000
        buf = ReplayBuffer(n)
        obs = np.zeros(1)
        for t in range(n):
            buf.push(TimestampedTransition(obs, 0, 0.0, obs, False, t))
        assert len(buf) == n
        ts = buf.timestamps()
        assert ts[0] == 0 and ts[-1] == n - 1
        assert buf.pushes == n

    def test_global_step_tracks_newest(self):
        buf = ReplayBuffer(4)
        buf.push(make_tr(7))
        assert buf.global_step == 7


class TestGet:
    def test_round_trip(self):
        buf = ReplayBuffer(4)
        tr = make_tr(0, payload=3.5)
        buf.push(tr)
        got = buf.get(0)
        assert np.array_equal(got.state, tr.state)
        assert got.action == tr.action
        assert got.reward == tr.reward
        assert np.array_equal(got.next_state, tr.next_state)
        assert got.done == tr.done
        assert got.timestamp == tr.timestamp

    def test_out_of_range(self):
        buf = ReplayBuffer(4)
        buf.push(make_tr(0))
        with pytest.raises(IndexError):
            buf.get(1)
        with pytest.raises(IndexError):
            buf.get(-1)

    def test_fuzz_against_shadow_deque(self):
        rng = np.random.default_rng(0)
        buf = ReplayBuffer(17)
        shadow = collections.deque(maxlen=17)
        for t in range(500):
            tr = make_tr(t, payload=float(rng.random()))
            buf.push(tr)
            shadow.append(tr)
            probe = int(rng.integers(len(buf)))
            assert buf.get(probe) is shadow[probe]

    def test_eviction_order_is_timestamp_order(self):
        rng = np.random.default_rng(1)
        buf = ReplayBuffer(8)
        seen = []
        t = 0
        for _ in range(100):
            t += int(rng.integers(1, 5))
            buf.push(make_tr(t))
            seen.append(t)
        expected = sorted(seen)[-8:]
        assert list(buf.timestamps()) == expected


class TestAges:
    def test_direct_subtraction(self):
        buf = ReplayBuffer(8)
        for t in (0, 5, 9):
            buf.push(make_tr(t))
        assert list(buf.ages(9)) == [9, 4, 0]

    def test_zero_age(self):
        buf = ReplayBuffer(8)
        buf.push(make_tr(4))
        assert list(buf.ages(4)) == [0]

    def test_now_before_newest_rejected(self):
        buf = ReplayBuffer(8)
        buf.push(make_tr(10))
        with pytest.raises(ValueError):
            buf.ages(9)

    def test_empty_buffer_rejected(self):
        with pytest.raises(EmptyBufferError):
            ReplayBuffer(8).ages(0)

    def test_wrapped_ring_matches_log_replay(self):
        # Replay the same insertion log into an unbounded list and keep the
        # tail; ages must agree entry for entry.
        rng = np.random.default_rng(2)
        cap = 13
        buf = ReplayBuffer(cap)
        log = []
        t = 0
        for _ in range(200):
            t += int(rng.integers(1, 4))
            buf.push(make_tr(t))
            log.append(t)
        now = t + 3
        expected = [now - x for x in log[-cap:]]
        assert list(buf.ages(now)) == expected

    def test_non_increasing_and_non_negative(self):
        rng = np.random.default_rng(3)
        buf = ReplayBuffer(30)
        t = 0
        for _ in range(75):
            t += int(rng.integers(1, 6))
            buf.push(make_tr(t))
        ages = buf.ages(t)
        assert np.all(ages >= 0)
        assert np.all(np.diff(ages) <= 0)
