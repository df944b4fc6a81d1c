import threading

import numpy as np
import pytest

from quadrl.errors import InsufficientDataError, StarvationTimeoutError
from quadrl.harness import (
    PolicyStore,
    ReplayBuffer,
    RolloutConfig,
    RolloutSample,
    ScheduleConfig,
    face_aligned_windows,
    rollout_worker_loop,
    trainer_loop,
    validate_schedule,
)
from quadrl.rl import ArpoConfig, ToyPolicy


def make_group(version, group_id, k=4, condition=0, reward=1.0):
    return [
        RolloutSample(condition, np.zeros(12, dtype=np.int64), (0, 12), reward + i, version, group_id)
        for i in range(k)
    ]


# --- schedule ----------------------------------------------------------------


def test_schedule_boundary_case_valid():
    cfg = ScheduleConfig(n1=2000, n2=100, trainer_workers=4, batch_size=2, s1=2000, s2=100, sigma=50)
    report = validate_schedule(cfg)
    assert report.valid and report.ratio == 8.0 and report.violations == []


def test_schedule_turnover_too_high():
    cfg = ScheduleConfig(n1=2000, n2=100, trainer_workers=4, batch_size=2, s1=2000, s2=12, sigma=5)
    report = validate_schedule(cfg)
    assert not report.valid
    assert report.ratio == pytest.approx(100 * 4 * 2 / 12)
    assert any("above sigma_max" in v for v in report.violations)


def test_schedule_requires_s1_above_s2():
    cfg = ScheduleConfig(n1=800, n2=100, trainer_workers=1, batch_size=8, s1=100, s2=100, sigma=50)
    report = validate_schedule(cfg)
    assert not report.valid
    assert any("S_1" in v for v in report.violations)


def test_schedule_checks_every_clause():
    # n2 >= n1, mismatched ratios, s2 < sigma all at once
    cfg = ScheduleConfig(n1=10, n2=20, trainer_workers=1, batch_size=8, s1=100, s2=10, sigma=50)
    report = validate_schedule(cfg)
    assert not report.valid and len(report.violations) >= 3


# --- replay buffer -----------------------------------------------------------


def test_buffer_push_and_sample_by_version():
    buf = ReplayBuffer(capacity=100)
    buf.push(make_group(0, 0))
    buf.push(make_group(1, 1))
    buf.push(make_group(1, 2))
    assert len(buf) == 12
    assert buf.n_groups() == 3 and buf.n_groups(1) == 2
    batch = buf.sample(1, 2, seed=0)
    assert len(batch) == 2
    assert {s.version for g in batch for s in g} == {1}


def test_buffer_sample_insufficient_raises():
    buf = ReplayBuffer(capacity=100)
    buf.push(make_group(0, 0))
    with pytest.raises(InsufficientDataError):
        buf.sample(0, 2)
    with pytest.raises(StarvationTimeoutError):
        buf.sample(0, 2, timeout=0.05)


def test_buffer_discard_sets_stale_watermark():
    buf = ReplayBuffer(capacity=100)
    buf.push(make_group(0, 0))
    buf.push(make_group(1, 1))
    removed = buf.discard(keep_version=1)
    assert removed == 1 and buf.n_groups() == 1
    assert not buf.push(make_group(0, 2))  # stale, rejected
    assert buf.dropped_stale == 1
    assert buf.push(make_group(1, 3))


def test_buffer_evicts_oldest_version_first():
    buf = ReplayBuffer(capacity=8)  # two 4-sample groups
    buf.push(make_group(0, 0))
    buf.push(make_group(1, 1))
    buf.push(make_group(1, 2))  # over capacity: version-0 group goes
    assert buf.n_groups(0) == 0 and buf.n_groups(1) == 2


def test_buffer_group_validation():
    buf = ReplayBuffer(capacity=10)
    with pytest.raises(ValueError):
        buf.push([])
    mixed = make_group(0, 0, k=2) + make_group(1, 0, k=2)
    with pytest.raises(ValueError):
        buf.push(mixed)
    with pytest.raises(ValueError):
        ReplayBuffer(capacity=0)


def test_buffer_concurrent_producers_consumers():
    buf = ReplayBuffer(capacity=400)
    errors = []
    n_push = 500

    def producer(pid):
        try:
            for i in range(n_push):
                buf.push(make_group(0, pid * n_push + i))
        except Exception as exc:  # pragma: no cover
            errors.append(exc)

    def consumer(cid):
        try:
            for i in range(200):
                try:
                    batch = buf.sample(0, 4, seed=cid * 1000 + i, timeout=2.0)
                except StarvationTimeoutError:
                    continue
                assert len(batch) == 4
                ids = [g[0].group_id for g in batch]
                assert len(set(ids)) == 4  # distinct groups
        except Exception as exc:  # pragma: no cover
            errors.append(exc)

    threads = [threading.Thread(target=producer, args=(p,)) for p in range(4)]
    threads += [threading.Thread(target=consumer, args=(c,)) for c in range(2)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
    assert len(buf) <= 400


# --- policy store ------------------------------------------------------------


def test_policy_store_versions():
    p0, p1 = ToyPolicy.uniform(3), ToyPolicy.uniform(3)
    store = PolicyStore(p0, version=0)
    assert store.latest() == (p0, 0)
    store.publish(p1, 1)
    assert store.latest() == (p1, 1)
    assert store.get(0) is p0


# --- windows -----------------------------------------------------------------


def test_face_aligned_windows_properties():
    rng = np.random.default_rng(0)
    for _ in range(100):
        windows = face_aligned_windows([96, 120], truncations=4, window_len=48, rng=rng)
        assert len(windows) == 4
        for m, w in windows:
            assert m % 12 == 0 and w % 12 == 0
            assert 12 <= w <= 48
            assert m + w <= 96


# --- end-to-end loop ---------------------------------------------------------


def _tiny_schedule():
    # ratio = 10*1*4/5 = 8 = 50*1*4/25
    return ScheduleConfig(n1=50, n2=10, trainer_workers=1, batch_size=4, s1=25, s2=5, sigma=5)


def test_trainer_loop_version_semantics():
    """Checkpoint V+1 must consume only version-V data; versions increase."""
    vocab = 4
    store = PolicyStore(ToyPolicy.uniform(vocab), version=0)
    buf = ReplayBuffer(capacity=200)
    stop = threading.Event()

    def reward_fn(cid, tokens, m, w):
        # favor token 1 in the window
        return float(np.mean(tokens[m : m + w] == 1))

    worker = threading.Thread(
        target=rollout_worker_loop,
        args=(store, buf, reward_fn, RolloutConfig(max_len=48), [0], 123, stop),
        daemon=True,
    )
    worker.start()
    try:
        result = trainer_loop(
            store,
            buf,
            ref_policy=ToyPolicy.uniform(vocab),
            schedule=_tiny_schedule(),
            arpo_cfg=ArpoConfig(beta=0.5, group_size=4),
            lr=0.2,
            max_checkpoints=3,
            seed=0,
            timeout=30.0,
        )
    finally:
        stop.set()
        worker.join(timeout=5.0)

    assert result.checkpoint_versions == [1, 2, 3]
    sched = _tiny_schedule()
    # pre-start: n1 steps on version 0; each later phase: n2 steps on V
    expected = [0] * sched.n1 + [1] * sched.n2 + [2] * sched.n2
    assert result.consumed_versions == expected
    assert len(result.losses) == len(expected)
    # the loop should actually push the policy toward the rewarded token
    final, version = store.latest()
    assert version == 3
    probs = np.exp(final.log_probs())
    assert probs[:, 1].mean() > 0.25 + 0.05  # above the uniform baseline


def test_trainer_loop_rejects_invalid_schedule():
    store = PolicyStore(ToyPolicy.uniform(3), version=0)
    bad = ScheduleConfig(n1=10, n2=100, trainer_workers=1, batch_size=1, s1=2, s2=1, sigma=5)
    with pytest.raises(ValueError):
        trainer_loop(store, ReplayBuffer(10), ToyPolicy.uniform(3), bad, ArpoConfig(), 0.1, 1)


def test_rollout_loop_survives_evaluator_crash():
    store = PolicyStore(ToyPolicy.uniform(3), version=0)
    buf = ReplayBuffer(capacity=50)
    stop = threading.Event()

    def bad_eval(cid, tokens, m, w):
        raise RuntimeError("boom")

    worker = threading.Thread(
        target=rollout_worker_loop,
        args=(store, buf, bad_eval, RolloutConfig(max_len=24), [0], 7, stop),
        daemon=True,
    )
    worker.start()
    buf.wait_for_samples(8, timeout=10.0)
    stop.set()
    worker.join(timeout=5.0)
    batch = buf.sample(0, 1, seed=0)
    assert all(s.reward == 0.0 for s in batch[0])
