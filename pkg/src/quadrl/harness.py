"""Asynchronous rollout/trainer protocol: versioned replay buffer, schedule
validation, pre-start stage, and the worker loops.

Rollout workers fetch the latest policy checkpoint before each mesh (never
mid-generation), generate K sequences per condition, truncate each into
face-aligned windows, score them with the truncated reward, and push groups
tagged with the generating policy version. The trainer consumes groups of a
single version per batch: while producing checkpoint V+1 it trains only on
data generated by checkpoint V.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientDataError, StarvationTimeoutError
from .rl import (
    ArpoConfig,
    GroupSamples,
    ToyPolicy,
    arpo_gradient,
    policy_sample,
    sequence_logprob,
    sequence_logprob_grad,
    sgd_step,
    truncated_arpo_loss,
)

TOKENS_PER_FACE = 12


@dataclass(frozen=True)
class RolloutSample:
    condition_id: int
    tokens: np.ndarray
    window: tuple[int, int]  # (m, w), token offsets
    reward: float
    version: int
    group_id: int


@dataclass(frozen=True)
class ScheduleConfig:
    """Policy-update-frequency schedule.

    The buffer turnover ratio N_2*T*B/S_2 must sit in [sigma_min, sigma_max]
    and match the pre-start ratio N_1*T*B/S_1; S_1 > S_2 >= sigma.
    """

    n1: int
    n2: int
    trainer_workers: int  # T
    batch_size: int  # B, groups per trainer step
    s1: int
    s2: int
    sigma: int
    sigma_min: float = 8.0
    sigma_max: float = 64.0


@dataclass(frozen=True)
class ScheduleReport:
    valid: bool
    ratio: float
    violations: list[str]


def validate_schedule(cfg: ScheduleConfig, ratio_tol: float = 1e-9) -> ScheduleReport:
    """Check every schedule clause and report each violation."""
    violations = []
    ratio2 = cfg.n2 * cfg.trainer_workers * cfg.batch_size / cfg.s2
    ratio1 = cfg.n1 * cfg.trainer_workers * cfg.batch_size / cfg.s1
    if not cfg.n2 < cfg.n1:
        violations.append(f"N_2 ({cfg.n2}) must be < N_1 ({cfg.n1})")
    if ratio2 < cfg.sigma_min:
        violations.append(f"ratio {ratio2:.6g} below sigma_min {cfg.sigma_min}")
    if ratio2 > cfg.sigma_max:
        violations.append(f"ratio {ratio2:.6g} above sigma_max {cfg.sigma_max}")
    if abs(ratio2 - ratio1) > ratio_tol:
        violations.append(
            f"N_2*T*B/S_2 ({ratio2:.9g}) != N_1*T*B/S_1 ({ratio1:.9g})"
        )
    if not cfg.s1 > cfg.s2:
        violations.append(f"S_1 ({cfg.s1}) must be > S_2 ({cfg.s2})")
    if not cfg.s2 >= cfg.sigma:
        violations.append(f"S_2 ({cfg.s2}) must be >= sigma ({cfg.sigma})")
    return ScheduleReport(not violations, ratio2, violations)


class ReplayBuffer:
    """Bounded, versioned store of sample groups, safe for concurrent
    producers and consumers.

    Capacity is counted in samples. When full, whole groups of the oldest
    version are evicted first. discard(keep_version) removes everything below
    the watermark and rejects later pushes of stale versions.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._lock = threading.Lock()
        self._groups: list[tuple[int, list[RolloutSample]]] = []
        self._watermark = 0
        self.dropped_stale = 0
        self._not_empty = threading.Condition(self._lock)

    def __len__(self) -> int:
        with self._lock:
            return sum(len(g) for _, g in self._groups)

    def n_groups(self, version: int | None = None) -> int:
        with self._lock:
            return sum(1 for v, _ in self._groups if version is None or v == version)

    def push(self, group: list[RolloutSample]) -> bool:
        """Store one group atomically. Returns False for stale versions."""
        if not group:
            raise ValueError("empty group")
        versions = {s.version for s in group}
        conditions = {s.condition_id for s in group}
        if len(versions) != 1 or len(conditions) != 1:
            raise ValueError("group must share one version and condition id")
        version = versions.pop()
        with self._lock:
            if version < self._watermark:
                self.dropped_stale += 1
                return False
            self._groups.append((version, group))
            size = sum(len(g) for _, g in self._groups)
            while size > self.capacity and len(self._groups) > 1:
                oldest = min(v for v, _ in self._groups)
                for i, (v, g) in enumerate(self._groups):
                    if v == oldest:
                        size -= len(g)
                        del self._groups[i]
                        break
            self._not_empty.notify_all()
        return True

    def sample(
        self,
        target_version: int,
        count: int,
        seed: int = 0,
        timeout: float | None = None,
    ) -> list[list[RolloutSample]]:
        """Uniformly random distinct groups of exactly target_version.

        Blocks up to `timeout` seconds for enough data; timeout None raises
        InsufficientDataError immediately when short.
        """
        deadline = None if timeout is None else time.monotonic() + timeout
        rng = np.random.default_rng(seed)
        with self._lock:
            while True:
                pool = [g for v, g in self._groups if v == target_version]
                if len(pool) >= count:
                    idx = rng.choice(len(pool), size=count, replace=False)
                    return [pool[i] for i in idx]
                if deadline is None:
                    raise InsufficientDataError(
                        f"{len(pool)} groups at version {target_version}, need {count}"
                    )
                remaining = deadline - time.monotonic()
                if remaining <= 0 or not self._not_empty.wait(timeout=remaining):
                    raise StarvationTimeoutError(
                        f"timed out waiting for {count} groups at version {target_version}"
                    )

    def discard(self, keep_version: int) -> int:
        """Remove all groups below keep_version; raise the stale watermark."""
        with self._lock:
            before = len(self._groups)
            self._groups = [(v, g) for v, g in self._groups if v >= keep_version]
            self._watermark = max(self._watermark, keep_version)
            return before - len(self._groups)

    def wait_for_samples(self, count: int, timeout: float | None = None) -> None:
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._lock:
            while sum(len(g) for _, g in self._groups) < count:
                remaining = None if deadline is None else deadline - time.monotonic()
                if remaining is not None and remaining <= 0:
                    raise StarvationTimeoutError(f"buffer never reached {count} samples")
                self._not_empty.wait(timeout=remaining)


class PolicyStore:
    """Shared versioned checkpoint registry. Snapshots are immutable."""

    def __init__(self, policy: ToyPolicy, version: int = 0):
        self._lock = threading.Lock()
        self._version = version
        self._policy = policy
        self._history: dict[int, ToyPolicy] = {version: policy}

    def publish(self, policy: ToyPolicy, version: int) -> None:
        with self._lock:
            self._policy = policy
            self._version = version
            self._history[version] = policy

    def latest(self) -> tuple[ToyPolicy, int]:
        with self._lock:
            return self._policy, self._version

    def get(self, version: int) -> ToyPolicy:
        with self._lock:
            return self._history[version]


@dataclass
class RolloutConfig:
    group_size: int = 4  # K sequences per condition
    truncations: int = 4  # windows per group of sequences
    max_len: int = 96  # tokens per generated sequence
    window_len: int = 48  # maximum window length in tokens


def face_aligned_windows(
    lengths: list[int], truncations: int, window_len: int, rng: np.random.Generator
) -> list[tuple[int, int]]:
    """Random (m, w) windows aligned to 12-token face blocks, valid for every
    sequence length in `lengths`."""
    min_len = min(lengths)
    n_blocks = max(min_len // TOKENS_PER_FACE, 1)
    max_w_blocks = max(window_len // TOKENS_PER_FACE, 1)
    windows = []
    for _ in range(truncations):
        w_blocks = int(rng.integers(1, min(max_w_blocks, n_blocks) + 1))
        m_block = int(rng.integers(0, n_blocks - w_blocks + 1))
        windows.append((m_block * TOKENS_PER_FACE, w_blocks * TOKENS_PER_FACE))
    return windows


def rollout_worker_loop(
    store: PolicyStore,
    buffer: ReplayBuffer,
    evaluate_window,
    cfg: RolloutConfig,
    conditions: list[int],
    seed: int,
    stop: threading.Event,
) -> None:
    """Generate, truncate, score, and push until the stop flag is set.

    evaluate_window(condition_id, tokens, m, w) -> float reward; failures
    inside it must be handled by the evaluator (return 0), never crash the
    loop. The policy is fetched once per condition iteration, so every
    sequence of a group shares one version.
    """
    rng = np.random.default_rng(seed)
    group_counter = 0
    while not stop.is_set():
        condition_id = conditions[int(rng.integers(len(conditions)))]
        policy, version = store.latest()
        sequences = [
            policy_sample(policy, cfg.max_len, seed=int(rng.integers(2**31)))
            for _ in range(cfg.group_size)
        ]
        windows = face_aligned_windows(
            [len(s) for s in sequences], cfg.truncations, cfg.window_len, rng
        )
        for m, w in windows:
            group = []
            for seq in sequences:
                try:
                    reward = float(evaluate_window(condition_id, seq, m, w))
                except Exception:
                    reward = 0.0
                group.append(
                    RolloutSample(condition_id, seq, (m, w), reward, version, group_counter)
                )
            buffer.push(group)
            group_counter += 1


@dataclass
class TrainerResult:
    checkpoint_versions: list[int] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    consumed_versions: list[int] = field(default_factory=list)


def _train_step(
    policy: ToyPolicy,
    ref_policy: ToyPolicy,
    batch: list[list[RolloutSample]],
    arpo_cfg: ArpoConfig,
    lr: float,
) -> tuple[ToyPolicy, float]:
    """One optimizer step on a batch of groups (loss averaged over groups)."""
    total_grad = np.zeros_like(policy.logits)
    total_loss = 0.0
    used = 0
    for group in batch:
        pol_lp, ref_lp, rewards, grads = [], [], [], []
        for s in group:
            m, w = s.window
            pol_lp.append(sequence_logprob(policy, s.tokens, (m, w)))
            ref_lp.append(sequence_logprob(ref_policy, s.tokens, (m, w)))
            rewards.append(s.reward)
            grads.append(sequence_logprob_grad(policy, s.tokens, (m, w)))
        order = np.argsort(-np.asarray(rewards), kind="stable")
        gs = GroupSamples.ranked(pol_lp, ref_lp, rewards)
        total_loss += truncated_arpo_loss(gs, arpo_cfg)
        total_grad += arpo_gradient(gs, np.asarray(grads)[order], arpo_cfg)
        used += 1
    if used == 0:
        return policy, 0.0
    return sgd_step(policy, total_grad / used, lr), total_loss / used


def trainer_loop(
    store: PolicyStore,
    buffer: ReplayBuffer,
    ref_policy: ToyPolicy,
    schedule: ScheduleConfig,
    arpo_cfg: ArpoConfig,
    lr: float,
    max_checkpoints: int,
    seed: int = 0,
    timeout: float = 120.0,
    on_checkpoint=None,
) -> TrainerResult:
    """Pre-start stage then the asynchronous online loop.

    Waits for S_1 samples, trains N_1 steps on pre-start data, publishes
    checkpoint 1, and discards pre-start data. Each later phase runs N_2
    steps consuming only the previous checkpoint's data, then publishes the
    next checkpoint: checkpoint V+1 is trained on version-V rollouts.
    """
    report = validate_schedule(cfg=schedule)
    if not report.valid:
        raise ValueError("invalid schedule: " + "; ".join(report.violations))
    rng = np.random.default_rng(seed)
    result = TrainerResult()
    policy, _ = store.latest()

    buffer.wait_for_samples(schedule.s1, timeout=timeout)
    for _ in range(schedule.n1):
        batch = buffer.sample(0, schedule.batch_size, seed=int(rng.integers(2**31)), timeout=timeout)
        policy, loss = _train_step(policy, ref_policy, batch, arpo_cfg, lr)
        result.losses.append(loss)
        result.consumed_versions.append(0)
    version = 1
    store.publish(policy, version)
    result.checkpoint_versions.append(version)
    buffer.discard(keep_version=1)
    if on_checkpoint:
        on_checkpoint(policy, version)

    while version < max_checkpoints:
        for _ in range(schedule.n2):
            batch = buffer.sample(
                version, schedule.batch_size, seed=int(rng.integers(2**31)), timeout=timeout
            )
            policy, loss = _train_step(policy, ref_policy, batch, arpo_cfg, lr)
            result.losses.append(loss)
            result.consumed_versions.append(version)
        version += 1
        store.publish(policy, version)
        result.checkpoint_versions.append(version)
        buffer.discard(keep_version=version)
        if on_checkpoint:
            on_checkpoint(policy, version)
    return result
