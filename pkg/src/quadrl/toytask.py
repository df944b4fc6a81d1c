"""Desk-scale end-to-end RL task: a bigram token policy trained with the
asynchronous ranking-preference loop against the real reward stack.

The condition is a single closed procedural mesh at very low bit depth. The
policy is pretrained on the condition's own token sequence, then the
rollout/trainer protocol sharpens it: windows whose faces decode into clean
quad structure outscore windows full of malformed blocks.

The toy reward configuration disables the ray gate (theta_ray = inf) and
loosens the distance gate; at this scale almost no sampled mesh is watertight,
so the paper-strength gates would zero out every rollout and leave no
learning signal. The full-strength gates are exercised by the fixture-based
reward checks instead.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NoAreaError
from .geometry import TriangulatedView, hausdorff_distance, sample_surface_points
from .harness import (
    PolicyStore,
    ReplayBuffer,
    RolloutConfig,
    ScheduleConfig,
    TrainerResult,
    rollout_worker_loop,
    trainer_loop,
)
from .mesh import Mesh, canonicalize, dequantize_vertices, normalize_mesh, quantize_vertices
from .rewards import RewardConfig, count_bad_faces, quad_flow_analysis
from .rl import ArpoConfig, ToyPolicy, fit_policy, policy_sample, save_checkpoint
from .shapes import box
from .tokenizer import BLOCK, TokenSequence, detokenize, tokenize


def _toy_reward_config() -> RewardConfig:
    # theta_hd spans the whole normalized box (diagonal ~3.29): at toy scale
    # the distance gate only rejects sequences that decode to no surface at
    # all, and the ray gate is off entirely -- see the class docstring.
    return RewardConfig(
        theta_ray=float("inf"),
        theta_hd=3.4,
        per_axis=4,
        sample_count=256,
    )


@dataclass
class ToyTaskConfig:
    bits: int = 2
    order: int = 1
    group_size: int = 8
    truncations: int = 4
    max_len: int = 240
    window_len: int = 48
    rollout_workers: int = 3
    checkpoints: int = 5
    lr: float = 1.5
    beta: float = 0.05
    pretrain_alpha: float = 0.05
    eval_samples: int = 512
    eval_seed: int = 2024
    seed: int = 0
    timeout: float = 120.0
    buffer_headroom: int = 4  # buffer capacity as a multiple of max(S_1, S_2)
    # schedule: N_2*T*B/S_2 = 32*1*8/32 = 8 = N_1*T*B/S_1, inside [8, 64]
    n1: int = 64
    n2: int = 32
    batch_size: int = 8
    s1: int = 64
    s2: int = 32
    sigma: int = 16
    reward: RewardConfig = field(default_factory=_toy_reward_config)

    @property
    def vocab_size(self) -> int:
        return 3 * (1 << self.bits) + 1

    def schedule(self) -> ScheduleConfig:
        return ScheduleConfig(
            n1=self.n1,
            n2=self.n2,
            trainer_workers=1,
            batch_size=self.batch_size,
            s1=self.s1,
            s2=self.s2,
            sigma=self.sigma,
        )


@dataclass(frozen=True)
class ToyCondition:
    mesh: Mesh  # normalized condition surface
    tokens: np.ndarray  # canonical token sequence
    points: np.ndarray  # surface point cloud for the distance gate


def make_condition(cfg: ToyTaskConfig, n_points: int = 512) -> ToyCondition:
    """Closed box condition, quantized at the toy bit depth."""
    mesh = normalize_mesh(box())
    qmesh, _ = canonicalize(quantize_vertices(mesh, cfg.bits))
    seq = tokenize(qmesh)
    surface = dequantize_vertices(qmesh)
    points = sample_surface_points(TriangulatedView(surface), n_points, seed=cfg.eval_seed)
    return ToyCondition(surface, seq.tokens, points)


class ToyEvaluator:
    """Window-reward callback for rollout workers, thread-safe.

    All windows of one sequence share the expensive full-mesh work
    (detokenization, ray casting, Hausdorff), so it is computed once per
    sequence and memoized.
    """

    def __init__(self, condition: ToyCondition, cfg: ToyTaskConfig):
        self.condition = condition
        self.cfg = cfg
        self._lock = threading.Lock()
        self._cache: dict[bytes, tuple] = {}

    def _sequence_context(self, tokens: np.ndarray):
        key = tokens.tobytes()
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        rcfg = self.cfg.reward
        result = detokenize(TokenSequence(tokens, self.cfg.bits), "permissive")
        ctx = None
        if result.mesh.n_faces > 0:
            mesh = dequantize_vertices(result.mesh)
            view = TriangulatedView(mesh)
            try:
                samples = sample_surface_points(view, rcfg.sample_count, seed=0)
            except NoAreaError:
                samples = None
            if samples is not None:
                if np.isfinite(rcfg.theta_ray):
                    bad = count_bad_faces(mesh, view, rcfg, seed=0)
                else:
                    bad = set()
                d_hd = hausdorff_distance(self.condition.points, samples)
                ctx = (mesh, result.face_blocks, bad, d_hd)
        with self._lock:
            if len(self._cache) > 512:
                self._cache.clear()
            self._cache[key] = ctx
        return ctx

    def __call__(self, condition_id: int, tokens: np.ndarray, m: int, w: int) -> float:
        report = self.window_report(tokens, m, w)
        return report["total"]

    def window_report(self, tokens: np.ndarray, m: int, w: int) -> dict:
        ctx = self._sequence_context(np.asarray(tokens, dtype=np.int64))
        if ctx is None:
            return {"total": 0.0, "gated": False, "n_qr": 0, "n_ql": 0, "n_bf": 0, "d_hd": float("inf")}
        mesh, face_blocks, bad, d_hd = ctx
        lo_block, hi_block = m // BLOCK, (m + w) // BLOCK
        window_ids = [i for i, b in enumerate(face_blocks) if lo_block <= b < hi_block]
        rcfg = self.cfg.reward
        if not window_ids:
            return {"total": 0.0, "gated": False, "n_qr": 0, "n_ql": 0, "n_bf": 0, "d_hd": d_hd}
        n_bf = len(bad & set(window_ids))
        sub = Mesh(mesh.vertices, [mesh.faces[i] for i in window_ids])
        n_qr, n_ql = quad_flow_analysis(sub)
        gated = n_bf < rcfg.theta_ray and d_hd < rcfg.theta_hd
        total = rcfg.w_qr * n_qr + n_ql**2 if gated else 0.0
        return {"total": total, "gated": gated, "n_qr": n_qr, "n_ql": n_ql, "n_bf": n_bf, "d_hd": d_hd}


def evaluate_policy(
    policy: ToyPolicy, evaluator: ToyEvaluator, cfg: ToyTaskConfig, seed: int
) -> dict:
    """Deterministic policy evaluation: mean full-sequence gated reward and
    gate pass rate over a fixed batch of samples."""
    rng = np.random.default_rng(seed)
    totals, gated, rings, lines = [], [], [], []
    for _ in range(cfg.eval_samples):
        seq = policy_sample(policy, cfg.max_len, seed=int(rng.integers(2**31)))
        report = evaluator.window_report(seq, 0, len(seq) - len(seq) % BLOCK)
        totals.append(report["total"])
        gated.append(report["gated"])
        rings.append(report["n_qr"])
        lines.append(report["n_ql"])
    return {
        "mean_reward": float(np.mean(totals)),
        "gate_pass_rate": float(np.mean(gated)),
        "mean_quad_rings": float(np.mean(rings)),
        "mean_quad_lines": float(np.mean(lines)),
        "n_eval": cfg.eval_samples,
    }


def train_toy(cfg: ToyTaskConfig = ToyTaskConfig(), outdir: str | Path | None = None) -> dict:
    """Run the full asynchronous loop on the toy task.

    Returns per-checkpoint metrics (checkpoint 1 through cfg.checkpoints),
    each from the same deterministic evaluation batch. With an outdir, every
    checkpoint's policy and metrics are also written to disk.
    """
    out = Path(outdir) if outdir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    condition = make_condition(cfg)
    pretrained = fit_policy(
        [condition.tokens], cfg.vocab_size, order=cfg.order, alpha=cfg.pretrain_alpha
    )
    store = PolicyStore(pretrained, version=0)
    buffer = ReplayBuffer(capacity=cfg.buffer_headroom * max(cfg.s1, cfg.s2))
    evaluator = ToyEvaluator(condition, cfg)
    rollout_cfg = RolloutConfig(
        group_size=cfg.group_size,
        truncations=cfg.truncations,
        max_len=cfg.max_len,
        window_len=cfg.window_len,
    )

    stop = threading.Event()
    workers = [
        threading.Thread(
            target=rollout_worker_loop,
            args=(store, buffer, evaluator, rollout_cfg, [0], cfg.seed + 1000 * (w + 1), stop),
            daemon=True,
        )
        for w in range(cfg.rollout_workers)
    ]
    for t in workers:
        t.start()

    metrics: list[dict] = []

    def on_checkpoint(policy: ToyPolicy, version: int) -> None:
        entry = {"checkpoint": version}
        entry.update(evaluate_policy(policy, evaluator, cfg, cfg.eval_seed))
        metrics.append(entry)
        if out is not None:
            save_checkpoint(policy, version, out / f"policy_{version:03d}.tpol")
            (out / f"metrics_{version:03d}.json").write_text(json.dumps(entry, indent=2))

    try:
        result: TrainerResult = trainer_loop(
            store,
            buffer,
            ref_policy=pretrained,
            schedule=cfg.schedule(),
            arpo_cfg=ArpoConfig(beta=cfg.beta, group_size=cfg.group_size),
            lr=cfg.lr,
            max_checkpoints=cfg.checkpoints,
            seed=cfg.seed,
            timeout=cfg.timeout,
            on_checkpoint=on_checkpoint,
        )
    finally:
        stop.set()
        for t in workers:
            t.join(timeout=10.0)

    summary = {
        "checkpoints": metrics,
        "losses": result.losses,
        "consumed_versions": result.consumed_versions,
        "dropped_stale_groups": buffer.dropped_stale,
    }
    if out is not None:
        (out / "summary.json").write_text(json.dumps(summary, indent=2))
    return summary
