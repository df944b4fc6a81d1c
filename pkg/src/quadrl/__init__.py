"""Diagonal-aware mesh tokenization, geometric/topological rewards, and an
asynchronous ranking-preference RL harness at desk scale."""

from .errors import QuadRLError
from .mesh import (
    Mesh,
    QuantizedMesh,
    build_edge_adjacency,
    canonicalize,
    dequantize_vertices,
    normalize_mesh,
    quantize_vertices,
)
from .tokenizer import (
    TokenSequence,
    detokenize,
    read_qtok,
    serialize_face,
    tokenize,
    validate_tokens,
    write_qtok,
)
from .geometry import (
    Ray,
    RayHit,
    TriangulatedView,
    chamfer_distance,
    f1_score,
    hausdorff_distance,
    normal_consistency,
    orthogonal_ray_grid,
    sample_surface_points,
)
from .rewards import (
    RewardConfig,
    RewardReport,
    compute_reward,
    count_bad_faces,
    quad_flow_analysis,
    truncated_reward,
    windowed_rewards,
)
from .metrics import BrokenCheckConfig, broken_check, broken_ratio, quad_ratio
from .rl import (
    ArpoConfig,
    GroupSamples,
    ToyPolicy,
    advantages,
    arpo_gradient,
    arpo_gradient_pairwise,
    arpo_loss,
    dpo_loss,
    fit_policy,
    pl_ranking_logprob,
    policy_sample,
    sequence_logprob,
    truncated_arpo_loss,
)
from .harness import (
    PolicyStore,
    ReplayBuffer,
    RolloutSample,
    ScheduleConfig,
    trainer_loop,
    validate_schedule,
)
from .simulate import LengthDistribution, simulate_throughput, speedup
from .toytask import ToyTaskConfig, train_toy

__version__ = "0.1.0"

__all__ = [
    "QuadRLError",
    "Mesh",
    "QuantizedMesh",
    "build_edge_adjacency",
    "canonicalize",
    "dequantize_vertices",
    "normalize_mesh",
    "quantize_vertices",
    "TokenSequence",
    "detokenize",
    "read_qtok",
    "serialize_face",
    "tokenize",
    "validate_tokens",
    "write_qtok",
    "Ray",
    "RayHit",
    "TriangulatedView",
    "chamfer_distance",
    "f1_score",
    "hausdorff_distance",
    "normal_consistency",
    "orthogonal_ray_grid",
    "sample_surface_points",
    "RewardConfig",
    "RewardReport",
    "compute_reward",
    "count_bad_faces",
    "quad_flow_analysis",
    "truncated_reward",
    "windowed_rewards",
    "BrokenCheckConfig",
    "broken_check",
    "broken_ratio",
    "quad_ratio",
    "ArpoConfig",
    "GroupSamples",
    "ToyPolicy",
    "advantages",
    "arpo_gradient",
    "arpo_gradient_pairwise",
    "arpo_loss",
    "dpo_loss",
    "fit_policy",
    "pl_ranking_logprob",
    "policy_sample",
    "sequence_logprob",
    "truncated_arpo_loss",
    "PolicyStore",
    "ReplayBuffer",
    "RolloutSample",
    "ScheduleConfig",
    "trainer_loop",
    "validate_schedule",
    "LengthDistribution",
    "simulate_throughput",
    "speedup",
    "ToyTaskConfig",
    "train_toy",
]
