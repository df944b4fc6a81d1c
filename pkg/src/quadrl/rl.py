"""Ranking-preference RL mathematics and the toy autoregressive policy.

The loss ranks a group of K samples by reward and minimizes an
advantage-weighted negative log Plackett-Luce ranking probability of the
implicit rewards s_i = beta * (log pi_theta(y_i) - log pi_ref(y_i)). At
group size 2 with distinct rewards it reduces exactly to the DPO loss.

All arithmetic stays in the log domain (logsumexp), never raw exponentials.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import (
    NonFiniteLogProbError,
    ShapeMismatchError,
    TokenOutOfVocabError,
    WindowOutOfRangeError,
)


@dataclass(frozen=True)
class ArpoConfig:
    beta: float = 1.0
    eps: float = 1e-8  # advantage denominator guard
    group_size: int = 4

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.group_size < 2:
            raise ValueError("group size must be >= 2")


@dataclass(frozen=True)
class GroupSamples:
    """K samples for one condition, sorted by descending reward.

    Ties keep the original sample order (stable sort); tied samples receive
    equal advantages, so the loss does not depend on their relative order.
    """

    policy_logprobs: np.ndarray
    ref_logprobs: np.ndarray
    rewards: np.ndarray
    windows: list[tuple[int, int]] | None = None  # (m, w) per sample, optional

    def __post_init__(self):
        pol = np.asarray(self.policy_logprobs, dtype=np.float64).ravel()
        ref = np.asarray(self.ref_logprobs, dtype=np.float64).ravel()
        rew = np.asarray(self.rewards, dtype=np.float64).ravel()
        if not (len(pol) == len(ref) == len(rew)):
            raise ShapeMismatchError("group arrays must share a length")
        if not (np.isfinite(pol).all() and np.isfinite(ref).all()):
            raise NonFiniteLogProbError("log-probabilities must be finite")
        object.__setattr__(self, "policy_logprobs", pol)
        object.__setattr__(self, "ref_logprobs", ref)
        object.__setattr__(self, "rewards", rew)

    @classmethod
    def ranked(cls, policy_logprobs, ref_logprobs, rewards, windows=None) -> "GroupSamples":
        """Build a group sorted by descending reward (stable for ties)."""
        rew = np.asarray(rewards, dtype=np.float64).ravel()
        order = np.argsort(-rew, kind="stable")
        return cls(
            np.asarray(policy_logprobs, dtype=np.float64)[order],
            np.asarray(ref_logprobs, dtype=np.float64)[order],
            rew[order],
            [windows[i] for i in order] if windows is not None else None,
        )

    @property
    def k(self) -> int:
        return len(self.rewards)

    def scores(self, beta: float) -> np.ndarray:
        """Implicit-reward scores s_i = beta * (log pi_theta - log pi_ref)."""
        return beta * (self.policy_logprobs - self.ref_logprobs)


def advantages(rewards: np.ndarray, eps: float = 1e-8) -> np.ndarray:
    """Min-subtracted, sum-normalized reward weights.

    A^(k) = (R^(k) - min R) / (sum_k (R^(k) - min R) + eps). All entries are
    non-negative, the minimum-reward entry gets 0, and equal rewards give an
    all-zero vector.

    eps only guards the all-equal case; with distinct rewards the advantages
    sum to exactly 1, so the two-sample degeneration reproduces the pairwise
    preference loss bit-for-bit.
    """
    r = np.asarray(rewards, dtype=np.float64).ravel()
    diff = r - r.min()
    total = diff.sum()
    return diff / (total if total > 0.0 else eps)


def _suffix_logsumexp(s: np.ndarray) -> np.ndarray:
    """out[i] = logsumexp(s[i:])."""
    out = np.empty_like(s)
    acc = -np.inf
    for i in range(len(s) - 1, -1, -1):
        acc = np.logaddexp(acc, s[i])
        out[i] = acc
    return out


def pl_ranking_logprob(group: GroupSamples, beta: float = 1.0) -> float:
    """Log Plackett-Luce probability of the group's ranking:
    sum_k [ s_k - logsumexp_{j>=k}(s_j) ]."""
    s = group.scores(beta)
    return float((s - _suffix_logsumexp(s)).sum())


def arpo_loss(group: GroupSamples, cfg: ArpoConfig = ArpoConfig()) -> float:
    """Advantage-weighted negative ranking log-probability:
    -sum_i A^(i) [ s_i - logsumexp_{j>=i}(s_j) ]."""
    s = group.scores(cfg.beta)
    a = advantages(group.rewards, cfg.eps)
    return float(-(a * (s - _suffix_logsumexp(s))).sum())


def dpo_loss(winner_logratio: float, loser_logratio: float, beta: float = 1.0) -> float:
    """-log sigmoid(beta * (winner - loser)), computed stably."""
    x = beta * (winner_logratio - loser_logratio)
    return float(np.logaddexp(0.0, -x))


def arpo_gradient(
    group: GroupSamples, sample_grads: np.ndarray, cfg: ArpoConfig = ArpoConfig()
) -> np.ndarray:
    """Exact parameter gradient of arpo_loss.

    sample_grads[i] is the gradient of log pi_theta(y_i) with respect to the
    policy parameters (any shape; the first axis indexes samples).

    Differentiating the suffix-logsumexp form gives
        -beta * sum_i A^(i) * (g_i - sum_{j>=i} p_ij g_j)
    with p_ij = softmax over the rank-i suffix. This is the
    finite-difference-verified ground truth; see arpo_gradient_pairwise for
    the pairwise-sigmoid variant.
    """
    grads = np.asarray(sample_grads, dtype=np.float64)
    if len(grads) != group.k:
        raise ShapeMismatchError(f"{len(grads)} gradients for K={group.k}")
    s = group.scores(cfg.beta)
    a = advantages(group.rewards, cfg.eps)
    out = np.zeros_like(grads[0])
    for i in range(group.k):
        if a[i] == 0.0:
            continue
        suffix = s[i:]
        p = np.exp(suffix - logsumexp(suffix))
        expected = np.tensordot(p, grads[i:], axes=(0, 0))
        out += a[i] * (grads[i] - expected)
    return -cfg.beta * out


def arpo_gradient_pairwise(
    group: GroupSamples, sample_grads: np.ndarray, cfg: ArpoConfig = ArpoConfig()
) -> np.ndarray:
    """Pairwise-sigmoid gradient form:
    -beta * sum_{i<j} A^(i) sigma(-beta Delta_ij) (g_i - g_j).

    For K = 2 this coincides with arpo_gradient; for K > 2 the pairwise
    sigmoid replaces the full suffix softmax and the two forms differ. Use
    gradient_form_discrepancy to quantify the gap.
    """
    grads = np.asarray(sample_grads, dtype=np.float64)
    if len(grads) != group.k:
        raise ShapeMismatchError(f"{len(grads)} gradients for K={group.k}")
    logratio = group.policy_logprobs - group.ref_logprobs
    a = advantages(group.rewards, cfg.eps)
    out = np.zeros_like(grads[0])
    for i in range(group.k - 1):
        for j in range(i + 1, group.k):
            delta = logratio[i] - logratio[j]
            sig = 1.0 / (1.0 + np.exp(cfg.beta * delta))  # sigma(-beta * delta)
            out += a[i] * sig * (grads[i] - grads[j])
    return -cfg.beta * out


def gradient_form_discrepancy(
    group: GroupSamples, sample_grads: np.ndarray, cfg: ArpoConfig = ArpoConfig()
) -> float:
    """Max-norm gap between the exact and pairwise gradient forms."""
    exact = arpo_gradient(group, sample_grads, cfg)
    pairwise = arpo_gradient_pairwise(group, sample_grads, cfg)
    return float(np.abs(exact - pairwise).max())


def truncated_arpo_loss(group: GroupSamples, cfg: ArpoConfig = ArpoConfig()) -> float:
    """ARPO loss over window-restricted log-probabilities.

    The group's log-probs must already be sums over the tokens of each
    sample's (m, w) window; the functional form is unchanged, so the full
    window specializes to arpo_loss.
    """
    return arpo_loss(group, cfg)


# --- toy autoregressive policy ----------------------------------------------


@dataclass(frozen=True)
class ToyPolicy:
    """Softmax table policy: unigram (order 0) or bigram (order 1).

    For order 1 the logits table has vocab_size + 1 rows; the extra last row
    is the fixed start context used for the first token.
    """

    vocab_size: int
    order: int
    logits: np.ndarray

    def __post_init__(self):
        logits = np.asarray(self.logits, dtype=np.float64)
        expected = (self.n_contexts, self.vocab_size)
        if logits.shape != expected:
            raise ShapeMismatchError(f"logits shape {logits.shape}, expected {expected}")
        if not np.isfinite(logits).all():
            raise NonFiniteLogProbError("logits must be finite")
        object.__setattr__(self, "logits", logits)

    @property
    def n_contexts(self) -> int:
        return 1 if self.order == 0 else self.vocab_size + 1

    @classmethod
    def uniform(cls, vocab_size: int, order: int = 1) -> "ToyPolicy":
        n_ctx = 1 if order == 0 else vocab_size + 1
        return cls(vocab_size, order, np.zeros((n_ctx, vocab_size)))

    def _context(self, tokens: np.ndarray, t: int) -> int:
        if self.order == 0:
            return 0
        return self.vocab_size if t == 0 else int(tokens[t - 1])

    def log_probs(self) -> np.ndarray:
        """Per-context log distribution (softmax of each logits row)."""
        return self.logits - logsumexp(self.logits, axis=1, keepdims=True)

    @property
    def params(self) -> np.ndarray:
        """Flat parameter view for gradient arithmetic."""
        return self.logits.ravel()


def _check_window(window, length: int) -> tuple[int, int]:
    if window is None:
        return 0, length
    m, w = window
    if m < 0 or w < 0 or m + w > length:
        raise WindowOutOfRangeError(f"window ({m}, {w}) outside sequence of length {length}")
    return m, w


def sequence_logprob(
    policy: ToyPolicy, tokens: np.ndarray, window: tuple[int, int] | None = None
) -> float:
    """Sum of log p(token_t | context) over the window (default: all tokens)."""
    tokens = np.asarray(tokens, dtype=np.int64).ravel()
    if len(tokens) and (tokens.min() < 0 or tokens.max() >= policy.vocab_size):
        raise TokenOutOfVocabError("token outside policy vocabulary")
    m, w = _check_window(window, len(tokens))
    lp = policy.log_probs()
    total = 0.0
    for t in range(m, m + w):
        total += lp[policy._context(tokens, t), tokens[t]]
    return float(total)


def sequence_logprob_grad(
    policy: ToyPolicy, tokens: np.ndarray, window: tuple[int, int] | None = None
) -> np.ndarray:
    """Gradient of sequence_logprob with respect to the logits table."""
    tokens = np.asarray(tokens, dtype=np.int64).ravel()
    if len(tokens) and (tokens.min() < 0 or tokens.max() >= policy.vocab_size):
        raise TokenOutOfVocabError("token outside policy vocabulary")
    m, w = _check_window(window, len(tokens))
    probs = np.exp(policy.log_probs())
    grad = np.zeros_like(policy.logits)
    for t in range(m, m + w):
        ctx = policy._context(tokens, t)
        grad[ctx] -= probs[ctx]
        grad[ctx, tokens[t]] += 1.0
    return grad


def policy_sample(
    policy: ToyPolicy,
    max_len: int,
    stop_rule=None,
    seed: int = 0,
) -> np.ndarray:
    """Autoregressive categorical sampling; deterministic for a fixed seed.

    stop_rule, if given, is called with the tokens generated so far and may
    return True to stop early.
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    rng = np.random.default_rng(seed)
    probs = np.exp(policy.log_probs())
    out: list[int] = []
    tokens = np.zeros(max_len, dtype=np.int64)
    for t in range(max_len):
        ctx = policy._context(tokens, t)
        tok = int(rng.choice(policy.vocab_size, p=probs[ctx]))
        tokens[t] = tok
        out.append(tok)
        if stop_rule is not None and stop_rule(out):
            break
    return np.array(out, dtype=np.int64)


def sgd_step(policy: ToyPolicy, gradient: np.ndarray, lr: float) -> ToyPolicy:
    """Pure descent update producing a new policy snapshot."""
    gradient = np.asarray(gradient, dtype=np.float64)
    if gradient.shape != policy.logits.shape:
        raise ShapeMismatchError(
            f"gradient shape {gradient.shape} vs logits {policy.logits.shape}"
        )
    return ToyPolicy(policy.vocab_size, policy.order, policy.logits - lr * gradient)


def nll(policy: ToyPolicy, sequences: list[np.ndarray]) -> float:
    """Mean autoregressive negative log-likelihood over sequences."""
    return float(-np.mean([sequence_logprob(policy, s) for s in sequences]))


def fit_policy(
    sequences: list[np.ndarray], vocab_size: int, order: int = 1, alpha: float = 0.1
) -> ToyPolicy:
    """Maximum-likelihood fit of the table policy on token sequences,
    smoothed with a pseudo-count alpha (logits = log(count + alpha))."""
    n_ctx = 1 if order == 0 else vocab_size + 1
    counts = np.zeros((n_ctx, vocab_size))
    for seq in sequences:
        seq = np.asarray(seq, dtype=np.int64).ravel()
        for t, tok in enumerate(seq):
            ctx = 0 if order == 0 else (vocab_size if t == 0 else int(seq[t - 1]))
            counts[ctx, tok] += 1.0
    return ToyPolicy(vocab_size, order, np.log(counts + alpha))


# --- checkpoint serialization ------------------------------------------------
#
# Header: magic "TPOL", format u16, vocab u32, order u16, version u32,
# little-endian, followed by the row-major float64 logits table.

_CKPT_MAGIC = b"TPOL"
_CKPT_HEADER = struct.Struct("<4sHIHI")


def save_checkpoint(policy: ToyPolicy, version: int, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_CKPT_HEADER.pack(_CKPT_MAGIC, 1, policy.vocab_size, policy.order, version))
        fh.write(policy.logits.astype("<f8").tobytes())


def load_checkpoint(path) -> tuple[ToyPolicy, int]:
    with open(path, "rb") as fh:
        magic, fmt, vocab, order, version = _CKPT_HEADER.unpack(fh.read(_CKPT_HEADER.size))
        if magic != _CKPT_MAGIC or fmt != 1:
            raise ValueError("not a policy checkpoint file")
        n_ctx = 1 if order == 0 else vocab + 1
        data = np.frombuffer(fh.read(), dtype="<f8").reshape(n_ctx, vocab)
    return ToyPolicy(vocab, order, data.copy()), version
