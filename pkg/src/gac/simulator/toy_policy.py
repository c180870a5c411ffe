"""Tabular toy policy with GRPO-style rollouts and exact gradients.

Each prompt has ``seq_len`` positions with an independent categorical over
``vocab_size`` tokens, parameterized by logits ``theta[prompt, position,
token]``.  The reward compares a sampled sequence with a per-prompt target
pattern (by default 1 when at least ``reward_threshold`` positions match,
else 0, so whole groups can tie and carry no signal).  The expert
demonstration agrees with that pattern except on a ``disagreement``
fraction of positions, which is what makes the SFT and RL gradients pull
apart.

Losses follow the descent convention:

    L_r = -1/(N T) sum_i sum_t A_i log pi(a_it)
    L_s = -1/(M T) sum_j sum_t w_jt log pi(e_jt),   w_jt = phi(pi(e_jt)) held fixed
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..proxies import TokenCoefficients, phi
from .common import StepSample

ADV_EPS = 1e-8


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def group_advantages(rewards, eps: float = ADV_EPS) -> np.ndarray:
    """``(R - mean) / (std + eps)`` within one group; a zero-spread group gets zeros."""
    r = np.asarray(rewards, dtype=float)
    if np.ptp(r) == 0:
        return np.zeros_like(r)
    return (r - r.mean()) / (r.std() + eps)


@dataclass
class RolloutBatch:
    prompts: np.ndarray  # (N,)
    seqs: np.ndarray  # (N, T)
    rewards: np.ndarray  # (N,)
    advantages: np.ndarray  # (N,)
    sft_prompts: np.ndarray  # (M,)


@dataclass
class ToyPolicyProblem:
    vocab_size: int = 6
    seq_len: int = 5
    n_prompts: int = 12
    group_size: int = 8
    prompts_per_batch: int = 4
    sft_batch: int = 16
    disagreement: float = 0.3
    init_scale: float = 1.0
    expert_boost: float = 3.0
    reward: str = "threshold"
    reward_threshold: int | None = None
    instance_seed: int = 0
    kl_scale: float = 0.1
    ref_logits: np.ndarray = field(init=False, repr=False)
    expert: np.ndarray = field(init=False, repr=False)
    target: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.group_size < 2:
            raise ValueError("group_size must be >= 2 for group normalization")
        if self.vocab_size < 2 or self.seq_len < 1 or self.n_prompts < 1:
            raise ValueError("vocab_size >= 2, seq_len >= 1 and n_prompts >= 1 required")
        if not 0.0 <= self.disagreement <= 1.0:
            raise ValueError("disagreement must lie in [0, 1]")
        if self.reward not in ("pattern", "exact", "threshold"):
            raise ValueError("reward must be 'pattern', 'exact' or 'threshold'")
        if self.reward_threshold is None:
            self.reward_threshold = max(1, self.seq_len - 1)
        if self.sft_batch < 3:
            raise ValueError("sft_batch must be >= 3 for the trimmed SFT variance")
        rng = np.random.default_rng(self.instance_seed)
        shape = (self.n_prompts, self.seq_len)
        self.ref_logits = rng.normal(0.0, self.init_scale, shape + (self.vocab_size,))
        self.expert = rng.integers(0, self.vocab_size, shape)
        # the reference already leans toward the demonstrations, like a fine-tuned base model
        np.put_along_axis(
            self.ref_logits,
            self.expert[..., None],
            np.take_along_axis(self.ref_logits, self.expert[..., None], axis=-1) + self.expert_boost,
            axis=-1,
        )
        flip = rng.uniform(size=shape) < self.disagreement
        shift = rng.integers(1, self.vocab_size, shape)
        self.target = np.where(flip, (self.expert + shift) % self.vocab_size, self.expert)

    def init_params(self) -> np.ndarray:
        return self.ref_logits.copy()

    def rewards(self, prompts: np.ndarray, seqs: np.ndarray) -> np.ndarray:
        hits = seqs == self.target[prompts]
        if self.reward == "exact":
            return hits.all(axis=1).astype(float)
        if self.reward == "threshold":
            return (hits.sum(axis=1) >= self.reward_threshold).astype(float)
        return hits.mean(axis=1)

    def kl(self, theta: np.ndarray) -> float:
        return self.kl_scale * toy_exact_kl(self, theta)

    def sample_batch(self, theta: np.ndarray, rng: np.random.Generator) -> RolloutBatch:
        prompts = rng.choice(self.n_prompts, size=self.prompts_per_batch, replace=False)
        parts = [rollout_group(self, theta, int(p), self.group_size, rng) for p in prompts]
        seqs = np.concatenate([s for s, _, _ in parts])
        rewards = np.concatenate([r for _, r, _ in parts])
        adv = np.concatenate([a for _, _, a in parts])
        sft_prompts = rng.integers(0, self.n_prompts, self.sft_batch)
        return RolloutBatch(np.repeat(prompts, self.group_size), seqs, rewards, adv, sft_prompts)

    def sft_weights(self, theta: np.ndarray, batch: RolloutBatch) -> np.ndarray:
        probs = softmax(theta)
        t = np.arange(self.seq_len)
        p_expert = probs[batch.sft_prompts[:, None], t, self.expert[batch.sft_prompts]]
        return phi(p_expert)

    def nll_per_sample(self, theta: np.ndarray, prompts: np.ndarray) -> np.ndarray:
        logp = log_softmax(theta)
        t = np.arange(self.seq_len)
        return -logp[prompts[:, None], t, self.expert[prompts]].mean(axis=1)

    def token_coefficients(self, theta: np.ndarray, batch: RolloutBatch) -> TokenCoefficients:
        """RL and SFT coefficients on the sampled response tokens.

        The RL coefficient is the sequence advantage.  The SFT coefficient is
        the token weight where the sampled token coincides with the
        demonstration and zero elsewhere, since SFT only pulls on
        demonstration tokens.
        """
        probs = softmax(theta)
        t = np.arange(self.seq_len)
        p_tok = probs[batch.prompts[:, None], t, batch.seqs]
        on_demo = batch.seqs == self.expert[batch.prompts]
        sft = np.where(on_demo, phi(p_tok), 0.0)
        rl = np.broadcast_to(batch.advantages[:, None], batch.seqs.shape)
        return TokenCoefficients(rl, sft, np.ones(batch.seqs.shape, dtype=bool))

    def sample_step(self, theta: np.ndarray, rng: np.random.Generator) -> StepSample:
        batch = self.sample_batch(theta, rng)
        weights = self.sft_weights(theta, batch)
        g_s, g_r = toy_exact_gradients(self, theta, batch, weights)
        loss_s, loss_r = toy_losses(self, theta, batch, weights)
        return StepSample(
            seq_advantages=batch.advantages,
            nll_per_sample=self.nll_per_sample(theta, batch.sft_prompts),
            token_coeffs=self.token_coefficients(theta, batch),
            grad_s=g_s,
            grad_r=g_r,
            loss_s=loss_s,
            loss_r=loss_r,
            reward_variance=float(np.var(batch.rewards)),
        )


def rollout_group(p: ToyPolicyProblem, theta: np.ndarray, prompt: int, k: int, rng: np.random.Generator):
    """Sample ``k`` sequences for one prompt; returns ``(seqs, rewards, advantages)``."""
    if k < 2:
        raise ValueError("group size must be >= 2")
    probs = softmax(theta[prompt])  # (T, V)
    cdf = np.cumsum(probs, axis=-1)
    u = rng.uniform(size=(k, p.seq_len, 1))
    seqs = (u > cdf[None]).sum(axis=-1)
    seqs = np.minimum(seqs, p.vocab_size - 1)
    rewards = p.rewards(np.full(k, prompt), seqs)
    return seqs, rewards, group_advantages(rewards)


def _scatter_grad(shape, prompts, tokens, coeff, probs):
    """sum over (row, t) of coeff * (onehot(token) - pi[prompt, t]) into a logit table."""
    n, t_len = tokens.shape
    g = np.zeros(shape)
    t = np.broadcast_to(np.arange(t_len), (n, t_len))
    pr = np.broadcast_to(prompts[:, None], (n, t_len))
    np.add.at(g, (pr, t, tokens), coeff)
    np.add.at(g, (pr, t), -coeff[..., None] * probs[pr, t])
    return g


def toy_exact_gradients(p: ToyPolicyProblem, theta: np.ndarray, batch: RolloutBatch, sft_weights=None):
    """Exact batch gradients ``(g_s, g_r)`` of the SFT and RL losses over the logit table."""
    if batch.seqs.shape[0] == 0 or batch.sft_prompts.shape[0] == 0:
        raise ValueError("batch must be non-empty")
    probs = softmax(theta)
    if sft_weights is None:
        sft_weights = p.sft_weights(theta, batch)
    n, t_len = batch.seqs.shape
    m = batch.sft_prompts.shape[0]
    coeff_r = np.broadcast_to(batch.advantages[:, None], (n, t_len)) / (n * t_len)
    g_r = -_scatter_grad(theta.shape, batch.prompts, batch.seqs, coeff_r, probs)
    coeff_s = np.asarray(sft_weights) / (m * t_len)
    g_s = -_scatter_grad(theta.shape, batch.sft_prompts, p.expert[batch.sft_prompts], coeff_s, probs)
    return g_s, g_r


def toy_losses(p: ToyPolicyProblem, theta: np.ndarray, batch: RolloutBatch, sft_weights) -> tuple[float, float]:
    logp = log_softmax(theta)
    t = np.arange(p.seq_len)
    lp_r = logp[batch.prompts[:, None], t, batch.seqs]
    loss_r = -float((batch.advantages[:, None] * lp_r).mean())
    lp_s = logp[batch.sft_prompts[:, None], t, p.expert[batch.sft_prompts]]
    loss_s = -float((np.asarray(sft_weights) * lp_s).mean())
    return loss_s, loss_r


def toy_exact_kl(p: ToyPolicyProblem, theta: np.ndarray) -> float:
    """Sequence-level KL(pi_theta || pi_ref), summed over positions and averaged over prompts."""
    logp = log_softmax(theta)
    logq = log_softmax(p.ref_logits)
    per_pos = (np.exp(logp) * (logp - logq)).sum(axis=-1)
    return max(0.0, float(per_pos.sum(axis=1).mean()))


def per_sample_rl_gradients(p: ToyPolicyProblem, theta: np.ndarray, batch: RolloutBatch) -> np.ndarray:
    """Flattened per-trajectory RL loss gradients, shape ``(N, P*T*V)``."""
    probs = softmax(theta)
    n, t_len = batch.seqs.shape
    out = np.zeros((n, theta.size))
    for i in range(n):
        coeff = np.full((1, t_len), batch.advantages[i] / t_len)
        g = -_scatter_grad(theta.shape, batch.prompts[i : i + 1], batch.seqs[i : i + 1], coeff, probs)
        out[i] = g.ravel()
    return out


def rl_gradient_variance(p: ToyPolicyProblem, theta: np.ndarray, batch: RolloutBatch) -> float:
    g = per_sample_rl_gradients(p, theta, batch)
    return float(((g - g.mean(axis=0)) ** 2).sum(axis=1).mean())
