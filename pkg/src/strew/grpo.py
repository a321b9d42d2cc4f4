"""Group-relative advantages, KL penalty and the clipped surrogate update."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import NonFiniteGradient


@dataclass
class GrpoConfig:
    group_size: int = 8
    clip_epsilon: float = 0.2
    kl_coefficient: float = 0.04
    epsilon_sigma: float = 1e-8
    learning_rate: float = 0.05
    epochs_per_batch: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.group_size < 2:
            raise ValueError("group_size must be at least 2")
        if not 0 < self.clip_epsilon < 1:
            raise ValueError("clip_epsilon must lie in (0, 1)")
        if self.kl_coefficient < 0:
            raise ValueError("kl_coefficient must be non-negative")
        if self.epochs_per_batch < 1:
            raise ValueError("epochs_per_batch must be at least 1")


@dataclass
class AdvantageVector:
    advantages: list
    group_mean: float
    group_std: float


@dataclass
class Group:
    """One query's candidates. ``features``/``actions`` are only set on the toy path."""

    query_id: str
    rewards: list
    logp_current: list
    logp_old: list
    logp_ref: list
    features: Optional[np.ndarray] = None
    actions: Optional[list] = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.rewards)
        if n < 1:
            raise ValueError("a group needs at least one candidate")
        for name in ("logp_current", "logp_old", "logp_ref"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} length differs from rewards")
        if self.actions is not None and len(self.actions) != n:
            raise ValueError("actions length differs from rewards")


def group_advantages(rewards, epsilon_sigma: float = 1e-8) -> AdvantageVector:
    """Standardize rewards within the group using the population std.

    Rewards are put on a shared power-of-two denominator so deviations and
    their squares are exact integers. Each advantage is then
    sign(d) * sqrt(n * d**2 / sum(d**2)) with one correctly rounded int
    division, so any shift or positive rescaling that is itself exact in
    floating point leaves the result bit-for-bit unchanged.
    """
    if len(rewards) < 1:
        raise ValueError("rewards must be non-empty")
    ratios = [float(r).as_integer_ratio() for r in rewards]
    n = len(ratios)
    denom = max(q for _, q in ratios)
    ints = [p * (denom // q) for p, q in ratios]
    total = sum(ints)
    # dev_i = n * denom * (r_i - mean), exact
    dev = [n * x - total for x in ints]
    sq = sum(d * d for d in dev)
    mean = total / (n * denom)
    try:
        std = math.sqrt(sq / (n**3 * denom * denom))
    except OverflowError:
        std = math.inf
    if not std > epsilon_sigma:
        return AdvantageVector([0.0] * n, mean, std)
    adv = [math.sqrt(n * d * d / sq) * (1.0 if d > 0 else -1.0) if d else 0.0 for d in dev]
    return AdvantageVector(adv, mean, std)


def kl_penalty(logp_current: float, logp_ref: float) -> float:
    """r - log r - 1 with r = pi_ref / pi_current; zero iff the two agree."""
    delta = logp_ref - logp_current
    return max(0.0, math.expm1(delta) - delta)


def _kl_grad(logp_current: float, logp_ref: float) -> float:
    # d/d(logp_current) of kl_penalty
    return 1.0 - math.exp(logp_ref - logp_current)


def surrogate_terms(logp_current, logp_old, logp_ref, advantages, cfg: GrpoConfig):
    """Per-candidate objective values and their derivative w.r.t. logp_current."""
    eps, beta = cfg.clip_epsilon, cfg.kl_coefficient
    values, coefs = [], []
    for cur, old, ref, a in zip(logp_current, logp_old, logp_ref, advantages):
        rho = math.exp(cur - old)
        unclipped = rho * a
        clipped = min(max(rho, 1 - eps), 1 + eps) * a
        if unclipped <= clipped:
            val, d_val = unclipped, rho * a
        else:
            val, d_val = clipped, (rho * a if 1 - eps < rho < 1 + eps else 0.0)
        values.append(val - beta * kl_penalty(cur, ref))
        coefs.append(d_val - beta * _kl_grad(cur, ref))
    return values, coefs


def surrogate_objective(group: Group, adv: AdvantageVector, cfg: GrpoConfig) -> dict:
    per, _ = surrogate_terms(group.logp_current, group.logp_old, group.logp_ref, adv.advantages, cfg)
    return {"objective": sum(per) / len(per), "per_candidate": per}


def _current_logps(policy, group: Group) -> list:
    return [policy.log_prob(group.features, a) for a in group.actions]


def batch_objective(policy, groups, cfg: GrpoConfig) -> float:
    """Mean group surrogate with logp_current recomputed from ``policy``."""
    total = 0.0
    for g in groups:
        adv = g.extra.get("advantages") or group_advantages(g.rewards, cfg.epsilon_sigma)
        cur = _current_logps(policy, g)
        per, _ = surrogate_terms(cur, g.logp_old, g.logp_ref, adv.advantages, cfg)
        total += sum(per) / len(per)
    return total / len(groups)


def batch_gradient(policy, groups, cfg: GrpoConfig):
    """Analytic gradient of ``batch_objective`` w.r.t. the policy weights."""
    grad = np.zeros_like(policy.weights)
    objective, kls = 0.0, []
    for g in groups:
        adv = g.extra.get("advantages") or group_advantages(g.rewards, cfg.epsilon_sigma)
        cur = _current_logps(policy, g)
        per, coefs = surrogate_terms(cur, g.logp_old, g.logp_ref, adv.advantages, cfg)
        objective += sum(per) / len(per)
        kls.extend(kl_penalty(c, r) for c, r in zip(cur, g.logp_ref))
        # sum_i coef_i * grad log pi(a_i | x) collapses to one outer product per group
        action_weights = np.zeros(policy.n_actions)
        for a, c in zip(g.actions, coefs):
            action_weights[a] += c
        grad += policy.grad_weighted_log_prob(g.features, action_weights) / len(per)
    n = len(groups)
    return grad / n, objective / n, float(np.mean(kls))


def grpo_step(policy, groups, cfg: GrpoConfig):
    """One ascent step on the batch surrogate; returns (new_policy, stats)."""
    if not groups:
        raise ValueError("grpo_step needs at least one group")
    grad, objective, mean_kl = batch_gradient(policy, groups, cfg)
    if not np.all(np.isfinite(grad)):
        raise NonFiniteGradient("surrogate gradient has non-finite entries")
    new = policy.with_weights(policy.weights + cfg.learning_rate * grad)
    rewards = [r for g in groups for r in g.rewards]
    stats = {"mean_reward": float(np.mean(rewards)), "mean_kl": mean_kl, "objective": objective}
    return new, stats
