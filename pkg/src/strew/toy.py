"""Desk-scale synthetic grounding/QA tasks and a linear-softmax policy trained by GRPO or SFT.

The reference policy stands in for a pretrained base model: a smooth kernel
prior that localizes events coarsely everywhere but systematically predicts
intervals that are too long. GRPO and SFT start from it and see identical
task streams, so the optimizer is the only thing that differs.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import metrics
from .grpo import GrpoConfig, Group, group_advantages, grpo_step
from .parsing import format_interval, render_response
from .rewards import score_group
from .types import (
    LETTERS,
    ChoiceLetter,
    GroundTruth,
    MetricReport,
    TaskInstance,
    TaskKind,
    TemporalInterval,
    VideoRef,
)

log = logging.getLogger(__name__)

IN_DOMAIN = "in_domain"
SHIFTED = "shifted"


@dataclass
class DomainParams:
    duration: tuple = (20.0, 40.0)
    start_frac: tuple = (0.02, 0.33)
    length_frac: tuple = (0.15, 0.30)


@dataclass
class ToyConfig:
    kind: str = "grounding"
    steps: int = 2000
    batch_size: int = 4
    n_start: int = 32
    n_len: int = 16
    feature_dim: int = 16
    feature_noise: float = 0.02
    temperature: float = 1.0
    n_options: int = 4
    # None -> fresh tasks each step; otherwise a fixed training pool of this size
    train_size: Optional[int] = None
    eval_size: int = 200
    eval_every: int = 0
    prior_scale: float = 4.0
    prior_length_factor: float = 3.0
    prior_start_shift: float = -0.04
    sft_learning_rate: float = 0.5
    in_domain: DomainParams = field(default_factory=DomainParams)
    shifted: DomainParams = field(
        default_factory=lambda: DomainParams((60.0, 180.0), (0.60, 0.90), (0.03, 0.09))
    )
    grpo: GrpoConfig = field(default_factory=lambda: GrpoConfig(kl_coefficient=1.0, learning_rate=1.0))
    seed: int = 0

    @property
    def n_actions(self) -> int:
        if TaskKind.parse(self.kind) is TaskKind.GROUNDING:
            return self.n_start * self.n_len
        return self.n_options


# -- features --------------------------------------------------------------

_START_CENTERS = (np.arange(8) + 0.5) / 8
_START_WIDTH = 1 / 16
_LEN_CENTERS = 0.03 + 0.07 * np.arange(7)
_LEN_WIDTH = 0.035


def _rbf(u, centers, width):
    u = np.asarray(u, dtype=float)[..., None]
    return np.exp(-0.5 * ((u - centers) / width) ** 2)


def grounding_features(start_frac, length_frac) -> np.ndarray:
    """[1, 8 start RBFs, 7 length RBFs] of (possibly noisy) normalized positions."""
    s = _rbf(start_frac, _START_CENTERS, _START_WIDTH)
    ln = _rbf(length_frac, _LEN_CENTERS, _LEN_WIDTH)
    ones = np.ones(np.shape(start_frac) + (1,))
    return np.concatenate([ones, s, ln], axis=-1)


# -- action space ----------------------------------------------------------


def action_interval(action: int, duration: float, n_start: int, n_len: int) -> TemporalInterval:
    k, l = divmod(int(action), n_len)
    start = duration * k / n_start
    end = min(duration, start + duration * (l + 1) / n_len)
    return TemporalInterval(start, end)


def grid_intervals(n_start: int, n_len: int):
    """Normalized (start, end) of every action, shape (n_start * n_len, 2)."""
    k, l = np.divmod(np.arange(n_start * n_len), n_len)
    start = k / n_start
    end = np.minimum(1.0, start + (l + 1) / n_len)
    return np.stack([start, end], axis=1)


def best_action(gt: TemporalInterval, duration: float, n_start: int, n_len: int) -> int:
    """Grid action with the highest IoU against ``gt`` (lowest index on ties)."""
    grid = grid_intervals(n_start, n_len)
    s, e = gt.start / duration, gt.end / duration
    inter = np.clip(np.minimum(grid[:, 1], e) - np.maximum(grid[:, 0], s), 0, None)
    union = (grid[:, 1] - grid[:, 0]) + (e - s) - inter
    return int(np.argmax(inter / union))


# -- tasks ------------------------------------------------------------------


@dataclass
class SyntheticTask:
    id: str
    duration: float
    features: np.ndarray
    gt: GroundTruth
    kind: TaskKind
    domain_tag: str
    options: Optional[tuple] = None

    def instance(self) -> TaskInstance:
        video = VideoRef(f"synthetic://{self.id}", self.duration)
        return TaskInstance(self.id, video, "When does the event happen?", self.kind, self.gt, self.options)


def gen_tasks(seed: int, n: int, kind="grounding", domain_tag: str = IN_DOMAIN, config: Optional[ToyConfig] = None) -> list:
    if n < 1:
        raise ValueError("n must be at least 1")
    config = config or ToyConfig()
    kind = TaskKind.parse(kind)
    rng = np.random.default_rng([seed, 0 if domain_tag == IN_DOMAIN else 1, n])
    params = config.in_domain if domain_tag == IN_DOMAIN else config.shifted
    if kind is TaskKind.GROUNDING:
        return _gen_grounding(rng, n, domain_tag, params, config)
    if kind is TaskKind.MCQA:
        return _gen_choice(rng, n, domain_tag, params, config)
    raise ValueError(f"toy environment supports grounding and mcqa, not {kind.value}")


def _gen_grounding(rng, n, domain_tag, p: DomainParams, config: ToyConfig) -> list:
    dur = np.round(rng.uniform(*p.duration, size=n), 3)
    length = rng.uniform(*p.length_frac, size=n)
    start = rng.uniform(*p.start_frac, size=n)
    start = np.minimum(start, 1.0 - length)
    noise = rng.normal(0.0, config.feature_noise, size=(n, 2))
    feats = grounding_features(start + noise[:, 0], length + noise[:, 1])
    tasks = []
    for i in range(n):
        s = round(float(start[i] * dur[i]), 3)
        e = min(float(dur[i]), round(float((start[i] + length[i]) * dur[i]), 3))
        gt = GroundTruth(interval=TemporalInterval(s, e))
        tasks.append(SyntheticTask(f"{domain_tag}-{i}", float(dur[i]), feats[i], gt, TaskKind.GROUNDING, domain_tag))
    return tasks


def _gen_choice(rng, n, domain_tag, p: DomainParams, config: ToyConfig) -> list:
    m = config.n_options
    answers = rng.integers(0, m, size=n)
    if domain_tag != IN_DOMAIN:
        # shifted: answers skew toward the later options
        answers = np.maximum(answers, rng.integers(0, m, size=n))
    feats = np.zeros((n, config.feature_dim))
    feats[:, 0] = 1.0
    feats[np.arange(n), 1 + answers] = 1.0
    feats[:, 1 : 1 + m] += rng.normal(0.0, 0.5, size=(n, m))
    options = tuple(f"option {LETTERS[j]}" for j in range(m))
    tasks = []
    for i in range(n):
        gt = GroundTruth(choice=ChoiceLetter(LETTERS[answers[i]]))
        dur = float(rng.uniform(*p.duration))
        tasks.append(SyntheticTask(f"{domain_tag}-{i}", dur, feats[i], gt, TaskKind.MCQA, domain_tag, options))
    return tasks


# -- policy -------------------------------------------------------------------


@dataclass
class ToyPolicy:
    weights: np.ndarray
    temperature: float = 1.0

    @property
    def n_actions(self) -> int:
        return self.weights.shape[1]

    def with_weights(self, weights) -> "ToyPolicy":
        return ToyPolicy(weights, self.temperature)

    def logits(self, x) -> np.ndarray:
        return np.asarray(x) @ self.weights

    def log_probs(self, x) -> np.ndarray:
        z = self.logits(x) / self.temperature
        z = z - z.max(axis=-1, keepdims=True)
        return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))

    def probs(self, x) -> np.ndarray:
        return np.exp(self.log_probs(x))

    def log_prob(self, x, action: int) -> float:
        return float(self.log_probs(x)[action])

    def grad_weighted_log_prob(self, x, action_weights) -> np.ndarray:
        """sum_a w_a * d log pi(a|x) / dW for a linear-softmax policy."""
        p = self.probs(x)
        w = np.asarray(action_weights, dtype=float)
        return np.outer(x, w - w.sum() * p) / self.temperature

    def greedy(self, x) -> int:
        return int(np.argmax(self.logits(x)))


def reference_policy(config: ToyConfig) -> ToyPolicy:
    """Kernel prior: localizes events but predicts them too long and slightly early."""
    d, kind = config.feature_dim, TaskKind.parse(config.kind)
    if kind is not TaskKind.GROUNDING:
        return ToyPolicy(np.zeros((d, config.n_actions)), config.temperature)
    k, l = np.divmod(np.arange(config.n_actions), config.n_len)
    # action (k, l) is scored by how well the miscalibrated reading of the features matches it
    start = (k + 0.5) / config.n_start - config.prior_start_shift
    length = (l + 1) / config.n_len / config.prior_length_factor
    w = np.zeros((d, config.n_actions))
    w[1:9] = config.prior_scale * _rbf(start, _START_CENTERS, _START_WIDTH).T
    w[9:16] = config.prior_scale * _rbf(length, _LEN_CENTERS, _LEN_WIDTH).T
    return ToyPolicy(w, config.temperature)


def render_action(task: SyntheticTask, action: int, config: ToyConfig) -> str:
    if task.kind is TaskKind.GROUNDING:
        iv = action_interval(action, task.duration, config.n_start, config.n_len)
        return render_response(format_interval(iv), think=f"start bin {action // config.n_len}")
    return render_response(LETTERS[action], think="compare options")


def policy_rollout(policy: ToyPolicy, task: SyntheticTask, G: int, seed, config: Optional[ToyConfig] = None) -> list:
    """Sample G actions; each comes back as rendered text plus its exact log-probability."""
    if G < 1:
        raise ValueError("G must be at least 1")
    config = config or ToyConfig()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if policy.temperature <= 0:
        a = policy.greedy(task.features)
        actions, logps = [a] * G, [0.0] * G
    else:
        lp = policy.log_probs(task.features)
        actions = [int(a) for a in rng.choice(policy.n_actions, size=G, p=np.exp(lp) / np.exp(lp).sum())]
        logps = [float(lp[a]) for a in actions]
    return [
        {"action": a, "answer_text": render_action(task, a, config), "logp": lp_}
        for a, lp_ in zip(actions, logps)
    ]


def predict(policy: ToyPolicy, tasks, config: ToyConfig, greedy: bool = True, rng=None) -> list:
    out = []
    for t in tasks:
        if greedy:
            a = policy.greedy(t.features)
        else:
            a = int(rng.choice(policy.n_actions, p=policy.probs(t.features)))
        out.append(render_action(t, a, config))
    return out


def eval_policy(policy: ToyPolicy, tasks, config: Optional[ToyConfig] = None, greedy: bool = True, seed: int = 0) -> MetricReport:
    if not tasks:
        raise ValueError("eval_policy needs at least one task")
    config = config or ToyConfig()
    rng = np.random.default_rng(seed)
    texts = predict(policy, tasks, config, greedy, rng)
    return metrics.evaluate_responses([t.instance() for t in tasks], texts)


# -- training -------------------------------------------------------------------


@dataclass
class TrainReport:
    method: str
    stats: list
    in_domain: dict
    shifted: dict
    initial_in_domain: dict
    initial_shifted: dict
    curve: list
    config: dict
    seed: int

    def to_dict(self) -> dict:
        return asdict(self)


def _headline(report: MetricReport) -> dict:
    return report.to_dict()


def _streams(config: ToyConfig):
    seed = config.seed
    kind = config.kind
    eval_in = gen_tasks(seed + 10_000, config.eval_size, kind, IN_DOMAIN, config)
    eval_shift = gen_tasks(seed + 20_000, config.eval_size, kind, SHIFTED, config)
    pool = gen_tasks(seed, config.train_size, kind, IN_DOMAIN, config) if config.train_size else None
    return eval_in, eval_shift, pool


def _batch(config: ToyConfig, rng, pool, step: int) -> list:
    if pool is not None:
        idx = rng.choice(len(pool), size=config.batch_size, replace=False)
        return [pool[i] for i in idx]
    fresh = gen_tasks(int(rng.integers(2**31)), config.batch_size, config.kind, IN_DOMAIN, config)
    return [replace(t, id=f"s{step}-{t.id}") for t in fresh]


def _metric_key(report: dict) -> float:
    return report["miou"] if report["miou"] is not None else report["accuracy"]


def _train(config: ToyConfig, method: str, update: Callable, on_stats=None) -> TrainReport:
    policy = reference_policy(config)
    ref = policy
    eval_in, eval_shift, pool = _streams(config)
    # task stream and rollout sampling use separate generators so GRPO and SFT see identical batches
    task_rng = np.random.default_rng([config.seed, 1])
    sample_rng = np.random.default_rng([config.seed, 2])
    init_in = _headline(eval_policy(policy, eval_in, config))
    init_shift = _headline(eval_policy(policy, eval_shift, config))
    curve = [{"step": 0, "in_domain": _metric_key(init_in), "shifted": _metric_key(init_shift)}]
    stats = []
    for step in range(1, config.steps + 1):
        batch = _batch(config, task_rng, pool, step)
        policy, rec = update(policy, ref, batch, sample_rng)
        rec = {"step": step, **rec}
        stats.append(rec)
        if on_stats:
            on_stats(rec)
        if config.eval_every and step % config.eval_every == 0 and step != config.steps:
            curve.append(
                {
                    "step": step,
                    "in_domain": _metric_key(_headline(eval_policy(policy, eval_in, config))),
                    "shifted": _metric_key(_headline(eval_policy(policy, eval_shift, config))),
                }
            )
    final_in = _headline(eval_policy(policy, eval_in, config))
    final_shift = _headline(eval_policy(policy, eval_shift, config))
    if config.steps:
        curve.append({"step": config.steps, "in_domain": _metric_key(final_in), "shifted": _metric_key(final_shift)})
    report = TrainReport(method, stats, final_in, final_shift, init_in, init_shift, curve, asdict(config), config.seed)
    report.policy = policy
    return report


def grpo_update(config: ToyConfig):
    G = config.grpo.group_size

    def update(policy, ref, batch, rng):
        groups = []
        for task in batch:
            rollouts = policy_rollout(policy, task, G, rng, config)
            breakdowns = score_group(task.instance(), [r["answer_text"] for r in rollouts])
            rewards = [b.total for b in breakdowns]
            actions = [r["action"] for r in rollouts]
            logp = [r["logp"] for r in rollouts]
            ref_lp = ref.log_probs(task.features)
            g = Group(task.id, rewards, list(logp), list(logp), [float(ref_lp[a]) for a in actions], task.features, actions)
            g.extra["advantages"] = group_advantages(rewards, config.grpo.epsilon_sigma)
            groups.append(g)
        stats = None
        for _ in range(config.grpo.epochs_per_batch):
            policy, s = grpo_step(policy, groups, config.grpo)
            stats = stats or s
        return policy, stats

    return update


def sft_update(config: ToyConfig):
    def update(policy, ref, batch, rng):
        grad = np.zeros_like(policy.weights)
        nll = 0.0
        for task in batch:
            target = _target_action(task, config)
            w = np.zeros(policy.n_actions)
            w[target] = 1.0
            grad += policy.grad_weighted_log_prob(task.features, w)
            nll -= policy.log_prob(task.features, target)
        grad /= len(batch)
        new = policy.with_weights(policy.weights + config.sft_learning_rate * grad)
        return new, {"nll": nll / len(batch)}

    return update


def _target_action(task: SyntheticTask, config: ToyConfig) -> int:
    if task.kind is TaskKind.GROUNDING:
        return best_action(task.gt.interval, task.duration, config.n_start, config.n_len)
    return task.gt.choice.index


def train_grpo(config: ToyConfig, on_stats=None) -> TrainReport:
    return _train(config, "grpo", grpo_update(config), on_stats)


def train_sft(config: ToyConfig, on_stats=None) -> TrainReport:
    return _train(config, "sft", sft_update(config), on_stats)


def uniform_random_miou(tasks, n_start: int, n_len: int, samples: int = 200, seed: int = 0) -> float:
    """Monte-Carlo mean IoU of a uniformly random grid action, computed directly on arrays."""
    rng = np.random.default_rng(seed)
    grid = grid_intervals(n_start, n_len)
    total = 0.0
    for t in tasks:
        acts = rng.integers(0, len(grid), size=samples)
        s = grid[acts, 0] * t.duration
        e = grid[acts, 1] * t.duration
        gs, ge = t.gt.interval.start, t.gt.interval.end
        inter = np.clip(np.minimum(e, ge) - np.maximum(s, gs), 0, None)
        total += float(np.mean(inter / ((e - s) + (ge - gs) - inter)))
    return total / len(tasks)


