"""Hybrid discrete/continuous PPO for joint beam selection and power control.

A shared tanh trunk feeds two policy heads: one categorical distribution per
beam over the satellite's coverage set, and a diagonal Gaussian over the
per-beam powers. The critic owns its trunk unless ``shared_critic`` is set.
Power samples live in a normalised space where 0 maps to P_min and 1 to P_max.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import neuralnet as nn
from .env import BeamHoppingEnv, HybridAction, RunningMeanStd, decode_action
from .scenario import Scenario

LOG_2PI = math.log(2.0 * math.pi)


class LengthError(ValueError):
    pass


class NonFiniteLoss(FloatingPointError):
    pass


@dataclass
class PpoHyper:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.4
    lr_policy: float = 3e-4
    lr_critic: float = 3e-4
    minibatch: int = 32
    epochs: int = 10
    episodes: int = 10000
    steps: int = 200
    buffer_capacity: int = 2048
    entropy_coeff: float = 0.01
    hidden: tuple[int, ...] = (64, 64)
    max_grad_norm: float = 0.5  # <= 0 disables clipping
    logstd_init: float = -1.0
    logstd_bounds: tuple[float, float] = (-5.0, 1.0)
    shared_critic: bool = False
    critic_coeff: float = 0.5  # only used with a shared trunk
    normalize_advantages: bool = True

    def __post_init__(self) -> None:
        self.hidden = tuple(self.hidden)
        self.logstd_bounds = tuple(self.logstd_bounds)
        if not (0.0 <= self.gamma <= 1.0 and 0.0 <= self.gae_lambda <= 1.0):
            raise ValueError("gamma and gae_lambda must lie in [0, 1]")
        if self.clip_eps <= 0:
            raise ValueError("clip_eps must be positive")
        if self.minibatch > self.buffer_capacity:
            raise ValueError("minibatch larger than the buffer")

    @classmethod
    def from_config(cls, sec: dict | None) -> "PpoHyper":
        sec = dict(sec or {})
        known = set(cls.__dataclass_fields__)
        unknown = set(sec) - known
        if unknown:
            raise ValueError(f"unknown [ppo] keys: {sorted(unknown)}")
        return cls(**sec)


# ---------------------------------------------------------------------------
# policy

@dataclass
class HybridPolicy:
    trunk: nn.DenseNet
    disc_head: nn.DenseNet
    mean_head: nn.DenseNet
    logstd: np.ndarray
    critic: nn.DenseNet  # full network, or a head on the trunk when shared
    groups: tuple[int, ...]
    shared_critic: bool = False
    logstd_bounds: tuple[float, float] = (-5.0, 1.0)

    def policy_params(self) -> list[np.ndarray]:
        out = self.trunk.params() + self.disc_head.params() + self.mean_head.params() + [self.logstd]
        if self.shared_critic:
            out += self.critic.params()
        return out

    def critic_params(self) -> list[np.ndarray]:
        return [] if self.shared_critic else self.critic.params()

    @property
    def discrete_width(self) -> int:
        return self.disc_head.out_dim

    @property
    def continuous_width(self) -> int:
        # mean and log-std per power entry
        return self.mean_head.out_dim + self.logstd.size

    def copy(self) -> "HybridPolicy":
        def cp(net: nn.DenseNet) -> nn.DenseNet:
            return nn.DenseNet([nn.Layer(l.W.copy(), l.b.copy(), l.activation, l.groups) for l in net.layers])
        return HybridPolicy(cp(self.trunk), cp(self.disc_head), cp(self.mean_head), self.logstd.copy(),
                            cp(self.critic), self.groups, self.shared_critic, self.logstd_bounds)


def beam_groups(scn: Scenario) -> tuple[int, ...]:
    """Width of each categorical group: K groups of |V_i| per satellite."""
    return tuple(len(cov) for cov in scn.coverage_sets for _ in range(scn.beams_per_satellite))


def init_policy(scn: Scenario, hyper: PpoHyper, rng: np.random.Generator) -> HybridPolicy:
    groups = beam_groups(scn)
    n_power = scn.n_satellites * scn.beams_per_satellite
    width = hyper.hidden[-1]
    trunk = nn.build_mlp([scn.obs_dim, *hyper.hidden], rng, out_act="tanh", out_gain=math.sqrt(2.0))
    disc = nn.build_mlp([width, sum(groups)], rng, out_gain=0.01)
    mean = nn.build_mlp([width, n_power], rng, out_gain=0.01)
    mean.layers[-1].b[:] = 0.5
    logstd = np.full(n_power, float(hyper.logstd_init))
    if hyper.shared_critic:
        critic = nn.build_mlp([width, 1], rng, out_gain=1.0)
    else:
        critic = nn.build_mlp([scn.obs_dim, *hyper.hidden, 1], rng, out_gain=1.0)
    return HybridPolicy(trunk, disc, mean, logstd, critic, groups, hyper.shared_critic,
                        tuple(hyper.logstd_bounds))


@dataclass
class PolicyOutput:
    logits: np.ndarray  # (B, sum(groups))
    power_mean: np.ndarray  # (B, N_s*K)
    power_logstd: np.ndarray  # (N_s*K,)
    value: np.ndarray  # (B,)
    groups: tuple[int, ...]
    cache: dict = field(default=None, repr=False)

    def group_log_softmax(self) -> np.ndarray:
        out = np.empty_like(self.logits)
        start = 0
        for g in self.groups:
            seg = self.logits[:, start:start + g]
            m = seg.max(axis=1, keepdims=True)
            out[:, start:start + g] = seg - m - np.log(np.exp(seg - m).sum(axis=1, keepdims=True))
            start += g
        return out

    def group_probs(self) -> np.ndarray:
        return np.exp(self.group_log_softmax())


def policy_forward(policy: HybridPolicy, obs: np.ndarray) -> PolicyOutput:
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    if obs.shape[1] != policy.trunk.in_dim:
        raise nn.DimensionError(f"observation width {obs.shape[1]} != {policy.trunk.in_dim}")
    h, c_trunk = nn.forward(policy.trunk, obs)
    logits, c_disc = nn.forward(policy.disc_head, h)
    mean, c_mean = nn.forward(policy.mean_head, h)
    value, c_crit = nn.forward(policy.critic, h if policy.shared_critic else obs)
    lo, hi = policy.logstd_bounds
    return PolicyOutput(logits=logits, power_mean=mean, power_logstd=np.clip(policy.logstd, lo, hi),
                        value=value[:, 0], groups=policy.groups,
                        cache={"obs": obs, "h": h, "trunk": c_trunk, "disc": c_disc,
                               "mean": c_mean, "critic": c_crit})


def discrete_logprob(po: PolicyOutput, picks: np.ndarray) -> np.ndarray:
    """Joint log-probability of one pick per group, (B,)."""
    logp = po.group_log_softmax()
    picks = np.atleast_2d(picks)
    offsets = np.concatenate([[0], np.cumsum(po.groups)[:-1]])
    return np.take_along_axis(logp, picks + offsets[None, :], axis=1).sum(axis=1)


def continuous_logprob(po: PolicyOutput, u: np.ndarray) -> np.ndarray:
    u = np.atleast_2d(u)
    ls = po.power_logstd
    z = (u - po.power_mean) / np.exp(ls)
    return (-0.5 * z * z - ls - 0.5 * LOG_2PI).sum(axis=1)


def discrete_entropy(po: PolicyOutput) -> np.ndarray:
    """Sum of per-group categorical entropies, (B,)."""
    logp = po.group_log_softmax()
    return -(np.exp(logp) * logp).sum(axis=1)


def gaussian_entropy(logstd: np.ndarray) -> float:
    """Sum over entries of 1/2 + 1/2 log(2 pi sigma^2)."""
    return float(np.sum(0.5 + 0.5 * LOG_2PI + logstd))


def power_to_watts(u: np.ndarray, scn: Scenario) -> np.ndarray:
    return scn.p_min_w + np.asarray(u) * (scn.p_max_w - scn.p_min_w)


def sample_action(po: PolicyOutput, rng: np.random.Generator, scn: Scenario,
                  greedy: bool = False) -> HybridAction:
    """Draw one hybrid action from the first row of ``po`` and decode it.

    ``greedy`` takes the per-group mode and the Gaussian mean instead.
    """
    probs = po.group_probs()[0]
    K = scn.beams_per_satellite
    picks = np.empty(len(po.groups), dtype=np.int64)
    start = 0
    for gi, g in enumerate(po.groups):
        p = probs[start:start + g]
        if greedy:
            picks[gi] = int(np.argmax(p))
        else:
            picks[gi] = min(int(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right")), g - 1)
        start += g
    mean = po.power_mean[0]
    if greedy:
        u = mean.copy()
    else:
        u = mean + np.exp(po.power_logstd) * rng.standard_normal(mean.shape)
    d_lp = float(discrete_logprob(po, picks[None, :])[0])
    c_lp = float(continuous_logprob(po, u[None, :])[0])
    shape = (scn.n_satellites, K)
    act = decode_action(scn, picks.reshape(shape), power_to_watts(u, scn).reshape(shape))
    act.discrete_logprob = d_lp
    act.continuous_logprob = c_lp
    act.raw_power = u.reshape(shape)
    return act


# ---------------------------------------------------------------------------
# advantages and losses

def gae(rewards, values, dones, gamma: float, lam: float) -> np.ndarray:
    """Generalised advantage estimates by backward recursion.

    ``values`` has one more entry than ``rewards``: the bootstrap value of the
    state following the last transition. A done flag at t stops the sum there.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=float)
    T = len(rewards)
    if len(values) != T + 1 or len(dones) != T:
        raise LengthError(f"need len(values) = len(rewards) + 1 = {T + 1} and len(dones) = {T}")
    adv = np.zeros(T)
    running = 0.0
    for t in range(T - 1, -1, -1):
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * values[t + 1] * live - values[t]
        running = delta + gamma * lam * live * running
        adv[t] = running
    return adv


@dataclass
class Losses:
    L_d: float
    L_c: float
    entropy: float
    critic: float
    policy_total: float  # objective to maximise: L_d + L_c + c_e * S
    policy_grads: list | None = None
    critic_grads: list | None = None
    clip_fraction: float = 0.0


def _surrogate(ratio: np.ndarray, adv: np.ndarray, eps: float):
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps)
    unclipped_term = ratio * adv
    clipped_term = clipped * adv
    surr = np.minimum(unclipped_term, clipped_term)
    # the unclipped branch carries gradient when it is the min or the clip is inactive
    active = (unclipped_term <= clipped_term) | ((ratio >= 1.0 - eps) & (ratio <= 1.0 + eps))
    return surr, active


def ppo_losses(batch: dict, policy: HybridPolicy, hyper: PpoHyper, with_grads: bool = True) -> Losses:
    """Clipped surrogate losses, entropy bonus and critic regression on one minibatch.

    ``batch`` holds obs, picks, u (normalised power samples), old_logp_d,
    old_logp_c, adv and returns. Gradients are those of the quantities to
    minimise: -(L_d + L_c + c_e S) for the policy, the mean squared error for
    the critic (combined when the trunk is shared).
    """
    po = policy_forward(policy, batch["obs"])
    B = po.logits.shape[0]
    adv = np.asarray(batch["adv"], dtype=float)
    eps = hyper.clip_eps
    ce = hyper.entropy_coeff

    logp_all = po.group_log_softmax()
    probs = np.exp(logp_all)
    offsets = np.concatenate([[0], np.cumsum(po.groups)[:-1]])
    cols = np.asarray(batch["picks"]) + offsets[None, :]
    logp_d = np.take_along_axis(logp_all, cols, axis=1).sum(axis=1)
    r_d = np.exp(logp_d - batch["old_logp_d"])
    surr_d, act_d = _surrogate(r_d, adv, eps)

    ls = po.power_logstd
    sigma = np.exp(ls)
    diff = np.asarray(batch["u"]) - po.power_mean
    z = diff / sigma
    logp_c = (-0.5 * z * z - ls - 0.5 * LOG_2PI).sum(axis=1)
    r_c = np.exp(logp_c - batch["old_logp_c"])
    surr_c, act_c = _surrogate(r_c, adv, eps)

    ent_groups = -(probs * logp_all)
    S_d = float(ent_groups.sum(axis=1).mean())
    S_c = gaussian_entropy(ls)
    L_d = float(surr_d.mean())
    L_c = float(surr_c.mean())
    objective = L_d + L_c + ce * (S_d + S_c)
    value = po.value
    ret = np.asarray(batch["returns"], dtype=float)
    critic_loss = float(np.mean((value - ret) ** 2))
    clip_frac = float(np.mean(~act_d | ~act_c))

    if not np.isfinite(objective) or not np.isfinite(critic_loss):
        raise NonFiniteLoss(f"non-finite loss: policy={objective}, critic={critic_loss}")
    out = Losses(L_d, L_c, S_d + S_c, critic_loss, objective, clip_fraction=clip_frac)
    if not with_grads:
        return out

    # d(objective)/d(per-sample log-prob)
    gd = np.where(act_d, r_d * adv, 0.0) / B
    gc = np.where(act_c, r_c * adv, 0.0) / B

    onehot = np.zeros_like(logp_all)
    np.put_along_axis(onehot, cols, 1.0, axis=1)
    # log-softmax gradient per group: onehot - p
    g_logits = gd[:, None] * onehot
    start = 0
    for g in po.groups:
        sl = slice(start, start + g)
        g_logits[:, sl] -= gd[:, None] * probs[:, sl]
        H_g = ent_groups[:, sl].sum(axis=1, keepdims=True)
        g_logits[:, sl] += (ce / B) * (-probs[:, sl] * (logp_all[:, sl] + H_g))
        start += g
    g_mean = gc[:, None] * diff / sigma**2
    g_logstd = (gc[:, None] * (z * z - 1.0)).sum(axis=0) + ce
    lo, hi = policy.logstd_bounds
    g_logstd = np.where((policy.logstd < lo) | (policy.logstd > hi), 0.0, g_logstd)

    c = po.cache
    # minimise the negated objective
    gp_disc, gh_disc = nn.backward(policy.disc_head, c["disc"], -g_logits)
    gp_mean, gh_mean = nn.backward(policy.mean_head, c["mean"], -g_mean)
    gv = (2.0 / B) * (value - ret)[:, None]
    gh = gh_disc + gh_mean
    if policy.shared_critic:
        gp_crit, gh_crit = nn.backward(policy.critic, c["critic"], hyper.critic_coeff * gv)
        gh = gh + gh_crit
    gp_trunk, _ = nn.backward(policy.trunk, c["trunk"], gh)
    out.policy_grads = gp_trunk + gp_disc + gp_mean + [-g_logstd]
    if policy.shared_critic:
        out.policy_grads += gp_crit
        out.critic_grads = []
    else:
        out.critic_grads, _ = nn.backward(policy.critic, c["critic"], gv)
    return out


# ---------------------------------------------------------------------------
# rollout storage

class RolloutBuffer:
    """Fixed-capacity store of transitions collected under the current policy."""

    def __init__(self, capacity: int, obs_dim: int, n_groups: int, n_power: int):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.next_obs = np.zeros((capacity, obs_dim))
        self.picks = np.zeros((capacity, n_groups), dtype=np.int64)
        self.u = np.zeros((capacity, n_power))
        self.rewards = np.zeros(capacity)
        self.old_logp_d = np.zeros(capacity)
        self.old_logp_c = np.zeros(capacity)
        self.values = np.zeros(capacity)
        self.dones = np.zeros(capacity)
        self.size = 0

    @property
    def full(self) -> bool:
        return self.size >= self.capacity

    def add(self, obs, act: HybridAction, reward: float, next_obs, value: float, done: bool) -> None:
        if self.full:
            raise OverflowError("rollout buffer is full")
        i = self.size
        self.obs[i] = obs
        self.next_obs[i] = next_obs
        self.picks[i] = act.picks.ravel()
        self.u[i] = act.raw_power.ravel()
        self.rewards[i] = reward
        self.old_logp_d[i] = act.discrete_logprob
        self.old_logp_c[i] = act.continuous_logprob
        self.values[i] = value
        self.dones[i] = float(done)
        self.size += 1

    def clear(self) -> None:
        self.size = 0


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    return (adv - adv.mean()) / (adv.std() + 1e-8)


class PpoAgent:
    """Policy, critic and their optimizers."""

    def __init__(self, scn: Scenario, hyper: PpoHyper, rng: np.random.Generator):
        self.scn = scn
        self.hyper = hyper
        self.policy = init_policy(scn, hyper, rng)
        self.opt_policy = nn.AdamState.for_params(self.policy.policy_params(), lr=hyper.lr_policy)
        self.opt_critic = nn.AdamState.for_params(self.policy.critic_params(), lr=hyper.lr_critic)
        self.normalizer: RunningMeanStd | None = None  # observation statistics seen in training

    def attach(self, env: BeamHoppingEnv, training: bool) -> None:
        """Share observation statistics with ``env``; frozen unless ``training``."""
        if training:
            if env.normalizer is not None:
                self.normalizer = env.normalizer
        elif self.normalizer is not None:
            env.normalizer = self.normalizer
        env.update_normalizer = training

    def value(self, obs: np.ndarray) -> np.ndarray:
        return policy_forward(self.policy, obs).value

    def act(self, obs: np.ndarray, rng: np.random.Generator, greedy: bool = False) -> tuple[HybridAction, float]:
        po = policy_forward(self.policy, obs)
        return sample_action(po, rng, self.scn, greedy=greedy), float(po.value[0])

    def update(self, buf: RolloutBuffer, rng: np.random.Generator) -> dict:
        """KE epochs of shuffled minibatch updates over the whole buffer."""
        h = self.hyper
        n = buf.size
        boot = self.value(buf.next_obs[n - 1:n])[0]
        values = np.append(buf.values[:n], boot)
        adv = gae(buf.rewards[:n], values, buf.dones[:n], h.gamma, h.gae_lambda)
        returns = adv + buf.values[:n]
        adv_used = normalize_advantages(adv) if h.normalize_advantages else adv
        stats = {"L_d": [], "L_c": [], "entropy": [], "critic_loss": [], "clip_fraction": []}
        seen = np.zeros(n, dtype=np.int64)
        for _ in range(h.epochs):
            perm = rng.permutation(n)
            for start in range(0, n, h.minibatch):
                idx = perm[start:start + h.minibatch]
                seen[idx] += 1
                batch = {"obs": buf.obs[idx], "picks": buf.picks[idx], "u": buf.u[idx],
                         "old_logp_d": buf.old_logp_d[idx], "old_logp_c": buf.old_logp_c[idx],
                         "adv": adv_used[idx], "returns": returns[idx]}
                loss = ppo_losses(batch, self.policy, h)
                if h.max_grad_norm > 0:
                    nn.clip_grad_norm(loss.policy_grads, h.max_grad_norm)
                    if loss.critic_grads:
                        nn.clip_grad_norm(loss.critic_grads, h.max_grad_norm)
                nn.adam_step(self.policy.policy_params(), loss.policy_grads, self.opt_policy)
                if loss.critic_grads:
                    nn.adam_step(self.policy.critic_params(), loss.critic_grads, self.opt_critic)
                lo, hi = h.logstd_bounds
                np.clip(self.policy.logstd, lo, hi, out=self.policy.logstd)
                stats["L_d"].append(loss.L_d)
                stats["L_c"].append(loss.L_c)
                stats["entropy"].append(loss.entropy)
                stats["critic_loss"].append(loss.critic)
                stats["clip_fraction"].append(loss.clip_fraction)
        out = {k: float(np.mean(v)) for k, v in stats.items()}
        out["consumed_min"] = int(seen.min())
        out["consumed_max"] = int(seen.max())
        return out

    # checkpoints -----------------------------------------------------------

    def to_arrays(self) -> tuple[dict, dict]:
        arrays, spec = {}, {}
        for name in ("trunk", "disc_head", "mean_head", "critic"):
            a, s = nn.net_to_arrays(name, getattr(self.policy, name))
            arrays.update(a)
            spec[name] = s
        arrays["logstd"] = self.policy.logstd
        if self.normalizer is not None:
            for k, v in self.normalizer.state().items():
                arrays[f"obs_norm.{k}"] = v
        arrays.update(nn.adam_to_arrays("opt_policy", self.opt_policy))
        arrays.update(nn.adam_to_arrays("opt_critic", self.opt_critic))
        meta = {"spec": spec, "groups": list(self.policy.groups),
                "shared_critic": self.policy.shared_critic,
                "n_policy_params": len(self.opt_policy.m), "n_critic_params": len(self.opt_critic.m)}
        return arrays, meta

    def load_arrays(self, arrays: dict, meta: dict) -> None:
        spec = meta["spec"]
        if tuple(meta["groups"]) != self.policy.groups:
            raise nn.DimensionError(
                f"checkpoint beam groups {meta['groups']} do not match scenario {list(self.policy.groups)}")
        nets = {name: nn.net_from_arrays(name, arrays, spec[name])
                for name in ("trunk", "disc_head", "mean_head", "critic")}
        if nets["trunk"].in_dim != self.policy.trunk.in_dim:
            raise nn.DimensionError(
                f"checkpoint observation width {nets['trunk'].in_dim} != scenario {self.policy.trunk.in_dim}")
        self.policy = HybridPolicy(nets["trunk"], nets["disc_head"], nets["mean_head"],
                                   np.array(arrays["logstd"], dtype=float), nets["critic"],
                                   tuple(meta["groups"]), bool(meta["shared_critic"]),
                                   tuple(self.hyper.logstd_bounds))
        self.opt_policy = nn.adam_from_arrays("opt_policy", arrays, meta["n_policy_params"])
        self.opt_critic = nn.adam_from_arrays("opt_critic", arrays, meta["n_critic_params"])
        if "obs_norm.mean" in arrays:
            self.normalizer = RunningMeanStd(len(arrays["obs_norm.mean"]))
            self.normalizer.load({k: arrays[f"obs_norm.{k}"] for k in ("mean", "var", "count")})
        else:
            self.normalizer = None

    def save(self, path, extra_meta: dict | None = None) -> None:
        arrays, meta = self.to_arrays()
        meta["extra"] = extra_meta or {}
        nn.save_checkpoint(path, arrays, meta)

    @classmethod
    def load(cls, path, scn: Scenario, hyper: PpoHyper) -> "PpoAgent":
        arrays, meta = nn.load_checkpoint(path)
        agent = cls(scn, hyper, np.random.default_rng(0))
        agent.load_arrays(arrays, meta)
        return agent


# ---------------------------------------------------------------------------
# training loop

def episode_seed(seed: int, episode: int) -> int:
    return int(np.random.SeedSequence([seed, episode]).generate_state(1)[0])


@dataclass
class EpisodeLog:
    episode: int
    reward: float
    throughput_bits: float
    ltcad_slots: float
    L_d: float
    L_c: float
    entropy: float
    critic_loss: float


def train(env_factory: Callable[[], BeamHoppingEnv], hyper: PpoHyper, seed: int = 0,
          on_episode: Callable[[EpisodeLog, "PpoAgent"], None] | None = None) -> tuple[PpoAgent, list[EpisodeLog]]:
    """Collect episodes into the rollout buffer and update whenever it fills."""
    env = env_factory()
    rng = np.random.default_rng(seed)
    agent = PpoAgent(env.scn, hyper, rng)
    agent.attach(env, training=True)
    n_groups = len(agent.policy.groups)
    buf = RolloutBuffer(hyper.buffer_capacity, env.obs_dim, n_groups, agent.policy.mean_head.out_dim)
    log: list[EpisodeLog] = []
    last = {"L_d": math.nan, "L_c": math.nan, "entropy": math.nan, "critic_loss": math.nan}
    for ep in range(hyper.episodes):
        obs = env.reset(episode_seed(seed, ep))
        total = 0.0
        for _ in range(hyper.steps):
            act, value = agent.act(obs, rng)
            next_obs, reward, done, _ = env.step(act)
            done = done or env.state.slot >= hyper.steps
            buf.add(obs, act, reward, next_obs, value, done)
            total += reward
            obs = next_obs
            if buf.full:
                last = agent.update(buf, rng)
                buf.clear()
            if done:
                break
        ups, gam, _ = env.metrics()
        entry = EpisodeLog(ep, total, ups, gam, last["L_d"], last["L_c"], last["entropy"], last["critic_loss"])
        log.append(entry)
        if on_episode is not None:
            on_episode(entry, agent)
    return agent, log
