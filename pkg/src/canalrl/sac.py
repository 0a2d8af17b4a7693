"""Soft actor-critic with a state-value network, one soft-Q critic, a
tanh-Gaussian actor, and expert/replay buffer interleaving."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .env import ACTION_DIM, OBS_DIM, CanalAnatomy, env_reset, env_step
from .nn import (LOG_STD_MAX, LOG_STD_MIN, SQUASH_EPS, AdamState, MlpParams, adam_init, adam_step,
                 backward_cache, forward_cache, gaussian_sample, init_mlp, mlp_forward,
                 split_policy_output)
from .reward import RewardConfig, reward_from_events

log = logging.getLogger(__name__)

EXPERT = "expert"
REPLAY = "replay"


@dataclass(frozen=True)
class SacHyperparams:
    gamma: float = 0.99
    alpha: float = 0.2
    tau: float = 0.005
    batch_size: int = 256
    update_every: int = 5
    expert_interleave: int = 4
    pretrain_updates: int = 1000
    learning_rate: float = 3e-4
    hidden_sizes: tuple = (128, 128)

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if self.batch_size < 1 or self.update_every < 1 or self.expert_interleave < 0 or self.pretrain_updates < 0:
            raise ValueError("batch_size/update_every must be positive, interleave/pretrain non-negative")


# --- buffers -------------------------------------------------------------------

@dataclass
class Batch:
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_obs: np.ndarray
    dones: np.ndarray

    def __len__(self):
        return len(self.rewards)


class ReplayBuffer:
    """Ring buffer of transitions with uniform sampling (with replacement).

    Storage grows geometrically up to ``capacity`` so the default million-slot
    buffer does not allocate up front.
    """

    def __init__(self, capacity: int = 1_000_000, obs_dim: int = OBS_DIM, action_dim: int = ACTION_DIM):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.size = 0
        self._next = 0
        self._alloc(min(self.capacity, 1024))

    def _alloc(self, n):
        old = getattr(self, "_obs", None)
        new = dict(obs=np.zeros((n, self.obs_dim)), actions=np.zeros((n, self.action_dim)),
                   rewards=np.zeros(n), next_obs=np.zeros((n, self.obs_dim)), dones=np.zeros(n, dtype=bool))
        if old is not None:
            for k, arr in new.items():
                arr[:self.size] = getattr(self, "_" + k)[:self.size]
        for k, arr in new.items():
            setattr(self, "_" + k, arr)

    def __len__(self):
        return self.size

    def add(self, obs, action, reward, next_obs, done):
        action = np.asarray(action, dtype=np.float64)
        if np.any(np.abs(action) > 1.0) or not (np.all(np.isfinite(obs)) and np.all(np.isfinite(next_obs))
                                                and np.isfinite(reward)):
            raise ValueError("transition must be finite with actions in [-1, 1]")
        i = self._next
        if i >= len(self._rewards):
            self._alloc(min(self.capacity, 2 * len(self._rewards)))
        self._obs[i] = obs
        self._actions[i] = action
        self._rewards[i] = reward
        self._next_obs[i] = next_obs
        self._dones[i] = done
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def extend(self, obs, actions, rewards, next_obs, dones):
        for row in zip(obs, actions, rewards, next_obs, dones):
            self.add(*row)

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, self.size, size=batch_size)
        return self.take(idx)

    def take(self, idx) -> Batch:
        return Batch(self._obs[idx], self._actions[idx], self._rewards[idx], self._next_obs[idx], self._dones[idx])

    def contents(self) -> Batch:
        """Stored transitions, oldest first."""
        if self.size < self.capacity:
            return self.take(np.arange(self.size))
        return self.take((np.arange(self.size) + self._next) % self.capacity)


# --- networks --------------------------------------------------------------------

@dataclass(frozen=True)
class AgentNets:
    value: MlpParams
    value_target: MlpParams
    q: MlpParams
    policy: MlpParams
    value_opt: AdamState
    q_opt: AdamState
    policy_opt: AdamState
    update_count: int = 0

    def __post_init__(self):
        if self.value.layer_sizes != self.value_target.layer_sizes:
            raise ValueError("value and target value networks must share layer sizes")
        obs_dim = self.value.layer_sizes[0]
        if self.q.layer_sizes[0] != obs_dim + self.policy.layer_sizes[-1] // 2:
            raise ValueError("q input must be obs_dim + action_dim")
        if self.policy.layer_sizes[-1] % 2 or self.value.layer_sizes[-1] != 1 or self.q.layer_sizes[-1] != 1:
            raise ValueError("policy output must be 2*action_dim; value and q outputs scalar")

    @property
    def obs_dim(self) -> int:
        return self.value.layer_sizes[0]

    @property
    def action_dim(self) -> int:
        return self.policy.layer_sizes[-1] // 2


def make_agent(rng: np.random.Generator, obs_dim: int = OBS_DIM, action_dim: int = ACTION_DIM,
               hidden=(128, 128), learning_rate: float = 3e-4) -> AgentNets:
    hidden = tuple(hidden)
    value = init_mlp((obs_dim, *hidden, 1), rng)
    q = init_mlp((obs_dim + action_dim, *hidden, 1), rng)
    policy = init_mlp((obs_dim, *hidden, 2 * action_dim), rng)
    return AgentNets(value, value, q, policy, adam_init(value, learning_rate), adam_init(q, learning_rate),
                     adam_init(policy, learning_rate))


def _require_batch(batch: Batch):
    if len(batch) == 0:
        raise ValueError("empty batch")


# --- losses ----------------------------------------------------------------------

def value_loss(nets: AgentNets, batch: Batch, hp: SacHyperparams, noise: np.ndarray):
    """Squared residual between V(s) and E[Q(s, a~) - alpha log pi(a~|s)].

    The soft target is held constant; returns ``(loss, grads for value net)``.
    """
    _require_batch(batch)
    mean, raw = split_policy_output(mlp_forward(nets.policy, batch.obs))
    head = gaussian_sample(mean, raw, noise)
    q = mlp_forward(nets.q, np.concatenate([batch.obs, head.action], axis=1))[:, 0]
    target = q - hp.alpha * head.log_prob
    v, acts = forward_cache(nets.value, batch.obs)
    diff = v[:, 0] - target
    n = len(batch)
    loss = 0.5 * float(np.mean(diff * diff))
    grads, _ = backward_cache(nets.value, acts, (diff / n)[:, None])
    return loss, grads


def q_targets(nets: AgentNets, batch: Batch, hp: SacHyperparams) -> np.ndarray:
    v_next = mlp_forward(nets.value_target, batch.next_obs)[:, 0]
    return batch.rewards + (1.0 - batch.dones.astype(np.float64)) * hp.gamma * v_next


def q_loss(nets: AgentNets, batch: Batch, hp: SacHyperparams):
    """Soft Bellman residual against r + gamma V_target(s'), masked at terminals."""
    _require_batch(batch)
    target = q_targets(nets, batch, hp)
    q, acts = forward_cache(nets.q, np.concatenate([batch.obs, batch.actions], axis=1))
    diff = q[:, 0] - target
    n = len(batch)
    loss = 0.5 * float(np.mean(diff * diff))
    grads, _ = backward_cache(nets.q, acts, (diff / n)[:, None])
    return loss, grads


def policy_loss(nets: AgentNets, batch: Batch, hp: SacHyperparams, noise: np.ndarray):
    """Mean of alpha log pi(a~|s) - Q(s, a~) with reparameterized a~.

    Gradients reach the policy through both the log-density and the critic's
    action input; the critic itself is not updated.
    """
    _require_batch(batch)
    n = len(batch)
    out, pacts = forward_cache(nets.policy, batch.obs)
    mean, raw = split_policy_output(out)
    head = gaussian_sample(mean, raw, noise)
    a = head.action
    q, qacts = forward_cache(nets.q, np.concatenate([batch.obs, a], axis=1))
    loss = float(np.mean(hp.alpha * head.log_prob - q[:, 0]))

    _, dq_in = backward_cache(nets.q, qacts, np.full((n, 1), -1.0 / n))
    dloss_da = dq_in[:, nets.obs_dim:]
    one_minus = 1.0 - a * a
    dlogp_du = 2.0 * a * one_minus / (one_minus + SQUASH_EPS)
    g_u = (hp.alpha / n) * dlogp_du + dloss_da * one_minus
    std = np.exp(head.log_std)
    in_range = (raw > LOG_STD_MIN) & (raw < LOG_STD_MAX)
    g_raw = (g_u * std * noise - hp.alpha / n) * in_range
    grads, _ = backward_cache(nets.policy, pacts, np.concatenate([g_u, g_raw], axis=1))
    return loss, grads


def polyak_update(target: MlpParams, online: MlpParams, tau: float) -> MlpParams:
    if target.layer_sizes != online.layer_sizes:
        raise ValueError("target and online networks differ in shape")
    if not 0.0 < tau <= 1.0:
        raise ValueError("tau must lie in (0, 1]")
    if tau == 1.0:
        return online
    return target.with_arrays([tau * o + (1.0 - tau) * t for t, o in zip(target.arrays(), online.arrays())])


# --- schedule and update ----------------------------------------------------------

def buffer_tag(update_index: int, hp: SacHyperparams) -> str:
    """Expert for every pretraining update, then one expert update after each
    ``expert_interleave`` replay updates."""
    if update_index < hp.pretrain_updates:
        return EXPERT
    if hp.expert_interleave == 0:
        return REPLAY
    period = hp.expert_interleave + 1
    return EXPERT if update_index % period == period - 1 else REPLAY


@dataclass(frozen=True)
class UpdateDiagnostics:
    update_index: int
    tag: str
    skipped: bool = False
    value_loss: float = float("nan")
    q_loss: float = float("nan")
    policy_loss: float = float("nan")


class TrainingDiverged(RuntimeError):
    """Raised when a loss or parameter goes non-finite; carries the offending state."""

    def __init__(self, message, nets=None, diagnostics=None):
        super().__init__(message)
        self.nets = nets
        self.diagnostics = diagnostics


def update_round(nets: AgentNets, replay: ReplayBuffer, expert: ReplayBuffer, hp: SacHyperparams,
                 update_index: int, rng: np.random.Generator):
    """Value, Q and policy gradient steps on one batch, then a Polyak target update.

    If the scheduled buffer holds fewer than ``batch_size`` transitions the
    round is skipped and ``diagnostics.skipped`` is set.
    """
    tag = buffer_tag(update_index, hp)
    source = expert if tag == EXPERT else replay
    if len(source) < hp.batch_size:
        return nets, UpdateDiagnostics(update_index, tag, skipped=True)
    batch = source.sample(hp.batch_size, rng)
    noise = rng.standard_normal((2, hp.batch_size, nets.action_dim))

    lv, gv = value_loss(nets, batch, hp, noise[0])
    lq, gq = q_loss(nets, batch, hp)
    diag = UpdateDiagnostics(update_index, tag, False, lv, lq)
    if not (np.isfinite(lv) and np.isfinite(lq)):
        raise TrainingDiverged(f"non-finite loss at update {update_index}", nets, diag)
    try:
        value, value_opt = adam_step(nets.value, gv, nets.value_opt)
        q, q_opt = adam_step(nets.q, gq, nets.q_opt)
        nets = replace(nets, value=value, value_opt=value_opt, q=q, q_opt=q_opt)
        lp, gp = policy_loss(nets, batch, hp, noise[1])
        diag = replace(diag, policy_loss=lp)
        if not np.isfinite(lp):
            raise FloatingPointError("policy loss")
        policy, policy_opt = adam_step(nets.policy, gp, nets.policy_opt)
    except FloatingPointError as exc:
        raise TrainingDiverged(f"non-finite values at update {update_index}: {exc}", nets, diag) from None
    nets = replace(nets, policy=policy, policy_opt=policy_opt,
                   value_target=polyak_update(nets.value_target, nets.value, hp.tau),
                   update_count=nets.update_count + 1)
    return nets, diag


def select_action(nets: AgentNets, obs, mode: str = "stochastic",
                  rng: Optional[np.random.Generator] = None) -> np.ndarray:
    mean, raw = split_policy_output(mlp_forward(nets.policy, obs))
    if mode == "deterministic":
        return np.tanh(mean)
    if mode != "stochastic":
        raise ValueError(f"unknown mode {mode!r}")
    return gaussian_sample(mean, raw, rng.standard_normal(mean.shape)).action


# --- training loop ----------------------------------------------------------------

@dataclass(frozen=True)
class EpisodeLog:
    index: int
    cumulative_reward: float
    success: bool
    steps: int

    def line(self) -> str:
        return f"{self.index}\t{self.cumulative_reward!r}\t{int(self.success)}\t{self.steps}"


def format_reward_log(logs) -> str:
    return "".join(e.line() + "\n" for e in logs)


def parse_reward_log(text: str) -> list:
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise ValueError(f"reward log line {lineno}: expected 4 fields")
        out.append(EpisodeLog(int(parts[0]), float(parts[1]), parts[2] == "1", int(parts[3])))
    return out


@dataclass
class TrainResult:
    nets: AgentNets
    episodes: list
    replay: ReplayBuffer
    diagnostics: list = field(default_factory=list)


def pretrain(nets: AgentNets, expert: ReplayBuffer, hp: SacHyperparams, rng: np.random.Generator,
             replay: Optional[ReplayBuffer] = None):
    replay = replay if replay is not None else ReplayBuffer(1)
    diags = []
    for i in range(hp.pretrain_updates):
        nets, d = update_round(nets, replay, expert, hp, i, rng)
        diags.append(d)
    return nets, diags


def train(anatomy: CanalAnatomy, nets: AgentNets, expert: ReplayBuffer, hp: SacHyperparams,
          episodes: int, seed: int, reward_cfg: RewardConfig = RewardConfig(),
          buffer_capacity: int = 1_000_000,
          on_episode: Optional[Callable[[EpisodeLog], None]] = None) -> TrainResult:
    """Expert pretraining followed by ``episodes`` simulated episodes.

    One update round runs after every ``update_every`` environment steps
    (counted across episodes). Fully deterministic given ``seed``.
    """
    if episodes < 0:
        raise ValueError("episodes must be >= 0")
    ss = np.random.SeedSequence(seed)
    update_rng, action_rng, reset_rng = (np.random.default_rng(s) for s in ss.spawn(3))
    replay = ReplayBuffer(buffer_capacity, nets.obs_dim, nets.action_dim)

    nets, diags = pretrain(nets, expert, hp, update_rng, replay)
    update_index = hp.pretrain_updates
    total_steps = 0
    logs = []
    for ep in range(episodes):
        state, obs = env_reset(anatomy, int(reset_rng.integers(0, 2**31 - 1)))
        ret = 0.0
        while not state.done:
            action = select_action(nets, obs, "stochastic", action_rng)
            state, next_obs, events = env_step(state, action, anatomy)
            r = reward_from_events(events, reward_cfg)
            replay.add(obs, action, r, next_obs, state.done)
            ret += r
            obs = next_obs
            total_steps += 1
            if total_steps % hp.update_every == 0:
                nets, d = update_round(nets, replay, expert, hp, update_index, update_rng)
                if not d.skipped:
                    update_index += 1
                    diags.append(d)
        entry = EpisodeLog(ep, ret, state.success, state.step_count)
        logs.append(entry)
        if on_episode is not None:
            on_episode(entry)
        log.debug("episode %d return %.2f success %s steps %d", ep, ret, state.success, state.step_count)
    return TrainResult(nets, logs, replay, diags)


def expert_buffer_from_demos(demos, capacity: int = 1_000_000) -> ReplayBuffer:
    obs, actions, rewards, next_obs, dones = demos.transitions()
    buf = ReplayBuffer(max(capacity, len(rewards)), obs.shape[1], actions.shape[1])
    buf.extend(obs, actions, rewards, next_obs, dones)
    return buf
