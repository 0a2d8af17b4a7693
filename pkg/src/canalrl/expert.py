"""Scripted path-following demonstrator and the demonstration file format."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .env import (ACTION_DIM, OBS_DIM, CanalAnatomy, EnvState, axis_to_pitch_yaw,
                  centerline_point, env_reset, env_step, nearest_centerline, wrap_angle)
from .reward import RewardConfig, reward_from_events


@dataclass(frozen=True)
class ExpertPolicyParams:
    gain_translation: float = 0.8  # mm commanded per mm of error
    gain_rotation: float = 0.6  # rad commanded per rad of error
    action_noise_std: float = 0.05
    lookahead: float = 0.05  # arc-length fraction

    def __post_init__(self):
        if self.gain_translation < 0 or self.gain_rotation < 0:
            raise ValueError("gains must be non-negative")
        if not 0.0 <= self.action_noise_std < 0.5:
            raise ValueError("action_noise_std must lie in [0, 0.5)")


def expert_action(state: EnvState, anatomy: CanalAnatomy, params: ExpertPolicyParams,
                  rng: np.random.Generator) -> np.ndarray:
    """Proportional controller toward a look-ahead point on the centerline.

    Translation drives the tip toward the centerline point ``lookahead`` ahead
    of the tip's nearest point; pitch and yaw align the instrument axis with
    the centerline tangent there. The translation command is rescaled as a
    whole when it saturates so its direction is preserved.
    """
    if state.done:
        raise RuntimeError("expert queried on a finished episode")
    tip = state.pose.position
    s_near = float(nearest_centerline(anatomy, tip)[0][0])
    goal, tangent = centerline_point(anatomy, min(1.0, s_near + params.lookahead))

    trans = params.gain_translation * (goal - tip) / anatomy.max_translation_step_mm
    peak = np.max(np.abs(trans))
    if peak > 1.0:
        trans = trans / peak

    pitch, yaw = axis_to_pitch_yaw(tangent)
    err = wrap_angle(np.array([pitch, yaw]) - state.pose.orientation[1:3])
    rot = params.gain_rotation * err / anatomy.max_rotation_step_rad

    action = np.concatenate([trans, rot])
    if params.action_noise_std > 0:
        action = action + rng.normal(0.0, params.action_noise_std, size=ACTION_DIM)
    return np.clip(action, -1.0, 1.0)


@dataclass
class Episode:
    """One rolled-out episode; arrays are indexed by step."""

    seed: int
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_obs: np.ndarray
    dones: np.ndarray
    forces: np.ndarray  # contact-force modulus after each step, N
    checkpoint_distances: np.ndarray  # mm
    checkpoints_reached: np.ndarray
    success: bool
    steps: int
    dt: float

    @property
    def elapsed_time(self) -> float:
        return self.steps * self.dt


def rollout(anatomy: CanalAnatomy, policy, seed: int, reward_cfg: RewardConfig = RewardConfig()) -> Episode:
    """Run ``policy(state, obs) -> action`` from ``env_reset(anatomy, seed)`` to termination."""
    state, obs = env_reset(anatomy, seed)
    rows = []
    while not state.done:
        action = np.asarray(policy(state, obs), dtype=np.float64)
        new_state, new_obs, ev = env_step(state, action, anatomy)
        r = reward_from_events(ev, reward_cfg)
        rows.append((obs, np.clip(action, -1.0, 1.0), r, new_obs, new_state.done, ev.force_modulus,
                     ev.checkpoint_distance, ev.checkpoint_reached))
        state, obs = new_state, new_obs
    cols = list(zip(*rows))
    return Episode(
        seed=seed,
        obs=np.array(cols[0]),
        actions=np.array(cols[1]),
        rewards=np.array(cols[2]),
        next_obs=np.array(cols[3]),
        dones=np.array(cols[4], dtype=bool),
        forces=np.array(cols[5]),
        checkpoint_distances=np.array(cols[6]),
        checkpoints_reached=np.array(cols[7], dtype=bool),
        success=state.success,
        steps=state.step_count,
        dt=anatomy.dt,
    )


def expert_episode(anatomy: CanalAnatomy, params: ExpertPolicyParams, seed: int,
                   reward_cfg: RewardConfig = RewardConfig()) -> Episode:
    # the reset consumes `seed`; action noise gets its own stream
    rng = np.random.default_rng([seed, 1])
    return rollout(anatomy, lambda st, ob: expert_action(st, anatomy, params, rng), seed, reward_cfg)


class OracleFailure(RuntimeError):
    pass


@dataclass
class DemonstrationSet:
    episodes: list
    anatomy_hash: str
    seed: int
    episode_seeds: list = field(default_factory=list)

    @property
    def episode_count(self) -> int:
        return len(self.episodes)

    @property
    def n_transitions(self) -> int:
        return sum(len(ep["rewards"]) for ep in self.episodes)

    @property
    def success_rate(self) -> float:
        if not self.episodes:
            return 0.0
        return float(np.mean([bool(ep["success"]) for ep in self.episodes]))

    def transitions(self):
        """Stacked (obs, actions, rewards, next_obs, dones) across all episodes."""
        keys = ("obs", "actions", "rewards", "next_obs", "dones")
        return tuple(np.concatenate([ep[k] for ep in self.episodes]) for k in keys)


def _episode_record(ep: Episode) -> dict:
    return {"obs": ep.obs, "actions": ep.actions, "rewards": ep.rewards, "next_obs": ep.next_obs,
            "dones": ep.dones, "success": ep.success}


def generate_demonstrations(anatomy: CanalAnatomy, params: ExpertPolicyParams, episode_count: int,
                            seed: int, reward_cfg: RewardConfig = RewardConfig(),
                            max_failure_rate: float = 0.5) -> DemonstrationSet:
    """Roll out ``episode_count`` expert episodes with seeds derived from ``seed``."""
    if episode_count < 1:
        raise ValueError("episode_count must be >= 1")
    seeds = [int(x) for x in np.random.default_rng(seed).integers(0, 2**31 - 1, size=episode_count)]
    episodes = [expert_episode(anatomy, params, s, reward_cfg) for s in seeds]
    failures = sum(not ep.success for ep in episodes)
    if failures / episode_count > max_failure_rate:
        raise OracleFailure(
            f"expert failed {failures}/{episode_count} episodes on flexion "
            f"{anatomy.flexion_angle_deg} deg; anatomy may be unsolvable with these gains")
    return DemonstrationSet([_episode_record(ep) for ep in episodes], anatomy.config_hash(), seed, seeds)


# --- file format -------------------------------------------------------------
# Header: "# canalrl-demos v1 anatomy_hash=<hex> seed=<int> count=<int> seeds=<a,b,...>"
# Then per transition: 12 obs, 5 action, reward, 12 next-obs, done (0/1),
# tab-separated, with a blank line closing each episode.

_HEADER = "# canalrl-demos v1"


def _fmt(x: float) -> str:
    return repr(float(x))


def write_demonstrations(demos: DemonstrationSet, path) -> None:
    lines = [f"{_HEADER} anatomy_hash={demos.anatomy_hash} seed={demos.seed} "
             f"count={demos.episode_count} seeds={','.join(str(s) for s in demos.episode_seeds)}"]
    for ep in demos.episodes:
        lines.append(f"# episode success={int(bool(ep['success']))}")
        for o, a, r, no, d in zip(ep["obs"], ep["actions"], ep["rewards"], ep["next_obs"], ep["dones"]):
            fields = [_fmt(v) for v in o] + [_fmt(v) for v in a] + [_fmt(r)] + [_fmt(v) for v in no]
            fields.append("1" if d else "0")
            lines.append("\t".join(fields))
    Path(path).write_text("\n".join(lines) + "\n")


def read_demonstrations(path) -> DemonstrationSet:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith(_HEADER):
        raise ValueError(f"{path}: not a demonstration file (bad header)")
    meta = dict(tok.split("=", 1) for tok in text[0][len(_HEADER):].split())
    width = 2 * OBS_DIM + ACTION_DIM + 2
    episodes, rows, success = [], [], False

    def close():
        if rows:
            arr = np.array([r[:-1] for r in rows], dtype=np.float64)
            episodes.append({
                "obs": arr[:, :OBS_DIM],
                "actions": arr[:, OBS_DIM:OBS_DIM + ACTION_DIM],
                "rewards": arr[:, OBS_DIM + ACTION_DIM],
                "next_obs": arr[:, OBS_DIM + ACTION_DIM + 1:],
                "dones": np.array([r[-1] for r in rows], dtype=bool),
                "success": success,
            })

    for lineno, line in enumerate(text[1:], start=2):
        if line.startswith("# episode"):
            close()
            rows = []
            success = line.strip().endswith("success=1")
            continue
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != width:
            raise ValueError(f"{path}:{lineno}: expected {width} fields, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts[:-1]] + [parts[-1] == "1"])
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    close()
    seeds = [int(s) for s in meta.get("seeds", "").split(",") if s]
    demos = DemonstrationSet(episodes, meta["anatomy_hash"], int(meta["seed"]), seeds)
    if demos.episode_count != int(meta["count"]):
        raise ValueError(f"{path}: header says {meta['count']} episodes, found {demos.episode_count}")
    return demos
