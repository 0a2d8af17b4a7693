"""Evaluation rollouts for a trained agent or the scripted baseline."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from pathlib import Path
from typing import Optional

import numpy as np

from .env import CanalAnatomy
from .expert import Episode, ExpertPolicyParams, expert_episode, rollout
from .metrics import BatchReport, episode_metrics
from .reward import RewardConfig
from .sac import AgentNets, select_action


def evaluation_seeds(seed: int, n: int) -> list:
    """Per-episode reset seeds, disjoint in practice from training resets."""
    return [int(s) for s in np.random.default_rng([seed, 0xE7A1]).integers(0, 2**31 - 1, size=n)]


def agent_episode(nets: AgentNets, anatomy: CanalAnatomy, seed: int, mode: str = "deterministic",
                  reward_cfg: RewardConfig = RewardConfig()) -> Episode:
    rng = np.random.default_rng([seed, 2])
    return rollout(anatomy, lambda st, ob: select_action(nets, ob, mode, rng), seed, reward_cfg)


@dataclass
class EvaluationResult:
    report: BatchReport
    episodes: list  # of Episode, sorted by seed

    def force_traces(self) -> str:
        """Per-step force modulus for every episode: ``episode_id  t  F``."""
        lines = ["episode_id\tt\tF"]
        for ep in self.episodes:
            for k, f in enumerate(ep.forces, start=1):
                lines.append(f"{ep.seed}\t{k * ep.dt!r}\t{float(f)!r}")
        return "\n".join(lines) + "\n"

    def write_force_traces(self, path) -> None:
        Path(path).write_text(self.force_traces())


def _run_one(seed, nets, anatomy, mode, reward_cfg, expert_params):
    if nets is None:
        return expert_episode(anatomy, expert_params, seed, reward_cfg)
    return agent_episode(nets, anatomy, seed, mode, reward_cfg)


def evaluate(anatomy: CanalAnatomy, episodes: int, seed: int, nets: Optional[AgentNets] = None,
             mode: str = "deterministic", expert_params: ExpertPolicyParams = ExpertPolicyParams(),
             reward_cfg: RewardConfig = RewardConfig(), workers: int = 1,
             label: Optional[str] = None) -> EvaluationResult:
    """Roll out ``episodes`` episodes; ``nets=None`` evaluates the scripted expert.

    With ``workers > 1`` episodes run in separate processes, each holding its
    own copy of the (immutable) policy; results are ordered by seed either way.
    """
    if episodes < 1:
        raise ValueError("need at least one evaluation episode")
    if mode not in ("deterministic", "stochastic"):
        raise ValueError(f"unknown mode {mode!r}")
    seeds = sorted(evaluation_seeds(seed, episodes))
    fn = partial(_run_one, nets=nets, anatomy=anatomy, mode=mode, reward_cfg=reward_cfg,
                 expert_params=expert_params)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            eps = list(pool.map(fn, seeds))
    else:
        eps = [fn(s) for s in seeds]
    label = label or ("oracle" if nets is None else "agent")
    report = BatchReport([episode_metrics(ep) for ep in eps], [ep.seed for ep in eps], label)
    return EvaluationResult(report, eps)
