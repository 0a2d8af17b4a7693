"""Composite sparse + dense step reward."""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class RewardConfig:
    k_F: float = 2.0  # per newton of contact force
    k_t: float = 0.1  # per second elapsed
    r_c: float = 200.0  # bonus per checkpoint reached
    k_d: float = 0.4  # per centimetre to the next checkpoint

    def __post_init__(self):
        if min(self.k_F, self.k_t, self.r_c, self.k_d) < 0:
            raise ValueError("reward coefficients must be non-negative")


@dataclass(frozen=True)
class RewardInputs:
    checkpoint_reached: bool
    F: float  # contact force modulus, N
    dt: float  # s
    d_c: float  # mm


def compute_reward(inputs: RewardInputs, cfg: RewardConfig = RewardConfig()) -> float:
    """Checkpoint bonus minus force, time and distance penalties.

    ``d_c`` arrives in millimetres and is converted to centimetres before
    ``k_d`` is applied.
    """
    if inputs.F < 0 or inputs.dt < 0 or inputs.d_c < 0:
        raise ValueError(f"reward inputs must be non-negative: {inputs}")
    bonus = cfg.r_c if inputs.checkpoint_reached else 0.0
    return bonus - cfg.k_F * inputs.F - cfg.k_t * inputs.dt - cfg.k_d * (inputs.d_c / 10.0)


def reward_from_events(events, cfg: RewardConfig = RewardConfig()) -> float:
    """Reward for a canal-env ``StepEvents`` record."""
    return compute_reward(RewardInputs(events.checkpoint_reached, events.force_modulus,
                                       events.dt, events.checkpoint_distance), cfg)
