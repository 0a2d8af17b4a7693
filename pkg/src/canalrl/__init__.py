"""Soft actor-critic training and skill metrics for passing a rigid
instrument through a simulated cervical canal."""

from .env import CanalAnatomy, CanalEnv, centerline_point, contact_force, env_reset, env_step, observe
from .expert import ExpertPolicyParams, expert_action, generate_demonstrations
from .metrics import batch_report, force_fft_band, integral_force, max_force
from .reward import RewardConfig, RewardInputs, compute_reward
from .sac import AgentNets, ReplayBuffer, SacHyperparams, make_agent, select_action, train, update_round

__version__ = "0.1.0"
