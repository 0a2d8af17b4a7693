"""
Rewards and the scripted expert
===============================

The expert is a proportional path follower. Here we roll out one episode,
look at the reward stream, and generate a small demonstration set.
"""

import numpy as np

from canalrl.env import CanalAnatomy
from canalrl.expert import ExpertPolicyParams, expert_episode, generate_demonstrations
from canalrl.reward import RewardInputs, compute_reward

# Reaching a checkpoint is worth 200; everything else is a small penalty.
print(compute_reward(RewardInputs(True, F=0.0, dt=0.02, d_c=0.0)))
print(compute_reward(RewardInputs(False, F=1.0, dt=0.1, d_c=20.0)))

anatomy = CanalAnatomy()
ep = expert_episode(anatomy, ExpertPolicyParams(), seed=0)
print("steps:", ep.steps, "success:", ep.success, "elapsed (s):", ep.elapsed_time)

# Checkpoint steps stand out as large positive rewards.
hits = np.flatnonzero(ep.checkpoints_reached)
print("checkpoint steps:", hits)
print("rewards there:", np.round(ep.rewards[hits], 2))
print("return:", ep.rewards.sum())

# Force along the way stays modest for the default bend.
print("max force (N):", ep.forces.max().round(3), " mean force (N):", ep.forces.mean().round(3))

# A demonstration set is just many seeded episodes packed together.
demos = generate_demonstrations(anatomy, ExpertPolicyParams(), episode_count=10, seed=0)
print("episodes:", demos.episode_count, "transitions:", demos.n_transitions,
      "success rate:", demos.success_rate)
