"""
Training a small agent
======================

Pretrain on demonstrations, then run a short stretch of online training and
evaluate the deterministic policy. Settings are shrunk so this finishes in
about a minute; the published configuration uses 1000 episodes.
"""

from dataclasses import replace

import numpy as np

from canalrl.env import CanalAnatomy
from canalrl.evaluate import evaluate
from canalrl.expert import ExpertPolicyParams, generate_demonstrations
from canalrl.sac import SacHyperparams, expert_buffer_from_demos, make_agent, train

anatomy = CanalAnatomy()
demos = generate_demonstrations(anatomy, ExpertPolicyParams(), 50, seed=0)
expert = expert_buffer_from_demos(demos)
print("expert buffer:", len(expert), "transitions")

hp = replace(SacHyperparams(), pretrain_updates=300, hidden_sizes=(64, 64))
nets = make_agent(np.random.default_rng(0), hidden=hp.hidden_sizes)

# Before any updates the policy wanders.
before = evaluate(anatomy, 5, seed=1, nets=nets, label="untrained")
print("untrained success rate:", before.report.success_rate)

result = train(anatomy, nets, expert, hp, episodes=60, seed=0)
returns = np.array([e.cumulative_reward for e in result.episodes])
print("updates:", result.nets.update_count)
print("mean return, first 10 episodes:", returns[:10].mean().round(1))
print("mean return, last 10 episodes: ", returns[-10:].mean().round(1))

after = evaluate(anatomy, 10, seed=1, nets=result.nets, label="agent")
print("trained success rate:", after.report.success_rate)
print("median completion time (s):", after.report.summary()["t_e"].median)
