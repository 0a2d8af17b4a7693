import numpy as np
import pytest

from canalrl.nn import init_mlp
from canalrl.sac import AgentNets, Batch
from canalrl.nn import adam_init

_CRITERIA = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, name): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[rep.outcome]
        _CRITERIA.append((marker.args[0], marker.args[1], status))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, status in sorted(_CRITERIA):
        terminalreporter.write_line(f"criterion {number:2d} {status}  {name}")


def tiny_nets(rng, obs_dim=12, action_dim=5, hidden=(5, 4), scale=1.0):
    """Random small networks (< 200 parameters each) with non-zero biases."""

    def net(sizes):
        p = init_mlp(sizes, rng)
        arrays = [a * scale if a.ndim == 2 else rng.normal(0, 0.3, a.shape) for a in p.arrays()]
        return p.with_arrays(arrays)

    value = net((obs_dim, *hidden, 1))
    target = net((obs_dim, *hidden, 1))
    q = net((obs_dim + action_dim, *hidden, 1))
    policy = net((obs_dim, *hidden, 2 * action_dim))
    return AgentNets(value, target, q, policy, adam_init(value), adam_init(q), adam_init(policy))


def random_batch(rng, n=6, obs_dim=12, action_dim=5):
    return Batch(
        obs=rng.normal(size=(n, obs_dim)),
        actions=np.tanh(rng.normal(size=(n, action_dim))),
        rewards=rng.normal(0, 3, size=n),
        next_obs=rng.normal(size=(n, obs_dim)),
        dones=rng.random(n) < 0.3,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
