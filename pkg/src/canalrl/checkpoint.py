"""Agent checkpoints: a text header followed by little-endian float64 arrays.

Header lines (ASCII, one per line)::

    canalrl-checkpoint 1
    config_hash <hex>
    update_count <int>
    net <name> <layer sizes comma-separated>
    opt <name> step=<int> lr=<float> beta1=<float> beta2=<float> eps=<float>
    end

After ``end\\n`` come the flat parameters of value, value_target, q, policy,
then first and second moments for the value, q and policy optimizers.
"""
from __future__ import annotations

import warnings
from pathlib import Path

import numpy as np

from .nn import AdamState, params_from_flat, params_to_flat
from .sac import AgentNets

FORMAT_VERSION = 1
_MAGIC = "canalrl-checkpoint"
_NETS = ("value", "value_target", "q", "policy")
_OPTS = (("value", "value_opt"), ("q", "q_opt"), ("policy", "policy_opt"))


class ConfigHashMismatch(UserWarning):
    pass


def dumps(nets: AgentNets, config_hash: str = "") -> bytes:
    lines = [f"{_MAGIC} {FORMAT_VERSION}", f"config_hash {config_hash or '-'}", f"update_count {nets.update_count}"]
    blobs = []
    for name in _NETS:
        p = getattr(nets, name)
        lines.append(f"net {name} {','.join(str(n) for n in p.layer_sizes)}")
        blobs.append(params_to_flat(p))
    for net_name, opt_name in _OPTS:
        st: AdamState = getattr(nets, opt_name)
        lines.append(f"opt {net_name} step={st.step_count} lr={st.learning_rate!r} beta1={st.beta1!r} "
                     f"beta2={st.beta2!r} eps={st.epsilon!r}")
        blobs.append(params_to_flat(st.first_moment))
        blobs.append(params_to_flat(st.second_moment))
    lines.append("end")
    header = ("\n".join(lines) + "\n").encode("ascii")
    return header + np.concatenate(blobs).astype("<f8").tobytes()


def loads(data: bytes, expected_hash: str = ""):
    """Returns ``(nets, config_hash)``; warns if ``expected_hash`` differs."""
    marker = b"\nend\n"
    cut = data.find(marker)
    if cut < 0:
        raise ValueError("checkpoint header is not terminated")
    header = data[:cut].decode("ascii").split("\n")
    payload = np.frombuffer(data[cut + len(marker):], dtype="<f8").astype(np.float64)
    magic = header[0].split()
    if len(magic) != 2 or magic[0] != _MAGIC or int(magic[1]) != FORMAT_VERSION:
        raise ValueError(f"not a version-{FORMAT_VERSION} canalrl checkpoint")
    config_hash = header[1].split()[1]
    config_hash = "" if config_hash == "-" else config_hash
    update_count = int(header[2].split()[1])
    sizes, opts = {}, {}
    for line in header[3:]:
        kind, name, rest = line.split(" ", 2)
        if kind == "net":
            sizes[name] = tuple(int(n) for n in rest.split(","))
        elif kind == "opt":
            opts[name] = dict(kv.split("=", 1) for kv in rest.split())
        else:
            raise ValueError(f"unknown checkpoint header line {line!r}")
    pos = 0

    def take(layer_sizes):
        nonlocal pos
        n = sum(a * b + b for a, b in zip(layer_sizes[:-1], layer_sizes[1:]))
        if pos + n > payload.size:
            raise ValueError("checkpoint payload truncated")
        p = params_from_flat(layer_sizes, payload[pos:pos + n])
        pos += n
        return p

    nets = {name: take(sizes[name]) for name in _NETS}
    for net_name, opt_name in _OPTS:
        o = opts[net_name]
        m = take(sizes[net_name])
        v = take(sizes[net_name])
        nets[opt_name] = AdamState(m, v, int(o["step"]), float(o["lr"]), float(o["beta1"]),
                                   float(o["beta2"]), float(o["eps"]))
    if pos != payload.size:
        raise ValueError("checkpoint payload has trailing data")
    if expected_hash and config_hash != expected_hash:
        warnings.warn(f"checkpoint config hash {config_hash or '(none)'} differs from {expected_hash}",
                      ConfigHashMismatch, stacklevel=2)
    return AgentNets(update_count=update_count, **nets), config_hash


def save_checkpoint(nets: AgentNets, path, config_hash: str = "") -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(dumps(nets, config_hash))


def load_checkpoint(path, expected_hash: str = ""):
    return loads(Path(path).read_bytes(), expected_hash)
