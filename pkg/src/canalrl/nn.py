"""Dense networks with hand-written backprop, Adam, and a tanh-squashed Gaussian head.

Everything here is value-semantics: functions return new arrays and never
mutate their arguments, so parameter snapshots can be shared freely.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
SQUASH_EPS = 1e-6
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class MlpParams:
    """Weights and biases of a fully connected ReLU network.

    ``weights[l]`` has shape ``(layer_sizes[l+1], layer_sizes[l])``.
    """

    layer_sizes: tuple
    weights: tuple
    biases: tuple

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.layer_sizes)
        if len(sizes) < 2 or any(n <= 0 for n in sizes):
            raise ValueError(f"invalid layer_sizes {self.layer_sizes!r}")
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ValueError("need one weight matrix and one bias per layer")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if np.shape(w) != (sizes[l + 1], sizes[l]):
                raise ValueError(f"weight {l} has shape {np.shape(w)}, expected {(sizes[l + 1], sizes[l])}")
            if np.shape(b) != (sizes[l + 1],):
                raise ValueError(f"bias {l} has shape {np.shape(b)}, expected {(sizes[l + 1],)}")
        object.__setattr__(self, "layer_sizes", sizes)
        object.__setattr__(self, "weights", tuple(np.asarray(w, dtype=np.float64) for w in self.weights))
        object.__setattr__(self, "biases", tuple(np.asarray(b, dtype=np.float64) for b in self.biases))

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def arrays(self) -> list:
        """Parameter arrays in canonical order: w0, b0, w1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def with_arrays(self, arrays: Sequence[np.ndarray]) -> "MlpParams":
        return MlpParams(self.layer_sizes, tuple(arrays[0::2]), tuple(arrays[1::2]))

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


def init_mlp(layer_sizes: Sequence[int], rng: np.random.Generator) -> MlpParams:
    """Uniform(+-1/sqrt(fan_in)) weights, zero biases."""
    sizes = tuple(int(n) for n in layer_sizes)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(sizes, tuple(weights), tuple(biases))


def zeros_like_params(params: MlpParams) -> MlpParams:
    return params.with_arrays([np.zeros_like(a) for a in params.arrays()])


def _check_input(params: MlpParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != params.layer_sizes[0]:
        raise ValueError(f"input shape {x.shape} does not match input size {params.layer_sizes[0]}")
    return x


def forward_cache(params: MlpParams, x: np.ndarray):
    """Forward pass returning ``(output, activations)``.

    ``activations[l]`` is the input to layer ``l``; ReLU masks are recovered
    from them during the backward pass.
    """
    x = _check_input(params, x)
    acts = [x]
    h = x
    last = len(params.weights) - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w.T + b
        if l < last:
            h = np.maximum(z, 0.0)
            acts.append(h)
        else:
            h = z
    return h, acts


def backward_cache(params: MlpParams, acts: list, grad_output: np.ndarray):
    """Backprop ``grad_output`` through a cached forward pass.

    Batched inputs contribute the sum of per-row gradients.
    Returns ``(grad_params, grad_input)``.
    """
    g = np.asarray(grad_output, dtype=np.float64)
    batched = acts[0].ndim == 2
    expected = acts[0].shape[:-1] + (params.layer_sizes[-1],)
    if g.shape != expected:
        raise ValueError(f"grad_output shape {g.shape}, expected {expected}")
    n_layers = len(params.weights)
    gw = [None] * n_layers
    gb = [None] * n_layers
    for l in range(n_layers - 1, -1, -1):
        h = acts[l]
        if batched:
            gw[l] = g.T @ h
            gb[l] = g.sum(axis=0)
        else:
            gw[l] = np.outer(g, h)
            gb[l] = g.copy()
        g = g @ params.weights[l]
        if l > 0:
            g = g * (h > 0.0)
    grads = MlpParams(params.layer_sizes, tuple(gw), tuple(gb))
    return grads, g


def mlp_forward(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """ReLU hidden layers, linear output. Accepts one vector or a batch of rows."""
    return forward_cache(params, x)[0]


def mlp_backward(params: MlpParams, x: np.ndarray, grad_output: np.ndarray):
    """Gradients of ``sum(grad_output * mlp_forward(params, x))``."""
    _, acts = forward_cache(params, x)
    return backward_cache(params, acts, grad_output)


@dataclass(frozen=True)
class AdamState:
    first_moment: MlpParams
    second_moment: MlpParams
    step_count: int = 0
    learning_rate: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def adam_init(params: MlpParams, learning_rate: float = 3e-4, beta1: float = 0.9,
              beta2: float = 0.999, epsilon: float = 1e-8) -> AdamState:
    zeros = zeros_like_params(params)
    return AdamState(zeros, zeros, 0, learning_rate, beta1, beta2, epsilon)


def adam_step(params: MlpParams, grads: MlpParams, state: AdamState):
    """One bias-corrected Adam update. Returns ``(new_params, new_state)``."""
    if grads.layer_sizes != params.layer_sizes or state.first_moment.layer_sizes != params.layer_sizes:
        raise ValueError("gradient / optimizer shapes do not match parameters")
    if not grads.all_finite():
        raise FloatingPointError("non-finite gradient passed to adam_step")
    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params.arrays(), grads.arrays(), state.first_moment.arrays(),
                          state.second_moment.arrays()):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        p = p - state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
        new_p.append(p)
        new_m.append(m)
        new_v.append(v)
    new_state = AdamState(params.with_arrays(new_m), params.with_arrays(new_v), t,
                          state.learning_rate, b1, b2, state.epsilon)
    return params.with_arrays(new_p), new_state


@dataclass(frozen=True)
class GaussianHeadOutput:
    mean: np.ndarray
    log_std: np.ndarray
    pre_squash: np.ndarray
    action: np.ndarray
    log_prob: np.ndarray  # scalar for one sample, shape (batch,) for a batch


def gaussian_sample(mean: np.ndarray, log_std: np.ndarray, noise: np.ndarray) -> GaussianHeadOutput:
    """Reparameterized tanh-Gaussian sample.

    ``u = mean + exp(log_std) * noise``, ``action = tanh(u)``; the log
    density includes the tanh change-of-variables term with a 1e-6 floor.
    Works on single vectors or on batches (last axis is the action axis).
    """
    mean = np.asarray(mean, dtype=np.float64)
    log_std = np.clip(np.asarray(log_std, dtype=np.float64), LOG_STD_MIN, LOG_STD_MAX)
    noise = np.asarray(noise, dtype=np.float64)
    std = np.exp(log_std)
    u = mean + std * noise
    action = np.tanh(u)
    z = (u - mean) / std
    log_normal = -0.5 * z * z - log_std - HALF_LOG_2PI
    correction = np.log(1.0 - action * action + SQUASH_EPS)
    log_prob = np.sum(log_normal - correction, axis=-1)
    return GaussianHeadOutput(mean, log_std, u, action, log_prob)


def split_policy_output(out: np.ndarray):
    """Split a policy-network output into (mean, raw log_std) halves."""
    half = out.shape[-1] // 2
    return out[..., :half], out[..., half:]


def params_to_flat(params: MlpParams) -> np.ndarray:
    return np.concatenate([a.ravel() for a in params.arrays()])


def params_from_flat(layer_sizes: Sequence[int], flat: np.ndarray) -> MlpParams:
    sizes = tuple(int(n) for n in layer_sizes)
    flat = np.asarray(flat, dtype=np.float64)
    arrays, pos = [], 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        for shape in ((fan_out, fan_in), (fan_out,)):
            n = int(np.prod(shape))
            if pos + n > flat.size:
                raise ValueError("flat parameter array too short for layer_sizes")
            arrays.append(flat[pos:pos + n].reshape(shape).copy())
            pos += n
    if pos != flat.size:
        raise ValueError(f"flat parameter array has {flat.size - pos} extra values")
    return MlpParams(sizes, tuple(arrays[0::2]), tuple(arrays[1::2]))
