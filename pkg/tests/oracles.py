"""Independent reference computations used as test oracles.

Nothing here calls the package's forward/backward/loss code: networks are
evaluated with explicit per-sample loops and gradients come from central
finite differences.
"""
import math

import numpy as np

from canalrl.nn import MlpParams


def loop_forward(params: MlpParams, x):
    """Per-sample, per-unit evaluation. Returns (output, relu activation pattern)."""
    x = np.asarray(x, dtype=float)
    rows = x if x.ndim == 2 else x[None]
    outs, pattern = [], []
    for row in rows:
        h = list(row)
        for l, (w, b) in enumerate(zip(params.weights, params.biases)):
            z = [sum(w[i, j] * h[j] for j in range(len(h))) + b[i] for i in range(w.shape[0])]
            if l < len(params.weights) - 1:
                pattern.extend(zi > 0 for zi in z)
                h = [max(zi, 0.0) for zi in z]
            else:
                h = z
        outs.append(h)
    out = np.array(outs)
    return (out if x.ndim == 2 else out[0]), tuple(pattern)


def np_forward(params: MlpParams, x):
    """Vectorized reference forward (kept separate from the package code)."""
    h = np.atleast_2d(np.asarray(x, dtype=float))
    pattern = []
    n = len(params.weights)
    for l in range(n):
        z = h @ params.weights[l].T + params.biases[l]
        if l < n - 1:
            pattern.append(z > 0)
            h = np.where(z > 0, z, 0.0)
        else:
            h = z
    return h, pattern


def tanh_gaussian(mean, raw_log_std, noise):
    ls = np.clip(raw_log_std, -20.0, 2.0)
    sigma = np.exp(ls)
    u = mean + sigma * noise
    a = np.tanh(u)
    dens = -0.5 * ((u - mean) / sigma) ** 2 - np.log(sigma) - 0.5 * math.log(2 * math.pi)
    logp = np.sum(dens - np.log(1.0 - a ** 2 + 1e-6), axis=-1)
    clip_pattern = (raw_log_std > -20.0) & (raw_log_std < 2.0)
    return a, logp, clip_pattern


def ref_value_loss(nets, batch, alpha, noise):
    out, p1 = np_forward(nets.policy, batch.obs)
    k = out.shape[1] // 2
    a, logp, cp = tanh_gaussian(out[:, :k], out[:, k:], noise)
    q, p2 = np_forward(nets.q, np.hstack([batch.obs, a]))
    v, p3 = np_forward(nets.value, batch.obs)
    r = v[:, 0] - (q[:, 0] - alpha * logp)
    return 0.5 * np.mean(r ** 2), _sig(p1, p2, p3, [cp])


def ref_q_loss(nets, batch, gamma):
    vt, p1 = np_forward(nets.value_target, batch.next_obs)
    target = batch.rewards + gamma * (1.0 - batch.dones) * vt[:, 0]
    q, p2 = np_forward(nets.q, np.hstack([batch.obs, batch.actions]))
    return 0.5 * np.mean((q[:, 0] - target) ** 2), _sig(p1, p2)


def ref_policy_loss(nets, batch, alpha, noise):
    out, p1 = np_forward(nets.policy, batch.obs)
    k = out.shape[1] // 2
    a, logp, cp = tanh_gaussian(out[:, :k], out[:, k:], noise)
    q, p2 = np_forward(nets.q, np.hstack([batch.obs, a]))
    return np.mean(alpha * logp - q[:, 0]), _sig(p1, p2, [cp])


def _sig(*groups):
    return tuple(m.tobytes() for g in groups for m in g)


def fd_gradient(loss_fn, params: MlpParams, h=1e-5, max_shrink=3):
    """Central differences of ``loss_fn(params) -> (loss, pattern)`` for every parameter.

    If the +-h evaluations straddle a ReLU/clip kink (pattern differs from the
    unperturbed one) the step is shrunk by 100x, up to ``max_shrink`` times.
    """
    _, base = loss_fn(params)
    arrays = params.arrays()
    grads = []
    for k, arr in enumerate(arrays):
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            step = h
            for _ in range(max_shrink + 1):
                vals, same = [], True
                for sgn in (1.0, -1.0):
                    pert = [a.copy() for a in arrays]
                    pert[k][idx] += sgn * step
                    val, pat = loss_fn(params.with_arrays(pert))
                    vals.append(val)
                    same &= pat == base
                if same:
                    break
                step /= 100.0
            g[idx] = (vals[0] - vals[1]) / (2.0 * step)
        grads.append(g)
    return grads


def grad_mismatch(analytic, numeric, rel=1e-4, abs_floor=1e-6):
    """Components failing |a-n| <= max(rel*max(|a|,|n|), abs_floor); returns (count, worst ratio)."""
    bad, worst = 0, 0.0
    for a, n in zip(analytic, numeric):
        tol = np.maximum(rel * np.maximum(np.abs(a), np.abs(n)), abs_floor)
        ratio = np.abs(a - n) / tol
        bad += int(np.sum(ratio > 1.0))
        worst = max(worst, float(ratio.max()) if ratio.size else 0.0)
    return bad, worst


def direct_dft(x):
    """O(N^2) DFT by explicit summation."""
    x = np.asarray(x, dtype=float)
    n = x.size
    k = np.arange(n)[:, None]
    t = np.arange(n)[None, :]
    return (x[None, :] * np.exp(-2j * np.pi * k * t / n)).sum(axis=1)


def direct_band(forces, fs, f_lo, f_hi):
    x = np.asarray(forces, dtype=float)
    x = x - x.mean()
    n = x.size
    X = direct_dft(x)
    total = 0.0
    for k in range(1, n // 2 + 1):
        f = k * fs / n
        if f_lo <= f <= f_hi:
            total += 2.0 * abs(X[k]) / n
    return total
