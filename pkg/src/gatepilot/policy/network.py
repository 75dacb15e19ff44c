"""Fully-connected policy/value networks with manual backprop.

The actor is a 3x64 MLP from the 24-entry observation to four motor
commands; the critic mirrors it with its own width (64 or 256).  Both
use tanh or relu activations per configuration.  Action exploration is
a state-independent learned log-std per motor.  Everything is float64
numpy; gradients are hand-written and verified against finite
differences in the tests.

Weights serialize to a small versioned flat binary (magic ``GPW1``:
header with layer dimensions, then row-major float64 matrices and
biases) plus a JSON mirror for inspection.
"""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"GPW1"
_ACTIVATIONS = {"tanh": 0, "relu": 1}
_ACT_NAMES = {v: k for k, v in _ACTIVATIONS.items()}


class Mlp:
    """Plain MLP; hidden activations per ``activation``, linear output."""

    def __init__(self, dims, activation="tanh", rng=None, out_gain=0.01):
        self.dims = list(dims)
        self.activation = activation
        self.weights = []
        self.biases = []
        if rng is None:
            rng = np.random.default_rng(0)
        for i, (n_in, n_out) in enumerate(zip(dims[:-1], dims[1:])):
            gain = out_gain if i == len(dims) - 2 else np.sqrt(2.0)
            self.weights.append(_orthogonal(n_in, n_out, gain, rng))
            self.biases.append(np.zeros(n_out))

    def forward(self, x, want_cache=False):
        h = np.asarray(x, dtype=np.float64)
        cache = [h]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i != last:
                h = np.tanh(h) if self.activation == "tanh" else np.maximum(h, 0.0)
            cache.append(h)
        return (h, cache) if want_cache else h

    def backward(self, d_out, cache):
        """Gradients of sum(d_out * output) wrt parameters and input."""
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        delta = np.asarray(d_out, dtype=np.float64)
        last = len(self.weights) - 1
        for i in range(last, -1, -1):
            h_in = cache[i]
            if i != last:
                h_out = cache[i + 1]
                if self.activation == "tanh":
                    delta = delta * (1.0 - h_out * h_out)
                else:
                    delta = delta * (h_out > 0.0)
            grads_w[i] = h_in.T @ delta
            grads_b[i] = delta.sum(axis=0)
            if i > 0:
                delta = delta @ self.weights[i].T
        return grads_w, grads_b

    def params(self):
        return self.weights + self.biases

    def set_params(self, arrays):
        n = len(self.weights)
        self.weights = [np.asarray(a, dtype=np.float64) for a in arrays[:n]]
        self.biases = [np.asarray(a, dtype=np.float64) for a in arrays[n:]]


def _orthogonal(n_in, n_out, gain, rng):
    a = rng.normal(size=(max(n_in, n_out), min(n_in, n_out)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))   # fix the sign convention
    if n_in < n_out:
        q = q.T
    return gain * q[:n_in, :n_out].copy()


@dataclass
class MlpPolicy:
    """Actor + critic + exploration noise + fixed observation scaling."""

    pi: Mlp
    vf: Mlp
    log_std: np.ndarray
    obs_scale: np.ndarray
    meta: dict = field(default_factory=dict)

    @classmethod
    def create(cls, obs_dim=24, act_dim=4, hidden_pi=64, hidden_vf=256,
               activation="tanh", init_log_std=-1.0, obs_scale=None, seed=0,
               init_out_bias=0.0):
        rng = np.random.default_rng(seed)
        pi = Mlp([obs_dim] + [hidden_pi] * 3 + [act_dim], activation, rng,
                 out_gain=0.01)
        # biasing the initial output toward low throttle keeps the cold
        # policy airborne long enough to see the progress signal
        pi.biases[-1][:] = init_out_bias
        vf = Mlp([obs_dim] + [hidden_vf] * 3 + [1], activation, rng,
                 out_gain=1.0)
        if obs_scale is None:
            obs_scale = np.ones(obs_dim)
        return cls(pi=pi, vf=vf,
                   log_std=np.full(act_dim, float(init_log_std)),
                   obs_scale=np.asarray(obs_scale, dtype=np.float64),
                   meta={"activation": activation})

    def scale(self, obs):
        return np.asarray(obs, dtype=np.float64) / self.obs_scale

    def action_mean(self, obs):
        return self.pi.forward(self.scale(obs))

    def value(self, obs):
        return self.vf.forward(self.scale(obs))[..., 0]


def act(policy: MlpPolicy, obs, deterministic: bool = True, rng=None):
    """Motor command in [0, 1]; stochastic mode adds Gaussian noise.

    Returns (command, raw_action): the raw (unclamped) sample is what
    PPO's likelihood sees; the clamped command is what flies.
    """
    mean = policy.action_mean(obs)
    if deterministic:
        raw = mean
    else:
        if rng is None:
            rng = np.random.default_rng()
        raw = mean + np.exp(policy.log_std) * rng.standard_normal(mean.shape)
    return np.clip(raw, 0.0, 1.0), raw


DEFAULT_OBS_SCALE = np.array(
    [10.0, 10.0, 10.0,          # gate-frame position
     10.0, 10.0, 10.0,          # gate-frame velocity
     np.pi, np.pi, np.pi,       # attitude angles
     10.0, 10.0, 10.0,          # world body rates
     1.0, 1.0, 1.0, 1.0,        # normalized motor speeds
     10.0, 10.0, 10.0,          # next-gate offset
     np.pi,                     # next-gate heading
     1.0, 1.0, 1.0, 1.0]        # previous command
)


def save_policy(policy: MlpPolicy, path):
    """Flat binary (GPW1) plus a JSON mirror next to it."""
    path = Path(path)
    buf = bytearray()
    buf += MAGIC
    act_code = _ACTIVATIONS[policy.meta.get("activation", "tanh")]
    buf += struct.pack("<III", 1, act_code, len(policy.obs_scale))
    for net in (policy.pi, policy.vf):
        buf += struct.pack("<I", len(net.dims))
        buf += struct.pack(f"<{len(net.dims)}I", *net.dims)
    arrays = _ordered_arrays(policy)
    for a in arrays:
        buf += np.ascontiguousarray(a, dtype=np.float64).tobytes()
    path.write_bytes(bytes(buf))

    mirror = {
        "format": "GPW1",
        "activation": policy.meta.get("activation", "tanh"),
        "pi_dims": policy.pi.dims,
        "vf_dims": policy.vf.dims,
        "obs_scale": policy.obs_scale.tolist(),
        "log_std": policy.log_std.tolist(),
        "pi": [[w.tolist(), b.tolist()]
               for w, b in zip(policy.pi.weights, policy.pi.biases)],
        "vf": [[w.tolist(), b.tolist()]
               for w, b in zip(policy.vf.weights, policy.vf.biases)],
    }
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(mirror, sort_keys=True))


def _ordered_arrays(policy):
    arrays = [policy.obs_scale, policy.log_std]
    for net in (policy.pi, policy.vf):
        for w, b in zip(net.weights, net.biases):
            arrays.append(w)
            arrays.append(b)
    return arrays


def load_policy(path) -> MlpPolicy:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a GPW1 weights file")
    off = 4
    version, act_code, obs_dim = struct.unpack_from("<III", raw, off)
    off += 12
    if version != 1:
        raise ValueError(f"{path}: unsupported version {version}")
    dims = []
    for _ in range(2):
        (n,) = struct.unpack_from("<I", raw, off)
        off += 4
        dims.append(list(struct.unpack_from(f"<{n}I", raw, off)))
        off += 4 * n
    pi_dims, vf_dims = dims

    def take(shape):
        nonlocal off
        size = int(np.prod(shape))
        a = np.frombuffer(raw, dtype="<f8", count=size, offset=off).reshape(shape)
        off += 8 * size
        return a.copy()

    obs_scale = take((obs_dim,))
    log_std = take((pi_dims[-1],))
    activation = _ACT_NAMES[act_code]
    policy = MlpPolicy.create(obs_dim=pi_dims[0], act_dim=pi_dims[-1],
                              hidden_pi=pi_dims[1], hidden_vf=vf_dims[1],
                              activation=activation)
    if policy.pi.dims != pi_dims or policy.vf.dims != vf_dims:
        raise ValueError(f"{path}: unexpected layer shape {pi_dims}/{vf_dims}")
    for net_dims, net in ((pi_dims, policy.pi), (vf_dims, policy.vf)):
        ws, bs = [], []
        for n_in, n_out in zip(net_dims[:-1], net_dims[1:]):
            ws.append(take((n_in, n_out)))
            bs.append(take((n_out,)))
        net.set_params(ws + bs)
    if off != len(raw):
        raise ValueError(f"{path}: trailing bytes ({len(raw) - off})")
    policy.obs_scale = obs_scale
    policy.log_std = log_std
    policy.meta = {"activation": activation}
    return policy
