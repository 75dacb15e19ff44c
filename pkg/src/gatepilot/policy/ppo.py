"""Proximal policy optimization with generalized advantage estimation.

Collects fixed-length rollouts from the vectorized environment, then
runs several epochs of clipped-surrogate updates over shuffled
minibatches.  Gradients are hand-backpropagated through the actor and
critic MLPs; a single Adam instance optimizes all parameters including
the exploration log-std.  Truncated episodes bootstrap with the value
of their final observation; terminal ones do not.

Everything derives from one seeded generator, so a (config, seed) pair
reproduces training bit for bit at a fixed thread count.
"""

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .network import MlpPolicy
from .ppo_grad import ppo_minibatch_grads


@dataclass
class PpoConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.2
    learning_rate: float = 3e-4
    n_steps: int = 128                 # rollout length per env
    epochs: int = 10
    minibatch: int = 2048
    ent_coef: float = 0.005
    vf_coef: float = 0.5
    max_grad_norm: float = 0.5
    total_steps: int = 3_000_000
    seed: int = 0
    log_every: int = 5                 # iterations between stat rows

    def __post_init__(self):
        if not 0.0 < self.clip < 1.0:
            raise ValueError("clip must be in (0, 1)")
        if not 0.0 < self.gamma <= 1.0 or not 0.0 < self.gae_lambda <= 1.0:
            raise ValueError("gamma and gae_lambda must be in (0, 1]")


class Adam:
    def __init__(self, size, lr):
        self.lr = lr
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params, grad):
        self.t += 1
        self.m = 0.9 * self.m + 0.1 * grad
        self.v = 0.999 * self.v + 0.001 * grad * grad
        mhat = self.m / (1.0 - 0.9**self.t)
        vhat = self.v / (1.0 - 0.999**self.t)
        return params - self.lr * mhat / (np.sqrt(vhat) + 1e-8)


def flatten_params(policy: MlpPolicy):
    arrays = policy.pi.params() + policy.vf.params() + [policy.log_std]
    return np.concatenate([a.ravel() for a in arrays])


def unflatten_params(policy: MlpPolicy, flat):
    arrays = policy.pi.params() + policy.vf.params() + [policy.log_std]
    out = []
    off = 0
    for a in arrays:
        out.append(flat[off:off + a.size].reshape(a.shape))
        off += a.size
    n_pi = len(policy.pi.params())
    n_vf = len(policy.vf.params())
    policy.pi.set_params(out[:n_pi])
    policy.vf.set_params(out[n_pi:n_pi + n_vf])
    policy.log_std = out[-1].copy()


def compute_gae(rewards, values, terminals, truncateds, bootstrap_values,
                last_values, gamma, lam):
    """GAE over a (T, N) rollout.

    ``bootstrap_values[t, i]`` holds V(final observation) for rows that
    truncated at step t (0 elsewhere); terminal rows bootstrap nothing.
    """
    t_len, n = rewards.shape
    adv = np.zeros((t_len, n))
    last = np.zeros(n)
    for t in range(t_len - 1, -1, -1):
        done = terminals[t] | truncateds[t]
        if t == t_len - 1:
            next_values = last_values
        else:
            next_values = values[t + 1]
        next_values = np.where(done, 0.0, next_values)
        bonus = np.where(truncateds[t], bootstrap_values[t], 0.0)
        delta = rewards[t] + gamma * (next_values + bonus) - values[t]
        last = delta + gamma * lam * np.where(done, 0.0, last)
        adv[t] = last
    returns = adv + values
    return adv, returns


@dataclass
class TrainStats:
    iterations: list = field(default_factory=list)

    def add(self, **row):
        self.iterations.append(row)

    def save_csv(self, path):
        import csv

        if not self.iterations:
            return
        keys = list(self.iterations[0].keys())
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(keys)
            for row in self.iterations:
                w.writerow([row[k] for k in keys])


def train_ppo(env, policy: MlpPolicy, cfg: PpoConfig, verbose: bool = True,
              callback=None) -> TrainStats:
    """Run PPO until ``cfg.total_steps`` environment steps.

    ``callback(iteration, stats_row)`` may return True to stop early
    (evaluation-based stopping lives outside this loop).
    """
    rng = np.random.default_rng(cfg.seed)
    n_envs = env.n
    t_len = cfg.n_steps
    opt = Adam(flatten_params(policy).size, cfg.learning_rate)
    stats = TrainStats()

    obs = env.observe()
    ep_returns: list = []
    ep_success: list = []
    global_steps = 0
    iteration = 0
    t_start = time.time()

    while global_steps < cfg.total_steps:
        iteration += 1
        batch_obs = np.empty((t_len, n_envs, obs.shape[1]))
        batch_act = np.empty((t_len, n_envs, 4))
        batch_logp = np.empty((t_len, n_envs))
        batch_rew = np.empty((t_len, n_envs))
        batch_term = np.zeros((t_len, n_envs), dtype=bool)
        batch_trunc = np.zeros((t_len, n_envs), dtype=bool)
        batch_val = np.empty((t_len, n_envs))
        batch_boot = np.zeros((t_len, n_envs))

        for t in range(t_len):
            mean = policy.action_mean(obs)
            std = np.exp(policy.log_std)
            noise = rng.standard_normal(mean.shape)
            raw = mean + std * noise
            logp = -0.5 * np.sum(noise**2, axis=1) \
                - np.sum(policy.log_std) - 2.0 * np.log(2.0 * np.pi)
            value = policy.value(obs)

            batch_obs[t] = obs
            batch_act[t] = raw
            batch_logp[t] = logp
            batch_val[t] = value

            obs, rew, term, trunc, info = env.step(np.clip(raw, 0.0, 1.0))
            batch_rew[t] = rew
            batch_term[t] = term
            batch_trunc[t] = trunc
            if info["final_obs"] is not None:
                rows = info["rows"]
                vals = policy.value(info["final_obs"])
                tr = trunc[rows]
                batch_boot[t, rows[tr]] = vals[tr]
            ep_returns.extend(info["returns"].tolist())
            ep_success.extend(info["success"].tolist())
            global_steps += n_envs

        last_values = policy.value(obs)
        adv, rets = compute_gae(batch_rew, batch_val, batch_term, batch_trunc,
                                batch_boot, last_values, cfg.gamma,
                                cfg.gae_lambda)

        flat_obs = batch_obs.reshape(-1, obs.shape[1])
        flat_act = batch_act.reshape(-1, 4)
        flat_logp = batch_logp.ravel()
        flat_adv = adv.ravel()
        flat_ret = rets.ravel()
        n_samples = len(flat_obs)

        for _ in range(cfg.epochs):
            order = rng.permutation(n_samples)
            for start in range(0, n_samples, cfg.minibatch):
                mb = order[start:start + cfg.minibatch]
                grad, _ = ppo_minibatch_grads(
                    policy, flat_obs[mb], flat_act[mb], flat_logp[mb],
                    flat_adv[mb], flat_ret[mb], cfg)
                norm = np.linalg.norm(grad)
                if norm > cfg.max_grad_norm:
                    grad = grad * (cfg.max_grad_norm / norm)
                unflatten_params(policy, opt.step(flatten_params(policy), grad))

        if ep_returns and (iteration % cfg.log_every == 0 or
                           global_steps >= cfg.total_steps):
            row = {
                "iteration": iteration,
                "steps": global_steps,
                "mean_return": float(np.mean(ep_returns[-200:])),
                "success_rate": float(np.mean(ep_success[-200:])),
                "mean_ep_count": len(ep_returns),
                "entropy": float(np.sum(policy.log_std)
                                 + 2.0 * (1.0 + np.log(2.0 * np.pi))),
                "elapsed_s": round(time.time() - t_start, 1),
            }
            stats.add(**row)
            if verbose:
                print(json.dumps(row))
            if callback is not None and callback(iteration, row):
                break
    return stats


def evaluate(env, policy: MlpPolicy, episodes: int = 100) -> dict:
    """Deterministic rollouts; success = all required gates passed."""
    done = 0
    succ = 0
    returns = []
    obs = env.observe()
    guard = 0
    while done < episodes and guard < 10_000_000:
        guard += 1
        act = np.clip(policy.action_mean(obs), 0.0, 1.0)
        obs, _, _, _, info = env.step(act)
        for r, s in zip(info["returns"], info["success"]):
            if done < episodes:
                returns.append(float(r))
                succ += bool(s)
                done += 1
    return {"episodes": done, "success_rate": succ / max(done, 1),
            "mean_return": float(np.mean(returns)) if returns else 0.0}
