"""Analytic gradients of the PPO objective for one minibatch.

Loss = -E[min(ratio * A, clip(ratio) * A)] - ent_coef * H
       + vf_coef * 0.5 * E[(V - R)^2]

with a diagonal-Gaussian policy (state-independent log-std).  The
gradient flows through the actor mean, the log-std vector and the
critic; advantages are normalized per minibatch.  Layout of the flat
gradient matches ``flatten_params``: actor weights+biases, critic
weights+biases, log-std.
"""

import numpy as np


def ppo_minibatch_grads(policy, obs, act_raw, logp_old, adv, ret, cfg):
    n = len(obs)
    x = policy.scale(obs)
    mean, cache_pi = policy.pi.forward(x, want_cache=True)
    v_raw, cache_vf = policy.vf.forward(x, want_cache=True)
    v = v_raw[:, 0]

    std = np.exp(policy.log_std)
    noise = (act_raw - mean) / std
    logp_new = (-0.5 * np.sum(noise**2, axis=1) - np.sum(policy.log_std)
                - 0.5 * len(std) * np.log(2.0 * np.pi))
    ratio = np.exp(logp_new - logp_old)

    a = adv.copy()
    a = (a - a.mean()) / (a.std() + 1e-8)

    unclipped = ratio * a
    clipped = np.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip) * a
    use_unclipped = unclipped <= clipped
    # d(-min)/d(ratio): only the active unclipped branch carries gradient
    d_ratio = np.where(use_unclipped, -a, 0.0) / n
    d_logp = d_ratio * ratio

    d_mean = d_logp[:, None] * noise / std
    d_log_std = np.sum(d_logp[:, None] * (noise**2 - 1.0), axis=0)
    d_log_std -= cfg.ent_coef  # entropy bonus: dH/dlog_std = 1

    d_v = cfg.vf_coef * (v - ret) / n

    gw_pi, gb_pi = policy.pi.backward(d_mean, cache_pi)
    gw_vf, gb_vf = policy.vf.backward(d_v[:, None], cache_vf)

    flat = np.concatenate(
        [g.ravel() for g in gw_pi] + [g.ravel() for g in gb_pi]
        + [g.ravel() for g in gw_vf] + [g.ravel() for g in gb_vf]
        + [d_log_std.ravel()]
    )
    metrics = {
        "approx_kl": float(np.mean(logp_old - logp_new)),
        "clip_frac": float(np.mean(~use_unclipped)),
        "value_loss": float(0.5 * np.mean((v - ret) ** 2)),
    }
    return flat, metrics


def ppo_loss(policy, obs, act_raw, logp_old, adv, ret, cfg):
    """Scalar PPO loss (for finite-difference checks)."""
    x = policy.scale(obs)
    mean = policy.pi.forward(x)
    v = policy.vf.forward(x)[:, 0]
    std = np.exp(policy.log_std)
    noise = (act_raw - mean) / std
    logp_new = (-0.5 * np.sum(noise**2, axis=1) - np.sum(policy.log_std)
                - 0.5 * len(std) * np.log(2.0 * np.pi))
    ratio = np.exp(logp_new - logp_old)
    a = adv.copy()
    a = (a - a.mean()) / (a.std() + 1e-8)
    surr = np.minimum(ratio * a,
                      np.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip) * a)
    entropy = np.sum(policy.log_std) + 0.5 * len(std) * (
        1.0 + np.log(2.0 * np.pi))
    return (-np.mean(surr) - cfg.ent_coef * entropy
            + cfg.vf_coef * 0.5 * np.mean((v - ret) ** 2))
