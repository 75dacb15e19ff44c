"""Exploratory PPO training on the desk track (tuning harness)."""

import argparse
import numpy as np

from gatepilot.dynamics import ModelParams
from gatepilot.params import RandomizationSpec
from gatepilot.policy.env import EnvConfig, VecEnv
from gatepilot.policy.network import DEFAULT_OBS_SCALE, MlpPolicy, save_policy
from gatepilot.policy.ppo import PpoConfig, evaluate, train_ppo
from gatepilot.policy.reward import RewardConfig
from gatepilot.track import load_track, desk_track_path


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=2_000_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n-envs", type=int, default=128)
    ap.add_argument("--n-steps", type=int, default=64)
    ap.add_argument("--hidden-vf", type=int, default=64)
    ap.add_argument("--out-bias", type=float, default=0.2)
    ap.add_argument("--ent", type=float, default=0.003)
    ap.add_argument("--lr", type=float, default=3e-4)
    ap.add_argument("--log-std", type=float, default=-1.2)
    ap.add_argument("--epochs", type=int, default=6)
    ap.add_argument("--vmax", type=float, default=10.0)
    ap.add_argument("--gate-inner", type=float, default=1.2)
    ap.add_argument("--ground-frac", type=float, default=0.3)
    ap.add_argument("--rand", type=float, default=30.0)
    ap.add_argument("--out", type=str, default="")
    args = ap.parse_args()

    gmap = load_track(desk_track_path())
    params = ModelParams()
    rew = RewardConfig(lambda_prog=1.0, v_max=args.vmax, lambda_gate=1.5,
                       lambda_rate=0.001, lambda_offset=1.5, lambda_perc=0.01,
                       lambda_crash=10.0)
    env_cfg = EnvConfig(reward=rew, max_steps=1200,
                        gate_inner_m=args.gate_inner,
                        init_mode="mixed", ground_frac=args.ground_frac)
    env = VecEnv(gmap, params, RandomizationSpec.flat(args.rand), env_cfg,
                 args.n_envs, seed=args.seed + 1000)

    policy = MlpPolicy.create(obs_scale=DEFAULT_OBS_SCALE, seed=args.seed,
                              init_log_std=args.log_std,
                              hidden_vf=args.hidden_vf,
                              init_out_bias=args.out_bias)
    cfg = PpoConfig(total_steps=args.steps, ent_coef=args.ent,
                    learning_rate=args.lr, epochs=args.epochs,
                    n_steps=args.n_steps, seed=args.seed)
    train_ppo(env, policy, cfg, verbose=True)

    eval_env = VecEnv(gmap, params, RandomizationSpec.flat(30.0),
                      EnvConfig(reward=rew, max_steps=1500,
                                init_mode="ground"),
                      args.n_envs, seed=777)
    result = evaluate(eval_env, policy, episodes=100)
    print("EVAL(ground, 1.5m gates, 30% rand):", result)
    if args.out:
        save_policy(policy, args.out)


if __name__ == "__main__":
    main()
