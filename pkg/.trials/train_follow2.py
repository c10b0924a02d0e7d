"""Follow-policy with per-step OU exploration reading."""
import sys, time
import numpy as np
from rlfollow.ddpg import DdpgConfig, train_policy, FOLLOW_HIDDEN, save_training_artifacts
from rlfollow.stochastic import OuParams
from rlfollow.rewards import AgentParams
from rlfollow.agent import PolicyController
from rlfollow.harness import run_ou_episodes, realized_time_gap
from rlfollow.sim_core import SimConfig, run_episode

PER_STEP_OU = OuParams(theta=1.5, mu=0.0, sigma=0.2/np.sqrt(0.1), dt=0.1)
seed = int(sys.argv[1]); episodes = int(sys.argv[2]); T = float(sys.argv[3])
p = AgentParams(T=T)
tag = f"nf_follow_T{T}_s{seed}"
cfg = DdpgConfig(episodes=episodes, hidden=FOLLOW_HIDDEN, seed=seed, ou=PER_STEP_OU)
t0 = time.time()
res = train_policy("follow", cfg, p)
print(f"[{tag}] {time.time()-t0:.0f}s best trailing30 {res.best_trailing_mean:.2f} at ep {res.best_episode}", flush=True)
save_training_artifacts(res, cfg, p, f".trials/{tag}")

ctl = PolicyController(res.best_actor, p, "follow")
traces = run_ou_episodes(lambda: [ctl], 120, seed=999, params=p)
crashes = sum(t.crashed for t in traces)
ming = min(t.gaps.min() for t in traces)
print(f"[{tag}] crashes {crashes}/120, min gap {ming:.2f}", flush=True)
for v_e in (4.0, 7.5, 10.0, 13.0):
    u = np.full(2001, v_e)
    tr = run_episode(u, [ctl], [v_e], [p.g_min + v_e*p.T], SimConfig(episode_steps=2000), p)
    tg = (tr.gaps[-300:,0].mean() - p.g_min) / v_e
    print(f"[{tag}] const {v_e}: realized T {tg:.3f} crash {tr.crashed}", flush=True)
