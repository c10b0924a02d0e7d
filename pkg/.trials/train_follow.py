"""Follow-policy training: one seed, long run, with behavior probes."""
import sys, time
import numpy as np
from rlfollow.ddpg import DdpgConfig, train_policy, FOLLOW_HIDDEN, save_training_artifacts
from rlfollow.rewards import AgentParams
from rlfollow.agent import PolicyController
from rlfollow.harness import run_ou_episodes, realized_time_gap

seed = int(sys.argv[1]); episodes = int(sys.argv[2]); T = float(sys.argv[3]) if len(sys.argv) > 3 else 1.5
p = AgentParams(T=T)
tag = f"follow_T{T}_s{seed}"
cfg = DdpgConfig(episodes=episodes, hidden=FOLLOW_HIDDEN, seed=seed)
t0 = time.time()
res = train_policy("follow", cfg, p)
print(f"[{tag}] {time.time()-t0:.0f}s best trailing30 {res.best_trailing_mean:.2f} at ep {res.best_episode}", flush=True)
out = f".trials/{tag}"
save_training_artifacts(res, cfg, p, out)

ctl = PolicyController(res.best_actor, p, "follow")
traces = run_ou_episodes(lambda: [ctl], 120, seed=999, params=p)
crashes = sum(t.crashed for t in traces)
ming = min(t.gaps.min() for t in traces)
tg = [np.mean(realized_time_gap(t, p)) for t in traces if len(realized_time_gap(t, p)) > 50]
print(f"[{tag}] crashes {crashes}/120, min gap {ming:.2f}, realized T {np.mean(tg):.3f} (target {T})", flush=True)
rets = [t.r_total[:,0].sum() for t in traces]
print(f"[{tag}] greedy mean return {np.mean(rets):.1f}", flush=True)
