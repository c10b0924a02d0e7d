"""Trial training run: free (1500 ep) then follow (3000 ep), with behavior probes."""
import json, sys, time
import numpy as np
from rlfollow.ddpg import DdpgConfig, train_policy, FREE_HIDDEN, FOLLOW_HIDDEN, save_training_artifacts
from rlfollow.rewards import AgentParams
from rlfollow import nn
from rlfollow.agent import PolicyController, CompositeController
from rlfollow.harness import run_ou_episodes

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
out = f".trials/s{seed}"
p = AgentParams()

t0 = time.time()
cfg_free = DdpgConfig(episodes=1500, hidden=FREE_HIDDEN, seed=seed)
res_free = train_policy("free", cfg_free, p)
print(f"[free] {time.time()-t0:.0f}s best trailing30 {res_free.best_trailing_mean:.2f} at ep {res_free.best_episode}", flush=True)
save_training_artifacts(res_free, cfg_free, p, out)

t0 = time.time()
cfg_follow = DdpgConfig(episodes=3000, hidden=FOLLOW_HIDDEN, seed=seed)
res_follow = train_policy("follow", cfg_follow, p)
print(f"[follow] {time.time()-t0:.0f}s best trailing30 {res_follow.best_trailing_mean:.2f} at ep {res_follow.best_episode}", flush=True)
save_training_artifacts(res_follow, cfg_follow, p, out)

# behavior probes
free_ctl = PolicyController(res_free.best_actor, p, "free")
follow_ctl = PolicyController(res_follow.best_actor, p, "follow")
comp = CompositeController(free_ctl, follow_ctl)

# free: from v=0, reach 0.95 vdes within 200 steps, never exceed 1.02 vdes
from rlfollow.ddpg import FreeDrivingEnv
from rlfollow.sim_core import SimConfig, VehicleState, step_vehicle
st = VehicleState(v=0.0)
speeds = []
for i in range(500):
    a = free_ctl.accel(st, None, None)
    st = step_vehicle(st, a, 0.1)
    speeds.append(st.v)
speeds = np.array(speeds)
reach = np.argmax(speeds >= 0.95*15) if (speeds >= 0.95*15).any() else -1
print(f"[free probe] reach step {reach}, max v {speeds.max():.3f}, final v {speeds[-1]:.3f}", flush=True)

# follow: crash count over 100 OU episodes
traces = run_ou_episodes(lambda: [comp], 100, seed=999, params=p)
crashes = sum(t.crashed for t in traces)
ming = min(t.gaps.min() for t in traces)
print(f"[follow probe] crashes {crashes}/100, min gap {ming:.2f}", flush=True)

# realized time gap
from rlfollow.harness import realized_time_gap
tg = []
for t in traces[:20]:
    r = realized_time_gap(t, p)
    if len(r): tg.append(np.mean(r))
print(f"[time gap probe] mean realized T {np.mean(tg):.3f} (target {p.T})", flush=True)
