"""Free-policy training sweep: one seed, longer run, with greedy behavior probe."""
import sys, time
import numpy as np
from rlfollow.ddpg import DdpgConfig, train_policy, FREE_HIDDEN, save_training_artifacts
from rlfollow.rewards import AgentParams
from rlfollow.agent import PolicyController
from rlfollow.sim_core import VehicleState, step_vehicle

seed = int(sys.argv[1]); episodes = int(sys.argv[2]) if len(sys.argv) > 2 else 4000
p = AgentParams()
cfg = DdpgConfig(episodes=episodes, hidden=FREE_HIDDEN, seed=seed)
t0 = time.time()
res = train_policy("free", cfg, p)
print(f"[free s{seed}] {time.time()-t0:.0f}s best trailing30 {res.best_trailing_mean:.2f} at ep {res.best_episode}", flush=True)
out = f".trials/free_s{seed}"
save_training_artifacts(res, cfg, p, out)

ctl = PolicyController(res.best_actor, p, "free")
ok = True
for v0 in np.linspace(0, 15, 6):
    st = VehicleState(v=float(v0))
    speeds = []
    for i in range(500):
        st = step_vehicle(st, ctl.accel(st, None, None), 0.1)
        speeds.append(st.v)
    speeds = np.array(speeds)
    reach = int(np.argmax(speeds >= 14.25)) if (speeds >= 14.25).any() else 10**9
    vmax = speeds.max()
    hold = speeds[min(reach+1,499):].min() if reach < 499 else float('nan')
    flag = "OK" if (reach <= 200 and vmax <= 15.3) else "BAD"
    if flag == "BAD": ok = False
    print(f"[free s{seed}] v0={v0:5.2f} reach={reach:4d} vmax={vmax:7.3f} hold_min={hold:7.3f} {flag}", flush=True)
print(f"[free s{seed}] VERDICT {'PASS' if ok else 'FAIL'}", flush=True)
