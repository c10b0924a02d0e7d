"""Free-policy: per-step OU exploration reading (theta*dt=0.15, sigma*sqrt(dt)=0.2)."""
import sys, time
import numpy as np
from rlfollow.ddpg import DdpgConfig, train_policy, FREE_HIDDEN, save_training_artifacts
from rlfollow.stochastic import OuParams
from rlfollow.rewards import AgentParams
from rlfollow.agent import PolicyController
from rlfollow.sim_core import VehicleState, step_vehicle

PER_STEP_OU = OuParams(theta=1.5, mu=0.0, sigma=0.2/np.sqrt(0.1), dt=0.1)
p = AgentParams()
for seed in [int(x) for x in sys.argv[1:]]:
    cfg = DdpgConfig(episodes=2000, hidden=FREE_HIDDEN, seed=seed, ou=PER_STEP_OU)
    t0 = time.time()
    res = train_policy("free", cfg, p)
    print(f"[noisefast s{seed}] {time.time()-t0:.0f}s best trailing30 {res.best_trailing_mean:.2f} at ep {res.best_episode}", flush=True)
    save_training_artifacts(res, cfg, p, f".trials/noisefast_s{seed}")
    ctl = PolicyController(res.best_actor, p, "free")
    ok = True
    for v0 in np.linspace(0, 15, 6):
        st = VehicleState(v=float(v0)); speeds = []
        for i in range(500):
            st = step_vehicle(st, ctl.accel(st, None, None), 0.1)
            speeds.append(st.v)
        speeds = np.array(speeds)
        reach = int(np.argmax(speeds >= 14.25)) if (speeds >= 14.25).any() else 10**9
        vmax = float(speeds.max())
        flag = "OK" if (reach <= 200 and vmax <= 15.3) else "BAD"
        if flag == "BAD": ok = False
        print(f"[noisefast s{seed}] v0={v0:5.2f} reach={reach:4d} vmax={vmax:7.3f} {flag}", flush=True)
    print(f"[noisefast s{seed}] VERDICT {'PASS' if ok else 'FAIL'}", flush=True)
