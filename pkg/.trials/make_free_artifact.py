import sys
sys.path.insert(0, "tests")
from conftest import ensure_artifact, ARTIFACT_DIR
import numpy as np
from rlfollow import nn
from rlfollow.agent import PolicyController
from rlfollow.rewards import AgentParams
from rlfollow.sim_core import VehicleState, step_vehicle

path = ensure_artifact("free")
print("artifact:", path, flush=True)
nets, meta, _ = nn.load_checkpoint(path)
p = AgentParams(**meta["agent_params"])
ctl = PolicyController(nets["actor"], p, "free")
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
    print(f"v0={v0:5.2f} reach={reach:4d} vmax={vmax:7.3f} {flag}", flush=True)
print("VERDICT", "PASS" if ok else "FAIL", flush=True)
