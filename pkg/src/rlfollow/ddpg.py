"""Deep deterministic policy gradient training for both driving policies.

Replay buffer, bootstrapped TD targets with terminal masking, one critic and
one actor update per environment step, and slowly tracking target networks.
The free policy trains in a leaderless world; the following policy trains
against mean-reverting stochastic leaders. Runs are bit-reproducible for a
fixed seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from . import nn
from .agent import action_to_acceleration, follow_observation, free_observation
from .rewards import AgentParams, CRASH_REWARD, reward_follow, reward_free
from .sim_core import SimConfig, VehicleState, step_vehicle
from .stochastic import EXPLORATION_OU, LEADER_OU, OuNoise, OuParams, child_rngs, generate_leader_profile

__all__ = [
    "Transition",
    "ReplayBuffer",
    "DdpgConfig",
    "FreeDrivingEnv",
    "CarFollowingEnv",
    "DdpgState",
    "TrainingDiverged",
    "sample_minibatch",
    "td_targets",
    "train_step",
    "train_policy",
    "TrainResult",
]

REWARD_WINDOW = 30  # trailing episodes in the training monitor average


@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    a: float
    r: float
    s_next: np.ndarray
    terminal: bool


class ReplayBuffer:
    """Fixed-capacity FIFO ring over transition arrays."""

    def __init__(self, capacity: int, obs_dim: int):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.s = np.empty((capacity, obs_dim))
        self.a = np.empty((capacity, 1))
        self.r = np.empty((capacity, 1))
        self.s_next = np.empty((capacity, obs_dim))
        self.terminal = np.empty((capacity, 1))
        self._next = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def push(self, s, a: float, r: float, s_next, terminal: bool) -> None:
        i = self._next
        self.s[i] = s
        self.a[i] = a
        self.r[i] = r
        self.s_next[i] = s_next
        self.terminal[i] = 1.0 if terminal else 0.0
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def get(self, i: int) -> Transition:
        """Transition at logical index i, 0 = oldest surviving entry."""
        if not 0 <= i < self._size:
            raise IndexError(i)
        if self._size < self.capacity:
            j = i
        else:
            j = (self._next + i) % self.capacity
        return Transition(
            self.s[j].copy(), float(self.a[j, 0]), float(self.r[j, 0]),
            self.s_next[j].copy(), bool(self.terminal[j, 0]),
        )


def sample_minibatch(
    buf: ReplayBuffer, n: int, rng: np.random.Generator
) -> tuple[np.ndarray, ...] | None:
    """n i.i.d. uniform draws with replacement; None while underfilled."""
    if len(buf) < n:
        return None
    idx = rng.integers(0, len(buf), size=n)
    return buf.s[idx], buf.a[idx], buf.r[idx], buf.s_next[idx], buf.terminal[idx]


@dataclass(frozen=True)
class DdpgConfig:
    lr: float = 0.001
    gamma: float = 0.95
    batch_size: int = 32
    tau: float = 0.001
    buffer_capacity: int = 100_000
    ou: OuParams = EXPLORATION_OU
    episodes: int = 10_000
    steps_per_episode: int = 500
    hidden: tuple[int, ...] = (32, 32)
    optimizer: str = "adam"  # "adam" | "sgd"
    critic_l2: float = 0.0  # L2 weight decay on critic weights (0 = off)
    eval_every: int = 0  # episodes between greedy eval probes; 0 = off
    eval_episodes: int = 3
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.gamma <= 1.0):
            raise ValueError("gamma must be in (0, 1]")
        if self.batch_size > self.buffer_capacity:
            raise ValueError("batch size exceeds buffer capacity")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer: {self.optimizer}")


FREE_HIDDEN = (16,)
FOLLOW_HIDDEN = (32, 32)


class FreeDrivingEnv:
    """Leaderless training world: one vehicle, speed/jerk reward."""

    obs_dim = 2

    def __init__(self, params: AgentParams, sim: SimConfig = SimConfig()):
        self.p = params
        self.sim = sim
        self.state = VehicleState()
        self._step = 0

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self.state = VehicleState(v=float(rng.uniform(0.0, self.p.v_des)))
        self._step = 0
        return free_observation(self.state.v, self.state.a, self.p)

    def step(self, a_norm: float) -> tuple[np.ndarray, float, bool]:
        accel = action_to_acceleration(float(a_norm), self.p)
        new = step_vehicle(self.state, accel, self.sim.dt)
        jerk = 0.0 if self._step == 0 else (new.a - new.a_prev) / self.sim.dt
        r = reward_free(new.v, jerk, self.p).total
        self.state = new
        self._step += 1
        return free_observation(new.v, new.a, self.p), r, False


class CarFollowingEnv:
    """Stochastic-leader training world: follower vs an OU-driven leader."""

    obs_dim = 4

    def __init__(
        self,
        params: AgentParams,
        sim: SimConfig = SimConfig(),
        leader_ou: OuParams = LEADER_OU,
        g0: float = 120.0,
    ):
        self.p = params
        self.sim = sim
        self.leader_ou = leader_ou
        self.g0 = g0
        self.state = VehicleState()
        self.leader_speeds = np.zeros(1)
        self.g = g0
        self._step = 0

    def reset(
        self, rng: np.random.Generator, leader_rng: np.random.Generator | None = None
    ) -> np.ndarray:
        lrng = leader_rng if leader_rng is not None else rng
        v0_l = float(rng.uniform(0.0, self.p.v_des))
        self.leader_speeds = generate_leader_profile(
            self.leader_ou, self.sim.episode_steps + 1, v0_l, lrng
        )
        self.state = VehicleState(v=float(rng.uniform(0.0, self.p.v_des)))
        self.g = self.g0
        self._step = 0
        return follow_observation(
            self.state.v, self.state.a, float(self.leader_speeds[0]), self.g,
            self.p, self.sim.g_max,
        )

    def step(self, a_norm: float) -> tuple[np.ndarray, float, bool]:
        i = self._step
        accel = action_to_acceleration(float(a_norm), self.p)
        new = step_vehicle(self.state, accel, self.sim.dt)
        dx_f = new.x - self.state.x
        dx_l = 0.5 * (self.leader_speeds[i] + self.leader_speeds[i + 1]) * self.sim.dt
        self.g += dx_l - dx_f
        v_l = float(self.leader_speeds[i + 1])
        self.state = new
        self._step += 1
        obs = follow_observation(new.v, new.a, v_l, self.g, self.p, self.sim.g_max)
        if self.g <= 0.0:
            return obs, CRASH_REWARD, True
        jerk = 0.0 if i == 0 else (new.a - new.a_prev) / self.sim.dt
        r = reward_follow(new.v, v_l, self.g, jerk, self.p).total
        return obs, r, False


class TrainingDiverged(RuntimeError):
    """Raised when a loss or parameter goes non-finite; carries the run so far."""

    def __init__(self, message: str, result: "TrainResult | None" = None):
        super().__init__(message)
        self.result = result


@dataclass
class DdpgState:
    """Everything the training loop mutates."""

    actor: nn.Mlp
    critic: nn.Mlp
    actor_target: nn.Mlp
    critic_target: nn.Mlp
    actor_opt: nn.AdamState
    critic_opt: nn.AdamState
    buffer: ReplayBuffer
    noise: OuNoise

    @classmethod
    def fresh(cls, obs_dim: int, cfg: DdpgConfig, rng: np.random.Generator) -> "DdpgState":
        actor = nn.mlp_init([obs_dim, *cfg.hidden, 1], "tanh", rng, final_bound=3e-3)
        critic = nn.mlp_init([obs_dim + 1, *cfg.hidden, 1], "linear", rng)
        return cls(
            actor=actor,
            critic=critic,
            actor_target=actor.copy(),
            critic_target=critic.copy(),
            actor_opt=nn.AdamState.for_net(actor),
            critic_opt=nn.AdamState.for_net(critic),
            buffer=ReplayBuffer(cfg.buffer_capacity, obs_dim),
            noise=OuNoise(cfg.ou),
        )


def td_targets(
    batch: tuple[np.ndarray, ...],
    critic_target: nn.Mlp,
    actor_target: nn.Mlp,
    gamma: float,
) -> np.ndarray:
    """y = r + gamma * (1 - terminal) * Q'(s', mu'(s'))."""
    _, _, r, s_next, terminal = batch
    a_next = nn.forward(actor_target, s_next)
    q_next = nn.forward(critic_target, np.hstack([s_next, a_next]))
    return r + gamma * (1.0 - terminal) * q_next


def train_step(state: DdpgState, batch: tuple[np.ndarray, ...], cfg: DdpgConfig) -> dict:
    """One critic regression step, one policy-gradient step, soft target updates."""
    s, a, _, _, _ = batch
    n = len(s)
    y = td_targets(batch, state.critic_target, state.actor_target, cfg.gamma)

    # critic: minimize mean squared TD error
    q, cache = nn.forward_cached(state.critic, np.hstack([s, a]))
    critic_loss = float(np.mean((y - q) ** 2))
    grads, _ = nn.backward(state.critic, cache, 2.0 * (q - y) / n)
    if cfg.critic_l2 > 0.0:
        for g, w in zip(grads.weights, state.critic.weights):
            g += cfg.critic_l2 * w
    if cfg.optimizer == "adam":
        nn.adam_step(state.critic, grads, state.critic_opt, cfg.lr)
    else:
        nn.sgd_step(state.critic, grads, cfg.lr)

    # actor: ascend mean Q(s, mu(s)) via the chained action gradient
    a_pred, actor_cache = nn.forward_cached(state.actor, s)
    q_pi, critic_cache = nn.forward_cached(state.critic, np.hstack([s, a_pred]))
    policy_objective = float(np.mean(q_pi))
    _, input_grad = nn.backward(state.critic, critic_cache, np.full_like(q_pi, 1.0 / n))
    dq_da = input_grad[:, -1:]
    actor_grads, _ = nn.backward(state.actor, actor_cache, dq_da)
    neg = nn.GradientSet(
        [-g for g in actor_grads.weights], [-g for g in actor_grads.biases]
    )
    if cfg.optimizer == "adam":
        nn.adam_step(state.actor, neg, state.actor_opt, cfg.lr)
    else:
        nn.sgd_step(state.actor, neg, cfg.lr)

    nn.soft_update_inplace(state.critic_target, state.critic, cfg.tau)
    nn.soft_update_inplace(state.actor_target, state.actor, cfg.tau)

    if not (np.isfinite(critic_loss) and np.isfinite(policy_objective)):
        raise TrainingDiverged(
            f"non-finite training diagnostics: loss={critic_loss}, J={policy_objective}"
        )
    return {"critic_loss": critic_loss, "policy_objective": policy_objective}


@dataclass
class TrainResult:
    policy: str
    returns: list[float] = field(default_factory=list)
    trailing_mean: list[float] = field(default_factory=list)
    best_episode: int = -1
    best_trailing_mean: float = -np.inf
    best_actor: nn.Mlp | None = None
    best_critic: nn.Mlp | None = None
    final: DdpgState | None = None
    diverged: bool = False
    eval_log: list[dict] = field(default_factory=list)

    def curve_rows(self) -> list[tuple[int, float, float]]:
        return [
            (i, r, m)
            for i, (r, m) in enumerate(zip(self.returns, self.trailing_mean))
        ]


def _greedy_episode(env, actor: nn.Mlp, steps: int, rng: np.random.Generator) -> float:
    obs = env.reset(rng)
    total = 0.0
    for _ in range(steps):
        a = float(nn.forward(actor, obs)[0])
        obs, r, terminal = env.step(a)
        total += r
        if terminal:
            break
    return total


def train_policy(policy: str, cfg: DdpgConfig, params: AgentParams | None = None,
                 sim: SimConfig | None = None, progress=None) -> TrainResult:
    """Run the full training loop for one policy ("free" or "follow").

    Per step: a = clip(mu(s) + noise, -1, 1), environment advance, store,
    sample, one gradient update. Tracks the undiscounted episode return and
    its trailing-30 mean, and snapshots the best-mean networks.
    """
    if policy not in ("free", "follow"):
        raise ValueError(f"unknown policy: {policy}")
    p = params if params is not None else AgentParams()
    sim_cfg = sim if sim is not None else SimConfig(episode_steps=cfg.steps_per_episode)
    rngs = child_rngs(cfg.seed, "net", "init", "leader", "explore", "batch", "eval")

    if policy == "free":
        env = FreeDrivingEnv(p, sim_cfg)
        eval_env = FreeDrivingEnv(p, sim_cfg)
    else:
        env = CarFollowingEnv(p, sim_cfg)
        eval_env = CarFollowingEnv(p, sim_cfg)
    state = DdpgState.fresh(env.obs_dim, cfg, rngs["net"])
    result = TrainResult(policy=policy)

    for episode in range(cfg.episodes):
        if policy == "follow":
            obs = env.reset(rngs["init"], rngs["leader"])
        else:
            obs = env.reset(rngs["init"])
        state.noise.reset()
        ep_return = 0.0
        try:
            for _ in range(cfg.steps_per_episode):
                a_det = float(nn.forward(state.actor, obs)[0])
                a = float(np.clip(a_det + state.noise.sample(rngs["explore"]), -1.0, 1.0))
                obs_next, r, terminal = env.step(a)
                state.buffer.push(obs, a, r, obs_next, terminal)
                batch = sample_minibatch(state.buffer, cfg.batch_size, rngs["batch"])
                if batch is not None:
                    train_step(state, batch, cfg)
                obs = obs_next
                ep_return += r
                if terminal:
                    break
        except TrainingDiverged as exc:
            result.diverged = True
            result.final = state
            raise TrainingDiverged(str(exc), result) from None

        result.returns.append(ep_return)
        window = result.returns[-REWARD_WINDOW:]
        mean = float(np.mean(window))
        result.trailing_mean.append(mean)
        if mean > result.best_trailing_mean:
            result.best_trailing_mean = mean
            result.best_episode = episode
            result.best_actor = state.actor.copy()
            result.best_critic = state.critic.copy()
        if cfg.eval_every and (episode + 1) % cfg.eval_every == 0:
            scores = [
                _greedy_episode(eval_env, state.actor, cfg.steps_per_episode, rngs["eval"])
                for _ in range(cfg.eval_episodes)
            ]
            result.eval_log.append(
                {"episode": episode, "greedy_mean": float(np.mean(scores))}
            )
        if progress is not None:
            progress(episode, ep_return, mean)

    result.final = state
    return result


def save_training_artifacts(
    result: TrainResult,
    cfg: DdpgConfig,
    params: AgentParams,
    out_dir,
    g_max: float = 200.0,
) -> dict:
    """Write checkpoint, reward curve CSV, and training log JSON; returns paths."""
    import csv
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / f"{result.policy}_policy.json"
    meta = {
        "policy": result.policy,
        "g_max": g_max,
        "agent_params": asdict(params),
        "best_episode": result.best_episode,
        "best_trailing_mean": result.best_trailing_mean,
        "seed": cfg.seed,
    }
    nets = {"actor": result.best_actor, "critic": result.best_critic}
    if result.final is not None:
        nets["actor_target"] = result.final.actor_target
        nets["critic_target"] = result.final.critic_target
        opts = {"actor": result.final.actor_opt, "critic": result.final.critic_opt}
    else:
        opts = None
    nn.save_checkpoint(ckpt, nets, meta, opts)

    curve = out / f"{result.policy}_reward_curve.csv"
    with open(curve, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode", "return", "trailing30"])
        writer.writerows(result.curve_rows())

    log = out / f"{result.policy}_training_log.json"
    with open(log, "w") as fh:
        json.dump(
            {
                "policy": result.policy,
                "config": {**asdict(cfg), "ou": asdict(cfg.ou)},
                "seed": cfg.seed,
                "episodes_run": len(result.returns),
                "best_episode": result.best_episode,
                "best_trailing_mean": result.best_trailing_mean,
                "diverged": result.diverged,
                "eval_log": result.eval_log,
            },
            fh,
            indent=2,
        )
    return {"checkpoint": str(ckpt), "curve": str(curve), "log": str(log)}
