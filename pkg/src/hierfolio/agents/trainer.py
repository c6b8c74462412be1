"""Staged hierarchical DDPG.

Stage 1 trains the upper actor over the whole universe on the portfolio-level
reward (risky budget fully invested along its output). Stage 2 freezes it and
trains one masked lower actor per group, each with its own critic and replay
buffer, against that group's reward while the allocator sets capital.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..allocator import AllocationDecision, AllocatorConfig, allocate, final_weights
from ..clustering import GroupMask
from ..market_data import PriceMatrix
from .env import EnvConfig, MarketEnv
from .losses import actor_loss, critic_loss
from .nets import DTYPE, Critic, LowerActor, UpperActor
from .noise import OUNoise, explore
from .replay import ReplayBuffer

CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    lookback: int = 30
    hidden: int = 32
    activation: str = "tanh"
    gamma: float = 0.99
    tau: float = 0.005
    lr: float = 1e-3
    batch: int = 64
    replay: int = 50_000
    beta_ent: float = 0.01
    alpha_imit: float = 0.1
    ou_theta: float = 0.15
    ou_sigma: float = 0.2
    eps_start: float = 0.3
    eps_end: float = 0.01
    sigma_g: float = 0.1
    input_scale: float = 50.0
    upper_steps: int = 2000
    lower_steps: int = 5000
    warmup: int = 64  # transitions collected before the first update
    episode_len: int = 0  # 0: run each episode to the end of the data
    threads: int = 1
    env: EnvConfig = field(default_factory=EnvConfig)
    allocator: AllocatorConfig = field(default_factory=AllocatorConfig)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        return config_hash(self.to_dict())


def config_hash(d: dict) -> str:
    return hashlib.sha256(json.dumps(d, sort_keys=True, default=str).encode()).hexdigest()


def features(window_prices, scale: float) -> np.ndarray:
    """Scaled log2 returns of a price window (``m x (lookback - 1)``)."""
    w = np.asarray(window_prices, dtype=float)
    return scale * np.log2(w[:, 1:] / w[:, :-1])


def _t(x):
    return torch.as_tensor(np.asarray(x), dtype=DTYPE)


def _batch(raw: dict) -> dict:
    return {k: _t(v) for k, v in raw.items()}


def epsilon_at(step: int, total: int, start: float, end: float) -> float:
    if total <= 1:
        return end
    return start + (end - start) * min(step, total - 1) / (total - 1)


@dataclass
class Agent:
    """An actor, its critic and both targets, with one optimizer each."""

    actor: torch.nn.Module
    critic: Critic
    lr: float

    def __post_init__(self):
        self.actor.make_target()
        self.critic.make_target()
        self.actor_opt = torch.optim.Adam(self.actor.parameters(), lr=self.lr)
        self.critic_opt = torch.optim.Adam(self.critic.parameters(), lr=self.lr)

    def update(self, batch, cfg: TrainConfig) -> dict:
        lc = critic_loss(batch, self.critic, self.critic.target_net, self.actor.target_net, cfg.gamma)
        self.critic_opt.zero_grad()
        lc.backward()
        self.critic_opt.step()
        la, imit = actor_loss(batch, self.actor, self.critic, cfg.beta_ent, cfg.alpha_imit)
        self.actor_opt.zero_grad()
        la.backward()
        self.actor_opt.step()
        self.actor.soft_update(cfg.tau)
        self.critic.soft_update(cfg.tau)
        return {"critic": lc.item(), "actor": la.item(), "imit": imit.item()}


@dataclass
class TrainResult:
    upper: UpperActor
    lower: tuple
    critics: dict
    log: list
    config: TrainConfig
    seed: int

    def policy(self) -> "HierarchicalPolicy":
        return HierarchicalPolicy(self.upper, self.lower, self.config)


def upper_decision(omega0, masks: GroupMask) -> AllocationDecision:
    """Stage-1 decision: fully invested along ``omega0``, no risk-free holding."""
    w = np.asarray(omega0, dtype=float)
    in1 = masks.in1
    s1, s2 = float(w[in1].sum()), float(w[~in1].sum())
    intra1 = np.where(in1, w, 0.0) / s1 if s1 > 0 else np.zeros_like(w)
    intra2 = np.where(~in1, w, 0.0) / s2 if s2 > 0 else np.zeros_like(w)
    # normalise so the caps sum to exactly 1 in float arithmetic
    cap1 = s1 / (s1 + s2)
    return final_weights(intra1, intra2, (0.0, cap1, 1.0 - cap1), masks)


def _log_record(log, sink, **rec):
    log.append(rec)
    if sink is not None:
        sink.write(json.dumps(rec, sort_keys=True) + "\n")


def _run_stage(env: MarketEnv, steps: int, cfg: TrainConfig, rng, act, learn, stage: str, log, sink, seed):
    """Shared episode loop: ``act(state) -> (decision, ctx)``, ``learn(ctx, ...) -> losses or None``."""
    state = env.reset()
    ep_steps = 0
    for step in range(steps):
        eps = epsilon_at(step, steps, cfg.eps_start, cfg.eps_end)
        decision, ctx = act(state, eps)
        nxt, r1, r2, info = env.step(decision)
        ep_steps += 1
        terminal = env.done or (cfg.episode_len > 0 and ep_steps >= cfg.episode_len)
        out = learn(ctx, state, nxt, r1, r2, info, terminal)
        if out is not None:
            losses, mean_reward = out
            _log_record(log, sink, step=step, stage=stage, losses=losses, mean_reward=mean_reward,
                        epsilon=eps, seed=seed)
        if terminal:
            state = env.reset()
            ep_steps = 0
        else:
            state = nxt


def train_staged(config: TrainConfig, data: PriceMatrix, seed: int = 0, fixed_masks: GroupMask = None,
                 log_path=None) -> TrainResult:
    """Stage 1 (upper agent), then stage 2 (lower agents with the upper frozen)."""
    cfg = config
    torch.set_num_threads(cfg.threads)
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    m, L = data.m, cfg.lookback
    W = L - 1
    env_cfg = cfg.env
    if env_cfg.lookback != L:
        env_cfg = EnvConfig(**dict(asdict(env_cfg), lookback=L))

    upper = UpperActor(m, W, cfg.hidden, cfg.activation)
    up_agent = Agent(upper, Critic(m, W, cfg.hidden, cfg.activation, role="upper-critic"), cfg.lr)
    lowers = tuple(LowerActor(m, W, cfg.hidden, cfg.activation, group=g) for g in (1, 2))
    low_agents = tuple(Agent(lowers[g], Critic(m, W, cfg.hidden, cfg.activation, role=f"critic-{g + 1}"), cfg.lr)
                       for g in range(2))
    log = []
    sink = open(log_path, "w") if log_path is not None else None
    ones = np.ones(m)

    try:
        # stage 1
        env = MarketEnv(data, env_cfg, fixed_masks)
        buf = ReplayBuffer(cfg.replay, rng)
        noise = OUNoise(m, cfg.ou_theta, cfg.ou_sigma, rng)

        def act_upper(state, eps):
            z = features(state.window, cfg.input_scale)
            with torch.no_grad():
                w0 = upper(_t(z)).numpy()
            a = explore(w0, noise, eps, cfg.sigma_g, rng)
            masks = GroupMask(state.m1, state.m2, state.t)
            return upper_decision(a, masks), (z, a)

        def learn_upper(ctx, state, nxt, r1, r2, info, terminal):
            z, a = ctx
            buf.add(z=z, action=a, reward=info["reward_p"], next_z=features(nxt.window, cfg.input_scale),
                    terminal=float(terminal), mask=ones, next_mask=ones)
            if len(buf) < max(cfg.warmup, 1):
                return None
            raw = buf.sample(cfg.batch)
            return up_agent.update(_batch(raw), cfg), float(raw["reward"].mean())

        _run_stage(env, cfg.upper_steps, cfg, rng, act_upper, learn_upper, "upper", log, sink, seed)

        # stage 2: freeze the upper actor
        upper.eval()
        for p in upper.parameters():
            p.requires_grad_(False)
        env = MarketEnv(data, env_cfg, fixed_masks)
        bufs = tuple(ReplayBuffer(cfg.replay, rng) for _ in range(2))
        noises = tuple(OUNoise(m, cfg.ou_theta, cfg.ou_sigma, rng) for _ in range(2))
        policy = HierarchicalPolicy(upper, lowers, cfg)

        def act_lower(state, eps):
            z = features(state.window, cfg.input_scale)
            w0 = policy.omega0(z)
            acts = []
            for g, mask in enumerate((state.m1, state.m2)):
                if not mask.any():
                    acts.append(np.zeros(m))
                    continue
                with torch.no_grad():
                    a = lowers[g](_t(z), _t(w0), torch.as_tensor(mask.astype(bool)))[0].numpy()
                acts.append(explore(a, noises[g], eps, cfg.sigma_g, rng, mask))
            masks = GroupMask(state.m1, state.m2, state.t)
            decision = allocate(acts[0], acts[1], w0, masks, env.returns_window(state.t, cfg.allocator.moment_window),
                                env_cfg.r_A, cfg.allocator)
            return decision, (z, w0, acts)

        def learn_lower(ctx, state, nxt, r1, r2, info, terminal):
            z, w0, acts = ctx
            z_next = features(nxt.window, cfg.input_scale)
            w0_next = policy.omega0(z_next)
            losses, rewards = {}, []
            for g, (mask, mask_next, r) in enumerate(((state.m1, nxt.m1, r1), (state.m2, nxt.m2, r2))):
                if info["counted"][g + 1]:
                    term = terminal or not mask_next.any()
                    bufs[g].add(z=z, action=acts[g], reward=r, next_z=z_next, terminal=float(term),
                                mask=mask.astype(float), next_mask=(mask_next if mask_next.any() else mask).astype(float),
                                omega0=w0, next_omega0=w0_next)
                if len(bufs[g]) >= max(cfg.warmup, 1):
                    raw = bufs[g].sample(cfg.batch)
                    losses[str(g + 1)] = low_agents[g].update(_batch(raw), cfg)
                    rewards.append(float(raw["reward"].mean()))
            if not losses:
                return None
            return losses, float(np.mean(rewards))

        _run_stage(env, cfg.lower_steps, cfg, rng, act_lower, learn_lower, "lower", log, sink, seed)
    finally:
        if sink is not None:
            sink.close()

    critics = {"upper-critic": up_agent.critic, "critic-1": low_agents[0].critic, "critic-2": low_agents[1].critic}
    return TrainResult(upper, lowers, critics, log, cfg, seed)


class HierarchicalPolicy:
    """Greedy (noise-free) hierarchical decision rule used for evaluation."""

    def __init__(self, upper: UpperActor, lower, cfg: TrainConfig):
        self.upper, self.lower, self.cfg = upper, tuple(lower), cfg

    def omega0(self, z) -> np.ndarray:
        with torch.no_grad():
            return self.upper(_t(z)).numpy()

    def intra(self, z, omega0, masks: GroupMask):
        out = []
        for g, mask in enumerate((masks.m1, masks.m2)):
            if not mask.any():
                out.append(np.zeros(len(mask)))
                continue
            with torch.no_grad():
                out.append(self.lower[g](_t(z), _t(omega0), torch.as_tensor(mask.astype(bool)))[0].numpy())
        return out

    def decide(self, window_prices, masks: GroupMask, rel_log2, r_A: float) -> AllocationDecision:
        z = features(window_prices, self.cfg.input_scale)
        w0 = self.omega0(z)
        i1, i2 = self.intra(z, w0, masks)
        return allocate(i1, i2, w0, masks, rel_log2, r_A, self.cfg.allocator)


# ---- checkpoints ---------------------------------------------------------

def save_checkpoint(result: TrainResult, directory) -> Path:
    """``params.npz`` (one array per ``role/param``) plus ``manifest.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    nets = {"upper-actor": result.upper, "lower-actor-1": result.lower[0], "lower-actor-2": result.lower[1]}
    nets.update(result.critics)
    arrays, shapes = {}, {}
    for role, net in nets.items():
        for name, p in net.state_dict().items():
            key = f"{role}/{name}"
            arrays[key] = p.detach().numpy()
            shapes[key] = list(p.shape)
    with open(d / "params.npz", "wb") as fh:
        np.savez(fh, **arrays)
    manifest = {"version": CHECKPOINT_VERSION, "roles": sorted(nets), "shapes": shapes,
                "config_hash": result.config.digest(), "config": result.config.to_dict(),
                "seed": result.seed, "m": result.upper.m, "window": result.upper.window}
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return d


def _config_from_dict(d: dict) -> TrainConfig:
    d = dict(d)
    env = EnvConfig(**d.pop("env"))
    alloc = AllocatorConfig(**d.pop("allocator"))
    return TrainConfig(env=env, allocator=alloc, **d)


def load_checkpoint(directory) -> TrainResult:
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text())
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {manifest.get('version')}")
    cfg = _config_from_dict(manifest["config"])
    if cfg.digest() != manifest["config_hash"]:
        raise ValueError("checkpoint config hash mismatch")
    m, W = manifest["m"], manifest["window"]
    upper = UpperActor(m, W, cfg.hidden, cfg.activation)
    lowers = tuple(LowerActor(m, W, cfg.hidden, cfg.activation, group=g) for g in (1, 2))
    critics = {r: Critic(m, W, cfg.hidden, cfg.activation, role=r) for r in ("upper-critic", "critic-1", "critic-2")}
    nets = {"upper-actor": upper, "lower-actor-1": lowers[0], "lower-actor-2": lowers[1], **critics}
    with np.load(d / "params.npz") as z:
        for role, net in nets.items():
            state = {name: torch.as_tensor(z[f"{role}/{name}"]) for name in net.state_dict()}
            net.load_state_dict(state)
    return TrainResult(upper, lowers, critics, [], cfg, manifest["seed"])
