"""Deterministic actor with twin critics, n-step targets and scheduled exploration."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import torch
from torch import nn

from stagewise.errors import NotReady, ShapeError
from stagewise.learn.buffer import ReplayBuffer


@dataclass(frozen=True)
class AgentConfig:
    hidden: int = 128
    lr: float = 1e-3
    gamma: float = 0.99
    tau: float = 0.005
    batch_size: int = 256
    n_step: int = 3
    sigma_start: float = 1.0
    sigma_end: float = 0.1
    sigma_steps: int = 100_000
    target_noise: float = 0.2
    target_clip: float = 0.3
    buffer_capacity: int = 100_000


def sigma_schedule(step: int, cfg: AgentConfig = AgentConfig()) -> float:
    """Linear anneal from sigma_start to sigma_end, then constant."""
    frac = min(max(step, 0) / cfg.sigma_steps, 1.0)
    return cfg.sigma_start + frac * (cfg.sigma_end - cfg.sigma_start)


def mlp(inp: int, out: int, hidden: int) -> nn.Sequential:
    return nn.Sequential(nn.Linear(inp, hidden), nn.SiLU(), nn.Linear(hidden, hidden), nn.SiLU(),
                         nn.Linear(hidden, out))


class Actor(nn.Module):
    def __init__(self, obs_dim: int, act_dim: int, hidden: int):
        super().__init__()
        self.net = mlp(obs_dim, act_dim, hidden)

    def forward(self, obs: torch.Tensor) -> torch.Tensor:
        return torch.tanh(self.net(obs))


class Critic(nn.Module):
    def __init__(self, obs_dim: int, act_dim: int, hidden: int):
        super().__init__()
        self.net = mlp(obs_dim + act_dim, 1, hidden)

    def forward(self, obs: torch.Tensor, act: torch.Tensor) -> torch.Tensor:
        return self.net(torch.cat([obs, act], dim=-1)).squeeze(-1)


@dataclass
class LossReport:
    critic_loss: float
    actor_loss: float
    q_mean: float
    target_mean: float


def _soft_update(target: nn.Module, online: nn.Module, tau: float) -> None:
    with torch.no_grad():
        for t, o in zip(target.parameters(), online.parameters()):
            t.mul_(1.0 - tau).add_(o, alpha=tau)


class Agent:
    """One policy shared by every stage of every episode.

    Observations are multiplied by ``obs_scale`` before entering the
    networks; actions live in [-1, 1]^act_dim.
    """

    def __init__(self, obs_dim: int, act_dim: int = 4, seed: int = 0,
                 cfg: AgentConfig = AgentConfig(), obs_scale: Optional[np.ndarray] = None):
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.cfg = cfg
        self.gen = torch.Generator().manual_seed(int(seed))
        self.rng = np.random.default_rng([int(seed), 0xAC7])
        torch.manual_seed(int(seed))
        self.actor = Actor(obs_dim, act_dim, cfg.hidden)
        self.critic1 = Critic(obs_dim, act_dim, cfg.hidden)
        self.critic2 = Critic(obs_dim, act_dim, cfg.hidden)
        self.actor_target = Actor(obs_dim, act_dim, cfg.hidden)
        self.critic1_target = Critic(obs_dim, act_dim, cfg.hidden)
        self.critic2_target = Critic(obs_dim, act_dim, cfg.hidden)
        for t, o in ((self.actor_target, self.actor), (self.critic1_target, self.critic1),
                     (self.critic2_target, self.critic2)):
            t.load_state_dict(o.state_dict())
            t.requires_grad_(False)
        self.actor_opt = torch.optim.Adam(self.actor.parameters(), lr=cfg.lr)
        self.critic_opt = torch.optim.Adam(list(self.critic1.parameters()) + list(self.critic2.parameters()),
                                           lr=cfg.lr)
        scale = np.ones(obs_dim) if obs_scale is None else np.asarray(obs_scale, dtype=np.float64)
        if scale.shape != (obs_dim,):
            raise ShapeError(f"obs_scale has shape {scale.shape}, expected ({obs_dim},)")
        self.obs_scale = torch.as_tensor(scale, dtype=torch.float32)
        self.env_steps = 0
        self.updates = 0

    # --- acting -----------------------------------------------------------------

    def _obs(self, obs) -> torch.Tensor:
        t = torch.as_tensor(np.asarray(obs, dtype=np.float32))
        if t.shape[-1] != self.obs_dim:
            raise ShapeError(f"observation has {t.shape[-1]} features, actor expects {self.obs_dim}")
        return t * self.obs_scale

    def sigma(self, step: Optional[int] = None) -> float:
        return sigma_schedule(self.env_steps if step is None else step, self.cfg)

    def act(self, obs, step: Optional[int] = None, explore: bool = True) -> np.ndarray:
        with torch.no_grad():
            a = self.actor(self._obs(obs)).numpy().astype(np.float64)
        if explore:
            a = a + self.rng.normal(0.0, self.sigma(step), size=a.shape)
        return np.clip(a, -1.0, 1.0)

    # --- learning ---------------------------------------------------------------

    def critic_loss(self, obs, act, ret, next_obs, discount) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Clipped double-Q regression loss with target-policy smoothing."""
        with torch.no_grad():
            noise = (torch.randn(act.shape, generator=self.gen) * self.cfg.target_noise).clamp(
                -self.cfg.target_clip, self.cfg.target_clip)
            next_act = (self.actor_target(next_obs) + noise).clamp(-1.0, 1.0)
            q_next = torch.min(self.critic1_target(next_obs, next_act), self.critic2_target(next_obs, next_act))
            target = ret + discount * q_next
        q1 = self.critic1(obs, act)
        q2 = self.critic2(obs, act)
        loss = ((q1 - target) ** 2).mean() + ((q2 - target) ** 2).mean()
        return loss, q1, target

    def update(self, buffer: ReplayBuffer, batch_size: Optional[int] = None) -> LossReport:
        bs = batch_size or self.cfg.batch_size
        if len(buffer) < bs:
            raise NotReady(f"buffer holds {len(buffer)} transitions, need {bs}")
        b = buffer.sample(bs, self.rng)
        obs = self._obs(b.obs)
        next_obs = self._obs(b.next_obs)
        act = torch.as_tensor(b.action, dtype=torch.float32)
        ret = torch.as_tensor(b.reward, dtype=torch.float32)
        disc = torch.as_tensor(b.discount, dtype=torch.float32)

        c_loss, q1, target = self.critic_loss(obs, act, ret, next_obs, disc)
        self.critic_opt.zero_grad()
        c_loss.backward()
        self.critic_opt.step()

        a_loss = -self.critic1(obs, self.actor(obs)).mean()
        self.actor_opt.zero_grad()
        a_loss.backward()
        self.actor_opt.step()

        _soft_update(self.actor_target, self.actor, self.cfg.tau)
        _soft_update(self.critic1_target, self.critic1, self.cfg.tau)
        _soft_update(self.critic2_target, self.critic2, self.cfg.tau)
        self.updates += 1
        return LossReport(float(c_loss.detach()), float(a_loss.detach()), float(q1.detach().mean()),
                          float(target.mean()))

    def q_value(self, obs, action) -> float:
        with torch.no_grad():
            o = self._obs(np.atleast_2d(obs))
            a = torch.as_tensor(np.atleast_2d(action), dtype=torch.float32)
            return float(self.critic1(o, a)[0])

    # --- persistence ------------------------------------------------------------

    def modules(self) -> dict[str, nn.Module]:
        return {"actor": self.actor, "critic1": self.critic1, "critic2": self.critic2,
                "actor_target": self.actor_target, "critic1_target": self.critic1_target,
                "critic2_target": self.critic2_target}

    def parameter_ids(self) -> tuple[int, ...]:
        return tuple(id(p) for m in self.modules().values() for p in m.parameters())
