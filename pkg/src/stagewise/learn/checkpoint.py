"""Versioned checkpoints: network and optimizer weights, replay contents, schedule step."""

from __future__ import annotations

from pathlib import Path
from typing import Optional

import torch

from stagewise.errors import ValidationError
from stagewise.learn.agent import Agent
from stagewise.learn.buffer import ReplayBuffer

FORMAT_VERSION = 1


def save_checkpoint(path, agent: Agent, buffer: Optional[ReplayBuffer] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = {
        "version": FORMAT_VERSION,
        "obs_dim": agent.obs_dim,
        "act_dim": agent.act_dim,
        "modules": {k: m.state_dict() for k, m in agent.modules().items()},
        "optim": {"actor": agent.actor_opt.state_dict(), "critic": agent.critic_opt.state_dict()},
        "obs_scale": agent.obs_scale.clone(),
        "env_steps": agent.env_steps,
        "updates": agent.updates,
        "torch_gen": agent.gen.get_state(),
        "np_rng": agent.rng.bit_generator.state,
        "buffer": None if buffer is None else buffer.state_dict(),
    }
    torch.save(blob, path)
    return path


def load_checkpoint(path, agent: Agent, buffer: Optional[ReplayBuffer] = None) -> Agent:
    """Restore ``agent`` (and ``buffer`` if given) in place from ``path``."""
    blob = torch.load(Path(path), weights_only=False)
    if blob.get("version") != FORMAT_VERSION:
        raise ValidationError(f"checkpoint format {blob.get('version')!r} is not supported")
    if (blob["obs_dim"], blob["act_dim"]) != (agent.obs_dim, agent.act_dim):
        raise ValidationError("checkpoint dimensions do not match the agent")
    mods = agent.modules()
    for k, sd in blob["modules"].items():
        mods[k].load_state_dict(sd)
    agent.actor_opt.load_state_dict(blob["optim"]["actor"])
    agent.critic_opt.load_state_dict(blob["optim"]["critic"])
    agent.obs_scale = blob["obs_scale"]
    agent.env_steps = blob["env_steps"]
    agent.updates = blob["updates"]
    agent.gen.set_state(blob["torch_gen"])
    agent.rng.bit_generator.state = blob["np_rng"]
    if buffer is not None and blob["buffer"] is not None:
        buffer.load_state_dict(blob["buffer"])
    return agent
