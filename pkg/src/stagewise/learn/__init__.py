from stagewise.learn.agent import Agent, AgentConfig, LossReport, sigma_schedule
from stagewise.learn.buffer import Batch, ReplayBuffer, Transition, push, sample
from stagewise.learn.checkpoint import load_checkpoint, save_checkpoint

__all__ = ["Agent", "AgentConfig", "Batch", "LossReport", "ReplayBuffer", "Transition", "load_checkpoint",
           "push", "sample", "save_checkpoint", "sigma_schedule"]
