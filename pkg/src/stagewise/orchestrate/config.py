"""Experiment configuration and per-episode records."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Optional

from stagewise.errors import ValidationError
from stagewise.learn.agent import AgentConfig
from stagewise.terminate.conditions import Thresholds

METHODS = ("psl", "e2e", "scripted")
MODES = ("condition", "timeout")
BACKENDS = ("scripted", "remote")


@dataclass(frozen=True)
class ExperimentConfig:
    task: str = "PickPlaceCan"
    method: str = "psl"
    seeds: tuple[int, ...] = (0,)
    total_episodes: int = 300
    horizon_per_stage: int = 25
    noise_sigma: float = 0.0
    termination_mode: str = "condition"
    reward_mode: str = "dense"
    backend: str = "scripted"
    backend_url: str = ""
    backend_model: str = "gpt-4"
    credential_env: str = "STAGEWISE_API_KEY"
    eval_every: int = 50
    eval_episodes: int = 10
    final_window: int = 3  # eval points averaged into the reported final success
    p_flip: float = 0.02
    r_erode: int = 1
    psl_action_repeat: int = 1
    e2e_action_repeat: int = 2
    planner_timeout_s: float = 10.0
    thresholds: Thresholds = field(default_factory=Thresholds)
    agent: AgentConfig = field(default_factory=AgentConfig)
    checkpoint_every: int = 0  # episodes; 0 keeps only the final checkpoint
    out_dir: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        self.validate()

    def validate(self) -> None:
        from stagewise.world.tasks import registered_tasks

        if self.task not in registered_tasks():
            from stagewise.errors import NotRegistered

            raise NotRegistered(f"unknown task {self.task!r}; registered: {', '.join(registered_tasks())}")
        checks = [
            (self.method in METHODS, f"method must be one of {METHODS}"),
            (self.termination_mode in MODES, f"termination_mode must be one of {MODES}"),
            (self.backend in BACKENDS, f"backend must be one of {BACKENDS}"),
            (self.reward_mode in ("dense", "sparse"), "reward_mode must be dense or sparse"),
            (len(self.seeds) > 0, "seeds must be nonempty"),
            (self.horizon_per_stage >= 1, "horizon_per_stage must be at least 1"),
            (self.total_episodes >= 0, "total_episodes must be non-negative"),
            (self.eval_every >= 1, "eval_every must be at least 1"),
            (self.eval_episodes >= 1, "eval_episodes must be at least 1"),
            (self.final_window >= 1, "final_window must be at least 1"),
            (self.noise_sigma >= 0.0, "noise_sigma must be non-negative"),
            (0.0 <= self.p_flip <= 1.0, "p_flip must lie in [0, 1]"),
            (self.r_erode >= 0, "r_erode must be non-negative"),
            (self.psl_action_repeat >= 1 and self.e2e_action_repeat >= 1, "action repeat must be at least 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValidationError(msg)

    def with_(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in ("thresholds", "agent"):
                v = {g.name: getattr(v, g.name) for g in fields(v)}
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out


@dataclass(frozen=True)
class StageRecord:
    region: str
    condition: str
    reached: bool  # sequencing delivered the arm to the region
    failure: Optional[str]  # sequencing error class name, if any
    condition_met: bool
    steps: int
    planner_samples: int = 0
    planning_time: float = 0.0


@dataclass(frozen=True)
class EpisodeRecord:
    seed: int
    method: str
    stages: tuple[StageRecord, ...]
    total_reward: float
    success: bool
    steps: int
    wall_time: float

    @property
    def planner_samples(self) -> int:
        return sum(s.planner_samples for s in self.stages)

    @property
    def planning_time(self) -> float:
        return sum(s.planning_time for s in self.stages)

    def deterministic_view(self) -> tuple:
        """Everything except timing, for reproducibility comparisons."""
        return (self.seed, self.method, tuple((s.region, s.condition, s.reached, s.failure, s.condition_met,
                                                s.steps, s.planner_samples) for s in self.stages),
                round(self.total_reward, 9), self.success, self.steps)
