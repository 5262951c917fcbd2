"""Training loop, periodic evaluation, and the ablation grid."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
import torch

from stagewise.learn.checkpoint import save_checkpoint
from stagewise.orchestrate.config import EpisodeRecord, ExperimentConfig
from stagewise.orchestrate.episodes import (
    Env,
    Learner,
    run_e2e_episode,
    run_psl_episode,
    run_scripted_episode,
)
from stagewise.plan.backends import make_backend, plan_for_task
from stagewise.plan.core import filter_plan, resolve

log = logging.getLogger(__name__)

NOISE_GRID = (0.0, 0.01, 0.025, 0.1, 0.5)
MODE_GRID = ("condition", "timeout")


@dataclass(frozen=True)
class CurvePoint:
    method: str
    task: str
    seed: int
    episode: int
    success: float
    sigma: float
    mode: str


def train_seed(base_seed: int) -> int:
    return 1_000_003 * int(base_seed)


def eval_seed(base_seed: int, i: int) -> int:
    # disjoint from every training seed
    return 10 ** 9 + 1000 * int(base_seed) + i


def resolved_plan(cfg: ExperimentConfig, env: Env) -> tuple[tuple[str, str], ...]:
    """Query the configured backend, drop hallucinated steps, map regions to scene labels."""
    backend = make_backend(cfg.backend, None, cfg.backend_url, cfg.backend_model, cfg.credential_env)
    plan = plan_for_task(cfg.task, backend)
    vocab = env.task.scene_vocabulary
    return resolve(filter_plan(plan, vocab), vocab)


def _episode_fn(cfg: ExperimentConfig, env: Env, plan, learner: Optional[Learner]) -> Callable:
    if cfg.method == "psl":
        return lambda seed, explore, train: run_psl_episode(env, plan, learner, cfg, seed, explore, train)
    if cfg.method == "e2e":
        return lambda seed, explore, train: run_e2e_episode(env, learner, cfg, seed, explore, train)
    return lambda seed, explore, train: run_scripted_episode(env, plan, cfg, seed)


def evaluate(run: Callable, cfg: ExperimentConfig, base_seed: int) -> float:
    wins = [run(eval_seed(base_seed, i), False, False).success for i in range(cfg.eval_episodes)]
    return float(np.mean(wins))


def train(cfg: ExperimentConfig, seed: Optional[int] = None,
          on_record: Optional[Callable[[EpisodeRecord], None]] = None) -> list[CurvePoint]:
    """Learning curve for one seed: evaluation success every ``eval_every`` episodes.

    Scripted runs have nothing to learn; they are evaluated on the same
    schedule so every method yields comparable curves.
    """
    seed = cfg.seeds[0] if seed is None else int(seed)
    torch.manual_seed(seed)
    env = Env.from_config(cfg)
    plan = resolved_plan(cfg, env) if cfg.method != "e2e" else ()
    learner = Learner.for_method(cfg, seed) if cfg.method != "scripted" else None
    run = _episode_fn(cfg, env, plan, learner)
    curve: list[CurvePoint] = []
    out = Path(cfg.out_dir) if cfg.out_dir else None
    for ep in range(1, cfg.total_episodes + 1):
        if cfg.method != "scripted":
            rec = run(train_seed(seed) + ep, True, True)
            if on_record is not None:
                on_record(rec)
        if ep % cfg.eval_every == 0 or ep == cfg.total_episodes:
            sr = evaluate(run, cfg, seed)
            curve.append(CurvePoint(cfg.method, cfg.task, seed, ep, sr, cfg.noise_sigma, cfg.termination_mode))
            log.info("%s %s seed=%d ep=%d success=%.2f", cfg.method, cfg.task, seed, ep, sr)
        if out is not None and learner is not None and cfg.checkpoint_every and ep % cfg.checkpoint_every == 0:
            save_checkpoint(out / f"ckpt_seed{seed}_ep{ep}.pt", learner.agent, learner.buffer)
    if out is not None and learner is not None and cfg.total_episodes > 0:
        save_checkpoint(out / f"ckpt_seed{seed}_final.pt", learner.agent, learner.buffer)
    return curve


def final_success(curve: Sequence[CurvePoint], window: int = 3) -> float:
    """Mean of the last ``window`` evaluation points."""
    if not curve:
        return 0.0
    return float(np.mean([p.success for p in curve[-window:]]))


def train_all(cfg: ExperimentConfig) -> list[CurvePoint]:
    points: list[CurvePoint] = []
    for s in cfg.seeds:
        points.extend(train(cfg, s))
    return points


@dataclass(frozen=True)
class AblationRow:
    method: str
    task: str
    sigma: float
    mode: str
    mean: float
    std: float
    n_seeds: int


def ablation_cells(base: ExperimentConfig, sigmas: Iterable[float] = (), modes: Iterable[str] = (),
                   methods: Iterable[str] = ("psl",)) -> list[ExperimentConfig]:
    """The noise grid crossed with methods, then the termination-mode grid for staged learning."""
    sigmas, modes, methods = list(sigmas), list(modes), list(methods)
    cells = []
    for m in methods:
        for s in sigmas:
            cells.append(replace(base, method=m, noise_sigma=float(s)))
    for mode in modes:
        cells.append(replace(base, method="psl", termination_mode=mode))
    return cells


def ablation_suite(base: ExperimentConfig, sigmas: Iterable[float] = NOISE_GRID, modes: Iterable[str] = MODE_GRID,
                   methods: Iterable[str] = ("psl", "scripted"),
                   runner: Callable[[ExperimentConfig], list[CurvePoint]] = train_all
                   ) -> tuple[list[AblationRow], list[CurvePoint]]:
    """One row per grid cell with mean and std of final success over seeds."""
    rows, points = [], []
    seen: dict[tuple, list[CurvePoint]] = {}
    for cell in ablation_cells(base, sigmas, modes, methods):
        key = (cell.method, cell.noise_sigma, cell.termination_mode)
        if key not in seen:
            seen[key] = runner(cell)
            points.extend(seen[key])
        pts = seen[key]
        finals = [final_success([p for p in pts if p.seed == s], cell.final_window) for s in cell.seeds]
        rows.append(AblationRow(cell.method, cell.task, cell.noise_sigma, cell.termination_mode,
                                float(np.mean(finals)), float(np.std(finals)), len(finals)))
    return rows, points
