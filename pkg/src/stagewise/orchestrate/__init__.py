from stagewise.orchestrate.config import EpisodeRecord, ExperimentConfig, StageRecord
from stagewise.orchestrate.episodes import (
    Env,
    Learner,
    run_e2e_episode,
    run_psl_episode,
    run_scripted_episode,
    sequence_to,
)
from stagewise.orchestrate.results import (
    aggregate,
    emit_ablation,
    emit_results,
    emit_series,
    emit_svg,
    load_results,
    write_manifest,
)
from stagewise.orchestrate.training import (
    MODE_GRID,
    NOISE_GRID,
    AblationRow,
    CurvePoint,
    ablation_suite,
    evaluate,
    final_success,
    train,
    train_all,
)

__all__ = [
    "AblationRow", "CurvePoint", "Env", "EpisodeRecord", "ExperimentConfig", "Learner", "MODE_GRID",
    "NOISE_GRID", "StageRecord", "ablation_suite", "aggregate", "emit_ablation", "emit_results",
    "emit_series", "emit_svg", "evaluate", "final_success", "load_results", "run_e2e_episode",
    "run_psl_episode", "run_scripted_episode", "sequence_to", "train", "train_all", "write_manifest",
]
