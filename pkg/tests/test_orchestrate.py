import json

import pytest

from stagewise import instrument
from stagewise.errors import NotRegistered, PlanningFailed, ValidationError
from stagewise.learn import AgentConfig
from stagewise.orchestrate import episodes as ep_mod
from stagewise.orchestrate import (
    ExperimentConfig,
    ablation_suite,
    emit_ablation,
    emit_results,
    final_success,
    load_results,
    train,
    write_manifest,
)
from stagewise.orchestrate.episodes import (
    Env,
    Learner,
    run_e2e_episode,
    run_psl_episode,
    run_scripted_episode,
)
from stagewise.orchestrate.results import emit_series
from stagewise.orchestrate.training import CurvePoint, eval_seed, resolved_plan, train_seed

SMALL = AgentConfig(hidden=32, batch_size=16)


def cfg_for(**kw):
    base = dict(task="PickPlaceCan", total_episodes=2, eval_every=1, eval_episodes=1, agent=SMALL,
                horizon_per_stage=6)
    base.update(kw)
    return ExperimentConfig(**base)


def setup(cfg, seed=0):
    env = Env.from_config(cfg)
    plan = resolved_plan(cfg, env) if cfg.method != "e2e" else ()
    return env, plan, Learner.for_method(cfg, seed)


class FireAfter:
    """Stand-in predicate: true from the n-th query of a stage on; logs every query."""

    def __init__(self, n):
        self.n = n
        self.calls = []

    def __call__(self, ctx, state, probe=None):
        k = sum(1 for c, _ in self.calls if c is ctx) + 1
        res = k >= self.n
        self.calls.append((ctx, res))
        return res


# --- configuration ----------------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(NotRegistered):
        ExperimentConfig(task="Nope")
    with pytest.raises(ValidationError):
        ExperimentConfig(horizon_per_stage=0)
    with pytest.raises(ValidationError):
        ExperimentConfig(seeds=())
    with pytest.raises(ValidationError):
        ExperimentConfig(method="dreamer")


def test_seed_streams_are_disjoint():
    train_ids = {train_seed(s) + e for s in range(3) for e in range(1, 3001)}
    eval_ids = {eval_seed(s, i) for s in range(3) for i in range(10)}
    assert not train_ids & eval_ids


# --- staged loop ---------------------------------------------------------------------------------

def test_loop_contract_two_stages(monkeypatch):
    pred = FireAfter(3)
    monkeypatch.setattr(ep_mod, "evaluate_condition", pred)
    cfg = cfg_for()
    env, plan, learner = setup(cfg)
    rec = run_psl_episode(env, plan, learner, cfg, seed=1)
    assert len(plan) == 2 and len(rec.stages) == 2
    assert all(s.condition_met and s.steps == 3 for s in rec.stages)
    assert rec.steps <= 2 * cfg.horizon_per_stage
    assert [s.region for s in rec.stages] == [r for r, _ in plan]


def test_timeout_mode_uses_full_horizon(monkeypatch):
    pred = FireAfter(1)
    monkeypatch.setattr(ep_mod, "evaluate_condition", pred)
    cfg = cfg_for(termination_mode="timeout")
    env, plan, learner = setup(cfg)
    rec = run_psl_episode(env, plan, learner, cfg, seed=2)
    assert not rec.success
    assert [s.steps for s in rec.stages] == [cfg.horizon_per_stage] * len(plan)
    # monotone gating: the predicate is not queried again after it fired
    assert len(pred.calls) == len(plan) and all(r for _, r in pred.calls)


def test_gating_sequences_next_stage_only_after_completion(monkeypatch):
    events = []
    pred = FireAfter(4)
    real_seq = ep_mod.sequence_to

    def seq(*a, **k):
        events.append("seq")
        return real_seq(*a, **k)

    def ev(ctx, state, probe=None):
        r = pred(ctx, state)
        events.append(r)
        return r

    monkeypatch.setattr(ep_mod, "sequence_to", seq)
    monkeypatch.setattr(ep_mod, "evaluate_condition", ev)
    cfg = cfg_for(horizon_per_stage=10)
    env, plan, learner = setup(cfg)
    run_psl_episode(env, plan, learner, cfg, seed=3)
    second = events.index("seq", 1)
    assert events[second - 1] is True and events[:second].count(True) == 1


def test_planning_failure_falls_back_to_learning(monkeypatch):
    import stagewise.sequence.motion as motion

    def boom(*a, **k):
        raise PlanningFailed("no path")

    monkeypatch.setattr(motion, "plan_motion", boom)
    cfg = cfg_for()
    env, plan, learner = setup(cfg)
    rec = run_psl_episode(env, plan, learner, cfg, seed=4)
    first = rec.stages[0]
    assert first.failure == "PlanningFailed" and not first.reached and first.steps > 0


def test_budget_and_shared_parameters():
    cfg = cfg_for()
    env, plan, learner = setup(cfg)
    ids = learner.agent.parameter_ids()
    for seed in range(4):
        rec = run_psl_episode(env, plan, learner, cfg, seed=seed)
        assert rec.steps <= len(plan) * cfg.horizon_per_stage
        assert len(rec.stages) <= len(plan)
    assert learner.agent.parameter_ids() == ids
    assert len(learner.buffer) > 0


def test_psl_episode_reproducible():
    cfg = cfg_for()
    views = []
    for _ in range(2):
        env, plan, learner = setup(cfg)
        views.append([run_psl_episode(env, plan, learner, cfg, seed=s).deterministic_view() for s in (5, 6, 7)])
    assert views[0] == views[1]


# --- baselines -------------------------------------------------------------------------------------

def test_e2e_horizon_and_isolation():
    cfg = cfg_for(method="e2e", horizon_per_stage=25)
    env, _, learner = setup(cfg)
    instrument.reset()
    rec = run_e2e_episode(env, learner, cfg, seed=8)
    assert rec.stages == () and rec.method == "e2e"
    assert rec.success or rec.steps == 50
    touched = [k for k in instrument.CALLS if k.startswith(("sequence.", "terminate."))]
    assert touched == []
    env2, _, learner2 = setup(cfg)
    assert run_e2e_episode(env2, learner2, cfg, seed=8).deterministic_view() == rec.deterministic_view()


def test_e2e_training_never_touches_sequencing():
    instrument.reset()
    curve = train(cfg_for(method="e2e", total_episodes=3, eval_every=3))
    assert len(curve) == 1
    assert not [k for k in instrument.CALLS if k.startswith(("sequence.", "terminate."))]


def test_psl_training_does_use_sequencing():
    instrument.reset()
    train(cfg_for(total_episodes=1))
    assert instrument.CALLS["sequence.plan_motion"] > 0 and instrument.CALLS["terminate.evaluate_condition"] > 0


def test_scripted_noise_free_pick_place_succeeds():
    cfg = cfg_for(method="scripted", p_flip=0.0, r_erode=0)
    env, plan, _ = setup(cfg)
    recs = [run_scripted_episode(env, plan, cfg, seed=s) for s in range(3)]
    assert all(r.success for r in recs)
    assert all(s.reached for r in recs for s in r.stages)


def test_scripted_large_noise_fails():
    cfg = cfg_for(method="scripted", noise_sigma=0.1)
    env, plan, _ = setup(cfg)
    wins = [run_scripted_episode(env, plan, cfg, seed=s).success for s in range(5)]
    assert sum(wins) <= 1


def test_scripted_cascading_failure(monkeypatch):
    cfg = cfg_for(task="CanBread", method="scripted", p_flip=0.0, r_erode=0)
    env, plan, _ = setup(cfg)
    assert len(plan) == 4
    real = ep_mod._primitive
    count = {"n": 0}

    def flaky(env_, state, *a, **k):
        count["n"] += 1
        if count["n"] == 2:
            return state, 0  # the second primitive does nothing
        return real(env_, state, *a, **k)

    monkeypatch.setattr(ep_mod, "_primitive", flaky)
    rec = run_scripted_episode(env, plan, cfg, seed=0)
    assert not rec.success


# --- training and ablations -------------------------------------------------------------------------

def test_zero_episode_config():
    assert train(cfg_for(total_episodes=0)) == []


def test_train_reproducible_and_bounded(tmp_path):
    cfg = cfg_for(total_episodes=3, eval_every=2, out_dir=str(tmp_path))
    recs = [[], []]
    a = train(cfg, 0, recs[0].append)
    b = train(cfg, 0, recs[1].append)
    assert a == b and [p.episode for p in a] == [2, 3]
    assert [r.deterministic_view() for r in recs[0]] == [r.deterministic_view() for r in recs[1]]
    assert all(0.0 <= p.success <= 1.0 for p in a)
    assert (tmp_path / "ckpt_seed0_final.pt").exists()


def test_final_success_window():
    pts = [CurvePoint("psl", "t", 0, e, s, 0.0, "condition") for e, s in ((1, 0.0), (2, 1.0), (3, 0.5), (4, 0.0))]
    assert final_success(pts, 3) == pytest.approx(0.5)
    assert final_success([], 3) == 0.0


def test_empty_ablation_grid():
    rows, pts = ablation_suite(cfg_for(), sigmas=(), modes=(), methods=())
    assert rows == [] and pts == []


def test_ablation_rows_from_runner():
    calls = []

    def fake(cell):
        calls.append((cell.method, cell.noise_sigma, cell.termination_mode))
        return [CurvePoint(cell.method, cell.task, s, 10, 1.0 - cell.noise_sigma - 0.1 * s, cell.noise_sigma,
                           cell.termination_mode) for s in cell.seeds]

    rows, pts = ablation_suite(cfg_for(seeds=(0, 1)), sigmas=(0.0, 0.5), modes=("condition", "timeout"),
                               methods=("psl",), runner=fake)
    # the (psl, 0.0, condition) cell is shared between the two grids and trained once
    assert len(calls) == 3 and len(rows) == 4
    assert rows[0].mean == pytest.approx(0.95) and rows[0].std == pytest.approx(0.05) and rows[0].n_seeds == 2


# --- result files ---------------------------------------------------------------------------------------

def test_results_round_trip(tmp_path):
    pts = [CurvePoint("psl", "PickPlaceCan", s, e, e / 7, 0.025, "timeout") for s in (0, 1) for e in (50, 100)]
    p = emit_results(pts, tmp_path / "r.csv")
    back = load_results(p)
    assert [(q.seed, q.episode, q.mode) for q in back] == [(q.seed, q.episode, q.mode) for q in pts]
    assert all(abs(q.success - r.success) < 1e-6 for q, r in zip(back, pts))
    text = p.read_text()
    emit_results(back, tmp_path / "again.csv")
    assert (tmp_path / "again.csv").read_text() == text
    assert emit_results([], tmp_path / "e.csv").read_text() == "method,task,seed,episode,success,sigma,mode\n"


def test_series_std_column(tmp_path):
    pts = [CurvePoint("psl", "T", s, 10, v, 0.0, "condition") for s, v in enumerate((0.0, 1.0))]
    lines = emit_series(pts, tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "method,task,sigma,mode,episode,mean,std,n"
    assert lines[1] == "psl,T,0.000000,condition,10,0.500000,0.500000,2"


def test_ablation_csv(tmp_path):
    from stagewise.orchestrate.training import AblationRow
    p = emit_ablation([AblationRow("scripted", "T", 0.1, "condition", 0.2, 0.1, 3)], tmp_path / "a.csv")
    assert p.read_text().splitlines()[1] == "scripted,T,0.100000,condition,0.200000,0.100000,3"


def test_manifest_is_written_once(tmp_path):
    cfg = cfg_for()
    m = write_manifest(cfg, tmp_path / "manifest.json", ["results.csv"])
    body = json.loads(m.read_text())
    assert body["config"]["task"] == "PickPlaceCan" and body["seeds"] == [0]
    assert body["source_revision"]
    with pytest.raises(FileExistsError):
        write_manifest(cfg, tmp_path / "manifest.json")
