from pathlib import Path

import pytest

from stagewise.cli import build_parser, load_config, main, parse_cli
from stagewise.errors import AuthError, ValidationError
from stagewise.orchestrate import ExperimentConfig
from stagewise.orchestrate.results import load_results

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
FAST = ["--episodes", "1", "--eval-every", "1", "--eval-episodes", "1", "--horizon", "3"]


def test_train_flags_make_valid_config():
    cmd, _, cfg = parse_cli(["train", "--task", "PickPlaceCan", "--method", "psl", "--seed", "0"])
    assert cmd == "train" and cfg.task == "PickPlaceCan" and cfg.method == "psl" and cfg.seeds == (0,)


def test_ablate_noise_grid():
    cmd, args, cfg = parse_cli(["ablate", "--grid", "noise"])
    assert cmd == "ablate" and args.grid == "noise" and cfg.method == "psl"
    assert args.methods.split(",") == ["psl", "scripted"]


def test_unknown_task_exits_2(capsys):
    assert main(["train", "--task", "Nope"]) == 2
    assert "Nope" in capsys.readouterr().err


def test_usage_errors_exit_2():
    assert main(["fly"]) == 2
    assert main(["train", "--bogus"]) == 2
    assert main(["train", "--mode", "sometimes"]) == 2


def test_help_documents_every_flag(capsys):
    for sub in ("train", "eval", "ablate", "plan", "plot"):
        with pytest.raises(SystemExit) as e:
            build_parser().parse_args([sub, "--help"])
        assert e.value.code == 0
        text = capsys.readouterr().out
        sp = build_parser()._subparsers._group_actions[0].choices[sub]
        for action in sp._actions:
            if action.option_strings and action.dest != "help":
                assert action.help, f"{sub} {action.option_strings} lacks help"
                assert action.option_strings[0] in text


def test_flags_override_config_file(tmp_path):
    f = tmp_path / "c.yaml"
    f.write_text("task: Lift\nnoise_sigma: 0.1\nseeds: [3, 4]\n")
    _, _, cfg = parse_cli(["train", "--config", str(f), "--sigma", "0.025"])
    assert cfg.task == "Lift" and cfg.noise_sigma == 0.025 and cfg.seeds == (3, 4)


# --- config files -------------------------------------------------------------------------------

def test_minimal_file_gets_defaults(tmp_path):
    f = tmp_path / "m.yaml"
    f.write_text("task: PickPlaceCan\n")
    assert load_config(f) == ExperimentConfig(task="PickPlaceCan")


def test_unknown_key_named_with_line(tmp_path):
    f = tmp_path / "u.yaml"
    f.write_text("task: PickPlaceCan\nmethod: psl\nfoo: 1\n")
    with pytest.raises(ValidationError, match=r"line 3: unknown key 'foo'"):
        load_config(f)


def test_nested_and_type_errors_have_lines(tmp_path):
    f = tmp_path / "n.yaml"
    f.write_text("task: PickPlaceCan\nthresholds:\n  place_radius: 0.05\n  wobble: 2\n")
    with pytest.raises(ValidationError, match=r"line 4: unknown key thresholds.'wobble'"):
        load_config(f)
    f.write_text("task: PickPlaceCan\ntotal_episodes: lots\n")
    with pytest.raises(ValidationError, match="line 2"):
        load_config(f)
    f.write_text("task: [unclosed\n")
    with pytest.raises(ValidationError, match="line"):
        load_config(f)
    f.write_text("task: A\ntask: B\n")
    with pytest.raises(ValidationError, match="line 2: duplicate key"):
        load_config(f)


def test_shipped_configs_load():
    cfg = load_config(CONFIGS / "pickplacecan_psl.yaml")
    assert cfg.seeds == (0, 1, 2) and cfg.total_episodes == 600
    remote = load_config(CONFIGS / "remote_backend.yaml")
    assert remote.backend == "remote" and remote.thresholds.place_radius == 0.03


def test_credential_resolved_lazily(tmp_path, monkeypatch):
    monkeypatch.delenv("STAGEWISE_TEST_KEY", raising=False)
    f = tmp_path / "r.yaml"
    f.write_text("task: PickPlaceCan\nbackend: remote\nbackend_url: http://127.0.0.1:9/v1\n"
                 "credential_env: STAGEWISE_TEST_KEY\n")
    cfg = load_config(f)  # the variable is unset, yet loading succeeds
    assert cfg.credential_env == "STAGEWISE_TEST_KEY"
    from stagewise.plan import make_backend, query_backend
    backend = make_backend(cfg.backend, None, cfg.backend_url, cfg.backend_model, cfg.credential_env)
    with pytest.raises(AuthError):
        query_backend(backend, "prompt")


# --- commands ------------------------------------------------------------------------------------

def test_plan_command(capsys):
    assert main(["plan", "--task", "NutAssembly"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 4 and lines[0] == "1. (gold nut, grasp)"
    assert main(["plan", "--task", "PickPlaceCan", "--prompt"]) == 0
    assert "Task description:" in capsys.readouterr().out


def test_train_writes_manifest_then_results(tmp_path, capsys):
    assert main(["train", "--task", "PickPlaceCan", "--out", str(tmp_path), *FAST]) == 0
    run = tmp_path / "PickPlaceCan_psl"
    manifest, results = run / "manifest.json", run / "results.csv"
    assert manifest.exists() and results.exists() and (run / "ckpt_seed0_final.pt").exists()
    assert manifest.stat().st_mtime_ns <= results.stat().st_mtime_ns
    assert len(load_results(results)) == 1
    # rerunning into the same directory refuses to clobber the manifest
    assert main(["train", "--task", "PickPlaceCan", "--out", str(tmp_path), *FAST]) == 1
    capsys.readouterr()

    assert main(["eval", "--task", "PickPlaceCan", "--eval-episodes", "1", "--horizon", "3",
                 "--checkpoint", str(run / "ckpt_seed0_final.pt")]) == 0
    assert "eval success" in capsys.readouterr().out


def test_plot_series(tmp_path):
    csv = tmp_path / "r.csv"
    csv.write_text("method,task,seed,episode,success,sigma,mode\n"
                   "psl,PickPlaceCan,0,50,0.200000,0.000000,condition\n"
                   "psl,PickPlaceCan,1,50,0.600000,0.000000,condition\n")
    assert main(["plot", "--input", str(csv), "--out", str(tmp_path / "series.csv")]) == 0
    rows = (tmp_path / "series.csv").read_text().splitlines()
    assert rows[1].split(",")[5:] == ["0.400000", "0.200000", "2"]
    assert (tmp_path / "series.svg").read_text().startswith("<svg")


def test_plot_missing_input_is_runtime_error(tmp_path):
    assert main(["plot", "--input", str(tmp_path / "none.csv"), "--out", str(tmp_path / "s.csv")]) == 1


def test_ablate_mode_grid_small(tmp_path):
    argv = ["ablate", "--grid", "mode", "--task", "PickPlaceCan", "--out", str(tmp_path), *FAST]
    assert main(argv) == 0
    table = (tmp_path / "PickPlaceCan_ablation_mode" / "ablation.csv").read_text().splitlines()
    assert table[0] == "method,task,sigma,mode,mean,std,n_seeds" and len(table) == 3


def test_console_script_installed():
    from importlib.metadata import entry_points
    eps = [e for e in entry_points(group="console_scripts") if e.name == "stagewise"]
    assert eps and eps[0].value == "stagewise.cli:main"
