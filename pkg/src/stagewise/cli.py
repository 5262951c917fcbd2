"""Command-line entry point: ``stagewise {train,eval,ablate,plan,plot}``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path
from typing import Optional, Sequence

import yaml

from stagewise.errors import StagewiseError, ValidationError
from stagewise.learn.agent import AgentConfig
from stagewise.orchestrate.config import BACKENDS, METHODS, MODES, ExperimentConfig
from stagewise.terminate.conditions import Thresholds

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

_NESTED = {"thresholds": Thresholds, "agent": AgentConfig}


# --- config files -------------------------------------------------------------------

def _scalar(node: yaml.Node):
    return yaml.safe_load(yaml.serialize(node))


def load_config(path, base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    """Read a YAML experiment file; keys not listed in ExperimentConfig are rejected.

    ``thresholds`` and ``agent`` are nested mappings. Credentials are never
    read here: ``credential_env`` only names the variable.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f"line {mark.line + 1}" if mark else "unknown line"
        raise ValidationError(f"{path}:{where}: invalid YAML ({getattr(e, 'problem', e)})") from None
    if root is None:
        raise ValidationError(f"{path}: empty configuration")
    if not isinstance(root, yaml.MappingNode):
        raise ValidationError(f"{path}:line {root.start_mark.line + 1}: top level must be a mapping")

    allowed = {f.name for f in fields(ExperimentConfig)}
    values: dict = {}
    for knode, vnode in root.value:
        key, line = knode.value, knode.start_mark.line + 1
        if key not in allowed:
            raise ValidationError(f"{path}:line {line}: unknown key {key!r}")
        if key in values:
            raise ValidationError(f"{path}:line {line}: duplicate key {key!r}")
        if key in _NESTED:
            if not isinstance(vnode, yaml.MappingNode):
                raise ValidationError(f"{path}:line {line}: {key!r} must be a mapping")
            sub_allowed = {f.name for f in fields(_NESTED[key])}
            sub = {}
            for sk, sv in vnode.value:
                if sk.value not in sub_allowed:
                    raise ValidationError(f"{path}:line {sk.start_mark.line + 1}: unknown key {key}.{sk.value!r}")
                sub[sk.value] = _scalar(sv)
            values[key] = (line, sub)
        else:
            values[key] = (line, _scalar(vnode))

    cfg = base or ExperimentConfig()
    kw = {}
    for key, (line, v) in values.items():
        try:
            if key in _NESTED:
                kw[key] = replace(getattr(cfg, key), **v)
            elif key == "seeds":
                kw[key] = tuple(int(s) for s in (v if isinstance(v, list) else [v]))
            else:
                kw[key] = _coerce(key, v, getattr(cfg, key))
        except (TypeError, ValueError) as e:
            raise ValidationError(f"{path}:line {line}: bad value for {key!r}: {e}") from None
    try:
        return replace(cfg, **kw)
    except ValidationError as e:
        raise ValidationError(f"{path}: {e}") from None
    except ValueError as e:
        raise ValidationError(f"{path}: {e}") from None


def _coerce(key: str, v, default):
    if default is None or isinstance(default, str):
        if v is not None and not isinstance(v, str):
            raise TypeError(f"expected text, got {type(v).__name__}")
        return v
    if isinstance(default, bool):
        if not isinstance(v, bool):
            raise TypeError("expected true or false")
        return v
    if isinstance(default, int):
        if isinstance(v, bool) or not isinstance(v, int):
            raise TypeError(f"expected an integer, got {v!r}")
        return v
    if isinstance(default, float):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise TypeError(f"expected a number, got {v!r}")
        return float(v)
    return v


# --- argument parsing --------------------------------------------------------------------

def _seeds(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {text!r}") from None


def _experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML experiment file; flags given here override it")
    p.add_argument("--task", help="registered task name, e.g. PickPlaceCan")
    p.add_argument("--method", choices=METHODS, help="psl, e2e or scripted")
    p.add_argument("--seed", "--seeds", dest="seeds", type=_seeds, help="seed or comma-separated seeds")
    p.add_argument("--episodes", dest="total_episodes", type=int, help="training episodes per seed")
    p.add_argument("--horizon", dest="horizon_per_stage", type=int, help="policy steps per stage")
    p.add_argument("--sigma", dest="noise_sigma", type=float, help="pose-estimate noise std (m)")
    p.add_argument("--mode", dest="termination_mode", choices=MODES, help="stage termination mode")
    p.add_argument("--reward", dest="reward_mode", choices=("dense", "sparse"), help="reward mode")
    p.add_argument("--backend", choices=BACKENDS, help="plan backend")
    p.add_argument("--backend-url", dest="backend_url", help="chat-completion endpoint for the remote backend")
    p.add_argument("--backend-model", dest="backend_model", help="model name sent to the remote backend")
    p.add_argument("--credential-env", dest="credential_env", help="environment variable holding the API key")
    p.add_argument("--eval-every", dest="eval_every", type=int, help="episodes between evaluations")
    p.add_argument("--eval-episodes", dest="eval_episodes", type=int, help="episodes per evaluation")
    p.add_argument("--p-flip", dest="p_flip", type=float, help="per-pixel mask label flip probability")
    p.add_argument("--r-erode", dest="r_erode", type=int, help="mask erosion radius in pixels")
    p.add_argument("--out", dest="out_dir", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stagewise", description="Staged long-horizon manipulation experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("train", help="train and write a learning curve")
    _experiment_flags(p)

    p = sub.add_parser("eval", help="evaluate a saved checkpoint")
    _experiment_flags(p)
    p.add_argument("--checkpoint", type=Path, required=True, help="checkpoint written by train")

    p = sub.add_parser("ablate", help="run an ablation grid")
    _experiment_flags(p)
    p.add_argument("--grid", choices=("noise", "mode", "all"), default="all", help="which grid to run")
    p.add_argument("--methods", default="psl,scripted", help="comma-separated methods for the noise grid")

    p = sub.add_parser("plan", help="print the plan for a task")
    p.add_argument("--task", required=True, help="registered task or fixture name")
    p.add_argument("--backend", choices=BACKENDS, default="scripted", help="plan backend")
    p.add_argument("--backend-url", dest="backend_url", default="", help="remote endpoint")
    p.add_argument("--backend-model", dest="backend_model", default="gpt-4", help="remote model name")
    p.add_argument("--credential-env", dest="credential_env", default="STAGEWISE_API_KEY",
                   help="environment variable holding the API key")
    p.add_argument("--prompt", action="store_true", help="print the prompt instead of querying")

    p = sub.add_parser("plot", help="turn a results CSV into mean/std series (CSV and SVG)")
    p.add_argument("--input", type=Path, required=True, help="results CSV written by train or ablate")
    p.add_argument("--out", type=Path, required=True, help="series CSV path; an SVG is written beside it")
    return parser


_CONFIG_FLAGS = ("task", "method", "seeds", "total_episodes", "horizon_per_stage", "noise_sigma",
                 "termination_mode", "reward_mode", "backend", "backend_url", "backend_model", "credential_env",
                 "eval_every", "eval_episodes", "p_flip", "r_erode", "out_dir")


def parse_cli(argv: Sequence[str]) -> tuple[str, argparse.Namespace, Optional[ExperimentConfig]]:
    """Parse arguments into (command, namespace, config); config is None for plan/plot."""
    args = build_parser().parse_args(list(argv))
    if args.command in ("plan", "plot"):
        return args.command, args, None
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {k: getattr(args, k) for k in _CONFIG_FLAGS if getattr(args, k, None) is not None}
    if args.command == "ablate" and args.grid in ("noise", "all") and "method" not in overrides:
        overrides["method"] = "psl"
    return args.command, args, replace(cfg, **overrides)


# --- commands ---------------------------------------------------------------------------------

def _out(cfg: ExperimentConfig) -> Path:
    return Path(cfg.out_dir or "runs") / f"{cfg.task}_{cfg.method}"


def cmd_train(cfg: ExperimentConfig) -> int:
    from stagewise.orchestrate.results import emit_results, write_manifest
    from stagewise.orchestrate.training import final_success, train

    out = _out(cfg)
    cfg = replace(cfg, out_dir=str(out))
    write_manifest(cfg, out / "manifest.json", ["results.csv"])
    points = []
    for s in cfg.seeds:
        curve = train(cfg, s)
        points.extend(curve)
        print(f"seed {s}: final success {final_success(curve, cfg.final_window):.2f}")
    emit_results(points, out / "results.csv")
    print(f"wrote {out / 'results.csv'}")
    return EXIT_OK


def cmd_eval(cfg: ExperimentConfig, checkpoint: Path) -> int:
    from stagewise.learn.checkpoint import load_checkpoint
    from stagewise.orchestrate.episodes import Env, Learner
    from stagewise.orchestrate.training import _episode_fn, evaluate, resolved_plan

    if cfg.method == "scripted":
        raise ValidationError("scripted runs have no checkpoint to evaluate")
    env = Env.from_config(cfg)
    plan = resolved_plan(cfg, env) if cfg.method == "psl" else ()
    for s in cfg.seeds:
        learner = Learner.for_method(cfg, s)
        load_checkpoint(checkpoint, learner.agent)
        sr = evaluate(_episode_fn(cfg, env, plan, learner), cfg, s)
        print(f"seed {s}: eval success {sr:.2f} over {cfg.eval_episodes} episodes")
    return EXIT_OK


def cmd_ablate(cfg: ExperimentConfig, grid: str, methods: str) -> int:
    from stagewise.orchestrate.results import emit_ablation, emit_results, write_manifest
    from stagewise.orchestrate.training import MODE_GRID, NOISE_GRID, ablation_suite

    out = Path(cfg.out_dir or "runs") / f"{cfg.task}_ablation_{grid}"
    cfg = replace(cfg, out_dir=None)
    write_manifest(cfg, out / "manifest.json", ["ablation.csv", "results.csv"])
    sigmas = NOISE_GRID if grid in ("noise", "all") else ()
    modes = MODE_GRID if grid in ("mode", "all") else ()
    ms = tuple(m.strip() for m in methods.split(",") if m.strip())
    for m in ms:
        if m not in METHODS:
            raise ValidationError(f"unknown method {m!r}")
    rows, points = ablation_suite(cfg, sigmas, modes, ms)
    emit_ablation(rows, out / "ablation.csv")
    emit_results(points, out / "results.csv")
    for r in rows:
        print(f"{r.method:9s} sigma={r.sigma:<6g} {r.mode:9s} {r.mean:.2f} +/- {r.std:.2f}")
    return EXIT_OK


def cmd_plan(args) -> int:
    from stagewise.plan import (
        PromptSpec,
        build_prompt,
        filter_plan,
        make_backend,
        parse_plan,
        query_backend,
        task_description,
    )

    prompt = build_prompt(PromptSpec(task_description(args.task)))
    if args.prompt:
        print(prompt)
        return EXIT_OK
    backend = make_backend(args.backend, None, args.backend_url, args.backend_model, args.credential_env)
    raw = query_backend(backend, prompt)
    plan = parse_plan(raw, backend.source)
    from stagewise.world.tasks import build_task, registered_tasks

    if args.task in registered_tasks():
        plan = filter_plan(plan, build_task(args.task).scene_vocabulary)
    for i, s in enumerate(plan.steps, 1):
        print(f"{i}. ({s.region}, {s.condition})")
    return EXIT_OK


def cmd_plot(args) -> int:
    from stagewise.orchestrate.results import emit_series, emit_svg, load_results

    points = load_results(args.input)
    emit_series(points, args.out)
    svg = Path(args.out).with_suffix(".svg")
    emit_svg(points, svg)
    print(f"wrote {args.out} and {svg}")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        command, args, cfg = parse_cli(argv)
    except SystemExit as e:  # argparse usage errors and --help
        return int(e.code) if isinstance(e.code, int) else EXIT_USAGE
    except (ValidationError, KeyError, OSError) as e:
        print(f"stagewise: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if command == "train":
            return cmd_train(cfg)
        if command == "eval":
            return cmd_eval(cfg, args.checkpoint)
        if command == "ablate":
            return cmd_ablate(cfg, args.grid, args.methods)
        if command == "plan":
            return cmd_plan(args)
        return cmd_plot(args)
    except (ValidationError, KeyError) as e:
        print(f"stagewise: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (StagewiseError, OSError, ValueError) as e:
        print(f"stagewise: error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
