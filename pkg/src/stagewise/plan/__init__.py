from stagewise.plan.backends import (
    RemoteBackend,
    ScriptedBackend,
    fixture_names,
    fixture_text,
    make_backend,
    plan_for_task,
    query_backend,
    task_description,
)
from stagewise.plan.core import (
    CONDITION_VOCABULARY,
    Plan,
    PlanStep,
    PromptSpec,
    build_prompt,
    filter_plan,
    match_label,
    parse_plan,
    render_plan,
    resolve,
)

__all__ = ["CONDITION_VOCABULARY", "Plan", "PlanStep", "PromptSpec", "RemoteBackend", "ScriptedBackend",
           "build_prompt", "filter_plan", "fixture_names", "fixture_text", "make_backend", "match_label",
           "parse_plan", "plan_for_task", "query_backend", "render_plan", "resolve", "task_description"]
