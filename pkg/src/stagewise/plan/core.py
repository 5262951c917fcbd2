"""Plan data types, prompt construction, tolerant parsing and hallucination filtering."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from stagewise import instrument
from stagewise.errors import EmptyPlanError, ParseError, ValidationError

# order used in every prompt; the set is shared with the termination module
CONDITION_VOCABULARY = ("grasp", "place", "push", "open", "close", "turn")

FORMATTING_CLAUSE = "a list in which each element looks like: (<object/region>, <stage termination condition>)"
INSTRUCTION = ("Give me a simple plan to solve the task using only the stage termination conditions. "
               "Make sure the plan follows the formatting specified below and make sure to take into "
               "account object geometry.")
TERMINAL = "Don't output anything else."

QUOTES = "\"'`‘’“”"


@dataclass(frozen=True)
class PlanStep:
    region: str
    condition: str

    def __post_init__(self):
        if not self.region.strip():
            raise ValidationError("plan step region is empty")
        if not self.condition.strip():
            raise ValidationError("plan step condition is empty")


@dataclass(frozen=True)
class Plan:
    steps: tuple[PlanStep, ...]
    source: str = field(default="scripted", compare=False)
    raw_text: str = field(default="", compare=False)

    def __len__(self) -> int:
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)

    def pairs(self) -> tuple[tuple[str, str], ...]:
        return tuple((s.region, s.condition) for s in self.steps)


@dataclass(frozen=True)
class PromptSpec:
    task_description: str
    condition_vocabulary: tuple[str, ...] = CONDITION_VOCABULARY
    formatting_clause: str = FORMATTING_CLAUSE


def build_prompt(spec: PromptSpec) -> str:
    if not spec.task_description.strip():
        raise ValidationError("task description is empty")
    if not spec.condition_vocabulary:
        raise ValidationError("condition vocabulary is empty")
    if not spec.formatting_clause.strip():
        raise ValidationError("formatting clause is empty")
    return "\n".join([
        f"Stage termination conditions: ({', '.join(spec.condition_vocabulary)}).",
        f"Task description: {spec.task_description.strip()}",
        INSTRUCTION,
        f"Formatting of output: {spec.formatting_clause}.",
        TERMINAL,
    ])


_PAIR = re.compile(r"\(\s*([^(),\[\]]+?)\s*,\s*([^(),\[\]]+?)\s*\)")


def _unquote(s: str) -> str:
    return s.strip().strip(QUOTES).strip()


def parse_plan(raw: str, source: str = "scripted") -> Plan:
    """Extract the first bracketed list of (region, condition) pairs from ``raw``.

    Text before and after the list is ignored, as are quote styles.
    """
    instrument.hit("plan.parse_plan")
    if raw is None or not raw.strip():
        raise ParseError("backend returned empty text", raw or "")
    for m in re.finditer(r"\[([^\[\]]*)\]", raw):
        body = m.group(1)
        pairs = _PAIR.findall(body)
        if not pairs:
            continue
        # reject brackets holding something other than pairs, e.g. "[note: (a, b)]"
        residue = _PAIR.sub("", body).replace(",", "").strip()
        if residue:
            continue
        steps = []
        for region, cond in pairs:
            region, cond = _unquote(region), _unquote(cond)
            if region and cond:
                steps.append(PlanStep(region, cond))
        if steps:
            return Plan(tuple(steps), source, raw)
    raise ParseError("no list of (region, condition) pairs found", raw)


def render_plan(plan: Plan) -> str:
    """Canonical text form, readable back by ``parse_plan``."""
    return "[" + ", ".join(f'("{s.region}", "{s.condition}")' for s in plan.steps) + "]"


def normalize(text: str) -> tuple[str, ...]:
    return tuple(re.findall(r"[0-9a-z]+", text.casefold()))


def _contains(hay: tuple[str, ...], needle: tuple[str, ...]) -> bool:
    n = len(needle)
    return n > 0 and any(hay[i:i + n] == needle for i in range(len(hay) - n + 1))


def match_label(region: str, scene_vocabulary: Iterable[str]) -> Optional[str]:
    """Scene label whose tokens appear contiguously in ``region``; longest wins, then first listed."""
    toks = normalize(region)
    best: Optional[str] = None
    for label in scene_vocabulary:
        if _contains(toks, normalize(label)):
            if best is None or len(normalize(label)) > len(normalize(best)):
                best = label
    return best


def filter_plan(plan: Plan, scene_vocabulary: Sequence[str],
                condition_vocabulary: Sequence[str] = CONDITION_VOCABULARY) -> Plan:
    instrument.hit("plan.filter_plan")
    conds = {c.strip().casefold() for c in condition_vocabulary}
    kept = tuple(s for s in plan.steps
                 if s.condition.strip().casefold() in conds and match_label(s.region, scene_vocabulary))
    if not kept:
        raise EmptyPlanError("every plan step was removed by filtering")
    return Plan(kept, plan.source, plan.raw_text)


def resolve(plan: Plan, scene_vocabulary: Sequence[str]) -> tuple[tuple[str, str], ...]:
    """Filtered steps mapped to (scene label, condition) pairs."""
    out = []
    for s in plan.steps:
        label = match_label(s.region, scene_vocabulary)
        if label is None:
            raise ValidationError(f"region {s.region!r} matches no scene label")
        out.append((label, s.condition.strip().casefold()))
    return tuple(out)
