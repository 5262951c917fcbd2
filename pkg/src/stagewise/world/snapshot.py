"""Line-oriented text snapshots of a WorldState, for golden-file tests.

One tab-separated record per line; floats use ``repr`` so a round trip is
bit-exact. Labels may contain spaces but never tabs.
"""

from __future__ import annotations

from stagewise.errors import ValidationError
from stagewise.world.robot import EEPose, JointConfig
from stagewise.world.sim import WorldState
from stagewise.world.tasks import build_task

HEADER = "# stagewise-scene v1"


def _f(x: float) -> str:
    return repr(float(x))


def dump_scene(state: WorldState) -> str:
    t = state.task
    q = state.robot
    lines = [
        HEADER,
        "\t".join(("task", t.name, t.reward_mode, str(t.horizon_per_stage), str(state.seed), str(state.step_index))),
        "\t".join(("robot", _f(q.theta1), _f(q.theta2), _f(q.d_z), _f(q.grip))),
        "\t".join(("ee", _f(state.ee.x), _f(state.ee.y), _f(state.ee.z))),
        "\t".join(("grip_target", _f(state.grip_target))),
        "\t".join(("attachment", state.attachment or "-", *map(_f, state.attach_offset))),
    ]
    for label in sorted(state.object_poses):
        lines.append("\t".join(("object", label, *map(_f, state.object_poses[label]))))
    for label in sorted(state.initial_poses):
        lines.append("\t".join(("initial", label, *map(_f, state.initial_poses[label]))))
    for label in sorted(state.articulation_values):
        lines.append("\t".join(("joint", label, _f(state.articulation_values[label]))))
    return "\n".join(lines) + "\n"


def load_scene(text: str) -> WorldState:
    rows = [ln.split("\t") for ln in text.splitlines() if ln.strip()]
    if not rows or rows[0] != [HEADER]:
        raise ValidationError("not a scene snapshot (missing header)")
    fields: dict = {"object": {}, "initial": {}, "joint": {}}
    for n, r in enumerate(rows[1:], start=2):
        try:
            kind = r[0]
            if kind == "task":
                fields["task"] = build_task(r[1], reward_mode=r[2], horizon_per_stage=int(r[3]))
                fields["seed"], fields["step"] = int(r[4]), int(r[5])
            elif kind == "robot":
                fields["robot"] = JointConfig(*map(float, r[1:5]))
            elif kind == "ee":
                fields["ee"] = EEPose(*map(float, r[1:4]))
            elif kind == "grip_target":
                fields["grip_target"] = float(r[1])
            elif kind == "attachment":
                fields["attachment"] = None if r[1] == "-" else r[1]
                fields["offset"] = tuple(map(float, r[2:5]))
            elif kind in ("object", "initial"):
                fields[kind][r[1]] = tuple(map(float, r[2:6]))
            elif kind == "joint":
                fields["joint"][r[1]] = float(r[2])
            else:
                raise ValueError(f"unknown record {kind!r}")
        except (IndexError, ValueError, TypeError) as e:
            raise ValidationError(f"line {n}: {e}") from None
    missing = {"task", "robot", "ee", "grip_target", "attachment"} - set(fields)
    if missing:
        raise ValidationError(f"missing records: {', '.join(sorted(missing))}")
    return WorldState(task=fields["task"], robot=fields["robot"], ee=fields["ee"], object_poses=fields["object"],
                      articulation_values=fields["joint"], attachment=fields["attachment"],
                      attach_offset=fields["offset"], grip_target=fields["grip_target"],
                      step_index=fields["step"], seed=fields["seed"], initial_poses=fields["initial"])
