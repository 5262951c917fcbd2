import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import make_scene
from stagewise.errors import NotRegistered
from stagewise.world import robot as rb
from stagewise.world.geometry import sdf3
from stagewise.world.render import CAMERAS, ROBOT, TABLE, Corruption, mask_pixel_area, render_depth_and_masks
from stagewise.world.robot import EEPose, JointConfig, forward_kinematics
from stagewise.world.sim import (
    K_LOCAL,
    LOCAL_DIM,
    ZERO_ACTION,
    Action,
    create_task,
    is_success,
    local_features,
    reset,
    step,
    task_reward,
    transition,
)
from stagewise.world.snapshot import dump_scene, load_scene
from stagewise.world.tasks import (
    Articulation,
    Goal,
    ObjectSpec,
    TaskSpec,
    build_task,
    registered_tasks,
    sampling_ranges,
)

GOLDEN = Path(__file__).parent / "golden"


def fk_oracle(th1, th2, dz):
    # complex-number form of the two-link chain
    p = complex(0.5, -0.1) + 0.35 * np.exp(1j * th1) + 0.35 * np.exp(1j * (th1 + th2))
    return np.array([p.real, p.imag, dz])


# --- registry and sampling ------------------------------------------------------------

def test_registry_contains_the_eight_tasks():
    assert set(registered_tasks()) == {"Lift", "PickPlaceCan", "NutRound", "CanBread", "Push", "DialTurn",
                                       "DrawerOpen", "MS-3"}


def test_unknown_task_raises_not_registered():
    with pytest.raises(NotRegistered):
        create_task("Nope", 0)


def test_lift_seed0_cube_in_range_robot_home():
    task, s = create_task("Lift", 0)
    x, y, z, _ = s.object_poses["red cube"]
    assert 0.3 <= x <= 0.7 and 0.3 <= y <= 0.7 and z == 0.0
    assert s.robot == rb.HOME


def test_create_task_is_deterministic():
    assert create_task("PickPlaceCan", 7) == create_task("PickPlaceCan", 7)


def test_ms3_contents():
    task, _ = create_task("MS-3", 3)
    shapes = {o.shape for o in task.object_set}
    assert {"dial", "drawer", "box"} <= shapes
    assert task.stage_count == 3


@pytest.mark.parametrize("name", ["Lift", "PickPlaceCan", "CanBread", "MS-3"])
def test_consecutive_seeds_differ_within_ranges(name):
    ranges = sampling_ranges(name)
    _, a = create_task(name, 11)
    _, b = create_task(name, 12)
    assert a.object_poses != b.object_poses
    for s in (a, b):
        for label, ((x0, x1), (y0, y1)) in ranges.items():
            x, y, _, _ = s.object_poses[label]
            assert x0 <= x <= x1 and y0 <= y <= y1


@pytest.mark.parametrize("name", ["Lift", "PickPlaceCan", "NutRound", "CanBread", "Push", "DialTurn",
                                  "DrawerOpen", "MS-3"])
def test_task_invariants(name):
    t = build_task(name)
    assert t.stage_count >= 1 and t.horizon_per_stage == 25
    for region, _ in t.reference_plan:
        assert region in t.scene_vocabulary
    for o in t.object_set:
        assert all(e > 0 for e in o.extents)
        x, y, z, _ = o.pose
        assert 0 <= x <= 1 and 0 <= y <= 1 and 0 <= z <= 0.4
        if o.articulation is not None:
            assert o.articulation.low < o.articulation.high


def test_taskspec_rejects_bad_fields():
    with pytest.raises(ValueError):
        TaskSpec("t", (), 0, "dense", 25, "p", (), "d")
    with pytest.raises(ValueError):
        TaskSpec("t", (), 1, "medium", 25, "p", (), "d")


def test_objectspec_rejects_nonpositive_extents():
    with pytest.raises(ValueError):
        ObjectSpec("can", "cylinder", (0.4, 0.4, 0.0, 0.0), (0.0, 0.08))


# --- kinematics -------------------------------------------------------------------------

@pytest.mark.parametrize("q,expected", [
    ((0.0, 0.0, 0.1), (1.2, -0.1, 0.1)),
    ((math.pi / 2, 0.0, 0.0), (0.5, 0.6, 0.0)),
    ((math.pi / 2, -math.pi / 2, 0.2), (0.85, 0.25, 0.2)),
])
def test_forward_kinematics_examples(q, expected):
    ee = forward_kinematics(JointConfig(*q))
    assert np.allclose(ee.as_array(), expected, atol=1e-12)
    assert np.allclose(ee.as_array(), fk_oracle(*q), atol=1e-12)


@given(st.floats(-math.pi, math.pi), st.floats(-math.pi, math.pi), st.floats(0.0, 0.3))
def test_forward_kinematics_matches_oracle(t1, t2, dz):
    assert np.allclose(forward_kinematics(JointConfig(t1, t2, dz)).as_array(), fk_oracle(t1, t2, dz), atol=1e-12)


# --- step semantics -------------------------------------------------------------------------

def test_zero_action_is_a_fixed_point():
    _, s = create_task("PickPlaceCan", 1)
    nxt, obs, r, done = step(s, ZERO_ACTION)
    assert nxt.step_index == s.step_index + 1
    from dataclasses import replace
    assert replace(nxt, step_index=s.step_index) == s
    assert r == task_reward(s, ZERO_ACTION, s, s.task)


def test_free_space_x_step_moves_exactly_0p02():
    s = make_scene([], ee_xyz=(0.45, 0.35, 0.2))
    nxt = transition(s, Action((0.02, 0.0, 0.0), 0.0))
    want = s.ee.as_array() + (0.02, 0.0, 0.0)
    assert np.allclose(nxt.ee.as_array(), want, atol=1e-9)
    assert np.allclose(fk_oracle(nxt.robot.theta1, nxt.robot.theta2, nxt.robot.d_z), want, atol=1e-9)


def test_action_components_are_clipped():
    s = make_scene([], ee_xyz=(0.45, 0.35, 0.2))
    nxt = transition(s, Action((0.5, -0.5, 0.5), 3.0))
    assert np.allclose(nxt.ee.as_array() - s.ee.as_array(), (0.02, -0.02, 0.02), atol=1e-9)
    assert nxt.grip_target <= rb.APERTURE_MAX


def test_nonfinite_action_does_not_corrupt_state():
    s = make_scene([], ee_xyz=(0.45, 0.35, 0.2))
    nxt = transition(s, Action((float("nan"), float("inf"), 0.0), float("nan")))
    assert np.all(np.isfinite(nxt.ee.as_array()))


def caged_by_fingers(ee, aperture, cx, radius):
    """Brute-force check that the two finger discs touch opposite sides of a disc."""
    (lx, _), (rx, _) = rb.finger_positions(ee, aperture)
    left_gap = (cx - radius) - (lx + rb.FINGER_R)
    right_gap = (rx - rb.FINGER_R) - (cx + radius)
    return lx < cx < rx and abs(left_gap) <= 1e-6 and abs(right_gap) <= 1e-6


def test_closing_on_a_cylinder_attaches_it():
    can = ObjectSpec("can", "cylinder", (0.45, 0.35, 0.0, 0.0), (0.02, 0.08), graspable=True)
    s = make_scene([can], ee_xyz=(0.45, 0.35, 0.01), aperture=0.05)
    for _ in range(3):
        s = transition(s, Action((0.0, 0.0, 0.0), -1.0))
    assert s.attachment == "can"
    assert math.isclose(s.robot.aperture, 0.04, abs_tol=1e-9)
    assert caged_by_fingers(s.ee, s.robot.aperture, s.object_poses["can"][0], 0.02)


def test_closing_on_nothing_attaches_nothing():
    can = ObjectSpec("can", "cylinder", (0.3, 0.3, 0.0, 0.0), (0.02, 0.08), graspable=True)
    s = make_scene([can], ee_xyz=(0.5, 0.4, 0.01), aperture=0.05)
    for _ in range(3):
        s = transition(s, Action((0.0, 0.0, 0.0), -1.0))
    assert s.attachment is None and s.robot.aperture == 0.0


def _rollout(name, seed, actions):
    _, s = create_task(name, seed)
    states = [s]
    for a in actions:
        s = transition(s, Action(tuple(a[:3]), a[3]))
        states.append(s)
    return states


actions_st = st.lists(st.tuples(*[st.floats(-0.03, 0.03)] * 3, st.floats(-1.0, 1.0)), min_size=1, max_size=40)


@given(st.sampled_from(["PickPlaceCan", "Lift", "DrawerOpen", "DialTurn"]), st.integers(0, 50), actions_st)
def test_determinism_and_kinematic_consistency(name, seed, actions):
    a = _rollout(name, seed, actions)
    b = _rollout(name, seed, actions)
    assert a == b
    for s in a:
        q = s.robot
        assert q.within_bounds()
        assert np.allclose(forward_kinematics(q).as_array(), s.ee.as_array(), atol=1e-9)
        for label, v in s.articulation_values.items():
            art = s.task.object(label).articulation
            assert art.low - 1e-12 <= v <= art.high + 1e-12


def test_attachment_rigidity_over_random_moves():
    can = ObjectSpec("can", "cylinder", (0.45, 0.35, 0.0, 0.0), (0.02, 0.08), graspable=True)
    s = make_scene([can], ee_xyz=(0.45, 0.35, 0.01), aperture=0.05)
    for _ in range(3):
        s = transition(s, Action((0.0, 0.0, 0.0), -1.0))
    rng = np.random.default_rng(0)
    offset = np.array(s.object_poses["can"][:3]) - s.ee.as_array()
    for _ in range(200):
        s = transition(s, Action(tuple(rng.uniform(-0.02, 0.02, 3)), -1.0))
        assert s.attachment == "can"
        rel = np.array(s.object_poses["can"][:3]) - s.ee.as_array()
        assert np.allclose(rel, offset, atol=1e-9)


# --- rendering -----------------------------------------------------------------------------

def test_empty_table_renders_table_at_plane_depth():
    s = make_scene([], ee_xyz=(0.5, 0.6, 0.25))
    top, _ = render_depth_and_masks(s)
    table = top.mask(TABLE)
    assert (table | top.mask(ROBOT)).all()
    assert np.allclose(top.depth[table], CAMERAS[0].position[2])


def test_cylinder_top_down_pixel_area():
    r = 0.04
    can = ObjectSpec("can", "cylinder", (0.4, 0.3, 0.0, 0.0), (r, 0.08))
    s = make_scene([can], ee_xyz=(0.5, 0.6, 0.25))
    top, _ = render_depth_and_masks(s)
    expected = math.pi * r * r / mask_pixel_area(CAMERAS[0])
    assert abs(top.mask("can").sum() - expected) <= 0.10 * expected


def test_uncorrupted_render_is_repeatable():
    _, s = create_task("CanBread", 2)
    a = render_depth_and_masks(s, Corruption(0.0, 0))
    b = render_depth_and_masks(s, Corruption(0.0, 0))
    for fa, fb in zip(a, b):
        assert np.array_equal(fa.depth, fb.depth) and np.array_equal(fa.ids, fb.ids)


def test_home_render_shows_robot_in_both_views():
    task = build_task("PickPlaceCan")
    state, frames = reset(task, 0)
    assert all(f.mask(ROBOT).any() for f in frames)
    assert reset(task, 0)[0] == state


def _backproject(frame):
    """Independent back-projection: ray origin + depth along the camera axis."""
    cam = frame.camera
    origins, dirs = cam.rays()
    d = frame.depth.ravel()
    t = d / cam.depth_scale()
    return origins + dirs * t[:, None]


@pytest.mark.parametrize("name,seed", [("PickPlaceCan", 0), ("CanBread", 4), ("MS-3", 1), ("NutRound", 2)])
def test_labelled_pixels_lie_on_their_surfaces(name, seed):
    _, s = create_task(name, seed)
    for frame in render_depth_and_masks(s):
        pts = _backproject(frame)
        ids = frame.ids.ravel()
        footprint = frame.depth.ravel() / frame.camera.K[0, 0] if frame.camera.kind == "persp" \
            else np.full(len(ids), 1.0 / frame.camera.K[0, 0])
        for o in s.task.object_set:
            for label in o.labels():
                sel = ids == frame.labels.index(label)
                if not sel.any():
                    continue
                parts = [p for p in s.object_parts(o.label) if p.label == label]
                d = np.min([np.abs(sdf3(p, pts[sel])) for p in parts], axis=0)
                assert np.all(d <= footprint[sel] + 1e-9)


def test_corruption_flips_and_erodes():
    _, s = create_task("PickPlaceCan", 0)
    clean = render_depth_and_masks(s)
    dirty = render_depth_and_masks(s, Corruption(0.05, 1))
    frac = np.mean([np.mean(c.ids != d.ids) for c, d in zip(clean, dirty)])
    assert 0.03 < frac < 0.5
    # erosion strips the rim; flips elsewhere add stray pixels but cannot restore it
    kept = dirty[0].mask("can") & clean[0].mask("can")
    assert kept.sum() < clean[0].mask("can").sum()
    assert (dirty[0].ids == -1).any()


# --- observations -----------------------------------------------------------------------------

def test_local_features_empty_neighbourhood():
    can = ObjectSpec("can", "cylinder", (0.2, 0.2, 0.0, 0.0), (0.03, 0.08))
    s = make_scene([can], ee_xyz=(0.6, 0.5, 0.2), aperture=0.06)
    f = local_features(s)
    assert f.shape == (LOCAL_DIM,)
    assert np.all(f[:3 * K_LOCAL] == 0)
    assert f[3 * K_LOCAL] == pytest.approx(0.06) and f[3 * K_LOCAL + 1] == 0 and f[3 * K_LOCAL + 2] == 0.2


def test_local_features_single_object_offset():
    box = ObjectSpec("block", "box", (0.55, 0.4, 0.0, 0.0), (0.04, 0.04, 0.04))
    s = make_scene([box], ee_xyz=(0.5, 0.4, 0.02))
    f = local_features(s)
    assert np.allclose(f[:3], (0.05, 0.0, 0.0), atol=1e-9)
    assert np.all(f[3:3 * K_LOCAL] == 0)


def test_local_features_tie_break_by_label():
    a = ObjectSpec("zeta", "box", (0.55, 0.4, 0.0, 0.0), (0.04, 0.04, 0.04))
    b = ObjectSpec("alpha", "box", (0.45, 0.4, 0.0, 0.0), (0.04, 0.04, 0.04))
    s = make_scene([a, b], ee_xyz=(0.5, 0.4, 0.02))
    f = local_features(s)
    assert np.allclose(f[:3], (-0.05, 0.0, 0.0), atol=1e-9)
    assert np.allclose(f[3:6], (0.05, 0.0, 0.0), atol=1e-9)


# --- reward and success ------------------------------------------------------------------------

def _with_pose(s, label, **kw):
    from dataclasses import replace
    x, y, z, yaw = s.object_poses[label]
    p = dict(x=x, y=y, z=z, yaw=yaw)
    p.update(kw)
    poses = dict(s.object_poses)
    poses[label] = (p["x"], p["y"], p["z"], p["yaw"])
    return replace(s, object_poses=poses)


def test_sparse_reward_values():
    task, s = create_task("Lift", 0, reward_mode="sparse")
    assert task_reward(s, ZERO_ACTION, s, task) == 0.0
    lifted = _with_pose(s, "red cube", z=0.06)
    assert task_reward(s, ZERO_ACTION, lifted, task) == 1.0


def test_dense_reward_zero_at_object_before_grasp():
    cube = ObjectSpec("red cube", "box", (0.45, 0.35, 0.0, 0.0), (0.05, 0.05, 0.05), graspable=True)
    s = make_scene([cube], ee_xyz=(0.45, 0.35, 0.025), goals=(Goal("lift", "red cube"),))
    assert task_reward(s, ZERO_ACTION, s, s.task) == pytest.approx(0.0, abs=1e-12)


@given(st.integers(0, 30), actions_st)
def test_sparse_reward_only_pays_at_success(seed, actions):
    task, s = create_task("Lift", seed, reward_mode="sparse")
    for a in actions:
        nxt, _, r, done = step(s, Action(tuple(a[:3]), a[3]))
        assert r in (0.0, 1.0)
        assert (r == 1.0) == is_success(nxt, task) == done
        s = nxt


def test_success_predicates():
    task, s = create_task("Lift", 0)
    assert is_success(_with_pose(s, "red cube", z=0.06), task)
    assert not is_success(s, task)

    task, s = create_task("NutRound", 0)
    px, py, pz, _ = s.object_poses["silver peg"]
    assert not is_success(_with_pose(s, "silver nut", x=px + 0.02, y=py, z=pz), task)
    assert is_success(_with_pose(s, "silver nut", x=px + 0.01, y=py, z=pz), task)

    task, s = create_task("MS-3", 3)
    from dataclasses import replace
    done = _with_pose(s, "kettle", y=s.object_poses["kettle"][1] + 0.11)
    done = replace(done, articulation_values={"burner": math.pi / 2, "drawer": 0.09})
    assert is_success(done, task)
    partial = replace(done, articulation_values={"burner": 0.2, "drawer": 0.09})
    assert not is_success(partial, task)


def test_pick_place_requires_release_and_radius():
    task, s = create_task("PickPlaceCan", 0)
    bx, by, _, _ = s.object_poses["bin 1"]
    inside = _with_pose(s, "can", x=bx + 0.02, y=by)
    assert is_success(inside, task)
    assert not is_success(_with_pose(s, "can", x=bx + 0.04, y=by), task)
    from dataclasses import replace
    assert not is_success(replace(inside, attachment="can"), task)


def test_dense_success_reward_tops_shaping():
    task, s = create_task("PickPlaceCan", 0)
    bx, by, _, _ = s.object_poses["bin 1"]
    win = _with_pose(s, "can", x=bx, y=by)
    assert task_reward(s, ZERO_ACTION, win, task) > task_reward(s, ZERO_ACTION, s, task)


# --- snapshots ---------------------------------------------------------------------------------

@pytest.mark.parametrize("name,seed", [("PickPlaceCan", 7), ("MS-3", 3)])
def test_scene_snapshot_golden(name, seed):
    _, s = create_task(name, seed)
    text = dump_scene(s)
    golden = GOLDEN / f"{name}_{seed}.scene"
    assert text == golden.read_text(encoding="utf-8")
    assert load_scene(text) == s


def test_snapshot_roundtrip_after_grasp():
    can = ObjectSpec("can", "cylinder", (0.45, 0.35, 0.0, 0.0), (0.02, 0.08), graspable=True)
    s = make_scene([can], ee_xyz=(0.45, 0.35, 0.01), aperture=0.05, name="PickPlaceCan")
    # custom object sets are not registry tasks; only registry scenes round-trip
    _, reg = create_task("PickPlaceCan", 3)
    for _ in range(4):
        reg = transition(reg, Action((0.0, -0.02, -0.02), -0.5))
    assert load_scene(dump_scene(reg)) == reg
