import math

import numpy as np
import pytest

from cinestyle.camera import (
    CameraState,
    ControlProblem,
    SubjectEstimate,
    apply_action,
    camera_basis,
    control_step,
    default_rate_bounds,
    evaluate_cost,
    hyperfocal_m,
    project,
    state_to_vector,
    subject_depth,
    thin_lens_dof,
    vector_to_state,
)
from cinestyle.errors import ConfigError
from cinestyle.instructions import DofTargets, FrameInstruction, JointTarget
from cinestyle.measurements import JOINT_INDEX, JOINT_NAMES
from cinestyle.reference import (
    finite_difference_gradient,
    homogeneous_projection,
    trace_blur_diameter_mm,
)

from support import OFFSETS_M, standing_subject


def make_cam(pos=(0.0, 0.0, 1.5), yaw=0.0, pitch=0.0, focal=50.0,
             f_number=2.0, focus=8.0):
    return CameraState(np.asarray(pos, float), yaw, pitch, focal, f_number,
                       focus)


def random_cam(rng):
    return CameraState(rng.normal(0, 3, 3), rng.uniform(-np.pi, np.pi),
                       rng.uniform(-0.4, 0.4), rng.uniform(20, 200),
                       rng.uniform(1.5, 16), rng.uniform(0.8, 30))


# ---------------------------------------------------------------------------
# State validation

def test_state_rejects_out_of_range():
    with pytest.raises(ConfigError):
        make_cam(focal=8.0)
    with pytest.raises(ConfigError):
        make_cam(focal=500.0)
    with pytest.raises(ConfigError):
        make_cam(f_number=1.0)
    with pytest.raises(ConfigError):
        make_cam(f_number=32.0)
    with pytest.raises(ConfigError):
        make_cam(focal=400.0, focus=0.3)
    with pytest.raises(ConfigError):
        CameraState(np.zeros(3), 0.0, 0.0, 50.0, 2.0, 8.0, coc_mm=0.0)
    with pytest.raises(ConfigError):
        make_cam(yaw=math.nan)


def test_vector_roundtrip():
    cam = make_cam(pos=(1, 2, 3), yaw=0.3, pitch=-0.1)
    vec = state_to_vector(cam)
    again = vector_to_state(vec, cam)
    np.testing.assert_array_equal(state_to_vector(again), vec)
    assert again.geometry == cam.geometry


# ---------------------------------------------------------------------------
# Projection

def test_principal_point():
    for yaw, pitch in [(0.0, 0.0), (1.1, 0.2), (-2.0, -0.3)]:
        cam = make_cam(yaw=yaw, pitch=pitch)
        fwd, _, _ = cam.basis()
        p = project(cam.position + 7.0 * fwd, cam)
        assert not p.behind
        assert p.x == pytest.approx(0.5, abs=1e-12)
        assert p.y == pytest.approx(0.5, abs=1e-12)
        assert p.depth_m == pytest.approx(7.0, abs=1e-12)


def test_offset_scales_with_focal_length():
    cam1 = make_cam(focal=24.0)
    cam2 = make_cam(focal=48.0)
    point = np.array([10.0, 0.4, 1.9])
    off1 = project(point, cam1).x - 0.5
    off2 = project(point, cam2).x - 0.5
    assert off2 == pytest.approx(2.0 * off1, rel=1e-12)
    off1y = project(point, cam1).y - 0.5
    off2y = project(point, cam2).y - 0.5
    assert off2y == pytest.approx(2.0 * off1y, rel=1e-12)


def test_behind_camera_flagged():
    cam = make_cam()
    fwd, _, _ = cam.basis()
    p = project(cam.position - 2.0 * fwd, cam)
    assert p.behind and math.isnan(p.x)


def test_image_axes_directions():
    cam = make_cam()
    right_pt = project(np.array([10.0, -1.0, 1.5]), cam)
    assert right_pt.x > 0.5
    up_pt = project(np.array([10.0, 0.0, 2.5]), cam)
    assert up_pt.y < 0.5


def test_matches_homogeneous_matrix_oracle():
    rng = np.random.default_rng(7)
    checked = 0
    while checked < 300:
        cam = random_cam(rng)
        fwd, right, up = cam.basis()
        z = rng.uniform(0.5, 40)
        point = (cam.position + z * fwd + rng.uniform(-z, z) * right
                 + rng.uniform(-z, z) * up)
        mine = project(point, cam)
        (ox, oy), oz = homogeneous_projection(point, cam)
        assert abs(mine.x - ox) <= 1e-9
        assert abs(mine.y - oy) <= 1e-9
        assert abs(mine.depth_m - oz) <= 1e-9
        checked += 1


# ---------------------------------------------------------------------------
# Thin lens

def test_hyperfocal_frozen_value():
    cam = make_cam(focal=50.0, f_number=2.0)
    assert hyperfocal_m(cam) == pytest.approx(41.71666666666667, rel=1e-12)


def test_far_limit_infinite_beyond_hyperfocal():
    cam = make_cam(focal=50.0, f_number=2.0, focus=45.0)
    near, far = thin_lens_dof(cam)
    assert math.isinf(far)
    assert near < 45.0


def test_focus_plane_inside_field():
    rng = np.random.default_rng(3)
    for _ in range(200):
        cam = random_cam(rng)
        near, far = thin_lens_dof(cam)
        assert 0.0 < near < cam.focus_m
        if math.isfinite(far):
            assert far > cam.focus_m


def test_blur_equals_coc_at_field_limits():
    rng = np.random.default_rng(11)
    checked = 0
    while checked < 1000:
        cam = random_cam(rng)
        near, far = thin_lens_dof(cam)
        assert trace_blur_diameter_mm(cam, near) == \
            pytest.approx(cam.coc_mm, rel=1e-6)
        if math.isfinite(far):
            assert trace_blur_diameter_mm(cam, far) == \
                pytest.approx(cam.coc_mm, rel=1e-6)
        checked += 1


def test_field_depth_monotonicity():
    # Depth of field widens with coc and f-number, narrows with focal
    # length. Parameters keep both fields finite.
    rng = np.random.default_rng(19)
    for _ in range(200):
        focal = rng.uniform(100, 300)
        n_ap = rng.uniform(1.2, 22)
        coc = rng.uniform(0.01, 0.05)
        s = rng.uniform(1.0, 3.0)

        def depth(fo, na, c):
            cam = CameraState(np.zeros(3), 0.0, 0.0, fo, na, s, coc_mm=c)
            near, far = thin_lens_dof(cam)
            assert math.isfinite(far)
            return far - near

        base = depth(focal, n_ap, coc)
        assert depth(focal, n_ap, coc * rng.uniform(1.01, 2)) >= base - 1e-12
        assert depth(focal, min(22, n_ap * rng.uniform(1.01, 1.5)),
                     coc) >= base - 1e-12
        assert depth(min(400, focal * rng.uniform(1.01, 1.3)), n_ap,
                     coc) <= base + 1e-12


# ---------------------------------------------------------------------------
# Cost

def satisfying_setup():
    cam = make_cam(pos=(0, 0, 1.5), yaw=0.0, pitch=0.0, focal=50.0,
                   f_number=2.0, focus=8.0)
    points = np.array([[8.0, 0.5, 1.8], [8.0, -0.4, 1.2]])
    targets = np.array([[project(p, cam).x, project(p, cam).y]
                        for p in points])
    near, far = thin_lens_dof(cam)
    return cam, points, targets, DofTargets(near, far)


def test_cost_zero_when_satisfied():
    cam, points, targets, dof = satisfying_setup()
    out = evaluate_cost(cam, points, targets, dof)
    assert out.total == pytest.approx(0.0, abs=1e-16)
    assert np.max(np.abs(out.gradient)) <= 1e-8
    assert not out.behind


def test_cost_rises_with_focus_displacement():
    cam, points, targets, dof = satisfying_setup()
    moved = make_cam(pos=(0, 0, 1.5), focal=50.0, f_number=2.0, focus=9.0)
    out = evaluate_cost(moved, points, targets, dof)
    assert out.total > 1e-6
    assert out.gradient[7] > 0


def test_behind_subject_penalized_and_flagged():
    cam = make_cam()
    behind_pt = cam.position - 3.0 * cam.basis()[0]
    out = evaluate_cost(cam, behind_pt[None, :], np.array([[0.5, 0.5]]), None)
    assert out.behind
    assert out.total == pytest.approx((0.1 + 3.0) ** 2, rel=1e-12)


def test_nan_rows_skipped():
    cam, points, targets, dof = satisfying_setup()
    pts = np.vstack([points, [np.nan, np.nan, np.nan]])
    tgt = np.vstack([targets, [0.1, 0.1]])
    out = evaluate_cost(cam, pts, tgt, dof)
    assert out.total == pytest.approx(0.0, abs=1e-16)


def test_weights_scale_terms():
    cam, points, targets, dof = satisfying_setup()
    out = evaluate_cost(cam, points, targets + 0.1,
                        DofTargets(dof.near_m + 1, dof.far_m), 2.0, 3.0)
    assert out.total == pytest.approx(
        2.0 * out.image_cost + 3.0 * out.dof_cost, rel=1e-12)


def _random_dof_case(rng, cam, kind):
    near, far = thin_lens_dof(cam)
    h = hyperfocal_m(cam)
    if kind == 0:
        return DofTargets(max(0.6, near * rng.uniform(0.5, 1.5)),
                          max(1.0, (far if math.isfinite(far) else 3 * h)
                              * rng.uniform(0.5, 1.5)))
    if kind == 1:
        return DofTargets(0.0, math.inf)
    if kind == 2:
        return DofTargets(math.inf, -math.inf)
    if kind == 3:
        return DofTargets(max(0.6, near * 0.8), math.inf)
    return DofTargets(0.0, max(1.0, near * 1.1))


def _kink_margins_ok(cam, dof, min_d=0.5):
    # Keep hinge boundaries away from the finite-difference stencil.
    near, far = thin_lens_dof(cam)
    h = hyperfocal_m(cam)
    if dof.near_m == 0.0 and abs(near - min_d) < 1e-3:
        return False
    if math.isinf(dof.far_m) and dof.far_m > 0:
        if cam.focus_m >= h:
            return abs(cam.focus_m - h) > 1e-3
        return abs(h - far) > 1e-3 if math.isfinite(far) else True
    return True


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(23)
    checked = 0
    while checked < 200:
        cam = random_cam(rng)
        dof = _random_dof_case(rng, cam, checked % 5)
        if not _kink_margins_ok(cam, dof):
            continue
        fwd, right, up = cam.basis()
        pts = []
        for _ in range(3):
            z = rng.uniform(1.5, 25)
            pts.append(cam.position + z * fwd
                       + rng.uniform(-z / 3, z / 3) * right
                       + rng.uniform(-z / 3, z / 3) * up)
        pts = np.array(pts)
        tgt = rng.uniform(0.1, 0.9, (3, 2))
        out = evaluate_cost(cam, pts, tgt, dof)

        def total(vec):
            return evaluate_cost(vector_to_state(vec, cam), pts, tgt,
                                 dof).total

        fd = finite_difference_gradient(total, state_to_vector(cam))
        denom = np.maximum(1.0, np.abs(fd))
        assert np.max(np.abs(fd - out.gradient) / denom) < 1e-5
        checked += 1


def test_visibility_penalty_gradient():
    rng = np.random.default_rng(29)
    for _ in range(20):
        cam = random_cam(rng)
        fwd, right, up = cam.basis()
        pt = cam.position - rng.uniform(1, 10) * fwd \
            + rng.uniform(-2, 2) * right
        tgt = np.array([[0.5, 0.5]])
        out = evaluate_cost(cam, pt[None, :], tgt, None)

        def total(vec):
            return evaluate_cost(vector_to_state(vec, cam), pt[None, :],
                                 tgt, None).total

        fd = finite_difference_gradient(total, state_to_vector(cam))
        denom = np.maximum(1.0, np.abs(fd))
        assert np.max(np.abs(fd - out.gradient) / denom) < 1e-5


# ---------------------------------------------------------------------------
# Controller

def still(subject_pos):
    return SubjectEstimate(subject_pos, np.zeros((15, 3)))


def test_problem_validation():
    with pytest.raises(ConfigError):
        ControlProblem(horizon=0)
    with pytest.raises(ConfigError):
        ControlProblem(w_im=-1.0)
    bad = np.array([1.0, 2, 2, 1.5, 1, 60, 6, 12])
    with pytest.raises(ConfigError, match="rate bounds"):
        ControlProblem(rate_lower=bad, rate_upper=-bad)
    lower, upper = (np.array(b, float) for b in default_rate_bounds())
    sl = np.array([-np.inf] * 5 + [12, 1.2, 0.3])
    with pytest.raises(ConfigError, match="focus"):
        ControlProblem(state_lower=sl)
    sl = np.array([-np.inf] * 5 + [5.0, 1.2, 0.5])
    with pytest.raises(ConfigError, match="focal"):
        ControlProblem(state_lower=sl)


def test_subject_depth_uses_chest():
    cam = make_cam(pos=(0, 0, 1.3), yaw=0.0)
    subject = still(standing_subject(x=6.0))
    chest = standing_subject(x=6.0)[JOINT_INDEX["chest"]]
    assert subject_depth(cam, subject) == pytest.approx(chest[0], abs=1e-12)


def test_apply_action_clamps_to_state_bounds():
    prob = ControlProblem()
    cam = make_cam(focal=390.0)
    out = apply_action(cam, np.array([0, 0, 0, 0, 0, 60.0, 0, 0]), 1.0, prob)
    assert out.focal_mm == 400.0
    out = apply_action(cam, np.array([0, 0, 0, 0, 0, 0, -6.0, 0]), 1.0, prob)
    assert out.f_number == 1.2


def test_satisfied_targets_give_near_zero_action():
    # Intrinsics solved so the field limits sit exactly at depth -+ 1:
    # with H = hyperfocal and s = focus distance, (D_n, D_f) = (9, 11) at
    # depth 10 forces s = (H + 9f)/10 and H = 99 - 9f.
    coc_m = 0.03e-3
    f = 0.06
    h = 99.0 - 9.0 * f
    cam = CameraState(np.array([0.0, 0.0, 1.5]), 0.0, 0.0, f * 1000.0,
                      f * f / (coc_m * (h - f)), (h + 9.0 * f) / 10.0)
    assert thin_lens_dof(cam) == pytest.approx((9.0, 11.0), abs=1e-9)
    points = np.array([[10.0, 0.0, 1.5], [10.0, 0.3, 1.7]])
    subject_pos = np.tile(points[0], (15, 1))
    subject_pos[JOINT_INDEX["neck"]] = points[1]
    instr_targets = tuple(
        JointTarget(name, project(p, cam).x, project(p, cam).y)
        for name, p in (("chest", points[0]), ("neck", points[1])))
    frame = FrameInstruction(0.5, instr_targets, (False, True, False))
    plan = control_step(cam, [frame], still(subject_pos), ControlProblem(),
                        mu_m=1.0)
    assert np.max(np.abs(plan.actions)) <= 1e-4
    assert plan.converged


def test_actions_and_states_respect_bounds():
    rng = np.random.default_rng(31)
    prob = ControlProblem(max_iterations=40)
    subject = still(standing_subject(x=6.0))
    frame = FrameInstruction(
        0.5, (JointTarget("chest", 0.2, 0.8),), (True, False, False))
    for _ in range(5):
        cam = random_cam(rng)
        plan = control_step(cam, [frame], subject, prob)
        assert np.all(plan.actions >= prob.rate_lower - 1e-12)
        assert np.all(plan.actions <= prob.rate_upper + 1e-12)
        assert np.all(plan.states >= prob.state_lower - 1e-12)
        assert np.all(plan.states <= prob.state_upper + 1e-12)


def test_control_is_deterministic():
    subject = still(standing_subject(x=7.0))
    frame = FrameInstruction(
        0.5, (JointTarget("head", 0.5, 0.33),), (False, True, False))
    prob = ControlProblem(max_iterations=60)
    cam = make_cam(yaw=0.2)
    a = control_step(cam, [frame], subject, prob).actions
    b = control_step(cam, [frame], subject, prob).actions
    assert a.tobytes() == b.tobytes()


def test_empty_window_rejected():
    prob = ControlProblem()
    with pytest.raises(ConfigError):
        control_step(make_cam(), [], still(standing_subject()), prob)


def test_dof_servo_reaches_requested_field():
    # Subject-only focus on a static subject ten meters out: the field
    # limits should land within half a meter of (depth-1, depth+1).
    subject = still(standing_subject(x=10.0))
    frame = FrameInstruction(0.5, (), (False, True, False))
    prob = ControlProblem(w_im=0.0)
    cam = CameraState(np.array([0.0, 0.0, 1.3]), 0.0, 0.0, 50.0, 2.0, 5.0)
    warm = None
    for _ in range(20):
        plan = control_step(cam, [frame], subject, prob, 1.0,
                            warm_start=warm)
        cam = apply_action(cam, plan.actions[0], 0.5, prob)
        warm = np.vstack([plan.actions[1:], plan.actions[-1:]])
    depth = subject_depth(cam, subject)
    near, far = thin_lens_dof(cam)
    assert near <= depth <= far
    assert abs(near - (depth - 1)) + abs(far - (depth + 1)) < 0.5


def test_shoulders_track_thirds():
    subject = still(standing_subject(x=8.0))
    targets = (JointTarget("left_shoulder", 1 / 3, 0.45),
               JointTarget("right_shoulder", 2 / 3, 0.45))
    frame = FrameInstruction(0.5, targets, (False, True, False))
    prob = ControlProblem(max_iterations=250)
    cam = CameraState(np.array([0.0, 1.0, 1.0]), 0.3, 0.0, 50.0, 2.0, 5.0)
    warm = None
    for _ in range(35):
        plan = control_step(cam, [frame], subject, prob, 1.0,
                            warm_start=warm)
        cam = apply_action(cam, plan.actions[0], 0.5, prob)
        warm = np.vstack([plan.actions[1:], plan.actions[-1:]])
    for t in targets:
        p = project(subject.positions[JOINT_INDEX[t.joint]], cam)
        assert np.hypot(p.x - t.x, p.y - t.y) < 0.02


def test_moving_subject_prediction_used():
    # A subject drifting sideways: the plan for a converged tracker puts
    # later-step states ahead of the current subject position.
    pos = standing_subject(x=8.0)
    subject = SubjectEstimate(pos, np.tile([0.0, 0.5, 0.0], (15, 1)))
    frame = FrameInstruction(
        0.5, (JointTarget("chest", 0.5, 0.5),), (False, True, False))
    prob = ControlProblem(max_iterations=200)
    cam = make_cam(pos=(0, 0, 1.3), focus=8.0)
    plan = control_step(cam, [frame], subject, prob, 1.0)
    cam_end = vector_to_state(plan.states[-1], cam)
    end_time = 0.5 * prob.horizon
    chest_now = pos[JOINT_INDEX["chest"]]
    chest_end = chest_now + np.array([0.0, 0.5, 0.0]) * end_time
    err_end = project(chest_end, cam_end)
    assert np.hypot(err_end.x - 0.5, err_end.y - 0.5) < 0.05
