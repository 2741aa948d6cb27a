"""Simulated cinematographic camera and its receding-horizon controller.

The camera is a pinhole with a thin-lens depth-of-field model; eight scalars
are controllable: position (3), yaw, pitch, focal length, f-number, focus
distance. The controller minimizes a composition cost (squared normalized
joint-position errors) plus a depth-of-field cost (squared distance between
the actual and desired field limits) over a short horizon, by projected
gradient descent on the action rates with analytic gradients.

Depth-of-field cost conventions. A finite near target enters as a plain
squared difference. The far limit diverges at the hyperfocal point, so far
targets are compared in reciprocal space, rescaled by the target squared to
keep the term in meter units near the optimum. Sentinel targets become
one-sided hinges: +inf drives the relevant limit past the current
hyperfocal distance, 0 and -inf press the limit against the configured
minimum distance. The cost is zero exactly when all finite targets are met
and no hinge is active.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .instructions import DofTargets, dof_targets
from .measurements import ImageGeometry, JOINT_INDEX, NUM_JOINTS

FOCAL_RANGE_MM = (12.0, 400.0)
F_NUMBER_RANGE = (1.2, 22.0)
SENSOR_W_MM = 36.0
SENSOR_H_MM = 20.25
DEFAULT_COC_MM = 0.03

# State vector component order used throughout the controller.
STATE_NAMES = ("x", "y", "z", "yaw", "pitch", "focal_mm", "f_number",
               "focus_m")

# Depth at which a point counts as behind the camera for the cost.
DEPTH_MARGIN_M = 0.1


@dataclass(eq=False)
class CameraState:
    """Pose plus intrinsics; angles in radians, z is up.

    Yaw 0 looks along +x, pitch positive looks up. The sensor is 16:9 with
    square pixels at the default 320x180 geometry.
    """

    position: np.ndarray
    yaw: float
    pitch: float
    focal_mm: float
    f_number: float
    focus_m: float
    geometry: ImageGeometry = ImageGeometry(320, 180)
    sensor_w_mm: float = SENSOR_W_MM
    sensor_h_mm: float = SENSOR_H_MM
    coc_mm: float = DEFAULT_COC_MM

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        values = [*self.position, self.yaw, self.pitch, self.focal_mm,
                  self.f_number, self.focus_m, self.sensor_w_mm,
                  self.sensor_h_mm, self.coc_mm]
        if not all(math.isfinite(float(v)) for v in values):
            raise ConfigError("camera state must be finite")
        lo, hi = FOCAL_RANGE_MM
        if not lo <= self.focal_mm <= hi:
            raise ConfigError(
                f"focal length {self.focal_mm} mm outside [{lo}, {hi}]")
        lo, hi = F_NUMBER_RANGE
        if not lo <= self.f_number <= hi:
            raise ConfigError(
                f"f-number {self.f_number} outside [{lo}, {hi}]")
        if self.coc_mm <= 0:
            raise ConfigError("circle of confusion must be positive")
        if min(self.sensor_w_mm, self.sensor_h_mm) <= 0:
            raise ConfigError("sensor dimensions must be positive")
        if self.focus_m <= self.focal_mm / 1000.0:
            raise ConfigError(
                f"focus distance {self.focus_m} m must exceed the focal "
                f"length {self.focal_mm / 1000.0} m")

    def basis(self):
        return camera_basis(self.yaw, self.pitch)


def camera_basis(yaw: float, pitch: float):
    """Forward, right and up unit vectors for a z-up world."""
    sy, cy = math.sin(yaw), math.cos(yaw)
    sp, cp = math.sin(pitch), math.cos(pitch)
    fwd = np.array([cp * cy, cp * sy, sp])
    right = np.array([sy, -cy, 0.0])
    up = np.array([-sp * cy, -sp * sy, cp])
    return fwd, right, up


def state_to_vector(cam: CameraState) -> np.ndarray:
    return np.array([*cam.position, cam.yaw, cam.pitch, cam.focal_mm,
                     cam.f_number, cam.focus_m])


def vector_to_state(vec, template: CameraState) -> CameraState:
    v = np.asarray(vec, dtype=float).reshape(8)
    return CameraState(v[:3].copy(), float(v[3]), float(v[4]), float(v[5]),
                       float(v[6]), float(v[7]), template.geometry,
                       template.sensor_w_mm, template.sensor_h_mm,
                       template.coc_mm)


# ---------------------------------------------------------------------------
# Projection

@dataclass(frozen=True)
class ProjectedPoint:
    """Normalized image position; x, y are NaN when behind is set."""

    x: float
    y: float
    depth_m: float
    behind: bool


def project(point, cam: CameraState) -> ProjectedPoint:
    """Pinhole projection to normalized [0,1]^2 image coordinates.

    (0.5, 0.5) is the principal point; x grows rightward, y downward.
    Points at non-positive depth are flagged, not errors.
    """
    v = np.asarray(point, dtype=float) - cam.position
    fwd, right, up = cam.basis()
    depth = float(v @ fwd)
    if depth <= 1e-9:
        return ProjectedPoint(math.nan, math.nan, depth, True)
    x = 0.5 + (cam.focal_mm / cam.sensor_w_mm) * float(v @ right) / depth
    y = 0.5 - (cam.focal_mm / cam.sensor_h_mm) * float(v @ up) / depth
    return ProjectedPoint(x, y, depth, False)


# ---------------------------------------------------------------------------
# Thin lens

def hyperfocal_m(cam: CameraState) -> float:
    f = cam.focal_mm / 1000.0
    c = cam.coc_mm / 1000.0
    return f * f / (cam.f_number * c) + f


def thin_lens_dof(cam: CameraState):
    """Near and far limits of acceptable sharpness, in meters.

    Far limit is +inf at or beyond the hyperfocal focus distance.
    """
    f = cam.focal_mm / 1000.0
    h = hyperfocal_m(cam)
    s = cam.focus_m
    near = s * (h - f) / (h + s - 2.0 * f)
    far = s * (h - f) / (h - s) if s < h else math.inf
    return near, far


# ---------------------------------------------------------------------------
# Cost

@dataclass(eq=False)
class CostBreakdown:
    total: float
    gradient: np.ndarray
    image_cost: float
    dof_cost: float
    behind: bool


def _image_term(cam: CameraState, points, targets, grad):
    """Accumulate squared projection errors and their gradient.

    Points at depth <= DEPTH_MARGIN_M contribute a visibility penalty
    (margin - depth)^2 instead of a projection error.
    """
    sy, cy = math.sin(cam.yaw), math.cos(cam.yaw)
    sp, cp = math.sin(cam.pitch), math.cos(cam.pitch)
    fwd = np.array([cp * cy, cp * sy, sp])
    right = np.array([sy, -cy, 0.0])
    up = np.array([-sp * cy, -sp * sy, cp])
    dfwd_yaw = np.array([-cp * sy, cp * cy, 0.0])
    dfwd_pitch = np.array([-sp * cy, -sp * sy, cp])
    dright_yaw = np.array([cy, sy, 0.0])
    dup_yaw = np.array([sp * sy, -sp * cy, 0.0])
    dup_pitch = np.array([-cp * cy, -cp * sy, -sp])
    ku = cam.focal_mm / cam.sensor_w_mm
    kv = cam.focal_mm / cam.sensor_h_mm
    cost = 0.0
    behind = False
    for p, t in zip(points, targets):
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(t))):
            continue
        v = p - cam.position
        zc = float(v @ fwd)
        dz = np.zeros(8)
        dz[0:3] = -fwd
        dz[3] = float(v @ dfwd_yaw)
        dz[4] = float(v @ dfwd_pitch)
        if zc <= DEPTH_MARGIN_M:
            r = DEPTH_MARGIN_M - zc
            cost += r * r
            grad -= 2.0 * r * dz
            behind = True
            continue
        xc = float(v @ right)
        yc = -float(v @ up)
        dx = np.zeros(8)
        dx[0:3] = -right
        dx[3] = float(v @ dright_yaw)
        dy = np.zeros(8)
        dy[0:3] = up
        dy[3] = -float(v @ dup_yaw)
        dy[4] = -float(v @ dup_pitch)
        inv_z = 1.0 / zc
        du = ku * (dx * zc - xc * dz) * inv_z * inv_z
        dv = kv * (dy * zc - yc * dz) * inv_z * inv_z
        du[5] = xc * inv_z / cam.sensor_w_mm
        dv[5] = yc * inv_z / cam.sensor_h_mm
        ru = 0.5 + ku * xc * inv_z - t[0]
        rv = 0.5 + kv * yc * inv_z - t[1]
        cost += ru * ru + rv * rv
        grad += 2.0 * (ru * du + rv * dv)
    return cost, behind


def _dof_term(cam: CameraState, dof: DofTargets, min_distance_m, grad):
    """Accumulate near/far depth-of-field costs and their gradient.

    Gradient components land on focal_mm (per millimeter), f_number and
    focus_m. The far limit is handled in reciprocal space throughout.
    """
    f = cam.focal_mm / 1000.0
    n_ap = cam.f_number
    c = cam.coc_mm / 1000.0
    s = cam.focus_m
    h = f * f / (n_ap * c) + f
    dh_df = 2.0 * f / (n_ap * c) + 1.0
    dh_dn = -f * f / (n_ap * n_ap * c)
    a = h - f
    b = a + s - f
    near = s * a / b
    dnear_ds = a * (b - s) / (b * b)
    dnear_dh = s * (s - f) / (b * b)
    dnear_df = dnear_dh * dh_df + s * (h - s) / (b * b)
    dnear_dn = dnear_dh * dh_dn
    inv_far = (h - s) / (s * a)
    dinv_ds = -h / (s * s * a)
    dinv_dh = (s - f) / (s * a * a)
    dinv_df = dinv_dh * dh_df + (h - s) / (s * a * a)
    dinv_dn = dinv_dh * dh_dn

    def add(value, d_focal_m, d_n, d_s):
        grad[5] += d_focal_m / 1000.0
        grad[6] += d_n
        grad[7] += d_s
        return value

    t = dof.near_m
    if math.isinf(t):
        r = h - near
        near_cost = add(r * r, 2 * r * (dh_df - dnear_df),
                        2 * r * (dh_dn - dnear_dn),
                        -2 * r * dnear_ds) if r > 0 else 0.0
    elif t <= 0.0:
        r = near - min_distance_m
        near_cost = add(r * r, 2 * r * dnear_df, 2 * r * dnear_dn,
                        2 * r * dnear_ds) if r > 0 else 0.0
    else:
        r = near - t
        near_cost = add(r * r, 2 * r * dnear_df, 2 * r * dnear_dn,
                        2 * r * dnear_ds)

    t = dof.far_m
    if t == math.inf:
        far_cost = 0.0
        if s < h:
            far = s * a / (h - s)
            r = h - far
            if r > 0:
                dfar_dh = s * (f - s) / ((h - s) * (h - s))
                dfar_df = dfar_dh * dh_df - s / (h - s)
                dfar_dn = dfar_dh * dh_dn
                dfar_ds = a * h / ((h - s) * (h - s))
                far_cost = add(r * r, 2 * r * (dh_df - dfar_df),
                               2 * r * (dh_dn - dfar_dn), -2 * r * dfar_ds)
    elif t <= 0.0:
        scale = min_distance_m * min_distance_m
        r = (1.0 / min_distance_m - inv_far) * scale
        far_cost = add(r * r, -2 * r * scale * dinv_df,
                       -2 * r * scale * dinv_dn,
                       -2 * r * scale * dinv_ds) if r > 0 else 0.0
    else:
        r = (inv_far - 1.0 / t) * t * t
        far_cost = add(r * r, 2 * r * t * t * dinv_df,
                       2 * r * t * t * dinv_dn, 2 * r * t * t * dinv_ds)
    return near_cost + far_cost


def evaluate_cost(cam: CameraState, joint_points, joint_targets,
                  dof: DofTargets | None, w_im: float = 1.0,
                  w_dof: float = 1.0,
                  min_distance_m: float = 0.5) -> CostBreakdown:
    """Composition + depth-of-field cost with its analytic 8-gradient.

    joint_points: (E, 3) world positions; joint_targets: (E, 2) normalized
    image targets. Rows with NaN on either side are skipped. dof None skips
    the depth-of-field part entirely.
    """
    points = np.atleast_2d(np.asarray(joint_points, dtype=float))
    targets = np.atleast_2d(np.asarray(joint_targets, dtype=float))
    if points.shape[0] != targets.shape[0]:
        raise ConfigError("joint point and target counts differ")
    g_im = np.zeros(8)
    image_cost, behind = _image_term(cam, points, targets, g_im)
    g_dof = np.zeros(8)
    dof_cost = 0.0
    if dof is not None:
        dof_cost = _dof_term(cam, dof, min_distance_m, g_dof)
    total = w_im * image_cost + w_dof * dof_cost
    return CostBreakdown(total, w_im * g_im + w_dof * g_dof, image_cost,
                         dof_cost, behind)


# ---------------------------------------------------------------------------
# Receding-horizon controller

def default_rate_bounds():
    half = np.array([2.0, 2.0, 2.0, 1.5, 1.0, 60.0, 6.0, 12.0])
    return -half, half


def default_state_bounds():
    lower = np.array([-np.inf, -np.inf, -np.inf, -np.inf, -np.inf,
                      FOCAL_RANGE_MM[0], F_NUMBER_RANGE[0], 0.5])
    upper = np.array([np.inf, np.inf, np.inf, np.inf, np.inf,
                      FOCAL_RANGE_MM[1], F_NUMBER_RANGE[1], np.inf])
    return lower, upper


@dataclass(eq=False)
class ControlProblem:
    """Horizon length, cost weights, and box bounds on rates and states.

    The focus-distance lower state bound doubles as the minimum distance
    the depth-of-field hinges press against.
    """

    horizon: int = 5
    w_im: float = 1.0
    w_dof: float = 1.0
    rate_lower: np.ndarray = field(default=None)
    rate_upper: np.ndarray = field(default=None)
    state_lower: np.ndarray = field(default=None)
    state_upper: np.ndarray = field(default=None)
    pg_tolerance: float = 1e-4
    max_iterations: int = 500

    def __post_init__(self):
        rl, ru = default_rate_bounds()
        sl, su = default_state_bounds()
        self.rate_lower = rl if self.rate_lower is None else \
            np.asarray(self.rate_lower, dtype=float).reshape(8)
        self.rate_upper = ru if self.rate_upper is None else \
            np.asarray(self.rate_upper, dtype=float).reshape(8)
        self.state_lower = sl if self.state_lower is None else \
            np.asarray(self.state_lower, dtype=float).reshape(8)
        self.state_upper = su if self.state_upper is None else \
            np.asarray(self.state_upper, dtype=float).reshape(8)
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if self.w_im < 0 or self.w_dof < 0:
            raise ConfigError("cost weights must be nonnegative")
        if np.any(self.rate_lower > self.rate_upper):
            raise ConfigError("rate bounds cross: lower > upper")
        if not (np.all(np.isfinite(self.rate_lower))
                and np.all(np.isfinite(self.rate_upper))):
            raise ConfigError("rate bounds must be finite")
        if np.any(self.state_lower > self.state_upper):
            raise ConfigError("state bounds cross: lower > upper")
        if self.state_lower[5] < FOCAL_RANGE_MM[0] or \
                self.state_upper[5] > FOCAL_RANGE_MM[1]:
            raise ConfigError("focal state bounds outside the lens range")
        if self.state_lower[6] < F_NUMBER_RANGE[0] or \
                self.state_upper[6] > F_NUMBER_RANGE[1]:
            raise ConfigError("f-number state bounds outside the lens range")
        if self.state_lower[7] <= self.state_upper[5] / 1000.0:
            raise ConfigError(
                "minimum focus distance must exceed the maximum focal "
                "length in meters")
        if self.max_iterations < 1 or self.pg_tolerance <= 0:
            raise ConfigError("bad optimizer settings")

    @property
    def min_distance_m(self) -> float:
        return float(self.state_lower[7])


@dataclass(eq=False)
class SubjectEstimate:
    """Current world joint positions (15, 3) and velocities (15, 3)."""

    positions: np.ndarray
    velocities: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float) \
            .reshape(NUM_JOINTS, 3)
        self.velocities = np.asarray(self.velocities, dtype=float) \
            .reshape(NUM_JOINTS, 3)

    def at(self, dt: float) -> np.ndarray:
        return self.positions + dt * self.velocities


@dataclass(eq=False)
class ControlPlan:
    actions: np.ndarray
    states: np.ndarray
    cost: float
    iterations: int
    pg_norm: float
    converged: bool
    dof: tuple


def subject_depth(cam: CameraState, subject: SubjectEstimate) -> float:
    """Depth of the chest joint along the optical axis, in meters."""
    fwd, _, _ = cam.basis()
    chest = subject.positions[JOINT_INDEX["chest"]]
    return float((chest - cam.position) @ fwd)


def clamp_state(vec, problem: ControlProblem):
    return np.clip(vec, problem.state_lower, problem.state_upper)


def apply_action(cam: CameraState, action, dt: float,
                 problem: ControlProblem) -> CameraState:
    vec = clamp_state(state_to_vector(cam) + dt * np.asarray(action), problem)
    return vector_to_state(vec, cam)


def _step_targets(window, subject: SubjectEstimate, dts):
    """Predicted joint world points and their targets per horizon step."""
    out = []
    elapsed = np.cumsum(dts)
    for k, frame in enumerate(window):
        pred = subject.at(float(elapsed[k]))
        pts = np.array([pred[JOINT_INDEX[t.joint]] for t in frame.targets]) \
            if frame.targets else np.empty((0, 3))
        tgt = np.array([[t.x, t.y] for t in frame.targets]) \
            if frame.targets else np.empty((0, 2))
        out.append((pts, tgt))
    return out


def control_step(cam: CameraState, window, subject: SubjectEstimate,
                 problem: ControlProblem, mu_m: float = 1.0,
                 warm_start=None) -> ControlPlan:
    """Plan the next `horizon` actions; the caller applies the first.

    window: upcoming FrameInstruction objects; shorter windows repeat their
    last entry. The subject is extrapolated at constant velocity, and the
    depth-of-field targets are derived once per call from the current chest
    depth (floored at the minimum focus distance).
    """
    if len(window) == 0:
        raise ConfigError("instruction window is empty")
    n = problem.horizon
    frames = [window[min(k, len(window) - 1)] for k in range(n)]
    dts = np.array([f.duration_s for f in frames])
    depth = max(subject_depth(cam, subject), problem.min_distance_m)
    dofs = tuple(dof_targets(f.focus, depth, mu_m) for f in frames)
    steps = _step_targets(frames, subject, dts)

    s0 = state_to_vector(cam)
    mid = 0.5 * (problem.rate_lower + problem.rate_upper)
    half = 0.5 * (problem.rate_upper - problem.rate_lower)
    active = half > 0
    half_safe = np.where(active, half, 1.0)

    def run(u_hat):
        """Horizon cost and gradient in normalized action coordinates."""
        u = mid + half * u_hat
        states = np.empty((n, 8))
        masks = np.empty((n, 8))
        grads = np.empty((n, 8))
        cost = 0.0
        s = s0
        for k in range(n):
            raw = s + dts[k] * u[k]
            s = clamp_state(raw, problem)
            states[k] = s
            masks[k] = (raw >= problem.state_lower) & \
                       (raw <= problem.state_upper)
            pts, tgt = steps[k]
            part = evaluate_cost(vector_to_state(s, cam), pts, tgt, dofs[k],
                                 problem.w_im, problem.w_dof,
                                 problem.min_distance_m)
            grads[k] = part.gradient
            cost += part.total
        g_u = np.empty((n, 8))
        adj = grads[n - 1]
        g_u[n - 1] = dts[n - 1] * masks[n - 1] * adj
        for k in range(n - 2, -1, -1):
            adj = grads[k] + masks[k + 1] * adj
            g_u[k] = dts[k] * masks[k] * adj
        return cost, g_u * half, states

    if warm_start is None:
        x = np.zeros((n, 8))
    else:
        ws = np.asarray(warm_start, dtype=float).reshape(n, 8)
        x = np.clip((ws - mid) / half_safe, -1.0, 1.0)
    x[:, ~active] = 0.0

    fx, gx, states = run(x)
    vel = np.zeros_like(x)
    step = 1.0
    pg = float(np.max(np.abs(x - np.clip(x - gx, -1.0, 1.0))))
    iterations = 0

    def accept(x_new, f_new, g_new, s_new):
        # Barzilai-Borwein spectral step from the accepted move.
        nonlocal x, fx, gx, states, vel, step
        dx = (x_new - x).ravel()
        dg = (g_new - gx).ravel()
        curv = float(dx @ dg)
        if curv > 1e-18:
            step = min(max(float(dx @ dx) / curv, 1e-8), 1e6)
        vel = x_new - x
        x, fx, gx, states = x_new, f_new, g_new, s_new

    for iterations in range(1, problem.max_iterations + 1):
        pg = float(np.max(np.abs(x - np.clip(x - gx, -1.0, 1.0))))
        if pg <= problem.pg_tolerance:
            break
        cand = np.clip(x + 0.8 * vel - step * gx, -1.0, 1.0)
        fc, gc, sc = run(cand)
        if fc < fx - 1e-15 * (1.0 + abs(fx)):
            accept(cand, fc, gc, sc)
            continue
        vel[:] = 0.0
        trial = step
        accepted = False
        while trial > 1e-14:
            cand = np.clip(x - trial * gx, -1.0, 1.0)
            fc, gc, sc = run(cand)
            if fc < fx - 1e-15 * (1.0 + abs(fx)):
                accept(cand, fc, gc, sc)
                accepted = True
                break
            trial *= 0.5
        if not accepted:
            break
    pg = float(np.max(np.abs(x - np.clip(x - gx, -1.0, 1.0))))
    converged = pg <= problem.pg_tolerance
    actions = mid + half * x
    return ControlPlan(actions, states, fx, iterations, pg, converged, dofs)
