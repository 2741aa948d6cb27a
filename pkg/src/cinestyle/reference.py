"""Dense reference solvers used as independent test oracles.

Everything here favors obviousness over speed: full matrices, exhaustive
enumeration, and brute-force grids. Production code must never call into
this module; tests compare against it.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import lsq_linear

from .solvers import (
    AssignmentProblem,
    SmoothingProblem,
    box_qp_objective,
    relaxed_objective,
)


def dense_smoothing_unconstrained(p: SmoothingProblem) -> np.ndarray:
    """Solve the smoothing normal equations as one dense (F*D)^2 system."""
    frames, dim = p.y.shape
    lap = np.zeros((frames, frames))
    for f in range(1, frames):
        lap[f - 1, f - 1] += 1.0
        lap[f, f] += 1.0
        lap[f - 1, f] -= 1.0
        lap[f, f - 1] -= 1.0
    a_full = p.lam * np.kron(lap, np.eye(dim)) + np.diag(np.repeat(p.weights, dim))
    b_full = (p.weights[:, None] * p.y).ravel()
    return np.linalg.solve(a_full, b_full).reshape(frames, dim)


def bounded_smoothing_lsq(p: SmoothingProblem) -> np.ndarray:
    """Solve the box-bounded smoothing problem coordinatewise via BVLS.

    The objective is a plain least squares: stack sqrt(lam) times the
    difference operator over sqrt(w) times the identity.
    """
    frames, dim = p.y.shape
    diff = np.zeros((max(frames - 1, 0), frames))
    for f in range(frames - 1):
        diff[f, f] = -1.0
        diff[f, f + 1] = 1.0
    out = np.empty((frames, dim))
    sw = np.sqrt(p.weights)
    a_ls = np.vstack([np.sqrt(p.lam) * diff, np.diag(sw)])
    for d in range(dim):
        b_ls = np.concatenate([np.zeros(diff.shape[0]), sw * p.y[:, d]])
        res = lsq_linear(a_ls, b_ls,
                         bounds=(np.full(frames, p.lower[d]),
                                 np.full(frames, p.upper[d])),
                         method="bvls", tol=1e-14)
        out[:, d] = res.x
    return out


def enumerate_box_qp(Q, g, lower, upper):
    """Exhaustive active-set search for min x'Qx + g'x on a box, n <= 10.

    Tries every {lower, free, upper} pattern, solves the free block, keeps
    the best feasible candidate. Exact up to linear-algebra roundoff.
    """
    Q = np.asarray(Q, float)
    Qs = 0.5 * (Q + Q.T)
    g = np.asarray(g, float).ravel()
    n = g.size
    if n > 10:
        raise ValueError("enumeration oracle limited to n <= 10")
    lo = np.broadcast_to(np.asarray(lower, float), (n,))
    hi = np.broadcast_to(np.asarray(upper, float), (n,))
    span = np.where(np.isfinite(hi - lo), hi - lo, 1.0)
    tol = 1e-9 * (1.0 + span)
    best_x, best_f = None, np.inf
    for pattern in itertools.product((-1, 0, 1), repeat=n):
        pat = np.array(pattern)
        if ((pat == -1) & ~np.isfinite(lo)).any():
            continue
        if ((pat == 1) & ~np.isfinite(hi)).any():
            continue
        x = np.where(pat == -1, lo, np.where(pat == 1, hi, 0.0))
        free = pat == 0
        if free.any():
            rhs = -(g[free] + 2.0 * Qs[np.ix_(free, ~free)] @ x[~free])
            sol, *_ = np.linalg.lstsq(2.0 * Qs[np.ix_(free, free)], rhs, rcond=None)
            x[free] = sol
            if (x[free] < lo[free] - tol[free]).any() or \
                    (x[free] > hi[free] + tol[free]).any():
                continue
            x[free] = np.clip(x[free], lo[free], hi[free])
        f = box_qp_objective(Q, g, x)
        if f < best_f:
            best_x, best_f = x, f
    return best_x, best_f


def interior_point_box_qp(Q, g, lower, upper):
    """Reference solution via an interior-point QP solver (test-only dep)."""
    from cvxopt import matrix, solvers

    Q = np.asarray(Q, float)
    Qs = 0.5 * (Q + Q.T)
    g = np.asarray(g, float).ravel()
    n = g.size
    lo = np.broadcast_to(np.asarray(lower, float), (n,))
    hi = np.broadcast_to(np.asarray(upper, float), (n,))
    rows, rhs = [], []
    for i in range(n):
        if np.isfinite(hi[i]):
            row = np.zeros(n)
            row[i] = 1.0
            rows.append(row)
            rhs.append(hi[i])
        if np.isfinite(lo[i]):
            row = np.zeros(n)
            row[i] = -1.0
            rows.append(row)
            rhs.append(-lo[i])
    saved = dict(solvers.options)
    try:
        solvers.options.update({"show_progress": False, "abstol": 1e-10,
                                "reltol": 1e-10, "feastol": 1e-10})
        sol = solvers.qp(matrix(2.0 * Qs), matrix(g),
                         matrix(np.array(rows)), matrix(np.array(rhs)))
    finally:
        solvers.options.clear()
        solvers.options.update(saved)
    x = np.asarray(sol["x"]).ravel()
    return x, box_qp_objective(Q, g, x)


def enumerate_assignments(p: AssignmentProblem):
    """Brute-force minimum over the full product of per-frame candidates.

    Returns (choices, objective) with None at empty frames. The first
    minimum in lexicographic candidate order wins, matching the documented
    lowest-index tie-break.
    """
    active = p.nonempty_frames()
    if not active:
        raise ValueError("every frame is empty")
    sizes = [p.candidates[f].shape[0] for f in active]
    count = int(np.prod(sizes))
    if count > 2_000_000:
        raise ValueError(f"{count} assignments is too many to enumerate")
    combos = np.indices(sizes).reshape(len(sizes), -1).T
    node = np.zeros(count)
    pts = np.empty((count, len(active), p.dim))
    for i, f in enumerate(active):
        node += p.confidence_weight * (1.0 - p.confidences[f][combos[:, i]])
        pts[:, i] = p.candidates[f][combos[:, i]]
    trans = ((pts[:, 1:] - pts[:, :-1]) ** 2).sum(axis=(1, 2))
    objective = node + trans
    best = int(np.argmin(objective))
    choices: list = [None] * p.frame_count
    for i, f in enumerate(active):
        choices[f] = int(combos[best, i])
    return tuple(choices), float(objective[best])


def _simplex_grid(m: int, n: int) -> np.ndarray:
    """All points of the simplex grid {k/n : sum k = n} as rows."""
    rows = []
    for combo in itertools.combinations(range(n + m - 1), m - 1):
        cuts = np.array((-1,) + combo + (n + m - 1,))
        rows.append(np.diff(cuts) - 1)
    return np.array(rows, float) / n


def grid_selection_step(scores: np.ndarray, temperature: float, eps: float,
                        grid_n: int = 64, levels: int = 5) -> np.ndarray:
    """Zooming grid search for the entropy-smoothed selection subproblem.

    Minimizes <scores, a> + temperature * sum(a * ln a) over the simplex
    clipped to [eps, 1 - eps], by repeatedly gridding a shrinking
    neighborhood of the incumbent.
    """
    m = scores.size
    if m == 1:
        return np.array([1.0])
    base = _simplex_grid(m, grid_n)
    center = np.full(m, 1.0 / m)
    span = 1.0
    best = None
    for _ in range(levels):
        pts = (1.0 - span) * center + span * base
        alpha = eps + (1.0 - m * eps) * pts
        vals = alpha @ scores + temperature * (alpha * np.log(alpha)).sum(axis=1)
        k = int(np.argmin(vals))
        if best is None or vals[k] < best[0]:
            best = (float(vals[k]), alpha[k])
        center = pts[k]
        span = min(span, 4.0 * span / grid_n)
    return best[1]


def alternate_grid_selection(p: AssignmentProblem, temperature: float,
                             seeds, lam: float = 1.0, eps: float = 1e-3,
                             rel_tol: float = 1e-8, max_iter: int = 200):
    """Mirror of the relaxed alternation with a grid-search selection step.

    The fit step reuses the dense unconstrained normal equations, so the
    whole loop is independent of the production solvers. Returns the best
    (objective, track, weights) over all seeds by the plain objective.
    """
    best = None

    def fit(weights):
        w = np.zeros(p.frame_count)
        y = np.zeros((p.frame_count, p.dim))
        for f in range(p.frame_count):
            cand = p.candidates[f]
            if cand.shape[0] == 0:
                continue
            cw = p.confidences[f] * weights[f]
            w[f] = float(cw.sum())
            if w[f] > 0:
                y[f] = (cw[:, None] * cand).sum(axis=0) / w[f]
        return dense_smoothing_unconstrained(SmoothingProblem(y, w, lam))

    for seed in seeds:
        weights = tuple(np.asarray(a, float) for a in seed)
        track = fit(weights)
        plain = relaxed_objective(p, track, weights, lam)
        smoothed = plain + temperature * sum(
            float((a * np.log(a)).sum()) for a in weights if a.size)
        if best is None or plain < best[0]:
            best = (plain, track, weights)
        for _ in range(max_iter):
            new_weights = []
            for f in range(p.frame_count):
                cand = p.candidates[f]
                if cand.shape[0] == 0:
                    new_weights.append(np.empty(0))
                    continue
                scores = p.confidences[f] * ((track[f] - cand) ** 2).sum(axis=1)
                new_weights.append(grid_selection_step(scores, temperature, eps))
            weights = tuple(new_weights)
            track = fit(weights)
            plain = relaxed_objective(p, track, weights, lam)
            new_smoothed = plain + temperature * sum(
                float((a * np.log(a)).sum()) for a in weights if a.size)
            if plain < best[0]:
                best = (plain, track, weights)
            if abs(smoothed - new_smoothed) <= rel_tol * (1.0 + abs(smoothed)):
                break
            smoothed = new_smoothed
    return best


# ---------------------------------------------------------------------------
# Camera oracles

def homogeneous_projection(point, cam):
    """Project through an explicit 3x4 matrix pipeline.

    Builds the world-to-camera rotation row by row, composes it with the
    normalized intrinsics matrix, and divides homogeneous coordinates. An
    independent path to the same numbers as the production projection.
    """
    fwd, right, up = cam.basis()
    rot = np.stack([right, -up, fwd])
    extrinsic = np.hstack([rot, (-rot @ cam.position)[:, None]])
    intrinsics = np.array([
        [cam.focal_mm / cam.sensor_w_mm, 0.0, 0.5],
        [0.0, cam.focal_mm / cam.sensor_h_mm, 0.5],
        [0.0, 0.0, 1.0],
    ])
    mat = intrinsics @ extrinsic
    hom = mat @ np.append(np.asarray(point, dtype=float), 1.0)
    return hom[:2] / hom[2], hom[2]


def trace_blur_diameter_mm(cam, depth_m: float) -> float:
    """Blur-circle diameter from the lens equation and similar triangles.

    Images the focus plane and the probe depth through 1/v = 1/f - 1/D,
    then measures the cone width at the sensor plane. Independent of the
    closed-form field-limit formulas.
    """
    f = cam.focal_mm / 1000.0
    aperture = f / cam.f_number
    v_sensor = 1.0 / (1.0 / f - 1.0 / cam.focus_m)
    v_probe = 1.0 / (1.0 / f - 1.0 / depth_m)
    blur_m = aperture * abs(v_sensor - v_probe) / v_probe
    return blur_m * 1000.0


def finite_difference_gradient(fun, x, h=1e-6):
    """Central-difference gradient of a scalar function of a vector."""
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        hi = h * max(1.0, abs(x[i]))
        e = np.zeros_like(x)
        e[i] = hi
        grad[i] = (fun(x + e) - fun(x - e)) / (2.0 * hi)
    return grad


def point_segment_distance(point, a, b) -> float:
    """Euclidean distance from a point to the segment [a, b]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    p = np.asarray(point, dtype=float)
    axis = b - a
    denom = float(axis @ axis)
    if denom == 0.0:
        return float(np.linalg.norm(p - a))
    s = min(max(float((p - a) @ axis) / denom, 0.0), 1.0)
    return float(np.linalg.norm(p - (a + s * axis)))


def capsule_entry_by_scan(origin, direction, a, b, radius,
                          t_max: float = 100.0, steps: int = 4000) -> float:
    """First ray parameter at which the ray surface-crosses the capsule.

    Scans the segment-distance profile along the ray for the first
    outside-to-inside sign change, then bisects it down to ~1e-12. Only
    distance evaluations are used, so this is independent of any
    quadratic-root intersection code. Returns +inf when no crossing lies
    in (0, t_max]; the origin is assumed outside the capsule.
    """
    origin = np.asarray(origin, dtype=float)
    direction = np.asarray(direction, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ts = np.linspace(0.0, t_max, steps + 1)
    points = origin[None, :] + ts[:, None] * direction[None, :]
    axis = b - a
    denom = float(axis @ axis)
    if denom == 0.0:
        gaps = np.linalg.norm(points - a, axis=1) - radius
    else:
        s = np.clip(((points - a) @ axis) / denom, 0.0, 1.0)
        gaps = np.linalg.norm(points - a - s[:, None] * axis, axis=1) - radius
    crossings = np.flatnonzero((gaps[:-1] > 0.0) & (gaps[1:] <= 0.0))
    if crossings.size == 0:
        return math.inf
    lo, hi = float(ts[crossings[0]]), float(ts[crossings[0] + 1])
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if point_segment_distance(origin + mid * direction, a, b) > radius:
            lo = mid
        else:
            hi = mid
    return hi
