"""Deterministic optimizers shared across the toolkit.

Four problem shapes, each behind a small dataclass or a direct function:

* temporal smoothing: banded symmetric positive definite least squares with
  box bounds, solved exactly by a primal-dual active-set iteration;
* box-constrained quadratic programs, solved by accelerated projected
  gradient with an active-set polish;
* per-frame candidate assignment with pairwise transition costs, solved
  exactly by dynamic programming;
* the continuous relaxation of the assignment problem, solved by exact
  alternating minimization with an entropy-smoothed selection step.

All solvers are pure and deterministic: identical inputs give identical
outputs, with no randomized restarts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solveh_banded

from .errors import (
    ConfigError,
    DegenerateProblemError,
    NonConvexError,
    NoSubjectError,
    SolverError,
)


def _as_bound(value, dim: int, default: float) -> np.ndarray:
    if value is None:
        return np.full(dim, default)
    arr = np.broadcast_to(np.asarray(value, float), (dim,)).copy()
    if np.isnan(arr).any():
        raise ConfigError("bounds: NaN not allowed")
    return arr


# ---------------------------------------------------------------------------
# Temporal smoothing


@dataclass(eq=False)
class SmoothingProblem:
    """Box-bounded tracking least squares over a frame sequence.

    Minimizes, over per-frame vectors x_1..x_F of dimension D,

        sum_{f=2..F} lam * ||x_f - x_{f-1}||^2  +  sum_f w_f * ||x_f - y_f||^2

    subject to lower <= x_f <= upper per coordinate. The continuity sum
    starts at the second frame, leaving the initial condition free. Bounds
    are shared by all frames; ``None`` means unbounded.

    Attributes:
        y: observations, shape (F, D).
        weights: per-frame nonnegative observation weights, shape (F,).
        lam: continuity weight, >= 0.
        lower: per-coordinate lower bounds, shape (D,) after broadcast.
        upper: per-coordinate upper bounds, shape (D,) after broadcast.
    """

    y: np.ndarray
    weights: np.ndarray
    lam: float = 1.0
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.y = np.array(self.y, float, ndmin=2)
        if self.y.ndim != 2 or self.y.shape[0] < 1 or self.y.shape[1] < 1:
            raise ConfigError(f"y: expected (frames, dim) with both >= 1, got {self.y.shape}")
        if not np.isfinite(self.y).all():
            raise ConfigError("y: non-finite observation")
        frames, dim = self.y.shape
        self.weights = np.asarray(self.weights, float)
        if self.weights.shape != (frames,):
            raise ConfigError(
                f"weights: expected shape ({frames},), got {self.weights.shape}")
        if not np.isfinite(self.weights).all() or (self.weights < 0).any():
            raise ConfigError("weights: must be finite and >= 0")
        self.lam = float(self.lam)
        if not (math.isfinite(self.lam) and self.lam >= 0):
            raise ConfigError(f"lam: must be finite and >= 0, got {self.lam}")
        self.lower = _as_bound(self.lower, dim, -np.inf)
        self.upper = _as_bound(self.upper, dim, np.inf)
        if (self.lower > self.upper).any():
            raise ConfigError("bounds: lower > upper")

    @property
    def frame_count(self) -> int:
        return self.y.shape[0]

    @property
    def dim(self) -> int:
        return self.y.shape[1]


def smoothing_objective(p: SmoothingProblem, x: np.ndarray) -> float:
    x = np.asarray(x, float)
    cont = float(((x[1:] - x[:-1]) ** 2).sum()) if x.shape[0] > 1 else 0.0
    fit = float((p.weights[:, None] * (x - p.y) ** 2).sum())
    return p.lam * cont + fit


def _tridiag_mul(main: np.ndarray, off: np.ndarray, x: np.ndarray) -> np.ndarray:
    out = main * x
    if off.size:
        out[1:] += off * x[:-1]
        out[:-1] += off * x[1:]
    return out


def _solve_given_active(main, off, b, active_lo, active_hi, lo, hi):
    x = np.where(active_lo, lo, np.where(active_hi, hi, 0.0))
    free = ~(active_lo | active_hi)
    idx = np.flatnonzero(free)
    if idx.size == 0:
        return x
    rhs = b[idx].copy()
    # Fixed neighbors move to the right-hand side; coupling coefficient is off.
    left = idx - 1
    has_left = left >= 0
    fixed_left = has_left & ~free[np.clip(left, 0, None)]
    rhs[fixed_left] -= off[left[fixed_left]] * x[left[fixed_left]]
    right = idx + 1
    has_right = right < main.size
    fixed_right = has_right & ~free[np.clip(right, None, main.size - 1)]
    rhs[fixed_right] -= off[np.clip(right, None, main.size - 1)[fixed_right] - 1] \
        * x[right[fixed_right]]
    # Restricting a tridiagonal matrix to a sorted index subset stays
    # tridiagonal: entries survive only between consecutive original indices.
    if idx.size == 1:
        x[idx] = rhs / main[idx]
        return x
    sub_off = np.zeros(idx.size - 1)
    adjacent = idx[1:] == idx[:-1] + 1
    sub_off[adjacent] = off[idx[:-1][adjacent]]
    ab = np.zeros((2, idx.size))
    ab[0, 1:] = sub_off
    ab[1] = main[idx]
    x[idx] = solveh_banded(ab, rhs, lower=False)
    return x


def _pdas_coordinate(main, off, b, lo, hi):
    """Primal-dual active set for tridiagonal SPD with box bounds.

    The system matrix has nonpositive off-diagonals (an M-matrix), for which
    this iteration converges finitely.
    """
    n = main.size
    scale = max(1.0, float(np.abs(b).max()), float(main.max()))
    tol = 1e-12 * scale
    active_lo = np.zeros(n, bool)
    active_hi = np.zeros(n, bool)
    for _ in range(3 * n + 20):
        x = _solve_given_active(main, off, b, active_lo, active_hi, lo, hi)
        r = b - _tridiag_mul(main, off, x)
        free = ~(active_lo | active_hi)
        viol_lo = free & (x < lo - tol)
        viol_hi = free & (x > hi + tol)
        rel_lo = active_lo & (r > tol)
        rel_hi = active_hi & (r < -tol)
        if not (viol_lo.any() or viol_hi.any() or rel_lo.any() or rel_hi.any()):
            return np.clip(x, lo, hi)
        active_lo = (active_lo & ~rel_lo) | viol_lo
        active_hi = (active_hi & ~rel_hi) | viol_hi
    raise SolverError("smoothing active-set iteration did not settle")


def solve_smoothing(p: SmoothingProblem) -> np.ndarray:
    """Exact box-bounded minimizer of a SmoothingProblem, shape (F, D).

    Coordinates decouple, so each is a tridiagonal SPD system solved by a
    banded Cholesky factorization inside a primal-dual active-set loop. The
    returned point satisfies the stationarity conditions to machine
    precision on free coordinates.

    Degenerate shapes get closed forms: with ``lam == 0`` the frames
    decouple and the answer is ``clip(y)`` (zero-weight frames included,
    where any feasible value is optimal and the clipped observation is the
    deterministic choice); with all weights zero and ``lam > 0`` any
    feasible constant is optimal and ``clip(0)`` is returned.

    Raises:
        DegenerateProblemError: all weights zero and ``lam == 0``.
    """
    frames, dim = p.y.shape
    any_weight = bool(p.weights.any())
    if p.lam == 0.0 and not any_weight:
        raise DegenerateProblemError("all observation weights zero and lam == 0")
    if p.lam == 0.0:
        return np.clip(p.y, p.lower, p.upper)
    if not any_weight:
        row = np.clip(np.zeros(dim), p.lower, p.upper)
        return np.tile(row, (frames, 1))

    main_base = np.full(frames, 2.0 * p.lam)
    if frames >= 1:
        main_base[0] = p.lam if frames > 1 else 0.0
        main_base[-1] = p.lam if frames > 1 else 0.0
    main = main_base + p.weights
    off = np.full(frames - 1, -p.lam)
    out = np.empty((frames, dim))
    for d in range(dim):
        b = p.weights * p.y[:, d]
        out[:, d] = _pdas_coordinate(main, off, b, p.lower[d], p.upper[d])
    return out


# ---------------------------------------------------------------------------
# Box-constrained quadratic programs


def box_qp_objective(Q: np.ndarray, g: np.ndarray, x: np.ndarray) -> float:
    """Objective value x'Qx + g'x (note: no 1/2 factor)."""
    x = np.asarray(x, float)
    return float(x @ np.asarray(Q, float) @ x + np.asarray(g, float) @ x)


def _linear_box_minimum(g, lo, hi):
    x = np.where(g > 0, lo, np.where(g < 0, hi, np.clip(0.0, lo, hi)))
    if not np.isfinite(x).all():
        raise SolverError("linear objective unbounded below on the box")
    return x


def solve_box_qp(Q, g, lower=None, upper=None, tol: float = 1e-10,
                 max_iter: int = 5000) -> np.ndarray:
    """Minimize x'Qx + g'x subject to lower <= x <= upper.

    Q is symmetrized and must be positive semidefinite. The main loop is
    accelerated projected gradient with a monotone restart; an active-set
    polish then solves the free block exactly so the result matches dense
    oracles to solver precision.

    Raises:
        NonConvexError: negative curvature detected in Q.
        SolverError: objective unbounded below on the feasible box.
    """
    Q = np.asarray(Q, float)
    g = np.asarray(g, float).ravel()
    n = g.size
    if Q.shape != (n, n):
        raise ConfigError(f"Q: expected shape ({n}, {n}), got {Q.shape}")
    if not (np.isfinite(Q).all() and np.isfinite(g).all()):
        raise ConfigError("Q, g: must be finite")
    lo = _as_bound(lower, n, -np.inf)
    hi = _as_bound(upper, n, np.inf)
    if (lo > hi).any():
        raise ConfigError("bounds: lower > upper")
    Qs = 0.5 * (Q + Q.T)
    evals = np.linalg.eigvalsh(Qs)
    scale = max(1.0, float(np.abs(evals).max()))
    if evals[0] < -1e-9 * scale:
        raise NonConvexError(f"negative curvature {evals[0]:.3e} detected")
    lip = 2.0 * max(float(evals[-1]), 0.0)
    if lip <= 1e-13 * scale:
        return _linear_box_minimum(g, lo, hi)

    def grad(v):
        return 2.0 * (Qs @ v) + g

    def value(v):
        return float(v @ Qs @ v + g @ v)

    x = np.clip(np.zeros(n), lo, hi)
    fx = value(x)
    yk = x.copy()
    t = 1.0
    step = 1.0 / lip
    diverge_limit = 1e12 * (1.0 + float(np.abs(g).max()))
    for _ in range(max_iter):
        cand = np.clip(yk - step * grad(yk), lo, hi)
        fc = value(cand)
        if fc > fx:
            # Momentum overshot: restart from the plain projected step.
            cand = np.clip(x - step * grad(x), lo, hi)
            fc = value(cand)
            t = 1.0
            if fc > fx:
                cand, fc = x, fx
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        yk = cand + ((t - 1.0) / t_next) * (cand - x)
        moved = float(np.abs(cand - x).max())
        x, fx, t = cand, fc, t_next
        if float(np.abs(x).max()) > diverge_limit:
            raise SolverError("objective appears unbounded below on the box")
        pg = float(np.abs(x - np.clip(x - step * grad(x), lo, hi)).max())
        if pg <= tol * (1.0 + float(np.abs(x).max())) and moved <= tol:
            break

    # Polish: guess the active set from the iterate, solve the free block.
    span = np.where(np.isfinite(hi - lo), hi - lo, 1.0)
    snap = 1e-7 * (1.0 + span)
    best_x, best_f = x, fx
    for _ in range(50):
        gr = grad(x)
        at_lo = x <= lo + snap
        at_hi = x >= hi - snap
        act_lo = at_lo & (gr >= 0)
        act_hi = at_hi & (gr <= 0)
        free = ~(act_lo | act_hi)
        xt = np.where(act_lo, lo, np.where(act_hi, hi, x))
        if free.any():
            rhs = -(g[free] + 2.0 * Qs[np.ix_(free, ~free)] @ xt[~free])
            sol, *_ = np.linalg.lstsq(2.0 * Qs[np.ix_(free, free)], rhs, rcond=None)
            xt[free] = sol
        xt = np.clip(xt, lo, hi)
        ft = value(xt)
        if ft < best_f:
            best_x, best_f = xt, ft
        if np.allclose(xt, x, rtol=0.0, atol=1e-12 * (1.0 + scale)):
            break
        if ft > fx + 1e-12 * (1.0 + abs(fx)):
            break
        x, fx = xt, ft
    return best_x


# ---------------------------------------------------------------------------
# Candidate assignment


@dataclass(eq=False)
class AssignmentProblem:
    """Pick one candidate per frame minimizing node plus transition cost.

    Node cost is ``confidence_weight * (1 - confidence)``; transition cost is
    the squared Euclidean distance between the candidate vectors chosen in
    consecutive non-empty frames. Frames may be empty; transitions bridge
    them, linking the nearest non-empty frames on either side.

    Attributes:
        candidates: per-frame arrays of shape (M_f, D); M_f may be 0.
        confidences: per-frame arrays of shape (M_f,), values in [0, 1].
        confidence_weight: nonnegative scale of the node cost.
    """

    candidates: tuple[np.ndarray, ...]
    confidences: tuple[np.ndarray, ...]
    confidence_weight: float

    def __post_init__(self) -> None:
        if len(self.candidates) != len(self.confidences):
            raise ConfigError("candidates and confidences must have equal length")
        if len(self.candidates) < 1:
            raise ConfigError("need at least one frame")
        self.confidence_weight = float(self.confidence_weight)
        if not (math.isfinite(self.confidence_weight) and self.confidence_weight >= 0):
            raise ConfigError(
                f"confidence_weight: must be finite and >= 0, got {self.confidence_weight}")
        dim = None
        cands, confs = [], []
        for f, (cand, conf) in enumerate(zip(self.candidates, self.confidences)):
            cand = np.asarray(cand, float)
            conf = np.asarray(conf, float).ravel()
            if cand.size == 0:
                cand = cand.reshape(0, dim if dim is not None else 0)
            if cand.ndim != 2:
                raise ConfigError(f"candidates[{f}]: expected 2-d array")
            if cand.shape[0] != conf.shape[0]:
                raise ConfigError(f"frame {f}: {cand.shape[0]} candidates but "
                                  f"{conf.shape[0]} confidences")
            if cand.shape[0] > 0:
                if dim is None:
                    dim = cand.shape[1]
                elif cand.shape[1] != dim:
                    raise ConfigError(f"candidates[{f}]: dimension {cand.shape[1]} != {dim}")
                if not np.isfinite(cand).all():
                    raise ConfigError(f"candidates[{f}]: non-finite value")
                if ((conf < 0) | (conf > 1)).any() or not np.isfinite(conf).all():
                    raise ConfigError(f"confidences[{f}]: values outside [0, 1]")
            cands.append(cand)
            confs.append(conf)
        if dim is None:
            dim = 0
        self.candidates = tuple(
            c.reshape(-1, dim) if dim else c.reshape(0, 0) for c in cands)
        self.confidences = tuple(confs)

    @property
    def frame_count(self) -> int:
        return len(self.candidates)

    @property
    def dim(self) -> int:
        return self.candidates[0].shape[1]

    def nonempty_frames(self) -> list[int]:
        return [f for f, c in enumerate(self.candidates) if c.shape[0] > 0]


@dataclass(frozen=True)
class AssignmentResult:
    choices: tuple  # per frame: candidate index, or None for empty frames
    objective: float


def assignment_objective(p: AssignmentProblem, choices) -> float:
    """Evaluate the discrete objective for any per-frame choice vector."""
    total = 0.0
    prev = None
    for f, m in enumerate(choices):
        if m is None:
            continue
        total += p.confidence_weight * (1.0 - float(p.confidences[f][m]))
        pt = p.candidates[f][m]
        if prev is not None:
            total += float(((pt - prev) ** 2).sum())
        prev = pt
    return total


def solve_assignment(p: AssignmentProblem) -> AssignmentResult:
    """Exact minimizer by forward dynamic programming, O(F * M^2).

    Ties break toward the lowest candidate index. Empty frames receive
    ``None`` and the transition spans the gap.

    Raises:
        NoSubjectError: every frame is empty.
    """
    active = p.nonempty_frames()
    if not active:
        raise NoSubjectError("every frame is empty")
    first = active[0]
    cost = p.confidence_weight * (1.0 - p.confidences[first])
    prev_pts = p.candidates[first]
    back: list[np.ndarray] = []
    for f in active[1:]:
        pts = p.candidates[f]
        d2 = ((prev_pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
        total = cost[:, None] + d2
        arg = np.argmin(total, axis=0)
        cost = p.confidence_weight * (1.0 - p.confidences[f]) \
            + total[arg, np.arange(pts.shape[0])]
        back.append(arg)
        prev_pts = pts
    choice = int(np.argmin(cost))
    objective = float(cost[choice])
    chosen = [choice]
    for arg in reversed(back):
        chosen.append(int(arg[chosen[-1]]))
    chosen.reverse()
    choices: list = [None] * p.frame_count
    for f, m in zip(active, chosen):
        choices[f] = m
    return AssignmentResult(tuple(choices), objective)


# ---------------------------------------------------------------------------
# Relaxed selection


@dataclass(eq=False)
class RelaxedSelection:
    """Result of the continuous selection relaxation.

    Attributes:
        track: per-frame smoothed vectors, shape (F, D).
        selection_weights: per-frame arrays on the clipped simplex; empty
            array for empty frames, exactly [1.0] for single-candidate frames.
        objective: plain relaxed objective of (track, selection_weights).
        temperature: entropy temperature used by the selection step.
        converged: False when an alternation hit the iteration cap.
        iterations: total alternation steps across seeds.
    """

    track: np.ndarray
    selection_weights: tuple[np.ndarray, ...]
    objective: float
    temperature: float
    converged: bool
    iterations: int


def relaxed_objective(p: AssignmentProblem, track: np.ndarray,
                      selection_weights, lam: float = 1.0) -> float:
    """Continuity plus confidence-weighted soft attachment.

    sum_{f>=2} lam*||x_f - x_{f-1}||^2
      + sum_f sum_m conf_{f,m} * a_{f,m} * ||x_f - r_{f,m}||^2
    """
    track = np.asarray(track, float)
    cont = float(((track[1:] - track[:-1]) ** 2).sum()) if track.shape[0] > 1 else 0.0
    attach = 0.0
    for f in range(p.frame_count):
        cand = p.candidates[f]
        if cand.shape[0] == 0:
            continue
        w = p.confidences[f] * np.asarray(selection_weights[f], float)
        attach += float((w * ((track[f] - cand) ** 2).sum(axis=1)).sum())
    return lam * cont + attach


def selection_temperature(p: AssignmentProblem) -> float:
    """0.1 times the squared median within-frame candidate spacing."""
    dists = []
    for cand in p.candidates:
        m = cand.shape[0]
        for i in range(m):
            for j in range(i + 1, m):
                dists.append(float(np.linalg.norm(cand[i] - cand[j])))
    if not dists:
        return 1e-12
    return max(0.1 * float(np.median(dists)) ** 2, 1e-12)


def _entropy(selection_weights) -> float:
    total = 0.0
    for a in selection_weights:
        if a.size:
            total += float((a * np.log(a)).sum())
    return total


def _selection_step(p: AssignmentProblem, track: np.ndarray, temperature: float,
                    eps: float) -> tuple[np.ndarray, ...]:
    """Exact minimizer of the entropy-smoothed attachment per frame.

    Per frame the problem is min_a <s, a> + T*sum a*ln(a) on the simplex
    intersected with [eps, 1-eps]; the solution is a clipped scaled
    exponential, with the scale found by bisection on the monotone
    sum-to-one condition.
    """
    out = []
    for f in range(p.frame_count):
        cand = p.candidates[f]
        m = cand.shape[0]
        if m == 0:
            out.append(np.empty(0))
            continue
        if m == 1:
            out.append(np.array([1.0]))
            continue
        s = p.confidences[f] * ((track[f] - cand) ** 2).sum(axis=1)
        u = np.exp(-(s - s.min()) / temperature)
        u = np.maximum(u, 1e-300)
        t_lo = eps / float(u.max())
        t_hi = (1.0 - eps) / float(u.min())
        for _ in range(200):
            t_mid = math.sqrt(t_lo * t_hi)
            if np.clip(t_mid * u, eps, 1.0 - eps).sum() < 1.0:
                t_lo = t_mid
            else:
                t_hi = t_mid
        out.append(np.clip(t_hi * u, eps, 1.0 - eps))
    return tuple(out)


def _fit_step(p: AssignmentProblem, selection_weights, lam, lower, upper) -> np.ndarray:
    """Exact continuity-coupled minimizer over the track at fixed weights.

    The soft attachment collapses per frame to weight sum_m conf*a toward
    the weighted barycenter, which is a SmoothingProblem.
    """
    frames, dim = p.frame_count, p.dim
    w = np.zeros(frames)
    y = np.zeros((frames, dim))
    for f in range(frames):
        cand = p.candidates[f]
        if cand.shape[0] == 0:
            continue
        cw = p.confidences[f] * np.asarray(selection_weights[f], float)
        w[f] = float(cw.sum())
        if w[f] > 0:
            y[f] = (cw[:, None] * cand).sum(axis=0) / w[f]
    return solve_smoothing(SmoothingProblem(y, w, lam, lower, upper))


def _one_hot_weights(p: AssignmentProblem, choices, eps: float):
    out = []
    for f in range(p.frame_count):
        m = p.candidates[f].shape[0]
        if m == 0:
            out.append(np.empty(0))
        elif m == 1:
            out.append(np.array([1.0]))
        else:
            a = np.full(m, eps)
            a[choices[f]] = 1.0 - (m - 1) * eps
            out.append(a)
    return tuple(out)


def evaluate_assignment_relaxed(p: AssignmentProblem, choices, lam: float = 1.0,
                                lower=None, upper=None, eps: float = 1e-3):
    """Embed a discrete assignment into the relaxed problem.

    Selection weights are the clipped one-hot of the choice; the track is
    re-optimized for those weights. Returns (objective, track, weights).
    """
    weights = _one_hot_weights(p, choices, eps)
    track = _fit_step(p, weights, lam, lower, upper)
    return relaxed_objective(p, track, weights, lam), track, weights


def solve_relaxed_selection(p: AssignmentProblem, lam: float = 1.0,
                            lower=None, upper=None, eps: float = 1e-3,
                            rel_tol: float = 1e-8, max_iter: int = 200,
                            temperature: float | None = None) -> RelaxedSelection:
    """Alternating minimization of the relaxed selection problem.

    Both steps are exact coordinate minimizers of the entropy-smoothed
    objective, so that objective is non-increasing across iterations
    (asserted). Two seeds run: uniform weights, and the clipped one-hot of
    the exact discrete optimum. The returned iterate is the best observed
    under the plain objective, which makes it never worse than the discrete
    optimum embedded in the relaxed problem.

    Raises:
        NoSubjectError: every frame is empty.
    """
    if max_iter < 1:
        raise ConfigError("max_iter must be >= 1")
    if not (0.0 < eps < 0.5):
        raise ConfigError("eps must lie in (0, 0.5)")
    if temperature is None:
        temperature = selection_temperature(p)
    elif not (np.isfinite(temperature) and temperature > 0):
        raise ConfigError(f"temperature must be > 0, got {temperature}")
    dp = solve_assignment(p)
    seeds = []
    uniform = tuple(
        np.full(c.shape[0], 1.0 / c.shape[0]) if c.shape[0] else np.empty(0)
        for c in p.candidates)
    seeds.append(uniform)
    seeds.append(_one_hot_weights(p, dp.choices, eps))

    best = None
    converged = True
    total_iters = 0
    for seed in seeds:
        weights = seed
        track = _fit_step(p, weights, lam, lower, upper)
        plain = relaxed_objective(p, track, weights, lam)
        smoothed = plain + temperature * _entropy(weights)
        if best is None or plain < best[0]:
            best = (plain, track, weights)
        seed_converged = False
        for _ in range(max_iter):
            total_iters += 1
            weights = _selection_step(p, track, temperature, eps)
            track = _fit_step(p, weights, lam, lower, upper)
            plain = relaxed_objective(p, track, weights, lam)
            new_smoothed = plain + temperature * _entropy(weights)
            assert new_smoothed <= smoothed + 1e-9 * (1.0 + abs(smoothed)), \
                "alternation increased the smoothed objective"
            if plain < best[0]:
                best = (plain, track, weights)
            if abs(smoothed - new_smoothed) <= rel_tol * (1.0 + abs(smoothed)):
                smoothed = new_smoothed
                seed_converged = True
                break
            smoothed = new_smoothed
        converged = converged and seed_converged
    return RelaxedSelection(best[1], best[2], best[0], temperature,
                            converged, total_iters)
