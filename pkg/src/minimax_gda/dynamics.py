"""Algorithm steppers (GDA, SGDA, EG), transition matrices and trajectory
execution.

With an exact oracle on a quadratic instance the iteration is a linear
time-invariant system: one GDA step maps ``z - z*`` through ``I + eta_x*M``
and one EG step through ``I + eta_x*M + eta_x^2*M^2`` where

    M = [[-C, -B], [r*B', -r*A]],   r = eta_y / eta_x.

``run`` exploits this exactness: deterministic quadratic runs evolve through
the precomputed transition matrix, while stochastic and non-quadratic runs
step through the gradient oracle.  A run owns its RNG (seeded from the
config) and is single-threaded; returned trajectories are immutable, so a
harness may execute many runs concurrently.
"""

from __future__ import annotations

import csv
import enum
import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import problems as prob
from .errors import InsufficientDataError, InvalidInputError

TRAJECTORY_STORAGE_CAP = 10 ** 6  # record every iteration up to this budget


class Algorithm(str, enum.Enum):
    GDA = "gda"
    SGDA = "sgda"
    EG = "eg"


class Scheme(str, enum.Enum):
    """The two proved stepsize pairs: quarter uses eta_x=1/(4rL),
    eta_y=1/(4L) (rate constant 64); half uses eta_x=1/(2rL), eta_y=1/(2L)
    (rate constant 16)."""

    QUARTER = "quarter"
    HALF = "half"

    @property
    def rate_constant(self):
        return 64 if self is Scheme.QUARTER else 16


class StatusKind(str, enum.Enum):
    CONVERGED = "converged"
    DIVERGED = "diverged"
    BUDGET_EXHAUSTED = "budget_exhausted"


@dataclass(frozen=True)
class Status:
    kind: StatusKind
    step: Optional[int] = None

    def __str__(self):
        if self.step is None:
            return self.kind.value
        return f"{self.kind.value}({self.step})"


@dataclass(frozen=True)
class SolverConfig:
    algorithm: Algorithm
    eta_x: float
    eta_y: float
    max_iters: int
    target_eps: float
    divergence_factor: float = 1e8
    noise: Optional[prob.NoiseModel] = None
    seed: int = 0
    record_primal_gaps: bool = True

    def __post_init__(self):
        if self.eta_x <= 0 or self.eta_y <= 0:
            raise InvalidInputError("stepsizes must be positive")
        if self.max_iters < 0:
            raise InvalidInputError("max_iters must be >= 0")
        if self.target_eps <= 0:
            raise InvalidInputError("target_eps must be positive")
        if self.divergence_factor <= 1:
            raise InvalidInputError("divergence_factor must exceed 1")
        if self.algorithm is Algorithm.SGDA and self.noise is None:
            raise InvalidInputError("SGDA requires a noise model")
        if self.algorithm is Algorithm.GDA and self.noise is not None:
            raise InvalidInputError("GDA is the exact method; use SGDA for a noisy oracle")

    @property
    def ratio(self):
        return self.eta_y / self.eta_x


@dataclass(frozen=True)
class Trajectory:
    """Recorded convergence measure per iteration plus the terminal status.

    ``distances[i]`` is the measure at iteration ``iters[i]``: the distance
    ``|z^k - z*|`` for quadratic runs, the gradient norm for non-quadratic
    runs (``metric`` says which).  ``primal_gaps`` is populated for
    primal-convex quadratic instances when requested.  Non-finite iterates
    are recorded as ``inf`` and classify the run as diverged.
    """

    iters: np.ndarray
    distances: np.ndarray
    primal_gaps: Optional[np.ndarray]
    status: Status
    metric: str
    wall_time: float
    config: SolverConfig
    final_z: np.ndarray

    def final_distance(self):
        return float(self.distances[-1])


def default_stepsizes(L, r, scheme=Scheme.QUARTER):
    """The proved stepsize pair for smoothness ``L`` and ratio ``r``."""
    if L <= 0 or r <= 0:
        raise InvalidInputError("L and r must be positive")
    scheme = Scheme(scheme)
    eta_y = 1.0 / (4.0 * L) if scheme is Scheme.QUARTER else 1.0 / (2.0 * L)
    return eta_y / r, eta_y


def build_M(problem, r):
    """Block dynamics matrix [[-C, -B], [r*B', -r*A]] of shape (n+m, n+m)."""
    if r <= 0:
        raise InvalidInputError("r must be positive")
    return np.block([[-problem.C, -problem.B], [r * problem.B.T, -r * problem.A]])


def build_M_delta(problem, r, delta):
    """Dynamics matrix of the delta-regularized instance: the top-left block
    is ``-C - delta*I``.  Equals ``build_M`` at delta=0."""
    if delta < 0:
        raise InvalidInputError("delta must be >= 0")
    M = build_M(problem, r)
    M[: problem.n, : problem.n] -= delta * np.eye(problem.n)
    return M


def make_oracle(problem, noise=None):
    """Gradient oracle ``oracle(z, rng) -> (gx, gy)`` for a quadratic or
    non-quadratic instance, exact or mini-batch noisy."""
    nonquad = isinstance(problem, prob.NonQuadraticProblem)
    if noise is None or noise.sigma == 0.0:
        if nonquad:
            return lambda z, rng=None: prob.nonquad_grad(problem, z)
        return lambda z, rng=None: prob.grad(problem, z)
    if nonquad:
        base = problem

        def oracle(z, rng):
            gx, gy = prob.nonquad_grad(base, z)
            n, m = base.base.n, base.base.m
            scale = noise.sigma / math.sqrt(noise.batch)
            gx = gx + rng.standard_normal(n) * (scale / math.sqrt(n))
            gy = gy + rng.standard_normal(m) * (scale / math.sqrt(m))
            return gx, gy

        return oracle
    return lambda z, rng: prob.stochastic_grad(problem, z, noise, rng)


def gda_step(oracle, z, eta_x, eta_y, rng=None):
    """One simultaneous descent/ascent step.  For an exact quadratic oracle
    this equals ``z* + (I + eta_x*M) (z - z*)`` to machine precision."""
    gx, gy = oracle(z, rng)
    nx = gx.shape[0]
    return np.concatenate([z[:nx] - eta_x * gx, z[nx:] + eta_y * gy])


def eg_step(oracle, z, eta_x, eta_y, rng=None):
    """One extra-gradient step: evaluate at the half-point, update from z.
    For an exact quadratic oracle this equals
    ``z* + (I + eta_x*M + eta_x^2*M^2) (z - z*)``."""
    gx, gy = oracle(z, rng)
    nx = gx.shape[0]
    z_half = np.concatenate([z[:nx] - eta_x * gx, z[nx:] + eta_y * gy])
    gx2, gy2 = oracle(z_half, rng)
    return np.concatenate([z[:nx] - eta_x * gx2, z[nx:] + eta_y * gy2])


def default_initial_point(problem, seed):
    # unit-norm offset from the optimum, drawn before any noise so SGDA and
    # GDA see the same start for a given seed
    quad = problem.base if isinstance(problem, prob.NonQuadraticProblem) else problem
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(quad.dim)
    v /= np.linalg.norm(v)
    return quad.z_star + v


def _transition_matrix(problem, config):
    M = build_M(problem, config.ratio)
    T = np.eye(problem.dim) + config.eta_x * M
    if config.algorithm is Algorithm.EG:
        T = T + (config.eta_x * M) @ (config.eta_x * M)
    return T


class _Recorder:
    __slots__ = ("stride", "iters", "distances", "gaps")

    def __init__(self, max_iters, want_gaps):
        self.stride = max(1, math.ceil(max_iters / TRAJECTORY_STORAGE_CAP))
        self.iters = []
        self.distances = []
        self.gaps = [] if want_gaps else None


def run(problem, config, z0=None):
    """Execute the configured dynamics and record the convergence measure.

    Stops when the measure drops to ``target_eps`` (converged), grows to
    ``divergence_factor`` times its initial value or leaves the floats
    (diverged), or the iteration budget runs out.  Distances are recorded
    every iteration, or every ``ceil(T/1e6)`` iterations for very long
    budgets (the terminal point is always recorded).  Deterministic given
    ``(problem, config, z0)``; when ``z0`` is omitted it defaults to the
    optimum plus a unit direction drawn from ``config.seed``.
    """
    nonquad = isinstance(problem, prob.NonQuadraticProblem)
    quad = problem.base if nonquad else problem
    rng = np.random.default_rng(config.seed)
    if z0 is None:
        z0 = default_initial_point(problem, config.seed)
    z0 = np.asarray(z0, dtype=float)
    if z0.shape != (quad.dim,):
        raise InvalidInputError(f"z0 must have length {quad.dim}")

    sigma0 = config.noise is None or config.noise.sigma == 0.0
    exact_lti = (not nonquad) and sigma0

    want_gaps = False
    constants = None
    if not nonquad and config.record_primal_gaps:
        constants = prob.derive_constants(quad)
        want_gaps = constants.schur_min >= -prob.VALIDATION_RTOL * quad.L

    rec = _Recorder(config.max_iters, want_gaps)
    start = time.perf_counter()

    # overflow to inf is an expected outcome here: it classifies the run as
    # diverged rather than warranting a warning
    with np.errstate(over="ignore", invalid="ignore"):
        if exact_lti:
            status, final_z = _run_lti(quad, config, z0, rec,
                                       constants if want_gaps else None)
        else:
            status, final_z = _run_oracle(problem, quad, config, z0, rng, rec,
                                          constants if want_gaps else None, nonquad)

    wall = time.perf_counter() - start
    return Trajectory(
        iters=np.asarray(rec.iters, dtype=np.int64),
        distances=np.asarray(rec.distances, dtype=float),
        primal_gaps=None if rec.gaps is None else np.asarray(rec.gaps, dtype=float),
        status=status,
        metric="grad_norm" if nonquad else "distance",
        wall_time=wall,
        config=config,
        final_z=final_z,
    )


def _gap_of(schur, wx):
    return max(0.0, 0.5 * float(wx.dot(schur.dot(wx))))


def _run_lti(quad, config, z0, rec, constants):
    T = _transition_matrix(quad, config)
    schur = constants.schur if constants is not None else None
    n = quad.n
    w = z0 - quad.z_star
    d0 = math.sqrt(w.dot(w))
    d = d0
    limit = config.divergence_factor * d0
    eps = config.target_eps
    max_iters = config.max_iters
    stride = rec.stride
    rec_iters, rec_dist = rec.iters.append, rec.distances.append
    rec_gap = rec.gaps.append if rec.gaps is not None else None
    Tdot = T.dot
    k = 0
    while True:
        finite = math.isfinite(d)
        if not finite:
            d = math.inf
        stop = (not finite) or d <= eps or (d >= limit and k > 0) or k == max_iters
        if stop or k % stride == 0:
            rec_iters(k)
            rec_dist(d)
            if rec_gap is not None:
                rec_gap(_gap_of(schur, w[:n]) if finite else math.inf)
        if stop:
            final_z = quad.z_star + w
            if not finite or (d >= limit and k > 0):
                return Status(StatusKind.DIVERGED, k), final_z
            if d <= eps:
                return Status(StatusKind.CONVERGED, k), final_z
            return Status(StatusKind.BUDGET_EXHAUSTED), final_z
        w = Tdot(w)
        d = math.sqrt(w.dot(w))
        k += 1


def _run_oracle(problem, quad, config, z0, rng, rec, constants, nonquad):
    oracle = make_oracle(problem, config.noise)
    stepper = eg_step if config.algorithm is Algorithm.EG else gda_step
    schur = constants.schur if constants is not None else None
    n = quad.n
    z_star = quad.z_star
    eps = config.target_eps
    max_iters = config.max_iters
    stride = rec.stride
    rec_iters, rec_dist = rec.iters.append, rec.distances.append
    rec_gap = rec.gaps.append if rec.gaps is not None else None
    z = z0.copy()
    d0 = None
    limit = math.inf
    k = 0
    while True:
        if nonquad:
            # the convergence measure is the exact gradient norm, independent
            # of the oracle's noise
            gx, gy = prob.nonquad_grad(problem, z)
            d = math.hypot(math.sqrt(gx.dot(gx)), math.sqrt(gy.dot(gy)))
        else:
            w = z - z_star
            d = math.sqrt(w.dot(w))
        # a non-finite iterate surfaces as a non-finite measure
        finite = math.isfinite(d)
        if not finite:
            d = math.inf
        if d0 is None:
            d0 = d
            limit = config.divergence_factor * d0
        stop = (not finite) or d <= eps or (d >= limit and k > 0) or k == max_iters
        if stop or k % stride == 0:
            rec_iters(k)
            rec_dist(d)
            if rec_gap is not None:
                rec_gap(_gap_of(schur, z[:n] - quad.x_star) if finite else math.inf)
        if stop:
            if not finite or (d >= limit and k > 0):
                return Status(StatusKind.DIVERGED, k), z
            if d <= eps:
                return Status(StatusKind.CONVERGED, k), z
            return Status(StatusKind.BUDGET_EXHAUSTED), z
        z = stepper(oracle, z, config.eta_x, config.eta_y, rng)
        k += 1


def estimate_rate(trajectory, window=None):
    """Geometric per-step contraction factor fitted to a trajectory.

    Least-squares slope of log(distance) against the iteration index over
    the window (default: the trailing half of the recorded points),
    exponentiated.  Points at or below ``1e3 * eps_machine`` times the
    initial distance are excluded, and a trailing plateau (e.g. an SGDA
    noise floor, detected as trailing blocks whose average log-decrement
    collapses relative to the decaying part) is trimmed.  Raises
    :class:`InsufficientDataError` with fewer than 10 usable points.
    """
    d = np.asarray(trajectory.distances, dtype=float)
    it = np.asarray(trajectory.iters, dtype=float)
    if window is None:
        start, end = len(d) // 2, len(d)
    else:
        start, end = window
    d = d[start:end]
    it = it[start:end]

    floor = 1e3 * np.finfo(float).eps * (trajectory.distances[0] if len(trajectory.distances) else 0.0)
    usable = np.isfinite(d) & (d > max(floor, 0.0))
    d, it = d[usable], it[usable]
    ld = np.log(d)

    # trim a trailing plateau: drop end blocks whose mean decrement is much
    # flatter than the steepest block seen before them
    if len(ld) >= 20:
        b = max(5, len(ld) // 10)
        diffs = np.diff(ld)
        nblocks = len(diffs) // b
        if nblocks >= 2:
            means = [diffs[i * b:(i + 1) * b].mean() for i in range(nblocks)]
            scale = min(means)
            cut = nblocks
            if scale < 0:
                while cut > 1 and means[cut - 1] >= 0.25 * scale:
                    cut -= 1
            keep = cut * b + 1
            ld, it = ld[:keep], it[:keep]

    if len(ld) < 10:
        raise InsufficientDataError(
            f"need at least 10 usable positive distances, have {len(ld)}"
        )
    slope = np.polyfit(it, ld, 1)[0]
    return float(math.exp(slope))


def write_trajectory_csv(trajectory, path_or_file):
    """Write ``iter,distance,primal_gap`` rows (RFC-4180, 17 significant
    digits; the gap column is empty when not recorded)."""

    def _write(fh):
        writer = csv.writer(fh)
        writer.writerow(["iter", "distance", "primal_gap"])
        gaps = trajectory.primal_gaps
        for i, (k, dist) in enumerate(zip(trajectory.iters, trajectory.distances)):
            gap = "" if gaps is None else f"{gaps[i]:.17g}"
            writer.writerow([int(k), f"{dist:.17g}", gap])

    if hasattr(path_or_file, "write"):
        _write(path_or_file)
    else:
        with open(path_or_file, "w", encoding="utf-8", newline="") as fh:
            _write(fh)
