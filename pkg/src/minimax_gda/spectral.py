"""Spectral certification of the GDA/EG dynamics.

Given an instance, a stepsize ratio ``r`` and an ``eta_x``, this module
computes the eigenvalues of the block dynamics matrix M, the spectral radii
``rho1`` (GDA transition ``I + eta_x*M``) and ``rho2`` (EG transition
``I + eta_x*M + eta_x^2*M^2``), the proved radius bound
``1 - 1/(c * r * kappa_x)`` (c = 64 for the quarter stepsize scheme, 16 for
the half scheme), the five structural checks on the spectrum of M, the
condition number of the eigenvector basis, and the resulting iteration and
noise-floor predictions.

All functions are pure over immutable inputs and safe to call concurrently.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import dynamics, linalg
from . import problems as prob
from .errors import InvalidInputError, SingularMatrixError

DIAGONALIZABLE_COND_CAP = 1e8
LEMMA_CHECK_RTOL = 1e-8  # per-item tolerance, relative to |M|_2
REAL_EIG_RTOL = 1e-9  # an eigenvalue counts as real when |imag| <= this * |M|_2


class RatioClass(str, enum.Enum):
    BELOW_THRESHOLD = "below_threshold"  # r <= kappa: divergence certified
    GAP = "gap"  # kappa < r < 2*kappa: per-instance numerics only
    PROVED_CONVERGENT = "proved_convergent"  # r >= 2*kappa


@dataclass(frozen=True)
class LemmaCheck:
    item: int
    applicable: bool
    passed: bool
    margin: float  # min over eigenvalues of (bound - value); inf when vacuous


@dataclass(frozen=True)
class SpectralReport:
    eigenvalues: np.ndarray  # complex eigenvalues of M
    rho1: float
    rho2: float
    rho_bound: float
    rate_constant: int
    lemma_checks: tuple
    diagonalizable: bool
    basis_cond: Optional[float]  # condition number of the eigenvector basis
    s_assumed: int
    M_norm: float
    r: float
    eta_x: float
    L: float
    mu: float
    mu_x: float
    kappa: float
    kappa_x: float

    def predicted_iters(self, eps, initial_distance=1.0, algorithm="gda", s=None):
        """Smallest T with ``s * C_P * T^(s-1) * rho^(T-s+1) * d0 <= eps``.

        Uses ``rho1`` for GDA and ``rho2`` for EG; ``inf`` when the radius
        is >= 1 or the basis condition number is unavailable."""
        rho = self.rho2 if str(algorithm).lower() == "eg" else self.rho1
        s = self.s_assumed if s is None else s
        if rho >= 1.0 or self.basis_cond is None:
            return math.inf
        if initial_distance <= eps:
            return 0
        lo, hi = s - 1, max(s, 2)
        while power_bound(hi, s, self.basis_cond, rho) * initial_distance > eps:
            hi *= 2
            if hi > 2 ** 62:
                return math.inf
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if mid >= s - 1 and power_bound(mid, s, self.basis_cond, rho) * initial_distance <= eps:
                hi = mid
            else:
                lo = mid
        return hi

    def dominant_modulus_gap(self, algorithm="gda"):
        """Gap between the largest and second-largest *distinct*
        transition-eigenvalue moduli (a conjugate pair shares one modulus);
        inf when a single modulus remains."""
        lam = self.eigenvalues
        t = 1.0 + self.eta_x * lam
        if str(algorithm).lower() == "eg":
            t = t + (self.eta_x * lam) ** 2
        mods = np.sort(np.abs(t))[::-1]
        rest = mods[mods < mods[0] * (1.0 - 1e-12)]
        if len(rest) == 0:
            return math.inf
        return float(mods[0] - rest[0])


def spectral_report(problem, r, eta_x, scheme=dynamics.Scheme.QUARTER):
    """Eigenvalues of M, transition radii, proved bound, structural checks,
    and the eigenvector-basis condition number.

    The basis is declared usable (``diagonalizable``) when the eigensolver
    returns vectors whose condition number is at most 1e8; otherwise
    ``basis_cond`` is absent and power-bound evaluations need a
    caller-supplied Jordan block size.
    """
    if r <= 0 or eta_x <= 0:
        raise InvalidInputError("r and eta_x must be positive")
    scheme = dynamics.Scheme(scheme)
    dc = prob.derive_constants(problem)
    M = dynamics.build_M(problem, r)
    M_norm = linalg.spectral_norm(M)
    lam, V = linalg.general_eig(M)

    t1 = 1.0 + eta_x * lam
    t2 = t1 + (eta_x * lam) ** 2
    rho1 = float(np.max(np.abs(t1)))
    rho2 = float(np.max(np.abs(t2)))

    diagonalizable = False
    basis_cond = None
    if V is not None:
        try:
            cond = linalg.cond_2(V)
        except SingularMatrixError:
            cond = math.inf
        if cond <= DIAGONALIZABLE_COND_CAP:
            diagonalizable = True
            basis_cond = cond

    c = scheme.rate_constant
    rho_bound = 1.0 if math.isinf(dc.kappa_x) else 1.0 - 1.0 / (c * r * dc.kappa_x)

    checks = check_lemma_spectral(
        _EigContext(lam, M_norm), problem.L, problem.mu, dc.mu_x, r
    )
    return SpectralReport(
        eigenvalues=lam,
        rho1=rho1,
        rho2=rho2,
        rho_bound=rho_bound,
        rate_constant=c,
        lemma_checks=checks,
        diagonalizable=diagonalizable,
        basis_cond=basis_cond,
        s_assumed=1,
        M_norm=M_norm,
        r=float(r),
        eta_x=float(eta_x),
        L=problem.L,
        mu=problem.mu,
        mu_x=dc.mu_x,
        kappa=dc.kappa,
        kappa_x=dc.kappa_x,
    )


@dataclass(frozen=True)
class _EigContext:
    eigenvalues: np.ndarray
    M_norm: float


def check_lemma_spectral(report, L, mu, mu_x, r):
    """The five structural properties of the spectrum of M, each returned as
    (applicable, passed, margin):

      1. every imaginary part is at most sqrt(r)*L in magnitude;
      2. complex eigenvalues have real part at most -mu*(r-kappa)/2;
      3. the squared spectral radius is at most |M|_2^2 which is at most
         4*r^2*L^2 (needs r >= 1);
      4. real eigenvalues have real part at most -mu_x;
      5. every real part is strictly negative.

    Items 2, 4 and 5 are proved for r > kappa (and 5 needs mu_x > 0); they
    report not-applicable otherwise.  ``report`` may be a full
    :class:`SpectralReport` or anything exposing ``eigenvalues`` and
    ``M_norm``.  Margins are (bound - value), so nonnegative means satisfied;
    each item passes when its margin is >= -1e-8 * |M|_2.
    """
    lam = np.asarray(report.eigenvalues, dtype=complex)
    M_norm = float(report.M_norm)
    tol = LEMMA_CHECK_RTOL * M_norm
    kappa = L / mu
    re, im = lam.real, lam.imag
    is_complex = np.abs(im) > REAL_EIG_RTOL * M_norm
    above = r > kappa

    checks = []

    margin1 = float(math.sqrt(r) * L - np.max(np.abs(im)))
    checks.append(LemmaCheck(1, True, margin1 >= -tol, margin1))

    if above:
        if np.any(is_complex):
            margin2 = float(np.min(-mu * (r - kappa) / 2.0 - re[is_complex]))
        else:
            margin2 = math.inf
        checks.append(LemmaCheck(2, True, margin2 >= -tol, margin2))
    else:
        checks.append(LemmaCheck(2, False, True, math.nan))

    if r >= 1.0:
        radius_sq = float(np.max(re ** 2 + im ** 2))
        margin3 = min(M_norm ** 2 - radius_sq, 4.0 * r ** 2 * L ** 2 - M_norm ** 2)
        # squared-scale quantities; tolerance scales accordingly
        checks.append(LemmaCheck(3, True, margin3 >= -tol * M_norm, float(margin3)))
    else:
        checks.append(LemmaCheck(3, False, True, math.nan))

    if above:
        if np.any(~is_complex):
            margin4 = float(np.min(-mu_x - re[~is_complex]))
        else:
            margin4 = math.inf
        checks.append(LemmaCheck(4, True, margin4 >= -tol, margin4))
    else:
        checks.append(LemmaCheck(4, False, True, math.nan))

    if above and mu_x > 0:
        margin5 = float(-np.max(re))
        checks.append(LemmaCheck(5, True, margin5 >= -tol, margin5))
    else:
        checks.append(LemmaCheck(5, False, True, math.nan))

    return tuple(checks)


def power_bound(k, s, basis_cond, rho):
    """Matrix-power norm bound ``s * C_P * k^(s-1) * rho^(k-s+1)`` for a
    transition matrix with spectral radius ``rho``, basis condition number
    ``C_P`` and largest Jordan block of size ``s``."""
    if not (0.0 < rho < 1.0):
        raise InvalidInputError(f"rho must lie in (0, 1), got {rho:.6g}")
    if s < 1 or int(s) != s:
        raise InvalidInputError("s must be an integer >= 1")
    if basis_cond < 1.0:
        raise InvalidInputError("basis condition number is at least 1")
    if k < s - 1:
        raise InvalidInputError(f"k must be >= s-1 = {s - 1}")
    return s * basis_cond * float(k) ** (s - 1) * rho ** (k - s + 1)


def classify_ratio(r, kappa):
    """Where a stepsize ratio falls relative to the convergence threshold:
    at or below ``kappa`` divergence is certified on the hard instance, at or
    above ``2*kappa`` convergence is proved, in between only per-instance
    numerics decide."""
    if r <= 0 or kappa <= 0:
        raise InvalidInputError("r and kappa must be positive")
    if r <= kappa:
        return RatioClass.BELOW_THRESHOLD
    if r >= 2.0 * kappa:
        return RatioClass.PROVED_CONVERGENT
    return RatioClass.GAP


def predicted_floor_sgda(r, kappa_x, basis_cond, sigma, L, batch):
    """Proved steady-state mean-square distance bound for mini-batch SGDA:
    ``8 * r * kappa_x * C_P^2 * sigma^2 / (L^2 * batch)``."""
    if min(r, kappa_x, basis_cond, L, batch) <= 0 or sigma < 0:
        raise InvalidInputError("all floor parameters must be positive (sigma >= 0)")
    return 8.0 * r * kappa_x * basis_cond ** 2 * sigma ** 2 / (L ** 2 * batch)


@dataclass(frozen=True)
class ComplexityTable:
    """Gradient-complexity scalings (constants and log factors suppressed)
    for the two reference ratio choices.  The stochastic column carries the
    ``sigma^2`` factor; row ratios are independent of it."""

    gda_pos_r2k: float
    gda_zero_r2k: float
    sgda_r2k: float
    gda_pos_r2k2: float
    gda_zero_r2k2: float
    sgda_r2k2: float
    ratio_gda_pos: float
    ratio_gda_zero: float
    ratio_sgda: float


def complexity_table(kappa, kappa_x, eps, sigma):
    """Scaling table comparing ``r = 2*kappa`` with ``r = 2*kappa^2``:
    deterministic columns ``kappa*kappa_x`` vs ``kappa^2*kappa_x`` (strongly
    convex primal) and ``kappa/eps`` vs ``kappa^2/eps`` (merely convex);
    stochastic column ``kappa^2*kappa_x^2*sigma^2/eps^2`` vs ``kappa^4*...``."""
    if min(kappa, kappa_x, eps, sigma) <= 0:
        raise InvalidInputError("all inputs must be positive")
    gda_pos = kappa * kappa_x
    gda_zero = kappa / eps
    sgda = (kappa * kappa_x * sigma / eps) ** 2
    return ComplexityTable(
        gda_pos_r2k=gda_pos,
        gda_zero_r2k=gda_zero,
        sgda_r2k=sgda,
        gda_pos_r2k2=kappa * gda_pos,
        gda_zero_r2k2=kappa * gda_zero,
        sgda_r2k2=kappa ** 2 * sgda,
        ratio_gda_pos=kappa,
        ratio_gda_zero=kappa,
        ratio_sgda=kappa ** 2,
    )


def report_to_json_dict(report):
    """Stable-name JSON form of a spectral report (eigenvalues as [re, im]
    pairs)."""
    return {
        "eigenvalues": [[float(l.real), float(l.imag)] for l in report.eigenvalues],
        "rho1": report.rho1,
        "rho2": report.rho2,
        "rho_bound": report.rho_bound,
        "rate_constant": report.rate_constant,
        "lemma_checks": [
            {
                "item": c.item,
                "applicable": c.applicable,
                "passed": c.passed,
                # None for not-applicable or vacuous items
                "margin": c.margin if math.isfinite(c.margin) else None,
            }
            for c in report.lemma_checks
        ],
        "diagonalizable": report.diagonalizable,
        "basis_cond": report.basis_cond,
        "s_assumed": report.s_assumed,
        "M_norm": report.M_norm,
        "r": report.r,
        "eta_x": report.eta_x,
        "L": report.L,
        "mu": report.mu,
        "mu_x": report.mu_x,
        "kappa": report.kappa,
        "kappa_x": None if math.isinf(report.kappa_x) else report.kappa_x,
    }
