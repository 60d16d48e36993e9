"""Deviation bounds for quadratic forms ``||B xi||^2`` of sub-Gaussian vectors.

The vector ``xi`` is assumed to satisfy ``log E exp(gamma' xi) <= |gamma|^2 / 2``
for ``|gamma| <= g``.  Two conventions for the matrix meet here:

* the effective-dimension matrix ``B`` (PSD) whose trace is the effective dimension, and
* the quadratic-form matrix ``B_app = B^(1/2)`` whose squared trace is.

Every public function takes the effective-dimension ``B``; internally it is rescaled to
``B_tilde = B_app / sqrt(lambda*)`` with ``lambda* = lambda_max(B)`` so that
``lambda_max(B_tilde^2) = 1``.
"""

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np
from scipy.optimize import bisect

from ._linalg import ORDER_TOL, as_symmetric, eigh

__all__ = [
    "NormalizedQuad",
    "QuadCritical",
    "normalize",
    "solve_wc",
    "critical_params",
    "deviation_quantile",
    "deviation_branch",
    "total_quantile",
    "tail_bound",
    "LD_CONST",
]

LD_CONST = 8.4
MU_CAP = 2.0 / 3.0


@dataclass(frozen=True)
class NormalizedQuad:
    B_tilde: np.ndarray
    lamstar: float
    p_app: float
    v_app: float
    g_tilde: float
    spectrum: tuple  # eigenvalues of B_tilde^2, ascending


@dataclass(frozen=True)
class QuadCritical:
    w_c: float
    mu_c: float
    yc_sq: float
    x_c: float
    g_c: float


def _spectrum(b):
    b = as_symmetric(b, "B")
    w, v = eigh(b)
    if w[0] < -ORDER_TOL * max(1.0, abs(w[-1])):
        raise ValueError(f"B must be positive semidefinite (lambda_min = {w[0]:.3g})")
    w = np.clip(w, 0.0, None)
    if w[-1] <= 0.0:
        raise ValueError("B is the zero matrix")
    return w, v


def normalize(B, g):
    """Rescale the effective-dimension matrix ``B`` to the unit-norm quadratic-form matrix."""
    w, v = _spectrum(B)
    lamstar = float(w[-1])
    s = w / lamstar
    b_tilde = (v * np.sqrt(s)) @ v.T
    b_tilde = 0.5 * (b_tilde + b_tilde.T)
    b_tilde.setflags(write=False)
    return NormalizedQuad(
        B_tilde=b_tilde,
        lamstar=lamstar,
        p_app=float(np.sum(s)),
        v_app=math.sqrt(2.0 * float(np.sum(s**2))),
        g_tilde=float(g),
        spectrum=tuple(float(t) for t in s),
    )


def _wc_lhs(w):
    return w * (1.0 + w) / math.sqrt(1.0 + w * w)


def solve_wc(g_tilde, p_app):
    """Positive root of ``w (1 + w) / sqrt(1 + w^2) = g / sqrt(p)``.

    The left side increases strictly from 0 to infinity, so the root is
    bracketed by doubling and refined by bisection to machine precision.
    """
    if not g_tilde > 0 or not p_app > 0:
        raise ValueError(f"solve_wc needs g_tilde > 0 and p_app > 0, got {g_tilde}, {p_app}")
    target = g_tilde / math.sqrt(p_app)
    hi = 1.0
    while _wc_lhs(hi) < target:
        hi *= 2.0
    w = bisect(lambda t: _wc_lhs(t) - target, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=2000)
    return float(w)


@lru_cache(maxsize=256)
def _critical(spectrum, g):
    p_app = math.fsum(spectrum)
    w = solve_wc(g, p_app)
    mu = min(w * w / (1.0 + w * w), MU_CAP)
    yc_sq = (1.0 + w * w) * p_app
    s = np.asarray(spectrum)
    assert mu * s[-1] < 1.0
    logdet = float(np.sum(np.log1p(-mu * s)))
    x_c = 0.5 * (mu * yc_sq + logdet)
    g_c = g * w / (1.0 + w)
    return QuadCritical(w_c=w, mu_c=mu, yc_sq=yc_sq, x_c=x_c, g_c=g_c)


def critical_params(nq):
    """Critical point separating the moderate and large deviation regimes."""
    return _critical(nq.spectrum, float(nq.g_tilde))


def _check_g(nq):
    if nq.g_tilde**2 < 2.0 * nq.p_app:
        raise ValueError(
            f"g too small: the quadratic-form quantile needs g^2 >= 2 p "
            f"(g = {nq.g_tilde:.6g}, p = {nq.p_app:.6g})"
        )


def _normalized_deviation(x, nq, crit):
    """Deviation above the mean in units where lambda_max(B_tilde^2) = 1."""
    v = nq.v_app
    if x <= v / 18.0:
        return 2.0 * v * math.sqrt(x), "sqrt"
    if x <= crit.x_c:
        return 6.0 * x, "linear"
    zc = (math.sqrt(crit.yc_sq) + 2.0 * (x - crit.x_c) / crit.g_c) ** 2
    return zc - nq.p_app, "ld"


def _envelope(x, nq, crit):
    # smallest quantile among levels x' >= x; each of them is valid at level x
    z, branch = _normalized_deviation(x, nq, crit)
    v = nq.v_app
    cands = [(z, branch)]
    if x <= v / 18.0 and v / 18.0 < crit.x_c:
        cands.append((v / 3.0, "linear"))
    if x <= crit.x_c:
        cands.append((crit.yc_sq - nq.p_app, "ld"))
    return min(cands, key=lambda t: t[0])


def deviation_branch(x, B, g, monotone_envelope=False):
    """Return ``(z_normalized, branch, nq, crit)`` for level ``x``."""
    if not x > 0:
        raise ValueError(f"x must be positive, got {x}")
    nq = normalize(B, g)
    _check_g(nq)
    crit = critical_params(nq)
    if monotone_envelope:
        z, branch = _envelope(x, nq, crit)
    else:
        z, branch = _normalized_deviation(x, nq, crit)
    return z, branch, nq, crit


def deviation_quantile(x, B, g, monotone_envelope=False):
    """Deviation of ``||B_app xi||^2`` above its mean bound ``tr(B)`` at level ``x``.

    For ``x <= x_c`` this is ``lambda* z(x)`` with the piecewise moderate
    deviation quantile; beyond ``x_c`` it is the large-deviation quantile with
    ``tr(B)`` subtracted, so ``tr(B) + deviation_quantile`` is always the
    threshold.  With ``g^2 >= 2 p`` the exceedance probability is at most
    ``2 exp(-x) + 8.4 exp(-x_c)`` (or ``8.4 exp(-x)`` past ``x_c``).
    """
    z, _, nq, _ = deviation_branch(x, B, g, monotone_envelope)
    return nq.lamstar * z


def total_quantile(x, eff, g, monotone_envelope=False):
    """``p + z(x)`` in normalized units; ``eff.lam0 * total_quantile`` bounds ``||xi||^2``."""
    z, _, nq, _ = deviation_branch(x, eff.B, g, monotone_envelope)
    return nq.p_app + z


def tail_bound(y, B, g):
    """Upper bound on ``P(||B_app xi|| > y)``, capped at 1."""
    if not y > 0:
        raise ValueError(f"y must be positive, got {y}")
    nq = normalize(B, g)
    crit = critical_params(nq)
    yt = y / math.sqrt(nq.lamstar)
    yc = math.sqrt(crit.yc_sq)
    if yt >= yc:
        return min(1.0, LD_CONST * math.exp(-crit.x_c - crit.g_c * (yt - yc) / 2.0))
    d = yt * yt - nq.p_app
    if d <= 0:
        return 1.0
    v = nq.v_app
    x_star = min((d / (2.0 * v)) ** 2, v / 18.0)
    if d / 6.0 > v / 18.0:
        x_star = max(x_star, min(d / 6.0, crit.x_c))
    return min(1.0, 2.0 * math.exp(-x_star) + LD_CONST * math.exp(-crit.x_c))
