"""Assembly of the supremum bound for a smooth random field.

The bound on ``sup G - G(theta*)`` is the sum of a quadratic-form quantile,
inflated by the contraction factor ``1 / (1 - tau)``, and a local
approximation error.  Every ingredient is exposed on its own so that the
Monte Carlo harness can check them separately.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from ._linalg import as_symmetric, lam_min, pd_inv, pd_inv_sqrt
from .model import curvature_rate, effective_dims
from .quadform import deviation_branch

__all__ = [
    "BoundConditionError",
    "LocalBudget",
    "BoundReport",
    "local_budget",
    "contraction_tau",
    "min_global_radius",
    "quad_sup_closed_form",
    "sup_bound",
    "calibrate_delta0",
    "DEFAULT_PROB_MULTIPLIER",
]

# 4 e^-x from the local event plus e^-x from the global exit event
DEFAULT_PROB_MULTIPLIER = 5.0


class BoundConditionError(ValueError):
    """A hypothesis of the supremum bound fails; ``condition`` names it."""

    def __init__(self, condition, message):
        super().__init__(f"{condition}: {message}")
        self.condition = condition


@dataclass(frozen=True)
class LocalBudget:
    r: float
    delta: float
    rho: float
    err_bound: float
    Ddelta_sq: np.ndarray
    psd_margin: float


def local_budget(m, r, x):
    """Local quadratic bracket at radius ``r`` with the minimal admissible delta and rho."""
    if not r > 0 or not x > 0:
        raise ValueError(f"local_budget needs r > 0 and x > 0 (r = {r}, x = {x})")
    delta = m.delta0 * m.eps * r
    rho = 3.0 * m.nu0 * m.omega0 * m.eps * r
    err = rho * (1.0 + math.sqrt(x + 3 * m.dim)) ** 2
    dd = m.d0sq * (1.0 - delta) - rho * m.v0sq
    margin = lam_min(dd)
    if margin < 0:
        raise ValueError(
            f"local quadratic bracket fails; shrink r or eps (lambda_min(D_delta^2) = {margin:.6g})"
        )
    dd.setflags(write=False)
    return LocalBudget(r=float(r), delta=delta, rho=rho, err_bound=err, Ddelta_sq=dd, psd_margin=margin)


def contraction_tau(m, r0):
    """``tau = eps r0 (delta0 + 3 nu0 omega0 aa^2)``; the gap ``||xi_delta||^2 / ||xi||^2 <= 1 / (1 - tau)``."""
    if not r0 > 0:
        raise ValueError("r0 must be positive")
    tau = m.eps * r0 * (m.delta0 + 3.0 * m.nu0 * m.omega0 * m.aa**2)
    if tau >= 1.0:
        raise BoundConditionError("tau_cond", f"contraction fails, τ = {tau:.6g} ≥ 1")
    return tau


def _tau_value(m, r0):
    return m.eps * r0 * (m.delta0 + 3.0 * m.nu0 * m.omega0 * m.aa**2)


def min_global_radius(m, x):
    """Smallest radius with ``6 nu0 sqrt(x + 3p) <= r b*``."""
    s = x + 3 * m.dim
    if s < 2.5:
        raise BoundConditionError("global_cond", f"x + 3p = {s:.6g} < 2.5, need x + 3p ≥ 2.5")
    return 6.0 * m.nu0 * math.sqrt(s) / curvature_rate(m.dstar, m.v0sq)


def quad_sup_closed_form(grad, ddelta_sq):
    """Supremum over theta of ``u' grad - |D_delta u|^2 / 2``, i.e. ``|xi_delta|^2 / 2``.

    Takes the squared matrix ``D_delta^2``; the supremum only depends on it.
    """
    ddelta_sq = as_symmetric(ddelta_sq, "D_delta^2")
    grad = np.asarray(grad, dtype=float)
    inv = pd_inv(ddelta_sq, "D_delta")
    return 0.5 * float(grad @ inv @ grad)


@dataclass(frozen=True)
class BoundReport:
    x: float
    r0_used: float
    tau: float
    quantile_term: float
    error_term: float
    total_offset: float
    prob_multiplier: float
    implied_c: float
    validity: dict = field(default_factory=dict)
    p_eff: float = math.nan
    v_eff: float = math.nan
    lam0: float = math.nan
    p_norm: float = math.nan
    v_norm: float = math.nan
    x_c: float = math.nan
    branch: str = ""

    @property
    def failure_probability(self):
        return self.prob_multiplier * math.exp(-self.x)

    def as_dict(self):
        return {
            "x": self.x,
            "r0_used": self.r0_used,
            "tau": self.tau,
            "quantile_term": self.quantile_term,
            "error_term": self.error_term,
            "total_offset": self.total_offset,
            "prob_multiplier": self.prob_multiplier,
            "implied_c": self.implied_c,
            "validity": dict(self.validity),
            "p_eff": self.p_eff,
            "v_eff": self.v_eff,
            "lam0": self.lam0,
            "p_norm": self.p_norm,
            "v_norm": self.v_norm,
            "x_c": self.x_c,
            "branch": self.branch,
        }


def sup_bound(m, x, prob_multiplier=DEFAULT_PROB_MULTIPLIER, monotone_envelope=False):
    """Bound ``sup G - G(theta*) <= total_offset`` with probability ``>= 1 - prob_multiplier e^-x``.

    ``quantile_term = nu0^2 lam0 (p + z(x)) / (2 (1 - tau))`` in the normalized
    units of the quadratic-form bound and ``error_term = 6 nu0 omega0 eps r0
    (1 + sqrt(x + 3p))^2`` at ``r0 = max(model r0, global exit radius)``.
    ``implied_c`` solves ``total_offset = lam0 p / 2 + c lam0 (v sqrt(x) + x)``
    with ``p, v`` normalized by ``lam0``.
    """
    if not x > 0:
        raise ValueError(f"x must be positive, got {x}")
    p = m.dim
    s = x + 3 * p
    flags = {
        "eps_cond": m.eps * math.sqrt(s) < 1.0,
        "global_cond": s >= 2.5,
        "tau_cond": False,
        "xc_cond": False,
    }
    if not flags["eps_cond"]:
        raise BoundConditionError(
            "eps_cond", f"ε√(x+3p) = {m.eps * math.sqrt(s):.6g} ≥ 1, need ε√(x+3p) < 1"
        )
    r0_used = max(m.r0, min_global_radius(m, x))
    tau = _tau_value(m, r0_used)
    flags["tau_cond"] = tau < 1.0
    if not flags["tau_cond"]:
        raise BoundConditionError("tau_cond", f"contraction fails, τ = {tau:.6g} ≥ 1 at r0 = {r0_used:.6g}")
    eff = effective_dims(m.d0sq, m.v0sq)
    z, branch, nq, crit = deviation_branch(x, eff.B, m.g, monotone_envelope)
    flags["xc_cond"] = x <= crit.x_c
    if not flags["xc_cond"]:
        raise BoundConditionError("xc_cond", f"x = {x:.6g} exceeds the critical level x_c = {crit.x_c:.6g}")
    # the tau argument needs D_delta^2 >= (1 - tau) D0^2 > 0
    local_budget(m, r0_used, x)
    quantile = m.nu0**2 * eff.lam0 * (nq.p_app + z) / (2.0 * (1.0 - tau))
    error = 6.0 * m.nu0 * m.omega0 * m.eps * r0_used * (1.0 + math.sqrt(s)) ** 2
    total = quantile + error
    implied_c = (total - eff.lam0 * nq.p_app / 2.0) / (eff.lam0 * (nq.v_app * math.sqrt(x) + x))
    return BoundReport(
        x=float(x),
        r0_used=r0_used,
        tau=tau,
        quantile_term=quantile,
        error_term=error,
        total_offset=total,
        prob_multiplier=float(prob_multiplier),
        implied_c=implied_c,
        validity=flags,
        p_eff=eff.p_eff,
        v_eff=eff.v_eff,
        lam0=eff.lam0,
        p_norm=nq.p_app,
        v_norm=nq.v_app,
        x_c=crit.x_c,
        branch=branch,
    )


def calibrate_delta0(M_eval, m, r, samples, theta_star=None, seed=0):
    """Empirical ``delta0`` from the quadratic approximation of the mean function.

    Returns ``max |2 (M(theta) - M(theta*)) / |D0 u|^2 + 1| / (eps r)`` over
    ``samples`` points ``theta = theta* + u`` with ``|V0 u| <= r``; half of
    them lie on the boundary ellipsoid.  The estimate increases towards the
    true supremum as ``samples`` grows.
    """
    if not r > 0 or samples < 1:
        raise ValueError("calibrate_delta0 needs r > 0 and samples >= 1")
    p = m.dim
    theta_star = np.zeros(p) if theta_star is None else np.asarray(theta_star, dtype=float)
    rng = np.random.default_rng(seed)
    d = rng.standard_normal((samples, p))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    t = np.ones(samples)
    half = samples // 2
    t[half:] = rng.uniform(size=samples - half) ** (1.0 / p)
    vinv = pd_inv_sqrt(m.v0sq, "V0^2")
    u = (r * t)[:, None] * (d @ vinv)
    m_star = float(M_eval(theta_star))
    worst = 0.0
    for ui in u:
        val = float(M_eval(theta_star + ui))
        if not math.isfinite(val):
            raise ValueError(f"radius r = {r} exceeds the domain of M")
        q = float(ui @ m.d0sq @ ui)
        if q <= 0:
            continue
        worst = max(worst, abs(2.0 * (val - m_star) / q + 1.0))
    return worst / (m.eps * r)
