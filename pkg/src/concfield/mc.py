"""Monte Carlo harness: empirical exceedance frequencies against the bounds.

Replicas are drawn in fixed-size blocks.  Block ``b`` of stream ``tag`` uses a
Philox generator keyed by ``(seed, crc32(tag), b)``, so results do not depend
on how blocks are scheduled over threads (``CONCFIELD_THREADS``, 0 = auto).
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import math
import os
import warnings
import zlib

import numpy as np

from ._linalg import as_symmetric, eigh, lam_max, pd_inv_sqrt, psd_sqrt
from .bound import sup_bound
from .eigenmax import (
    bernstein_bound,
    eigen_bound,
    field_model_from_ensemble,
    field_moments,
    field_sup,
    legendre,
    noise_v_off,
    sample_noise,
)
from .quadform import LD_CONST, deviation_branch, normalize

__all__ = [
    "BLOCK",
    "CoverageReport",
    "RandomFieldSpec",
    "stream",
    "wilson_interval",
    "wilson_halfwidth",
    "reg_gamma_p",
    "reg_gamma_q",
    "chi2_cdf",
    "chi2_sf",
    "chi2_oracle",
    "auto_g",
    "sample_quadform",
    "sample_zeta",
    "verify_field_bound",
    "verify_eigen_bounds",
    "estimate_nu0",
    "estimate_omega0",
]

BLOCK = 2000
PASS_WIDTHS = 3.0


def stream(seed, tag, block=0):
    """Counter-based generator for block ``block`` of stream ``tag``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(zlib.crc32(tag.encode()), int(block)))
    return np.random.Generator(np.random.Philox(ss))


def _workers():
    raw = os.environ.get("CONCFIELD_THREADS", "0").strip() or "0"
    try:
        k = int(raw)
    except ValueError:
        raise ValueError(f"CONCFIELD_THREADS must be an integer, got {raw!r}") from None
    if k < 0:
        raise ValueError("CONCFIELD_THREADS must be >= 0")
    return k or (os.cpu_count() or 1)


def _blocks(trials, seed, tag, fn):
    """Concatenate ``fn(rng, size)`` over the replica blocks, in block order."""
    if trials < 1:
        raise ValueError("trials must be positive")
    sizes = [min(BLOCK, trials - s) for s in range(0, trials, BLOCK)]
    jobs = [(b, size) for b, size in enumerate(sizes)]

    def run(job):
        b, size = job
        return fn(stream(seed, tag, b), size)

    k = min(_workers(), len(jobs))
    if k <= 1:
        parts = [run(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=k) as ex:
            parts = list(ex.map(run, jobs))
    return np.concatenate(parts, axis=0)


# --- binomial intervals ----------------------------------------------------


def wilson_interval(k, n, z=1.0):
    if n < 1 or not 0 <= k <= n:
        raise ValueError("need n >= 1 and 0 <= k <= n")
    ph = k / n
    den = 1.0 + z * z / n
    centre = (ph + z * z / (2 * n)) / den
    hw = z / den * math.sqrt(ph * (1 - ph) / n + z * z / (4.0 * n * n))
    return centre - hw, centre + hw


def wilson_halfwidth(k, n, z=1.0):
    lo, hi = wilson_interval(k, n, z)
    return 0.5 * (hi - lo)


@dataclass(frozen=True)
class CoverageReport:
    x_grid: tuple
    empirical_exceed: tuple
    theoretical_bound: tuple
    wilson_halfwidth: tuple
    passed: tuple
    n_trials: int
    seed: int
    thresholds: tuple = ()

    @property
    def all_pass(self):
        return all(self.passed)

    def rows(self):
        return list(zip(self.x_grid, self.empirical_exceed, self.theoretical_bound, self.wilson_halfwidth, self.passed))


def _report(xs, exceed_counts, bounds, trials, seed, thresholds):
    emp, hws, ok = [], [], []
    for k, b in zip(exceed_counts, bounds):
        if k is None or not math.isfinite(b):
            emp.append(math.nan)
            hws.append(math.nan)
            ok.append(False)
            continue
        hw = wilson_halfwidth(k, trials)
        emp.append(k / trials)
        hws.append(hw)
        ok.append(k / trials <= b + PASS_WIDTHS * hw)
    return CoverageReport(
        x_grid=tuple(float(x) for x in xs),
        empirical_exceed=tuple(emp),
        theoretical_bound=tuple(float(b) for b in bounds),
        wilson_halfwidth=tuple(hws),
        passed=tuple(ok),
        n_trials=int(trials),
        seed=int(seed),
        thresholds=tuple(float(t) for t in thresholds),
    )


# --- chi-square oracle -----------------------------------------------------


def _gamma_series(a, x):
    # lower regularized gamma, converges fast for x < a + 1
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(100000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * 1e-17:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cf(a, x):
    # upper regularized gamma by the modified Lentz continued fraction
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 100000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        d = tiny if abs(d) < tiny else d
        c = b + an / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-17:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def reg_gamma_p(a, x):
    if not a > 0 or x < 0:
        raise ValueError("need a > 0 and x >= 0")
    if x == 0:
        return 0.0
    return _gamma_series(a, x) if x < a + 1.0 else 1.0 - _gamma_cf(a, x)


def reg_gamma_q(a, x):
    if not a > 0 or x < 0:
        raise ValueError("need a > 0 and x >= 0")
    if x == 0:
        return 1.0
    return 1.0 - _gamma_series(a, x) if x < a + 1.0 else _gamma_cf(a, x)


def chi2_cdf(p, q):
    return reg_gamma_p(p / 2.0, q / 2.0)


def chi2_sf(p, q):
    return reg_gamma_q(p / 2.0, q / 2.0)


def chi2_oracle(p, prob):
    """Quantile ``q`` with ``P(chi2_p <= q) = prob``.

    Solved by bisection on whichever tail is smaller, so upper quantiles far
    in the tail keep their relative accuracy.
    """
    if int(p) != p or p < 1:
        raise ValueError("p must be a positive integer")
    if not 0.0 < prob < 1.0:
        raise ValueError(f"prob must lie in (0, 1), got {prob}")
    if prob <= 0.5:
        def h(q):
            return chi2_cdf(p, q) - prob
    else:
        upper = 1.0 - prob

        def h(q):
            return upper - chi2_sf(p, q)

    lo, hi = 0.0, max(1.0, float(p))
    while h(hi) < 0:
        lo, hi = hi, 2.0 * hi
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if h(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return 0.5 * (lo + hi)


# --- quadratic forms -------------------------------------------------------


def auto_g(B):
    """Default ``g = 10 sqrt(p)`` with ``p`` the normalized trace of ``B``."""
    return 10.0 * math.sqrt(normalize(B, 1.0).p_app)


def _quad_bound(x, crit):
    if x <= crit.x_c:
        return 2.0 * math.exp(-x) + LD_CONST * math.exp(-crit.x_c)
    return LD_CONST * math.exp(-x)


def sample_quadform(B, Sigma, trials, seed, x_grid, g=None, monotone_envelope=False):
    """Coverage of ``|B^(1/2) xi|^2 >= tr(B) + deviation`` for ``xi ~ N(0, Sigma)``."""
    B = as_symmetric(B, "B")
    Sigma = as_symmetric(Sigma, "Sigma")
    if B.shape != Sigma.shape:
        raise ValueError("dimension mismatch between B and Sigma")
    w = np.linalg.eigvalsh(Sigma)
    if w[0] < -1e-10 or w[-1] > 1.0 + 1e-10:
        raise ValueError("MGF hypothesis violated: need 0 <= Sigma <= I")
    if trials < 10_000:
        raise ValueError("sample_quadform needs trials >= 10000")
    if g is None:
        g = auto_g(B)
    L = psd_sqrt(Sigma)
    K = L @ B @ L  # xi' B xi = z' K z
    K = 0.5 * (K + K.T)
    p = B.shape[0]

    def draw(rng, size):
        z = rng.standard_normal((size, p))
        return np.einsum("ij,jk,ik->i", z, K, z)

    stat = _blocks(trials, seed, "quadform", draw)
    lamstar = normalize(B, g).lamstar
    xs, counts, bounds, thr = [], [], [], []
    for x in x_grid:
        z, _, nq, crit = deviation_branch(x, B, g, monotone_envelope)
        t = lamstar * (nq.p_app + z)
        xs.append(x)
        thr.append(t)
        counts.append(int(np.count_nonzero(stat >= t)))
        bounds.append(_quad_bound(x, crit))
    return _report(xs, counts, bounds, trials, seed, thr)


# --- random field ----------------------------------------------------------


@dataclass(frozen=True)
class RandomFieldSpec:
    """``G(A, theta) = theta' A theta - f(|theta|^2)`` over the ensemble ``A``."""

    ensemble: object
    penalty: object
    theta_star: np.ndarray = None

    def __post_init__(self):
        mom = field_moments(self.ensemble, self.penalty)
        if self.theta_star is None:
            object.__setattr__(self, "theta_star", mom.theta_star)
        else:
            t = np.asarray(self.theta_star, dtype=float)
            if t.shape != (self.ensemble.p,):
                raise ValueError("theta_star has the wrong dimension")
            if abs(float(t @ t) - mom.r_star) > 1e-9 * max(1.0, mom.r_star):
                raise ValueError("theta_star inconsistent with the stationary radius")
            object.__setattr__(self, "theta_star", t)

    def G(self, A, theta):
        theta = np.asarray(theta, dtype=float)
        return np.einsum("i,...ij,j->...", theta, A, theta) - self.penalty.value(float(theta @ theta))


def sample_zeta(rf, theta, trials, seed):
    """Draws of ``zeta(theta) = theta' (A - E A) theta``."""
    theta = np.asarray(theta, dtype=float)

    def draw(rng, size):
        return np.einsum("i,nij,j->n", theta, sample_noise(rf.ensemble, size, rng), theta)

    return _blocks(trials, seed, "zeta", draw)


def verify_field_bound(rf, x_grid, trials, seed, model=None):
    """Coverage of ``sup G - G(A, theta*) <= total_offset`` against ``prob_multiplier e^-x``."""
    if trials < 1:
        raise ValueError("trials must be positive")
    xs = [float(x) for x in x_grid]
    e, f = rf.ensemble, rf.penalty
    if model is None:
        model = field_model_from_ensemble(e, f, x=min(xs), x_max=max(xs))
    reports = [sup_bound(model, x) for x in xs]
    ea = e.mean_A
    th = rf.theta_star
    pen = f.value(float(th @ th))

    def draw(rng, size):
        A = ea + sample_noise(e, size, rng)
        top = np.linalg.eigvalsh(A)[:, -1]
        g_star = np.einsum("i,nij,j->n", th, A, th) - pen
        return field_sup(top, f) - g_star

    gap = _blocks(trials, seed, "field", draw)
    counts = [int(np.count_nonzero(gap > r.total_offset)) for r in reports]
    bounds = [r.prob_multiplier * math.exp(-r.x) for r in reports]
    return _report(xs, counts, bounds, trials, seed, [r.total_offset for r in reports])


def verify_eigen_bounds(e, f, x_grid, trials, seed):
    """Coverage of the field-based eigenvalue bound and, for bounded noise, the Bernstein bound.

    Returns ``(field_report, bernstein_report)``; the second is ``None`` for
    Gaussian noise.  Levels where the field bound's hypotheses fail are
    reported with NaN entries and ``passed = False``.
    """
    xs = [float(x) for x in x_grid]
    try:
        model = field_model_from_ensemble(e, f, x=min(xs), x_max=max(xs))
    except ValueError:
        model = None
    field_bounds = []
    for x in xs:
        try:
            field_bounds.append(eigen_bound(e, f, x, model=model) if model is not None else None)
        except ValueError:
            field_bounds.append(None)
    ea = e.mean_A
    lam_mean = lam_max(ea)
    f_mean = legendre(f, lam_mean) if lam_mean >= f.d1(0.0) else -f.value(0.0)

    def draw(rng, size):
        N = sample_noise(e, size, rng)
        top = np.linalg.eigvalsh(ea + N)[:, -1]
        return np.stack([field_sup(top, f) - f_mean, np.linalg.eigvalsh(N)[:, -1]], axis=1)

    s = _blocks(trials, seed, "eigen", draw)
    counts, bounds, thr = [], [], []
    for eb in field_bounds:
        if eb is None:
            counts.append(None)
            bounds.append(math.nan)
            thr.append(math.nan)
        else:
            counts.append(int(np.count_nonzero(s[:, 0] > eb.threshold)))
            bounds.append(eb.failure_probability)
            thr.append(eb.threshold)
    field_rep = _report(xs, counts, bounds, trials, seed, thr)
    if e.noise != "bounded":
        return field_rep, None
    bt = [bernstein_bound(e, x) for x in xs]
    bcounts = [int(np.count_nonzero(s[:, 1] >= t)) for t in bt]
    bern_rep = _report(xs, bcounts, [math.exp(-x) for x in xs], trials, seed, bt)
    return field_rep, bern_rep


# --- moment constants ------------------------------------------------------

DEFAULT_LAMBDAS = (-2.0, -1.5, -1.0, -0.5, 0.5, 1.0, 1.5, 2.0)


def _unit_rows(rng, k, p):
    d = rng.standard_normal((k, p))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def _logmgf_ratio(S, lambdas, scale_sq):
    """``max 2 (log-MGF - 3 SE) / (lambda^2 scale_sq)`` over the columns of ``S``."""
    best = 0.0
    dropped = False
    trials = S.shape[0]
    for lam in lambdas:
        with np.errstate(over="ignore"):
            w = np.exp(lam * S)
        if not np.all(np.isfinite(w)):
            dropped = True
            continue
        mean = w.mean(axis=0)
        se = w.std(axis=0) / (math.sqrt(trials) * mean)
        cand = 2.0 * (np.log(mean) - 3.0 * se) / (lam * lam * scale_sq)
        best = max(best, float(np.max(cand)))
    if dropped:
        warnings.warn("log-MGF overflow: large lambda values dropped from the grid", RuntimeWarning, stacklevel=3)
    return best


def estimate_nu0(e, theta, directions, lambda_grid=DEFAULT_LAMBDAS, trials=20000, seed=0, floor=True):
    """Smallest ``nu0`` whose bound ``nu0^2 lambda^2 / 2`` covers the empirical log-MGF.

    The statistic is ``gamma' (A - E A) theta / |V gamma|`` with
    ``V^2 = Var((A - E A) theta)`` and ``gamma`` drawn uniformly on the sphere.
    """
    theta = np.asarray(theta, dtype=float)
    p = e.p
    if theta.shape != (p,):
        raise ValueError("theta has the wrong dimension")
    if directions < 1:
        raise ValueError("directions must be positive")
    lambdas = [float(l) for l in lambda_grid if l != 0]
    if not lambdas:
        raise ValueError("empty lambda grid")
    mom_v = noise_v_off(e)
    va_sq = e.n * mom_v * (float(theta @ theta) * np.eye(p) + np.outer(theta, theta))
    gam = _unit_rows(stream(seed, "nu0-dir"), directions, p)
    norms = np.sqrt(np.einsum("ki,ij,kj->k", gam, va_sq, gam))

    def draw(rng, size):
        y = sample_noise(e, size, rng) @ theta
        return y @ gam.T

    raw = _blocks(trials, seed, "nu0", draw)
    S = np.divide(raw, norms, out=np.zeros_like(raw), where=norms > 0)
    nu = math.sqrt(_logmgf_ratio(S, lambdas, 1.0))
    if floor and nu < 1.0:
        warnings.warn(f"nu0 estimate {nu:.4g} below 1; floored to 1", RuntimeWarning, stacklevel=2)
        return 1.0
    return nu


def estimate_omega0(
    rf,
    r,
    probes,
    trials=20000,
    seed=0,
    lambda_grid=DEFAULT_LAMBDAS,
    directions=4,
    eps=None,
    nu0=None,
    gradient_noise=None,
    floor=True,
):
    """Empirical ``omega0`` on ``probes`` points of the ellipsoid ``|V0 u| = r``.

    The statistic is ``gamma' (grad zeta(theta) - grad zeta(theta*)) /
    (eps r |V0 gamma|)``; its log-MGF at ``mu`` is compared against
    ``nu0^2 omega0^2 mu^2 / 2``.  ``gradient_noise(N, u)`` overrides the
    gradient difference ``2 N u`` for a noise draw ``N = A - E A``.
    """
    if not r > 0 or probes < 1 or directions < 1:
        raise ValueError("estimate_omega0 needs r > 0 and positive probes, directions")
    e = rf.ensemble
    mom = field_moments(e, rf.penalty)
    w, _ = eigh(mom.v0sq)
    eps = 1.0 / math.sqrt(w[0]) if eps is None else float(eps)
    nu0 = mom.nu0 if nu0 is None else float(nu0)
    p = e.p
    vinv = pd_inv_sqrt(mom.v0sq, "V0^2")
    rng = stream(seed, "omega0-geom")
    U = r * (_unit_rows(rng, probes, p) @ vinv)
    gam = _unit_rows(rng, directions, p)
    gnorm = np.sqrt(np.einsum("ki,ij,kj->k", gam, mom.v0sq, gam))
    gd = gradient_noise if gradient_noise is not None else (lambda N, u: 2.0 * (N @ u))

    def draw(rng_, size):
        N = sample_noise(e, size, rng_)
        cols = []
        for u in U:
            diff = np.asarray(gd(N, u), dtype=float).reshape(size, p)
            cols.append(diff @ gam.T / (eps * r * gnorm))
        return np.concatenate(cols, axis=1)

    T = _blocks(trials, seed, "omega0", draw)
    sd = T.std(axis=0)
    live = sd > 0
    best = 0.0
    if np.any(live):
        Z = T[:, live] / sd[live]
        # mu = lambda / sd, so omega0^2 = sd^2 * ratio / nu0^2
        ratio = np.zeros(Z.shape[1])
        for j in range(Z.shape[1]):
            ratio[j] = _logmgf_ratio(Z[:, j : j + 1], [float(l) for l in lambda_grid if l != 0], 1.0)
        best = float(np.max(ratio * sd[live] ** 2)) / nu0**2
    om = math.sqrt(max(best, 0.0))
    if floor and om < 1e-12:
        warnings.warn(f"omega0 estimate {om:.3g} degenerate; floored to 1e-12", RuntimeWarning, stacklevel=2)
        return 1e-12
    return om
