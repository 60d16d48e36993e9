"""Largest-eigenvalue concentration through a penalized quadratic field.

For a random symmetric ``A`` the field ``G(A, theta) = theta' A theta -
f(|theta|^2)`` has ``sup_theta G = f*(lambda_max(A))``, so a bound on the
supremum of ``G`` turns into a bound on the top eigenvalue.  ``A`` is a sum of
``n`` i.i.d. summands ``X_k = E X_1 + N_k`` with real symmetric noise ``N_k``.

Two noise models are supported:

* ``gaussian``: ``N = s (Z + Z') / sqrt(2)``, so off-diagonal entries have
  variance ``s^2`` and the diagonal ``2 s^2``;
* ``bounded``: ``N = (C + C') / 2`` with ``C_ij = clip(s Z_ij, -s, s)``.

In both cases ``Cov(N) `` has the orthogonally invariant second-moment
structure ``Var(N u) = v_off (|u|^2 I + u u')``.
"""

from dataclasses import dataclass
import math

import numpy as np

from ._linalg import as_symmetric, lam_max, lam_min
from .bound import BoundConditionError, sup_bound, min_global_radius, calibrate_delta0
from .model import FieldModel, effective_dims, minimal_aa, validate_model
from .quadform import normalize

__all__ = [
    "PenaltySpec",
    "EnsembleSpec",
    "FieldMoments",
    "EigenBound",
    "CompareResult",
    "legendre",
    "field_sup",
    "stationary_radius",
    "field_moments",
    "field_model_from_ensemble",
    "eigen_bound",
    "bernstein_threshold",
    "bernstein_bound",
    "compare_bounds",
    "clipped_variance",
    "sample_noise",
    "noise_v_off",
    "top_eigvec",
]

GAP_TOL = 1e-8
COMPARE_HEADER = ("n", "p", "x", "paper_thresh", "bernstein_thresh_mapped", "ratio", "winner")
FRONTIER_HEADER = ("n", "p", "p_over_n", "valid_cells", "field_cells", "x_field_min", "x_field_max")


@dataclass(frozen=True)
class PenaltySpec:
    """Penalty ``f`` on ``r = |theta|^2``; ``quadratic`` is ``f(r) = n r^2``."""

    kind: str
    n: float = 0.0
    f: object = None
    fp: object = None
    fpp: object = None

    def __post_init__(self):
        if self.kind == "quadratic":
            if not self.n > 0:
                raise ValueError("quadratic penalty needs n > 0")
        elif self.kind == "custom":
            if not all(callable(h) for h in (self.f, self.fp, self.fpp)):
                raise ValueError("custom penalty needs callables f, fp, fpp")
        else:
            raise ValueError(f"unknown penalty kind {self.kind!r}")

    @classmethod
    def quadratic(cls, n):
        return cls("quadratic", n=float(n))

    @classmethod
    def custom(cls, f, fp, fpp):
        return cls("custom", f=f, fp=fp, fpp=fpp)

    def value(self, r):
        return self.n * r * r if self.kind == "quadratic" else float(self.f(r))

    def d1(self, r):
        return 2.0 * self.n * r if self.kind == "quadratic" else float(self.fp(r))

    def d2(self, r):
        return 2.0 * self.n if self.kind == "quadratic" else float(self.fpp(r))


@dataclass(frozen=True)
class EnsembleSpec:
    n: int
    p: int
    mean_summand: np.ndarray
    noise: str = "gaussian"
    scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1 or int(self.p) != self.p or self.p < 1:
            raise ValueError("n and p must be positive integers")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "p", int(self.p))
        m = as_symmetric(self.mean_summand, "mean_summand")
        if m.shape != (self.p, self.p):
            raise ValueError(f"dimension mismatch: mean_summand has shape {m.shape}, expected p = {self.p}")
        if lam_min(m) < -1e-12 * max(1.0, lam_max(m)):
            raise ValueError("mean_summand must be positive semidefinite")
        m.setflags(write=False)
        object.__setattr__(self, "mean_summand", m)
        if self.noise not in ("gaussian", "bounded"):
            raise ValueError(f"unknown noise model {self.noise!r}")
        if not self.scale >= 0 or not math.isfinite(self.scale):
            raise ValueError("noise scale must be finite and non-negative")
        object.__setattr__(self, "scale", float(self.scale))

    @property
    def mean_A(self):
        return self.n * self.mean_summand

    def with_n(self, n):
        return EnsembleSpec(n, self.p, self.mean_summand, self.noise, self.scale, self.seed)


def clipped_variance(scale):
    """``Var(clip(s Z, -s, s))`` for standard normal ``Z``."""
    phi1 = math.exp(-0.5) / math.sqrt(2.0 * math.pi)
    inner = math.erf(1.0 / math.sqrt(2.0))  # P(|Z| < 1)
    return scale * scale * (inner - 2.0 * phi1 + (1.0 - inner))


def noise_v_off(e):
    """Off-diagonal entry variance ``v_off`` of one noise summand."""
    if e.noise == "gaussian":
        return e.scale**2
    return clipped_variance(e.scale) / 2.0


def _nu0_analytic(e):
    # sub-Gaussian proxy over variance; s^2 / sigma_c^2 for every entry of bounded noise
    if e.noise == "gaussian" or e.scale == 0:
        return 1.0
    return e.scale / math.sqrt(clipped_variance(e.scale))


def sample_noise(e, size, rng):
    """``size`` draws of ``A - E A``, shape ``(size, p, p)``."""
    p, s = e.p, e.scale
    if e.noise == "gaussian":
        z = rng.standard_normal((size, p, p))
        return (s * math.sqrt(e.n / 2.0)) * (z + np.swapaxes(z, 1, 2))
    acc = np.zeros((size, p, p))
    for _ in range(e.n):
        c = np.clip(s * rng.standard_normal((size, p, p)), -s, s)
        acc += 0.5 * (c + np.swapaxes(c, 1, 2))
    return acc


# --- penalty calculus ------------------------------------------------------


def _solve_fp(f, y):
    """Root of ``f'(r) = y`` on ``r >= 0`` by safeguarded Newton."""
    f0 = f.d1(0.0)
    tol = 1e-12 * max(1.0, abs(y))
    if y < f0 - tol:
        raise ValueError(f"y = {y} outside the range of f' (f'(0) = {f0})")
    if y <= f0 + tol:
        return 0.0
    lo, hi = 0.0, 1.0
    while f.d1(hi) < y:
        lo, hi = hi, 2.0 * hi
        if hi > 1e300:
            raise ValueError(f"y = {y} outside the range of f'")
    r = 0.5 * (lo + hi)
    for _ in range(500):
        res = f.d1(r) - y
        if abs(res) <= 1e-13 * max(1.0, abs(y)):
            break
        if res > 0:
            hi = r
        else:
            lo = r
        d = f.d2(r)
        step = r - res / d if d > 0 else math.nan
        r = step if lo < step < hi else 0.5 * (lo + hi)
        if hi - lo <= 4e-16 * max(1.0, hi):
            break
    return r


def legendre(f, y):
    """Convex conjugate ``f*(y) = sup_r (y r - f(r))`` for ``y >= f'(0)``."""
    if f.kind == "quadratic":
        if y < 0:
            raise ValueError(f"y = {y} outside the range of f' (f'(0) = 0)")
        return y * y / (4.0 * f.n)
    r = _solve_fp(f, y)
    return y * r - f.value(r)


def field_sup(lam_max_A, f):
    """``sup_theta theta' A theta - f(|theta|^2)`` given ``lambda_max(A)``."""
    lam_max_A = np.asarray(lam_max_A, dtype=float)
    if f.kind == "quadratic":
        return np.where(lam_max_A > 0, lam_max_A**2 / (4.0 * f.n), 0.0)
    f0 = f.d1(0.0)
    out = [legendre(f, y) if y >= f0 else -f.value(0.0) for y in np.atleast_1d(lam_max_A)]
    return np.asarray(out).reshape(lam_max_A.shape)


def stationary_radius(f, lam_max_mean):
    """``r* > 0`` with ``f'(r*) = lambda_max(E A)``."""
    if f.kind == "quadratic":
        if not lam_max_mean > 0:
            raise ValueError("lambda_max(E A) outside the range of f' on r > 0")
        return lam_max_mean / (2.0 * f.n)
    if not lam_max_mean > f.d1(0.0):
        raise ValueError("lambda_max(E A) outside the range of f' on r > 0")
    return _solve_fp(f, lam_max_mean)


# --- field model -----------------------------------------------------------


def top_eigvec(mat):
    w, v = np.linalg.eigh(mat)
    if len(w) > 1 and w[-1] - w[-2] <= GAP_TOL:
        raise ValueError(f"top eigenvector ill-defined (eigengap {w[-1] - w[-2]:.3g})")
    u = v[:, -1]
    # deterministic sign
    if u[np.argmax(np.abs(u))] < 0:
        u = -u
    return float(w[-1]), u


@dataclass(frozen=True)
class FieldMoments:
    d0sq: np.ndarray
    v0sq: np.ndarray
    theta_star: np.ndarray
    r_star: float
    e_top: np.ndarray
    lam_mean_A: float
    v_off: float
    nu0: float


def field_moments(e, f):
    """Curvature ``D0^2``, variance ``V0^2 = Var(grad zeta(theta*))`` and ``theta*``."""
    lam1, u = top_eigvec(e.mean_summand)
    lam_A = e.n * lam1
    r = stationary_radius(f, lam_A)
    fpp = f.d2(r)
    if not fpp > 0:
        raise ValueError("f''(r*) must be positive")
    p = e.p
    eye = np.eye(p)
    uu = np.outer(u, u)
    d0sq = 2.0 * lam_A * eye - 2.0 * e.mean_A + 4.0 * fpp * r * uu
    v_off = noise_v_off(e)
    # grad zeta(theta*) = 2 (A - E A) theta*
    v0sq = 4.0 * r * e.n * v_off * (eye + uu)
    return FieldMoments(
        d0sq=0.5 * (d0sq + d0sq.T),
        v0sq=v0sq,
        theta_star=math.sqrt(r) * u,
        r_star=r,
        e_top=u,
        lam_mean_A=lam_A,
        v_off=v_off,
        nu0=_nu0_analytic(e),
    )


def _mean_field(e, f):
    ea = e.mean_A

    def M(theta):
        return float(theta @ ea @ theta) - f.value(float(theta @ theta))

    return M


def field_model_from_ensemble(e, f, nu0_est=None, x=1.0, x_max=None, samples=2000, radii=8):
    """Package the eigenvalue field as a :class:`FieldModel`.

    ``eps = lambda_min(V0^2)^-1/2`` and ``omega0`` follow from the second
    moments of the noise; ``delta0`` is calibrated from the mean function on
    radii up to the global exit radius at ``x_max`` (default ``x``).  ``r0`` is
    the global exit radius at ``x``.
    """
    if e.scale <= 0:
        raise ValueError("noise scale must be positive for a non-degenerate field")
    mom = field_moments(e, f)
    nu0 = mom.nu0 if nu0_est is None else max(1.0, float(nu0_est))
    lmin_v = lam_min(mom.v0sq)
    eps = 1.0 / math.sqrt(lmin_v)
    # sub-Gaussian proxy of gamma' 2 (A - E A) u is at most 8 n v_mgf |gamma|^2 |u|^2
    v_mgf = nu0**2 * mom.v_off
    omega0 = math.sqrt(8.0 * e.n * v_mgf) * eps / nu0
    eff = effective_dims(mom.d0sq, mom.v0sq)
    p_app = normalize(eff.B, 1.0).p_app
    base = FieldModel(
        dim=e.p,
        d0sq=mom.d0sq,
        v0sq=mom.v0sq,
        dstar=mom.d0sq,
        nu0=nu0,
        g=10.0 * math.sqrt(p_app),
        eps=eps,
        omega0=omega0,
        delta0=1.0,
        aa=minimal_aa(mom.d0sq, mom.v0sq),
        r0=1.0,
    )
    r0 = min_global_radius(base, x)
    r_top = min_global_radius(base, x if x_max is None else max(x, x_max))
    M = _mean_field(e, f)
    delta0 = max(
        calibrate_delta0(M, base, r_top * (k + 1) / radii, samples, theta_star=mom.theta_star, seed=e.seed + k)
        for k in range(radii)
    )
    return base.replace(delta0=max(delta0, 1e-12), r0=r0)


# --- eigenvalue bounds -----------------------------------------------------


@dataclass(frozen=True)
class EigenBound:
    x: float
    threshold: float
    half_trace: float
    sqrt_term: float
    c_term: float
    implied_c: float
    total_offset: float
    v0_theta: float
    nu0: float
    stated_multiplier: float
    bound_multiplier: float
    total_multiplier: float

    @property
    def failure_probability(self):
        return self.total_multiplier * math.exp(-self.x)


def eigen_bound(e, f, x, model=None):
    """Threshold for ``f*(lambda_max(A)) - f*(lambda_max(E A))`` at level ``x``.

    ``threshold = lam0 p / 2 + k sqrt(x) |V0 theta*| + c lam0 (v sqrt(x) + x)``
    where ``c`` is the implied constant of :func:`sup_bound` and
    ``k = max(1, nu0 / sqrt(2))`` covers the fluctuation of ``zeta(theta*)``.
    The event fails with probability at most ``total_multiplier e^-x``.
    """
    if not x > 0:
        raise ValueError("eigen_bound needs x > 0")
    mom = field_moments(e, f)
    if model is None:
        model = field_model_from_ensemble(e, f, x=x)
    rep = sup_bound(model, x)
    v0_theta = math.sqrt(float(mom.theta_star @ model.v0sq @ mom.theta_star))
    k = max(1.0, model.nu0 / math.sqrt(2.0))
    sqrt_term = k * math.sqrt(x) * v0_theta
    half_trace = rep.lam0 * rep.p_norm / 2.0
    c_term = rep.total_offset - half_trace
    extra = math.exp(model.nu0**2 / 2.0)
    return EigenBound(
        x=float(x),
        threshold=rep.total_offset + sqrt_term,
        half_trace=half_trace,
        sqrt_term=sqrt_term,
        c_term=c_term,
        implied_c=rep.implied_c,
        total_offset=rep.total_offset,
        v0_theta=v0_theta,
        nu0=model.nu0,
        stated_multiplier=1.0 + extra,
        bound_multiplier=rep.prob_multiplier,
        total_multiplier=rep.prob_multiplier + extra,
    )


def bernstein_threshold(n, p, norm, x):
    """``sqrt(2 (x + log p)) sigma`` with ``sigma^2 = n |B^2 + Var(X_1)| / 2``."""
    if n < 1 or p < 1 or norm < 0 or x < 0:
        raise ValueError("bernstein_threshold needs n, p >= 1 and norm, x >= 0")
    sigma = math.sqrt(n * norm / 2.0)
    return math.sqrt(2.0 * (x + math.log(p))) * sigma


def _bounded_norm(e):
    # N^2 <= (s p)^2 I since |N_ij| <= s; E N^2 = (p + 1) v_off I
    b2 = (e.scale * e.p) ** 2
    return b2 + (e.p + 1) * noise_v_off(e)


def bernstein_bound(e, x):
    """Threshold on ``lambda_max(A - E A)`` exceeded with probability at most ``e^-x``."""
    if e.noise != "bounded":
        raise ValueError("bernstein bound requires X_k^2 <= B^2 (bounded noise)")
    return bernstein_threshold(e.n, e.p, _bounded_norm(e), x)


@dataclass(frozen=True)
class CompareResult:
    rows: list
    frontier: list


def compare_bounds(mean, x_grid, n_grid, p_grid, noise="bounded", scale=1.0, seed=0, penalty=None):
    """Sweep the field bound against the Bernstein bound on ``lambda_max^2(A) - lambda_max^2(E A)``.

    ``mean`` is a callable ``p -> E X_1`` or a fixed matrix.  ``penalty`` maps
    ``n`` to a :class:`PenaltySpec` (default quadratic).  The field threshold
    is mapped as ``4 n T`` (quadratic conjugate) and the Bernstein threshold
    ``t`` as ``(lambda_max(E A) + t)^2 - lambda_max(E A)^2``.  Cells where the
    field bound's hypotheses fail are marked ``invalid``.
    """
    if penalty is None:
        penalty = PenaltySpec.quadratic
    xs = sorted(float(x) for x in x_grid)
    rows, frontier = [], []
    for n in n_grid:
        for p in p_grid:
            mat = mean(p) if callable(mean) else np.asarray(mean, dtype=float)
            e = EnsembleSpec(n, p, mat, noise, scale, seed)
            f = penalty(n)
            lam_A = e.n * top_eigvec(e.mean_summand)[0]
            try:
                model = field_model_from_ensemble(e, f, x=xs[0], x_max=xs[-1])
                model_ok = validate_model(model).valid
            except (ValueError, BoundConditionError):
                model, model_ok = None, False
            wins, valid = [], 0
            for x in xs:
                t = bernstein_bound(e, x)
                bern = (lam_A + t) ** 2 - lam_A**2
                field_t, winner = math.nan, "invalid"
                if model_ok:
                    try:
                        eb = eigen_bound(e, f, x, model=model.replace(r0=min_global_radius(model, x)))
                        field_t = _conjugate_scale(f, lam_A, eb.threshold)
                        winner = "paper" if field_t < bern else "bernstein"
                    except (ValueError, BoundConditionError):
                        pass
                if winner != "invalid":
                    valid += 1
                if winner == "paper":
                    wins.append(x)
                rows.append((n, p, x, field_t, bern, field_t / bern, winner))
            frontier.append(
                (n, p, p / n, valid, len(wins), min(wins) if wins else math.nan, max(wins) if wins else math.nan)
            )
    return CompareResult(rows=rows, frontier=frontier)


def _conjugate_scale(f, lam_A, T):
    # f*(y) = y^2 / (4n) for the quadratic penalty
    if f.kind != "quadratic":
        raise ValueError("mapping to lambda_max^2 needs the quadratic penalty")
    return 4.0 * f.n * T
