"""Majorizing-measure entropy, drifted suprema and multiscale upper functions.

The entropy of a ball uses the radii ``r_k = r0 2^-k`` and the weights
``c_1 = 1/3``, ``c_k = 2^(2-k) / 3`` (k >= 2), which sum to one.  For the
Euclidean ball with Lebesgue measure the covering ratios admit the analytic
bound ``M_k = 2^((k+1) p)``; a grid-counting oracle is provided for p <= 3.
"""

from dataclasses import dataclass
import math

import numpy as np

__all__ = [
    "BallSpec",
    "ChainingSpec",
    "MultiscaleSpec",
    "chaining_weight",
    "weight_sum",
    "covering_ratios",
    "chaining_entropy",
    "analytic_entropy",
    "chaining_mgf_bound",
    "drifted_sup_logprob",
    "local_quantile_z0",
    "smooth_constant",
    "smooth_local_quantile",
    "multiscale_set",
    "upper_function_Lstar",
    "LstarResult",
    "hitting_check",
]

LOG2 = math.log(2.0)
TAIL_TOL = 1e-12


@dataclass(frozen=True)
class BallSpec:
    dim: int
    r0: float = 1.0
    measure: str = "lebesgue_euclidean"  # or "numeric_grid"
    grid: int = 64  # points per small-ball radius in numeric mode

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if not self.r0 > 0:
            raise ValueError("r0 must be positive")
        if self.measure not in ("lebesgue_euclidean", "numeric_grid"):
            raise ValueError(f"unknown measure {self.measure!r}")
        if self.measure == "numeric_grid" and self.grid < 1:
            raise ValueError("grid resolution must be positive")

    def radius(self, k):
        return self.r0 * 2.0**-k


@dataclass(frozen=True)
class ChainingSpec:
    M_k: tuple
    Q: float
    K_trunc: int
    tail_bound: float


@dataclass(frozen=True)
class MultiscaleSpec:
    mu0: float = 1.0
    n_scales: int = 64

    def __post_init__(self):
        if not self.mu0 > 0 or self.n_scales < 1:
            raise ValueError("MultiscaleSpec needs mu0 > 0 and n_scales >= 1")

    @property
    def mus(self):
        return [self.mu0 * 2.0**-k for k in range(self.n_scales)]

    def t_of_mu(self, k):
        return k

    def weight_total(self):
        return math.fsum(math.exp(-k) for k in range(self.n_scales))


def chaining_weight(k):
    if k < 1:
        raise ValueError("chaining index starts at 1")
    return 1.0 / 3.0 if k == 1 else 2.0 ** (2 - k) / 3.0


def _weight_tail(K):
    # sum_{k > K} c_k for K >= 1
    return (4.0 / 3.0) * 2.0**-K


def weight_sum(K):
    """Partial sum of the chaining weights up to K plus the closed-form remainder."""
    return math.fsum(chaining_weight(k) for k in range(1, K + 1)) + _weight_tail(K)


def _analytic_tail(K, p):
    # sum_{k > K} c_k log(2 M_k) with log(2 M_k) = log 2 (1 + (k + 1) p)
    s0 = 2.0**-K  # sum_{k>K} 2^-k
    s1 = (K + 2) * 2.0**-K  # sum_{k>K} k 2^-k
    return (4.0 / 3.0) * LOG2 * ((1.0 + p) * s0 + p * s1)


def _numeric_ratios(p, r0, radii, grid):
    """Grid-count estimate of max_v vol(ball r0) / vol(B(v, r_k) ∩ ball r0) for each radius.

    Volumes are cell counts on midpoint grids: the big ball on spacing
    r0 / grid, the small ball on spacing r_k / grid anchored at the centre v.
    Candidate centres are the origin, the axis poles and a diagonal boundary
    point.
    """
    ax = (np.arange(-grid, grid) + 0.5) / grid
    unit = np.stack([m.ravel() for m in np.meshgrid(*([ax] * p), indexing="ij")], axis=1)
    unit = unit[np.sum(unit**2, axis=1) <= 1.0]
    big = unit.shape[0] * (r0 / grid) ** p
    cands = [np.zeros(p)]
    for j in range(p):
        e = np.zeros(p)
        e[j] = r0
        cands.extend([e, -e])
    cands.append(np.full(p, r0 / math.sqrt(p)))
    out = []
    for rk in radii:
        pts_scale = unit * rk
        worst = 0.0
        for c in cands:
            inside = np.count_nonzero(np.sum((c + pts_scale) ** 2, axis=1) <= r0 * r0)
            worst = max(worst, big / (inside * (rk / grid) ** p))
        out.append(float(worst))
    return out


def covering_ratios(ball, K):
    """Covering ratios ``M_k`` for k = 1..K."""
    if K < 1:
        raise ValueError("K must be at least 1")
    p = ball.dim
    if ball.measure == "lebesgue_euclidean":
        # overflows to inf past the float range; analytic_entropy works in logs
        return [2.0 ** ((k + 1) * p) if (k + 1) * p < 1024 else math.inf for k in range(1, K + 1)]
    if p > 3:
        raise ValueError("grid oracle limited to p <= 3")
    return _numeric_ratios(p, ball.r0, [ball.radius(k) for k in range(1, K + 1)], ball.grid)


def _entropy(M, logs, tail_dim):
    terms = []
    K = 0
    for k, lg in enumerate(logs, start=1):
        term = chaining_weight(k) * lg
        terms.append(term)
        K = k
        if k > 1 and term < TAIL_TOL and tail_dim is None:
            break
    if tail_dim is None:
        tail = _weight_tail(K) * logs[K - 1]
    else:
        tail = _analytic_tail(K, tail_dim)
    return ChainingSpec(M_k=tuple(M), Q=math.fsum(terms) + tail, K_trunc=K, tail_bound=tail)


def chaining_entropy(M_ks, tail_dim=None):
    """Entropy ``Q = sum_k c_k log(2 M_k)``.

    Terms past ``len(M_ks)`` are filled with the analytic Euclidean-ball
    family in dimension ``tail_dim``; with ``tail_dim=None`` the last ratio is
    carried forward, which is exact for constant sequences.
    """
    M = [float(m) for m in M_ks]
    if not M:
        raise ValueError("empty covering-ratio sequence")
    if any(m < 1.0 for m in M):
        raise ValueError("covering ratios must be >= 1")
    return _entropy(M, [math.log(2.0 * m) for m in M], tail_dim)


def analytic_entropy(p, K=None):
    """Entropy of the Euclidean ball with the analytic ratios; equals log 2 (1 + 10 p / 3)."""
    if K is None:
        # closed-form tail below TAIL_TOL
        K = 1
        while _analytic_tail(K, p) >= TAIL_TOL:
            K += 1
    # log(2 M_k) = log 2 (1 + (k + 1) p), exact even where M_k overflows
    logs = [LOG2 * (1 + (k + 1) * p) for k in range(1, K + 1)]
    return _entropy(covering_ratios(BallSpec(p), K), logs, p)


def chaining_mgf_bound(lam, r0, nu0, Q, g0):
    """Log-MGF bound ``lam^2 / 2 + Q`` for ``sup |U(v) - U(v0)| / (3 nu0 r0)``."""
    if not r0 > 0 or not nu0 > 0:
        raise ValueError("r0 and nu0 must be positive")
    if lam > g0:
        raise ValueError(f"lambda = {lam} outside MGF range (g0 = {g0})")
    return lam * lam / 2.0 + Q


def drifted_sup_logprob(rho, z, g0, Q):
    """Log-probability bound for the quadratically drifted supremum exceeding z."""
    if not rho > 0 or not z > 1:
        raise ValueError("need rho > 0 and z > 1")
    if rho * (z - 1.0) < 2.0:
        raise ValueError(f"need rho (z - 1) >= 2, got {rho * (z - 1.0):.6g}")
    base = math.log(4.0 * z) + Q
    if math.sqrt(2.0 * rho * z) <= g0:
        return -rho * (z - 1.0) + base
    return -g0 * math.sqrt(rho * (z - 1.0)) + g0 * g0 / 2.0 + base


def local_quantile_z0(x, Q, g0):
    if x < 0 or x + Q < 4.0:
        raise ValueError(f"need x >= 0 and x + Q >= 4 (x = {x}, Q = {Q})")
    if g0 < 2.0:
        raise ValueError(f"need g0 >= 2, got {g0}")
    s = math.sqrt(x + Q)
    if 1.0 + s <= g0:
        return (1.0 + s) ** 2
    return 1.0 + (2.0 * (x + Q) / g0 + g0) ** 2


def smooth_constant(p):
    # entropy per dimension of the analytic Euclidean ball
    return (10.0 / 3.0) * LOG2 + LOG2 / p


def smooth_local_quantile(x, p, g0):
    return local_quantile_z0(x, smooth_constant(p) * p, g0)


def multiscale_set(r, x, Q, g_of_r, nu0, ms):
    """Admitted scales ``(mu_k, k)`` with ``1 + sqrt(x + Q + k) <= nu0 g(r) / mu_k``."""
    if not r > 0 or x < 0 or not nu0 > 0 or g_of_r < 0:
        raise ValueError("multiscale_set needs positive r, nu0 and non-negative x, g(r)")
    out = []
    for k, mu in enumerate(ms.mus):
        t = ms.t_of_mu(k)
        if 1.0 + math.sqrt(x + Q + t) <= nu0 * g_of_r / mu:
            out.append((mu, t))
    return out


@dataclass(frozen=True)
class LstarResult:
    value: float
    mu: float
    mu_continuous: float


def upper_function_Lstar(Mval, r, x, ms_admitted, nu0):
    if not ms_admitted:
        raise ValueError("no admissible scale")
    best = None
    for mu, t in ms_admitted:
        val = mu * Mval / (3.0 * nu0) - 0.5 * mu * mu * r * r - 2.0 * t
        if best is None or val > best[0]:
            best = (val, mu)
    return LstarResult(value=best[0], mu=best[1], mu_continuous=Mval / (3.0 * nu0 * r * r))


def hitting_check(Lstar_min, x, Q):
    """Whether ``L*`` clears ``2 (x + Q)``; the hitting probability is then <= 2 e^-x."""
    if x + Q < 2.5:
        raise ValueError(f"need x + Q >= 2.5, got {x + Q}")
    margin = Lstar_min - 2.0 * (x + Q)
    return margin >= 0.0, margin
