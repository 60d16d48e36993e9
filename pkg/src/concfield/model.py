"""Validated parameter records for the smooth random field setting.

A :class:`FieldModel` carries the curvature matrix ``D0sq`` (minus the Hessian
of the mean function at its maximiser), the variance dominator ``V0sq``, the
global curvature floor ``Dstar`` and the scalar constants of the exponential
moment conditions.  Construction only rejects malformed input (wrong shapes,
non-symmetric matrices); the matrix-order hypotheses are reported by
:func:`validate_model` so that callers can inspect an invalid model.
"""

from dataclasses import dataclass, field
import json
import math

import numpy as np

from ._linalg import ORDER_TOL, as_symmetric, lam_max, lam_min, order_margin, pd_inv_sqrt

__all__ = [
    "FieldModel",
    "Check",
    "ValidationReport",
    "EffDim",
    "validate_model",
    "effective_dims",
    "curvature_rate",
    "minimal_aa",
]

_JSON_KEYS = ("dim", "d0sq", "v0sq", "dstar", "nu0", "g", "eps", "omega0", "delta0", "aa", "r0")


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FieldModel:
    dim: int
    d0sq: np.ndarray
    v0sq: np.ndarray
    dstar: np.ndarray
    nu0: float
    g: float
    eps: float
    omega0: float
    delta0: float
    aa: float
    r0: float

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim!r}")
        object.__setattr__(self, "dim", int(self.dim))
        for name in ("d0sq", "v0sq", "dstar"):
            m = as_symmetric(getattr(self, name), name)
            if m.shape != (self.dim, self.dim):
                raise ValueError(
                    f"dimension mismatch: {name} has shape {m.shape}, expected ({self.dim}, {self.dim})"
                )
            object.__setattr__(self, name, _frozen(m))
        for name in ("nu0", "g", "eps", "omega0", "delta0", "aa", "r0"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, v)

    @property
    def p(self):
        return self.dim

    def to_dict(self):
        return {
            "dim": self.dim,
            "d0sq": self.d0sq.tolist(),
            "v0sq": self.v0sq.tolist(),
            "dstar": self.dstar.tolist(),
            "nu0": self.nu0,
            "g": self.g,
            "eps": self.eps,
            "omega0": self.omega0,
            "delta0": self.delta0,
            "aa": self.aa,
            "r0": self.r0,
        }

    @classmethod
    def from_dict(cls, d):
        keys = set(d)
        if keys != set(_JSON_KEYS):
            missing = sorted(set(_JSON_KEYS) - keys)
            extra = sorted(keys - set(_JSON_KEYS))
            raise ValueError(f"FieldModel JSON keys mismatch (missing={missing}, unexpected={extra})")
        return cls(**{k: d[k] for k in _JSON_KEYS})

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def replace(self, **changes):
        d = {k: getattr(self, k) for k in _JSON_KEYS}
        d.update(changes)
        return FieldModel(**d)


@dataclass(frozen=True)
class Check:
    name: str
    margin: float
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple = field(default_factory=tuple)

    @property
    def valid(self):
        return all(c.passed for c in self.checks)

    def failed(self):
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def validate_model(m):
    """Check every hypothesis on `m` and report its margin.

    Matrix inequalities ``A >= B`` are reported as ``lambda_min(A - B)``;
    scalar ranges as the signed distance to the boundary.  A check passes when
    its margin is at least ``-1e-10``, except positive definiteness, which
    needs a strictly positive smallest eigenvalue.
    """
    p = m.dim
    eye = np.eye(p)
    checks = []

    def add(name, margin, detail, strict=False):
        passed = margin > 0 if strict else margin >= -ORDER_TOL
        checks.append(Check(name, float(margin), bool(passed), detail))

    add("d0sq_pd", lam_min(m.d0sq), "lambda_min(D0^2) > 0", strict=True)
    add("v0sq_pd", lam_min(m.v0sq), "lambda_min(V0^2) > 0", strict=True)
    add("dstar_pd", lam_min(m.dstar), "lambda_min(D*) > 0", strict=True)
    if m.eps > 0:
        add("v0sq_ge_eps", order_margin(m.v0sq, eye / m.eps**2), "V0^2 - eps^-2 I >= 0")
    else:
        add("v0sq_ge_eps", -math.inf, "V0^2 - eps^-2 I >= 0")
    add("aa_dominates", order_margin(m.aa**2 * m.d0sq, m.v0sq), "aa^2 D0^2 - V0^2 >= 0")
    add("nu0_ge_1", m.nu0 - 1.0, "nu0 >= 1")
    add("eps_pos", m.eps, "eps > 0", strict=True)
    add("eps_le_half", 0.5 - m.eps, "eps < 1/2")
    for name in ("g", "omega0", "delta0", "r0"):
        add(f"{name}_pos", getattr(m, name), f"{name} > 0", strict=True)
    return ValidationReport(tuple(checks))


@dataclass(frozen=True)
class EffDim:
    B: np.ndarray
    p_eff: float
    v_eff: float
    lam0: float


def effective_dims(d0sq, v0sq):
    """Effective dimensions of ``B = D0^-1 V0^2 D0^-1``.

    Returns the trace ``p_eff``, ``v_eff = sqrt(2 tr B^2)`` and the top
    eigenvalue ``lam0``.  ``D0^-1`` is the symmetric inverse square root of
    ``d0sq``, so ``B`` is symmetric by construction.
    """
    d0sq = as_symmetric(d0sq, "d0sq")
    v0sq = as_symmetric(v0sq, "v0sq")
    if d0sq.shape != v0sq.shape:
        raise ValueError(f"dimension mismatch: {d0sq.shape} vs {v0sq.shape}")
    s = pd_inv_sqrt(d0sq, "curvature")
    b = s @ v0sq @ s
    b = 0.5 * (b + b.T)
    w = np.linalg.eigvalsh(b)
    return EffDim(
        B=_frozen(b),
        p_eff=float(np.sum(w)),
        v_eff=math.sqrt(2.0 * float(np.sum(w**2))),
        lam0=float(w[-1]),
    )


def curvature_rate(dstar, v0sq):
    """``lambda_min(D*) / lambda_max(V0^2)``, the global quadratic decay rate."""
    dstar = as_symmetric(dstar, "dstar")
    v0sq = as_symmetric(v0sq, "v0sq")
    return lam_min(dstar) / lam_max(v0sq)


def minimal_aa(d0sq, v0sq):
    # smallest aa with aa^2 D0^2 >= V0^2 is sqrt(lambda_max(B))
    return math.sqrt(effective_dims(d0sq, v0sq).lam0)
