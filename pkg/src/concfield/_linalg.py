"""Small dense symmetric-matrix helpers shared across modules."""

import numpy as np

SYM_RTOL = 1e-12
ORDER_TOL = 1e-10


def as_symmetric(a, name="matrix"):
    """Return `a` as a float64 symmetric array, raising ValueError otherwise."""
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if np.max(np.abs(a - a.T), initial=0.0) > SYM_RTOL * scale:
        raise ValueError(f"{name} is not symmetric")
    return 0.5 * (a + a.T)


def eigh(a):
    w, v = np.linalg.eigh(0.5 * (a + a.T))
    return w, v


def lam_min(a):
    return float(np.linalg.eigvalsh(0.5 * (a + a.T))[0])


def lam_max(a):
    return float(np.linalg.eigvalsh(0.5 * (a + a.T))[-1])


def order_margin(a, b):
    """Smallest eigenvalue of a - b; a >= b in the Loewner order iff this is >= -ORDER_TOL."""
    return lam_min(a - b)


def psd_sqrt(a):
    w, v = eigh(a)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


def pd_inv_sqrt(a, what="matrix"):
    w, v = eigh(a)
    if w[0] <= 1e-14 * max(1.0, abs(w[-1])):
        raise ValueError(f"{what} singular")
    return (v / np.sqrt(w)) @ v.T


def pd_inv(a, what="matrix"):
    w, v = eigh(a)
    if w[0] <= 1e-14 * max(1.0, abs(w[-1])):
        raise ValueError(f"{what} singular")
    return (v / w) @ v.T
