import math

import numpy as np
import pytest
from hypothesis import strategies as st

from concfield.model import FieldModel


def spd(draw, p, lo=0.5, hi=5.0):
    """Random SPD matrix with eigenvalues in [lo, hi]."""
    a = np.array(draw(st.lists(st.floats(-1, 1), min_size=p * p, max_size=p * p))).reshape(p, p)
    q, _ = np.linalg.qr(a + 3 * np.eye(p))
    w = np.array(draw(st.lists(st.floats(lo, hi), min_size=p, max_size=p)))
    m = (q * w) @ q.T
    return 0.5 * (m + m.T)


@st.composite
def spd_matrix(draw, p=None, lo=0.5, hi=5.0):
    if p is None:
        p = draw(st.integers(1, 4))
    return spd(draw, p, lo, hi)


@pytest.fixture
def tau_model():
    # eps = 0.05, nu0 = omega0 = 1, delta0 = 0.5, aa^2 = 2, p = 4
    eye = np.eye(4)
    return FieldModel(
        dim=4,
        d0sq=400.0 * eye,
        v0sq=400.0 * eye,
        dstar=400.0 * eye,
        nu0=1.0,
        g=20.0,
        eps=0.05,
        omega0=1.0,
        delta0=0.5,
        aa=np.sqrt(2.0),
        r0=1.0,
    )


def zoom_max(fun, centre, half, levels=14, pts=21, shrink=4.0):
    """Brute-force maximum of ``fun`` on nested cubic grids around the running best point."""
    p = len(centre)
    best_x, best = np.asarray(centre, dtype=float), -math.inf
    for _ in range(levels):
        ax = np.linspace(-half, half, pts)
        mesh = np.stack([m.ravel() for m in np.meshgrid(*([ax] * p), indexing="ij")], axis=1) + best_x
        vals = fun(mesh)
        i = int(np.argmax(vals))
        if vals[i] > best:
            best, best_x = float(vals[i]), mesh[i]
        half /= shrink
    return best


# one line per acceptance criterion, printed after the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
