"""Command line entry point: ``concfield <command> ...``.

Exit codes: 0 on success, 1 when a computation fails (the message names the
violated condition), 2 on usage errors and unreadable inputs.  Results go to
``--out`` (written atomically) or to stdout.
"""

import argparse
import json
import sys

import numpy as np

from . import _io
from .bound import sup_bound
from .chaining import BallSpec, MultiscaleSpec, analytic_entropy, chaining_entropy, covering_ratios
from .eigenmax import COMPARE_HEADER, FRONTIER_HEADER, EnsembleSpec, PenaltySpec, compare_bounds
from .mc import RandomFieldSpec, auto_g, sample_quadform, verify_eigen_bounds, verify_field_bound
from .model import FieldModel
from .quadform import deviation_branch

BOUND_HEADER = ("x", "r0", "tau", "quantile_term", "error_term", "total_offset", "implied_c", "prob_multiplier")
QUAD_HEADER = ("x", "z_dev", "z_total", "branch", "x_c")
MC_HEADER = ("x", "empirical", "bound", "wilson_hw", "pass")

DEFAULT_FIELD_MEAN = [[10.0, 0, 0, 0], [0, 1.0, 0, 0], [0, 0, 0.5, 0], [0, 0, 0, 0.25]]


class UsageError(Exception):
    pass


def _grid(text):
    try:
        return _io.parse_grid(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _int_grid(text):
    vals = _grid(text)
    if any(v != int(v) or v < 1 for v in vals):
        raise argparse.ArgumentTypeError(f"expected positive integers, got {text!r}")
    return [int(v) for v in vals]


def _noise(text):
    kind, _, scale = text.partition(":")
    if kind not in ("gaussian", "bounded"):
        raise argparse.ArgumentTypeError(f"noise must be gaussian:<scale> or bounded:<scale>, got {text!r}")
    try:
        s = float(scale) if scale else 1.0
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad noise scale in {text!r}") from None
    if not s > 0:
        raise argparse.ArgumentTypeError("noise scale must be positive")
    return kind, s


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None


def _read_matrix(path):
    data = _read_json(path)
    if not isinstance(data, list) or not all(isinstance(r, list) for r in data):
        raise UsageError(f"{path}: matrices must be JSON arrays of arrays")
    try:
        return np.asarray(data, dtype=float)
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from None


def _mean_factory(path):
    """``--mean`` is either a matrix or ``{"diag_top": a, "diag_rest": b}`` for any p."""
    if path is None:
        return lambda p: np.diag([10.0] + [1.0] * (p - 1))
    data = _read_json(path)
    if isinstance(data, dict):
        if set(data) != {"diag_top", "diag_rest"}:
            raise UsageError(f"{path}: expected keys diag_top and diag_rest")
        top, rest = float(data["diag_top"]), float(data["diag_rest"])
        return lambda p: np.diag([top] + [rest] * (p - 1))
    mat = _read_matrix(path)

    def fixed(p):
        if mat.shape != (p, p):
            raise ValueError(f"mean matrix has shape {mat.shape} but p = {p} was requested")
        return mat

    return fixed


def build_parser():
    ap = argparse.ArgumentParser(prog="concfield", description="Suprema bounds for smooth random fields.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, fmt=True):
        p.add_argument("--out", help="output file (default: stdout)")
        if fmt:
            p.add_argument("--format", choices=("csv", "json"), default=None)

    b = sub.add_parser("bound", help="supremum bound for a field model")
    b.add_argument("--model", required=True, help="FieldModel JSON")
    b.add_argument("--x", required=True, type=_grid)
    b.add_argument("--csv", action="store_true", help="same as --format csv")
    b.add_argument("--prob-multiplier", type=float, default=5.0)
    common(b)

    q = sub.add_parser("quadform", help="quadratic-form deviation")
    qs = q.add_subparsers(dest="action", required=True)
    qz = qs.add_parser("z", help="deviation quantile z(x)")
    qz.add_argument("--b", required=True, help="matrix B as JSON")
    qz.add_argument("--g", default="auto")
    qz.add_argument("--x", required=True, type=_grid)
    qz.add_argument("--monotone-envelope", action="store_true")
    common(qz)

    c = sub.add_parser("chaining", help="chaining entropy")
    cs = c.add_subparsers(dest="action", required=True)
    cq = cs.add_parser("q", help="entropy Q of a Euclidean ball")
    cq.add_argument("--p", required=True, type=int)
    cq.add_argument("--r0", type=float, default=1.0)
    cq.add_argument("--numeric", action="store_true", help="grid-count covering ratios (p <= 3)")
    cq.add_argument("--grid", type=int, default=32)
    cq.add_argument("--k", type=int, default=6, help="levels counted numerically")
    cq.add_argument("--mu0", type=float, default=1.0, help="top scale of the multiscale grid")
    common(cq, fmt=False)

    e = sub.add_parser("eigen", help="eigenvalue bounds")
    es = e.add_subparsers(dest="action", required=True)
    ec = es.add_parser("compare", help="field bound vs Bernstein sweep")
    ec.add_argument("--mean", help="E X_1 matrix JSON or {diag_top, diag_rest}")
    ec.add_argument("--n-grid", type=_int_grid, default=[100, 400, 1600])
    ec.add_argument("--p-grid", type=_int_grid, default=[5, 20])
    ec.add_argument("--x-grid", type=_grid, default=_io.parse_grid("1..8:1"))
    ec.add_argument("--noise", type=_noise, default=("bounded", 1.0))
    ec.add_argument("--seed", type=int, default=0)
    common(ec)

    m = sub.add_parser("mc", help="Monte Carlo coverage")
    ms = m.add_subparsers(dest="action", required=True)
    for name in ("quadform", "field", "eigen"):
        mp = ms.add_parser(name)
        mp.add_argument("--trials", type=int, required=True)
        mp.add_argument("--seed", type=int, required=True)
        mp.add_argument("--x", required=True, type=_grid)
        common(mp)
        if name == "quadform":
            mp.add_argument("--b", help="matrix B as JSON (default identity)")
            mp.add_argument("--sigma", help="covariance as JSON (default identity)")
            mp.add_argument("--p", type=int, default=5)
            mp.add_argument("--g", default="auto")
        else:
            mp.add_argument("--mean", help="E X_1 matrix JSON")
            mp.add_argument("--n", type=int, default=50)
            mp.add_argument("--noise", type=_noise, default=("gaussian", 0.16) if name == "field" else ("bounded", 0.5))
    return ap


def _fmt_of(args):
    if getattr(args, "csv", False):
        return "csv"
    return args.format or ("json" if args.command == "bound" else "csv")


def _emit(args, text, extra=()):
    if args.out:
        # sidecars first; the main file appears last
        for path, body in extra:
            _io.atomic_write(path, body)
        _io.atomic_write(args.out, text)
    else:
        sys.stdout.write(text)


def _table(args, header, rows):
    if _fmt_of(args) == "csv":
        return _io.to_csv(header, rows)
    return _io.to_json([dict(zip(header, r)) for r in rows])


def _parse_g(text, B):
    if text == "auto":
        return auto_g(B)
    try:
        return float(text)
    except ValueError:
        raise UsageError(f"--g must be a number or auto, got {text!r}") from None


def cmd_bound(args):
    d = _read_json(args.model)
    if not isinstance(d, dict):
        raise UsageError(f"{args.model}: expected a JSON object")
    model = FieldModel.from_dict(d)
    reps = [sup_bound(model, x, prob_multiplier=args.prob_multiplier) for x in args.x]
    if _fmt_of(args) == "csv":
        rows = [
            (r.x, r.r0_used, r.tau, r.quantile_term, r.error_term, r.total_offset, r.implied_c, r.prob_multiplier)
            for r in reps
        ]
        text = _io.to_csv(BOUND_HEADER, rows)
    else:
        text = _io.to_json([r.as_dict() for r in reps])
    _emit(args, text)


def cmd_quadform(args):
    B = _read_matrix(args.b)
    g = _parse_g(args.g, B)
    rows = []
    for x in args.x:
        z, branch, nq, crit = deviation_branch(x, B, g, args.monotone_envelope)
        rows.append((x, nq.lamstar * z, nq.lamstar * (nq.p_app + z), branch, crit.x_c))
    _emit(args, _table(args, QUAD_HEADER, rows))


def cmd_chaining(args):
    if args.numeric:
        ball = BallSpec(args.p, args.r0, "numeric_grid", args.grid)
        spec = chaining_entropy(covering_ratios(ball, args.k), tail_dim=args.p)
    else:
        spec = analytic_entropy(args.p)
    ms = MultiscaleSpec(mu0=args.mu0)
    out = {
        "M_k": list(spec.M_k),
        "Q": spec.Q,
        "c1": spec.Q / args.p,
        "K_trunc": spec.K_trunc,
        "tail": spec.tail_bound,
        "mu0": ms.mu0,
        "multiscale_weight": ms.weight_total(),
    }
    _emit(args, _io.to_json(out))


def cmd_eigen(args):
    kind, scale = args.noise
    res = compare_bounds(
        _mean_factory(args.mean), args.x_grid, args.n_grid, args.p_grid, noise=kind, scale=scale, seed=args.seed
    )
    text = _table(args, COMPARE_HEADER, res.rows)
    front = _table(args, FRONTIER_HEADER, res.frontier)
    if args.out:
        _emit(args, text, [(_io.sidecar(args.out, "frontier"), front)])
    else:
        sys.stdout.write(text)


def _mc_rows(rep):
    return [(x, e, b, h, ok) for x, e, b, h, ok in rep.rows()]


def cmd_mc(args):
    extra = []
    if args.action == "quadform":
        B = np.eye(args.p) if args.b is None else _read_matrix(args.b)
        S = np.eye(B.shape[0]) if args.sigma is None else _read_matrix(args.sigma)
        g = _parse_g(args.g, B)
        rep = sample_quadform(B, S, args.trials, args.seed, args.x, g=g)
    else:
        mean = np.asarray(DEFAULT_FIELD_MEAN) if args.mean is None else _read_matrix(args.mean)
        kind, scale = args.noise
        e = EnsembleSpec(args.n, mean.shape[0], mean, kind, scale, args.seed)
        f = PenaltySpec.quadratic(args.n)
        if args.action == "field":
            rep = verify_field_bound(RandomFieldSpec(e, f), args.x, args.trials, args.seed)
        else:
            rep, bern = verify_eigen_bounds(e, f, args.x, args.trials, args.seed)
            if bern is not None:
                target = args.out if args.out else "-"
                if args.out:
                    extra.append((_io.sidecar(target, "bernstein"), _table(args, MC_HEADER, _mc_rows(bern))))
    _emit(args, _table(args, MC_HEADER, _mc_rows(rep)), extra)


COMMANDS = {"bound": cmd_bound, "quadform": cmd_quadform, "chaining": cmd_chaining, "eigen": cmd_eigen, "mc": cmd_mc}


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)  # exits with status 2 on usage errors
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"concfield: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"concfield: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
