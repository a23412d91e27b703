"""Command-line drivers.

Exit codes: 0 success, 1 configuration error (including bad flags),
2 numerical failure, 3 bound violation under ``--assert-bounds``.
Floats are printed with ``repr`` (shortest round-trip decimal), so the same
argv always produces the same bytes.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from .experiments import (
    DEFAULT_FIRST_INDEX,
    DEFAULT_LAMBDAS,
    DEFAULT_STEPS,
    PerturbedProvider,
    default_filename,
    draw_well_conditioned,
    emit_table,
    random_symmetric_gaussian,
    table1,
    table2,
)
from .geodesic import TimeGrid, builtin_landmark_problem, outer_minimize, shoot
from .rng import SeededRng, derive_seed
from .sr1 import SkipPolicy
from .tracker import MatrixOracle, TrackReport, inverse_oracle, random_direction_oracle, secant_oracle, track
from .uli import Window, sequence_uli_profile

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_BOUND = 3

# pairwise proposition checks are quadratic in the step count
PROPOSITION_CHECK_LIMIT = 500


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    """Argument parser that reports usage errors with exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _fmt(v) -> str:
    if v is None:
        return "nan"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _emit(text: str, out: str | None):
    if out is None:
        sys.stdout.write(text)
        return
    try:
        Path(out).write_text(text)
    except OSError as exc:
        raise ConfigError(f"cannot write {out}: {exc}") from exc


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Shared flag groups
# ---------------------------------------------------------------------------

def _add_common(p, *, dim=True, lam=True, steps=True, seed=True, c_min=True):
    if dim:
        p.add_argument("--dim", type=int, default=10, help="dimension d (default 10)")
    if lam:
        p.add_argument("--lambda", dest="lam", type=float, default=0.5,
                       help="perturbation decay rate in (0, 1) (default 0.5)")
    if steps:
        p.add_argument("--steps", type=int, default=50, help="number of SR1 updates (default 50)")
    if seed:
        p.add_argument("--seed", type=int, default=0, help="base seed for all random draws (default 0)")
    if c_min:
        p.add_argument("--c-min", type=float, default=1e-8,
                       help="skip updates whose curvature cosine is below this (default 1e-8)")
    p.add_argument("--output", choices=("csv", "json"), default=None,
                   help="output format; without it a one-line summary is printed where applicable")
    p.add_argument("--out", default=None, help="write output to this path instead of standard output")


def _add_tracking(p):
    p.add_argument("--window", type=int, default=None,
                   help="window m for the whole-matrix bound (default d)")
    p.add_argument("--first-index", type=int, default=DEFAULT_FIRST_INDEX,
                   help="perturbation exponent of the first step (default 1)")
    p.add_argument("--assert-bounds", action="store_true",
                   help="exit with code 3 if any checked error bound is violated")


def _check_common(a):
    if getattr(a, "dim", 1) < 1:
        raise ConfigError("--dim must be >= 1")
    lam = getattr(a, "lam", 0.5)
    if lam is not None and not isinstance(lam, list) and not 0.0 < lam < 1.0:
        raise ConfigError("--lambda must lie in (0, 1)")
    steps = getattr(a, "steps", 1)
    if isinstance(steps, int) and steps < 1:
        raise ConfigError("--steps must be >= 1")
    if getattr(a, "window", None) is not None and a.window < 1:
        raise ConfigError("--window must be >= 1")
    if getattr(a, "first_index", 0) < 0:
        raise ConfigError("--first-index must be >= 0")
    if getattr(a, "trials", 1) < 1:
        raise ConfigError("--trials must be >= 1")
    if hasattr(a, "c_min"):
        try:
            return SkipPolicy(c_min=a.c_min)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return SkipPolicy()


# ---------------------------------------------------------------------------
# Tracking reports
# ---------------------------------------------------------------------------

STEP_HEADER = ("k", "status", "cosine", "residual_norm", "secant_residual", "distance_op", "distance_fro")


def _summary(name: str, a, rep: TrackReport) -> str:
    fields = [
        name,
        f"dim={rep.dim}",
        f"steps={len(rep.steps)}",
        f"applied={rep.applied}",
        f"skipped={rep.skipped}",
        f"min_cosine={_fmt(rep.min_cosine)}",
        f"final_fro={_fmt(rep.final_distance_fro)}",
        f"final_op={_fmt(rep.final_distance_op)}",
        f"beta_hat={_fmt(rep.beta_hat)}",
        f"theorem_checks={len(rep.theorem_checks)}",
        f"proposition_checks={len(rep.proposition_checks)}",
        f"violations={len(rep.violations)}",
    ]
    if rep.error:
        fields.append(f"error={rep.error!r}")
    return " ".join(fields) + "\n"


def _render_report(name: str, a, rep: TrackReport) -> str:
    if a.output == "json":
        return rep.to_json() + "\n"
    if a.output == "csv":
        rows = [(s.k, s.status, s.cosine, s.residual_norm, s.secant_residual, s.distance_op, s.distance_fro)
                for s in rep.steps]
        return _csv(rows, STEP_HEADER)
    return _summary(name, a, rep)


def _finish_report(name: str, a, rep: TrackReport) -> int:
    _emit(_render_report(name, a, rep), a.out)
    if rep.error:
        print(f"{name}: {rep.error}", file=sys.stderr)
        return EXIT_NUMERICAL
    if getattr(a, "assert_bounds", False) and rep.violations:
        print(f"{name}: {len(rep.violations)} bound violation(s)", file=sys.stderr)
        return EXIT_BOUND
    return EXIT_OK


def _run_track(a) -> int:
    policy = _check_common(a)
    seed = a.seed
    a_star = random_symmetric_gaussian(a.dim, SeededRng(seed))
    provider = PerturbedProvider(a_star, a.lam, derive_seed(seed, 1), a.first_index)
    rep = track(MatrixOracle(provider, a.dim), a.steps, policy, m=a.window,
                check_proposition=a.steps <= PROPOSITION_CHECK_LIMIT)
    return _finish_report("track", a, rep)


def _run_invert(a) -> int:
    policy = _check_common(a)
    seed = a.seed
    a_star, _ = draw_well_conditioned(a.dim, SeededRng(seed))
    provider = PerturbedProvider(a_star, a.lam, derive_seed(seed, 1), a.first_index)
    if a.random_directions:
        oracle = random_direction_oracle(provider, a.dim, derive_seed(seed, 2))
    else:
        oracle = inverse_oracle(provider, a.dim)
    rep = track(oracle, a.steps, policy, m=a.window,
                check_proposition=a.steps <= PROPOSITION_CHECK_LIMIT)
    return _finish_report("invert", a, rep)


def _run_qn_demo(a) -> int:
    policy = _check_common(a)
    d = a.dim
    q = np.diag(np.arange(1.0, d + 1.0))
    steps = a.steps if a.steps is not None else d
    iterates = [np.zeros(d)]
    for k in range(steps):
        x = iterates[-1].copy()
        x[k % d] += 1.0
        iterates.append(x)
    oracle = secant_oracle(lambda x: q @ x, iterates, hessian=q)
    rep = track(oracle, steps, policy, m=a.window, check_proposition=steps <= PROPOSITION_CHECK_LIMIT)
    return _finish_report("qn-demo", a, rep)


# ---------------------------------------------------------------------------
# ULI scores of a vector file
# ---------------------------------------------------------------------------

def _read_vectors(path: str, d: int) -> np.ndarray:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    rows = []
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            vec = [float(c) for c in row]
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from exc
        if len(vec) != d:
            raise ConfigError(f"{path}:{lineno}: expected {d} values, got {len(vec)}")
        rows.append(vec)
    if not rows:
        raise ConfigError(f"{path}: no vectors")
    return np.array(rows)


def _run_uli_check(a) -> int:
    _check_common(a)
    vecs = _read_vectors(a.file, a.dim)
    size = a.window if a.window is not None else a.dim
    if size > len(vecs):
        raise ConfigError(f"window {size} longer than the {len(vecs)} vectors in {a.file}")
    reports, beta_hat = sequence_uli_profile(list(vecs), size - 1, a.dim, len(vecs))
    if a.output == "json":
        doc = {
            "dim": a.dim,
            "window": size,
            "beta_hat": beta_hat,
            "windows": [
                {"start": r.start_index, "alpha": r.alpha_det, "beta": r.beta_eig,
                 "gamma": r.gamma_bound, "exhaustive": r.exhaustive}
                for r in reports
            ],
        }
        text = json.dumps(doc, sort_keys=True) + "\n"
    else:
        rows = [(r.start_index, r.alpha_det, r.beta_eig, r.gamma_bound, int(r.exhaustive)) for r in reports]
        text = _csv(rows, ("start", "alpha", "beta", "gamma", "exhaustive"))
    _emit(text, a.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------

def _table_destination(t, fmt, out):
    if out is None:
        return None
    path = Path(out)
    return path / default_filename(t, fmt) if path.is_dir() else path


def _run_table(a, which: str) -> int:
    policy = _check_common(a)
    if any(n < 1 for n in a.steps):
        raise ConfigError("--steps values must be >= 1")
    if which == "table1":
        if any(not 0.0 < lam < 1.0 for lam in a.lam):
            raise ConfigError("--lambda values must lie in (0, 1)")
        t = table1(a.dim, a.lam, a.steps, a.trials, a.seed, policy, a.first_index)
    else:
        t = table2(a.dim, a.lam, a.steps, a.trials, a.seed, policy, first_index=a.first_index)
    fmt = a.output or "csv"
    dest = _table_destination(t, fmt, a.out)
    text = emit_table(t, fmt, dest)
    if dest is None:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Geodesic shooting
# ---------------------------------------------------------------------------

GEODESIC_DEFAULTS = {
    "n_landmarks": 3,
    "sigma": 1.0,
    "l": 2,
    "seed": 0,
    "grid": 100,
    "iters": 50,
    "mode": "sr1",
    "step0": 1.0,
    "c_min": 1e-8,
}


def _geodesic_config(a) -> dict:
    cfg = dict(GEODESIC_DEFAULTS)
    if a.config is not None:
        try:
            doc = json.loads(Path(a.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load {a.config}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{a.config}: expected a JSON object")
        unknown = sorted(set(doc) - set(cfg))
        if unknown:
            raise ConfigError(f"{a.config}: unknown keys {unknown}")
        cfg.update(doc)
    for key in ("seed", "grid", "iters", "mode", "c_min"):
        v = getattr(a, key)
        if v is not None:
            cfg[key] = v
    if cfg["mode"] not in ("sr1", "exact"):
        raise ConfigError("mode must be 'sr1' or 'exact'")
    if int(cfg["iters"]) < 1:
        raise ConfigError("iters must be >= 1")
    return cfg


def _run_geodesic(a) -> int:
    cfg = _geodesic_config(a)
    try:
        prob = builtin_landmark_problem(int(cfg["n_landmarks"]), float(cfg["sigma"]), int(cfg["l"]),
                                        int(cfg["seed"]))
        grid = TimeGrid(int(cfg["grid"]))
        policy = SkipPolicy(c_min=float(cfg["c_min"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    res = outer_minimize(prob, grid, int(cfg["iters"]), float(cfg["step0"]), policy, cfg["mode"])
    _, exact_cost = shoot(prob, res.p0, grid, "exact")
    if a.output == "json":
        doc = {
            "config": cfg,
            "p0": res.p0.tolist(),
            "exact_cost": exact_cost,
            "stalled": res.stalled,
            "message": res.message,
            "history": [
                {"iter": r.iter, "cost": r.cost, "grad_norm": r.grad_norm,
                 "max_binv_residual": r.max_binv_residual, "step": r.step}
                for r in res.history
            ],
        }
        text = json.dumps(doc, sort_keys=True) + "\n"
    else:
        text = res.history_csv()
    _emit(text, a.out)
    if res.stalled:
        print(f"geodesic: {res.message}", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sr1seq", description="SR1 tracking of convergent symmetric matrix sequences.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    p = sub.add_parser("track", help="track a perturbed random matrix sequence with bound monitoring",
                       description="Track A_k = A_* + lam^k (M_k + M_k^T)/2 with cyclic canonical directions.")
    _add_common(p)
    _add_tracking(p)
    p.set_defaults(run=_run_track)

    p = sub.add_parser("invert", help="track the inverse of the limit of a perturbed sequence",
                       description="Track A_*^{-1} from pairs s = A_k y, y canonical or Gaussian.")
    _add_common(p)
    _add_tracking(p)
    p.add_argument("--random-directions", action="store_true",
                   help="draw y_k with standard normal entries instead of cycling canonical vectors")
    p.set_defaults(run=_run_invert)

    p = sub.add_parser("uli-check", help="score windows of a vector sequence read from CSV",
                       description="Report alpha, beta and gamma for every window of consecutive vectors "
                                   "(one vector per CSV row, no header).")
    p.add_argument("--file", required=True, help="CSV file with one vector per row")
    p.add_argument("--dim", type=int, required=True, help="vector dimension d")
    p.add_argument("--window", type=int, default=None, help="vectors per window (default d)")
    p.add_argument("--output", choices=("csv", "json"), default=None, help="output format (default csv)")
    p.add_argument("--out", default=None, help="write output to this path instead of standard output")
    p.set_defaults(run=_run_uli_check)

    p = sub.add_parser("table1", help="distance to the limit over trials, several lambdas",
                       description="Mean and max of ||B_n - A_*||_F over seeded trials.")
    _add_common(p, lam=False, steps=False)
    p.add_argument("--lambda", dest="lam", type=float, nargs="+", default=list(DEFAULT_LAMBDAS),
                   help="one or more decay rates in (0, 1) (default 0.9 0.5 0.1)")
    p.add_argument("--steps", type=int, nargs="+", default=list(DEFAULT_STEPS),
                   help="step counts to report (default 10 20 50 100)")
    p.add_argument("--trials", type=int, default=20, help="number of seeded trials (default 20)")
    p.add_argument("--first-index", type=int, default=DEFAULT_FIRST_INDEX,
                   help="perturbation exponent of the first step (default 1)")
    p.set_defaults(run=lambda a: _run_table(a, "table1"))

    p = sub.add_parser("table2", help="distance to the inverse limit, canonical vs Gaussian directions",
                       description="Mean and max of ||B_n - A_*^{-1}||_F over seeded trials.")
    _add_common(p, steps=False)
    p.add_argument("--steps", type=int, nargs="+", default=list(DEFAULT_STEPS),
                   help="step counts to report (default 10 20 50 100)")
    p.add_argument("--trials", type=int, default=20, help="number of seeded trials (default 20)")
    p.add_argument("--first-index", type=int, default=DEFAULT_FIRST_INDEX,
                   help="perturbation exponent of the first step (default 1)")
    p.set_defaults(run=lambda a: _run_table(a, "table2"))

    p = sub.add_parser("qn-demo", help="secant pairs of a quadratic with Hessian diag(1..d)",
                       description="Coordinate steps on f(x) = x^T Q x / 2, Q = diag(1..d).")
    _add_common(p, lam=False, steps=False, seed=False)
    p.add_argument("--steps", type=int, default=None, help="number of coordinate steps (default d)")
    p.add_argument("--window", type=int, default=None, help="window m for the whole-matrix bound (default d)")
    p.add_argument("--assert-bounds", action="store_true",
                   help="exit with code 3 if any checked error bound is violated")
    p.set_defaults(run=_run_qn_demo)

    p = sub.add_parser("geodesic", help="constrained landmark geodesic shooting",
                       description="Minimize the shooting cost over the initial momentum. The JSON config "
                                   f"may set {', '.join(GEODESIC_DEFAULTS)}.")
    p.add_argument("--config", default=None, help="JSON problem configuration (defaults: built-in problem)")
    p.add_argument("--seed", type=int, default=None, help="override the problem seed")
    p.add_argument("--grid", type=int, default=None, help="override the number of time steps N")
    p.add_argument("--iters", type=int, default=None, help="override the outer iteration count")
    p.add_argument("--mode", choices=("sr1", "exact"), default=None, help="override the inverse mode")
    p.add_argument("--c-min", type=float, default=None, help="override the skip threshold")
    p.add_argument("--output", choices=("csv", "json"), default=None, help="output format (default csv)")
    p.add_argument("--out", default=None, help="write output to this path instead of standard output")
    p.set_defaults(run=_run_geodesic)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.run(args)
    except ConfigError as exc:
        print(f"sr1seq {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ArithmeticError as exc:
        print(f"sr1seq {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"sr1seq {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def entry() -> None:
    sys.exit(main())
