"""Acceptance criteria, one test each, with one PASS/FAIL line per criterion.

Run ``pytest tests/test_acceptance.py`` (or this file directly); the lines are
repeated in the terminal summary.
"""

import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from sr1seq.experiments import PerturbedProvider, random_symmetric_gaussian, table1, table2
from sr1seq.geodesic import TimeGrid, binv_residuals, builtin_landmark_problem, outer_minimize, shoot
from sr1seq.linalg import determinant, eigenvalues, frobenius_distance, frobenius_norm
from sr1seq.rng import SeededRng, derive_seed
from sr1seq.tracker import ConstantProvider, MatrixOracle, secant_oracle, track
from sr1seq.uli import (
    Window,
    coefficient_bound,
    eig_uli_score,
    example_sequence,
    gamma_bound,
    normalized_matrix,
    span_coefficients,
)

FIXTURE = Path(__file__).parent / "fixtures" / "example_d3.csv"


def within(value: float, target: float, factor: float = 30.0) -> bool:
    return target / factor <= value <= target * factor


# -- 1 -----------------------------------------------------------------------

def test_constant_sequence_finite_termination(criterion):
    t0 = time.perf_counter()
    worst, skipped = 0.0, 0
    for seed in range(100):
        a = random_symmetric_gaussian(10, SeededRng(derive_seed(1, seed)))
        rep = track(MatrixOracle(ConstantProvider(a), 10), 10, check_bounds=False)
        skipped += rep.skipped
        worst = max(worst, frobenius_distance(rep.B, a) / (1.0 + frobenius_norm(a)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and skipped == 0 and elapsed < 1.0
    assert criterion(1, ok, f"max relative distance {worst:.2e} over 100 seeds, skips {skipped}, {elapsed:.2f}s")


# -- 2 -----------------------------------------------------------------------

TABLE1_CELLS = {(0.9, 100): 0.005, (0.5, 20): 1e-3, (0.5, 50): 1e-12, (0.1, 10): 0.02}


def test_table1_reproduction(criterion):
    t0 = time.perf_counter()
    t = table1(d=10, trials=20, base_seed=0)
    elapsed = time.perf_counter() - t0
    cells_ok = all(within(t.cell(lam, n).median, ref) for (lam, n), ref in TABLE1_CELLS.items())
    medians = ", ".join(f"({lam},{n}) {t.cell(lam, n).median:.1e}" for lam, n in TABLE1_CELLS)
    rates = {}
    for lam in (0.9, 0.5, 0.1):
        per = t.per_trial(lam)
        steps = sorted(per)
        ordered = [all(per[b][i] <= per[a][i] for a, b in zip(steps, steps[1:])) for i in range(20)]
        rates[lam] = sum(ordered) / 20
    ordering_ok = all(r >= 0.95 for r in rates.values())
    ok = cells_ok and ordering_ok and elapsed < 10.0
    order = ", ".join(f"lambda {lam}: {r:.0%}" for lam, r in rates.items())
    assert criterion(2, ok, f"medians {medians} (all within x30: {cells_ok}); monotone trials {order}; {elapsed:.2f}s")


# -- 3 -----------------------------------------------------------------------

TABLE2_MEANS = {
    ("canonical", 10): 0.5, ("canonical", 20): 1e-3, ("canonical", 50): 1e-7,
    ("random", 10): 1.0, ("random", 20): 1e-2, ("random", 50): 1e-6,
}


def test_table2_reproduction(criterion):
    t0 = time.perf_counter()
    t = table2(d=10, lam=0.5, trials=20, base_seed=0)
    elapsed = time.perf_counter() - t0
    means_ok = all(within(t.cell(p, n).mean, ref) for (p, n), ref in TABLE2_MEANS.items())
    order_ok = all(t.cell("canonical", n).median <= t.cell("random", n).median for n in (20, 50))
    ok = means_ok and order_ok and elapsed < 10.0
    means = ", ".join(f"{p[:3]}-{n} {t.cell(p, n).mean:.1e}" for p, n in TABLE2_MEANS)
    assert criterion(3, ok, f"means {means} (all within x30: {means_ok}); canonical median <= random median: {order_ok}; {elapsed:.2f}s")


# -- 4, 5 --------------------------------------------------------------------

@pytest.fixture(scope="module")
def bound_runs():
    t0 = time.perf_counter()
    reports = []
    for i in range(50):
        seed = derive_seed(123, i)
        lam = (0.9, 0.5, 0.1)[i % 3]
        a = random_symmetric_gaussian(10, SeededRng(seed))
        prov = PerturbedProvider(a, lam, derive_seed(seed, 1), first_index=1)
        reports.append(track(MatrixOracle(prov, 10), 60, check_proposition=True))
    return reports, time.perf_counter() - t0


def test_theorem_bound_never_violated(criterion, bound_runs):
    reports, elapsed = bound_runs
    skips = sum(r.skipped for r in reports)
    checks = sum(len(r.theorem_checks) for r in reports)
    bad = sum(c.violated for r in reports for c in r.theorem_checks)
    ok = skips == 0 and checks > 0 and bad == 0 and elapsed < 30.0
    assert criterion(4, ok, f"{checks} checks, {bad} violations, {skips} skips, {elapsed:.1f}s shared with 5")


def test_proposition_bound_never_violated(criterion, bound_runs):
    reports, elapsed = bound_runs
    checks = sum(len(r.proposition_checks) for r in reports)
    bad = sum(c.violated for r in reports for c in r.proposition_checks)
    ok = checks > 0 and bad == 0 and elapsed < 30.0
    assert criterion(5, ok, f"{checks} checks, {bad} violations, {elapsed:.1f}s shared with 4")


# -- 6 -----------------------------------------------------------------------

def _conversion_failures(rng) -> int:
    bad = 0
    for _ in range(1000):
        d = int(rng.integers(1, 7))
        v = normalized_matrix(Window(rng.standard_normal((d, d))), tuple(range(d)))
        lam_min = float(np.abs(np.array(eigenvalues(v))).min())
        det = abs(determinant(v))
        alpha_side = det / d ** ((d - 1) / 2)
        if lam_min ** d > det + 1e-9 or lam_min < alpha_side - 1e-9:
            bad += 1
    return bad


def _coefficient_failures(rng) -> tuple[int, int]:
    beta_form, sound = 0, 0
    for _ in range(1000):
        d = int(rng.integers(1, 7))
        w = Window(rng.standard_normal((d + int(rng.integers(0, 4)), d)))
        x = rng.standard_normal(d)
        beta, _ = eig_uli_score(w, d)
        sc = span_coefficients(w, x, d)
        if sc.abs_sum > gamma_bound(beta, d) + 1e-6:
            beta_form += 1
        if sc.abs_sum > coefficient_bound(w, sc.basis_indices) + 1e-6:
            sound += 1
    return beta_form, sound


def _example_span(d: int = 3) -> tuple[float, list[float]]:
    bounded, growing = 0.0, []
    inside = np.arange(1.0, d) @ np.eye(d)[: d - 1]
    for k in np.unique(np.geomspace(1, 10_000 - d, 40).astype(int)):
        w = Window(np.array([example_sequence(int(k) + i, d) for i in range(d)]), int(k))
        bounded = max(bounded, span_coefficients(w, inside, d).abs_sum)
        growing.append(span_coefficients(w, np.eye(d)[d - 1], d).abs_sum)
    return bounded, growing


def test_uli_property_suite(criterion):
    rng = np.random.default_rng(2024)
    conversion_bad = _conversion_failures(rng)
    beta_bad, sound_bad = _coefficient_failures(rng)
    bounded, growing = _example_span()
    fixture = np.loadtxt(FIXTURE, delimiter=",")
    fixture_ok = np.array_equal(fixture, [example_sequence(k, 3) for k in range(len(fixture))])
    example_ok = fixture_ok and bounded <= 2 * math.sqrt(3) and growing[-1] > 1000 * growing[0]
    ok = conversion_bad == 0 and beta_bad == 0 and example_ok
    detail = (f"conversion failures {conversion_bad}/1000; sqrt(d)/beta coefficient bound failures {beta_bad}/1000 "
              f"(sqrt(d)/sigma_min bound failures {sound_bad}/1000); example: bounded max {bounded:.2f}, "
              f"e_(d-1) coefficients {growing[0]:.1f} -> {growing[-1]:.1e}")
    assert criterion(6, ok, detail)


# -- 7 -----------------------------------------------------------------------

def test_quasi_newton_secant(criterion):
    d = 6
    q = np.diag(np.arange(1.0, d + 1.0))
    iterates = [np.zeros(d)]
    for k in range(d):
        x = iterates[-1].copy()
        x[k % d] += 1.0
        iterates.append(x)
    rep = track(secant_oracle(lambda x: q @ x, iterates, hessian=q), d)
    err = float(np.abs(rep.B.array - q).max())
    secant = max(s.secant_residual for s in rep.steps)
    ok = err <= 1e-9 and secant <= 1e-12 and rep.skipped == 0
    assert criterion(7, ok, f"max |B_d - Q| {err:.1e}, max secant residual {secant:.1e}")


# -- 8 -----------------------------------------------------------------------

def test_geodesic_suite(criterion):
    t0 = time.perf_counter()
    prob = builtin_landmark_problem(n_landmarks=3, sigma=1.0, l=2, seed=0)
    grid = TimeGrid(100)
    res = outer_minimize(prob, grid, iters=50, mode="sr1")
    exact = outer_minimize(prob, grid, iters=50, mode="exact")
    elapsed = time.perf_counter() - t0

    traj_exact, _ = shoot(prob, res.p0, grid)
    drift = max(float(np.abs(prob.C @ s.x).max()) for s in traj_exact)
    accepted = [r for r in res.history if r.accepted_cost is not None]
    decreasing = bool(accepted) and all(r.accepted_cost < r.cost for r in accepted)
    traj, cost_sr1 = shoot(prob, res.p0, grid, res.family)
    residual = float(binv_residuals(res.family, prob, traj).max())
    _, cost_exact = shoot(prob, exact.p0, grid)
    gap = abs(cost_sr1 - cost_exact) / abs(cost_exact)

    ok = drift <= 1e-6 and decreasing and residual <= 1e-3 and gap <= 1e-4 and elapsed < 60.0
    detail = (f"(a) drift {drift:.1e}; (b) {len(accepted)} accepted steps all decreasing: {decreasing}, "
              f"stop '{res.message}', residual {residual:.1e}; (c) gap {gap:.1e}; {elapsed:.1f}s")
    assert criterion(8, ok, detail)


# -- 9 -----------------------------------------------------------------------

CLI_RUNS = [
    ["track", "--dim", "6", "--steps", "30", "--seed", "5", "--output", "json"],
    ["invert", "--dim", "5", "--steps", "20", "--seed", "5", "--random-directions", "--output", "csv"],
    ["uli-check", "--file", str(FIXTURE), "--dim", "3", "--window", "4"],
    ["table1", "--dim", "6", "--steps", "10", "20", "--trials", "4", "--seed", "5"],
    ["table2", "--dim", "6", "--steps", "10", "20", "--trials", "4", "--seed", "5", "--output", "json"],
    ["qn-demo", "--dim", "6", "--output", "csv"],
    ["geodesic", "--grid", "20", "--iters", "3", "--output", "json"],
]


def test_cli_determinism(criterion):
    differing = []
    for argv in CLI_RUNS:
        outs = [subprocess.run([sys.executable, "-m", "sr1seq", *argv], capture_output=True, check=False)
                for _ in range(2)]
        if outs[0].returncode != 0 or outs[0].stdout != outs[1].stdout or not outs[0].stdout:
            differing.append(argv[0])
    ok = not differing
    assert criterion(9, ok, f"{len(CLI_RUNS)} subcommands run twice, differing or failing: {differing or 'none'}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
