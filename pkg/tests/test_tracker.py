import numpy as np
import pytest

from sr1seq.experiments import PerturbedProvider, random_symmetric_gaussian
from sr1seq.linalg import SymMatrix
from sr1seq.rng import SeededRng
from sr1seq.tracker import (
    ConstantProvider,
    MatrixOracle,
    OracleError,
    cyclic_direction,
    eta_profile,
    inverse_oracle,
    random_direction_oracle,
    secant_oracle,
    track,
)


def const(a):
    return ConstantProvider(a)


@pytest.mark.parametrize("k, d, j", [(0, 3, 0), (3, 3, 0), (5, 3, 2)])
def test_cyclic_direction(k, d, j):
    assert np.array_equal(cyclic_direction(k, d), np.eye(d)[j])


def test_constant_oracle_terminates_after_d_steps():
    a = random_symmetric_gaussian(6, SeededRng(3))
    rep = track(MatrixOracle(const(a), 6), 6)
    assert rep.skipped == 0
    assert rep.final_distance_fro <= 1e-10 * np.linalg.norm(a.array)


def test_scalar_case():
    rep = track(MatrixOracle(const([[2.0]]), 1), 1)
    assert rep.B.array.tolist() == [[2.0]]


def test_perturbed_run_reaches_expected_order():
    a = random_symmetric_gaussian(10, SeededRng(0))
    prov = PerturbedProvider(a, 0.5, 1, first_index=1)
    rep = track(MatrixOracle(prov, 10), 20)
    assert 1e-6 < rep.final_distance_fro < 1e-1
    assert not rep.violations


def test_secant_chain_every_applied_step():
    a = random_symmetric_gaussian(8, SeededRng(4))
    rep = track(MatrixOracle(PerturbedProvider(a, 0.5, 9), 8), 40)
    for step in rep.steps:
        if step.status == "applied":
            assert step.secant_residual <= 1e-10 * (1.0 + 10.0 * np.linalg.norm(a.array))


def test_inverse_oracle_diagonal():
    rep = track(inverse_oracle(const(np.diag([2.0, 4.0])), 2), 2)
    assert np.allclose(rep.B.array, np.diag([0.5, 0.25]), atol=1e-15)
    assert rep.final_distance_fro <= 1e-15


def test_inverse_oracle_identity_is_noop():
    rep = track(inverse_oracle(const(np.eye(3)), 3), 6)
    assert rep.applied == 0
    assert all(s.status == "noop_zero_residual" for s in rep.steps)
    assert rep.B == SymMatrix.identity(3)


def test_random_oracle_identity_is_noop():
    rep = track(random_direction_oracle(const(np.eye(2)), 2, seed=5), 5)
    assert rep.applied == 0
    assert rep.B == SymMatrix.identity(2)


def test_random_oracle_deterministic():
    a = random_symmetric_gaussian(5, SeededRng(8)) + SymMatrix.identity(5) * 6.0
    prov = PerturbedProvider(a, 0.5, 2)
    r1 = track(random_direction_oracle(prov, 5, seed=7), 15).to_json()
    r2 = track(random_direction_oracle(prov, 5, seed=7), 15).to_json()
    assert r1 == r2
    r3 = track(random_direction_oracle(prov, 5, seed=8), 15).to_json()
    assert r1 != r3


def test_inverse_oracle_singular_limit_reports_error():
    rep = track(inverse_oracle(const(np.zeros((2, 2))), 2), 3)
    assert rep.steps == []
    assert "SingularMatrixError" in rep.error


def test_secant_quadratic_recovers_hessian():
    q = np.diag([1.0, 3.0])
    iterates = [np.zeros(2), np.array([1.0, 0.0]), np.array([1.0, 1.0])]
    rep = track(secant_oracle(lambda x: q @ x, iterates, hessian=q), 2)
    assert np.allclose(rep.B.array, q, atol=1e-12)


def test_secant_linear_function_annihilates_visited_directions():
    g = np.array([1.0, -2.0, 0.5])
    iterates = [np.zeros(3)]
    for k in range(3):
        x = iterates[-1].copy()
        x[k] += 1.0
        iterates.append(x)
    rep = track(secant_oracle(lambda x: g, iterates), 3)
    assert rep.final_distance_fro is None
    assert np.allclose(rep.B.array, 0.0, atol=1e-12)


def test_secant_rosenbrock_smoke():
    def grad(x):
        return np.array([-2 * (1 - x[0]) - 400 * x[0] * (x[1] - x[0] ** 2), 200 * (x[1] - x[0] ** 2)])

    xs = [np.array([-1.2, 1.0])]
    for _ in range(30):
        xs.append(xs[-1] - 1e-3 * grad(xs[-1]))
    rep = track(secant_oracle(grad, xs), 30)
    assert rep.error is None
    for k, step in enumerate(rep.steps):
        if step.status == "applied":
            y = grad(xs[k + 1]) - grad(xs[k])
            assert step.secant_residual <= 1e-8 * (1.0 + np.linalg.norm(y))


def test_secant_coincident_iterates():
    rep = track(secant_oracle(lambda x: x, [np.zeros(2), np.zeros(2)]), 1)
    assert "coincide" in rep.error


def test_oracle_exhaustion_gives_partial_report():
    rep = track(secant_oracle(lambda x: x, [np.zeros(2), np.ones(2)]), 3)
    assert len(rep.steps) == 1
    assert "OracleError" in rep.error


def test_eta_constant_provider():
    prof = eta_profile(const(np.eye(2)), 5)
    assert np.nanmax(prof.eta) == 0.0
    assert np.all(prof.eta_star == 0.0)


def test_eta_geometric_scalar_sequence():
    prof = eta_profile(lambda k: SymMatrix([[1.0 - 2.0 ** -k]]), 12)
    for l in range(1, 13):
        assert prof.at(0, l) == pytest.approx(1.0 - 2.0 ** -l)
    assert prof.eta_star[0] == pytest.approx(1.0 - 2.0 ** -12)


def test_eta_two_step():
    mats = {0: SymMatrix.zeros(2), 1: SymMatrix.identity(2)}
    assert eta_profile(lambda k: mats[k], 1).at(0, 1) == pytest.approx(1.0)


def test_eta_rejects_empty_horizon():
    with pytest.raises(ValueError):
        eta_profile(const(np.eye(2)), 0)


def test_bound_checks_hold_on_perturbed_runs():
    for seed in range(3):
        a = random_symmetric_gaussian(5, SeededRng(seed))
        prov = PerturbedProvider(a, 0.7, seed + 100, first_index=1)
        rep = track(MatrixOracle(prov, 5), 30, check_proposition=True)
        assert rep.theorem_checks and rep.proposition_checks
        assert not rep.violations


def test_track_requires_steps():
    with pytest.raises(ValueError):
        track(MatrixOracle(const(np.eye(2)), 2), 0)


def test_oracle_error_type():
    assert issubclass(OracleError, RuntimeError)
