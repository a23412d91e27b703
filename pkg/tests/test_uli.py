import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sr1seq.linalg import determinant, eigenvalues
from sr1seq.uli import (
    NotInSpanError,
    Window,
    alpha_to_beta,
    beta_to_alpha,
    coefficient_bound,
    det_uli_score,
    det_uli_score_ex,
    eig_uli_score,
    example_sequence,
    gamma_bound,
    normalized_matrix,
    sequence_uli_profile,
    span_coefficients,
    uli_report,
)

E = np.eye(3)


def test_window_rejects_tiny_vectors():
    with pytest.raises(ValueError):
        Window(np.array([[1e-301, 0.0], [0.0, 1.0]]))


def test_window_rejects_nonfinite():
    with pytest.raises(ValueError):
        Window(np.array([[np.inf, 0.0]]))


def test_normalized_matrix_examples():
    assert np.array_equal(normalized_matrix(Window(E), (0, 1, 2)), E)
    assert np.allclose(normalized_matrix(Window.of([(2.0, 0.0), (0.0, 3.0)]), (0, 1)), np.eye(2))
    v = normalized_matrix(Window.of([(1.0, 1.0), (1.0, 0.0)]), (0, 1))
    assert np.allclose(v, [[1 / math.sqrt(2), 1.0], [1 / math.sqrt(2), 0.0]])


def test_normalized_matrix_subset_validation():
    w = Window(E)
    with pytest.raises(ValueError):
        normalized_matrix(w, (0, 1))
    with pytest.raises(ValueError):
        normalized_matrix(w, (1, 0, 2))


def test_det_score_canonical():
    alpha, subset = det_uli_score(Window(E), 3)
    assert alpha == pytest.approx(1.0) and subset == (0, 1, 2)


def test_det_score_discards_duplicate():
    alpha, subset = det_uli_score(Window.of([(1.0, 0.0), (1.0, 0.0), (0.0, 1.0)]), 2)
    assert alpha == pytest.approx(1.0)
    assert 2 in subset


def test_det_score_near_parallel():
    eps = 1e-3
    alpha, _ = det_uli_score(Window.of([(1.0, 0.0), (1.0, eps)]), 2)
    assert alpha == pytest.approx(eps / math.sqrt(1 + eps * eps), rel=1e-10)


def test_eig_score_permutation_and_identity():
    assert eig_uli_score(Window(E[[1, 2, 0]]), 3)[0] == pytest.approx(1.0)
    assert eig_uli_score(Window(E), 3)[0] == pytest.approx(1.0)


def test_eig_score_near_parallel_respects_conversions():
    eps = 1e-3
    w = Window.of([(1.0, 0.0), (1.0, eps)])
    beta, subset = eig_uli_score(w, 2)
    alpha, _ = det_uli_score(w, 2)
    v = normalized_matrix(w, subset)
    assert beta == pytest.approx(min(abs(np.linalg.eigvals(v))), rel=1e-9)
    assert beta ** 2 <= alpha + 1e-12
    assert beta >= alpha / math.sqrt(2) - 1e-12


def test_window_too_short_raises():
    with pytest.raises(ValueError):
        det_uli_score(Window.of([(1.0, 0.0)]), 2)


def test_greedy_mode_beyond_exhaustive_limit():
    rng = np.random.default_rng(0)
    w = Window(rng.standard_normal((40, 6)))  # C(40, 6) > 20000
    alpha, subset, exhaustive = det_uli_score_ex(w, 6)
    assert not exhaustive
    assert len(subset) == 6 and alpha > 0.0
    assert uli_report(w, 6).exhaustive is False


@pytest.mark.parametrize("beta, d, alpha", [(1.0, 5, 1.0), (0.5, 3, 0.125), (0.0, 4, 0.0)])
def test_beta_to_alpha(beta, d, alpha):
    assert beta_to_alpha(beta, d) == pytest.approx(alpha)


@pytest.mark.parametrize("alpha, d, beta", [(1.0, 1, 1.0), (1.0, 4, 0.125), (0.0, 3, 0.0)])
def test_alpha_to_beta(alpha, d, beta):
    assert alpha_to_beta(alpha, d) == pytest.approx(beta)


@pytest.mark.parametrize("beta, d, gamma", [(1.0, 4, 2.0), (0.5, 4, 4.0), (1.0, 1, 1.0)])
def test_gamma_bound(beta, d, gamma):
    assert gamma_bound(beta, d) == pytest.approx(gamma)


def test_span_coefficients_member_of_window():
    w = Window.of([(2.0, 0.0), (0.0, 1.0), (1.0, 1.0)])
    sc = span_coefficients(w, (0.0, 5.0), 2)
    assert sc.abs_sum == pytest.approx(1.0)
    assert sc.coefficients[1] == pytest.approx(1.0)


def test_span_coefficients_canonical():
    sc = span_coefficients(Window(np.eye(2)), (1.0, 1.0), 2)
    assert np.allclose(sc.coefficients, [1 / math.sqrt(2)] * 2)
    assert sc.abs_sum == pytest.approx(math.sqrt(2))


def test_span_coefficients_not_in_span():
    w = Window.of([(1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (1.0, 1.0, 0.0)])
    with pytest.raises(NotInSpanError):
        span_coefficients(w, (0.0, 0.0, 1.0), 3)


def test_coefficient_bound_covers_non_normal_window():
    # near-parallel columns make the matrix far from normal
    th = 0.1
    w = Window.of([(1.0, 0.0), (math.cos(th), math.sin(th))])
    sc = span_coefficients(w, (0.0, 1.0), 2)
    assert sc.abs_sum <= coefficient_bound(w, sc.basis_indices)
    beta, _ = eig_uli_score(w, 2)
    assert sc.abs_sum > gamma_bound(beta, 2)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6), st.integers(0, 3), st.integers(0, 2**31))
def test_score_conversions_and_reconstruction(d, extra, seed):
    rng = np.random.default_rng(seed)
    w = Window(rng.standard_normal((d + extra, d)))
    subset = tuple(range(d))
    v = normalized_matrix(w, subset)
    lam = np.abs(np.array(eigenvalues(v)))
    det = abs(determinant(v))
    assert lam.max() <= math.sqrt(d) + 1e-9
    assert lam.min() ** d <= det + 1e-9
    assert lam.min() >= det / d ** ((d - 1) / 2) - 1e-9
    x = rng.standard_normal(d)
    sc = span_coefficients(w, x, d)
    recon = w.unit_vectors().T @ sc.coefficients
    assert np.linalg.norm(recon - x / np.linalg.norm(x)) <= 1e-8
    assert sc.abs_sum <= coefficient_bound(w, sc.basis_indices) + 1e-9


def test_profile_cyclic_directions():
    reports, beta_hat = sequence_uli_profile(lambda k: E[k % 3], 2, 3, 12)
    assert beta_hat == pytest.approx(1.0)
    assert all(r.beta_eig == pytest.approx(1.0) for r in reports)


def test_profile_constant_sequence_scores_zero():
    _, beta_hat = sequence_uli_profile(lambda k: E[0], 2, 3, 6)
    assert beta_hat == 0.0


def test_example_sequence_values():
    assert np.array_equal(example_sequence(0, 3), E[0])
    assert np.array_equal(example_sequence(4, 3), E[1])
    assert np.allclose(example_sequence(5, 3), [1.0, 0.0, 0.2])


def test_example_sequence_profile_decays():
    d = 3
    reports, beta_hat = sequence_uli_profile(lambda k: example_sequence(k, d), d - 1, d, 60)
    aligned = [r.beta_eig for r in reports if r.start_index % d == 0]
    assert all(b2 < b1 for b1, b2 in zip(aligned, aligned[1:]))
    assert beta_hat < 0.05


def test_example_sequence_uniform_span():
    d = 4
    bounded, growing = [], []
    for k in range(1, 400):
        w = Window(np.array([example_sequence(k + i, d) for i in range(d)]), k)
        bounded.append(span_coefficients(w, np.arange(1.0, d) @ np.eye(d)[: d - 1], d).abs_sum)
        growing.append(span_coefficients(w, np.eye(d)[d - 1], d).abs_sum)
    assert max(bounded) <= 2 * math.sqrt(d)
    assert growing[-1] > 100 * growing[0]
