"""Uniform linear independence of direction sequences.

A window of directions ``s_k, ..., s_{k+m}`` is scored by picking the
best-conditioned d-subset of normalized vectors, in two ways: by the
absolute determinant (``alpha``) and by the smallest eigenvalue modulus
(``beta``).  The two scores bound each other:

    beta ** d <= alpha          and          beta >= alpha / d ** ((d - 1) / 2)

The coefficient sum of a unit vector expanded over a subset is bounded by
``sqrt(d) / sigma_min`` of the normalized subset matrix.  The cheaper
``sqrt(d) / beta`` agrees with it for normal matrices (orthonormal
directions, for instance) but can be too small otherwise.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .linalg import (
    LinAlgError,
    SymMatrix,
    as_vector,
    determinant_batch,
    lu_solve,
    min_eig_modulus,
    sym_eigenvalues,
)

EXHAUSTIVE_LIMIT = 20000
MIN_VECTOR_NORM = 1e-300
SPAN_DET_FLOOR = 1e-12


class NotInSpanError(ValueError):
    """The window has no nonsingular d-subset, so the target cannot be expanded."""


@dataclass(frozen=True)
class Window:
    """``m + 1`` consecutive directions starting at index ``start_index``."""

    vectors: np.ndarray
    start_index: int = 0

    def __post_init__(self):
        v = np.array(self.vectors, dtype=float)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError(f"window needs a (m+1, d) array of vectors, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("window has non-finite entries")
        norms = np.linalg.norm(v, axis=1)
        if np.any(norms < MIN_VECTOR_NORM):
            i = int(np.argmin(norms))
            raise ValueError(f"window vector {i} has norm {norms[i]:.3e}, too small to normalize")
        v.setflags(write=False)
        object.__setattr__(self, "vectors", v)

    @classmethod
    def of(cls, vectors: Sequence, start_index: int = 0) -> "Window":
        return cls(np.array([as_vector(x) for x in vectors]), start_index)

    @property
    def size(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def unit_vectors(self) -> np.ndarray:
        return self.vectors / np.linalg.norm(self.vectors, axis=1)[:, None]


@dataclass(frozen=True)
class UliReport:
    start_index: int
    alpha_det: float
    beta_eig: float
    det_subset: tuple[int, ...]
    chosen_subset: tuple[int, ...]
    gamma_bound: float
    exhaustive: bool


@dataclass(frozen=True)
class SpanCoefficients:
    coefficients: np.ndarray
    abs_sum: float
    basis_indices: tuple[int, ...]


def normalized_matrix(w: Window, subset: Sequence[int]) -> np.ndarray:
    """Columns are the unit vectors along the selected window entries."""
    subset = tuple(int(i) for i in subset)
    if len(subset) != w.dim:
        raise ValueError(f"subset must have {w.dim} indices, got {len(subset)}")
    if any(b <= a for a, b in zip(subset, subset[1:])):
        raise ValueError(f"subset must be strictly increasing, got {subset}")
    if subset[0] < 0 or subset[-1] >= w.size:
        raise IndexError(f"subset {subset} out of range for window of size {w.size}")
    return w.unit_vectors()[list(subset)].T


def _n_subsets(w: Window, d: int) -> int:
    return math.comb(w.size, d)


def _check_window(w: Window, d: int):
    if d != w.dim:
        raise ValueError(f"window vectors live in R^{w.dim}, not R^{d}")
    if w.size < d:
        raise ValueError(f"window of {w.size} vectors is shorter than the dimension {d}")


def _greedy_subset(units: np.ndarray, d: int) -> tuple[int, ...]:
    """Column-pivoted Gram-Schmidt: repeatedly take the vector with the
    largest component orthogonal to those already chosen."""
    residual = units.copy()
    chosen = []
    for _ in range(d):
        norms = np.linalg.norm(residual, axis=1)
        norms[chosen] = -1.0
        j = int(np.argmax(norms))
        chosen.append(j)
        if norms[j] > 0.0:
            q = residual[j] / norms[j]
            residual -= np.outer(residual @ q, q)
    return tuple(sorted(chosen))


def _candidates(w: Window, d: int) -> tuple[list[tuple[int, ...]], bool]:
    if _n_subsets(w, d) <= EXHAUSTIVE_LIMIT:
        return list(itertools.combinations(range(w.size), d)), True
    return [_greedy_subset(w.unit_vectors(), d)], False


def _det_scores(w: Window, subsets: list[tuple[int, ...]]) -> np.ndarray:
    units = w.unit_vectors()
    mats = np.stack([units[list(s)].T for s in subsets])
    return np.abs(determinant_batch(mats))


def det_uli_score_ex(w: Window, d: int) -> tuple[float, tuple[int, ...], bool]:
    """Like :func:`det_uli_score` but also reports whether the search was exhaustive."""
    _check_window(w, d)
    subsets, exhaustive = _candidates(w, d)
    scores = _det_scores(w, subsets)
    i = int(np.argmax(scores))
    return min(1.0, float(scores[i])), subsets[i], exhaustive


def det_uli_score(w: Window, d: int) -> tuple[float, tuple[int, ...]]:
    """Largest normalized absolute determinant over d-subsets of the window.

    Exhaustive up to ``EXHAUSTIVE_LIMIT`` candidate subsets; beyond that a
    greedy pivoted selection gives a lower bound on the true value.
    """
    alpha, subset, _ = det_uli_score_ex(w, d)
    return alpha, subset


def eig_uli_score_ex(w: Window, d: int) -> tuple[float, tuple[int, ...], bool]:
    _check_window(w, d)
    subsets, exhaustive = _candidates(w, d)
    best, best_subset = -1.0, subsets[0]
    for subset in subsets:
        beta = min_eig_modulus(normalized_matrix(w, subset))
        if beta > best:
            best, best_subset = beta, subset
    return best, best_subset, exhaustive


def eig_uli_score(w: Window, d: int) -> tuple[float, tuple[int, ...]]:
    """Largest smallest-eigenvalue-modulus over d-subsets of the window."""
    beta, subset, _ = eig_uli_score_ex(w, d)
    return beta, subset


def beta_to_alpha(beta: float, d: int) -> float:
    """Determinant score implied by an eigenvalue score: ``beta ** d``."""
    if beta < 0.0:
        raise ValueError(f"beta must be nonnegative, got {beta}")
    return beta ** d


def alpha_to_beta(alpha: float, d: int) -> float:
    """Eigenvalue score implied by a determinant score: ``alpha / d ** ((d-1)/2)``."""
    if alpha < 0.0:
        raise ValueError(f"alpha must be nonnegative, got {alpha}")
    return alpha / d ** ((d - 1) / 2)


def gamma_bound(beta: float, d: int) -> float:
    """Coefficient-sum bound ``sqrt(d) / beta`` for unit vectors."""
    if beta <= 0.0:
        raise ValueError(f"beta must be positive, got {beta}")
    return math.sqrt(d) / beta


def coefficient_bound(w: Window, subset: Sequence[int]) -> float:
    """``sqrt(d) / sigma_min`` of the normalized subset matrix.

    This bounds the coefficient sum of any unit vector expanded over
    ``subset``.  The smallest eigenvalue modulus is only an upper bound on
    ``sigma_min``, so ``sqrt(d) / beta`` can fall short of the actual sum when
    the normalized matrix is far from normal.
    """
    v = normalized_matrix(w, subset)
    smallest = float(sym_eigenvalues(SymMatrix.symmetrize(v.T @ v))[0])
    if smallest <= 0.0:
        return math.inf
    return math.sqrt(w.dim) / math.sqrt(smallest)


def span_coefficients(w: Window, x, d: int) -> SpanCoefficients:
    """Expand ``x / |x|`` over the best-determinant d-subset of the window."""
    x = as_vector(x)
    x_norm = float(np.linalg.norm(x))
    if x_norm == 0.0:
        raise ValueError("cannot expand the zero vector")
    alpha, subset = det_uli_score(w, d)
    if alpha <= SPAN_DET_FLOOR:
        raise NotInSpanError(f"window starting at {w.start_index} has no nonsingular {d}-subset")
    try:
        lam = lu_solve(normalized_matrix(w, subset), x / x_norm)
    except LinAlgError as exc:
        raise NotInSpanError(str(exc)) from exc
    coefficients = np.zeros(w.size)
    coefficients[list(subset)] = lam
    return SpanCoefficients(coefficients, float(np.sum(np.abs(lam))), subset)


def uli_report(w: Window, d: int) -> UliReport:
    try:
        alpha, det_subset, exhaustive = det_uli_score_ex(w, d)
        beta, eig_subset, _ = eig_uli_score_ex(w, d)
    except LinAlgError:
        return UliReport(w.start_index, 0.0, 0.0, (), (), math.inf, False)
    gamma = math.sqrt(d) / beta if beta > 0.0 else math.inf
    return UliReport(w.start_index, alpha, beta, det_subset, eig_subset, gamma, exhaustive)


def _as_stream(s) -> Callable[[int], np.ndarray]:
    if callable(s):
        return s
    seq = list(s)
    return lambda k: seq[k]


def sequence_uli_profile(s, m: int, d: int, horizon: int) -> tuple[list[UliReport], float]:
    """Score every window ``[k, k+m]`` with ``k + m < horizon``.

    ``s`` is either a sequence of vectors or a callable ``k -> s_k``.  Returns
    the per-window reports and the sequence-level score, the smallest beta.
    Windows that cannot be scored (zero vectors, eigensolver failure) report
    ``beta = 0`` instead of raising.
    """
    if m < 0:
        raise ValueError(f"window size must be >= 0, got {m}")
    if horizon < m + 1:
        raise ValueError(f"horizon {horizon} shorter than the window {m + 1}")
    stream = _as_stream(s)
    vectors = [np.asarray(stream(k), dtype=float) for k in range(horizon)]
    reports = []
    for k in range(horizon - m):
        try:
            w = Window(np.array(vectors[k:k + m + 1]), k)
        except ValueError:
            reports.append(UliReport(k, 0.0, 0.0, (), (), math.inf, False))
            continue
        if w.size < d:
            reports.append(UliReport(k, 0.0, 0.0, (), (), math.inf, True))
            continue
        reports.append(uli_report(w, d))
    beta_hat = min(r.beta_eig for r in reports)
    return reports, beta_hat


def example_sequence(k: int, d: int) -> np.ndarray:
    """Cyclic canonical directions where every ``(d-1)``-th slot is tilted
    towards the last axis by ``1/k``, so the last axis drops out of the
    uniform span as ``k`` grows."""
    if d < 2:
        raise ValueError("the tilted example needs d >= 2")
    s = np.zeros(d)
    j = k % d
    if j != d - 1:
        s[j] = 1.0
    else:
        s[0] = 1.0
        s[d - 1] = 1.0 / k
    return s
