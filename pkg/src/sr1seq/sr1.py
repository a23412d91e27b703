"""Symmetric rank-one update with a cosine skip rule, and the error bounds
that control how fast the approximations approach the limit matrix."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .linalg import SymMatrix, as_vector


class DegenerateDirectionError(ValueError):
    """Raised for a zero (or numerically zero) step direction."""


class UpdateStatus(str, Enum):
    APPLIED = "applied"
    SKIPPED_LOW_COSINE = "skipped_low_cosine"
    NOOP_ZERO_RESIDUAL = "noop_zero_residual"


@dataclass(frozen=True)
class SkipPolicy:
    """When to refuse an SR1 correction.

    Attributes
    ----------
    c_min : float
        Updates whose curvature cosine ``|r^T s| / (|r| |s|)`` falls below this
        value are skipped.
    r_floor : float
        Residuals with ``|r| <= r_floor * (1 + |y|)`` already satisfy the
        secant equation; the update becomes a no-op.
    """

    c_min: float = 1e-8
    r_floor: float = 1e-13

    def __post_init__(self):
        if not 0.0 < self.c_min <= 1.0:
            raise ValueError(f"c_min must lie in (0, 1], got {self.c_min}")
        if self.r_floor < 0.0:
            raise ValueError(f"r_floor must be nonnegative, got {self.r_floor}")


@dataclass(frozen=True)
class UpdateOutcome:
    status: UpdateStatus
    cosine: float
    residual_norm: float

    @property
    def applied(self) -> bool:
        return self.status is UpdateStatus.APPLIED


@dataclass(frozen=True)
class Sr1State:
    B: SymMatrix
    updates_applied: int = 0
    updates_skipped: int = 0
    min_cosine_observed: float = 1.0

    @property
    def dim(self) -> int:
        return self.B.dim


def sr1_init(d: int) -> Sr1State:
    """Start from the identity."""
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    return Sr1State(B=SymMatrix.identity(d))


def curvature_cosine(s, r) -> float:
    """``|r^T s| / (|r| |s|)``; 1 for a zero residual."""
    s = np.asarray(s, dtype=float)
    r = np.asarray(r, dtype=float)
    s_norm = float(np.linalg.norm(s))
    if s_norm == 0.0:
        raise DegenerateDirectionError("zero step direction")
    r_norm = float(np.linalg.norm(r))
    if r_norm == 0.0:
        return 1.0
    return min(1.0, abs(float(r @ s)) / (r_norm * s_norm))


def sr1_update(state: Sr1State, s, y, policy: SkipPolicy = SkipPolicy()) -> tuple[Sr1State, UpdateOutcome]:
    """One SR1 step: ``B+ = B + r r^T / (r^T s)`` with ``r = y - B s``."""
    s = as_vector(s)
    y = as_vector(y)
    if s.shape != y.shape or s.shape[0] != state.dim:
        raise ValueError(f"dimension mismatch: B is {state.dim}, s {s.shape}, y {y.shape}")
    if not np.any(s):
        raise DegenerateDirectionError("zero step direction")

    r = y - state.B @ s
    r_norm = float(np.linalg.norm(r))
    if r_norm <= policy.r_floor * (1.0 + float(np.linalg.norm(y))):
        return state, UpdateOutcome(UpdateStatus.NOOP_ZERO_RESIDUAL, 1.0, r_norm)

    cosine = curvature_cosine(s, r)
    if cosine < policy.c_min:
        skipped = replace(state, updates_skipped=state.updates_skipped + 1)
        return skipped, UpdateOutcome(UpdateStatus.SKIPPED_LOW_COSINE, cosine, r_norm)

    new_state = Sr1State(
        B=state.B.rank_one_update(r, 1.0 / float(r @ s)),
        updates_applied=state.updates_applied + 1,
        updates_skipped=state.updates_skipped,
        min_cosine_observed=min(state.min_cosine_observed, cosine),
    )
    return new_state, UpdateOutcome(UpdateStatus.APPLIED, cosine, r_norm)


# ---------------------------------------------------------------------------
# Error bounds.  Powers are evaluated in floating point and may overflow to
# +inf, which is still a valid (vacuous) upper bound.
# ---------------------------------------------------------------------------

def _growth(c: float) -> float:
    if not 0.0 < c <= 1.0:
        raise ValueError(f"cosine constant must lie in (0, 1], got {c}")
    return (2.0 + c) / c


def _pow(base: float, exponent: int) -> float:
    try:
        return math.pow(base, exponent)
    except OverflowError:
        return math.inf


def _times(factor: float, value: float) -> float:
    # inf * 0 stays 0: a zero deviation gives exact interpolation
    if value == 0.0:
        return 0.0
    return factor * value


def proposition_bound(c: float, k: int, l: int, eta_kl_minus1: float, s_norm: float) -> float:
    """Bound on ``|(A_k - B_l) s_k|`` for ``l >= k + 1``.

    ``((2 + c) / c) ** (l - k - 1) * eta_{k, l-1} * |s_k|``
    """
    if l < k + 1:
        raise ValueError(f"need l >= k + 1, got k={k}, l={l}")
    if eta_kl_minus1 < 0.0 or s_norm < 0.0:
        raise ValueError("eta and |s| must be nonnegative")
    return _times(_pow(_growth(c), l - k - 1), eta_kl_minus1 * s_norm)


def error_constant(c: float, m: int) -> float:
    """``1 + ((2 + c) / c) ** (m + 1)``."""
    if m < 0:
        raise ValueError(f"window size must be >= 0, got {m}")
    return 1.0 + _pow(_growth(c), m + 1)


def corollary_bound(c: float, m: int, eta_k_star: float, coeff_abs_sum: float) -> float:
    """Bound on ``|(B_{k+m} - A_*) x| / |x|`` for ``x`` in the window span,
    given the absolute sum of its normalized expansion coefficients."""
    if eta_k_star < 0.0 or coeff_abs_sum < 0.0:
        raise ValueError("eta and coefficient sum must be nonnegative")
    return _times(error_constant(c, m), eta_k_star * coeff_abs_sum)


def span_bound(c: float, m: int, gamma: float, eta_k_star: float) -> float:
    """Uniform bound over every vector of the uniform window span with constant ``gamma``."""
    return corollary_bound(c, m, eta_k_star, gamma)


def theorem_bound(c: float, m: int, d: int, beta: float, eta_k_star: float) -> float:
    """Bound on ``||B_{k+m} - A_*||`` for directions that are
    ``(m, beta)``-uniformly linearly independent."""
    if beta <= 0.0:
        raise ValueError(f"beta must be positive, got {beta}")
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    if eta_k_star < 0.0:
        raise ValueError("eta must be nonnegative")
    return _times(error_constant(c, m), math.sqrt(d) / beta * eta_k_star)
