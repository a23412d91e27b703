"""Drive the SR1 update from a stream of (direction, response) pairs and
monitor it against the known error bounds.

An oracle hands out ``(s_k, y_k)``.  When it also knows the matrices ``T_k``
it is tracking (``y_k = T_k s_k``) and their limit, the tracker records
distances to the limit, the deviation profile ``eta``, and checks the
per-direction and whole-matrix bounds on every window.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .linalg import (
    LinAlgError,
    SymMatrix,
    as_vector,
    frobenius_distance,
    inverse,
    operator_norm,
    operator_norm_batch,
)
from .sr1 import (
    DegenerateDirectionError,
    SkipPolicy,
    UpdateStatus,
    proposition_bound,
    sr1_init,
    sr1_update,
    theorem_bound,
)
from .uli import sequence_uli_profile

# slack for bounds that are exactly zero in exact arithmetic
ROUNDOFF_FLOOR = 1e-10
BOUND_REL_TOL = 1e-9


class OracleError(RuntimeError):
    pass


def cyclic_direction(k: int, d: int) -> np.ndarray:
    """Canonical basis vector ``e_{k mod d}``."""
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    e = np.zeros(d)
    e[k % d] = 1.0
    return e


class SequenceOracle:
    """Produces ``(s_k, y_k)``.  Diagnostic hooks return ``None`` when unknown."""

    dim: int

    def pair(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def true_matrix(self, k: int) -> SymMatrix | None:
        return None

    def limit(self) -> SymMatrix | None:
        return None

    def deviation_bound(self, k: int) -> float | None:
        """Upper bound on ``sup_{i >= k} ||T_i - T_*||``, if analytically known."""
        return None

    @property
    def has_diagnostics(self) -> bool:
        return self.true_matrix(0) is not None


class ConstantProvider:
    """The constant sequence ``A_k = a``, with its limit and a zero tail bound."""

    def __init__(self, a):
        self.a = a if isinstance(a, SymMatrix) else SymMatrix(a)

    def __call__(self, k: int) -> SymMatrix:
        return self.a

    def limit(self) -> SymMatrix:
        return self.a

    def deviation_bound(self, k: int) -> float:
        return 0.0


def _provider_attr(provider, name):
    attr = getattr(provider, name, None)
    return attr if callable(attr) else None


class MatrixOracle(SequenceOracle):
    """``y_k = A_k s_k`` for an explicit matrix sequence and chosen directions."""

    def __init__(self, provider: Callable[[int], SymMatrix], d: int,
                 directions: Callable[[int], np.ndarray] | None = None):
        self.provider = provider
        self.dim = d
        self.directions = directions or (lambda k: cyclic_direction(k, d))

    def pair(self, k):
        a = self.provider(k)
        s = as_vector(self.directions(k))
        return s, a @ s

    def true_matrix(self, k):
        return self.provider(k)

    def limit(self):
        f = _provider_attr(self.provider, "limit")
        return f() if f else None

    def deviation_bound(self, k):
        f = _provider_attr(self.provider, "deviation_bound")
        return f(k) if f else None


class _InverseTracking(SequenceOracle):
    """Shared diagnostics for oracles whose target is ``A_*^{-1}``."""

    def __init__(self, provider, d):
        self.provider = provider
        self.dim = d
        self._inverses: dict[int, SymMatrix] = {}
        self._limit_inv: SymMatrix | None = None

    def true_matrix(self, k):
        if k not in self._inverses:
            self._inverses[k] = SymMatrix.symmetrize(inverse(self.provider(k).array))
        return self._inverses[k]

    def limit(self):
        if self._limit_inv is None:
            f = _provider_attr(self.provider, "limit")
            if f is None:
                return None
            self._limit_inv = SymMatrix.symmetrize(inverse(f().array))
        return self._limit_inv

    def deviation_bound(self, k):
        # ||A^-1 - A*^-1|| <= ||A*^-1||^2 e / (1 - ||A*^-1|| e) when ||A*^-1|| e < 1
        f = _provider_attr(self.provider, "deviation_bound")
        if f is None or self.limit() is None:
            return None
        e = f(k)
        inv_norm = operator_norm(self.limit())
        if inv_norm * e >= 1.0:
            return math.inf
        return inv_norm * inv_norm * e / (1.0 - inv_norm * e)


class InverseOracle(_InverseTracking):
    """``s_k = A_k e_{k mod d}``, ``y_k = e_{k mod d}``: tracks ``A_*^{-1}``."""

    def pair(self, k):
        e = cyclic_direction(k, self.dim)
        return self.provider(k) @ e, e


class RandomDirectionOracle(_InverseTracking):
    """``y_k`` standard normal, ``s_k = A_k y_k``: tracks ``A_*^{-1}``."""

    def __init__(self, provider, d, seed: int):
        super().__init__(provider, d)
        self.seed = seed

    def pair(self, k):
        from .rng import SeededRng, derive_seed

        y = SeededRng(derive_seed(self.seed, k)).gaussian_array(self.dim)
        return self.provider(k) @ y, y


def inverse_oracle(provider, d: int) -> InverseOracle:
    return InverseOracle(provider, d)


def random_direction_oracle(provider, d: int, seed: int) -> RandomDirectionOracle:
    return RandomDirectionOracle(provider, d, seed)


class SecantOracle(SequenceOracle):
    """Quasi-Newton pairs ``s_k = x_{k+1} - x_k``, ``y_k = grad(x_{k+1}) - grad(x_k)``.

    The underlying ``A_k`` is the Hessian averaged along the step and is not
    available in general; pass ``hessian`` for a quadratic objective to turn on
    diagnostics (then ``A_k`` is that constant matrix).
    """

    def __init__(self, grad: Callable[[np.ndarray], np.ndarray], iterates: Sequence,
                 hessian=None):
        self.grad = grad
        self.iterates = [as_vector(x) for x in iterates]
        if len(self.iterates) < 2:
            raise ValueError("need at least two iterates")
        self.dim = self.iterates[0].shape[0]
        self._grads: dict[int, np.ndarray] = {}
        self.hessian = None if hessian is None else SymMatrix(hessian)

    def _g(self, k):
        if k not in self._grads:
            self._grads[k] = as_vector(self.grad(self.iterates[k]))
        return self._grads[k]

    def pair(self, k):
        if k + 1 >= len(self.iterates):
            raise OracleError(f"no iterate x_{k + 1} (only {len(self.iterates)} given)")
        s = self.iterates[k + 1] - self.iterates[k]
        if not np.any(s):
            raise DegenerateDirectionError(f"iterates {k} and {k + 1} coincide")
        return s, self._g(k + 1) - self._g(k)

    def true_matrix(self, k):
        return self.hessian

    def limit(self):
        return self.hessian

    def deviation_bound(self, k):
        return None if self.hessian is None else 0.0


def secant_oracle(grad, iterates, hessian=None) -> SecantOracle:
    return SecantOracle(grad, iterates, hessian)


# ---------------------------------------------------------------------------
# Deviation profile
# ---------------------------------------------------------------------------

@dataclass
class EtaProfile:
    """``eta[k, l] = max_{k <= i <= l} ||A_i - A_k||`` for ``k <= l <= horizon``
    (NaN below the diagonal) and its row maxima ``eta_star``."""

    horizon: int
    eta: np.ndarray
    eta_star: np.ndarray

    def at(self, k: int, l: int) -> float:
        return float(self.eta[k, l])


def eta_profile_from_matrices(mats: np.ndarray) -> EtaProfile:
    mats = np.asarray(mats, dtype=float)
    n = mats.shape[0]
    kk, ii = np.triu_indices(n, 1)
    dist = np.zeros((n, n))
    if kk.size:
        dist[kk, ii] = operator_norm_batch(mats[ii] - mats[kk])
    eta = np.maximum.accumulate(dist, axis=1)
    eta[np.tril_indices(n, -1)] = np.nan
    return EtaProfile(n - 1, eta, eta[:, -1].copy())


def eta_profile(provider: Callable[[int], SymMatrix], horizon: int) -> EtaProfile:
    """Deviation table over ``A_0, ..., A_horizon``."""
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    return eta_profile_from_matrices(np.stack([provider(k).array for k in range(horizon + 1)]))


# ---------------------------------------------------------------------------
# Tracking
# ---------------------------------------------------------------------------

@dataclass
class StepRecord:
    k: int
    status: str
    cosine: float
    residual_norm: float
    secant_residual: float
    distance_op: float | None = None
    distance_fro: float | None = None


@dataclass
class BoundCheck:
    k: int
    l: int
    value: float
    bound: float
    violated: bool


@dataclass
class TrackReport:
    dim: int
    steps: list[StepRecord] = field(default_factory=list)
    min_cosine: float = 1.0
    skipped: int = 0
    applied: int = 0
    beta_hat: float | None = None
    theorem_checks: list[BoundCheck] = field(default_factory=list)
    proposition_checks: list[BoundCheck] = field(default_factory=list)
    error: str | None = None
    B: SymMatrix | None = None
    history: list[SymMatrix] = field(default_factory=list, repr=False)

    @property
    def final_distance_fro(self) -> float | None:
        return self.steps[-1].distance_fro if self.steps else None

    @property
    def final_distance_op(self) -> float | None:
        return self.steps[-1].distance_op if self.steps else None

    @property
    def violations(self) -> list[BoundCheck]:
        return [c for c in self.theorem_checks + self.proposition_checks if c.violated]

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "applied": self.applied,
            "skipped": self.skipped,
            "min_cosine": self.min_cosine,
            "beta_hat": self.beta_hat,
            "error": self.error,
            "steps": [asdict(s) for s in self.steps],
            "theorem_checks": [asdict(c) for c in self.theorem_checks],
            "proposition_checks": [asdict(c) for c in self.proposition_checks],
            "B": None if self.B is None else self.B.array.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def track(oracle: SequenceOracle, steps: int, policy: SkipPolicy = SkipPolicy(),
          m: int | None = None, check_bounds: bool = True,
          check_proposition: bool = False, operator_distances: bool = True) -> TrackReport:
    """Run ``steps`` SR1 updates fed by ``oracle``.

    With diagnostics available, every step records its operator and Frobenius
    distance to the limit.  With ``check_bounds``, the whole-matrix bound is
    checked for each ``k`` with ``k + m <= steps`` using the window size ``m``
    (default ``d``) and the sequence score over the ``m`` directions that
    ``B_{k+m}`` has actually interpolated; ``check_proposition`` adds the
    per-direction bound for every pair ``k < l <= steps``.  Bound checks are
    only made on runs without skipped updates.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    d = oracle.dim
    m = d if m is None else m
    state = sr1_init(d)
    report = TrackReport(dim=d)
    report.history.append(state.B)
    try:
        limit = oracle.limit()
    except LinAlgError as exc:
        report.error = f"reference matrix: {type(exc).__name__}: {exc}"
        return report
    directions: list[np.ndarray] = []
    cosines: list[float] = []

    for k in range(steps):
        try:
            s, y = oracle.pair(k)
            state, outcome = sr1_update(state, s, y, policy)
        except Exception as exc:  # partial report on oracle failure
            report.error = f"step {k}: {type(exc).__name__}: {exc}"
            break
        directions.append(np.asarray(s, dtype=float))
        cosines.append(outcome.cosine if outcome.applied else 1.0)
        rec = StepRecord(
            k=k,
            status=outcome.status.value,
            cosine=outcome.cosine,
            residual_norm=outcome.residual_norm,
            secant_residual=float(np.linalg.norm(state.B @ s - y)),
        )
        if limit is not None:
            rec.distance_fro = frobenius_distance(state.B, limit)
        report.steps.append(rec)
        report.history.append(state.B)

    if limit is not None and operator_distances and report.steps:
        diffs = np.stack([b.array for b in report.history[1:]]) - limit.array
        for rec, dist in zip(report.steps, operator_norm_batch(diffs)):
            rec.distance_op = float(dist)

    report.B = state.B
    report.min_cosine = state.min_cosine_observed
    report.skipped = state.updates_skipped
    report.applied = state.updates_applied
    done = len(report.steps)

    if not (check_bounds and limit is not None and oracle.has_diagnostics):
        return report
    if report.skipped or done == 0:
        return report

    mats = np.stack([oracle.true_matrix(k).array for k in range(done)])
    eta = eta_profile_from_matrices(mats)
    # running minimum of cosines over updates 0..j-1 is the constant valid for B_j
    c_upto = np.minimum.accumulate(np.array(cosines))

    if m >= 1 and done >= m:
        _, beta_hat = sequence_uli_profile(directions, m - 1, d, done) if m >= d else (None, 0.0)
        report.beta_hat = beta_hat
        if beta_hat > 0.0:
            report.theorem_checks = _theorem_checks(oracle, report, mats, eta, c_upto, m, beta_hat, limit)
    if check_proposition:
        report.proposition_checks = _proposition_checks(report, mats, eta, c_upto, directions)
    return report


def _theorem_checks(oracle, report, mats, eta, c_upto, m, beta_hat, limit) -> list[BoundCheck]:
    d = report.dim
    n = len(report.steps)
    ks = np.arange(n - m + 1)
    values = operator_norm_batch(np.stack([report.history[k + m].array for k in ks]) - limit.array)
    eta_star = eta.eta_star[ks].copy()
    # widen eta_{k,*} past the horizon: ||A_i - A_k|| <= ||A_i - A_*|| + ||A_* - A_k||
    tail = oracle.deviation_bound(mats.shape[0])
    if tail is not None:
        to_limit = operator_norm_batch(mats[ks] - limit.array)
        eta_star = np.maximum(eta_star, to_limit + tail)
    slack = ROUNDOFF_FLOOR * (1.0 + operator_norm(limit))
    checks = []
    for k, value, eta_k in zip(ks, values, eta_star):
        c = float(c_upto[k + m - 1]) if k + m >= 1 else 1.0
        bound = theorem_bound(c, m, d, beta_hat, float(eta_k))
        value = float(value)
        checks.append(BoundCheck(int(k), int(k + m), value, bound,
                                 bool(value > bound * (1 + BOUND_REL_TOL) + slack)))
    return checks


def _proposition_checks(report, mats, eta, c_upto, directions) -> list[BoundCheck]:
    n = len(directions)
    S = np.stack(directions)
    s_norms = np.linalg.norm(S, axis=1)
    a_norms = operator_norm_batch(mats)
    # (A_k - B_l) s_k for all k: rows of A_k s_k minus B_l s_k
    As = np.einsum("kij,kj->ki", mats, S)
    checks = []
    for l in range(1, n + 1):
        B = report.history[l].array
        lhs = np.linalg.norm(As[:l] - S[:l] @ B, axis=1)
        c = float(c_upto[l - 1])
        for k in range(l):
            bound = proposition_bound(c, k, l, float(eta.eta[k, l - 1]), float(s_norms[k]))
            slack = ROUNDOFF_FLOOR * (1.0 + a_norms[k]) * s_norms[k]
            value = float(lhs[k])
            violated = bool(value > bound * (1 + BOUND_REL_TOL) + slack)
            checks.append(BoundCheck(k, l, value, bound, violated))
    return checks
