"""Constrained geodesic shooting with SR1-maintained constraint inverses.

The control system ``x' = K_x u`` is restricted to ``ker C`` by projecting
the momentum,

    q = p - C^T A_x^{-1} C K_x p,        A_x = C K_x C^T,

and the extremals follow the Hamiltonian flow of ``H(x, p) = q^T K_x q / 2``:

    x' = K_x q,        p' = -1/2 d/dx [q^T K_x q]   (q held fixed).

Holding ``q`` fixed is exact here because ``q`` minimizes the quadratic
form over the multiplier, so its own x-dependence drops out of the gradient.

Solving with ``A_x`` at every time step is the expensive part.  In SR1 mode
each grid node ``t_i`` carries a matrix ``B(t_i)`` that is refined once per
outer iteration from ``s = A_{x(t_i)} e_{k mod l}``, ``y = e_{k mod l}`` and
converges to ``A_{x(t_i)}^{-1}`` as the trajectories settle.  Away from
the path the family was built on, ``A^{-1}`` is moved with the first-order
rule ``d(A^{-1}) ~ -B (dA) B``, never with exact inverses.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .linalg import (
    SingularMatrixError,
    SymMatrix,
    as_vector,
    determinant,
    lu_solve_batch,
    sym_eigenvalues_batch,
)
from .rng import SeededRng, derive_seed
from .sr1 import SkipPolicy, Sr1State, sr1_init, sr1_update

FD_X_REL_STEP = 1e-5
FD_P_REL_STEP = 1e-4
ARMIJO_C = 1e-4
MAX_HALVINGS = 40


class IntegrationError(ArithmeticError):
    pass


class InfeasibleTrajectoryError(ArithmeticError):
    """``A_x`` stopped being positive definite along the trajectory."""


# ---------------------------------------------------------------------------
# Problem definition
# ---------------------------------------------------------------------------

@dataclass
class ControlProblem:
    """Co-metric ``K_x``, linear constraint ``C x' = 0``, terminal cost ``g``.

    ``cometric`` maps a state to a ``(d, d)`` positive semidefinite matrix.
    ``cometric_many``, if given, maps a stack of states ``(n, d)`` to
    ``(n, d, d)`` and is used in the hot loops.
    """

    cometric: Callable[[np.ndarray], np.ndarray]
    C: np.ndarray
    terminal_cost: Callable[[np.ndarray], float]
    x0: np.ndarray
    terminal_grad: Callable[[np.ndarray], np.ndarray] | None = None
    cometric_many: Callable[[np.ndarray], np.ndarray] | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x0 = as_vector(self.x0)
        C = np.asarray(self.C, dtype=float)
        if C.ndim == 1 and C.size == 0:
            C = C.reshape(0, self.x0.shape[0])
        if C.ndim != 2 or C.shape[1] != self.x0.shape[0]:
            raise ValueError(f"constraint matrix must be (l, {self.x0.shape[0]}), got {C.shape}")
        self.C = C
        if self.l and np.linalg.norm(C @ self.x0) > 1e-10:
            raise ValueError(f"x0 violates the constraint: |C x0| = {np.linalg.norm(C @ self.x0):.3e}")

    @property
    def d(self) -> int:
        return self.x0.shape[0]

    @property
    def l(self) -> int:
        return self.C.shape[0]

    def K_many(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        if self.cometric_many is not None:
            return self.cometric_many(xs)
        return np.stack([np.asarray(self.cometric(x), dtype=float) for x in xs])

    def K(self, x) -> np.ndarray:
        return self.K_many(np.asarray(x, dtype=float)[None])[0]


def constraint_operator(prob: ControlProblem, x) -> SymMatrix:
    """``A_x = C K_x C^T``."""
    K = prob.K(as_vector(x))
    return SymMatrix.symmetrize(prob.C @ K @ prob.C.T)


def _constraint_ops(prob: ControlProblem, K: np.ndarray) -> np.ndarray:
    A = prob.C @ K @ prob.C.T
    return 0.5 * (A + np.swapaxes(A, -1, -2))


@dataclass(frozen=True)
class TimeGrid:
    n_steps: int = 100

    def __post_init__(self):
        if self.n_steps < 2:
            raise ValueError(f"need at least 2 time steps, got {self.n_steps}")

    @property
    def h(self) -> float:
        return 1.0 / self.n_steps

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_steps + 1)


@dataclass
class ShootingState:
    x: np.ndarray
    p: np.ndarray


# ---------------------------------------------------------------------------
# Inverse providers: how A_x^{-1} is applied at a given node / RK stage
# ---------------------------------------------------------------------------

class ExactInverse:
    """Solve with ``A_x`` at the current state."""

    def apply(self, node: int, half: bool, A: np.ndarray, v: np.ndarray) -> np.ndarray:
        return lu_solve_batch(A, v)


@dataclass
class BFamily:
    """One SR1 state per grid node (``N + 1`` of them)."""

    states: list[Sr1State]

    @classmethod
    def identity(cls, n_nodes: int, l: int) -> "BFamily":
        return cls([sr1_init(l) for _ in range(n_nodes)])

    @classmethod
    def from_matrices(cls, mats: Sequence) -> "BFamily":
        return cls([Sr1State(B=SymMatrix(m)) for m in mats])

    def __len__(self):
        return len(self.states)

    def matrices(self) -> np.ndarray:
        return np.stack([s.B.array for s in self.states])

    def apply(self, node: int, half: bool, A: np.ndarray, v: np.ndarray) -> np.ndarray:
        B = self.states[node].B.array
        if half:
            # midpoint RK stages use the average of the two neighbouring nodes
            B = 0.5 * (B + self.states[node + 1].B.array)
        return v @ B


@dataclass
class LinearizedFamily:
    """A frozen family expanded to first order around a reference path.

    Off the reference path, the inverse is moved with the rule
    ``d(A^{-1}) ~ -B (dA) B``, i.e. ``B_eff = B - B (A_x - A_ref) B``.  Gradient
    probes then see how the constraint inverse changes with the state while
    still using only the frozen matrices ``B``.
    """

    family: BFamily
    A_ref: np.ndarray

    def __len__(self):
        return len(self.family)

    def apply(self, node: int, half: bool, A: np.ndarray, v: np.ndarray) -> np.ndarray:
        B = self.family.states[node].B.array
        A_ref = self.A_ref[node]
        if half:
            B = 0.5 * (B + self.family.states[node + 1].B.array)
            A_ref = 0.5 * (A_ref + self.A_ref[node + 1])
        Bv = v @ B
        return Bv - np.einsum("nij,nj->ni", A - A_ref, Bv) @ B


def _validate_family(fam: BFamily, grid: TimeGrid, l: int):
    if len(fam) != grid.n_steps + 1:
        raise ValueError(f"family has {len(fam)} nodes, grid has {grid.n_steps + 1}")
    if fam.states and fam.states[0].dim != l:
        raise ValueError(f"family matrices are {fam.states[0].dim}x{fam.states[0].dim}, need {l}x{l}")


# ---------------------------------------------------------------------------
# Right-hand side and integration
# ---------------------------------------------------------------------------

def _project(prob, K, P, inv, node, half):
    """Projected momenta ``q`` for a batch; returns ``(q, A)``."""
    if prob.l == 0:
        return P, None
    A = _constraint_ops(prob, K)
    rhs = np.einsum("nij,nj->ni", K, P) @ prob.C.T
    try:
        lam = inv.apply(node, half, A, rhs)
    except SingularMatrixError as exc:
        raise InfeasibleTrajectoryError(f"A_x singular at node {node}: {exc}") from exc
    return P - lam @ prob.C, A


def _rhs_batch(prob, X, P, inv, node, half):
    n, d = X.shape
    K = prob.K_many(X)
    Q, A = _project(prob, K, P, inv, node, half)
    xdot = np.einsum("nij,nj->ni", K, Q)
    # central differences of q^T K_x q in every coordinate of x, q frozen
    h = FD_X_REL_STEP * (1.0 + np.linalg.norm(X, axis=1))
    offsets = np.einsum("n,ij->nij", h, np.eye(d))
    probes = np.concatenate([X[:, None, :] + offsets, X[:, None, :] - offsets], axis=1)
    Kp = prob.K_many(probes.reshape(-1, d)).reshape(n, 2 * d, d, d)
    quad = np.einsum("ni,nkij,nj->nk", Q, Kp, Q)
    grad = (quad[:, :d] - quad[:, d:]) / (2.0 * h[:, None])
    pdot = -0.5 * grad
    if not (np.all(np.isfinite(xdot)) and np.all(np.isfinite(pdot))):
        raise IntegrationError(f"non-finite derivative at node {node}")
    return xdot, pdot, Q, A


def projected_rhs(prob: ControlProblem, s: ShootingState,
                  ainv_apply: Callable[[np.ndarray], np.ndarray] | None = None):
    """``(x', p')`` at one state.

    ``ainv_apply`` maps a vector of length ``l`` to ``A_x^{-1}`` applied to it
    (for instance ``lambda v: B @ v``); by default the exact solve is used.
    """
    x = as_vector(s.x)
    p = as_vector(s.p)

    class _One:
        def apply(self, node, half, A, v):
            if ainv_apply is None:
                return lu_solve_batch(A, v)
            return np.asarray(ainv_apply(v[0]), dtype=float)[None]

    xdot, pdot, _, _ = _rhs_batch(prob, x[None], p[None], _One(), 0, False)
    return xdot[0], pdot[0]


def _check_feasible(A: np.ndarray | None, node: int):
    if A is None:
        return
    w = sym_eigenvalues_batch(A)
    if np.any(w[:, 0] <= 0.0):
        raise InfeasibleTrajectoryError(
            f"A_x not positive definite at node {node} (smallest eigenvalue {w[:, 0].min():.3e})"
        )


def _shoot_batch(prob: ControlProblem, P0: np.ndarray, grid: TimeGrid, inv):
    """Integrate a batch of initial momenta.  Returns ``(X, P, costs)`` with
    node arrays of shape ``(n, N + 1, d)``."""
    P0 = np.atleast_2d(np.asarray(P0, dtype=float))
    n, d = P0.shape
    N = grid.n_steps
    h = grid.h
    X = np.empty((n, N + 1, d))
    P = np.empty((n, N + 1, d))
    x = np.broadcast_to(prob.x0, (n, d)).copy()
    p = P0.copy()
    X[:, 0], P[:, 0] = x, p
    q0 = None
    for i in range(N):
        k1x, k1p, Q, A = _rhs_batch(prob, x, p, inv, i, False)
        _check_feasible(A, i)
        if i == 0:
            q0 = Q
        k2x, k2p, _, _ = _rhs_batch(prob, x + 0.5 * h * k1x, p + 0.5 * h * k1p, inv, i, True)
        k3x, k3p, _, _ = _rhs_batch(prob, x + 0.5 * h * k2x, p + 0.5 * h * k2p, inv, i, True)
        k4x, k4p, _, _ = _rhs_batch(prob, x + h * k3x, p + h * k3p, inv, i + 1, False)
        x = x + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        p = p + (h / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        X[:, i + 1], P[:, i + 1] = x, p
    if prob.l:
        _check_feasible(_constraint_ops(prob, prob.K_many(x)), N)
    K0 = prob.K(prob.x0)
    kinetic = 0.5 * np.einsum("ni,ij,nj->n", q0, K0, q0)
    terminal = np.array([float(prob.terminal_cost(xf)) for xf in x])
    return X, P, kinetic + terminal


def _inverse_for(mode, prob: ControlProblem, grid: TimeGrid):
    if isinstance(mode, str) and mode == "exact" or mode is None:
        return ExactInverse()
    if isinstance(mode, BFamily):
        _validate_family(mode, grid, prob.l)
        return mode
    if isinstance(mode, LinearizedFamily):
        _validate_family(mode.family, grid, prob.l)
        return mode
    if hasattr(mode, "apply"):
        return mode
    raise ValueError(f"unknown shooting mode {mode!r}")


def linearize_family(fam: BFamily, prob: ControlProblem, grid: TimeGrid, p0) -> LinearizedFamily:
    """Shoot ``p0`` with ``fam`` and expand the family around that path."""
    X, _, _ = _shoot_batch(prob, as_vector(p0)[None], grid, _inverse_for(fam, prob, grid))
    return LinearizedFamily(fam, _constraint_ops(prob, prob.K_many(X[0])))


def shoot(prob: ControlProblem, p0, grid: TimeGrid = TimeGrid(), mode="exact"):
    """Integrate from ``(x0, p0)`` with RK4.

    ``mode`` is ``"exact"`` or a :class:`BFamily`.  Returns the node states and
    the cost ``q0^T K_{x0} q0 / 2 + g(x(1))``.
    """
    p0 = as_vector(p0)
    if p0.shape[0] != prob.d:
        raise ValueError(f"p0 must have dimension {prob.d}")
    X, P, costs = _shoot_batch(prob, p0[None], grid, _inverse_for(mode, prob, grid))
    traj = [ShootingState(X[0, i].copy(), P[0, i].copy()) for i in range(grid.n_steps + 1)]
    return traj, float(costs[0])


# ---------------------------------------------------------------------------
# SR1 family and outer minimization
# ---------------------------------------------------------------------------

def _node_states(trajectory) -> np.ndarray:
    if isinstance(trajectory, np.ndarray):
        return trajectory
    return np.stack([s.x for s in trajectory])


def update_b_family(fam: BFamily, prob: ControlProblem, trajectory, k: int,
                    policy: SkipPolicy = SkipPolicy()) -> BFamily:
    """One SR1 step per node with ``y = e_{k mod l}``, ``s = A_{x(t)} y``."""
    X = _node_states(trajectory)
    if X.shape[0] != len(fam):
        raise ValueError(f"trajectory has {X.shape[0]} nodes, family {len(fam)}")
    l = prob.l
    y = np.zeros(l)
    y[k % l] = 1.0
    A = _constraint_ops(prob, prob.K_many(X))
    S = A @ y
    return BFamily([sr1_update(st, s, y, policy)[0] for st, s in zip(fam.states, S)])


def binv_residuals(fam: BFamily, prob: ControlProblem, trajectory) -> np.ndarray:
    """Per-node ``||B(t) A_{x(t)} - I||_F``."""
    X = _node_states(trajectory)
    A = _constraint_ops(prob, prob.K_many(X))
    E = fam.matrices() @ A - np.eye(prob.l)
    return np.sqrt(np.sum(E * E, axis=(1, 2)))


def _exact_family(prob: ControlProblem, trajectory) -> BFamily:
    X = _node_states(trajectory)
    A = _constraint_ops(prob, prob.K_many(X))
    l = prob.l
    inv = lu_solve_batch(np.repeat(A, l, axis=0), np.tile(np.eye(l), (len(A), 1)))
    return BFamily.from_matrices(inv.reshape(len(A), l, l).swapaxes(1, 2))


def cost_and_gradient(prob: ControlProblem, p0, grid: TimeGrid, mode="exact",
                      rel_step: float = FD_P_REL_STEP):
    """Cost at ``p0`` and its central-difference gradient, all probes in one batch.

    A plain :class:`BFamily` is first linearized around the path from ``p0``
    so the probes account for the state dependence of the inverse.
    """
    p0 = as_vector(p0)
    d = prob.d
    if isinstance(mode, BFamily):
        mode = linearize_family(mode, prob, grid, p0)
    h = rel_step * (1.0 + float(np.linalg.norm(p0)))
    probes = np.concatenate([p0[None], p0 + h * np.eye(d), p0 - h * np.eye(d)])
    X, _, costs = _shoot_batch(prob, probes, grid, _inverse_for(mode, prob, grid))
    grad = (costs[1:d + 1] - costs[d + 1:]) / (2.0 * h)
    return float(costs[0]), grad, X[0]


@dataclass
class IterationRecord:
    iter: int
    cost: float
    grad_norm: float
    max_binv_residual: float
    step: float
    accepted_cost: float | None = None
    p0: np.ndarray | None = field(default=None, repr=False)


@dataclass
class OuterResult:
    p0: np.ndarray
    history: list[IterationRecord]
    family: BFamily | None
    stalled: bool = False
    message: str = ""

    def history_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "cost", "grad_norm", "max_binv_residual", "step"])
        for r in self.history:
            w.writerow([r.iter, repr(r.cost), repr(r.grad_norm), repr(r.max_binv_residual), repr(r.step)])
        return buf.getvalue()


def outer_minimize(prob: ControlProblem, grid: TimeGrid = TimeGrid(), iters: int = 50,
                   step0: float = 1.0, policy: SkipPolicy = SkipPolicy(), mode: str = "sr1",
                   gtol: float = 1e-10) -> OuterResult:
    """Gradient descent on the initial momentum, starting from ``p0 = 0``.

    In ``"sr1"`` mode every shot of an iteration uses the current family,
    linearized around the central path so that gradient probes see
    ``d(A^{-1}) ~ -B (dA) B``; the family is refined along each accepted
    trajectory.  In
    ``"exact"`` mode all solves are exact and no family is kept.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if mode not in ("sr1", "exact"):
        raise ValueError(f"mode must be 'sr1' or 'exact', got {mode!r}")
    p = np.zeros(prob.d)
    fam = BFamily.identity(grid.n_steps + 1, prob.l) if (mode == "sr1" and prob.l) else None
    history: list[IterationRecord] = []
    for it in range(iters):
        # the cost, its gradient and the line search all see one frozen inverse
        inv = linearize_family(fam, prob, grid, p) if fam is not None else ExactInverse()
        cost, grad, X = cost_and_gradient(prob, p, grid, inv)
        gnorm = float(np.linalg.norm(grad))
        resid = float(binv_residuals(fam, prob, X).max()) if fam is not None else 0.0
        rec = IterationRecord(it, cost, gnorm, resid, 0.0, p0=p.copy())
        history.append(rec)
        if gnorm <= gtol:
            return OuterResult(p, history, fam, False, "gradient below tolerance")
        step = step0
        for _ in range(MAX_HALVINGS):
            trial = p - step * grad
            Xt, _, ct = _shoot_batch(prob, trial[None], grid, inv)
            if ct[0] <= cost - ARMIJO_C * step * gnorm * gnorm:
                break
            step *= 0.5
        else:
            return OuterResult(p, history, fam, True, f"line search stalled at iteration {it}")
        rec.step = step
        rec.accepted_cost = float(ct[0])
        p = trial
        if fam is not None:
            fam = update_b_family(fam, prob, Xt[0], it, policy)
    return OuterResult(p, history, fam, False, "iteration limit")


# ---------------------------------------------------------------------------
# Built-in landmark problem
# ---------------------------------------------------------------------------

def landmark_cometric_many(xs: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian-kernel co-metric for planar landmarks, batched over states."""
    xs = np.asarray(xs, dtype=float)
    n_pts = xs.shape[-1] // 2
    q = xs.reshape(*xs.shape[:-1], n_pts, 2)
    diff = q[..., :, None, :] - q[..., None, :, :]
    kern = np.exp(-np.sum(diff * diff, axis=-1) / (sigma * sigma))
    return np.kron(kern, np.eye(2)) if kern.ndim == 2 else np.einsum(
        "...ij,ab->...iajb", kern, np.eye(2)).reshape(*xs.shape[:-1], 2 * n_pts, 2 * n_pts)


def builtin_landmark_problem(n_landmarks: int = 3, sigma: float = 1.0, l: int = 2,
                             seed: int = 0, positions=None, target=None) -> ControlProblem:
    """Planar landmarks with a Gaussian kernel, ``l`` seeded linear constraints
    and the terminal cost ``|x - target|^2 / 2``.

    ``positions`` (n x 2) overrides the seeded starting configuration; it is
    projected onto ``ker C`` before use.
    """
    if n_landmarks < 2:
        raise ValueError("need at least 2 landmarks")
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    d = 2 * n_landmarks
    if not 1 <= l <= d:
        raise ValueError(f"constraint count must lie in [1, {d}], got {l}")
    rng = SeededRng(derive_seed(seed, 0))
    if positions is None:
        angles = 2.0 * np.pi * (np.arange(n_landmarks) + 0.3 * rng.uniform_array(n_landmarks)) / n_landmarks
        positions = np.stack([np.cos(angles), np.sin(angles)], axis=1) * sigma
    x_raw = np.asarray(positions, dtype=float).reshape(-1)
    if x_raw.shape[0] != d:
        raise ValueError(f"positions must hold {n_landmarks} planar points")

    for attempt in range(10):
        crng = SeededRng(derive_seed(seed, 1, attempt))
        C = crng.gaussian_array(l * d).reshape(l, d)
        CCt = C @ C.T
        if abs(determinant(CCt)) > 1e-8 * np.linalg.norm(CCt) ** l:
            break
    else:
        raise ValueError("could not draw a full-rank constraint matrix in 10 attempts")
    C = C / np.linalg.norm(C, axis=1)[:, None]
    x0 = x_raw - C.T @ lu_solve_batch(C @ C.T, C @ x_raw)

    pts = x0.reshape(n_landmarks, 2)
    gaps = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    np.fill_diagonal(gaps, np.inf)
    if gaps.min() < 1e-6 * sigma:
        raise ValueError("landmarks coincide; the co-metric would be singular")

    if target is None:
        trng = SeededRng(derive_seed(seed, 2))
        target = x0 + 0.5 * sigma * trng.gaussian_array(d)
    target = as_vector(target)

    prob = ControlProblem(
        cometric=lambda x: landmark_cometric_many(x, sigma),
        cometric_many=lambda xs: landmark_cometric_many(xs, sigma),
        C=C,
        terminal_cost=lambda x: 0.5 * float(np.sum((x - target) ** 2)),
        terminal_grad=lambda x: x - target,
        x0=x0,
        meta={"n_landmarks": n_landmarks, "sigma": sigma, "seed": seed, "target": target},
    )
    try:
        w = sym_eigenvalues_batch(_constraint_ops(prob, prob.K(x0))[None])[0]
    except SingularMatrixError:  # pragma: no cover
        w = np.zeros(1)
    if w[0] <= 0.0:
        raise ValueError("constraint operator is not positive definite at x0")
    return prob
