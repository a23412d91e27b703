"""Dense linear algebra for small matrices.

Everything here works on plain numpy arrays; the only wrapper type is
:class:`SymMatrix`, which guarantees exact symmetry by construction.
Routines that are called in hot loops (Jacobi eigenvalues, LU) accept stacks
of matrices with arbitrary leading batch dimensions.
"""

from __future__ import annotations

import math

import numpy as np

JACOBI_MAX_SWEEPS = 100
QR_STEPS_PER_DIM = 30


class LinAlgError(ArithmeticError):
    """Base class for numerical failures raised by this module."""


class ConvergenceError(LinAlgError):
    def __init__(self, message: str, iterations: int):
        super().__init__(f"{message} (after {iterations} iterations)")
        self.iterations = iterations


class SingularMatrixError(LinAlgError):
    pass


class SymMatrix:
    """Immutable real symmetric matrix.

    The lower triangle is always rebuilt from the upper one, so two entries
    mirrored across the diagonal are bitwise equal whatever the input was.
    """

    __slots__ = ("_a",)

    def __init__(self, entries):
        a = np.array(entries, dtype=float)
        if a.ndim == 0:
            a = a.reshape(1, 1)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ValueError(f"expected a non-empty square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("matrix has non-finite entries")
        upper = np.triu(a)
        a = upper + np.triu(a, 1).T
        a.setflags(write=False)
        self._a = a

    @classmethod
    def identity(cls, d: int) -> "SymMatrix":
        return cls(np.eye(d))

    @classmethod
    def zeros(cls, d: int) -> "SymMatrix":
        return cls(np.zeros((d, d)))

    @classmethod
    def symmetrize(cls, m) -> "SymMatrix":
        """Return ``(m + m.T) / 2``."""
        m = np.asarray(m, dtype=float)
        return cls(0.5 * (m + m.T))

    @classmethod
    def from_packed(cls, d: int, upper) -> "SymMatrix":
        """Build from the row-major upper triangle (``d*(d+1)/2`` values)."""
        upper = np.asarray(upper, dtype=float)
        if upper.shape != (d * (d + 1) // 2,):
            raise ValueError("packed storage has the wrong length")
        a = np.zeros((d, d))
        a[np.triu_indices(d)] = upper
        return cls(a)

    @property
    def dim(self) -> int:
        return self._a.shape[0]

    @property
    def array(self) -> np.ndarray:
        """Read-only dense view."""
        return self._a

    def packed(self) -> np.ndarray:
        return self._a[np.triu_indices(self.dim)].copy()

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._a.copy()
        return self._a.astype(dtype)

    def __matmul__(self, other):
        if isinstance(other, SymMatrix):
            other = other.array
        return self._a @ other

    def __add__(self, other: "SymMatrix") -> "SymMatrix":
        return SymMatrix(self._a + _sym_array(other))

    def __sub__(self, other: "SymMatrix") -> "SymMatrix":
        return SymMatrix(self._a - _sym_array(other))

    def __mul__(self, scalar: float) -> "SymMatrix":
        return SymMatrix(self._a * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "SymMatrix":
        return SymMatrix(-self._a)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SymMatrix):
            return NotImplemented
        return self._a.shape == other._a.shape and bool(np.array_equal(self._a, other._a))

    def __hash__(self):
        return hash(self._a.tobytes())

    def rank_one_update(self, r, scale: float) -> "SymMatrix":
        """Return ``self + scale * r r^T`` (exactly symmetric)."""
        r = np.asarray(r, dtype=float)
        return SymMatrix(self._a + scale * np.outer(r, r))

    def __repr__(self) -> str:
        return f"SymMatrix({self._a.tolist()!r})"


def _sym_array(m) -> np.ndarray:
    if isinstance(m, SymMatrix):
        return m.array
    return np.asarray(m, dtype=float)


def as_vector(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.shape[0] < 1:
        raise ValueError(f"expected a non-empty 1-d vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite entries")
    return v


def as_square(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise ValueError(f"expected a non-empty square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


# ---------------------------------------------------------------------------
# Symmetric eigenvalues: cyclic Jacobi, round-robin ordering, batched
# ---------------------------------------------------------------------------

def _round_robin(d: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Partition all index pairs into rounds of disjoint pairs (circle method)."""
    n = d if d % 2 == 0 else d + 1
    players = list(range(n))
    rounds = []
    for _ in range(n - 1):
        ps, qs = [], []
        for i in range(n // 2):
            a, b = players[i], players[n - 1 - i]
            if a < d and b < d:
                ps.append(min(a, b))
                qs.append(max(a, b))
        if ps:
            rounds.append((np.array(ps), np.array(qs)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def sym_eigenvalues_batch(mats) -> np.ndarray:
    """Ascending eigenvalues of a stack of symmetric matrices, shape ``(..., d)``."""
    a = np.array(mats, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError("expected a stack of square matrices")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    batch_shape = a.shape[:-2]
    d = a.shape[-1]
    a = a.reshape(-1, d, d)
    if d == 1 or a.shape[0] == 0:
        return np.sort(np.diagonal(a, axis1=1, axis2=2), axis=-1).reshape(*batch_shape, d)

    rounds = _round_robin(d)
    fro = np.sqrt(np.sum(a * a, axis=(1, 2)))
    tol = (1e-15 * fro) ** 2
    offmask = ~np.eye(d, dtype=bool)
    done = np.zeros((a.shape[0], d))
    live = np.arange(a.shape[0])
    for sweep in range(JACOBI_MAX_SWEEPS + 1):
        off = np.sum(np.where(offmask, a * a, 0.0), axis=(1, 2))
        converged = off <= tol[live]
        if np.any(converged):
            done[live[converged]] = np.diagonal(a[converged], axis1=1, axis2=2)
            a = a[~converged]
            live = live[~converged]
        if live.size == 0:
            break
        if sweep == JACOBI_MAX_SWEEPS:
            raise ConvergenceError("Jacobi eigenvalue sweeps did not converge", sweep)
        for ps, qs in rounds:
            app = a[:, ps, ps]
            aqq = a[:, qs, qs]
            apq = a[:, ps, qs]
            # tan of the rotation angle, chosen as the smaller root
            nz = apq != 0.0
            theta = np.where(nz, (aqq - app) / np.where(nz, 2.0 * apq, 1.0), 0.0)
            t = np.where(
                nz,
                np.sign(theta + (theta == 0)) / (np.abs(theta) + np.hypot(theta, 1.0)),
                0.0,
            )
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            # a <- J^T a J with J[p,p] = J[q,q] = c, J[p,q] = s, J[q,p] = -s
            cr, sr = c[:, :, None], s[:, :, None]
            ap, aq = a[:, ps, :], a[:, qs, :]
            a[:, ps, :] = cr * ap - sr * aq
            a[:, qs, :] = sr * ap + cr * aq
            cc, sc = c[:, None, :], s[:, None, :]
            ap, aq = a[:, :, ps], a[:, :, qs]
            a[:, :, ps] = cc * ap - sc * aq
            a[:, :, qs] = sc * ap + cc * aq
    return np.sort(done, axis=-1).reshape(*batch_shape, d)


def sym_eigenvalues(m) -> np.ndarray:
    """Eigenvalues of a symmetric matrix in ascending order."""
    return sym_eigenvalues_batch(_sym_array(m)[None])[0]


def operator_norm(m) -> float:
    """Induced 2-norm of a symmetric matrix, i.e. its spectral radius."""
    w = sym_eigenvalues(m)
    return float(max(abs(w[0]), abs(w[-1])))


def operator_norm_batch(mats) -> np.ndarray:
    w = sym_eigenvalues_batch(mats)
    return np.maximum(np.abs(w[..., 0]), np.abs(w[..., -1]))


def frobenius_norm(m) -> float:
    a = _sym_array(m)
    return float(math.sqrt(float(np.sum(a * a))))


def frobenius_distance(m, n) -> float:
    a, b = _sym_array(m), _sym_array(n)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return frobenius_norm(a - b)


# ---------------------------------------------------------------------------
# LU with partial pivoting (batched)
# ---------------------------------------------------------------------------

def lu_factor(mats):
    """Factor ``P A = L U`` for a stack of square matrices.

    Returns ``(lu, perm, sign)`` where ``lu`` packs the unit-lower and upper
    factors, ``perm`` is the row permutation and ``sign`` its parity.  Exactly
    zero pivots are left in place (the determinant is then zero).
    """
    a = np.array(mats, dtype=float)
    batch_shape = a.shape[:-2]
    n = a.shape[-1]
    a = a.reshape(-1, n, n)
    nb = a.shape[0]
    perm = np.tile(np.arange(n), (nb, 1))
    sign = np.ones(nb)
    rows = np.arange(nb)
    for k in range(n):
        piv = k + np.argmax(np.abs(a[:, k:, k]), axis=1)
        swap = piv != k
        if np.any(swap):
            r = rows[swap]
            pk = piv[swap]
            a[r, k], a[r, pk] = a[r, pk].copy(), a[r, k].copy()
            perm[r, k], perm[r, pk] = perm[r, pk].copy(), perm[r, k].copy()
            sign[swap] = -sign[swap]
        pivot = a[:, k, k]
        safe = np.where(pivot != 0.0, pivot, 1.0)
        factors = np.where(pivot[:, None] != 0.0, a[:, k + 1:, k] / safe[:, None], 0.0)
        a[:, k + 1:, k] = factors
        a[:, k + 1:, k + 1:] -= factors[:, :, None] * a[:, k, None, k + 1:]
    return (
        a.reshape(*batch_shape, n, n),
        perm.reshape(*batch_shape, n),
        sign.reshape(batch_shape),
    )


def determinant(v) -> float:
    """Determinant via LU with partial pivoting."""
    lu, _, sign = lu_factor(as_square(v))
    return float(sign * np.prod(np.diagonal(lu)))


def determinant_batch(mats) -> np.ndarray:
    lu, _, sign = lu_factor(mats)
    return sign * np.prod(np.diagonal(lu, axis1=-2, axis2=-1), axis=-1)


def lu_solve_batch(mats, rhs) -> np.ndarray:
    """Solve ``A x = b`` for stacks; ``rhs`` has shape ``(..., n)``.

    Raises :class:`SingularMatrixError` if any pivot falls below
    ``1e-14 * ||A||_F``.
    """
    a = np.asarray(mats, dtype=float)
    b = np.asarray(rhs, dtype=float)
    n = a.shape[-1]
    if b.shape[-1] != n:
        raise ValueError(f"dimension mismatch: matrix {n}, right-hand side {b.shape[-1]}")
    batch_shape = np.broadcast_shapes(a.shape[:-2], b.shape[:-1])
    a = np.broadcast_to(a, (*batch_shape, n, n)).reshape(-1, n, n)
    b = np.broadcast_to(b, (*batch_shape, n)).reshape(-1, n)
    lu, perm, _ = lu_factor(a)
    fro = np.sqrt(np.sum(a * a, axis=(1, 2)))
    pivots = np.abs(np.diagonal(lu, axis1=1, axis2=2))
    bad = np.any(pivots <= 1e-14 * fro[:, None], axis=1) | (fro == 0.0)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise SingularMatrixError(
            f"matrix is numerically singular (smallest pivot {pivots[i].min():.3e}, "
            f"||A||_F = {fro[i]:.3e})"
        )
    x = np.take_along_axis(b, perm, axis=1).copy()
    for k in range(n):
        x[:, k + 1:] -= lu[:, k + 1:, k] * x[:, k, None]
    for k in range(n - 1, -1, -1):
        x[:, k] /= lu[:, k, k]
        x[:, :k] -= lu[:, :k, k] * x[:, k, None]
    return x.reshape(*batch_shape, n)


def lu_solve(v, b) -> np.ndarray:
    """Solve ``V x = b`` with partial pivoting."""
    v = as_square(v)
    b = as_vector(b)
    return lu_solve_batch(v, b)


def inverse(v) -> np.ndarray:
    v = as_square(v)
    n = v.shape[0]
    return lu_solve_batch(np.broadcast_to(v, (n, n, n)), np.eye(n)).T


# ---------------------------------------------------------------------------
# General eigenvalues: Householder Hessenberg + Francis double-shift QR
# ---------------------------------------------------------------------------

def hessenberg(v) -> np.ndarray:
    """Orthogonally similar upper Hessenberg form (Householder reflections)."""
    h = as_square(v).copy()
    n = h.shape[0]
    for k in range(n - 2):
        x = h[k + 1:, k]
        alpha = math.sqrt(float(x @ x))
        if alpha == 0.0:
            continue
        u = x.copy()
        u[0] += math.copysign(alpha, u[0])
        unorm2 = float(u @ u)
        h[k + 1:, :] -= np.outer(u, (2.0 / unorm2) * (u @ h[k + 1:, :]))
        h[:, k + 1:] -= np.outer((2.0 / unorm2) * (h[:, k + 1:] @ u), u)
        h[k + 2:, k] = 0.0
    return h


def _francis_qr(h: np.ndarray) -> list[complex]:
    """Eigenvalues of an upper Hessenberg matrix by implicit double-shift QR.

    Deflates 1x1 and 2x2 diagonal blocks of the real Schur form.
    """
    n = h.shape[0]
    a = h.tolist()
    anorm = 0.0
    for i in range(n):
        for j in range(max(i - 1, 0), n):
            anorm += abs(a[i][j])
    wr = [0.0] * n
    wi = [0.0] * n
    cap = QR_STEPS_PER_DIM * n
    nn = n - 1
    t = 0.0
    total_its = 0
    while nn >= 0:
        its = 0
        while True:
            l = nn
            while l >= 1:
                s = abs(a[l - 1][l - 1]) + abs(a[l][l])
                if s == 0.0:
                    s = anorm
                if abs(a[l][l - 1]) + s == s:
                    a[l][l - 1] = 0.0
                    break
                l -= 1
            x = a[nn][nn]
            if l == nn:
                wr[nn] = x + t
                wi[nn] = 0.0
                nn -= 1
                break
            y = a[nn - 1][nn - 1]
            w = a[nn][nn - 1] * a[nn - 1][nn]
            if l == nn - 1:
                p = 0.5 * (y - x)
                q = p * p + w
                z = math.sqrt(abs(q))
                x += t
                if q >= 0.0:
                    z = p + math.copysign(z, p)
                    wr[nn - 1] = wr[nn] = x + z
                    if z != 0.0:
                        wr[nn] = x - w / z
                    wi[nn - 1] = wi[nn] = 0.0
                else:
                    wr[nn - 1] = wr[nn] = x + p
                    wi[nn - 1] = -z
                    wi[nn] = z
                nn -= 2
                break
            if its >= cap:
                raise ConvergenceError("shifted QR did not converge", total_its)
            if its == 10 or its == 20:
                # exceptional shift
                t += x
                for i in range(nn + 1):
                    a[i][i] -= x
                s = abs(a[nn][nn - 1]) + abs(a[nn - 1][nn - 2])
                x = y = 0.75 * s
                w = -0.4375 * s * s
            its += 1
            total_its += 1
            m = nn - 2
            while m >= l:
                z = a[m][m]
                r = x - z
                s = y - z
                p = (r * s - w) / a[m + 1][m] + a[m][m + 1]
                q = a[m + 1][m + 1] - z - r - s
                r = a[m + 2][m + 1]
                s = abs(p) + abs(q) + abs(r)
                p /= s
                q /= s
                r /= s
                if m == l:
                    break
                u = abs(a[m][m - 1]) * (abs(q) + abs(r))
                v = abs(p) * (abs(a[m - 1][m - 1]) + abs(z) + abs(a[m + 1][m + 1]))
                if u + v == v:
                    break
                m -= 1
            for i in range(m + 2, nn + 1):
                a[i][i - 2] = 0.0
                if i != m + 2:
                    a[i][i - 3] = 0.0
            for k in range(m, nn):
                if k != m:
                    p = a[k][k - 1]
                    q = a[k + 1][k - 1]
                    r = a[k + 2][k - 1] if k != nn - 1 else 0.0
                    x = abs(p) + abs(q) + abs(r)
                    if x != 0.0:
                        p /= x
                        q /= x
                        r /= x
                s = math.copysign(math.sqrt(p * p + q * q + r * r), p)
                if s == 0.0:
                    continue
                if k == m:
                    if l != m:
                        a[k][k - 1] = -a[k][k - 1]
                else:
                    a[k][k - 1] = -s * x
                p += s
                x = p / s
                y = q / s
                z = r / s
                q /= p
                r /= p
                for j in range(k, nn + 1):
                    p = a[k][j] + q * a[k + 1][j]
                    if k != nn - 1:
                        p += r * a[k + 2][j]
                        a[k + 2][j] -= p * z
                    a[k + 1][j] -= p * y
                    a[k][j] -= p * x
                for i in range(l, min(nn, k + 3) + 1):
                    p = x * a[i][k] + y * a[i][k + 1]
                    if k != nn - 1:
                        p += z * a[i][k + 2]
                        a[i][k + 2] -= p * r
                    a[i][k + 1] -= p * q
                    a[i][k] -= p
    return [complex(re, im) for re, im in zip(wr, wi)]


def eigenvalues(v) -> list[complex]:
    """All complex eigenvalues of a real square matrix (unordered)."""
    v = as_square(v)
    if v.shape[0] == 1:
        return [complex(v[0, 0])]
    return _francis_qr(hessenberg(v))


def min_eig_modulus(v) -> float:
    """Smallest modulus among the complex eigenvalues of ``v``."""
    return float(min(abs(z) for z in eigenvalues(v)))
