"""Dense linear-algebra kernels shared by the solver modules.

Everything works on plain ``numpy.ndarray`` in double precision.  Inputs
crossing the public API are validated with :func:`as_matrix`, which rejects
non-finite entries.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve

from .errors import Inconclusive, SingularSystem, Singular, SizeLimit

PIVOT_RTOL = 1e-14
SYLVESTER_SIZE_LIMIT = 4096


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-D float array, rejecting NaN/Inf entries."""
    m = np.asarray(a, dtype=float)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def as_vector(a, name: str = "vector") -> np.ndarray:
    m = np.asarray(a, dtype=float)
    if m.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def solve_linear(M: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve M X = B by partially pivoted LU.

    Raises :class:`Singular` when an LU pivot falls below
    ``1e-14 * norm(M, inf)``.
    """
    M = as_matrix(M, "M")
    B = np.asarray(B, dtype=float)
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"M must be square, got {M.shape}")
    if B.shape[0] != M.shape[0]:
        raise ValueError(f"incompatible shapes {M.shape} and {B.shape}")
    if M.size == 0:
        return np.zeros_like(B)
    scale = np.linalg.norm(M, np.inf)
    with warnings.catch_warnings():
        # the pivot check below raises Singular; scipy's warning is redundant
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(M, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if scale == 0.0 or pivots.min() < PIVOT_RTOL * scale:
        raise Singular(f"pivot {pivots.min():.3e} below {PIVOT_RTOL:.0e} * {scale:.3e}")
    return lu_solve((lu, piv), B, check_finite=False)


def solve_sylvester(K: np.ndarray, U: np.ndarray, H: np.ndarray,
                    size_limit: int = SYLVESTER_SIZE_LIMIT) -> np.ndarray:
    """Solve K X + X U = H by Kronecker vectorization and one LU solve.

    The solution is unique when spec(K) and spec(-U) are disjoint; a
    violation surfaces as a :class:`Singular` pivot failure.  One
    extended-precision defect-correction pass guards the forward error
    when the two spectra come close.
    """
    K = as_matrix(K, "K")
    U = as_matrix(U, "U")
    H = as_matrix(H, "H")
    p, q = H.shape
    if K.shape != (p, p) or U.shape != (q, q):
        raise ValueError(f"incompatible shapes K{K.shape}, U{U.shape}, H{H.shape}")
    if p == 0 or q == 0:
        return np.zeros((p, q))
    if p * q > size_limit:
        raise SizeLimit(f"vectorized system of size {p * q} exceeds limit {size_limit}")
    # column-stacking convention: vec(KX) = (I (x) K) vec(X), vec(XU) = (U^T (x) I) vec(X)
    big = np.kron(np.eye(q), K) + np.kron(U.T, np.eye(p))
    scale = np.linalg.norm(big, np.inf)
    lu, piv = lu_factor(big, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if scale == 0.0 or pivots.min() < PIVOT_RTOL * scale:
        raise Singular(f"pivot {pivots.min():.3e} below {PIVOT_RTOL:.0e} * {scale:.3e}")
    X = lu_solve((lu, piv), H.reshape(-1, order="F"),
                 check_finite=False).reshape((p, q), order="F")
    if np.finfo(np.longdouble).eps < np.finfo(float).eps:
        K_l, U_l, H_l = (m.astype(np.longdouble) for m in (K, U, H))
        resid = H_l - K_l @ X.astype(np.longdouble) - X.astype(np.longdouble) @ U_l
        X = X + lu_solve((lu, piv), resid.astype(float).reshape(-1, order="F"),
                         check_finite=False).reshape((p, q), order="F")
    return X


def sylvester_residual(K, U, H, X) -> float:
    """Relative residual norm(K X + X U - H) / scale of the data."""
    num = np.linalg.norm(K @ X + X @ U - H, np.inf)
    scale = ((np.linalg.norm(K, np.inf) + np.linalg.norm(U, np.inf))
             * max(np.linalg.norm(X, np.inf), 1e-300)
             + np.linalg.norm(H, np.inf))
    return num / max(scale, 1e-300)


# diagonal Pade(13) data; theta is the 1-norm bound below which no squaring
# is needed in double precision
_PADE13 = np.array([
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0,
    670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
    960960.0, 16380.0, 182.0, 1.0])
_THETA13 = 5.371920351148152


def matrix_exp(M: np.ndarray) -> np.ndarray:
    """Matrix exponential by scaling and squaring with diagonal Pade(13)."""
    M = as_matrix(M, "M")
    n = M.shape[0]
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"M must be square, got {M.shape}")
    if n == 0:
        return np.zeros((0, 0))
    norm = np.linalg.norm(M, 1)
    if norm == 0.0:
        return np.eye(n)
    s = 0
    if norm > _THETA13:
        s = int(np.ceil(np.log2(norm / _THETA13)))
        M = M / (2.0 ** s)
    ident = np.eye(n)
    c = _PADE13
    M2 = M @ M
    M4 = M2 @ M2
    M6 = M2 @ M4
    u = M @ (M6 @ (c[13] * M6 + c[11] * M4 + c[9] * M2)
             + c[7] * M6 + c[5] * M4 + c[3] * M2 + c[1] * ident)
    v = (M6 @ (c[12] * M6 + c[10] * M4 + c[8] * M2)
         + c[6] * M6 + c[4] * M4 + c[2] * M2 + c[0] * ident)
    F = np.linalg.solve(v - u, v + u)
    for _ in range(s):
        F = F @ F
    return F


def group_inverse(M: np.ndarray, left_null: np.ndarray) -> np.ndarray:
    """Group inverse of a rank-deficient generator-type matrix.

    ``left_null`` is the stationary row vector pi with pi M = 0 and
    pi 1 = 1; the group inverse is (M - 1 pi)^{-1} + 1 pi.  Passing the
    zero vector reduces to the ordinary inverse of a nonsingular M.
    """
    M = as_matrix(M, "M")
    pi = as_vector(left_null, "left_null")
    n = M.shape[0]
    if M.shape[0] != M.shape[1] or pi.shape[0] != n:
        raise ValueError(f"incompatible shapes {M.shape} and {pi.shape}")
    one_pi = np.outer(np.ones(n), pi)
    sharp = solve_linear(M - one_pi, np.eye(n)) + one_pi
    return sharp


def stable_spectrum(M: np.ndarray, iterations: int = 200,
                    margin: float = 1e-8) -> bool:
    """True iff the spectral abscissa of M is negative.

    Decided by power iteration on exp(M): spectral radius of exp(M) below 1
    is equivalent to a negative abscissa.  Raises :class:`Inconclusive` when
    the radius estimate is within ``margin`` of 1.
    """
    M = as_matrix(M, "M")
    n = M.shape[0]
    if n == 0:
        return True
    B = matrix_exp(M)
    # fixed deterministic start vector with a component along every axis
    v = 1.0 + np.arange(n) / max(n, 2)
    v /= np.linalg.norm(v)
    log_growth = 0.0
    for _ in range(iterations):
        w = B @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return True
        log_growth += np.log(nw)
        v = w / nw
    rho = float(np.exp(log_growth / iterations))
    if abs(rho - 1.0) <= margin:
        raise Inconclusive(f"spectral radius estimate {rho!r} within margin of 1")
    return bool(rho < 1.0)


def conv_integral(K: np.ndarray, D: np.ndarray, x: float) -> np.ndarray:
    """Integral of exp(K (x-s)) D exp(K s) over s in [0, x].

    Evaluated as the upper-right block of exp([[K, D], [0, K]] x).
    """
    K = as_matrix(K, "K")
    D = as_matrix(D, "D")
    p = K.shape[0]
    if K.shape != (p, p) or D.shape != (p, p):
        raise ValueError(f"incompatible shapes {K.shape} and {D.shape}")
    if x < 0:
        raise ValueError("x must be nonnegative")
    if p == 0:
        return np.zeros((0, 0))
    block = np.zeros((2 * p, 2 * p))
    block[:p, :p] = K
    block[:p, p:] = D
    block[p:, p:] = K
    return matrix_exp(block * x)[:p, p:]


def null_row_vector(M: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Row vector v with v M = 0 and v 1 = 1, for a rank n-1 generator.

    Solved through the bordered system obtained by replacing the last
    column of M with ones.  Raises :class:`SingularSystem` when the solve
    breaks down or the residual exceeds ``rtol`` relative to norm(M).
    """
    M = as_matrix(M, "M")
    n = M.shape[0]
    if n == 0:
        raise SingularSystem("empty system")
    bordered = M.copy()
    bordered[:, -1] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    try:
        v = solve_linear(bordered.T, rhs)
    except Singular as exc:
        raise SingularSystem(str(exc)) from exc
    scale = max(np.linalg.norm(M, np.inf), 1.0)
    if np.linalg.norm(v @ M, np.inf) > rtol * scale:
        raise SingularSystem("null-vector residual exceeds tolerance")
    return v
