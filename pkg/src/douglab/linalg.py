"""Dense real linear algebra for small matrices.

Everything here works on plain ``numpy`` arrays and targets the dimension
range ``d <= 20``. The Lyapunov solver uses the Kronecker (vectorized) form,
Hurwitz stability is certified by a positive definite Lyapunov solution, and
symmetric eigenproblems are solved by cyclic Jacobi rotations. No general
nonsymmetric eigensolver is needed anywhere in the package.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, NotPd, NotSymmetric, SingularSystem

__all__ = [
    "as_square",
    "pd_tolerance",
    "solve_lyapunov",
    "is_hurwitz",
    "symmetric_eigen",
    "cholesky",
    "spd_sqrt",
    "spd_inv_sqrt",
    "extreme_eigenvalues",
    "spectral_norm",
    "v_norm",
    "v_operator_norm",
]

_SYM_RTOL = 1e-12
_JACOBI_TOL = 1e-12


def as_square(A, name="matrix") -> np.ndarray:
    """Return `A` as a finite 2-D float array, promoting scalars to 1x1."""
    M = np.atleast_2d(np.asarray(A, dtype=float))
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    return M


def _check_symmetric(S: np.ndarray) -> None:
    scale = max(np.abs(S).max(), 1.0)
    if np.abs(S - S.T).max() > _SYM_RTOL * scale:
        raise NotSymmetric("matrix is not symmetric to 1e-12 relative")


def pd_tolerance(S) -> float:
    """Scale-relative pivot threshold ``1e-12 * trace(S) / dim``."""
    S = as_square(S)
    return 1e-12 * abs(np.trace(S)) / S.shape[0]


def solve_lyapunov(A, Q) -> np.ndarray:
    """Solve ``A^T X + X A + Q = 0`` for ``X``.

    The equation is vectorized as ``(I kron A^T + A^T kron I) vec(X) = -vec(Q)``
    (column-major ``vec``) and solved by partial-pivot LU.

    Parameters
    ----------
    A, Q : array_like, shape (d, d)
        ``Q`` must be symmetric.

    Returns
    -------
    X : ndarray, shape (d, d)
        Symmetrized solution ``(X + X^T) / 2``.

    Raises
    ------
    SingularSystem
        If ``A`` and ``-A^T`` share an eigenvalue, so the Kronecker system has
        no unique solution.
    """
    A = as_square(A, "A")
    Q = as_square(Q, "Q")
    if A.shape != Q.shape:
        raise DimensionMismatch(f"A is {A.shape} but Q is {Q.shape}")
    _check_symmetric(Q)
    d = A.shape[0]
    eye = np.eye(d)
    K = np.kron(eye, A.T) + np.kron(A.T, eye)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(K, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if pivots.min() <= 1e-13 * max(pivots.max(), 1e-300):
        raise SingularSystem("Kronecker Lyapunov system is singular")
    x = scipy.linalg.lu_solve((lu, piv), -Q.reshape(-1, order="F"), check_finite=False)
    X = x.reshape((d, d), order="F")
    X = 0.5 * (X + X.T)
    resid = np.linalg.norm(A.T @ X + X @ A + Q)
    if not np.isfinite(resid) or resid > 1e-8 * (1.0 + np.linalg.norm(Q)) * max(1.0, np.linalg.norm(A)):
        raise SingularSystem(f"Lyapunov residual {resid:.3g} too large; system is ill-posed")
    return X


def symmetric_eigen(S, tol: float = _JACOBI_TOL, max_sweeps: int = 100):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Parameters
    ----------
    S : array_like, shape (d, d)
        Symmetric to 1e-12 relative.
    tol : float
        Sweeps stop once the off-diagonal Frobenius norm is at most
        ``tol * max(1, ||S||_F)``.

    Returns
    -------
    w : ndarray, shape (d,)
        Eigenvalues in ascending order.
    Q : ndarray, shape (d, d)
        Orthonormal eigenvectors as columns, ``S Q[:, i] = w[i] Q[:, i]``.
    """
    A = as_square(S, "S").copy()
    _check_symmetric(A)
    A = 0.5 * (A + A.T)
    d = A.shape[0]
    Q = np.eye(d)
    thresh = tol * max(1.0, np.linalg.norm(A))
    for _ in range(max_sweeps):
        off = np.sqrt(2.0 * np.sum(np.triu(A, 1) ** 2))
        if off <= thresh:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                diff = A[q, q] - A[p, p]
                if abs(apq) < 1e-150 * abs(diff):
                    t = apq / diff  # theta^2 would overflow; tan of the angle is apq/diff to first order
                else:
                    theta = diff / (2.0 * apq)
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # rotate rows/columns p and q
                ap = A[:, p].copy()
                aq = A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                ap = A[p, :].copy()
                aq = A[q, :].copy()
                A[p, :] = c * ap - s * aq
                A[q, :] = s * ap + c * aq
                A[p, q] = A[q, p] = 0.0
                qp = Q[:, p].copy()
                qq = Q[:, q].copy()
                Q[:, p] = c * qp - s * qq
                Q[:, q] = s * qp + c * qq
    w = np.diag(A).copy()
    order = np.argsort(w)
    return w[order], Q[:, order]


def cholesky(S) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive definite matrix.

    Raises
    ------
    NotPd
        If a pivot falls at or below ``pd_tolerance(S)``.
    """
    S = as_square(S, "S")
    _check_symmetric(S)
    d = S.shape[0]
    tol = pd_tolerance(S)
    L = np.zeros_like(S)
    for j in range(d):
        piv = S[j, j] - L[j, :j] @ L[j, :j]
        if not piv > tol:
            raise NotPd(f"Cholesky pivot {piv:.3g} at index {j} is not above {tol:.3g}")
        L[j, j] = np.sqrt(piv)
        L[j + 1:, j] = (S[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


def _pd_eigen(S):
    w, Q = symmetric_eigen(S)
    if not w[0] > pd_tolerance(S):
        raise NotPd(f"smallest eigenvalue {w[0]:.3g} is not positive")
    return w, Q


def spd_sqrt(S) -> np.ndarray:
    """Symmetric positive definite square root via the eigendecomposition."""
    w, Q = _pd_eigen(S)
    M = (Q * np.sqrt(w)) @ Q.T
    return 0.5 * (M + M.T)


def spd_inv_sqrt(S) -> np.ndarray:
    """Inverse of :func:`spd_sqrt`."""
    w, Q = _pd_eigen(S)
    M = (Q / np.sqrt(w)) @ Q.T
    return 0.5 * (M + M.T)


def extreme_eigenvalues(S):
    """``(lambda_min, lambda_max)`` of a symmetric matrix."""
    w, _ = symmetric_eigen(S)
    return float(w[0]), float(w[-1])


def spectral_norm(U) -> float:
    """Largest singular value, from the Jacobi eigenvalues of ``U^T U``."""
    U = as_square(U, "U")
    M = U.T @ U
    w, _ = symmetric_eigen(0.5 * (M + M.T))
    return float(np.sqrt(max(w[-1], 0.0)))


def is_hurwitz(A) -> bool:
    """True iff ``A^T X + X A + I = 0`` has a positive definite solution."""
    try:
        A = as_square(A, "A")
        X = solve_lyapunov(A, np.eye(A.shape[0]))
        cholesky(X)
    except (SingularSystem, NotPd, NotSymmetric):
        return False
    return True


def v_norm(x, V) -> float:
    """Weighted norm ``sqrt(x^T V x)``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    V = as_square(V, "V")
    if V.shape[0] != x.size:
        raise DimensionMismatch(f"x has length {x.size} but V is {V.shape}")
    return float(np.sqrt(max(x @ V @ x, 0.0)))


def v_operator_norm(U, V) -> float:
    """Induced norm ``sup_{||x||_V = 1} ||U x||_V``.

    Computed as the largest singular value of ``V^{1/2} U V^{-1/2}``.
    """
    U = as_square(U, "U")
    V = as_square(V, "V")
    if U.shape != V.shape:
        raise DimensionMismatch(f"U is {U.shape} but V is {V.shape}")
    w, Q = _pd_eigen(V)
    root = (Q * np.sqrt(w)) @ Q.T
    inv_root = (Q / np.sqrt(w)) @ Q.T
    return spectral_norm(root @ U @ inv_root)
