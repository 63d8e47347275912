"""Block preconditioned conjugate-gradient eigensolver for Hermitian operators.

Vectors are rows of a ``(k, M)`` complex array.  The operator and the
preconditioner act on such blocks.  Residual norms are reported relative to
the vector norm, which makes them independent of quadrature weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["EigenResult", "lobpcg", "orthonormal_rows"]


@dataclass
class EigenResult:
    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    iterations: int
    converged: bool


def orthonormal_rows(S: np.ndarray, drop: float = 1e-10) -> np.ndarray:
    """Orthonormal basis for the row span of ``S``, discarding near-dependent directions.

    Directions whose singular value falls below ``drop`` times the largest are
    removed.  A thin SVD is used rather than the Gram matrix, which would
    square the condition number.
    """
    if S.shape[0] == 0:
        return S
    norms = np.linalg.norm(S, axis=1)
    keep = norms > 0
    S = S[keep] / norms[keep, None]
    if S.shape[0] == 0:
        return S
    _, sv, Vh = np.linalg.svd(S, full_matrices=False)
    return Vh[sv > drop * sv[0]]


def _project_out(S: np.ndarray, X: np.ndarray) -> np.ndarray:
    for _ in range(2):
        S = S - (S @ X.conj().T) @ X
    return S


def _complete(X: np.ndarray, k: int, M: int) -> np.ndarray:
    """Pad a rank-deficient block with seeded random directions."""
    rng = np.random.default_rng(0)
    while X.shape[0] < k:
        extra = rng.standard_normal((k - X.shape[0], M)).astype(np.complex128)
        extra = orthonormal_rows(_project_out(extra, X)) if X.shape[0] else orthonormal_rows(extra)
        X = orthonormal_rows(np.concatenate([X, extra]))
    return X[:k]


def _rayleigh_ritz(B: np.ndarray, AB: np.ndarray):
    H = B.conj() @ AB.T
    H = 0.5 * (H + H.conj().T)
    w, C = np.linalg.eigh(H)
    return w, C


def lobpcg(apply, X0: np.ndarray, nconv: int, tol: float, maxiter: int = 200,
           precond=None) -> EigenResult:
    """Lowest ``k = len(X0)`` Ritz pairs; converged once the first ``nconv`` residuals are below ``tol``.

    ``apply(block)`` and ``precond(block, shifts)`` map ``(m, M)`` arrays to
    ``(m, M)`` arrays; ``shifts`` are the current Ritz values of the rows.
    """
    k = X0.shape[0]
    if k == 0:
        return EigenResult(np.zeros(0), X0, np.zeros(0), 0, True)
    X = orthonormal_rows(np.asarray(X0, dtype=np.complex128))
    if X.shape[0] < k:
        X = _complete(X, k, X0.shape[1])
    AX = apply(X)
    lam, C = _rayleigh_ritz(X, AX)
    X, AX = C.T @ X, C.T @ AX
    P = None
    res = np.full(k, np.inf)
    it = 0
    for it in range(1, maxiter + 1):
        R = AX - lam[:, None] * X
        res = np.linalg.norm(R, axis=1) / np.linalg.norm(X, axis=1)
        if np.all(res[:nconv] <= tol):
            it -= 1
            break
        active = res > 0.1 * tol
        active[:nconv] |= res[:nconv] > tol
        W = R[active]
        if precond is not None:
            W = precond(W, lam[active])
        S = W if P is None else np.concatenate([W, P])
        S = orthonormal_rows(_project_out(S, X))
        S = orthonormal_rows(_project_out(S, X))
        if S.shape[0] == 0:
            break
        AS = apply(S)
        B = np.concatenate([X, S])
        AB = np.concatenate([AX, AS])
        restart = np.abs(B.conj() @ B.T - np.eye(len(B))).max() > 1e-8
        if restart:
            # loss of orthogonality: Rayleigh-Ritz on a fresh basis of the same span
            B = orthonormal_rows(B)
            AB = apply(B)
        w, C = _rayleigh_ritz(B, AB)
        Ck = C[:, :k]
        lam = w[:k]
        Xn = Ck.T @ B
        AXn = Ck.T @ AB
        P = None if restart else Ck[k:].T @ S
        X, AX = Xn, AXn
        # Ritz vectors drift from orthonormality slowly; recondition the block
        if it % 20 == 0:
            X = orthonormal_rows(X)
            AX = apply(X)
            lam, C = _rayleigh_ritz(X, AX)
            X, AX = C.T @ X, C.T @ AX
            P = None
    else:
        R = AX - lam[:, None] * X
        res = np.linalg.norm(R, axis=1) / np.linalg.norm(X, axis=1)
    # final exact evaluation so reported residuals are not tracking artefacts
    X = orthonormal_rows(X)
    AX = apply(X)
    lam, C = _rayleigh_ritz(X, AX)
    X, AX = C.T @ X, C.T @ AX
    res = np.linalg.norm(AX - lam[:, None] * X, axis=1)
    return EigenResult(lam, X, res, it, bool(np.all(res[:nconv] <= tol)))
