"""Non-negative least squares.

:func:`nnls` is an active-set solver in the Lawson-Hanson style with optional
warm start. :func:`nnls_projected_gradient` is an unrelated first-order
method kept as an independent oracle.
"""
from __future__ import annotations

import numpy as np

DEFAULT_TOL = 1e-10


class NNLSIterationLimit(RuntimeError):
    """Raised when the active-set loop exceeds its iteration budget.

    The best feasible iterate found so far is attached as ``x``.
    """

    def __init__(self, message, x):
        super().__init__(message)
        self.x = x


def kkt_scale(A, b) -> float:
    """Scale that turns the relative tolerance into an absolute gradient bound."""
    s = float(np.linalg.norm(A) * np.linalg.norm(b))
    return s if s > 0 else 1.0


def kkt_violation(A, b, x) -> float:
    """Largest relative violation of the NNLS optimality conditions at ``x``.

    With ``w = A^T (b - A x)`` (minus the gradient of ``0.5 |Ax - b|^2``), a
    minimiser has ``x >= 0``, ``w_i <= 0`` where ``x_i = 0`` and ``w_i = 0``
    where ``x_i > 0``.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    x = np.asarray(x, dtype=float)
    w = A.T @ (b - A @ x)
    free = x > 0
    viol = max(
        float(np.max(np.abs(w[free]), initial=0.0)),
        float(np.max(w[~free], initial=0.0)),
        float(np.max(-x, initial=0.0)),
    )
    return viol / kkt_scale(A, b)


def _solve(A, b, passive):
    z = np.zeros(A.shape[1])
    z[passive] = np.linalg.lstsq(A[:, passive], b, rcond=None)[0]
    return z


def nnls(A, b, tol: float = DEFAULT_TOL, max_iter: int | None = None, x0=None) -> np.ndarray:
    """Solve ``min |A x - b|^2`` subject to ``x >= 0``.

    Parameters
    ----------
    A : array_like, shape (m, n)
    b : array_like, shape (m,)
    tol : float
        Relative tolerance on the dual variables; the returned point satisfies
        ``kkt_violation(A, b, x) <= tol`` up to rounding in the subproblem
        solves.
    max_iter : int, optional
        Budget of least-squares subproblem solves (default ``5 n + 50``).
    x0 : array_like, optional
        Warm start. Its positive entries seed the passive set.

    Returns
    -------
    x : numpy.ndarray, shape (n,)

    Raises
    ------
    NNLSIterationLimit
        If the budget is exhausted; the best iterate is attached.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or b.shape != (A.shape[0],):
        raise ValueError(f"shape mismatch: A {A.shape}, b {b.shape}")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise ValueError("A and b must be finite")
    n = A.shape[1]
    if max_iter is None:
        max_iter = 5 * n + 50
    atol = tol * kkt_scale(A, b)

    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    iters = 0

    def restore_feasibility(z):
        # Walk from x towards z until the first passive coordinate hits zero,
        # drop it, resolve; repeat until the subproblem solution is positive.
        nonlocal x, passive, iters
        while True:
            if np.all(z[passive] > 0):
                x = z
                return
            iters += 1
            if iters > max_iter:
                raise NNLSIterationLimit(f"NNLS did not converge in {max_iter} solves", x.copy())
            neg = passive & (z <= 0)
            den = x[neg] - z[neg]
            ratios = np.where(den > 0, x[neg] / np.where(den > 0, den, 1.0), 0.0)
            step = float(np.min(ratios))
            x = x + step * (z - x)
            hit = np.flatnonzero(neg)[np.argmin(ratios)]
            x[hit] = 0.0
            passive &= x > 0
            x[~passive] = 0.0
            z = _solve(A, b, passive)

    if x0 is not None:
        x0 = np.asarray(x0, dtype=float)
        passive = x0 > 0
        if passive.any():
            x = np.where(passive, x0, 0.0)
            restore_feasibility(_solve(A, b, passive))

    blocked = np.zeros(n, dtype=bool)
    while True:
        w = A.T @ (b - A @ x)
        cand = ~passive & ~blocked & (w > atol)
        if not cand.any():
            break
        t = int(np.argmax(np.where(cand, w, -np.inf)))
        passive[t] = True
        x_before = x
        iters += 1
        if iters > max_iter:
            raise NNLSIterationLimit(f"NNLS did not converge in {max_iter} solves", x.copy())
        restore_feasibility(_solve(A, b, passive))
        if not passive[t] and np.array_equal(x, x_before):
            # rounding made the entering variable non-positive; skip it until x moves
            blocked[t] = True
        else:
            blocked[:] = False
    return x


def nnls_rows(A, B, tol: float = DEFAULT_TOL, max_iter: int | None = None, X0=None):
    """Solve one NNLS per row of ``B`` against the shared matrix ``A``.

    Returns ``X`` with ``X[j] = argmin_{x >= 0} |A x - B[j]|``. Rows whose
    solver hits the iteration limit fall back to the attached best iterate.
    """
    A = np.asarray(A, dtype=float)
    B = np.atleast_2d(np.asarray(B, dtype=float))
    X = np.empty((B.shape[0], A.shape[1]))
    for j in range(B.shape[0]):
        x0 = None if X0 is None else X0[j]
        try:
            X[j] = nnls(A, B[j], tol=tol, max_iter=max_iter, x0=x0)
        except NNLSIterationLimit as exc:
            X[j] = exc.x
    return X


def nnls_projected_gradient(A, b, n_iter: int = 100_000) -> np.ndarray:
    """Accelerated projected gradient with adaptive restart.

    Works on a stack of problems too: ``A`` of shape ``(p, m, n)`` and ``b``
    of shape ``(p, m)``; zero padding is harmless.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    single = A.ndim == 2
    if single:
        A, b = A[None], b[None]
    At = np.transpose(A, (0, 2, 1))
    AtA = At @ A
    Atb = (At @ b[..., None])[..., 0]
    L = np.array([np.linalg.eigvalsh(M)[-1] for M in AtA])
    L[L == 0] = 1.0
    step = (1.0 / L)[:, None]
    x = np.zeros_like(Atb)
    y = x.copy()
    t = np.ones(len(A))
    for _ in range(n_iter):
        grad = (AtA @ y[..., None])[..., 0] - Atb
        x_new = np.maximum(y - step * grad, 0.0)
        # restart momentum where it points uphill
        restart = np.einsum("pi,pi->p", grad, x_new - x) > 0
        t_new = np.where(restart, 1.0, (1 + np.sqrt(1 + 4 * t * t)) / 2)
        beta = np.where(restart, 0.0, (t - 1) / t_new)[:, None]
        y = x_new + beta * (x_new - x)
        x, t = x_new, t_new
    return x[0] if single else x
