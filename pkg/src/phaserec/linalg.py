"""GMRES with a left diagonal (Jacobi) preconditioner.

Every implicit solve in the package goes through gmres_solve.  The solver
is the standard Arnoldi process with modified Gram-Schmidt and Givens
rotations; no restart by default.  The convergence test uses the
preconditioned residual norm (a consequence of left preconditioning); the
result also reports the true relative residual so either criterion can be
inspected.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionerError


@dataclass(frozen=True)
class GmresConfig:
    tol: float = 1e-3
    max_iters: int = 500
    restart: int | None = None    # None: no restart (full Krylov basis)

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("GMRES tolerance must be positive")
        if self.max_iters < 1:
            raise ValueError("GMRES needs max_iters >= 1")


@dataclass
class GmresResult:
    x: np.ndarray
    iterations: int
    converged: bool
    residual: float          # preconditioned relative residual
    true_residual: float     # ||b - Ax|| / ||b||
    history: list = field(default_factory=list, repr=False)


def gmres_solve(A, b, cfg=GmresConfig(), x0=None):
    """Solve A x = b; returns the best iterate with convergence info.

    A is any scipy sparse matrix (or object with .diagonal() and @).
    Raises PreconditionerError on an exactly zero diagonal entry and
    ValueError on non-finite right-hand sides.
    """
    b = np.asarray(b, dtype=float)
    if not np.all(np.isfinite(b)):
        raise ValueError("right-hand side contains NaN/Inf")
    n = b.size
    diag = np.asarray(A.diagonal(), dtype=float)
    if np.any(diag == 0.0):
        raise PreconditionerError("zero diagonal entry; Jacobi preconditioner undefined")
    inv_diag = 1.0 / diag

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm_true = np.linalg.norm(b)
    if bnorm_true == 0.0:
        return GmresResult(np.zeros(n), 0, True, 0.0, 0.0, [0.0])

    restart = cfg.restart or cfg.max_iters
    m = min(restart, cfg.max_iters)
    history = []
    total_iters = 0

    r = inv_diag * (b - A @ x)
    beta0 = np.linalg.norm(r)
    # beta0 is the preconditioned rhs norm when x0 = 0
    ref = beta0 if x0 is None else np.linalg.norm(inv_diag * b)
    if ref == 0.0:
        ref = 1.0
    history.append(beta0 / ref)

    converged = False
    while total_iters < cfg.max_iters:
        beta = np.linalg.norm(r)
        if beta == 0.0:
            converged = True
            break
        V = np.empty((m + 1, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        V[0] = r / beta
        g[0] = beta
        k_used = 0
        for k in range(m):
            if total_iters >= cfg.max_iters:
                break
            w = inv_diag * (A @ V[k])
            for i in range(k + 1):
                H[i, k] = w @ V[i]
                w -= H[i, k] * V[i]
            H[k + 1, k] = np.linalg.norm(w)
            if H[k + 1, k] > 0.0:
                V[k + 1] = w / H[k + 1, k]
            # apply accumulated Givens rotations to the new column
            for i in range(k):
                t = cs[i] * H[i, k] + sn[i] * H[i + 1, k]
                H[i + 1, k] = -sn[i] * H[i, k] + cs[i] * H[i + 1, k]
                H[i, k] = t
            denom = np.hypot(H[k, k], H[k + 1, k])
            cs[k] = H[k, k] / denom if denom else 1.0
            sn[k] = H[k + 1, k] / denom if denom else 0.0
            H[k, k] = denom
            H[k + 1, k] = 0.0
            g[k + 1] = -sn[k] * g[k]
            g[k] = cs[k] * g[k]
            total_iters += 1
            k_used = k + 1
            history.append(abs(g[k + 1]) / ref)
            if abs(g[k + 1]) <= cfg.tol * ref:
                converged = True
                break
            if H[k + 1, k] == 0.0 and abs(g[k + 1]) == 0.0:
                converged = True
                break
        if k_used > 0:
            y = np.linalg.solve(np.triu(H[:k_used, :k_used]), g[:k_used])
            x = x + y @ V[:k_used]
        r = inv_diag * (b - A @ x)
        if converged or np.linalg.norm(r) <= cfg.tol * ref:
            converged = True
            break

    pre_res = np.linalg.norm(inv_diag * (b - A @ x)) / ref
    true_res = np.linalg.norm(b - A @ x) / bnorm_true
    return GmresResult(x, total_iters, converged or pre_res <= cfg.tol,
                       pre_res, true_res, history)
