"""Independent reference computations used only by the tests.

Nothing here imports memlab; each oracle takes a different route from the
code it checks.
"""

import math

import numpy as np


def jacobi_eigenvalues(S, tol=1e-15, sweeps=100):
    """Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations."""
    A = np.array(S, dtype=np.float64)
    n = A.shape[0]
    for _ in range(sweeps):
        off = math.sqrt(sum(A[i, j] ** 2 for i in range(n) for j in range(n) if i != j))
        if off <= tol * max(1.0, np.abs(A).max()):
            break
        for p in range(n - 1):
            for r in range(p + 1, n):
                if A[p, r] == 0.0:
                    continue
                theta = (A[r, r] - A[p, p]) / (2 * A[p, r])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1))
                c = 1 / math.sqrt(t * t + 1)
                s = t * c
                J = np.eye(n)
                J[p, p] = J[r, r] = c
                J[p, r] = s
                J[r, p] = -s
                A = J.T @ A @ J
    return np.sort(np.diag(A))


def normal_cdf(x):
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def gauss_legendre_expectation(f, nodes=400, cutoff=12.0):
    """``E f(X)``, ``X ~ N(0,1)``, by Gauss-Legendre on ``[-cutoff, 0]`` and ``[0, cutoff]``.

    Splitting at 0 keeps kinks at the origin exact; the truncated tails
    weigh less than 1e-30.
    """
    t, w = np.polynomial.legendre.leggauss(nodes)
    total = 0.0
    for lo, hi in ((-cutoff, 0.0), (0.0, cutoff)):
        x = 0.5 * (hi - lo) * t + 0.5 * (hi + lo)
        pdf = np.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)
        total += 0.5 * (hi - lo) * float(np.dot(w, f(x) * pdf))
    return total


def numerical_rank(M, rel=1e-10):
    """Rank from the eigenvalues of the Gram matrix (Jacobi), for tiny matrices."""
    S = M @ M.T if M.shape[0] <= M.shape[1] else M.T @ M
    ev = jacobi_eigenvalues(S)
    top = max(ev.max(), 0.0)
    return int(np.sum(ev > rel * top)) if top > 0 else 0
