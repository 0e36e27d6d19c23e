"""Dense matrix/vector kernels used by the memorization lab.

Matrices and vectors are plain ``numpy.ndarray`` objects (2-D and 1-D,
float64 unless a caller opts into float32). Every function here is pure:
inputs are never modified.
"""

import numpy as np

__all__ = [
    "SpectralNormError",
    "basis_rows",
    "matvec",
    "orthonormal_rows",
    "rank1_accumulate",
    "row_norms_squared",
    "spectral_norm",
]

_START_SEED = 0


class SpectralNormError(RuntimeError):
    """Power iteration did not reach the requested tolerance.

    The last iterate is kept on ``estimate`` so callers can still log it.
    """

    def __init__(self, message, estimate, iterations):
        super().__init__(message)
        self.estimate = estimate
        self.iterations = iterations


def _as_matrix(A, name="A"):
    A = np.asarray(A)
    if A.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} has non-finite entries")
    return A


def _as_vector(x, name="x"):
    x = np.asarray(x)
    if x.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} has non-finite entries")
    return x


def matvec(A, x):
    """Return ``A @ x`` after checking that the inner dimensions agree."""
    A = _as_matrix(A)
    x = _as_vector(x)
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: A is {A.shape}, x has dim {x.shape[0]}")
    return A @ x


def rank1_accumulate(A, s, u, v):
    """Return ``A + s * outer(u, v)`` as a new matrix."""
    A = _as_matrix(A)
    u = _as_vector(u, "u")
    v = _as_vector(v, "v")
    if A.shape != (u.shape[0], v.shape[0]):
        raise ValueError(
            f"dimension mismatch: A is {A.shape}, u has dim {u.shape[0]}, v has dim {v.shape[0]}"
        )
    return A + s * np.outer(u, v)


def row_norms_squared(A):
    """Squared Euclidean norm of every row of ``A``."""
    A = _as_matrix(A)
    if A.size == 0:
        raise ValueError("A must be nonempty")
    return np.einsum("ij,ij->i", A, A)


def _start_vector(n, dtype):
    v = np.random.default_rng(_START_SEED).standard_normal(n)
    return (v / np.linalg.norm(v)).astype(dtype, copy=False)


def spectral_norm(A, tol=1e-8, max_iter=None):
    """Largest singular value of ``A`` by power iteration.

    Iterates on the Gram matrix of the smaller side (``A.T @ A`` when
    ``A`` is tall, ``A @ A.T`` when wide) from a fixed seeded start
    vector, so the result is deterministic and
    ``spectral_norm(A) == spectral_norm(A.T)``.

    Stopping uses the observed geometric contraction of successive
    changes to estimate the remaining error, so the returned value is
    within ``tol`` (relative) of the limit rather than merely changing
    by less than ``tol``.

    Parameters
    ----------
    A : array_like, shape (rows, cols)
    tol : float
        Relative tolerance on the singular value.
    max_iter : int, optional
        Defaults to ``10 * max(rows, cols)``.

    Raises
    ------
    SpectralNormError
        If the tolerance is not met within ``max_iter`` iterations.
    """
    A = _as_matrix(A)
    if A.size == 0:
        raise ValueError("A must be nonempty")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter is None:
        max_iter = 10 * max(A.shape)
    if A.shape[1] > A.shape[0]:
        A = A.T
    dtype = np.result_type(A.dtype, np.float32)
    eps = np.finfo(dtype).eps

    v = _start_vector(A.shape[1], dtype)
    sigma_prev = None
    change_prev = None
    sigma = 0.0
    for it in range(1, max_iter + 1):
        Av = A @ v
        sigma = float(np.linalg.norm(Av))
        if sigma == 0.0:
            # start vector in the null space; only possible for A = 0 in practice
            if not np.any(A):
                return 0.0
            raise SpectralNormError("start vector annihilated by A", 0.0, it)
        w = A.T @ Av
        v = w / np.linalg.norm(w)
        if sigma_prev is not None:
            change = abs(sigma - sigma_prev)
            if change <= 8 * eps * sigma:
                return sigma
            if change_prev:
                rho = change / change_prev
                if rho < 1 and change * rho / (1 - rho) <= tol * sigma:
                    return sigma
            change_prev = change
        sigma_prev = sigma
    raise SpectralNormError(
        f"power iteration did not converge in {max_iter} iterations (last estimate {sigma:.12g})",
        sigma,
        max_iter,
    )


def orthonormal_rows(G, rank_tol=1e-12):
    """Orthonormalize the rows of a ``q x d`` matrix (``q <= d``).

    Householder QR of ``G.T`` followed by flipping each column of ``Q`` to
    make ``diag(R)`` positive. With standard Gaussian ``G`` the result is
    Haar distributed on the Stiefel manifold.

    Returns
    -------
    ndarray, shape (q, d)
        ``W`` with ``W @ W.T == I_q`` to rounding.
    """
    G = _as_matrix(G, "G")
    q, d = G.shape
    if q == 0 or q > d:
        raise ValueError(f"need 1 <= q <= d, got q={q}, d={d}")
    # numpy's QR is LAPACK geqrf/orgqr, i.e. Householder reflections
    Q, R = np.linalg.qr(G.T, mode="reduced")
    diag = np.diag(R)
    scale = np.abs(diag).max()
    if scale == 0 or np.any(np.abs(diag) <= rank_tol * scale):
        raise ValueError("input is rank deficient")
    Q = Q * np.sign(diag)
    return np.ascontiguousarray(Q.T)


def basis_rows(q, d, dtype=np.float64):
    """The first ``q`` rows of ``I_d``, the deterministic orthonormal init."""
    if not 1 <= q <= d:
        raise ValueError(f"need 1 <= q <= d, got q={q}, d={d}")
    return np.eye(q, d, dtype=dtype)
