"""w-subproblem solvers: cached Cholesky paths and a dense reference.

The w-update solves (rho I_d + H^T H) w = f with H = Y X and rho = rho1 / rho2.
The system matrix never changes during a fit, so it is factored once:

    n >= d  (tall):  C = rho I_d + H^T H,         w = C^{-1} f
    d >  n  (wide):  C = I_n + (1/rho) H H^T,     w = f / rho - H^T C^{-1} H f / rho^2

The wide path is the Sherman-Morrison-Woodbury rewrite of the same inverse,
so both paths produce the same w up to rounding.
"""

import logging
import time
from dataclasses import dataclass
from enum import StrEnum

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from ncsvm.data import Dataset

logger = logging.getLogger(__name__)


class FactorizationError(RuntimeError):
    """Raised when the cached system matrix cannot be factored."""

    pass


class DimensionMismatchError(ValueError):
    """Raised when vector or matrix dimensions disagree."""

    pass


class Branch(StrEnum):
    """Which matrix is factored: d x d (tall data) or n x n (wide data)."""

    TALL = "tall"
    WIDE = "wide"


class HOperator:
    """Products with H = diag(y) X without materializing H.

    Since y_i is +1 or -1, H^T H = X^T X and H H^T = Y (X X^T) Y.
    """

    def __init__(self, ds: Dataset):
        """Initialize the operator.

        Args:
            ds: Dataset providing X and y
        """
        self.X = ds.features
        self.y = ds.labels
        self.shape = ds.features.shape

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """H x, length n."""
        return self.y * (self.X @ x)

    def rmatvec(self, r: np.ndarray) -> np.ndarray:
        """H^T r, length d."""
        return self.X.T @ (self.y * r)

    def dense(self) -> np.ndarray:
        """Materialized H; only for reference computations on small problems."""
        return self.y[:, None] * self.X.toarray()


@dataclass(frozen=True)
class FactorCache:
    """One-time Cholesky factorization C = L L^T for the w-update.

    Attributes:
        branch: TALL (C is d x d) or WIDE (C is n x n)
        chol: Lower-triangular factor L
        rho: rho1 / rho2
        n: Number of samples
        d: Number of features
        jittered: Whether a diagonal shift was needed to factor C
    """

    branch: Branch
    chol: np.ndarray
    rho: float
    n: int
    d: int
    jittered: bool = False

    @property
    def dim(self) -> int:
        return self.chol.shape[0]


def gram_matrix(X: sp.csr_matrix, wide: bool, dense_density: float = 0.25) -> np.ndarray:
    """X X^T (wide) or X^T X (tall) as a dense array.

    Sparse products are used unless X is dense enough that a BLAS product on
    the densified matrix is cheaper.
    """
    n, d = X.shape
    density = X.nnz / max(n * d, 1)
    if density >= dense_density:
        A = X.toarray()
        return A @ A.T if wide else A.T @ A
    product = X @ X.T if wide else X.T @ X
    return np.asarray(product.toarray())


def build_cache(
    ds: Dataset,
    rho1: float,
    rho2: float,
    *,
    branch: Branch | None = None,
    max_dense_dim: int = 20_000,
    dense_density: float = 0.25,
    jitter_scale: float = 1e-10,
) -> FactorCache:
    """Form C for the chosen branch and factor it once.

    Args:
        ds: Training data
        rho1: Penalty parameter of the w = z constraint
        rho2: Penalty parameter of the margin constraint
        branch: Force a branch regardless of shape (test hook); default picks
            TALL when n >= d
        max_dense_dim: Largest C dimension allowed in dense storage
        dense_density: Density above which Gram products use dense BLAS
        jitter_scale: Relative diagonal shift applied on a failed factorization

    Returns:
        FactorCache holding L with C = L L^T

    Raises:
        FactorizationError: If C is too large or not numerically positive definite
    """
    if not (rho1 > 0 and rho2 > 0):
        raise ValueError(f"rho1 and rho2 must be positive, got {rho1}, {rho2}")

    n, d = ds.features.shape
    if branch is None:
        branch = Branch.TALL if n >= d else Branch.WIDE
    rho = rho1 / rho2
    dim = d if branch is Branch.TALL else n
    if dim > max_dense_dim:
        raise FactorizationError(
            f"{branch.value} branch needs a dense {dim}x{dim} factorization, above the "
            f"limit of {max_dense_dim}; raise max_dense_dim if memory allows"
        )

    started = time.perf_counter()
    if branch is Branch.TALL:
        C = gram_matrix(ds.features, wide=False, dense_density=dense_density)
        C[np.diag_indices_from(C)] += rho
    else:
        C = gram_matrix(ds.features, wide=True, dense_density=dense_density)
        C *= np.outer(ds.labels, ds.labels) / rho
        C[np.diag_indices_from(C)] += 1.0

    jittered = False
    try:
        L = sla.cholesky(C, lower=True, check_finite=True)
    except (sla.LinAlgError, ValueError):
        shift = jitter_scale * np.trace(C) / dim
        logger.info(
            "Cholesky of the %dx%d system failed; retrying with diagonal shift %.3e", dim, dim, shift
        )
        C[np.diag_indices_from(C)] += shift
        try:
            L = sla.cholesky(C, lower=True, check_finite=True)
        except (sla.LinAlgError, ValueError) as e:
            raise FactorizationError(
                f"system matrix is not numerically positive definite ({e}); "
                f"try a larger rho1/rho2 ratio or a larger jitter_scale"
            )
        jittered = True

    logger.info(
        "Factored %s-branch system (%dx%d, rho=%.4g) in %.3fs",
        branch.value,
        dim,
        dim,
        rho,
        time.perf_counter() - started,
    )
    return FactorCache(branch=branch, chol=L, rho=rho, n=n, d=d, jittered=jittered)


def _cho_solve(cache: FactorCache, rhs: np.ndarray) -> np.ndarray:
    return sla.cho_solve((cache.chol, True), rhs, check_finite=False)


def solve_w(cache: FactorCache, h: HOperator, f: np.ndarray) -> np.ndarray:
    """Solve (rho I_d + H^T H) w = f using the cached factor.

    Raises:
        DimensionMismatchError: If f or H do not match the cache dimensions
    """
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (cache.d,):
        raise DimensionMismatchError(f"f has shape {f.shape}, expected ({cache.d},)")
    if h.shape != (cache.n, cache.d):
        raise DimensionMismatchError(
            f"operator shape {h.shape} does not match cache ({cache.n}, {cache.d})"
        )

    if cache.branch is Branch.TALL:
        return _cho_solve(cache, f)
    rho = cache.rho
    t = _cho_solve(cache, h.matvec(f))
    return f / rho - h.rmatvec(t) / (rho * rho)


def assemble_f(
    z: np.ndarray,
    u: np.ndarray,
    s: np.ndarray,
    xi: np.ndarray,
    v: np.ndarray,
    b: float,
    h: HOperator,
    rho: float,
) -> np.ndarray:
    """f = rho (z - u) + H^T (s + 1 - xi - v - b y)."""
    n, d = h.shape
    if z.shape != (d,) or u.shape != (d,):
        raise DimensionMismatchError(f"z and u must have length {d}")
    if s.shape != (n,) or xi.shape != (n,) or v.shape != (n,):
        raise DimensionMismatchError(f"s, xi and v must have length {n}")
    return rho * (z - u) + h.rmatvec(s + 1.0 - xi - v - b * h.y)


def _naive_system(ds: Dataset, rho1: float, rho2: float) -> np.ndarray:
    A = rho2 * gram_matrix(ds.features, wide=False, dense_density=0.0)
    A[np.diag_indices_from(A)] += rho1
    return A


def solve_w_naive(ds: Dataset, rho1: float, rho2: float, f_unscaled: np.ndarray) -> np.ndarray:
    """Dense reference: solve (rho1 I_d + rho2 H^T H) w = f_unscaled directly.

    f_unscaled is rho1 (z - u) + rho2 H^T (...), i.e. rho2 times the f that
    solve_w expects. No structure of H is exploited.
    """
    f_unscaled = np.asarray(f_unscaled, dtype=np.float64)
    if f_unscaled.shape != (ds.n_features,):
        raise DimensionMismatchError(
            f"f has shape {f_unscaled.shape}, expected ({ds.n_features},)"
        )
    try:
        return sla.solve(_naive_system(ds, rho1, rho2), f_unscaled, assume_a="sym")
    except sla.LinAlgError as e:
        raise FactorizationError(f"naive w-system could not be solved: {e}")


def naive_inverse(ds: Dataset, rho1: float, rho2: float) -> np.ndarray:
    """Explicit (rho1 I_d + rho2 H^T H)^{-1}, the O(d^3) precomputation of the naive update."""
    return sla.inv(_naive_system(ds, rho1, rho2))
