"""Singular-value machinery for symmetric adjacency matrices.

Exact factorization goes through a symmetric eigendecomposition: singular
values are the absolute eigenvalues sorted descending, left vectors are the
eigenvectors, and right vectors carry the eigenvalue signs.  On top of that
sit the subspace-energy window sum, its offset proximal operator, randomized
SVD with power iteration, and the column-sampled low-rank approximation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .rng import stream_rng

__all__ = [
    "SvdFactors",
    "GseParams",
    "RndSvdConfig",
    "full_svd",
    "reconstruct",
    "gse",
    "normalized_gse",
    "alpha_budget",
    "gse_offset_prox",
    "randomized_svd",
    "nystrom_approx",
    "pseudo_inverse",
    "singular_spectrum",
    "hoffman_wielandt_gap",
    "spectrum_window",
    "dump_matrix_csv",
]

_SYM_ATOL = 1e-8


@dataclass(frozen=True)
class SvdFactors:
    """Singular triplets: u (n x r), sigma (r, descending), v (n x r)."""

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    @property
    def rank(self) -> int:
        return self.sigma.size


@dataclass(frozen=True)
class GseParams:
    """Window fractions, offset, and objective weight for the energy term.

    The window covers singular-value indices k1+1..k2 (1-based) with
    k1 = floor(beta1*n), k2 = floor(beta2*n).  ``gamma`` weights the energy
    term in the training objective; the executed operator realizes it
    through the offset ``alpha``.
    """

    beta1: float
    beta2: float
    alpha: float = 0.0
    gamma: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.beta1 < self.beta2 <= 1.0):
            raise ValueError(
                f"need 0 <= beta1 < beta2 <= 1, got ({self.beta1}, {self.beta2})"
            )
        if self.alpha < 0:
            raise ValueError(f"alpha must be nonnegative, got {self.alpha}")

    def window(self, n: int):
        """(k1, k2) index bounds for a matrix of size n."""
        return spectrum_window(n, self.beta1, self.beta2)


def spectrum_window(n: int, beta1: float, beta2: float):
    """Window bounds k1 = floor(beta1*n), k2 = floor(beta2*n)."""
    if not (0.0 <= beta1 < beta2 <= 1.0):
        raise ValueError(f"need 0 <= beta1 < beta2 <= 1, got ({beta1}, {beta2})")
    return int(math.floor(beta1 * n)), int(math.floor(beta2 * n))


@dataclass(frozen=True)
class RndSvdConfig:
    """Randomized range finder: target rank k, oversampling p, power passes q."""

    k: int
    p: int = 5
    q: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"rank k must be >= 1, got {self.k}")
        if self.p < 0 or self.q < 0:
            raise ValueError(f"p and q must be nonnegative, got p={self.p}, q={self.q}")


def _as_dense(a) -> np.ndarray:
    if sp.issparse(a):
        return a.toarray()
    return np.asarray(a, dtype=np.float64)


def _check_symmetric(a: np.ndarray, what: str) -> np.ndarray:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{what} must be square, got shape {a.shape}")
    if not np.allclose(a, a.T, rtol=0.0, atol=_SYM_ATOL):
        raise ValueError(f"{what} must be symmetric")
    return a


def full_svd(a) -> SvdFactors:
    """Exact SVD of a symmetric matrix via its eigendecomposition.

    Eigenvector columns whose eigenvalue is negative get their sign flipped
    on the right factor, so ``u @ diag(sigma) @ v.T`` reproduces the input.
    """
    a = _check_symmetric(_as_dense(a), "input")
    eigvals, eigvecs = np.linalg.eigh(a)
    sigma = np.abs(eigvals)
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    u = eigvecs[:, order]
    signs = np.where(eigvals[order] < 0, -1.0, 1.0)
    v = u * signs
    return SvdFactors(u=u, sigma=sigma, v=v)


def reconstruct(factors: SvdFactors) -> np.ndarray:
    """Dense matrix assembled from the factors."""
    return (factors.u * factors.sigma) @ factors.v.T


def singular_spectrum(a) -> np.ndarray:
    """All singular values of a symmetric matrix, descending."""
    a = _check_symmetric(_as_dense(a), "input")
    vals = np.abs(np.linalg.eigvalsh(a))
    vals.sort()
    return vals[::-1]


def gse(a, beta1: float, beta2: float) -> float:
    """Sum of the singular values with index in (k1, k2].

    With the full window (beta1=0, beta2=1) this is the nuclear norm.
    """
    spectrum = singular_spectrum(a)
    k1, k2 = spectrum_window(spectrum.size, beta1, beta2)
    return float(spectrum[k1:k2].sum())


def normalized_gse(clean, perturbed, beta1: float, beta2: float) -> float:
    """Windowed energy of the perturbed matrix relative to the clean one."""
    clean = _as_dense(clean)
    perturbed = _as_dense(perturbed)
    if clean.shape != perturbed.shape:
        raise ValueError(f"shape mismatch: {clean.shape} vs {perturbed.shape}")
    base = gse(clean, beta1, beta2)
    if base <= 0.0:
        raise ZeroDivisionError("clean graph has zero energy in the window")
    return gse(perturbed, beta1, beta2) / base


def alpha_budget(delta: float, n: int) -> float:
    """Reference offset bound sqrt(delta / n) for a flip budget delta."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if delta < 0:
        raise ValueError(f"delta must be nonnegative, got {delta}")
    return math.sqrt(delta / n)


def gse_offset_prox(a, params: GseParams, svd_backend: RndSvdConfig | None = None) -> np.ndarray:
    """Rebuild from the top-k2 singular triplets with the window offset added.

    Singular values 1..k1 are kept, k1+1..k2 are raised by ``params.alpha``,
    and everything beyond k2 is discarded.  The result is re-symmetrized to
    absorb floating-point drift.

    Parameters
    ----------
    a : array or sparse matrix, symmetric
    params : GseParams
    svd_backend : None for the exact factorization, or a RndSvdConfig whose
        returned rank (k + p) must cover the window upper index k2.
    """
    a = _as_dense(a)
    n = a.shape[0]
    k1, k2 = params.window(n)
    if k2 == 0:
        raise ValueError(f"window is empty: k2 = floor({params.beta2} * {n}) = 0")
    if svd_backend is None:
        factors = full_svd(a)
    else:
        if svd_backend.k + svd_backend.p < k2:
            raise ValueError(
                f"randomized rank {svd_backend.k}+{svd_backend.p} below window end {k2}"
            )
        factors = randomized_svd(a, svd_backend)
    shifted = factors.sigma[:k2].copy()
    shifted[k1:k2] += params.alpha
    out = (factors.u[:, :k2] * shifted) @ factors.v[:, :k2].T
    return 0.5 * (out + out.T)


def randomized_svd(a, cfg: RndSvdConfig) -> SvdFactors:
    """Approximate SVD by random projection, QR, and a small dense SVD.

    Draws a Gaussian test matrix with k+p columns, optionally sharpens the
    range with q power passes, and lifts the SVD of the projected matrix
    back to the full space.  Returns all k+p triplets.  Deterministic given
    ``cfg.seed``.
    """
    n = a.shape[0]
    r = cfg.k + cfg.p
    if r > n:
        raise ValueError(f"k + p = {r} exceeds matrix size {n}")
    rng = stream_rng(cfg.seed, "rndsvd")
    omega = rng.standard_normal((a.shape[1], r))
    y = a @ omega
    for _ in range(cfg.q):
        y = a @ (a.T @ y)
    q_mat, _ = np.linalg.qr(y)
    b = (a.T @ q_mat).T
    u_b, sigma, vt = np.linalg.svd(b, full_matrices=False)
    return SvdFactors(u=q_mat @ u_b, sigma=sigma, v=vt.T)


def pseudo_inverse(w, tol: float = 1e-10) -> np.ndarray:
    """Moore-Penrose pseudo-inverse with singular values under tol*sigma_max zeroed."""
    w = _as_dense(w)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError(f"input must be square, got shape {w.shape}")
    u, s, vt = np.linalg.svd(w)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros_like(w.T)
    cutoff = tol * s[0]
    inv = np.where(s > cutoff, 1.0 / np.where(s > cutoff, s, 1.0), 0.0)
    return (vt.T * inv) @ u.T


def nystrom_approx(a, k: int, seed: int = 0) -> np.ndarray:
    """Low-rank reconstruction from k uniformly sampled columns.

    Samples column indices without replacement, forms the column block C and
    core block W, and returns ``C @ pinv(W) @ C.T``.  Exact at k = n for
    invertible symmetric input.  Deterministic given ``seed``.
    """
    n = a.shape[0]
    if not (1 <= k <= n):
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    rng = stream_rng(seed, "nystrom")
    cols = rng.permutation(n)[:k]
    if sp.issparse(a):
        c_block = a[:, cols].toarray()
    else:
        c_block = np.asarray(a, dtype=np.float64)[:, cols]
    w_block = c_block[cols, :]
    w_pinv = pseudo_inverse(w_block)
    return (c_block @ w_pinv) @ c_block.T


def dump_matrix_csv(a, path) -> None:
    """Debug dump: dense CSV, row-major, one matrix row per line."""
    a = _as_dense(a)
    with open(path, "w", encoding="utf-8") as fh:
        for row in np.atleast_2d(a):
            fh.write(",".join(format(x, ".17g") for x in row) + "\n")


def hoffman_wielandt_gap(a, e):
    """Summed squared singular-value drift vs. squared Frobenius energy of e.

    Returns ``(lhs, rhs)`` with lhs = sum_k (sigma_k(a+e) - sigma_k(a))^2 and
    rhs = ||e||_F^2; the drift never exceeds the perturbation energy.
    """
    a = _as_dense(a)
    e = _as_dense(e)
    if a.shape != e.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {e.shape}")
    _check_symmetric(a, "a")
    _check_symmetric(e, "e")
    drift = singular_spectrum(a + e) - singular_spectrum(a)
    lhs = float(np.sum(drift**2))
    rhs = float(np.sum(e**2))
    return lhs, rhs
