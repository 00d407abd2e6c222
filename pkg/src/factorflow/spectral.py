"""Dense symmetric linear algebra: Jacobi eigendecomposition, norms,
effective rank, best rank-L approximation, symmetrization.

The eigensolver is a cyclic Jacobi iteration (row-major sweeps over the upper
triangle) rather than a LAPACK call: it is dependency-free, bitwise
reproducible, and accurate enough for the dense n <= a few hundred matrices
used throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .prng import SplitMix64

RANK_TOL = 1e-12            # relative numerical-rank threshold
_JACOBI_TOL = 1e-13         # off-diagonal Frobenius target, relative to ||M||_F
_MAX_SWEEPS = 100


class SpectralError(ValueError):
    pass


def as_symmetric(m) -> np.ndarray:
    """Validate a square, exactly symmetric float matrix and return it as ndarray."""
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise SpectralError(f"expected a square matrix, got shape {a.shape}")
    if not np.array_equal(a, a.T):
        raise SpectralError("matrix is not exactly symmetric; use symmetrize() first")
    return a


def symmetrize(m) -> np.ndarray:
    """Return (M + M^T)/2; exact symmetry holds bitwise since a+b == b+a."""
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise SpectralError(f"expected a square matrix, got shape {a.shape}")
    return 0.5 * (a + a.T)


@dataclass
class SymmetricSpectrum:
    """Eigendecomposition W = V diag(eigenvalues) V^T, eigenvalues non-increasing."""

    dim: int
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # column i pairs with eigenvalues[i]

    def matrix(self) -> np.ndarray:
        v = self.eigenvectors
        return symmetrize(v @ np.diag(self.eigenvalues) @ v.T)

    def validate(self, original: np.ndarray | None = None) -> None:
        v = self.eigenvectors
        n = self.dim
        if np.abs(v.T @ v - np.eye(n)).max() > 1e-12:
            raise SpectralError("eigenvector matrix is not orthogonal to 1e-12")
        if np.any(np.diff(self.eigenvalues) > 0):
            raise SpectralError("eigenvalues are not sorted non-increasing")
        if original is not None:
            rec = np.linalg.norm(v @ np.diag(self.eigenvalues) @ v.T - original)
            if rec > 1e-10 * max(1.0, np.linalg.norm(original)):
                raise SpectralError(f"reconstruction error {rec:.3e} exceeds tolerance")


def eigh(m) -> SymmetricSpectrum:
    """Cyclic-Jacobi eigendecomposition of a symmetric matrix.

    Sweeps the upper triangle in row-major order; each rotation zeroes its
    pivot exactly and the 2x2 diagonal update uses the tangent formula, which
    keeps the accumulated factorization accurate to ~1e-12 relative.
    Eigenvalues are sorted descending with a stable sort, so ties keep the
    Jacobi output order.
    """
    a = as_symmetric(m).copy()
    n = a.shape[0]
    v = np.eye(n)
    norm_f = np.linalg.norm(a)
    thresh = _JACOBI_TOL * norm_f
    converged = False
    for _ in range(_MAX_SWEEPS):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= thresh:
            converged = True
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta == 0.0:
                    t = 1.0
                else:
                    t = np.sign(theta) / (abs(theta) + np.hypot(theta, 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                newp = c * ap - s * aq
                newq = s * ap + c * aq
                newp[p] = ap[p] - t * apq
                newq[q] = aq[q] + t * apq
                newp[q] = 0.0
                newq[p] = 0.0
                a[p, :] = newp
                a[:, p] = newp
                a[q, :] = newq
                a[:, q] = newq
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        converged = np.linalg.norm(a - np.diag(np.diag(a))) <= thresh
    if not converged:
        raise SpectralError(
            f"Jacobi sweeps did not reduce the off-diagonal norm below "
            f"{_JACOBI_TOL:g}*||M||_F within {_MAX_SWEEPS} sweeps"
        )
    w = np.diag(a).copy()
    order = np.argsort(-w, kind="stable")
    spec = SymmetricSpectrum(dim=n, eigenvalues=w[order], eigenvectors=v[:, order])
    spec.validate(as_symmetric(m))
    return spec


def spectrum_from_eigenvalues(values, n: int | None = None,
                              eigenvector_seed: int | None = None) -> SymmetricSpectrum:
    """Spectrum with prescribed leading eigenvalues, zero-padded to dimension n.

    With a seed, V is a random orthogonal matrix (QR of a seeded Gaussian,
    diag(R) made positive for uniqueness); otherwise V = I.
    """
    vals = np.asarray(values, dtype=float)
    n = len(vals) if n is None else int(n)
    if n < len(vals):
        raise SpectralError("ambient dimension n is smaller than the eigenvalue list")
    w = np.zeros(n)
    w[: len(vals)] = vals
    order = np.argsort(-w, kind="stable")
    w = w[order]
    if eigenvector_seed is None:
        v = np.eye(n)
    else:
        g = SplitMix64(eigenvector_seed).gaussians((n, n))
        v, r = np.linalg.qr(g)
        v = v * np.sign(np.diag(r))
    return SymmetricSpectrum(dim=n, eigenvalues=w, eigenvectors=v)


def norms_from_eigenvalues(w) -> tuple[float, float, float]:
    """(spectral, frobenius, nuclear) of a symmetric matrix with eigenvalues w."""
    aw = np.abs(np.asarray(w, dtype=float))
    return float(aw.max(initial=0.0)), float(np.sqrt(np.sum(aw ** 2))), float(np.sum(aw))


def matrix_norms(m) -> tuple[float, float, float]:
    """(spectral, frobenius, nuclear) norms; singular values of a symmetric
    matrix are the absolute eigenvalues."""
    return norms_from_eigenvalues(eigh(m).eigenvalues)


def effective_rank_from_eigenvalues(w) -> float:
    spectral, _, nuclear = (lambda t: (t[0], t[1], t[2]))(norms_from_eigenvalues(w))
    if spectral == 0.0:
        raise SpectralError("effective rank undefined for the zero matrix")
    return nuclear / spectral


def effective_rank(m) -> float:
    """Nuclear norm over spectral norm; in [1, rank(m)], undefined at zero."""
    return effective_rank_from_eigenvalues(eigh(m).eigenvalues)


def numerical_rank(w) -> int:
    aw = np.abs(np.asarray(w, dtype=float))
    return int(np.sum(aw > RANK_TOL * aw.max(initial=0.0)))


def best_rank_approx(spectrum: SymmetricSpectrum, rank: int) -> np.ndarray:
    """Sum of the leading `rank` terms lambda_i v_i v_i^T in descending
    signed-eigenvalue order (the PSD convention)."""
    if not 1 <= rank <= spectrum.dim:
        raise SpectralError(f"rank {rank} out of range [1, {spectrum.dim}]")
    v = spectrum.eigenvectors[:, :rank]
    return symmetrize(v @ np.diag(spectrum.eigenvalues[:rank]) @ v.T)
