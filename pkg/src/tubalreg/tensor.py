"""Dense 3-way tensor algebra under the t-product.

Tensors are plain ``numpy`` arrays of shape ``(d1, d2, d3)``; the third axis
indexes frontal slices. Fourier-domain tensors are complex arrays of the same
shape obtained with an unnormalized FFT along axis 2 (the inverse carries the
``1/d3`` factor), so ``sum(singular values) / d3`` is the tubal nuclear norm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, NegativeWeight, SvdFailure, SymmetryViolation

SYMMETRY_TOL = 1e-8
IMAG_TOL = 1e-10


def as_tensor3(A, name="tensor") -> np.ndarray:
    """Coerce ``A`` to a finite float64 array of shape (d1, d2, d3).

    Matrices are promoted to a single frontal slice.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim == 2:
        A = A[:, :, None]
    if A.ndim != 3 or min(A.shape) < 1:
        raise DimMismatch(f"{name} must be a non-empty 3-way array, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} has non-finite entries")
    return A


def t_identity(d: int, d3: int) -> np.ndarray:
    I = np.zeros((d, d, d3))
    I[:, :, 0] = np.eye(d)
    return I


def unique_slices(d3: int) -> range:
    """Fourier slice indices whose SVD determines all the others."""
    return range(d3 // 2 + 1)


def is_self_conjugate(j: int, d3: int) -> bool:
    return j == 0 or 2 * j == d3


def dft3(A) -> np.ndarray:
    """Unnormalized DFT of every mode-3 tube."""
    return np.fft.fft(as_tensor3(A), axis=2)


def symmetry_residual(F: np.ndarray) -> float:
    mirrored = np.conj(F[:, :, (-np.arange(F.shape[2])) % F.shape[2]])
    return float(np.max(np.abs(F - mirrored), initial=0.0))


def idft3(F, tol: float = SYMMETRY_TOL) -> np.ndarray:
    """Inverse of :func:`dft3`, returning a real tensor.

    Slices violating conjugate symmetry by at most ``tol`` (relative to the
    largest entry, floored at 1) are symmetrized first; anything worse raises
    :class:`SymmetryViolation`.
    """
    F = np.asarray(F, dtype=complex)
    if F.ndim != 3:
        raise DimMismatch(f"Fourier slices must be 3-way, got shape {F.shape}")
    scale = max(1.0, float(np.max(np.abs(F), initial=0.0)))
    resid = symmetry_residual(F)
    if resid > tol * scale:
        raise SymmetryViolation(f"conjugate-symmetry residual {resid:.3e} exceeds {tol:g}")
    if resid > 0.0:
        d3 = F.shape[2]
        F = 0.5 * (F + np.conj(F[:, :, (-np.arange(d3)) % d3]))
    A = np.fft.ifft(F, axis=2)
    imag = float(np.max(np.abs(A.imag), initial=0.0))
    if imag > IMAG_TOL * scale:
        raise SymmetryViolation(f"inverse transform has imaginary residue {imag:.3e}")
    return np.ascontiguousarray(A.real)


def tprod(A, B) -> np.ndarray:
    """t-product ``A * B``: slice-wise products in the Fourier domain."""
    A = as_tensor3(A, "A")
    B = as_tensor3(B, "B")
    if A.shape[1] != B.shape[0] or A.shape[2] != B.shape[2]:
        raise DimMismatch(f"cannot t-multiply shapes {A.shape} and {B.shape}")
    Fa, Fb = np.fft.fft(A, axis=2), np.fft.fft(B, axis=2)
    return idft3(np.einsum("ikj,klj->ilj", Fa, Fb))


def ttranspose(A) -> np.ndarray:
    """Transpose every frontal slice and reverse the order of slices 2..d3."""
    A = as_tensor3(A)
    d3 = A.shape[2]
    return np.ascontiguousarray(A.transpose(1, 0, 2)[:, :, (-np.arange(d3)) % d3])


def inner(A, B) -> float:
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape:
        raise DimMismatch(f"inner product of shapes {A.shape} and {B.shape}")
    return float(np.dot(A.ravel(), B.ravel()))


def fro_norm(A) -> float:
    return float(np.linalg.norm(np.asarray(A, dtype=float).ravel()))


def slice_svd(Fj: np.ndarray, j: int, real: bool, full_matrices: bool = False):
    """SVD of one Fourier slice; real slices stay real."""
    M = Fj.real if real else Fj
    try:
        return np.linalg.svd(M, full_matrices=full_matrices)
    except np.linalg.LinAlgError as exc:
        raise SvdFailure(j) from exc


def fourier_singular_values(A) -> np.ndarray:
    """Matrix ``sigma`` of shape (min(d1, d2), d3); column j holds the
    nonincreasing singular values of Fourier slice j."""
    F = dft3(A)
    d1, d2, d3 = F.shape
    sigma = np.empty((min(d1, d2), d3))
    for j in unique_slices(d3):
        real = is_self_conjugate(j, d3)
        try:
            s = np.linalg.svd(F[:, :, j].real if real else F[:, :, j], compute_uv=False)
        except np.linalg.LinAlgError as exc:
            raise SvdFailure(j) from exc
        sigma[:, j] = s
        if not real:
            sigma[:, d3 - j] = s
    return sigma


@dataclass(frozen=True)
class TSvd:
    """t-SVD ``A = U * S * V^T`` plus the Fourier singular-value matrix."""

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray
    sigma: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return tprod(tprod(self.U, self.S), ttranspose(self.V))


def tsvd(A) -> TSvd:
    F = dft3(A)
    d1, d2, d3 = F.shape
    k = min(d1, d2)
    Uf = np.zeros((d1, d1, d3), dtype=complex)
    Sf = np.zeros((d1, d2, d3), dtype=complex)
    Vf = np.zeros((d2, d2, d3), dtype=complex)
    sigma = np.empty((k, d3))
    diag = np.arange(k)
    for j in unique_slices(d3):
        real = is_self_conjugate(j, d3)
        u, s, vh = slice_svd(F[:, :, j], j, real, full_matrices=True)
        Uf[:, :, j] = u
        Vf[:, :, j] = vh.conj().T
        Sf[diag, diag, j] = s
        sigma[:, j] = s
        if not real:
            m = d3 - j
            Uf[:, :, m] = np.conj(u)
            Vf[:, :, m] = vh.T
            Sf[diag, diag, m] = s
            sigma[:, m] = s
    return TSvd(U=idft3(Uf), S=idft3(Sf), V=idft3(Vf), sigma=sigma)


def tubal_rank(A, rel_tol: float = 1e-8) -> int:
    """Number of singular tubes with some Fourier singular value above
    ``rel_tol`` times the largest one."""
    if rel_tol <= 0:
        raise ValueError("rel_tol must be positive")
    sigma = fourier_singular_values(A)
    smax = float(sigma.max(initial=0.0))
    if smax == 0.0:
        return 0
    return int(np.count_nonzero(sigma.max(axis=1) > rel_tol * smax))


def ttnn(A) -> float:
    """Tubal nuclear norm: mean over slices of the Fourier nuclear norms."""
    sigma = fourier_singular_values(A)
    return float(sigma.sum() / sigma.shape[1])


def wttnn(A, W) -> float:
    """Weighted tubal nuclear norm ``(1/d3) sum_ij w_ij sigma_ij``."""
    sigma = fourier_singular_values(A)
    W = np.asarray(W, dtype=float)
    if W.shape != sigma.shape:
        raise DimMismatch(f"weights shape {W.shape} != {sigma.shape}")
    if np.any(W < 0):
        raise NegativeWeight("weights must be nonnegative")
    return float(np.sum(W * sigma) / sigma.shape[1])


def spectral_penalty(A, penalty) -> float:
    """Penalty applied to every Fourier singular value, averaged over slices."""
    return penalty_from_sigma(fourier_singular_values(A), penalty)


def penalty_from_sigma(sigma: np.ndarray, penalty) -> float:
    return float(np.sum(penalty.value(sigma)) / sigma.shape[1])
