"""Slow, independent reference implementations used as test oracles.

None of these call into the package; they follow textbook definitions
(explicit DFT sums, block-circulant matrices, per-slice SVDs).
"""

import numpy as np


def naive_dft3(A):
    d3 = A.shape[2]
    k = np.arange(d3)
    Wm = np.exp(-2j * np.pi * np.outer(k, k) / d3)
    out = np.zeros(A.shape, dtype=complex)
    for j in range(d3):
        for t in range(d3):
            out[:, :, j] += Wm[j, t] * A[:, :, t]
    return out


def bcirc(A):
    """Block-circulant matrix with first block column A(:,:,0..d3-1)."""
    d1, d2, d3 = A.shape
    M = np.zeros((d1 * d3, d2 * d3))
    for i in range(d3):
        for j in range(d3):
            M[i * d1 : (i + 1) * d1, j * d2 : (j + 1) * d2] = A[:, :, (i - j) % d3]
    return M


def unfold(B):
    return np.concatenate([B[:, :, k] for k in range(B.shape[2])], axis=0)


def fold(M, d1, d3):
    return np.stack([M[k * d1 : (k + 1) * d1] for k in range(d3)], axis=2)


def tprod_bcirc(A, B):
    return fold(bcirc(A) @ unfold(B), A.shape[0], A.shape[2])


def slice_svals(A):
    F = naive_dft3(A)
    return np.stack([np.linalg.svd(F[:, :, j], compute_uv=False) for j in range(A.shape[2])], axis=1)


def ttnn_oracle(A):
    F = naive_dft3(A)
    return sum(np.linalg.norm(F[:, :, j], "nuc") for j in range(A.shape[2])) / A.shape[2]


def weighted_svt_oracle(G, W, inv_eta):
    """Per-slice weighted SVT computed on every slice independently with a
    full complex SVD (no conjugate mirroring)."""
    F = naive_dft3(G)
    out = np.zeros_like(F)
    for j in range(G.shape[2]):
        u, s, vh = np.linalg.svd(F[:, :, j], full_matrices=False)
        out[:, :, j] = (u * np.maximum(s - inv_eta * W[:, j], 0)) @ vh
    d3 = G.shape[2]
    k = np.arange(d3)
    Winv = np.exp(2j * np.pi * np.outer(k, k) / d3) / d3
    res = np.zeros(G.shape, dtype=complex)
    for t in range(d3):
        for j in range(d3):
            res[:, :, t] += Winv[t, j] * out[:, :, j]
    return res.real


def logistic_bregman_sym(X, B1, B2):
    """Symmetrized Bregman divergence of psi(s) = log(1 + e^s), averaged."""
    n = X.shape[0]
    s1 = X.reshape(n, -1) @ B1.ravel()
    s2 = X.reshape(n, -1) @ B2.ravel()
    psi = lambda s: np.log1p(np.exp(s))
    dpsi = lambda s: 1 / (1 + np.exp(-s))
    d12 = psi(s1) - psi(s2) - dpsi(s2) * (s1 - s2)
    d21 = psi(s2) - psi(s1) - dpsi(s1) * (s2 - s1)
    return float(np.mean(d12 + d21))
