"""Linear next-point prediction shared by encoder and decoder.

A coefficient vector ``c`` of length k predicts a 2-D point from the k previous
(reconstructed) points ``h`` ordered oldest to newest::

    pred = c[0] * h[k-1] + c[1] * h[k-2] + ... + c[k-1] * h[0]

The same scalar coefficients apply to x and y. The accumulation order above is
part of the contract: the encoder and every replay path must produce identical
floating point results.
"""
from __future__ import annotations

import numpy as np

RIDGE = 1e-9


def fit_coefficients(histories, targets, k: int) -> np.ndarray:
    """Least-squares coefficient vector over a set of (history, target) windows.

    histories: (n, k, 2) reconstructed points, oldest first; targets: (n, 2).
    Solved through the normal equations with a tiny ridge term so rank-deficient
    windows (e.g. parked vehicles) still give a bounded, near minimum-norm answer.
    """
    H = np.asarray(histories, dtype=np.float64)
    Y = np.asarray(targets, dtype=np.float64)
    if H.ndim != 3 or len(H) == 0:
        raise ValueError("no training data")
    if H.shape[1] != k or H.shape[2] != 2:
        raise ValueError(f"histories must have shape (n, {k}, 2), got {H.shape}")
    # design matrix: column j is lag j+1, rows are x then y of every window
    A = H[:, ::-1, :].transpose(0, 2, 1).reshape(-1, k)
    b = Y.reshape(-1)
    G = A.T @ A
    G[np.diag_indices(k)] += RIDGE
    return np.linalg.solve(G, A.T @ b)


def predict(coeffs, history) -> np.ndarray:
    """Predicted point(s) from k previous points.

    ``history`` is (k, 2) for one trajectory or (n, k, 2) for a batch.
    """
    c = np.asarray(coeffs, dtype=np.float64)
    h = np.asarray(history, dtype=np.float64)
    k = len(c)
    if h.shape[-2] != k:
        raise ValueError(f"history has {h.shape[-2]} points, coefficients expect {k}")
    acc = np.zeros(h.shape[:-2] + (2,))
    for j in range(k):
        acc = acc + c[j] * h[..., k - 1 - j, :]
    return acc


def predict_point(coeffs, history) -> tuple[float, float]:
    """Scalar version of :func:`predict` for replay; bit-identical to it."""
    k = len(coeffs)
    px = 0.0
    py = 0.0
    for j in range(k):
        c = float(coeffs[j])
        hx, hy = history[k - 1 - j]
        px = px + c * float(hx)
        py = py + c * float(hy)
    return px, py


def fit_ar_feature(history, k: int) -> tuple[np.ndarray, bool]:
    """AR(k) parameters of one trajectory's own recent motion.

    x and y contribute one regression row each per step; every regression column
    is centred on its own mean (equivalent to fitting an intercept), so an exact
    AR process is recovered exactly and a constant series gives all zeros.
    Returns ``(params, ok)``; ``ok`` is False when fewer than k + 1 points exist.
    """
    P = np.asarray(history, dtype=np.float64).reshape(-1, 2)
    n = len(P)
    if n < k + 1:
        return np.zeros(k), False
    rows = []
    targets = []
    for axis in range(2):
        s = P[:, axis]
        y = s[k:]
        X = np.stack([s[k - j: n - j] for j in range(1, k + 1)], axis=1)
        rows.append(X - X.mean(axis=0))
        targets.append(y - y.mean())
    A = np.concatenate(rows)
    b = np.concatenate(targets)
    params, *_ = np.linalg.lstsq(A, b, rcond=None)
    return params, True
