"""Smoothed logarithmic surrogate objective: a scalar kernel that is quadratic
below a threshold and logarithmic above it, summed over singular values
(spectral part) and over row l2-norms (sparsity part), plus the exact
gradients and the quadratic models built around a reference point.

Infinite smoothing parameters select the pure quadratic branch everywhere,
which makes the algorithm's initial state well-defined without special cases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import as_matrix, row_norms

__all__ = [
    "SmoothingParams",
    "f_tau",
    "f_tau_prime",
    "f_lowrank",
    "f_sparse",
    "f_total",
    "grad_f_sparse",
    "grad_f_lowrank",
    "q_lowrank",
    "q_sparse",
]

#: singular values below this fraction of sigma_1 are treated as exact zeros
#: before the scalar kernel is applied (f(0) = 0, so this only suppresses
#: log-of-roundoff noise)
_SV_CLAMP_RTOL = 1e-14


@dataclass(frozen=True)
class SmoothingParams:
    """Spectral (eps) and row (delta) smoothing thresholds; both > 0,
    infinity meaning the fully quadratic regime."""

    eps: float
    delta: float

    def __post_init__(self):
        if not (self.eps > 0 and self.delta > 0):
            raise ValueError(f"smoothing parameters must be positive, got {self}")


def f_tau(t: float, tau: float) -> float:
    """Scalar kernel: t^2/2 for |t| <= tau, else (tau^2/2) log(e t^2/tau^2)."""
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    t = float(t)
    if abs(t) <= tau:
        return 0.5 * t * t
    return 0.5 * tau * tau * (1.0 + 2.0 * math.log(abs(t) / tau))


def f_tau_prime(t: float, tau: float) -> float:
    """Derivative of ``f_tau``: tau^2 t / max(t^2, tau^2)."""
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    t = float(t)
    if abs(t) <= tau:
        return t
    return tau * tau * t / (t * t)


def _f_tau_vec(values: np.ndarray, tau: float) -> float:
    if math.isinf(tau):
        return 0.5 * float(np.sum(values * values))
    out = 0.0
    for v in values:
        out += f_tau(v, tau)
    return out


def f_lowrank(X: np.ndarray, eps: float) -> float:
    """Spectral part: sum of the kernel over the singular values of X."""
    X = as_matrix(X)
    sig = np.linalg.svd(X, compute_uv=False)
    if sig[0] > 0:
        sig = np.where(sig < _SV_CLAMP_RTOL * sig[0], 0.0, sig)
    return _f_tau_vec(sig, eps)


def f_sparse(X: np.ndarray, delta: float) -> float:
    """Sparsity part: sum of the kernel over the row l2-norms of X."""
    return _f_tau_vec(row_norms(as_matrix(X)), delta)


def f_total(X: np.ndarray, params: SmoothingParams) -> float:
    """Full surrogate objective, spectral plus sparsity part."""
    return f_lowrank(X, params.eps) + f_sparse(X, params.delta)


def grad_f_sparse(X: np.ndarray, delta: float) -> np.ndarray:
    """Gradient of the sparsity part: row i is delta^2 X_i / max(|X_i|^2, delta^2)."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    X = as_matrix(X)
    if math.isinf(delta):
        return X.copy()
    nrm2 = row_norms(X) ** 2
    scale = delta**2 / np.maximum(nrm2, delta**2)
    return scale[:, None] * X


def grad_f_lowrank(X: np.ndarray, eps: float) -> np.ndarray:
    """Gradient of the spectral part: U diag(sigma_i min(eps^2/sigma_i^2, 1)) V'."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    X = as_matrix(X)
    if math.isinf(eps):
        return X.copy()
    U, sig, Vt = np.linalg.svd(X, full_matrices=False)
    scaled = np.where(sig > eps, eps**2 / np.maximum(sig, eps), sig)
    return (U * scaled) @ Vt


def q_lowrank(Z: np.ndarray, X: np.ndarray, eps: float) -> float:
    """Quadratic model of the spectral part anchored at X.

    ``f_lowrank(X) + <grad, Z - X> + 0.5 <Z - X, W_lr (Z - X)>`` with the
    spectral weight built from (X, eps). Majorizes ``f_lowrank`` globally.
    """
    from .weights import build_weight, apply_w_lowrank

    Z = as_matrix(Z)
    X = as_matrix(X)
    ws = build_weight(X, eps, np.inf)
    D = Z - X
    return (
        f_lowrank(X, eps)
        + float(np.sum(grad_f_lowrank(X, eps) * D))
        + 0.5 * float(np.sum(D * apply_w_lowrank(ws, D)))
    )


def q_sparse(Z: np.ndarray, X: np.ndarray, delta: float) -> float:
    """Quadratic model of the sparsity part anchored at X (see ``q_lowrank``)."""
    from .weights import build_weight, apply_w_sparse

    Z = as_matrix(Z)
    X = as_matrix(X)
    ws = build_weight(X, np.inf, delta)
    D = Z - X
    return (
        f_sparse(X, delta)
        + float(np.sum(grad_f_sparse(X, delta) * D))
        + 0.5 * float(np.sum(D * apply_w_sparse(ws, D)))
    )
