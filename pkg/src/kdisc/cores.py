"""Core functions averaged by the statistics, and score models for the KSD.

Three scalar cores are provided (``mmd_core``, ``hsic_core``, ``stein_kernel``)
along with vectorised core objects bound to a data set. A core object ``h``
exposes ``h.n`` (number of indexable observations) and ``h(I, J)`` returning
``h(X_I[t], X_J[t])`` for index arrays; these are what design statistics average.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _accel
from .exceptions import DimensionError, KdiscError
from .kernels import (
    Kernel,
    MeanKernel,
    _require_smooth,
    _as_point,
    as_samples,
    cross_partial_trace,
    evaluate,
    grad_x,
    kernel_pairs,
    radial_derivatives,
)

# -- score models ------------------------------------------------------------


class ScoreModel:
    """Score ``s_P(x) = grad log p(x)`` of a model distribution.

    Subclasses implement ``score(X)`` for an ``n x d`` matrix. Implementations
    must be stateless so concurrent calls are safe.
    """

    dim: int

    def score(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, X) -> np.ndarray:
        A = as_samples(X)
        if A.shape[1] != self.dim:
            raise DimensionError(f"score model has dimension {self.dim}, data has {A.shape[1]}")
        S = np.asarray(self.score(A), dtype=np.float64)
        if S.shape != A.shape:
            raise DimensionError(f"score output has shape {S.shape}, expected {A.shape}")
        if not np.all(np.isfinite(S)):
            raise KdiscError("score model returned non-finite values")
        return np.ascontiguousarray(S)


class DiagonalGaussian(ScoreModel):
    """Gaussian with per-coordinate variances: ``s(x) = -(x - mean) / var``."""

    def __init__(self, mean, variances):
        mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
        variances = np.broadcast_to(np.asarray(variances, dtype=np.float64), mean.shape).copy()
        if mean.ndim != 1:
            raise DimensionError("mean must be a vector")
        if not np.all(np.isfinite(mean)) or not np.all(np.isfinite(variances)):
            raise KdiscError("Gaussian parameters must be finite")
        if np.any(variances <= 0):
            raise KdiscError("variances must be positive")
        self.mean = mean
        self.variances = variances
        self.dim = mean.shape[0]

    def score(self, X):
        return -(X - self.mean) / self.variances

    def to_dict(self):
        return {
            "model": "gaussian",
            "mean": self.mean.tolist(),
            "variance": self.variances.tolist(),
        }


class IsotropicGaussian(DiagonalGaussian):
    """Gaussian ``N(mean, variance * I)``."""

    def __init__(self, mean, variance: float = 1.0):
        if np.ndim(variance) != 0:
            raise KdiscError("isotropic variance must be a scalar")
        super().__init__(mean, variance)
        self.variance = float(variance)


class CustomScore(ScoreModel):
    """Wrap a user-supplied vectorised score callback ``fn(X) -> n x d``."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], dim: int):
        self.fn = fn
        self.dim = int(dim)

    def score(self, X):
        return self.fn(X)


@dataclass(frozen=True)
class PairedSample:
    """Paired observations ``Z_i = (X_i, Y_i)``."""

    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        X = as_samples(self.X, "X")
        Y = as_samples(self.Y, "Y")
        if X.shape[0] != Y.shape[0]:
            raise DimensionError(f"paired samples need equal row counts, got {X.shape[0]} and {Y.shape[0]}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return self.X.shape[0]


# -- scalar cores --------------------------------------------------------------


def mmd_core(kernel: Kernel, x, x2, y, y2) -> float:
    """``k(x, x') - k(x', y) - k(x, y') + k(y, y')``."""
    return evaluate(kernel, x, x2) - evaluate(kernel, x2, y) - evaluate(kernel, x, y2) + evaluate(kernel, y, y2)


def hsic_core(kx: Kernel, ky: Kernel, zi, zj, zr, zs) -> float:
    """Symmetric HSIC core ``(1/4) h_MMD^x(X_i, X_j; X_r, X_s) h_MMD^y(Y_i, Y_j; Y_r, Y_s)``.

    Each ``z`` is an ``(x, y)`` pair.
    """
    hx = mmd_core(kx, zi[0], zj[0], zr[0], zs[0])
    hy = mmd_core(ky, zi[1], zj[1], zr[1], zs[1])
    return 0.25 * hx * hy


def stein_kernel(kernel: Kernel, score: ScoreModel, x, y) -> float:
    """Langevin Stein kernel ``h_P(x, y)``."""
    _require_smooth(kernel)
    a = _as_point(x, "x")
    b = _as_point(y, "y")
    if a.shape[1] != b.shape[1]:
        raise DimensionError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    sx = score(a)[0]
    sy = score(b)[0]
    k = evaluate(kernel, x, y)
    gx = grad_x(kernel, x, y)
    gy = grad_x(kernel, y, x)
    return float(np.dot(sx, sy) * k + np.dot(sx, gy) + np.dot(sy, gx) + cross_partial_trace(kernel, x, y))


# -- vectorised Stein kernel ---------------------------------------------------


def _stein_from_terms(kernel, sq, ss, cr, d):
    if isinstance(kernel, MeanKernel):
        out = _stein_from_terms(kernel.kernels[0], sq, ss, cr, d)
        for k in kernel.kernels[1:]:
            out += _stein_from_terms(k, sq, ss, cr, d)
        out /= len(kernel.kernels)
        return out
    f, g, f2 = radial_derivatives(kernel, sq)
    lam2 = kernel.bandwidth * kernel.bandwidth
    out = ss * f
    out += g * cr / lam2
    out -= (f2 + (d - 1) * g) / lam2
    return out


def stein_gram(kernel: Kernel, X: np.ndarray, SX: np.ndarray, Y: np.ndarray, SY: np.ndarray) -> np.ndarray:
    """Matrix ``h_P(X_i, Y_j)`` given precomputed scores ``SX = s_P(X)``, ``SY = s_P(Y)``."""
    _require_smooth(kernel)
    sq, ss, cr = _accel.stein_cross_terms(X, SX, Y, SY)
    return _stein_from_terms(kernel, sq, ss, cr, X.shape[1])


# -- core objects for design statistics ---------------------------------------


class PairedMMDCore:
    """``h(i, j) = h_MMD(X_i, X_j; Y_i, Y_j)`` for equal-size samples."""

    def __init__(self, kernel: Kernel, X, Y):
        self.kernel = kernel
        self.X = as_samples(X, "X")
        self.Y = as_samples(Y, "Y")
        if self.X.shape != self.Y.shape:
            raise DimensionError(f"paired MMD core needs equal shapes, got {self.X.shape} and {self.Y.shape}")
        self.n = self.X.shape[0]

    def __call__(self, I, J):
        k, X, Y = self.kernel, self.X, self.Y
        out = kernel_pairs(k, X, X, I, J)
        out -= kernel_pairs(k, X, Y, J, I)
        out -= kernel_pairs(k, X, Y, I, J)
        out += kernel_pairs(k, Y, Y, I, J)
        return out

    def scalar(self, i, j):
        X, Y = self.X, self.Y
        return mmd_core(self.kernel, X[i], X[j], Y[i], Y[j])


class ShiftedHSICCore:
    """``h(i, j) = h_HSIC(Z_i, Z_j, Z_{i+N/2}, Z_{j+N/2})`` with indices modulo N."""

    def __init__(self, kx: Kernel, ky: Kernel, X, Y):
        paired = PairedSample(X, Y)
        if paired.n % 2:
            raise DimensionError(f"shifted HSIC core needs an even sample size, got {paired.n}")
        self.kx, self.ky = kx, ky
        self.X, self.Y = paired.X, paired.Y
        self.n = paired.n
        self.shift = self.n // 2

    def partner(self, I):
        return (I + self.shift) % self.n

    def __call__(self, I, J):
        Ip, Jp = self.partner(I), self.partner(J)
        hx = _paired_mmd_terms(self.kx, self.X, I, J, Ip, Jp)
        hy = _paired_mmd_terms(self.ky, self.Y, I, J, Ip, Jp)
        hx *= hy
        hx *= 0.25
        return hx

    def scalar(self, i, j):
        ip, jp = (i + self.shift) % self.n, (j + self.shift) % self.n
        Z = [(self.X[t], self.Y[t]) for t in (i, j, ip, jp)]
        return hsic_core(self.kx, self.ky, *Z)


def _paired_mmd_terms(k, A, I, J, R, S):
    out = kernel_pairs(k, A, A, I, J)
    out -= kernel_pairs(k, A, A, J, R)
    out -= kernel_pairs(k, A, A, I, S)
    out += kernel_pairs(k, A, A, R, S)
    return out


class SteinCore:
    """``h(i, j) = h_P(X_i, X_j)``."""

    def __init__(self, kernel: Kernel, score: ScoreModel, X):
        _require_smooth(kernel)
        self.kernel = kernel
        self.score = score
        self.X = as_samples(X, "X")
        self.S = score(self.X)
        self.n = self.X.shape[0]

    def __call__(self, I, J):
        sq, ss, cr = _accel.stein_pair_terms(self.X, self.S, I, J)
        return _stein_from_terms(self.kernel, sq, ss, cr, self.X.shape[1])

    def scalar(self, i, j):
        return stein_kernel(self.kernel, self.score, self.X[i], self.X[j])
