"""Radial kernel families, Gram matrices and the derivatives used by Stein kernels.

All families are parametrised as ``k_lambda(x, y) = Psi(||x - y||_r / lambda)`` with
``Psi(0) = 1``:

================  =======================================  ==========
family            profile ``Psi(u)``                       distance
================  =======================================  ==========
gaussian          ``exp(-u**2)``                           L2
laplace           ``exp(-u)``                              L1
imq               ``(1 + u**2) ** -0.5``                   L2
matern (nu)       ``P_nu(u) exp(-sqrt(2 nu) u)``           any L^r
indicator         ``1(x == y)``                            n/a
================  =======================================  ==========

The IMQ kernel is the normalised form, so that ``k(x, x) = 1`` for every family.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Union

import numpy as np

from . import _accel
from .exceptions import DimensionError, KdiscError, UnsupportedKernelError


class Family(str, Enum):
    GAUSSIAN = "gaussian"
    LAPLACE = "laplace"
    IMQ = "imq"
    MATERN = "matern"
    INDICATOR = "indicator"


MATERN_NUS = (0.5, 1.5, 2.5, 3.5, 4.5)

# Polynomial coefficients (ascending powers of u) and decay rate per smoothness.
_MATERN = {
    0.5: ((1.0,), 1.0),
    1.5: ((1.0, math.sqrt(3.0)), math.sqrt(3.0)),
    2.5: ((1.0, math.sqrt(5.0), 5.0 / 3.0), math.sqrt(5.0)),
    3.5: (
        (1.0, math.sqrt(7.0), 2.0 * 7.0 / 5.0, 7.0 * math.sqrt(7.0) / (3.0 * 5.0)),
        math.sqrt(7.0),
    ),
    4.5: (
        (1.0, 3.0, 3.0 * 6.0**2 / 28.0, 6.0**3 / 84.0, 6.0**4 / 1680.0),
        3.0,
    ),
}


def _matern_derivative_polys(nu):
    """Coefficients of P, of (P' - aP)/u and of P'' - 2aP' + a^2 P."""
    c, a = _MATERN[nu]
    c = list(c) + [0.0, 0.0]
    deg = len(c) - 2
    dp = [(k + 1) * c[k + 1] for k in range(deg + 1)]
    ddp = [(k + 1) * dp[k + 1] if k + 1 < len(dp) else 0.0 for k in range(deg + 1)]
    q = [dp[k] - a * c[k] for k in range(deg + 1)]
    # q[0] = c1 - a*c0 vanishes identically for every smooth member
    g = q[1:]
    f2 = [ddp[k] - 2.0 * a * dp[k] + a * a * c[k] for k in range(deg + 1)]
    return tuple(c[: deg + 1]), tuple(g), tuple(f2), a


def _horner(coeffs, u):
    out = np.full_like(u, coeffs[-1])
    for ck in coeffs[-2::-1]:
        out *= u
        out += ck
    return out


@dataclass(frozen=True)
class KernelSpec:
    """A radial kernel with bandwidth and distance order.

    Parameters
    ----------
    family : Family or str
    bandwidth : float
        Positive bandwidth ``lambda``; ignored by the indicator family.
    r : float, optional
        Distance order. Fixed by the family for gaussian/imq (2) and laplace (1);
        defaults to 2 for Matérn kernels.
    nu : float, optional
        Matérn smoothness, one of 0.5, 1.5, 2.5, 3.5, 4.5.
    """

    family: Family
    bandwidth: float = 1.0
    r: float | None = None
    nu: float | None = None

    def __post_init__(self):
        try:
            family = Family(self.family)
        except ValueError:
            raise KdiscError(f"unknown kernel family {self.family!r}") from None
        object.__setattr__(self, "family", family)
        bw = float(self.bandwidth)
        if family is not Family.INDICATOR and not (math.isfinite(bw) and bw > 0):
            raise KdiscError(f"bandwidth must be positive and finite, got {self.bandwidth}")
        object.__setattr__(self, "bandwidth", bw)

        native = {Family.GAUSSIAN: 2.0, Family.IMQ: 2.0, Family.LAPLACE: 1.0}
        if family in native:
            if self.r is not None and float(self.r) != native[family]:
                raise KdiscError(f"{family.value} kernel uses r={native[family]:g}, got r={self.r}")
            object.__setattr__(self, "r", native[family])
        elif family is Family.MATERN:
            r = 2.0 if self.r is None else float(self.r)
            if not r >= 1:
                raise KdiscError(f"distance order must be >= 1, got {self.r}")
            object.__setattr__(self, "r", r)
        else:
            object.__setattr__(self, "r", None)

        if family is Family.MATERN:
            if self.nu is None or float(self.nu) not in _MATERN:
                raise KdiscError(f"Matérn smoothness must be one of {MATERN_NUS}, got {self.nu}")
            object.__setattr__(self, "nu", float(self.nu))
        elif self.nu is not None:
            raise KdiscError("nu only applies to Matérn kernels")

    @classmethod
    def from_name(cls, name: str, bandwidth: float = 1.0, r: float | None = None) -> "KernelSpec":
        """Build from a family name such as ``"gaussian"`` or ``"matern2.5"``."""
        name = name.strip().lower()
        if name.startswith("matern"):
            try:
                nu = float(name[len("matern"):])
            except ValueError:
                raise KdiscError(f"cannot parse Matérn smoothness from {name!r}") from None
            return cls(Family.MATERN, bandwidth, r=r, nu=nu)
        if name in (Family.GAUSSIAN, Family.IMQ, Family.LAPLACE) and r is not None:
            return cls(name, bandwidth, r=r)
        return cls(name, bandwidth)

    @property
    def name(self) -> str:
        if self.family is Family.MATERN:
            return f"matern{self.nu:g}"
        return self.family.value

    @property
    def differentiable(self) -> bool:
        if self.family in (Family.GAUSSIAN, Family.IMQ):
            return True
        return self.family is Family.MATERN and self.nu >= 1.5 and self.r == 2.0

    def with_bandwidth(self, bandwidth: float) -> "KernelSpec":
        return KernelSpec(self.family, bandwidth, self.r, self.nu)

    def to_dict(self) -> dict:
        out = {"family": self.name, "bandwidth": self.bandwidth, "r": self.r}
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "KernelSpec":
        """Inverse of :meth:`to_dict`."""
        return cls.from_name(data["family"], data["bandwidth"], r=data.get("r"))


@dataclass(frozen=True)
class MeanKernel:
    """Uniform average of several kernels; evaluates as the mean of their values."""

    kernels: tuple

    def __post_init__(self):
        kernels = tuple(self.kernels)
        if not kernels:
            raise KdiscError("MeanKernel needs at least one kernel")
        object.__setattr__(self, "kernels", kernels)

    @property
    def differentiable(self) -> bool:
        return all(k.differentiable for k in self.kernels)


Kernel = Union[KernelSpec, MeanKernel]


def as_samples(X, name: str = "X") -> np.ndarray:
    """Validate and convert to a C-contiguous float64 ``n x d`` matrix.

    One-dimensional input is read as ``n`` scalar observations.
    """
    A = np.asarray(X, dtype=np.float64)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2:
        raise DimensionError(f"{name} must be a 2-d array, got shape {A.shape}")
    if A.shape[0] < 1 or A.shape[1] < 1:
        raise DimensionError(f"{name} must have at least one row and one column, got {A.shape}")
    if not np.all(np.isfinite(A)):
        raise KdiscError(f"{name} contains non-finite values")
    return np.ascontiguousarray(A)


def _as_point(x, name):
    v = np.asarray(x, dtype=np.float64)
    if v.ndim == 0:
        v = v[None]
    if v.ndim != 1:
        raise DimensionError(f"{name} must be a vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise KdiscError(f"{name} contains non-finite values")
    return np.ascontiguousarray(v[None, :])


def _same_dim(A, B):
    if A.shape[1] != B.shape[1]:
        raise DimensionError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")


def _distance_kind(kernel: KernelSpec):
    f = kernel.family
    if f in (Family.GAUSSIAN, Family.IMQ):
        return _accel.SQEUCLIDEAN, 2.0
    if f is Family.LAPLACE:
        return _accel.L1, 1.0
    if f is Family.INDICATOR:
        return _accel.UNEQUAL, 1.0
    return _order_kind(kernel.r)


def _order_kind(r):
    if r == 1.0:
        return _accel.L1, 1.0
    if r == 2.0:
        return _accel.L2, 2.0
    return _accel.LR, float(r)


def _profile(kernel: KernelSpec, dist: np.ndarray) -> np.ndarray:
    """Map the family's distance quantity to kernel values, in place."""
    f = kernel.family
    lam = kernel.bandwidth
    if f is Family.GAUSSIAN:
        dist /= lam
        dist /= lam
        np.negative(dist, out=dist)
        return np.exp(dist, out=dist)
    if f is Family.IMQ:
        dist /= lam
        dist /= lam
        dist += 1.0
        np.sqrt(dist, out=dist)
        return np.reciprocal(dist, out=dist)
    if f is Family.LAPLACE:
        dist /= lam
        np.negative(dist, out=dist)
        return np.exp(dist, out=dist)
    if f is Family.INDICATOR:
        return np.subtract(1.0, dist, out=dist)
    coeffs, a = _MATERN[kernel.nu]
    u = dist / lam
    decay = np.exp(-a * u)
    out = _horner(coeffs, u)
    out *= decay
    # polynomial can overflow where the exponential has already underflowed
    out[decay == 0.0] = 0.0
    return out


def _kernel_matrix(kernel: Kernel, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    if isinstance(kernel, MeanKernel):
        out = _kernel_matrix(kernel.kernels[0], A, B)
        for k in kernel.kernels[1:]:
            out += _kernel_matrix(k, A, B)
        out /= len(kernel.kernels)
        return out
    kind, r = _distance_kind(kernel)
    return _profile(kernel, _accel.cross_distance(A, B, kind, r))


def evaluate(kernel: Kernel, x, y) -> float:
    """Kernel value ``k(x, y)`` for two d-vectors."""
    a = _as_point(x, "x")
    b = _as_point(y, "y")
    _same_dim(a, b)
    return float(_kernel_matrix(kernel, a, b)[0, 0])


def pairwise_distances(X, Y, r: float = 2.0) -> np.ndarray:
    """Matrix of ``||X_i - Y_j||_r``."""
    if not r >= 1:
        raise KdiscError(f"distance order must be >= 1, got {r}")
    A = as_samples(X, "X")
    B = A if Y is X else as_samples(Y, "Y")
    _same_dim(A, B)
    kind, rr = _order_kind(float(r))
    return _accel.cross_distance(A, B, kind, rr)


def gram(kernel: Kernel, X, Y=None) -> np.ndarray:
    """Gram matrix ``(k(X_i, Y_j))_ij``; ``Y`` defaults to ``X``."""
    A = as_samples(X, "X")
    B = A if Y is None or Y is X else as_samples(Y, "Y")
    _same_dim(A, B)
    return _kernel_matrix(kernel, A, B)


def kernel_pairs(kernel: Kernel, A: np.ndarray, B: np.ndarray, I, J) -> np.ndarray:
    """Vector of ``k(A[I[t]], B[J[t]])`` for validated sample matrices."""
    if isinstance(kernel, MeanKernel):
        out = kernel_pairs(kernel.kernels[0], A, B, I, J)
        for k in kernel.kernels[1:]:
            out += kernel_pairs(k, A, B, I, J)
        out /= len(kernel.kernels)
        return out
    kind, r = _distance_kind(kernel)
    return _profile(kernel, _accel.pair_distance(A, B, I, J, kind, r))


# -- derivatives -------------------------------------------------------------


def _require_smooth(kernel: Kernel):
    if isinstance(kernel, MeanKernel):
        for k in kernel.kernels:
            _require_smooth(k)
        return
    if not kernel.differentiable:
        what = kernel.name
        if kernel.family is Family.MATERN and kernel.nu >= 1.5:
            what += f" with r={kernel.r:g}"
        raise UnsupportedKernelError(
            f"{what} kernel is not differentiable everywhere; "
            "use gaussian, imq or matern (nu >= 1.5, r = 2)"
        )


def radial_derivatives(kernel: KernelSpec, sq: np.ndarray):
    """Profile terms from squared Euclidean distances.

    With ``rho = ||x - y||_2 / lambda`` and profile ``f(rho)``, returns
    ``(f, g, f2)`` where ``g = f'(rho) / rho`` and ``f2 = f''(rho)``. Then
    ``grad_x k = g (x - y) / lambda**2`` and
    ``sum_i d^2 k / dx_i dy_i = -(f2 + (d - 1) g) / lambda**2``.
    """
    lam = kernel.bandwidth
    rho2 = sq / lam / lam
    if kernel.family is Family.GAUSSIAN:
        f = np.exp(-rho2)
        return f, -2.0 * f, (4.0 * rho2 - 2.0) * f
    if kernel.family is Family.IMQ:
        q = 1.0 + rho2
        q32 = q ** -1.5
        return q ** -0.5, -q32, -q32 + 3.0 * rho2 * q ** -2.5
    coeffs, gcoef, f2coef, a = _matern_derivative_polys(kernel.nu)
    rho = np.sqrt(rho2)
    decay = np.exp(-a * rho)
    dead = decay == 0.0
    out = []
    for cf in (coeffs, gcoef, f2coef):
        v = _horner(cf, rho) * decay
        v[dead] = 0.0
        out.append(v)
    return tuple(out)


def grad_x(kernel: Kernel, x, y) -> np.ndarray:
    """Gradient of ``k(x, y)`` with respect to ``x``."""
    _require_smooth(kernel)
    a = _as_point(x, "x")
    b = _as_point(y, "y")
    _same_dim(a, b)
    diff = a[0] - b[0]
    if isinstance(kernel, MeanKernel):
        return sum(grad_x(k, x, y) for k in kernel.kernels) / len(kernel.kernels)
    sq = np.array([np.dot(diff, diff)])
    _, g, _ = radial_derivatives(kernel, sq)
    lam = kernel.bandwidth
    return g[0] / lam / lam * diff


def cross_partial_trace(kernel: Kernel, x, y) -> float:
    """``sum_i d^2 k(x, y) / dx_i dy_i``."""
    _require_smooth(kernel)
    a = _as_point(x, "x")
    b = _as_point(y, "y")
    _same_dim(a, b)
    if isinstance(kernel, MeanKernel):
        return sum(cross_partial_trace(k, x, y) for k in kernel.kernels) / len(kernel.kernels)
    diff = a[0] - b[0]
    d = diff.shape[0]
    sq = np.array([np.dot(diff, diff)])
    _, g, f2 = radial_derivatives(kernel, sq)
    lam = kernel.bandwidth
    return float(-(f2[0] + (d - 1) * g[0]) / lam / lam)
