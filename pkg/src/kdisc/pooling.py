"""Combining statistics over a collection of kernels.

Each statistic ``S_k`` may be divided by a spread estimate ``sigma_k`` computed
from the same core and design, and the (normalised) values are then pooled by
their mean, their maximum, or a logsumexp "fuse" that interpolates between the
two. Bandwidth collections are built from quantiles of inter-point distances.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _accel
from .designs import Design
from .estimators import (
    StatisticRequest,
    _accumulate,
    compute_statistic,
    design_form,
)
from .exceptions import DataError, DegenerateNormalizerError, KdiscError
from .kernels import KernelSpec, _order_kind, as_samples

SIGMA_FLOOR = 1e-12
RADICAND_TOL = 1e-12
GRID_POINTS = 10
DEFAULT_FAMILIES = ("gaussian", "laplace")
POOL_METHODS = ("mean", "max", "fuse")

_NATIVE_ORDER = {"gaussian": 2.0, "imq": 2.0, "laplace": 1.0}


# -- normalisation -------------------------------------------------------------


def sigma(core, design: Design, *, workers: int = 1, kernel_index: Optional[int] = None) -> float:
    """Spread of a design statistic from its per-row core means.

    ``sigma^2 = 4 mean_i(rowmean_i^2) - (2 S)^2`` where rows range over first
    indices appearing in the design, ``rowmean_i`` averages ``h(i, j)`` over the
    pairs with first index ``i`` and ``S`` is the design average. Repeated pairs
    (R designs drawn with replacement) count with multiplicity.

    Raises
    ------
    DegenerateNormalizerError
        If ``sigma < 1e-12``.
    """
    acc = _accumulate(core, design, rows=True, workers=workers)
    used = acc.row_counts > 0
    row_means = acc.row_sums[used] / acc.row_counts[used]
    stat = acc.total / acc.count
    # 4 mean(rm^2) - 4 S^2 in centred form, S = sum_i w_i rm_i with w_i = count_i / |D|;
    # rounding then scales with (eps * |h|)^2 and a constant core gives exactly 0
    dev = row_means - stat
    weight_gap = 1.0 / row_means.size - acc.row_counts[used] / acc.count
    radicand = 4.0 * (np.mean(dev * dev) + 2.0 * stat * np.sum(weight_gap * dev))
    if -RADICAND_TOL <= radicand < 0.0:
        radicand = 0.0
    s = math.sqrt(radicand) if radicand > 0 else 0.0
    if not s >= SIGMA_FLOOR:
        where = "" if kernel_index is None else f" for kernel {kernel_index}"
        raise DegenerateNormalizerError(
            f"normaliser{where} is {s:.3g} (radicand {radicand:.3g}), below {SIGMA_FLOOR:g}",
            kernel_index=kernel_index,
        )
    return s


# -- pooling ---------------------------------------------------------------------


def pool(values: Sequence[float], method: str = "mean", nu: Optional[float] = None) -> float:
    """Pool statistics by ``mean``, ``max`` or ``fuse``.

    ``fuse`` returns ``(1/nu) log(mean_k exp(nu v_k))``, evaluated with the
    maximum factored out, so it lies in ``[max - log(K)/nu, max]``.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise KdiscError("pooling needs a non-empty list of values")
    if not np.all(np.isfinite(v)):
        raise KdiscError("pooling needs finite values")
    if method == "mean":
        return float(np.mean(v))
    if method == "max":
        return float(np.max(v))
    if method != "fuse":
        raise KdiscError(f"unknown pooling method {method!r}")
    if nu is None or not (math.isfinite(nu) and nu > 0):
        raise KdiscError(f"fuse pooling needs nu > 0, got {nu}")
    top = float(np.max(v))
    shifted = np.exp(nu * (v - top))
    return top + math.log(np.sum(shifted) / v.size) / nu


# -- bandwidth collections ---------------------------------------------------------


def _upper_distances(A: np.ndarray, r: float, block: int = 4096) -> np.ndarray:
    kind, rr = _order_kind(float(r))
    n = A.shape[0]
    parts = []
    for s in range(0, n, block):
        e = min(s + block, n)
        D = _accel.cross_distance(A[s:e], A[s:], kind, rr)
        rows, cols = np.triu_indices(e - s, k=1, m=n - s)
        parts.append(D[rows, cols])
    return np.concatenate(parts) if parts else np.empty(0)


def distance_set(X, Y=None, r: float = 2.0) -> np.ndarray:
    """Nonzero ``L^r`` distances between distinct rows of the pooled data ``X`` (then ``Y``).

    Each unordered pair of rows contributes once.
    """
    if not r >= 1:
        raise KdiscError(f"distance order must be >= 1, got {r}")
    A = as_samples(X, "X")
    if Y is not None:
        B = as_samples(Y, "Y")
        if B.shape[1] != A.shape[1]:
            raise DataError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
        A = np.ascontiguousarray(np.vstack([A, B]))
    D = _upper_distances(A, r)
    D = D[D > 0]
    if D.size == 0:
        raise DataError("all points are identical; the distance set is empty")
    return D


def median_bandwidth(X, Y=None, r: float = 2.0) -> float:
    """Lower median of the nonzero pooled distance set."""
    D = np.sort(distance_set(X, Y, r))
    return float(D[(D.size - 1) // 2])


def quantile_grid(D: np.ndarray, points: int = GRID_POINTS) -> list:
    """``points`` evenly spaced values from the 5% to the 95% quantile of ``D``.

    Quantiles interpolate linearly between order statistics. A degenerate range
    yields a single value, with a warning.
    """
    lo, hi = np.quantile(np.asarray(D, dtype=np.float64), [0.05, 0.95], method="linear")
    lo, hi = float(lo), float(hi)
    if lo == hi:
        warnings.warn(f"bandwidth quantiles coincide at {lo:g}; using a single bandwidth", stacklevel=2)
        return [lo]
    return [lo + i * (hi - lo) / (points - 1) for i in range(points)]


def _family_order(family: str, r: Optional[float]) -> float:
    if r is not None:
        return float(r)
    return _NATIVE_ORDER.get(family.strip().lower(), 2.0)


@dataclass(frozen=True)
class KernelCollection:
    """Ordered kernels to pool over.

    For HSIC each entry is a ``(k_x, k_y)`` pair. ``provenance`` is
    ``"explicit"`` or ``"auto-quantile"``.
    """

    kernels: tuple
    provenance: str = "explicit"

    def __post_init__(self):
        kernels = tuple(self.kernels)
        if not kernels:
            raise KdiscError("a kernel collection needs at least one kernel")
        object.__setattr__(self, "kernels", kernels)

    def __len__(self):
        return len(self.kernels)

    def __iter__(self):
        return iter(self.kernels)

    def to_dicts(self) -> list:
        out = []
        for k in self.kernels:
            if isinstance(k, tuple):
                out.append({"x": k[0].to_dict(), "y": k[1].to_dict()})
            else:
                out.append(k.to_dict())
        return out


def bandwidth_collection(
    X,
    Y=None,
    r: Optional[float] = None,
    families: Sequence[str] = DEFAULT_FAMILIES,
    max_per_family: Optional[int] = None,
) -> KernelCollection:
    """Quantile-grid bandwidths for each kernel family.

    Distances are taken on the pooled rows of ``X`` and ``Y``. By default each
    family measures them in its own metric (L2 for gaussian, imq and Matérn, L1
    for laplace); an explicit ``r`` sets the order for every family and is also
    the distance order of Matérn kernels. ``max_per_family`` keeps that many
    evenly spaced grid points per family.

    Examples
    --------
    >>> c = bandwidth_collection(np.arange(10.0)[:, None])
    >>> len(c)
    20
    """
    if not families:
        raise KdiscError("at least one kernel family is required")
    grids = {}
    kernels = []
    for fam in families:
        order = _family_order(fam, r)
        if order not in grids:
            grids[order] = quantile_grid(distance_set(X, Y, order))
        for bw in _thin(grids[order], max_per_family):
            kernels.append(KernelSpec.from_name(fam, bw, r=None if fam in _NATIVE_ORDER else order))
    return KernelCollection(tuple(kernels), provenance="auto-quantile")


def _thin(values: list, cap: Optional[int]) -> list:
    if cap is None or len(values) <= cap:
        return values
    idx = np.unique(np.round(np.linspace(0, len(values) - 1, cap)).astype(int))
    return [values[i] for i in idx]


def hsic_collection(
    X,
    Y,
    r: Optional[float] = None,
    families: Sequence[str] = DEFAULT_FAMILIES,
    max_per_axis: Optional[int] = None,
) -> KernelCollection:
    """All ``(k_x, k_y)`` bandwidth pairs for matching families.

    The ``x`` grid comes from distances within ``X`` and the ``y`` grid from
    distances within ``Y``. ``max_per_axis`` keeps that many evenly spaced grid
    points per axis.
    """
    if not families:
        raise KdiscError("at least one kernel family is required")
    pairs = []
    for fam in families:
        order = _family_order(fam, r)
        rr = None if fam in _NATIVE_ORDER else order
        gx = _thin(quantile_grid(distance_set(X, None, order)), max_per_axis)
        gy = _thin(quantile_grid(distance_set(Y, None, order)), max_per_axis)
        for bx in gx:
            for by in gy:
                pairs.append((KernelSpec.from_name(fam, bx, r=rr), KernelSpec.from_name(fam, by, r=rr)))
    return KernelCollection(tuple(pairs), provenance="auto-quantile")


# -- adaptive statistic --------------------------------------------------------------


@dataclass(frozen=True)
class PooledResult:
    """Per-kernel statistics and their pooled combination.

    ``sigmas`` is ``None`` when the statistics were not normalised, in which
    case ``normalized`` equals ``raw_values``. ``argmax`` indexes the largest
    normalised value.
    """

    raw_values: tuple
    sigmas: Optional[tuple]
    normalized: tuple
    value: float
    method: str
    nu: Optional[float]
    argmax: int
    clamped: bool
    design_sizes: tuple
    sample_size: int


def adaptive_statistic(
    collection: KernelCollection,
    request: StatisticRequest,
    X,
    Y=None,
    *,
    method: str = "fuse",
    nu: Optional[float] = None,
    normalize: bool = False,
    workers: int = 1,
) -> PooledResult:
    """Evaluate ``request`` for every kernel of ``collection`` and pool the results.

    The request's design (including any R-design seed) is shared across all
    kernels. With ``normalize`` each statistic is divided by :func:`sigma` over
    the same design; this requires a one-sample pair-design form of the
    statistic. For ``fuse`` the default ``nu`` is ``max_k |D_k| / N``.
    """
    if method not in POOL_METHODS:
        raise KdiscError(f"unknown pooling method {method!r}")
    raw, sigmas, sizes, clamped, N = [], [], [], False, None
    for idx, kernel in enumerate(collection):
        req = request.with_kernel(kernel)
        res = compute_statistic(req, X, Y, workers=workers)
        raw.append(res.value)
        sizes.append(res.design_size)
        clamped = clamped or res.clamped
        N = res.sample_size
        if normalize:
            form = design_form(req, X, Y)
            if form is None:
                raise KdiscError(
                    f"normalisation needs a one-sample pair design; not available for "
                    f"{request.discrepancy} kind {request.kind!r} with these sample sizes"
                )
            sigmas.append(sigma(*form, workers=workers, kernel_index=idx))
    normalized = [v / s for v, s in zip(raw, sigmas)] if normalize else list(raw)
    if method == "fuse" and nu is None:
        nu = max(sizes) / N
    value = pool(normalized, method, nu if method == "fuse" else None)
    return PooledResult(
        raw_values=tuple(raw),
        sigmas=tuple(sigmas) if normalize else None,
        normalized=tuple(normalized),
        value=value,
        method=method,
        nu=float(nu) if method == "fuse" else None,
        argmax=int(np.argmax(normalized)),
        clamped=clamped,
        design_sizes=tuple(sizes),
        sample_size=int(N),
    )
