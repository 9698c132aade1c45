"""MMD, HSIC and KSD estimators.

Complete statistics use quadratic-time closed forms over Gram matrices, which
are built in row blocks of at most ``max_rows`` rows (one block, i.e. fully
materialised, when the sample fits). Design-based statistics average a core
object over the pairs of a :class:`~kdisc.designs.Design`.

All reductions are deterministic: partial sums are formed over fixed row blocks
or fixed enumeration chunks and then combined in order, so running with several
worker threads gives bit-identical results to a serial run.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .cores import (
    PairedMMDCore,
    PairedSample,
    ScoreModel,
    ShiftedHSICCore,
    SteinCore,
    stein_gram,
)
from .designs import CHUNK, Design, UDesign, VDesign
from .exceptions import DimensionError, KdiscError
from .kernels import Kernel, _kernel_matrix, _require_smooth, as_samples
from .kernels import Family, KernelSpec

CLAMP_TOL = 1e-12
MAX_ROWS = 16384
# row blocks hold about this many kernel entries so repeated passes stay in cache
BLOCK_ENTRIES = 1 << 16


def _clamp(value: float):
    """Zero out V-statistic values that are negative only by rounding."""
    if -CLAMP_TOL <= value < 0.0:
        return 0.0, True
    return value, False


def _blocks(n, max_rows, width):
    step = max(1, min(n, max_rows, BLOCK_ENTRIES // max(width, 1)))
    return [(s, min(s + step, n)) for s in range(0, n, step)]


def _map_ordered(fn, items, workers):
    if workers and workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def _check_same_dim(X, Y):
    if X.shape[1] != Y.shape[1]:
        raise DimensionError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")


# -- MMD -----------------------------------------------------------------------


def _mmd_block_sums(kernel, X, Y, max_rows, workers):
    """Sums of K^XX, K^XY, K^YY and their diagonals (XY diagonal only when m == n)."""
    m, n = X.shape[0], Y.shape[0]

    def xs(bounds):
        s, e = bounds
        Kxx = _kernel_matrix(kernel, X[s:e], X)
        Kxy = _kernel_matrix(kernel, X[s:e], Y)
        rows = np.arange(e - s)
        dxy = Kxy[rows, rows + s].sum() if m == n else 0.0
        return Kxx.sum(), Kxx[rows, rows + s].sum(), Kxy.sum(), dxy

    def ys(bounds):
        s, e = bounds
        Kyy = _kernel_matrix(kernel, Y[s:e], Y)
        rows = np.arange(e - s)
        return Kyy.sum(), Kyy[rows, rows + s].sum()

    px = np.array(_map_ordered(xs, _blocks(m, max_rows, m + n), workers))
    py = np.array(_map_ordered(ys, _blocks(n, max_rows, n), workers))
    sxx, dxx, sxy, dxy = px.sum(axis=0)
    syy, dyy = py.sum(axis=0)
    return sxx, dxx, sxy, dxy, syy, dyy


def _mmd_v(kernel, X, Y, max_rows=MAX_ROWS, workers=1):
    X = as_samples(X, "X")
    Y = as_samples(Y, "Y")
    _check_same_dim(X, Y)
    m, n = X.shape[0], Y.shape[0]
    sxx, _, sxy, _, syy, _ = _mmd_block_sums(kernel, X, Y, max_rows, workers)
    return _clamp(sxx / (m * m) - 2.0 * sxy / (m * n) + syy / (n * n))


def mmd_v(kernel: Kernel, X, Y, *, max_rows: int = MAX_ROWS, workers: int = 1) -> float:
    """Plug-in (V-statistic) estimate of ``MMD^2``, i.e. ``w^T K^ZZ w``.

    Parameters
    ----------
    kernel : KernelSpec or MeanKernel
    X, Y : array_like
        Samples of shape ``(m, d)`` and ``(n, d)``.
    max_rows : int
        Gram matrices with more rows than this are streamed in row blocks.
    workers : int
        Threads used for row blocks; does not change the result.

    Returns
    -------
    float
        Non-negative; values in ``[-1e-12, 0)`` caused by rounding are clamped to 0.
    """
    return _mmd_v(kernel, X, Y, max_rows, workers)[0]


def mmd_u(kernel: Kernel, X, Y, *, max_rows: int = MAX_ROWS, workers: int = 1) -> float:
    """Minimum variance unbiased estimate of ``MMD^2`` (may be negative)."""
    X = as_samples(X, "X")
    Y = as_samples(Y, "Y")
    _check_same_dim(X, Y)
    m, n = X.shape[0], Y.shape[0]
    if m < 2 or n < 2:
        raise DimensionError(f"MMD U-statistic needs at least 2 samples each, got m={m}, n={n}")
    sxx, dxx, sxy, _, syy, dyy = _mmd_block_sums(kernel, X, Y, max_rows, workers)
    return float((sxx - dxx) / (m * (m - 1)) - 2.0 * sxy / (m * n) + (syy - dyy) / (n * (n - 1)))


def mmd_u_paired(kernel: Kernel, X, Y, *, max_rows: int = MAX_ROWS, workers: int = 1) -> float:
    """One-sample U-statistic ``1/(n(n-1)) sum_{i != j} h_MMD(X_i, X_j; Y_i, Y_j)``.

    The cross terms ``k(X_i, Y_i)`` are excluded, so the value depends on how the
    rows of ``X`` and ``Y`` are paired.
    """
    X = as_samples(X, "X")
    Y = as_samples(Y, "Y")
    _check_same_dim(X, Y)
    n = X.shape[0]
    if Y.shape[0] != n:
        raise DimensionError(f"paired MMD U-statistic needs equal sample sizes, got {n} and {Y.shape[0]}")
    if n < 2:
        raise DimensionError("paired MMD U-statistic needs n >= 2")
    sxx, dxx, sxy, dxy, syy, dyy = _mmd_block_sums(kernel, X, Y, max_rows, workers)
    total = (sxx - dxx) - 2.0 * (sxy - dxy) + (syy - dyy)
    return float(total / (n * (n - 1)))


# -- HSIC ----------------------------------------------------------------------


def _paired(X, Y):
    p = X if isinstance(X, PairedSample) and Y is None else PairedSample(X, Y)
    return p.X, p.Y, p.n


def _hsic_block_sums(kx, ky, X, Y, max_rows, workers, zero_diag):
    N = X.shape[0]

    def part(bounds):
        s, e = bounds
        Kx = _kernel_matrix(kx, X[s:e], X)
        Ky = _kernel_matrix(ky, Y[s:e], Y)
        if zero_diag:
            rows = np.arange(e - s)
            Kx[rows, rows + s] = 0.0
            Ky[rows, rows + s] = 0.0
        return np.einsum("ij,ij->", Kx, Ky), Kx.sum(axis=1), Ky.sum(axis=1)

    parts = _map_ordered(part, _blocks(N, max_rows, N), workers)
    trace = np.sum([p[0] for p in parts])
    rx = np.concatenate([p[1] for p in parts])
    ry = np.concatenate([p[2] for p in parts])
    return trace, rx, ry


def _hsic_v(kx, ky, X, Y, max_rows=MAX_ROWS, workers=1):
    X, Y, N = _paired(X, Y)
    trace, rx, ry = _hsic_block_sums(kx, ky, X, Y, max_rows, workers, zero_diag=False)
    # tr(Kx H Ky H) = sum Kx*Ky - (2/N) (Kx 1).(Ky 1) + (1'Kx 1)(1'Ky 1)/N^2
    value = (trace - 2.0 * np.dot(rx, ry) / N + rx.sum() * ry.sum() / (N * N)) / (N * N)
    return _clamp(float(value))


def hsic_v(kx: Kernel, ky: Kernel, X, Y=None, *, max_rows: int = MAX_ROWS, workers: int = 1) -> float:
    """Plug-in estimate ``tr(K^X H K^Y H) / N^2`` of ``HSIC^2`` for paired rows of X and Y.

    ``X`` may also be a :class:`~kdisc.cores.PairedSample` with ``Y`` omitted.
    """
    return _hsic_v(kx, ky, X, Y, max_rows, workers)[0]


def hsic_u(kx: Kernel, ky: Kernel, X, Y=None, *, max_rows: int = MAX_ROWS, workers: int = 1) -> float:
    """Unbiased fourth-order U-statistic for ``HSIC^2`` in quadratic time from zero-diagonal gram matrices."""
    X, Y, N = _paired(X, Y)
    if N < 4:
        raise DimensionError(f"HSIC U-statistic needs N >= 4, got {N}")
    trace, rx, ry = _hsic_block_sums(kx, ky, X, Y, max_rows, workers, zero_diag=True)
    value = trace + rx.sum() * ry.sum() / ((N - 1) * (N - 2)) - 2.0 / (N - 2) * np.dot(rx, ry)
    return float(value / (N * (N - 3)))


def hsic_v_second_order(kx: Kernel, ky: Kernel, X, Y=None, *, workers: int = 1) -> float:
    """Second-order V-statistic pairing ``Z_i`` with ``Z_{i+N/2}`` (indices modulo even N)."""
    X, Y, _ = _paired(X, Y)
    res = generic_statistic(ShiftedHSICCore(kx, ky, X, Y), VDesign(), workers=workers)
    return _clamp(res.value)[0]


# -- KSD -----------------------------------------------------------------------


def _ksd_sums(kernel, score, X, max_rows, workers):
    _require_smooth(kernel)
    X = as_samples(X, "X")
    S = score(X)
    n = X.shape[0]

    def part(bounds):
        s, e = bounds
        H = stein_gram(kernel, X[s:e], S[s:e], X, S)
        rows = np.arange(e - s)
        return H.sum(), H[rows, rows + s].sum()

    parts = np.array(_map_ordered(part, _blocks(n, max_rows, n), workers))
    total, diag = parts.sum(axis=0)
    return total, diag, n


def _ksd_v(kernel, score, X, max_rows=MAX_ROWS, workers=1):
    total, _, n = _ksd_sums(kernel, score, X, max_rows, workers)
    return _clamp(float(total / (n * n)))


def ksd_v(kernel: Kernel, score: ScoreModel, X, *, max_rows: int = MAX_ROWS, workers: int = 1) -> float:
    """V-statistic ``1/n^2 sum_{i,j} h_P(X_i, X_j)`` estimating ``KSD^2``."""
    return _ksd_v(kernel, score, X, max_rows, workers)[0]


def ksd_u(kernel: Kernel, score: ScoreModel, X, *, max_rows: int = MAX_ROWS, workers: int = 1) -> float:
    """U-statistic ``1/(n(n-1)) sum_{i != j} h_P(X_i, X_j)``; unbiased, may be negative."""
    total, diag, n = _ksd_sums(kernel, score, X, max_rows, workers)
    if n < 2:
        raise DimensionError("KSD U-statistic needs n >= 2")
    return float((total - diag) / (n * (n - 1)))


# -- design statistics ---------------------------------------------------------


@dataclass(frozen=True)
class StatisticResult:
    """Value of a statistic together with bookkeeping.

    ``cardinality`` is the number of core terms in the defining average,
    ``evaluations`` the number of core (generic path) or kernel-matrix entry
    (closed forms) evaluations actually performed.
    """

    value: float
    cardinality: int
    evaluations: int
    biased: bool
    clamped: bool = False
    design_size: int = 0
    sample_size: int = 0


@dataclass(frozen=True)
class _Accumulated:
    total: float
    count: int
    n: int
    row_sums: Optional[np.ndarray] = None
    row_counts: Optional[np.ndarray] = None


def _accumulate(core, design: Design, rows: bool, workers: int = 1, chunk: int = CHUNK) -> _Accumulated:
    n = core.n
    design.validate(n)

    def part(ij):
        I, J = ij
        h = core(I, J)
        if not rows:
            return h.sum(), None, None
        return h.sum(), np.bincount(I, weights=h, minlength=n), np.bincount(I, minlength=n)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(part, design.chunks(n, chunk)))
    else:
        parts = [part(ij) for ij in design.chunks(n, chunk)]
    total = float(np.sum([p[0] for p in parts]))
    count = design.cardinality(n)
    if not rows:
        return _Accumulated(total, count, n)
    row_sums = np.zeros(n)
    row_counts = np.zeros(n, dtype=np.int64)
    for _, s, c in parts:
        row_sums += s
        row_counts += c
    return _Accumulated(total, count, n, row_sums, row_counts)


def generic_statistic(core, design: Design, *, workers: int = 1, chunk: int = CHUNK) -> StatisticResult:
    """Average ``core`` over the pairs of ``design``: ``1/|D| sum_{(i,j) in D} h(i, j)``.

    ``core`` is a bound core object (:class:`~kdisc.cores.PairedMMDCore`,
    :class:`~kdisc.cores.ShiftedHSICCore`, :class:`~kdisc.cores.SteinCore` or any
    object with ``n`` and a vectorised ``__call__(I, J)``).
    """
    acc = _accumulate(core, design, rows=False, workers=workers, chunk=chunk)
    return StatisticResult(
        value=acc.total / acc.count,
        cardinality=acc.count,
        evaluations=acc.count,
        biased=isinstance(design, VDesign),
        design_size=acc.count,
        sample_size=acc.n,
    )


# -- request-level API -----------------------------------------------------------

DISCREPANCIES = ("mmd", "hsic", "ksd")
KINDS = ("v", "u", "paired-u", "second-order-v", "incomplete")


@dataclass(frozen=True)
class StatisticRequest:
    """What to compute.

    ``kernel`` is a single kernel for MMD/KSD and a ``(k_x, k_y)`` tuple for HSIC.
    ``kind`` is one of ``v``, ``u``, ``paired-u`` (MMD with m = n),
    ``second-order-v`` (HSIC, even N) or ``incomplete`` (needs ``design``).
    """

    discrepancy: str
    kind: str
    kernel: object = None
    design: Optional[Design] = None
    score: Optional[ScoreModel] = None

    def __post_init__(self):
        if self.discrepancy not in DISCREPANCIES:
            raise KdiscError(f"unknown discrepancy {self.discrepancy!r}")
        if self.kind not in KINDS:
            raise KdiscError(f"unknown statistic kind {self.kind!r}")
        if self.kind == "paired-u" and self.discrepancy != "mmd":
            raise KdiscError("paired-u is only defined for MMD")
        if self.kind == "second-order-v" and self.discrepancy != "hsic":
            raise KdiscError("second-order-v is only defined for HSIC")
        if (self.kind == "incomplete") != (self.design is not None):
            raise KdiscError("a design is required exactly when kind is 'incomplete'")
        if (self.discrepancy == "ksd") != (self.score is not None):
            raise KdiscError("a score model is required exactly for KSD")
        if self.discrepancy == "hsic" and self.kernel is not None:
            if not (isinstance(self.kernel, tuple) and len(self.kernel) == 2):
                raise KdiscError("HSIC needs a (k_x, k_y) kernel pair")
        if self.discrepancy == "ksd" and isinstance(self.kernel, KernelSpec):
            if self.kernel.family is Family.INDICATOR:
                raise KdiscError("the indicator kernel has no derivatives; it cannot be used for KSD")

    def with_kernel(self, kernel) -> "StatisticRequest":
        return replace(self, kernel=kernel)

    @property
    def biased(self) -> bool:
        return self.kind in ("v", "second-order-v") or (
            self.kind == "incomplete" and isinstance(self.design, VDesign)
        )


def design_form(request: StatisticRequest, X, Y=None):
    """Return ``(core, design)`` when the request is a one-sample second-order statistic.

    Returns ``None`` for statistics without such a form (two-sample MMD with
    ``m != n``, and the fourth-order HSIC V/U statistics).
    """
    d, kind = request.discrepancy, request.kind
    if d == "ksd":
        core = SteinCore(request.kernel, request.score, X)
        design = {"v": VDesign(), "u": UDesign()}.get(kind, request.design)
        return core, design
    if d == "mmd":
        X = as_samples(X, "X")
        Y = as_samples(Y, "Y")
        if kind == "u":
            return None
        if X.shape[0] != Y.shape[0]:
            if kind == "v":
                return None
            raise DimensionError("paired MMD statistics need equal sample sizes")
        design = {"v": VDesign(), "paired-u": UDesign()}.get(kind, request.design)
        return PairedMMDCore(request.kernel, X, Y), design
    if kind in ("v", "u"):
        return None
    kx, ky = request.kernel
    design = VDesign() if kind == "second-order-v" else request.design
    return ShiftedHSICCore(kx, ky, X, Y), design


def compute_statistic(request: StatisticRequest, X, Y=None, *, max_rows: int = MAX_ROWS, workers: int = 1) -> StatisticResult:
    """Evaluate ``request`` on data.

    ``X`` (and ``Y``) are the two samples for MMD, the paired streams for HSIC,
    and the sample for KSD.
    """
    d, kind = request.discrepancy, request.kind
    if request.kernel is None:
        raise KdiscError("request has no kernel")
    if d == "hsic" and Y is None and isinstance(X, PairedSample):
        X, Y = X.X, X.Y
    if d == "ksd" and Y is not None:
        raise KdiscError("KSD takes a single sample")
    if d != "ksd" and Y is None:
        raise KdiscError(f"{d.upper()} needs two inputs")

    if kind in ("incomplete", "second-order-v"):
        core, design = design_form(request, X, Y)
        res = generic_statistic(core, design, workers=workers)
        value, clamped = (res.value, False)
        if kind == "second-order-v":
            value, clamped = _clamp(value)
        return replace(res, value=value, clamped=clamped, biased=request.biased)

    clamped = False
    if d == "mmd":
        A, B = as_samples(X, "X"), as_samples(Y, "Y")
        m, n = A.shape[0], B.shape[0]
        evals = (m + n) ** 2
        N = m + n
        if kind == "v":
            value, clamped = _mmd_v(request.kernel, A, B, max_rows, workers)
            card, dsize = m * m * n * n, N * N
        elif kind == "u":
            value = mmd_u(request.kernel, A, B, max_rows=max_rows, workers=workers)
            card, dsize = m * (m - 1) * n * (n - 1), N * (N - 1)
        else:
            value = mmd_u_paired(request.kernel, A, B, max_rows=max_rows, workers=workers)
            card = dsize = n * (n - 1)
            N = n
    elif d == "hsic":
        kx, ky = request.kernel
        _, _, N = _paired(X, Y)
        evals = 2 * N * N
        if kind == "v":
            value, clamped = _hsic_v(kx, ky, X, Y, max_rows, workers)
            card, dsize = N**4, N * N
        elif kind == "u":
            value = hsic_u(kx, ky, X, Y, max_rows=max_rows, workers=workers)
            card, dsize = N * (N - 1) * (N - 2) * (N - 3), N * (N - 1)
        else:
            raise KdiscError(f"HSIC does not support kind {kind!r}")
    else:
        N = as_samples(X, "X").shape[0]
        evals = N * N
        if kind == "v":
            value, clamped = _ksd_v(request.kernel, request.score, X, max_rows, workers)
            card = dsize = N * N
        elif kind == "u":
            value = ksd_u(request.kernel, request.score, X, max_rows=max_rows, workers=workers)
            card = dsize = N * (N - 1)
        else:
            raise KdiscError(f"KSD does not support kind {kind!r}")
    return StatisticResult(
        value=float(value),
        cardinality=int(card),
        evaluations=int(evals),
        biased=request.biased,
        clamped=clamped,
        design_size=int(dsize),
        sample_size=int(N),
    )
