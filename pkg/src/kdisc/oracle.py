"""Slow reference implementations written as explicit loops.

Every function here sums core or kernel evaluations term by term, without the
algebraic shortcuts of :mod:`kdisc.estimators`; the only shared code is
pointwise kernel evaluation. Sample sizes are capped by :class:`OracleConfig`
because several sums are quartic in the sample size.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations, product

import numpy as np

from .cores import hsic_core, mmd_core, stein_kernel
from .designs import Design
from .exceptions import DimensionError, KdiscError, OracleCapError
from .kernels import as_samples, evaluate

HARD_CAP = 12


@dataclass(frozen=True)
class OracleConfig:
    """``max_n`` bounds every sample size passed to an oracle (at most 12)."""

    max_n: int = 8

    def __post_init__(self):
        if int(self.max_n) != self.max_n or not 1 <= self.max_n <= HARD_CAP:
            raise KdiscError(f"oracle max_n must be in [1, {HARD_CAP}], got {self.max_n}")

    def check(self, **sizes):
        for name, size in sizes.items():
            if size > self.max_n:
                raise OracleCapError(f"oracle cap exceeded: {name}={size} > max_n={self.max_n}")


DEFAULT = OracleConfig()


def _rows(X, name):
    return list(as_samples(X, name))


def _table(kernel, A, B):
    """``T[i][j] = k(A_i, B_j)`` by pointwise evaluation."""
    return [[evaluate(kernel, a, b) for b in B] for a in A]


def _mmd_term(Kxx, Kxy, Kyy, i, i2, j, j2):
    # h_MMD(X_i, X_i'; Y_j, Y_j') = k(X_i, X_i') - k(X_i', Y_j) - k(X_i, Y_j') + k(Y_j, Y_j')
    return Kxx[i][i2] - Kxy[i2][j] - Kxy[i][j2] + Kyy[j][j2]


def oracle_mmd_v_tuple(kernel, X, Y, config: OracleConfig = DEFAULT) -> float:
    """``1/(m^2 n^2) sum_{i,i'} sum_{j,j'} h_MMD(X_i, X_i'; Y_j, Y_j')``."""
    xs, ys = _rows(X, "X"), _rows(Y, "Y")
    m, n = len(xs), len(ys)
    config.check(m=m, n=n)
    Kxx, Kxy, Kyy = _table(kernel, xs, xs), _table(kernel, xs, ys), _table(kernel, ys, ys)
    total = 0.0
    for i in range(m):
        for i2 in range(m):
            for j in range(n):
                for j2 in range(n):
                    total += _mmd_term(Kxx, Kxy, Kyy, i, i2, j, j2)
    return total / (m * m * n * n)


def oracle_mmd_u_tuple(kernel, X, Y, config: OracleConfig = DEFAULT) -> float:
    """``1/(m(m-1)n(n-1)) sum_{i != i'} sum_{j != j'} h_MMD(X_i, X_i'; Y_j, Y_j')``."""
    xs, ys = _rows(X, "X"), _rows(Y, "Y")
    m, n = len(xs), len(ys)
    config.check(m=m, n=n)
    if m < 2 or n < 2:
        raise DimensionError("the MMD U-statistic needs m, n >= 2")
    Kxx, Kxy, Kyy = _table(kernel, xs, xs), _table(kernel, xs, ys), _table(kernel, ys, ys)
    total = 0.0
    for i, i2 in permutations(range(m), 2):
        for j, j2 in permutations(range(n), 2):
            total += _mmd_term(Kxx, Kxy, Kyy, i, i2, j, j2)
    return total / (m * (m - 1) * n * (n - 1))


def oracle_mmd_u_paired(kernel, X, Y, config: OracleConfig = DEFAULT) -> float:
    """``1/(n(n-1)) sum_{i != j} h_MMD(X_i, X_j; Y_i, Y_j)``."""
    xs, ys = _rows(X, "X"), _rows(Y, "Y")
    n = len(xs)
    if len(ys) != n:
        raise DimensionError("paired samples need equal sizes")
    config.check(n=n)
    total = 0.0
    for i, j in permutations(range(n), 2):
        total += mmd_core(kernel, xs[i], xs[j], ys[i], ys[j])
    return total / (n * (n - 1))


def _paired_tables(kx, ky, X, Y, config):
    xs, ys = _rows(X, "X"), _rows(Y, "Y")
    if len(xs) != len(ys):
        raise DimensionError("paired samples need equal row counts")
    config.check(N=len(xs))
    return _table(kx, xs, xs), _table(ky, ys, ys), len(xs)


def _hsic_term(Kx, Ky, i, j, r, s):
    # (1/4) (Kx_ij - Kx_is - Kx_rj + Kx_rs) (Ky_ij - Ky_is - Ky_rj + Ky_rs)
    hx = Kx[i][j] - Kx[i][s] - Kx[r][j] + Kx[r][s]
    hy = Ky[i][j] - Ky[i][s] - Ky[r][j] + Ky[r][s]
    return 0.25 * hx * hy


def oracle_hsic_sums(kx, ky, X, Y, config: OracleConfig = DEFAULT):
    """Three HSIC reference values for paired data.

    Returns
    -------
    v_fourth_order : float
        ``1/N^4`` times the sum of the symmetric HSIC core over all quadruples.
    v_three_term : float
        The same statistic as ``1/N^2 sum KxKy - 2/N^3 sum Kx_ij Ky_ir + 1/N^4 sum Kx_ij Ky_rs``.
    u_tuple : float
        The U-statistic from the three sums over distinct-index tuples, each
        divided by its tuple count (``nan`` when ``N < 4``).
    """
    Kx, Ky, N = _paired_tables(kx, ky, X, Y, config)
    v4 = 0.0
    for i, j, r, s in product(range(N), repeat=4):
        v4 += _hsic_term(Kx, Ky, i, j, r, s)
    v4 /= N**4

    a = sum(Kx[i][j] * Ky[i][j] for i, j in product(range(N), repeat=2))
    b = sum(Kx[i][j] * Ky[i][r] for i, j, r in product(range(N), repeat=3))
    c = sum(Kx[i][j] * Ky[r][s] for i, j, r, s in product(range(N), repeat=4))
    v3 = a / N**2 - 2.0 * b / N**3 + c / N**4

    if N < 4:
        return v4, v3, float("nan")
    ua = sum(Kx[i][j] * Ky[i][j] for i, j in permutations(range(N), 2))
    ub = sum(Kx[i][j] * Ky[i][r] for i, j, r in permutations(range(N), 3))
    uc = sum(Kx[i][j] * Ky[r][s] for i, j, r, s in permutations(range(N), 4))
    n2 = N * (N - 1)
    n3 = n2 * (N - 2)
    n4 = n3 * (N - 3)
    return v4, v3, ua / n2 - 2.0 * ub / n3 + uc / n4


def oracle_hsic_v_asymmetric(kx, ky, X, Y, config: OracleConfig = DEFAULT) -> float:
    """V-statistic with the asymmetric core ``Kx_ij (Ky_ij - Ky_is - Ky_rj + Ky_rs)``."""
    Kx, Ky, N = _paired_tables(kx, ky, X, Y, config)
    total = 0.0
    for i, j, r, s in product(range(N), repeat=4):
        total += Kx[i][j] * (Ky[i][j] - Ky[i][s] - Ky[r][j] + Ky[r][s])
    return total / N**4


def oracle_hsic_u_core(kx, ky, X, Y, config: OracleConfig = DEFAULT) -> float:
    """U-statistic as the average symmetric HSIC core over distinct-index quadruples."""
    Kx, Ky, N = _paired_tables(kx, ky, X, Y, config)
    if N < 4:
        raise DimensionError("the HSIC U-statistic needs N >= 4")
    total = 0.0
    count = 0
    for i, j, r, s in permutations(range(N), 4):
        total += _hsic_term(Kx, Ky, i, j, r, s)
        count += 1
    return total / count


def oracle_hsic_second_order(kx, ky, X, Y, config: OracleConfig = DEFAULT) -> float:
    """``1/N^2 sum_{i,j} h_HSIC(Z_i, Z_j, Z_{i+N/2}, Z_{j+N/2})``, 1-based indices wrapped into 1..N."""
    xs, ys = _rows(X, "X"), _rows(Y, "Y")
    if len(xs) != len(ys):
        raise DimensionError("paired samples need equal row counts")
    N = len(xs)
    config.check(N=N)
    if N % 2:
        raise DimensionError("the shifted HSIC statistic needs even N")
    z = [None] + list(zip(xs, ys))

    def wrap(i):
        return (i + N // 2 - 1) % N + 1

    total = 0.0
    for i in range(1, N + 1):
        for j in range(1, N + 1):
            total += hsic_core(kx, ky, z[i], z[j], z[wrap(i)], z[wrap(j)])
    return total / N**2


def oracle_ksd(kernel, score, X, config: OracleConfig = DEFAULT):
    """``(V, U)`` KSD statistics from a double loop over the Stein kernel (U is ``nan`` for n = 1)."""
    xs = _rows(X, "X")
    n = len(xs)
    config.check(n=n)
    v = 0.0
    u = 0.0
    for i in range(n):
        for j in range(n):
            h = stein_kernel(kernel, score, xs[i], xs[j])
            v += h
            if i != j:
                u += h
    return v / (n * n), (u / (n * (n - 1)) if n > 1 else float("nan"))


def oracle_design_average(core, design: Design, config: OracleConfig = DEFAULT) -> float:
    """Mean of ``core.scalar(i, j)`` over the listed design pairs."""
    config.check(n=core.n)
    pairs = design.pairs(core.n)
    total = 0.0
    for i, j in pairs:
        total += core.scalar(int(i), int(j))
    return total / len(pairs)


def oracle_sigma(core, design: Design, config: OracleConfig = DEFAULT) -> float:
    """Normaliser from per-row means of ``core.scalar`` over the design.

    Returns the square root of the (possibly negative) radicand as ``nan`` when
    it is negative.
    """
    config.check(n=core.n)
    pairs = [(int(i), int(j)) for i, j in design.pairs(core.n)]
    rows = {}
    for i, j in pairs:
        rows.setdefault(i, []).append(core.scalar(i, j))
    first = sum(np.mean(vals) ** 2 for vals in rows.values()) * 4.0 / len(rows)
    second = (2.0 / len(pairs) * sum(core.scalar(i, j) for i, j in pairs)) ** 2
    radicand = first - second
    return float(np.sqrt(radicand)) if radicand >= 0 else float("nan")
