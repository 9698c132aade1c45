"""Index-pair designs: which ``(i, j)`` core evaluations a statistic averages.

Indices are 0-based. Every design maps a position ``p`` in its enumeration
sequence to a pair arithmetically, so any contiguous slice of the sequence can
be produced independently; this is what lets statistics stream fixed-size
chunks in a deterministic order.

============  =============================================  =====================
design        pairs                                          enumeration order
============  =============================================  =====================
V             all ``n**2`` pairs                             row-major
U             ``i != j``                                     row-major
L             ``(2i, 2i+1)`` for ``i < n // 2``              index order
D(r)          ``(i, i+j)`` for ``1 <= j <= r``               by diagonal, then row
B(sizes)      ``i != j`` within consecutive blocks           row-major per block
X(n1)         ``i < n1 <= j``                                row-major
R(m)          ``m`` draws from ``i < j``                     draw order
============  =============================================  =====================
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DesignError

CHUNK = 1 << 17


class Design:
    """Base class. Subclasses implement ``cardinality`` and ``_positions``."""

    label = "?"

    def validate(self, n: int) -> None:
        if int(n) != n or n < 2:
            raise DesignError(f"designs need n >= 2, got {n}")

    def cardinality(self, n: int) -> int:
        raise NotImplementedError

    def _positions(self, n: int, start: int, stop: int):
        raise NotImplementedError

    def pairs(self, n: int) -> np.ndarray:
        """All pairs as an ``(|D|, 2)`` integer array in enumeration order."""
        self.validate(n)
        I, J = self._positions(n, 0, self.cardinality(n))
        return np.stack([I, J], axis=1)

    def chunks(self, n: int, size: int = CHUNK):
        """Yield ``(I, J)`` for consecutive fixed-size slices of the enumeration."""
        self.validate(n)
        total = self.cardinality(n)
        for start in range(0, total, size):
            yield self._positions(n, start, min(start + size, total))

    def to_dict(self) -> dict:
        return {"variant": self.label}


@dataclass(frozen=True)
class VDesign(Design):
    label = "V"

    def cardinality(self, n):
        return n * n

    def _positions(self, n, start, stop):
        p = np.arange(start, stop, dtype=np.int64)
        return p // n, p % n


@dataclass(frozen=True)
class UDesign(Design):
    label = "U"

    def cardinality(self, n):
        return n * (n - 1)

    def _positions(self, n, start, stop):
        p = np.arange(start, stop, dtype=np.int64)
        i, c = p // (n - 1), p % (n - 1)
        return i, c + (c >= i)


@dataclass(frozen=True)
class LDesign(Design):
    """Disjoint consecutive pairs; with odd ``n`` the last observation is unused."""

    label = "L"

    def cardinality(self, n):
        return n // 2

    def _positions(self, n, start, stop):
        p = np.arange(start, stop, dtype=np.int64)
        return 2 * p, 2 * p + 1


@dataclass(frozen=True)
class DDesign(Design):
    """First ``r`` superdiagonals of the core matrix."""

    r: int = 1
    label = "D"

    def validate(self, n):
        super().validate(n)
        if int(self.r) != self.r or not 1 <= self.r <= n - 1:
            raise DesignError(f"D design needs 1 <= r <= n - 1, got r={self.r}, n={n}")

    def cardinality(self, n):
        r = self.r
        return r * n - r * (r + 1) // 2

    def _positions(self, n, start, stop):
        p = np.arange(start, stop, dtype=np.int64)
        lengths = n - np.arange(1, self.r + 1, dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(lengths)])
        diag = np.searchsorted(offsets, p, side="right") - 1
        i = p - offsets[diag]
        return i, i + diag + 1

    def to_dict(self):
        return {"variant": "D", "r": self.r}


@dataclass(frozen=True)
class BDesign(Design):
    """Ordered within-block pairs for consecutive blocks of the given sizes."""

    block_sizes: tuple = ()
    label = "B"

    def __post_init__(self):
        object.__setattr__(self, "block_sizes", tuple(int(b) for b in self.block_sizes))

    def validate(self, n):
        super().validate(n)
        if not self.block_sizes:
            raise DesignError("B design needs at least one block")
        if any(b < 2 for b in self.block_sizes):
            raise DesignError(f"every block needs at least 2 observations, got {self.block_sizes}")
        if sum(self.block_sizes) > n:
            raise DesignError(f"blocks {self.block_sizes} exceed n={n}")

    def cardinality(self, n):
        return sum(b * (b - 1) for b in self.block_sizes)

    def _positions(self, n, start, stop):
        p = np.arange(start, stop, dtype=np.int64)
        sizes = np.asarray(self.block_sizes, dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(sizes * (sizes - 1))])
        firsts = np.concatenate([[0], np.cumsum(sizes)])
        blk = np.searchsorted(offsets, p, side="right") - 1
        q = p - offsets[blk]
        b = sizes[blk]
        i, c = q // (b - 1), q % (b - 1)
        j = c + (c >= i)
        return i + firsts[blk], j + firsts[blk]

    def to_dict(self):
        return {"variant": "B", "block_sizes": list(self.block_sizes)}


def equal_blocks(n: int, b: int) -> BDesign:
    """``b`` blocks of size ``n // b``; a trailing remainder forms an extra block if it has >= 2 points."""
    if int(b) != b or b < 1 or n // b < 2:
        raise DesignError(f"cannot split n={n} into {b} blocks of size >= 2")
    size = n // b
    sizes = [size] * b
    rest = n - size * b
    if rest >= 2:
        sizes.append(rest)
    return BDesign(tuple(sizes))


@dataclass(frozen=True)
class XDesign(Design):
    """Cross block ``i < n1 <= j``: first and second arguments use disjoint observations."""

    n1: int = 1
    label = "X"

    def validate(self, n):
        super().validate(n)
        if int(self.n1) != self.n1 or not 1 <= self.n1 <= n - 1:
            raise DesignError(f"X design needs 1 <= n1 <= n - 1, got n1={self.n1}, n={n}")

    def cardinality(self, n):
        return self.n1 * (n - self.n1)

    def _positions(self, n, start, stop):
        p = np.arange(start, stop, dtype=np.int64)
        w = n - self.n1
        return p // w, self.n1 + p % w

    def to_dict(self):
        return {"variant": "X", "n1": self.n1}


def _unrank_upper(t, n):
    """Map ranks in row-major order of ``{(i, j): i < j < n}`` to pairs."""
    t = np.asarray(t, dtype=np.int64)
    m = n * (n - 1) // 2
    # row i starts at rank i*n - i*(i+1)/2; invert with a float estimate then fix up
    k = m - 1 - t
    row_from_end = np.floor((np.sqrt(8.0 * k + 1.0) - 1.0) / 2.0).astype(np.int64)
    i = n - 2 - row_from_end

    def start(ii):
        return ii * n - ii * (ii + 1) // 2

    for _ in range(2):
        i = np.where(start(i) > t, i - 1, i)
        i = np.where(start(i + 1) <= t, i + 1, i)
    j = t - start(i) + i + 1
    return i, j


@dataclass(frozen=True)
class RDesign(Design):
    """``size`` pairs drawn uniformly from the strict upper triangle.

    Draws come from a Philox counter-based generator seeded with ``seed``, so the
    sequence depends only on ``(seed, n, size, with_replacement)``.
    """

    size: int = 1
    with_replacement: bool = False
    seed: int = 0
    label = "R"

    def validate(self, n):
        super().validate(n)
        if int(self.size) != self.size or self.size < 1:
            raise DesignError(f"R design needs size >= 1, got {self.size}")
        if not self.with_replacement and self.size > n * (n - 1) // 2:
            raise DesignError(f"cannot draw {self.size} distinct pairs from n={n}")
        if not 0 <= int(self.seed) < 2**64:
            raise DesignError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    def cardinality(self, n):
        return int(self.size)

    def draws(self, n: int) -> np.ndarray:
        rng = np.random.Generator(np.random.Philox(int(self.seed)))
        m = n * (n - 1) // 2
        if self.with_replacement:
            return rng.integers(0, m, size=self.size, dtype=np.int64)
        return rng.choice(m, size=self.size, replace=False).astype(np.int64)

    def chunks(self, n, size=CHUNK):
        self.validate(n)
        ranks = self.draws(n)
        for start in range(0, ranks.shape[0], size):
            yield _unrank_upper(ranks[start:start + size], n)

    def _positions(self, n, start, stop):
        return _unrank_upper(self.draws(n)[start:stop], n)

    def to_dict(self):
        return {
            "variant": "R",
            "size": int(self.size),
            "with_replacement": bool(self.with_replacement),
            "seed": int(self.seed),
        }


def enumerate_pairs(design: Design, n: int) -> np.ndarray:
    """All index pairs of ``design`` for ``n`` observations, in enumeration order."""
    return design.pairs(n)


def design_cardinality(design: Design, n: int) -> int:
    """Closed-form ``|D|`` for ``n`` observations."""
    design.validate(n)
    return design.cardinality(n)
