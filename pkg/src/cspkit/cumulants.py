"""Cyclic-cumulant feature estimation.

Moments of a homogeneous delay product (tau = 0 throughout) are reduced to
cumulants through the set-partition combination; each partition part
contributes a cyclic temporal moment at a lower-order cycle frequency, and
the part cycle frequencies must sum to the target cycle frequency of the
cumulant.  Features are collected on an 11-slot x 15-pair grid, then warped
and power-scaled into the classifier's feature matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .blindest import (CfPattern, CycleFrequencySet, HARMONIC_CAP,
                       KeyParamEstimates, NM_PAIRS, _row_offset)
from .sigmodel import IQRecord

# magnitude ceiling for warped, power-scaled entries; a blown-up power
# estimate on a junk record must not produce unbounded feature values
WARPED_MAG_CAP = 20.0

_GAMMA_DECIMALS = 9
_GAMMA_TOL = 1e-6


# ---------------------------------------------------------------------------
# set partitions


def enumerate_partitions(n: int) -> list[tuple[tuple[int, ...], ...]]:
    """All partitions of {0..n-1} as tuples of sorted index tuples, in a
    deterministic (restricted-growth) order."""
    if n > 6:
        raise ValueError("partition enumeration limited to n <= 6")
    return list(_partitions(n))


@lru_cache(maxsize=None)
def _partitions(n: int) -> tuple[tuple[tuple[int, ...], ...], ...]:
    out = []

    def grow(i, parts):
        if i == n:
            out.append(tuple(tuple(p) for p in parts))
            return
        for j in range(len(parts)):
            grow(i + 1, parts[:j] + [parts[j] + [i]] + parts[j + 1:])
        grow(i + 1, parts + [[i]])

    grow(0, [])
    return tuple(out)


def partition_weight(p: int) -> int:
    """Combination weight (-1)^(p-1) * (p-1)! for a partition into p parts."""
    w = 1
    for j in range(1, p):
        w *= -j
    return w


# ---------------------------------------------------------------------------
# cyclic temporal moments


@dataclass
class CtmfEstimate:
    value: complex
    gamma: float
    pair: tuple[int, int]


class _CtmfCache:
    """Per-record CTMF evaluations, shared across partitions and targets."""

    def __init__(self, x: np.ndarray):
        self.x = np.asarray(x, dtype=complex)
        self.t = np.arange(len(self.x))
        self._products: dict[tuple[int, int], np.ndarray] = {}
        self._values: dict[tuple[int, int, float], complex] = {}

    def product(self, n: int, m: int) -> np.ndarray:
        key = (n, m)
        if key not in self._products:
            self._products[key] = self.x ** (n - m) * np.conj(self.x) ** m
        return self._products[key]

    def ctmf(self, n: int, m: int, gamma: float) -> complex:
        key = (n, m, round(gamma, _GAMMA_DECIMALS))
        if key not in self._values:
            dp = self.product(n, m)
            tone = np.exp(-2j * np.pi * gamma * self.t)
            self._values[key] = complex(np.mean(dp * tone))
        return self._values[key]


def ctmf_estimate(iq, pair: tuple[int, int], gamma: float) -> CtmfEstimate:
    """Finite-time cyclic temporal moment of the order-n delay product with
    m conjugations: (1/T) sum_t x^(n-m)(t) x*(t)^m e^(-i2pi gamma t).

    Evaluated as a direct inner product with the complex exponential, exact
    for arbitrary gamma (no FFT grid snapping)."""
    x = iq.samples if isinstance(iq, IQRecord) else np.asarray(iq)
    n, m = pair
    cache = _CtmfCache(x)
    return CtmfEstimate(value=cache.ctmf(n, m, gamma), gamma=gamma,
                        pair=(n, m))


# ---------------------------------------------------------------------------
# cyclic cumulants


@dataclass
class CcFeatureMatrix:
    """11 slot x 15 pair complex feature grid.

    Rows index the harmonic number k in -5..5 (staggered rows occupy the
    k-th row for slot k + 1/2); columns follow NM_PAIRS order.  Unpopulated
    cells are exactly zero and masked out."""
    values: np.ndarray
    mask: np.ndarray
    rate: float = 0.0
    cfo: float = 0.0
    pattern: CfPattern = CfPattern.UNKNOWN
    power: float = 0.0
    warped: bool = False

    @classmethod
    def empty(cls, **kw) -> CcFeatureMatrix:
        return cls(values=np.zeros((2 * HARMONIC_CAP + 1, len(NM_PAIRS)),
                                   dtype=complex),
                   mask=np.zeros((2 * HARMONIC_CAP + 1, len(NM_PAIRS)),
                                 dtype=bool), **kw)

    def flat(self) -> np.ndarray:
        """Fixed export order: slot-major, (n, m)-minor."""
        return self.values.reshape(-1)


def _part_candidates(n_j: int, m_j: int, grid: CycleFrequencySet):
    """Admissible part cycle frequencies: the part's own pattern-pruned
    harmonic comb, plus zero for balanced-conjugation parts."""
    d = n_j - 2 * m_j
    gammas = set()
    if n_j % 2 == 0 and m_j == n_j // 2:
        gammas.add(0.0)
    off = _row_offset(grid.pattern, d)
    if off is None and (n_j, m_j) == (2, 1):
        off = 0.0
    if off is not None:
        for k in range(-HARMONIC_CAP - 1, HARMONIC_CAP + 1):
            s = k + off
            if abs(s) > HARMONIC_CAP:
                continue
            gammas.add(round(d * grid.cfo + s * grid.rate, _GAMMA_DECIMALS))
    # on the integer sample grid, gammas congruent modulo 1 are the same
    # cycle frequency; keeping both would double-count the CTMF product
    out = []
    residues: list[float] = []
    for g in sorted(gammas):
        r = g % 1.0
        if any(abs((r - q + 0.5) % 1.0 - 0.5) <= _GAMMA_TOL
               for q in residues):
            continue
        residues.append(r)
        out.append(g)
    return out


@lru_cache(maxsize=None)
def _partition_types(n: int, m: int):
    """Partitions grouped by the multiset of part (order, conjugations):
    parts with equal shape contribute identical factors, so each distinct
    type is evaluated once and weighted by its multiplicity.  Conjugations
    are assigned to the last m indices."""
    conj = set(range(n - m, n))
    counts: dict[tuple, int] = {}
    for parts in _partitions(n):
        key = tuple(sorted((len(p), sum(i in conj for i in p))
                           for p in parts))
        counts[key] = counts.get(key, 0) + 1
    return counts


def cc_estimate(iq, grid: CycleFrequencySet,
                est: KeyParamEstimates | None = None,
                noise_power: float = 0.0) -> CcFeatureMatrix:
    """Unwarped cyclic-cumulant features on the cycle-frequency grid.

    Each target cumulant is the partition combination of CTMF estimates
    whose part cycle frequencies sum to the target; noise_power (in-band
    additive noise) is removed from the zero-frequency power slot, the only
    entry a Gaussian contributes to in expectation."""
    x = iq.samples if isinstance(iq, IQRecord) else np.asarray(iq)
    if not grid.pairs or grid.total == 0:
        raise ValueError("cycle-frequency grid is unresolved")
    cache = _CtmfCache(x)
    out = CcFeatureMatrix.empty(rate=grid.rate, cfo=grid.cfo,
                                pattern=grid.pattern,
                                power=float(np.mean(np.abs(x) ** 2)))
    for col, (n, m) in enumerate(NM_PAIRS):
        slots = grid.pairs.get((n, m), [])
        if not slots:
            continue
        # sparse convolution of the parts' candidate-frequency spectra,
        # accumulated over all partition types; every target slot of this
        # row then reads the same combined spectrum
        combined: dict[float, complex] = {}
        for ptype, mult in _partition_types(n, m).items():
            weight = mult * partition_weight(len(ptype))
            acc = {0.0: 1.0 + 0.0j}
            for (nj, mj) in ptype:
                nxt: dict[float, complex] = {}
                for gsum, prod in acc.items():
                    for g in _part_candidates(nj, mj, grid):
                        key = round(gsum + g, _GAMMA_DECIMALS)
                        nxt[key] = nxt.get(key, 0.0) \
                            + prod * cache.ctmf(nj, mj, g)
                acc = nxt
            for gs, v in acc.items():
                combined[gs] = combined.get(gs, 0.0) + weight * v
        # discrete-time cycle frequencies live on the unit circle, so part
        # sums are matched to the targets modulo 1
        keys = np.array(list(combined.keys()), dtype=float) % 1.0
        vals = np.array(list(combined.values()), dtype=complex)
        order = np.argsort(keys)
        keys, vals = keys[order], vals[order]
        keys = np.concatenate([keys - 1.0, keys, keys + 1.0])
        vals = np.concatenate([vals, vals, vals])
        for s, alpha in slots:
            row = int(np.floor(s)) + HARMONIC_CAP
            a = alpha % 1.0
            lo = np.searchsorted(keys, a - _GAMMA_TOL, side="left")
            hi = np.searchsorted(keys, a + _GAMMA_TOL, side="right")
            value = complex(np.sum(vals[lo:hi]))
            if (n, m) == (2, 1) and abs(alpha) <= _GAMMA_TOL:
                value -= noise_power
            out.values[row, col] = value
            out.mask[row, col] = True
    return out


def warp_and_scale(cc: CcFeatureMatrix, power_est: float) -> CcFeatureMatrix:
    """Warp order-n magnitudes by the exponent 2/n (phase preserved) and
    scale to unit signal power; warped magnitudes all scale linearly with
    power, so a single division normalizes every order."""
    if power_est <= 0:
        raise ValueError("power estimate must be positive")
    values = np.zeros_like(cc.values)
    for col, (n, _m) in enumerate(NM_PAIRS):
        v = cc.values[:, col]
        mag = np.abs(v) ** (2.0 / n) / power_est
        ph = np.where(np.abs(v) > 0, v / np.where(np.abs(v) > 0,
                                                  np.abs(v), 1.0), 0.0)
        values[:, col] = np.minimum(mag, WARPED_MAG_CAP) * ph
    return CcFeatureMatrix(values=values, mask=cc.mask.copy(), rate=cc.rate,
                           cfo=cc.cfo, pattern=cc.pattern, power=power_est,
                           warped=True)


# ---------------------------------------------------------------------------
# exact symbol cumulants (template support)


def symbol_cumulant(alphabet, pair: tuple[int, int]) -> complex:
    """Joint cumulant of n copies of a symbol variable, m of them
    conjugated, from exact alphabet moments via the partition
    combination."""
    a = np.asarray(alphabet, dtype=complex)
    n, m = pair
    conj = set(range(n - m, n))
    total = 0.0 + 0.0j
    for parts in _partitions(n):
        term = partition_weight(len(parts))
        for p in parts:
            mj = sum(i in conj for i in p)
            term *= complex(np.mean(a ** (len(p) - mj) * np.conj(a) ** mj))
        total += term
    return complex(total)
