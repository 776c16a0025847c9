"""Brute-force reference implementations used only by tests.

Nothing here is shared with the production estimators: partitions, moments
and spectral products are re-derived from their definitions at O(N^2)-ish
cost and small N. Production modules must never import this module.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import signal as sig


@dataclass
class OracleReport:
    quantity: str
    reference: float
    estimate: float
    tolerance: float

    @property
    def relative_error(self) -> float:
        return abs(self.estimate - self.reference) / max(abs(self.reference), 1e-12)

    @property
    def ok(self) -> bool:
        return self.relative_error <= self.tolerance


# ---------------------------------------------------------------------------
# direct cyclic periodogram


def _resolution_kernel(N: int, width: int = 64) -> np.ndarray:
    """Spectral smoothing kernel matched to a width-bin channel response."""
    g = np.hamming(width)
    buf = np.zeros(N)
    buf[:width] = g / np.sum(g)
    # complex response of the window centered at lag zero
    kern = np.fft.fft(np.roll(buf, -(width // 2)))
    return kern / np.sum(np.abs(kern))


def direct_cyclic_periodogram(iq: np.ndarray, alpha: float,
                              conjugate: bool, width: int = 64):
    """Frequency profile of the smoothed cyclic periodogram at one cycle
    frequency: kernel-weighted average of X(f1) X^(*)(f2) / N^2 with
    f1 - f2 = alpha (non-conjugate) or f1 + f2 = alpha (conjugate).
    alpha must sit on the 1/N grid. Output estimates the spectral
    correlation density at channelizer resolution.
    """
    x = np.asarray(iq)
    N = len(x)
    a = int(round(alpha * N)) % N
    X = np.fft.fft(x)
    k = np.arange(N)
    if conjugate:
        prod = X[k] * X[(a - k) % N] / N
    else:
        prod = X[k] * np.conj(X[(k - a) % N]) / N
    kern = _resolution_kernel(N, width)
    sm = np.fft.ifft(np.fft.fft(prod) * np.fft.fft(kern))
    return np.abs(sm)


def cyclic_profile_peak(iq, alpha, conjugate, width=64) -> float:
    return float(np.max(direct_cyclic_periodogram(iq, alpha, conjugate,
                                                  width)))


def scan_cycle_frequencies(iq: np.ndarray, conjugate: bool,
                           width: int = 64,
                           threshold: float = 0.45):
    """Exhaustive coherence scan over the integer 1/N alpha grid.

    The smoothed cyclic periodogram is evaluated at the width channel-center
    frequencies and normalized by a segment-averaged PSD at 1/width
    resolution. Returns (alphas, coherence peaks) for local maxima above the
    absolute coherence threshold, strongest first.
    """
    x = np.asarray(iq)
    N = len(x)
    W = max(1, N // width)  # channel spacing in bins
    X = np.fft.fft(x)
    k = np.arange(N)

    kern = _resolution_kernel(N, width)
    Kf = np.fft.fft(kern)

    def smooth(rows):
        return np.fft.ifft(np.fft.fft(rows, axis=-1) * Kf, axis=-1)

    # segment-averaged PSD on the 1/width grid, natural bin order
    w = np.hamming(width)
    segs = x[: (N // width) * width].reshape(-1, width) * w[None, :]
    psd = np.mean(np.abs(np.fft.fft(segs, axis=1)) ** 2, axis=0) / np.sum(w ** 2)
    p_floor = 2e-2 * float(np.max(psd)) + 1e-30
    psd = np.maximum(psd, p_floor)

    lattice = np.arange(width) * W          # channel centers, in bins
    f1 = lattice / N                        # channel center frequencies mod 1
    p1 = psd[np.round(f1 * width).astype(int) % width]
    peaks = np.empty(N)
    chunk = 256
    for a0 in range(0, N, chunk):
        a = np.arange(a0, min(a0 + chunk, N))[:, None]
        if conjugate:
            prod = X[k][None, :] * X[(a - k) % N] / N
        else:
            prod = X[k][None, :] * np.conj(X[(k - a) % N]) / N
        prof = np.abs(smooth(prod))[:, lattice]
        # second spectral leg per cell: f2 = -q (non-conj) or q (conj),
        # where q = alpha - f1 folded mod 1
        q = a / N - f1[None, :]
        f2 = q if conjugate else -q
        p2 = psd[np.round(((f2 + 0.5) % 1.0) * width - width / 2).astype(int) % width]
        coh = prof / np.sqrt(p1[None, :] * p2)
        peaks[a[:, 0]] = np.max(coh, axis=-1)
    window = 64  # local-maximum suppression radius, in 1/N bins
    order = np.argsort(peaks)[::-1]
    ext = np.concatenate((peaks[-window:], peaks, peaks[:window]))
    accepted = []
    for a in order:
        if peaks[a] <= threshold:
            break
        if peaks[a] < np.max(ext[a: a + 2 * window + 1]):
            continue  # shoulder of a stronger neighbor, not a line
        if not conjugate and min(a, N - a) <= window:
            continue  # the PSD itself, trivially present
        if any(min((a - b) % N, (b - a) % N) <= window for b, _ in accepted):
            continue
        accepted.append((a, peaks[a]))
    out_a, out_m = [], []
    for a, m in accepted:
        alpha = a / N
        if alpha >= 0.5:
            alpha -= 1.0  # canonical representative in [-0.5, 0.5)
        out_a.append(alpha)
        out_m.append(m)
    return np.array(out_a), np.array(out_m)


# ---------------------------------------------------------------------------
# direct joint cumulants


def _partitions(items):
    """All set partitions of a list, by simple recursion."""
    if len(items) == 1:
        yield [items]
        return
    first, rest = items[0], items[1:]
    for smaller in _partitions(rest):
        for i, part in enumerate(smaller):
            yield smaller[:i] + [[first] + part] + smaller[i + 1:]
        yield [[first]] + smaller


def direct_joint_cumulant(columns: np.ndarray, conj_mask) -> complex:
    """Joint cumulant of n jointly sampled variables by the partition formula.

    columns: (n, n_samples); conj_mask: length-n booleans, True = conjugated.
    Moments are sample averages; no code shared with the production combiner.
    """
    cols = np.asarray(columns, dtype=complex)
    n = cols.shape[0]
    if n > 6:
        raise ValueError("n <= 6 only")
    cols = np.where(np.asarray(conj_mask, dtype=bool)[:, None],
                    np.conj(cols), cols)
    total = 0.0 + 0.0j
    for part_list in _partitions(list(range(n))):
        p = len(part_list)
        h = (-1) ** (p - 1) * math.factorial(p - 1)
        prod = 1.0 + 0.0j
        for part in part_list:
            prod *= np.mean(np.prod(cols[part, :], axis=0))
        total += h * prod
    return complex(total)


# ---------------------------------------------------------------------------
# PSD-integration SNR meter


def snr_meter(iq: np.ndarray, band: tuple) -> float:
    """In-band SNR (dB) with the truth band known, by PSD integration."""
    x = np.asarray(iq)
    f, psd = sig.welch(x, fs=1.0, nperseg=min(4096, len(x)),
                       return_onesided=False, detrend=False,
                       window="hann")
    f = np.fft.fftshift(f)
    psd = np.fft.fftshift(psd)
    lo, hi = band
    inband = (f >= lo) & (f <= hi)
    if inband.all():
        raise ValueError("band covers the whole spectrum; no noise reference")
    noise_density = float(np.median(psd[~inband]))
    df = f[1] - f[0]
    sig_power = float(np.sum(psd[inband] - noise_density) * df)
    bw = hi - lo
    sig_power = max(sig_power, 1e-12)
    return 10.0 * np.log10(sig_power / (noise_density * bw))


# ---------------------------------------------------------------------------
# high-SNR cyclic-cumulant simulator (template oracle)

# per-symbol phase rotation of the effective i.i.d. PAM symbols, as a
# fraction of a cycle: pi/4-DQPSK rotates by 1/8 turn, MSK (Laurent
# representation) by 1/4 turn
_ROTATION = {"pi4-dqpsk": 1.0 / 8.0, "msk": 1.0 / 4.0}


def _sym_moment(alphabet: np.ndarray, l: int, m: int) -> complex:
    return complex(np.mean(alphabet ** l * np.conj(alphabet) ** m))


def symbol_cumulant_bruteforce(alphabet: np.ndarray, n: int, m: int) -> complex:
    """Joint cumulant of n copies of the symbol variable, m conjugated,
    from exact alphabet moments via the partition formula."""
    conj = [i >= n - m for i in range(n)]
    total = 0.0 + 0.0j
    for part_list in _partitions(list(range(n))):
        p = len(part_list)
        h = (-1) ** (p - 1) * math.factorial(p - 1)
        prod = 1.0 + 0.0j
        for part in part_list:
            mm = sum(conj[i] for i in part)
            prod *= _sym_moment(alphabet, len(part) - mm, mm)
        total += h * prod
    return complex(total)


def _truth_part_grid(scheme_tag: str, n_j: int, m_j: int, f0: float,
                     rate: float, sym_alphabet, k_max: int = 5):
    """Cycle frequencies where the order-(n_j, m_j) moment of the truth
    scheme is nonzero, from the rotation fraction and symbol moments."""
    d = n_j - 2 * m_j
    rot = _ROTATION.get(scheme_tag, 0.0)
    frac = (d * rot) % 1.0
    # does any symbol moment of this order survive? (moment, not cumulant:
    # lower-order parts enter through moments)
    mom = _sym_moment(np.asarray(sym_alphabet), n_j - m_j, m_j)
    if abs(mom) < 1e-9:
        return []
    ks = np.arange(-k_max, k_max + 1)
    # deduplicate modulo 1: on the integer sample grid, cycle frequencies
    # congruent mod 1 are identical and must enter the combination once
    out: list = []
    residues: list = []
    for v in d * f0 + (ks + frac) * rate:
        r = v % 1.0
        if any(abs((r - q + 0.5) % 1.0 - 0.5) < 1e-9 for q in residues):
            continue
        residues.append(r)
        out.append(float(v))
    return out


def high_snr_cc_oracle(iq: np.ndarray, scheme_tag: str, f0: float,
                       rate: float, sym_alphabet, n: int, m: int,
                       alpha: float) -> complex:
    """Cyclic cumulant of a noise-free record at truth parameters.

    Independent combiner: own partition enumeration, direct DFT moments,
    brute-force gamma-vector search over the truth cycle-frequency sets.
    """
    x = np.asarray(iq)
    N = len(x)
    t = np.arange(N)
    conj = [i >= n - m for i in range(n)]
    cache: dict = {}

    def ctmf(n_j, m_j, gamma):
        key = (n_j, m_j, round(gamma * 1e9))
        if key not in cache:
            v = x ** (n_j - m_j) * np.conj(x) ** m_j
            cache[key] = complex(np.mean(v * np.exp(-2j * np.pi * gamma * t)))
        return cache[key]

    total = 0.0 + 0.0j
    for part_list in _partitions(list(range(n))):
        p = len(part_list)
        h = (-1) ** (p - 1) * math.factorial(p - 1)
        grids = []
        for part in part_list:
            m_j = sum(conj[i] for i in part)
            g = _truth_part_grid(scheme_tag, len(part), m_j, f0, rate,
                                 sym_alphabet)
            grids.append((len(part), m_j, g))
        if any(len(g) == 0 for _, _, g in grids):
            continue
        for combo in itertools.product(*[g for _, _, g in grids]):
            if abs((sum(combo) - alpha + 0.5) % 1.0 - 0.5) > 1e-6:
                continue
            prod = 1.0 + 0.0j
            for (n_j, m_j, _), gamma in zip(grids, combo):
                prod *= ctmf(n_j, m_j, gamma)
            total += h * prod
    return complex(total)
