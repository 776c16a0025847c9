"""Strip spectral correlation analyzer: exhaustive second-order cycle
frequency detection, non-conjugate and conjugate.

The channelizer forms N' complex demodulates at full rate, multiplies by the
(conjugated) record, and takes N-point transforms; every (strip, bin) pair
yields a point estimate of the spectral correlation at one (f, alpha) cell.
Detections are alpha values whose spectral coherence exceeds a threshold.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .sigmodel import IQRecord

DEFAULT_STRIPS = 64
DEFAULT_COHERENCE_THRESHOLD = 0.25
# local-maximum suppression window, in alpha bins of 1/N
PEAK_WINDOW = 64
_EPS = 1e-12


@dataclass
class SscaConfig:
    n_samples: int = 32768
    n_strips: int = DEFAULT_STRIPS
    coherence_threshold: float = DEFAULT_COHERENCE_THRESHOLD

    def __post_init__(self):
        for v in (self.n_samples, self.n_strips):
            if v & (v - 1):
                raise ValueError("N and N' must be powers of two")
        if self.n_strips > self.n_samples:
            raise ValueError("N' must not exceed N")
        if not (0.0 < self.coherence_threshold < 1.0):
            raise ValueError("coherence_threshold must lie in (0,1)")


@dataclass
class CfDetection:
    alpha: float
    conjugate: bool
    scf_magnitude: float
    coherence: float


def cyclic_autocorr(iq, alpha: float, tau: int, conjugate: bool) -> complex:
    """Finite-time (conjugate) cyclic autocorrelation at integer-split
    symmetric lag: (1/T) sum x(t+ceil(tau/2)) x^(*)(t-floor(tau/2)) e^{-i2pi a t}."""
    x = iq.samples if isinstance(iq, IQRecord) else np.asarray(iq)
    N = len(x)
    if abs(tau) >= N:
        raise ValueError("|tau| must be below the record length")
    t1 = int(np.ceil(tau / 2))
    t2 = t1 - tau  # -floor(tau/2), so the lag between the factors is tau
    lo = max(0, -t1, -t2)
    hi = min(N, N - t1, N - t2)
    t = np.arange(lo, hi)
    b = x[t + t2]
    b = np.conj(b) if not conjugate else b
    v = x[t + t1] * b * np.exp(-2j * np.pi * alpha * t)
    return complex(np.sum(v) / N)


def _demodulates(x: np.ndarray, n_strips: int, window: np.ndarray):
    """N x N' matrix of windowed, phase-referenced complex demodulates."""
    N = len(x)
    Np = n_strips
    half = Np // 2
    # circular continuation keeps every frame fully populated, so the surface
    # is an exact frequency-smoothed cyclic periodogram of the record
    pad = np.concatenate([x[-half:], x, x[:Np]])
    frames = np.lib.stride_tricks.sliding_window_view(pad, Np)[:N]
    X = np.fft.fft(frames * window[None, :], axis=1)
    n = np.arange(N)[:, None]
    k = np.arange(Np)[None, :]
    # reference each strip's phase to absolute time n (frame starts n - N'/2)
    X = X * np.exp(-2j * np.pi * k * ((n - half) % Np) / Np)
    return X


def strip_window(n_strips: int) -> np.ndarray:
    w = np.hamming(n_strips)
    return w / np.sum(w)


def ssca_spectrum(iq, cfg: SscaConfig, conjugate: bool):
    """Raw SSCA surface: returns (S, fk, coherence) where S[q, k] estimates
    the spectral correlation density at alpha = fk[k] + q/N."""
    x = iq.samples if isinstance(iq, IQRecord) else np.asarray(iq)
    if len(x) < cfg.n_samples:
        raise ValueError("record shorter than cfg.n_samples")
    x = x[: cfg.n_samples]
    N, Np = cfg.n_samples, cfg.n_strips
    g = strip_window(Np)
    X = _demodulates(x, Np, g)
    other = x if conjugate else np.conj(x)
    Z = X * other[:, None]
    S = np.fft.fft(Z, axis=0) / N
    # convert the G-weighted band integral to a band-averaged density so
    # magnitudes compare against matched-resolution cyclic periodograms
    S = S / (np.sum(np.abs(np.fft.fft(g, N))) / N)
    S = np.fft.fftshift(S, axes=(0, 1))
    fk = (np.arange(Np) - Np // 2) / Np
    return S, fk


def _psd_for_coherence(x: np.ndarray, n_strips: int) -> np.ndarray:
    """PSD at strip resolution on the 1/N' grid (centered), by segment
    averaging with the strip window."""
    Np = n_strips
    w = np.hamming(Np)
    n_seg = len(x) // Np
    segs = x[: n_seg * Np].reshape(n_seg, Np) * w[None, :]
    p = np.mean(np.abs(np.fft.fft(segs, axis=1)) ** 2, axis=0) / np.sum(w ** 2)
    return np.fft.fftshift(p)


def _psd_lookup(psd: np.ndarray, f: np.ndarray) -> np.ndarray:
    Np = len(psd)
    idx = np.round(((f + 0.5) % 1.0) * Np).astype(int) % Np
    return psd[idx]


def ssca_detect(iq, cfg: SscaConfig, conjugate: bool) -> list[CfDetection]:
    """Cycle-frequency detections, sorted by coherence descending."""
    x = iq.samples if isinstance(iq, IQRecord) else np.asarray(iq)
    x = x[: cfg.n_samples]
    N, Np = cfg.n_samples, cfg.n_strips
    S, fk = ssca_spectrum(x, cfg, conjugate)
    psd = _psd_for_coherence(x, Np)
    qs = (np.arange(N) - N // 2) / N

    # coherence per cell: legs are f1 = fk, f2 = -q/N (x*) or q/N (x)
    leg2 = qs if conjugate else -qs
    # relative floor keeps out-of-band (near-zero PSD) legs from creating
    # huge spurious coherence on low-noise records
    p_floor = 2e-2 * float(np.max(psd)) + _EPS
    p2 = np.maximum(_psd_lookup(psd, leg2), p_floor)
    p1 = np.maximum(_psd_lookup(psd, fk), p_floor)
    denom = np.sqrt(p2[:, None] * p1[None, :])
    coh = np.abs(S) / (denom + _EPS)

    # aggregate max over strips into alpha bins of 1/N; alpha in (-1, 1)
    step = N // Np
    coh_acc = np.zeros(2 * N)
    mag_acc = np.zeros(2 * N)
    for k in range(Np):
        off = (k - Np // 2) * step + N // 2
        region = slice(off, off + N)
        coh_acc[region] = np.maximum(coh_acc[region], coh[:, k])
        mag_acc[region] = np.maximum(mag_acc[region], np.abs(S[:, k]))

    # cycle frequencies of a sampled record are defined mod 1 and the surface
    # double-covers them; fold both covers so every bin sees all strips
    coh_fold = np.maximum(coh_acc[:N], coh_acc[N:])
    mag_fold = np.maximum(mag_acc[:N], mag_acc[N:])
    filt = ndimage.maximum_filter1d(coh_fold, size=2 * PEAK_WINDOW + 1,
                                    mode="wrap")
    # guard the estimation-noise coherence floor at small N
    floor_guard = 5.0 * np.sqrt(Np / N)
    thr = max(cfg.coherence_threshold, floor_guard)
    idx = np.flatnonzero((coh_fold >= thr) & (coh_fold >= filt))
    best: dict[int, CfDetection] = {}
    for i in idx:
        alpha = (i / N + 0.5) % 1.0 - 0.5
        if not conjugate and abs(alpha) <= PEAK_WINDOW / N:
            continue  # the PSD ridge at alpha=0 is not a detection
        key = round(alpha * N)
        d = CfDetection(alpha=float(alpha), conjugate=conjugate,
                        scf_magnitude=float(mag_fold[i]),
                        coherence=float(min(coh_fold[i], 1.0)))
        if key not in best or best[key].coherence < d.coherence:
            best[key] = d
    out = []
    for d in sorted(best.values(), key=lambda d: -d.coherence):
        if any(abs(d.alpha - e.alpha) <= 3.0 / N for e in out):
            continue  # same line seen on both covers, off by a bin
        out.append(d)
    return out
