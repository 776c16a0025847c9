"""Power-spectrum estimation, blind band detection, centering and
normalization.

Everything downstream (cycle-frequency detection, cumulant estimation,
feature layers) runs on records that were centered, band-limited and
resampled here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np
from scipy import signal as sig

from .sigmodel import IQRecord

DEFAULT_SEG_LEN = 2048
# factor over the noise floor a smoothed bin must reach to seed a band;
# calibrated so 0 dB in-band SNR records (density = 2x floor) still detect
BAND_THRESHOLD = 1.45
# band edges extend while the excess density stays above this fraction of
# the in-band median excess
EDGE_FRACTION = 0.05
# fraction of the output Nyquist band the retained signal should occupy.
# Kept low enough that the resampled symbol rate stays below 0.5 even for
# rolloff 0.2 and a ~10% bandwidth underestimate: spectral lines of real
# delay products fold at 0.5, and a rate beyond it is ambiguous with its
# mirror image.
TARGET_FRACTIONAL_BW = 0.55
MAX_RESAMPLE_DEN = 64


@dataclass
class PsdEstimate:
    bins: np.ndarray          # power density, zero frequency at center
    resolution: float         # cycles/sample per bin
    centered: bool = True

    @property
    def freqs(self) -> np.ndarray:
        n = len(self.bins)
        return (np.arange(n) - n // 2) * self.resolution


@dataclass
class BoiEstimate:
    center_freq: float
    occupied_bw: float
    noise_density: float
    signal_power: float
    excess_bw: float | None = None  # filled once the symbol rate is known

    @property
    def inband_snr_db(self) -> float:
        return 10.0 * math.log10(
            max(self.signal_power, 1e-300)
            / (self.noise_density * self.occupied_bw))


def estimate_psd(iq, seg_len: int = DEFAULT_SEG_LEN) -> PsdEstimate:
    """Averaged periodogram: Hann-windowed segments, 50% overlap, centered.

    Density normalization: sum(bins) * resolution equals mean |x|^2.
    """
    x = iq.samples if isinstance(iq, IQRecord) else np.asarray(iq)
    n = len(x)
    if seg_len > n:
        raise ValueError("seg_len exceeds record length")
    if seg_len & (seg_len - 1):
        raise ValueError("seg_len must be a power of two")
    win = np.hanning(seg_len)
    scale = np.sum(win ** 2)
    hop = seg_len // 2
    n_seg = 1 + (n - seg_len) // hop
    acc = np.zeros(seg_len)
    for i in range(n_seg):
        seg = x[i * hop: i * hop + seg_len] * win
        acc += np.abs(np.fft.fft(seg)) ** 2
    psd = np.fft.fftshift(acc / (n_seg * scale))
    return PsdEstimate(bins=psd, resolution=1.0 / seg_len)


def _smooth(v: np.ndarray, width: int) -> np.ndarray:
    """Circular boxcar smoothing (the sampled spectrum is periodic)."""
    width = max(1, width)
    kern = np.zeros(len(v))
    kern[:width] = 1.0 / width
    kern = np.roll(kern, -(width // 2))
    return np.real(np.fft.ifft(np.fft.fft(v) * np.fft.fft(kern)))


def detect_boi(psd: PsdEstimate, threshold: float = BAND_THRESHOLD) -> BoiEstimate:
    """Energy-threshold band-of-interest detector on a smoothed PSD."""
    if not psd.centered:
        raise ValueError("psd must be centered")
    bins = psd.bins
    n = len(bins)
    width = max(3, n // 64)
    sm = _smooth(bins, width)
    floor = float(np.median(np.sort(sm)[: n // 4]))
    above = sm > threshold * floor
    if not above.any():
        raise ValueError("no signal detected")
    # maximal contiguous run above threshold, bridging short gaps
    gap = max(2, width // 2)
    runs = _runs(above, bridge=gap)
    lo, hi = max(runs, key=lambda r: float(np.sum(sm[r[0]:r[1]] - floor)))
    # extend edges down to a small fraction of the in-band excess
    excess_med = float(np.median(sm[lo:hi])) - floor
    edge = floor + EDGE_FRACTION * excess_med
    while lo > 0 and sm[lo - 1] > edge:
        lo -= 1
    while hi < n and sm[hi] > edge:
        hi += 1
    freqs = psd.freqs
    df = psd.resolution
    seg = bins[lo:hi] - floor
    power = float(np.sum(seg) * df)
    if power <= 0:
        raise ValueError("no signal detected")
    center = float(np.sum(freqs[lo:hi] * seg) / np.sum(seg))
    occ = (hi - lo) * df
    return BoiEstimate(center_freq=center, occupied_bw=min(occ, 1.0 - df),
                       noise_density=floor, signal_power=power)


def _runs(mask: np.ndarray, bridge: int = 0):
    """Contiguous True runs of a boolean array, bridging gaps <= bridge."""
    idx = np.flatnonzero(mask)
    if len(idx) == 0:
        return []
    runs = []
    start = prev = idx[0]
    for i in idx[1:]:
        if i - prev > bridge + 1:
            runs.append((start, prev + 1))
            start = i
        prev = i
    runs.append((start, prev + 1))
    return runs


@dataclass
class FilterInfo:
    """Bookkeeping for mapping estimates on the processed record back to the
    original sample rate."""
    ratio: Fraction            # new_rate / old_rate
    mask_enbw: float           # equivalent noise bandwidth of the mask, old units
    shift: float               # frequency shift applied (old units)
    boi: BoiEstimate

    def to_original_freq(self, f_new: float) -> float:
        return f_new * float(self.ratio) + self.shift


def _design_mask(n: int, bw: float, margin: float = 0.12):
    """Frequency mask (fftshift order) with raised-cosine transitions."""
    f = (np.arange(n) - n // 2) / n
    half = bw * (1.0 + margin) / 2.0
    trans = max(bw * 0.1, 4.0 / n)
    mask = np.zeros(n)
    a = np.abs(f)
    mask[a <= half] = 1.0
    t = (a - half) / trans
    sel = (t > 0) & (t < 1)
    mask[sel] = 0.5 * (1 + np.cos(np.pi * t[sel]))
    return mask


def center_filter_resample(iq, boi: BoiEstimate,
                           target_frac: float = TARGET_FRACTIONAL_BW,
                           min_samples: int = 8192):
    """Shift the BOI to baseband, mask out-of-band noise, and resample so the
    fractional bandwidth is maximized but stays below 1.

    The output keeps at least min_samples samples (when the input has them):
    cycle-frequency detection needs enough transform length to hold its
    estimation-noise coherence floor down.
    """
    x = iq.samples if isinstance(iq, IQRecord) else np.asarray(iq)
    n = len(x)
    if boi.occupied_bw <= 0:
        raise ValueError("degenerate bandwidth")
    t = np.arange(n)
    y = x * np.exp(-2j * np.pi * boi.center_freq * t)
    mask = _design_mask(n, boi.occupied_bw)
    Y = np.fft.fftshift(np.fft.fft(y))
    y = np.fft.ifft(np.fft.ifftshift(Y * mask))
    enbw = float(np.sum(mask ** 2) / n)
    total_width = enbw  # effective retained width in old units

    ratio = Fraction(1)
    want = total_width / target_frac
    if n > min_samples:
        want = max(want, min_samples / n)
    else:
        want = 1.0
    if want < 1.0:
        ratio = Fraction(want).limit_denominator(MAX_RESAMPLE_DEN)
        while float(ratio) < want:
            ratio = Fraction(ratio.numerator + 1, ratio.denominator)
        if ratio >= 1:
            ratio = Fraction(1)
        else:
            y = sig.resample_poly(y, ratio.numerator, ratio.denominator)
    info = FilterInfo(ratio=ratio, mask_enbw=enbw,
                      shift=boi.center_freq, boi=boi)
    return IQRecord(samples=np.ascontiguousarray(y)), info


def center_and_filter(iq, boi: BoiEstimate) -> IQRecord:
    rec, _ = center_filter_resample(iq, boi)
    return rec


def normalize_utp(iq) -> IQRecord:
    """Unit total power: divide by the RMS of the samples."""
    x = iq.samples if isinstance(iq, IQRecord) else np.asarray(iq)
    rms = np.sqrt(np.mean(np.abs(x) ** 2))
    if rms == 0:
        raise ValueError("all-zero input")
    return IQRecord(samples=x / rms)


def normalize_usp(iq, boi: BoiEstimate) -> IQRecord:
    """Unit signal power: divide by the square root of the blind signal-power
    estimate."""
    x = iq.samples if isinstance(iq, IQRecord) else np.asarray(iq)
    if boi.signal_power <= 0:
        raise ValueError("nonpositive signal power")
    return IQRecord(samples=x / math.sqrt(boi.signal_power))
