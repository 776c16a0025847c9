"""Synthesis of labeled digitally modulated baseband records.

Signals follow the model x[n] = a * s[n] * exp(i*(2*pi*f0*n + phi)) + w[n]
with s a unit-average-power modulated baseband waveform at normalized sample
rate 1, and w circular complex white Gaussian noise of density N0 = 1.
Supported schemes: BPSK, QPSK, 8PSK, pi/4-DQPSK, MSK and 16/64/256-QAM.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from enum import Enum
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

NOISE_DENSITY = 1.0  # N0, linear power per unit normalized frequency (0 dB)
SRRC_SPAN = 16       # pulse truncation, in symbols
MSK_99PCT_BW = 1.18  # 99%-power bandwidth of MSK in units of the symbol rate

_SEED_SYMBOLS = 0x53594d
_SEED_NOISE = 0x4e4f49


class ModulationScheme(str, Enum):
    BPSK = "bpsk"
    QPSK = "qpsk"
    PSK8 = "8psk"
    DQPSK_PI4 = "pi4-dqpsk"
    MSK = "msk"
    QAM16 = "16qam"
    QAM64 = "64qam"
    QAM256 = "256qam"


def _square_qam(side: int) -> np.ndarray:
    levels = np.arange(-(side - 1), side, 2, dtype=float)
    re, im = np.meshgrid(levels, levels)
    pts = (re + 1j * im).ravel()
    return pts / np.sqrt(np.mean(np.abs(pts) ** 2))


def alphabet(scheme: ModulationScheme) -> np.ndarray:
    """Unit-average-power symbol alphabet (MSK has none; raises)."""
    if scheme is ModulationScheme.BPSK:
        return np.array([1.0 + 0j, -1.0 + 0j])
    if scheme is ModulationScheme.QPSK:
        return np.exp(1j * (np.pi / 4 + np.pi / 2 * np.arange(4)))
    if scheme is ModulationScheme.PSK8:
        return np.exp(1j * np.pi / 4 * np.arange(8))
    if scheme is ModulationScheme.DQPSK_PI4:
        # marginal distribution of the differentially rotated symbols
        return np.exp(1j * np.pi / 4 * np.arange(8))
    if scheme is ModulationScheme.QAM16:
        return _square_qam(4)
    if scheme is ModulationScheme.QAM64:
        return _square_qam(8)
    if scheme is ModulationScheme.QAM256:
        return _square_qam(16)
    raise ValueError(f"{scheme} has no i.i.d. symbol alphabet")


@dataclass
class SignalParams:
    scheme: ModulationScheme
    amplitude: float = 1.0
    cfo: float = 0.0
    symbol_period: float = 8.0
    rolloff: float = 0.35
    phase: float = 0.0
    inband_snr: float | None = 10.0  # dB; None disables noise
    num_samples: int = 32768
    seed: int = 0

    def __post_init__(self):
        if self.symbol_period < 1.0:
            raise ValueError("symbol_period must be >= 1 sample")
        if not (0.0 <= self.rolloff <= 1.0):
            raise ValueError("rolloff must lie in [0, 1]")
        if self.num_samples < 1024:
            raise ValueError("num_samples must be >= 1024")
        if self.amplitude <= 0:
            raise ValueError("amplitude must be positive")

    @property
    def occupied_bw(self) -> float:
        """Occupied bandwidth in cycles/sample, capped at the full band."""
        if self.scheme is ModulationScheme.MSK:
            bw = MSK_99PCT_BW / self.symbol_period
        else:
            bw = (1.0 + self.rolloff) / self.symbol_period
        return min(bw, 1.0)

    @classmethod
    def from_snr(cls, scheme, inband_snr, **kw) -> "SignalParams":
        """Build params with amplitude set from the in-band SNR relation
        a^2 = 10^(snr/10) * N0 * B."""
        p = cls(scheme=scheme, inband_snr=inband_snr, **kw)
        p.amplitude = math.sqrt(
            10.0 ** (inband_snr / 10.0) * NOISE_DENSITY * p.occupied_bw)
        return p


@dataclass
class IQRecord:
    samples: np.ndarray
    truth: SignalParams | None = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if not np.all(np.isfinite(self.samples.view(float))):
            raise ValueError("non-finite samples")
        if self.truth is not None and len(self.samples) != self.truth.num_samples:
            raise ValueError("length does not match truth.num_samples")

    def __len__(self):
        return len(self.samples)


def _srrc(t: np.ndarray, beta: float, T0: float) -> np.ndarray:
    """Square-root raised-cosine waveform at arbitrary instants t (samples).

    Closed form with the removable singularities at t=0 and t=+-T0/(4 beta)
    evaluated by their limits. Not normalized.
    """
    t = np.asarray(t, dtype=float)
    u = t / T0
    out = np.empty_like(u)
    if beta == 0.0:
        near0 = np.isclose(u, 0.0, atol=1e-12)
        safe = np.where(near0, 1.0, u)
        out = np.sin(np.pi * safe) / (np.pi * safe)
        out[near0] = 1.0
        return out
    sing = np.isclose(np.abs(u), 1.0 / (4.0 * beta), atol=1e-10)
    near0 = np.isclose(u, 0.0, atol=1e-12)
    safe = np.where(near0 | sing, 0.01, u)  # 0.01 is never a singularity
    num = (np.sin(np.pi * safe * (1 - beta))
           + 4 * beta * safe * np.cos(np.pi * safe * (1 + beta)))
    den = np.pi * safe * (1 - (4 * beta * safe) ** 2)
    out = num / den
    out[near0] = 1.0 - beta + 4 * beta / np.pi
    lim = (beta / np.sqrt(2.0)) * (
        (1 + 2 / np.pi) * np.sin(np.pi / (4 * beta))
        + (1 - 2 / np.pi) * np.cos(np.pi / (4 * beta)))
    out[sing] = lim
    return out


def srrc_pulse(beta: float, T0: float, span: int = SRRC_SPAN) -> np.ndarray:
    """Unit-energy SRRC tap sequence sampled at the record rate.

    Length round(span*T0)+1, symmetric about the center tap.
    """
    if not (0.0 <= beta <= 1.0):
        raise ValueError("beta must lie in [0, 1]")
    if T0 <= 0:
        raise ValueError("T0 must be positive")
    if span < 8:
        raise ValueError("span must be >= 8 symbols")
    half = round(span * T0) // 2
    t = np.arange(-half, half + 1, dtype=float)
    taps = _srrc(t, beta, T0)
    return taps / np.sqrt(np.sum(taps ** 2))


def _pulse_energy(beta: float, T0: float, span: int = SRRC_SPAN) -> float:
    """Continuous-time energy of the un-normalized SRRC, by fine quadrature."""
    dt = min(T0, 1.0) / 32.0
    half = span * T0 / 2.0
    t = np.arange(-half, half + dt / 2, dt)
    p = _srrc(t, beta, T0)
    return float(np.sum(p ** 2) * dt)


def _draw_symbols(scheme: ModulationScheme, n_sym: int,
                  rng: np.random.Generator) -> np.ndarray:
    if scheme is ModulationScheme.DQPSK_PI4:
        steps = np.pi / 4 + np.pi / 2 * rng.integers(0, 4, size=n_sym)
        steps[0] = np.pi / 2 * rng.integers(0, 4)  # initial reference
        return np.exp(1j * np.cumsum(steps))
    a = alphabet(scheme)
    return a[rng.integers(0, len(a), size=n_sym)]


def _linear_pam(params: SignalParams, rng: np.random.Generator) -> np.ndarray:
    """Pulse train sum_k a_k p(n - k*T0) with exact fractional symbol times."""
    N, T0, beta = params.num_samples, params.symbol_period, params.rolloff
    half = SRRC_SPAN * T0 / 2.0
    # symbol centers covering [-half, N + half)
    k0 = int(np.floor(-half / T0)) - 1
    k1 = int(np.ceil((N + half) / T0)) + 1
    centers = np.arange(k0, k1) * T0
    syms = _draw_symbols(params.scheme, len(centers), rng)

    width = int(2 * half) + 3
    starts = np.ceil(centers - half).astype(int)
    offs = np.arange(width)
    t_rel = starts[:, None] + offs[None, :] - centers[:, None]
    taps = _srrc(t_rel, beta, T0)
    taps[np.abs(t_rel) > half] = 0.0
    # scale so the waveform has unit average power: E|s|^2 = E_p / T0
    taps *= 1.0 / np.sqrt(_pulse_energy(beta, T0) / T0)

    idx = (starts[:, None] + offs[None, :]).ravel()
    vals = (syms[:, None] * taps).ravel()
    keep = (idx >= 0) & (idx < N)
    out = np.zeros(N, dtype=complex)
    np.add.at(out, idx[keep], vals[keep])
    return out


def _msk(params: SignalParams, rng: np.random.Generator) -> np.ndarray:
    """Constant-envelope continuous-phase MSK waveform, unit power exactly."""
    N, T0 = params.num_samples, params.symbol_period
    n_sym = int(np.ceil(N / T0)) + 1
    bits = rng.choice([-1.0, 1.0], size=n_sym)
    t = np.arange(N, dtype=float)
    k = np.minimum((t / T0).astype(int), n_sym - 1)
    frac = t / T0 - k
    cum = np.concatenate(([0.0], np.cumsum(bits)))
    theta = (np.pi / 2.0) * (cum[k] + bits[k] * frac)
    return np.exp(1j * theta)


def synthesize(params: SignalParams) -> IQRecord:
    """Generate one record; deterministic in params.seed."""
    rng_sym = np.random.default_rng([params.seed, _SEED_SYMBOLS])
    if params.scheme is ModulationScheme.MSK:
        s = _msk(params, rng_sym)
    else:
        s = _linear_pam(params, rng_sym)
    n = np.arange(params.num_samples)
    x = params.amplitude * s * np.exp(
        1j * (2 * np.pi * params.cfo * n + params.phase))
    if params.inband_snr is not None:
        rng_noise = np.random.default_rng([params.seed, _SEED_NOISE])
        w = (rng_noise.standard_normal(params.num_samples)
             + 1j * rng_noise.standard_normal(params.num_samples))
        x = x + np.sqrt(NOISE_DENSITY / 2.0) * w
    return IQRecord(samples=x, truth=params)


PROFILES = {
    "cspb2018-like": dict(f0=(-0.001, 0.001), T0=(1.0, 23.0),
                          snr=(0.0, 12.0), snr_center=9.0),
    "cspb2022-like": dict(f0=(0.01, 0.02), T0=(1.0, 29.0),
                          snr=(1.0, 18.0), snr_center=12.0),
}

SCHEME_ORDER = list(ModulationScheme)


@dataclass
class DatasetSpec:
    profile: str = "cspb2018-like"
    count_per_class: int = 100
    num_samples: int = 32768
    master_seed: int = 1
    ranges: dict = field(default_factory=dict)  # overrides for "custom"

    @property
    def total(self) -> int:
        return self.count_per_class * len(SCHEME_ORDER)

    def _ranges(self) -> dict:
        if self.profile == "custom":
            return self.ranges
        return PROFILES[self.profile]


def sample_params(spec: DatasetSpec, index: int) -> SignalParams:
    """Deterministic parameter draw for record `index` of the dataset.

    Records are class-major: index // count_per_class selects the scheme.
    The SNR draw is triangular over the profile range, peaking at the
    profile's center-of-mass value.
    """
    if not (0 <= index < spec.total):
        raise IndexError("record index outside the dataset")
    r = spec._ranges()
    scheme = SCHEME_ORDER[index // spec.count_per_class]
    rng = np.random.default_rng([spec.master_seed, index])
    snr = rng.triangular(r["snr"][0], r["snr_center"], r["snr"][1])
    return SignalParams.from_snr(
        scheme=scheme,
        inband_snr=float(snr),
        cfo=float(rng.uniform(*r["f0"])),
        symbol_period=float(rng.uniform(*r["T0"])),
        rolloff=float(rng.uniform(0.1, 1.0)),
        phase=float(rng.uniform(0.0, 2 * np.pi)),
        num_samples=spec.num_samples,
        seed=int(rng.integers(0, 2 ** 31)),
    )


def generate_dataset(spec: DatasetSpec) -> Iterator[IQRecord]:
    for i in range(spec.total):
        yield synthesize(sample_params(spec, i))


def manifest_entry(index: int, p: SignalParams) -> dict:
    return {
        "index": index,
        "scheme": p.scheme.value,
        "a": p.amplitude,
        "f0": p.cfo,
        "T0": p.symbol_period,
        "beta": p.rolloff,
        "phi": p.phase,
        "snr_db": p.inband_snr,
        "seed": p.seed,
    }


def write_dataset(spec: DatasetSpec, data_path, manifest_path) -> None:
    """Binary file of little-endian float32 interleaved I,Q (record-major,
    fixed N per record) plus a JSON-lines manifest."""
    data_path, manifest_path = Path(data_path), Path(manifest_path)
    with data_path.open("wb") as fd, manifest_path.open("w") as fm:
        for i in range(spec.total):
            p = sample_params(spec, i)
            rec = synthesize(p)
            write_iq(fd, rec.samples)
            fm.write(json.dumps(manifest_entry(i, p)) + "\n")


def write_iq(fd, samples: np.ndarray) -> None:
    inter = np.empty(2 * len(samples), dtype="<f4")
    inter[0::2] = samples.real
    inter[1::2] = samples.imag
    fd.write(inter.tobytes())


def read_dataset(data_path, manifest_path):
    """Yield (samples, manifest dict) pairs from the writer's format."""
    entries = [json.loads(line) for line in Path(manifest_path).open()]
    raw = np.fromfile(data_path, dtype="<f4")
    n_per = len(raw) // (2 * len(entries)) if entries else 0
    for i, e in enumerate(entries):
        chunk = raw[2 * i * n_per: 2 * (i + 1) * n_per]
        yield chunk[0::2] + 1j * chunk[1::2], e
