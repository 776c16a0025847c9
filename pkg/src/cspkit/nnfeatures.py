"""Deterministic feature-extraction layers for neural-network front ends.

These layers compute elementwise complex powers of a normalized I/Q record
(expressed as real I/Q pairs), centered FFT magnitudes, and max-magnitude
warping, and bundle the branch outputs of the two front-end variants:

* ``UTP8`` — the record normalized to unit total power feeds eight branches:
  time-domain and centered-FFT-magnitude outputs at orders 2, 4, 6, and 8.
* ``USP10`` — the record normalized to unit signal power feeds ten branches:
  five from an internally re-normalized unit-total-power copy (orders 2/4/6
  time plus 2/4 frequency) and the same five from the unit-signal-power copy
  with order-matched warping layers applied.

Every time-domain branch output equals the elementwise complex power z**n of
its (re-normalized) input exactly; the layers are algebraic proxies for the
homogeneous delay products used by cyclic-moment estimators.

`export_descriptor` emits a machine-readable description of the downstream
convolutional branch stacks so external trainers can reproduce them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from .spectrum import BoiEstimate, normalize_usp, normalize_utp

__all__ = [
    "BranchOutput",
    "FeatureBundle",
    "square_layer",
    "pow3_layer",
    "fft_mag_layer",
    "warp_time_layer",
    "warp_freq_layer",
    "utp_bundle",
    "usp_bundle",
    "export_descriptor",
    "write_bundle",
]


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class BranchOutput:
    """One branch of a feature bundle.

    ``data`` is an (N, 2) float array of I/Q pairs for time-domain branches
    and an (N,) nonnegative float array (zero frequency at the center index)
    for frequency-domain branches.
    """

    branch_id: str
    domain: str  # "time" | "frequency"
    order: int  # 2, 4, 6, or 8
    data: np.ndarray

    def __post_init__(self) -> None:
        if self.domain not in ("time", "frequency"):
            raise ValueError(f"unknown domain {self.domain!r}")
        if self.order not in (2, 4, 6, 8):
            raise ValueError(f"unsupported order {self.order}")
        if self.domain == "frequency" and np.any(self.data < 0):
            raise ValueError("frequency-domain data must be nonnegative")


@dataclass(frozen=True)
class FeatureBundle:
    """A complete set of branch outputs for one record."""

    variant: str  # "UTP8" | "USP10"
    branches: Tuple[BranchOutput, ...]
    provenance: BoiEstimate | None = None

    def __post_init__(self) -> None:
        expected = {"UTP8": 8, "USP10": 10}.get(self.variant)
        if expected is None:
            raise ValueError(f"unknown variant {self.variant!r}")
        if len(self.branches) != expected:
            raise ValueError(
                f"{self.variant} requires {expected} branches, got {len(self.branches)}"
            )

    def branch(self, branch_id: str) -> BranchOutput:
        for b in self.branches:
            if b.branch_id == branch_id:
                return b
        raise KeyError(branch_id)


# ---------------------------------------------------------------------------
# elementary layers (real I/Q pairs in, real I/Q pairs out)


def _check_pair(i: np.ndarray, q: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    i = np.asarray(i, dtype=float)
    q = np.asarray(q, dtype=float)
    if i.shape != q.shape:
        raise ValueError("I and Q must have equal lengths")
    return i, q


def square_layer(i: np.ndarray, q: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Elementwise complex square expressed in real pairs: (I²−Q², 2IQ)."""
    i, q = _check_pair(i, q)
    return i * i - q * q, 2.0 * i * q


def pow3_layer(i: np.ndarray, q: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Elementwise complex cube: (I³−3IQ², 3I²Q−Q³)."""
    i, q = _check_pair(i, q)
    return i**3 - 3.0 * i * q * q, 3.0 * i * i * q - q**3


def fft_mag_layer(i: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Magnitude of the length-N transform with the zero-frequency bin at the
    center index."""
    i, q = _check_pair(i, q)
    n = len(i)
    if n == 0 or n & (n - 1):
        raise ValueError("length must be a power of two")
    return np.abs(np.fft.fftshift(np.fft.fft(i + 1j * q)))


_TIME_WARP_EXP = {2: 0.5, 4: 0.5, 6: 2.0 / 3.0}
_FREQ_WARP_EXP = {2: 0.5, 4: 0.5}


def _warp_scale(max_mag: float, exponent: float) -> float:
    if max_mag == 0:
        raise ValueError("all-zero input")
    return max_mag**exponent


def warp_time_layer(
    i: np.ndarray, q: np.ndarray, order: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Divide every sample by max|z| raised to the order-dependent exponent
    (1/2 for orders 2 and 4, 2/3 for order 6; order 2 reuses the order-4
    exponent)."""
    i, q = _check_pair(i, q)
    if order not in _TIME_WARP_EXP:
        raise ValueError(f"unsupported time-warp order {order}")
    scale = _warp_scale(float(np.max(np.hypot(i, q))), _TIME_WARP_EXP[order])
    return i / scale, q / scale


def warp_freq_layer(mag: np.ndarray, order: int) -> np.ndarray:
    """Divide a magnitude sequence by max(mag) raised to the exponent 1/2."""
    mag = np.asarray(mag, dtype=float)
    if order not in _FREQ_WARP_EXP:
        raise ValueError(f"unsupported frequency-warp order {order}")
    return mag / _warp_scale(float(np.max(mag)), _FREQ_WARP_EXP[order])


# ---------------------------------------------------------------------------
# branch chains


def _order_chain(i: np.ndarray, q: np.ndarray, order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Elementwise z**order via the nonlinear layer chain (square, square of
    square, square of cube, square of square of square)."""
    if order == 2:
        return square_layer(i, q)
    if order == 4:
        return square_layer(*square_layer(i, q))
    if order == 6:
        return square_layer(*pow3_layer(i, q))
    if order == 8:
        return square_layer(*square_layer(*square_layer(i, q)))
    raise ValueError(f"unsupported order {order}")


def _split(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x)
    return np.real(x).astype(float), np.imag(x).astype(float)


def _time_branch(prefix: str, i: np.ndarray, q: np.ndarray, order: int) -> BranchOutput:
    ti, tq = _order_chain(i, q, order)
    return BranchOutput(f"{prefix}-t{order}", "time", order, np.stack([ti, tq], axis=-1))


def _freq_branch(prefix: str, i: np.ndarray, q: np.ndarray, order: int) -> BranchOutput:
    ti, tq = _order_chain(i, q, order)
    return BranchOutput(f"{prefix}-f{order}", "frequency", order, fft_mag_layer(ti, tq))


def utp_bundle(iq, boi: BoiEstimate | None = None) -> FeatureBundle:
    """Eight branches from a BOI-centered record re-normalized to unit total
    power: time and centered-FFT-magnitude outputs at orders 2, 4, 6, 8."""
    rec = normalize_utp(iq)
    i, q = _split(rec.samples)
    branches = []
    for order in (2, 4, 6, 8):
        branches.append(_time_branch("utp", i, q, order))
        branches.append(_freq_branch("utp", i, q, order))
    return FeatureBundle("UTP8", tuple(branches), provenance=boi)


_USP_SIDE_ORDERS = (("t", 2), ("f", 2), ("t", 4), ("f", 4), ("t", 6))


def usp_bundle(iq, boi: BoiEstimate) -> FeatureBundle:
    """Ten branches: the five-branch subset (orders 2/4/6 time, 2/4 frequency)
    computed from a unit-total-power copy, plus the same five from the
    unit-signal-power record with the order-matched warping layers applied.

    The warping on the USP side is applied to the time-domain chain output
    before any FFT-magnitude, matching the layer order of the branch layout.
    """
    usp = normalize_usp(iq, boi)
    iu, qu = _split(normalize_utp(usp.samples).samples)
    is_, qs = _split(usp.samples)
    branches: List[BranchOutput] = []
    for dom, order in _USP_SIDE_ORDERS:
        if dom == "t":
            branches.append(_time_branch("utp", iu, qu, order))
        else:
            branches.append(_freq_branch("utp", iu, qu, order))
    for dom, order in _USP_SIDE_ORDERS:
        ti, tq = _order_chain(is_, qs, order)
        wi, wq = warp_time_layer(ti, tq, order)
        if dom == "t":
            data = np.stack([wi, wq], axis=-1)
            branches.append(BranchOutput(f"usp-t{order}", "time", order, data))
        else:
            branches.append(
                BranchOutput(f"usp-f{order}", "frequency", order, fft_mag_layer(wi, wq))
            )
    return FeatureBundle("USP10", tuple(branches), provenance=boi)


# ---------------------------------------------------------------------------
# architecture descriptor

_CONV_STAGES = [
    # (stage kind, filters, input length, output length)
    ("conv_max_pool", 16, 32768, 16384),
    ("conv_max_pool", 24, 16384, 8192),
    ("conv_max_pool", 32, 8192, 4096),
    ("conv_max_pool", 48, 4096, 2048),
    ("conv_max_pool", 64, 2048, 1024),
    ("conv_avg_pool", 96, 1024, 1),
]
_FILTER_LENGTH = 23


def _branch_stack(input_channels: int) -> List[Dict]:
    stack: List[Dict] = [
        {"layer": "input", "activations": [32768, input_channels]},
    ]
    channels = input_channels
    for kind, filters, n_in, n_out in _CONV_STAGES:
        pool = (
            {"layer": "max_pool", "size": [1, 2], "stride": [1, 2]}
            if kind == "conv_max_pool"
            else {"layer": "avg_pool", "size": [1, n_in], "stride": [1, 1]}
        )
        stack.append(
            {
                "layer": kind,
                "filters": filters,
                "filter_size": [_FILTER_LENGTH, channels],
                "stride": [1, 1],
                "sublayers": [
                    {"layer": "conv", "filters": filters,
                     "filter_size": [_FILTER_LENGTH, channels], "stride": [1, 1]},
                    {"layer": "batch_norm"},
                    {"layer": "relu"},
                    pool,
                ],
                "activations": [n_out, filters],
            }
        )
        channels = filters
    stack.append({"layer": "fully_connected", "outputs": 8})
    return stack


@dataclass(frozen=True)
class ArchitectureDescriptor:
    """Machine-readable branch layer stacks for one bundle variant."""

    variant: str
    branches: Tuple[Dict, ...]

    def as_dict(self) -> Dict:
        return {"variant": self.variant, "branches": list(self.branches)}


def _branch_ids(variant: str) -> List[Tuple[str, str]]:
    if variant == "UTP8":
        return [(f"utp-{d}{o}", "time" if d == "t" else "frequency")
                for o in (2, 4, 6, 8) for d in ("t", "f")]
    if variant == "USP10":
        ids = []
        for prefix in ("utp", "usp"):
            for d, o in _USP_SIDE_ORDERS:
                ids.append((f"{prefix}-{d}{o}",
                            "time" if d == "t" else "frequency"))
        return ids
    raise ValueError(f"unknown variant {variant!r}")


def export_descriptor(variant: str) -> ArchitectureDescriptor:
    """Describe every convolutional branch of the requested bundle variant:
    six convolutional stages (16, 24, 32, 48, 64 filters with max pooling,
    then 96 with average pooling), filter length 23 throughout, and a final
    fully connected layer with eight outputs per branch."""
    branches = []
    for branch_id, domain in _branch_ids(variant):
        channels = 2 if domain == "time" else 1
        branches.append(
            {"branch_id": branch_id, "domain": domain,
             "layers": _branch_stack(channels)}
        )
    return ArchitectureDescriptor(variant=variant, branches=tuple(branches))


# ---------------------------------------------------------------------------
# serialization


def write_bundle(bundle: FeatureBundle, path) -> None:
    """Write branch-major little-endian 32-bit floats with a JSON header
    describing branch ids, domains, orders, and lengths."""
    import json

    header = {
        "variant": bundle.variant,
        "branches": [
            {
                "branch_id": b.branch_id,
                "domain": b.domain,
                "order": b.order,
                "length": int(b.data.shape[0]),
                "values_per_sample": 2 if b.domain == "time" else 1,
            }
            for b in bundle.branches
        ],
    }
    blob = b"".join(
        np.asarray(b.data, dtype="<f4").tobytes() for b in bundle.branches
    )
    head = json.dumps(header).encode()
    with open(path, "wb") as fh:
        fh.write(len(head).to_bytes(8, "little"))
        fh.write(head)
        fh.write(blob)
