"""Minimum-distance modulation classification on warped cyclic-cumulant
features.

Templates are computed analytically from the linear-modulation structure:
the order-(n, m) cyclic cumulant at harmonic slot s is the symbol cumulant
times the Fourier transform of the n-th power of the pulse at s/T0, with a
per-symbol rotation moving staggered rows onto half-integer slots.  After
unit-power normalization the templates are T0-independent, so one grid per
scheme and roll-off covers every symbol rate.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .blindest import CfPattern, HARMONIC_CAP, NM_PAIRS, build_cf_grid, \
    KeyParamEstimates
from .cumulants import CcFeatureMatrix, symbol_cumulant
from .sigmodel import ModulationScheme, alphabet

BETA_GRID = tuple(round(0.1 * b, 1) for b in range(1, 11))
DEFAULT_UNKNOWN_THRESHOLD = 0.23
# inverse-noise weights per cumulant order: the variance of an order-n
# feature grows roughly as n! while the 2/n magnitude warp flattens the
# signal content, so higher orders carry proportionally less evidence
DEFAULT_ORDER_WEIGHTS = {2: 1.0, 4: 0.5, 6: 0.2}
# an Unknown pattern means no conjugate, quartic, or octic line survived
# detection; schemes that would have produced those lines are charged this
# extra distance, since their balanced-row templates alone cannot be told
# apart from constant-envelope schemes
MISSING_EVIDENCE_PENALTY = 0.03

# per-symbol rotation (fraction of a full turn per symbol) of the effective
# linear-modulation representation
_ROTATION = {ModulationScheme.DQPSK_PI4: 1.0 / 8.0,
             ModulationScheme.MSK: 1.0 / 4.0}

# effective i.i.d. symbol stream of the linear representation (the rotation
# is factored out, so pi/4-DQPSK reduces to a QPSK stream and MSK to an
# antipodal stream on a half-sine pulse)
_BASE_ALPHABET = {
    ModulationScheme.DQPSK_PI4: ModulationScheme.QPSK,
    ModulationScheme.MSK: ModulationScheme.BPSK,
}

SCHEME_PATTERN = {
    ModulationScheme.BPSK: CfPattern.BPSK_LIKE,
    ModulationScheme.MSK: CfPattern.BPSK_LIKE,
    ModulationScheme.QPSK: CfPattern.QPSK_LIKE,
    ModulationScheme.QAM16: CfPattern.QPSK_LIKE,
    ModulationScheme.QAM64: CfPattern.QPSK_LIKE,
    ModulationScheme.QAM256: CfPattern.QPSK_LIKE,
    ModulationScheme.DQPSK_PI4: CfPattern.DQPSK_PI4_LIKE,
    ModulationScheme.PSK8: CfPattern.PSK8_LIKE,
}


def base_alphabet(scheme: ModulationScheme) -> np.ndarray:
    return alphabet(_BASE_ALPHABET.get(scheme, scheme))


# ---------------------------------------------------------------------------
# pulse transforms


def _prototype_pulse(scheme: ModulationScheme, beta: float, dt: float,
                     span: float):
    """Unit-period pulse samples on a dt grid (T0 = 1)."""
    t = np.arange(-span, span + dt / 2, dt)
    if scheme is ModulationScheme.MSK:
        p = np.where(np.abs(t) <= 1.0, np.cos(np.pi * t / 2.0), 0.0)
        return t, p
    # square-root raised cosine, T0 = 1
    p = np.zeros_like(t)
    for i, ti in enumerate(t):
        at = abs(ti)
        if abs(1.0 - (4.0 * beta * at) ** 2) < 1e-8:
            p[i] = (beta / np.sqrt(2.0)) * (
                (1 + 2 / np.pi) * np.sin(np.pi / (4 * beta))
                + (1 - 2 / np.pi) * np.cos(np.pi / (4 * beta)))
        elif at < 1e-12:
            p[i] = 1.0 - beta + 4.0 * beta / np.pi
        else:
            num = (np.sin(np.pi * ti * (1 - beta))
                   + 4 * beta * ti * np.cos(np.pi * ti * (1 + beta)))
            den = np.pi * ti * (1 - (4 * beta * ti) ** 2)
            p[i] = num / den
    return t, p


def pulse_order_transform(scheme: ModulationScheme, beta: float, n: int,
                          freqs, dt: float = 1.0 / 64.0,
                          span: float = 24.0) -> np.ndarray:
    """Fourier transform of p(t)^n at the given frequencies (units of the
    symbol rate), normalized so the order-2 value at zero frequency is one
    (unit signal power)."""
    t, p = _prototype_pulse(scheme, beta, dt, span)
    g2_0 = float(np.sum(p ** 2) * dt)
    p = p / np.sqrt(g2_0)
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    basis = np.exp(-2j * np.pi * np.outer(freqs, t))
    return basis @ (p ** n) * dt


# ---------------------------------------------------------------------------
# templates


@dataclass
class CcTemplate:
    scheme: ModulationScheme
    beta: float
    values: np.ndarray  # (11, 15) complex, warped, unit power
    pattern: CfPattern = CfPattern.UNKNOWN


@dataclass
class TemplateLibrary:
    templates: list[CcTemplate] = field(default_factory=list)
    beta_grid: tuple = BETA_GRID
    unknown_threshold: float = DEFAULT_UNKNOWN_THRESHOLD
    order_weights: dict = field(
        default_factory=lambda: dict(DEFAULT_ORDER_WEIGHTS))
    missing_evidence_penalty: float = MISSING_EVIDENCE_PENALTY

    def for_scheme(self, scheme: ModulationScheme) -> list[CcTemplate]:
        return [t for t in self.templates if t.scheme is scheme]


def _template_grid(scheme: ModulationScheme, beta: float) -> np.ndarray:
    """Warped template values on the scheme's own pattern grid."""
    pattern = SCHEME_PATTERN[scheme]
    rot = _ROTATION.get(scheme, 0.0)
    alpha_bet = base_alphabet(scheme)
    est = KeyParamEstimates(rate=0.25, cfo=0.0, pattern=pattern,
                            rate_source="template", cfo_source="template")
    grid = build_cf_grid(est)
    values = np.zeros((2 * HARMONIC_CAP + 1, len(NM_PAIRS)), dtype=complex)
    for col, (n, m) in enumerate(NM_PAIRS):
        slots = grid.pairs.get((n, m), [])
        if not slots:
            continue
        d = n - 2 * m
        ca = symbol_cumulant(alpha_bet, (n, m))
        svals = np.array([s for s, _ in slots])
        # the per-symbol rotation moves this row's comb to slots congruent
        # to d*rot; grid slots off that comb hold an exact zero
        on = np.isclose((svals - d * rot) % 1.0, 0.0, atol=1e-9) \
            | np.isclose((svals - d * rot) % 1.0, 1.0, atol=1e-9)
        if not np.any(np.abs(ca) > 1e-12) or not np.any(on):
            continue
        gvals = pulse_order_transform(scheme, beta, n, svals[on])
        raw = ca * gvals
        warped = np.abs(raw) ** (2.0 / n) * np.exp(1j * np.angle(raw))
        rows = (np.floor(svals[on]) + HARMONIC_CAP).astype(int)
        values[rows, col] = warped
    return values


def build_templates(beta_grid=BETA_GRID,
                    unknown_threshold: float = DEFAULT_UNKNOWN_THRESHOLD,
                    cache_path: str | None = None) -> TemplateLibrary:
    """Analytic template library over all schemes and roll-off values.

    A cache file (np.savez) is written/read when cache_path is given; MSK
    has no roll-off parameter and gets a single grid."""
    if cache_path and os.path.exists(cache_path):
        return load_templates(cache_path, unknown_threshold)
    lib = TemplateLibrary(beta_grid=tuple(beta_grid),
                          unknown_threshold=unknown_threshold)
    for scheme in ModulationScheme:
        betas = (0.0,) if scheme is ModulationScheme.MSK else lib.beta_grid
        for beta in betas:
            lib.templates.append(CcTemplate(
                scheme=scheme, beta=beta,
                values=_template_grid(scheme, beta),
                pattern=SCHEME_PATTERN[scheme]))
    if cache_path:
        save_templates(lib, cache_path)
    return lib


def save_templates(lib: TemplateLibrary, path: str) -> None:
    np.savez(path,
             schemes=np.array([t.scheme.value for t in lib.templates]),
             betas=np.array([t.beta for t in lib.templates]),
             values=np.stack([t.values for t in lib.templates]),
             beta_grid=np.array(lib.beta_grid))


def load_templates(path: str,
                   unknown_threshold: float = DEFAULT_UNKNOWN_THRESHOLD
                   ) -> TemplateLibrary:
    data = np.load(path, allow_pickle=False)
    lib = TemplateLibrary(beta_grid=tuple(data["beta_grid"].tolist()),
                          unknown_threshold=unknown_threshold)
    for tag, beta, vals in zip(data["schemes"], data["betas"],
                               data["values"]):
        scheme = ModulationScheme(str(tag))
        lib.templates.append(CcTemplate(scheme=scheme, beta=float(beta),
                                        values=vals,
                                        pattern=SCHEME_PATTERN[scheme]))
    return lib


# ---------------------------------------------------------------------------
# classification


@dataclass
class Classification:
    label: ModulationScheme | None  # None encodes Unknown
    distance: float
    runner_up: tuple = (None, float("inf"))

    @property
    def label_name(self) -> str:
        return self.label.value if self.label is not None else "unknown"


def _distance(features: CcFeatureMatrix, template: CcTemplate,
              order_weights=None) -> float:
    """Weighted RMS magnitude distance over the populated feature slots.

    The carrier phase, symbol-clock phase, and record delay rotate every
    estimated slot by an unknown per-slot phase, so only magnitudes are
    compared; the weight normalization keeps the threshold meaningful
    across patterns with different grid sizes."""
    mask = features.mask
    if not np.any(mask):
        raise ValueError("feature matrix has no populated slots")
    if order_weights is None:
        order_weights = DEFAULT_ORDER_WEIGHTS
    wcol = np.array([order_weights[n] for n, _ in NM_PAIRS])
    wgrid = np.broadcast_to(wcol, mask.shape)[mask]
    diff = (np.abs(features.values[mask])
            - np.abs(template.values[mask])) * wgrid
    return float(np.sqrt(np.sum(diff ** 2) / np.sum(wgrid ** 2)))


def classify(features: CcFeatureMatrix,
             lib: TemplateLibrary) -> Classification:
    """Minimum-distance decision with pattern gating: only schemes whose
    cycle-frequency pattern matches the features' pattern compete, except
    an Unknown pattern admits every scheme; a distance above the library
    threshold yields Unknown."""
    if not features.warped:
        raise ValueError("features must be warped and power-scaled")
    scored: dict[ModulationScheme, float] = {}
    for t in lib.templates:
        if features.pattern is not CfPattern.UNKNOWN \
                and t.pattern is not features.pattern:
            continue
        d = _distance(features, t, lib.order_weights)
        if features.pattern is CfPattern.UNKNOWN \
                and t.pattern is not CfPattern.PSK8_LIKE:
            d += lib.missing_evidence_penalty
        if t.scheme not in scored or d < scored[t.scheme]:
            scored[t.scheme] = d
    if not scored:
        return Classification(label=None, distance=float("inf"))
    order = sorted(scored.items(), key=lambda kv: kv[1])
    best, second = order[0], (order[1] if len(order) > 1
                              else (None, float("inf")))
    if best[1] > lib.unknown_threshold:
        return Classification(label=None, distance=best[1],
                              runner_up=(second[0], second[1]))
    return Classification(label=best[0], distance=best[1],
                          runner_up=(second[0], second[1]))
