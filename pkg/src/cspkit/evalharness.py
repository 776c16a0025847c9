"""Dataset manifests, end-to-end pipeline orchestration, and metrics.

`process_record` runs the canonical blind chain on one I/Q record: band-of-
interest detection, centering/filtering/resampling, key-parameter estimation,
cyclic-cumulant feature extraction on the full-length centered record, and
minimum-distance classification.  `run_dataset` maps it over a generated
corpus.  `evaluate` and `mae_report` aggregate predictions and estimates into
a confusion matrix, correct-classification probability (P_CC) overall /
per class / versus SNR, and log10 mean-absolute-error tables.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import blindest as be
from . import classifier as cl
from . import cumulants as cu
from . import sigmodel as sm
from . import spectrum as sp

__all__ = [
    "RecordResult",
    "ConfusionMatrix",
    "EvalReport",
    "process_record",
    "run_dataset",
    "evaluate",
    "mae_report",
    "SCHEME_ORDER",
    "UNKNOWN_LABEL",
    "SNR_BIN_MIN_COUNT",
]

SCHEME_ORDER: Tuple[sm.ModulationScheme, ...] = tuple(sm.ModulationScheme)
UNKNOWN_LABEL = "unknown"
# SNR bins holding fewer records than this are suppressed from curves: the
# estimate of a proportion from a handful of records is not meaningful.
SNR_BIN_MIN_COUNT = 20


@dataclass
class RecordResult:
    """Blind-pipeline outputs for one record."""

    index: int
    truth_scheme: str
    truth_snr_db: Optional[float]
    predicted: str  # scheme value or "unknown"
    distance: Optional[float] = None
    est_rate: Optional[float] = None
    est_cfo: Optional[float] = None
    est_snr_db: Optional[float] = None
    truth_rate: Optional[float] = None
    truth_cfo: Optional[float] = None
    failure: Optional[str] = None


def process_record(
    samples: np.ndarray, lib: Optional[cl.TemplateLibrary] = None
) -> Tuple[str, Dict[str, float]]:
    """Run the full blind chain on one record.

    Returns the predicted label ("unknown" when nothing usable is found) and
    a dict of blind estimates (rate, cfo, snr_db, distance) for whichever
    stages succeeded.
    """
    if lib is None:
        lib = default_templates()
    x = np.asarray(samples)
    info_out: Dict[str, float] = {}
    try:
        boi = sp.detect_boi(sp.estimate_psd(x))
        info_out["snr_db"] = boi.inband_snr_db
        rec2, info = sp.center_filter_resample(x, boi)
        est = be.estimate_key_params(rec2.samples)
        ratio = float(info.ratio)
        info_out["rate"] = est.rate * ratio
        info_out["cfo"] = info.to_original_freq(est.cfo)
        # Features come from the full-length centered record: more samples
        # mean lower feature variance, and the grid maps back through the
        # resampling ratio.
        full, finfo = sp.center_filter_resample(x, boi, min_samples=len(x))
        est_full = be.KeyParamEstimates(
            rate=est.rate * ratio,
            cfo=est.cfo * ratio,
            pattern=est.pattern,
            rate_source=est.rate_source,
            cfo_source=est.cfo_source,
        )
        grid = be.build_cf_grid(est_full)
        noise_power = boi.noise_density * float(finfo.mask_enbw)
        cc = cu.cc_estimate(full.samples, grid, noise_power=noise_power)
        i21 = cu.NM_PAIRS.index((2, 1))
        power = abs(cc.values[5, i21])
        if power <= 0:
            power = boi.signal_power
        feats = cu.warp_and_scale(cc, power)
        res = cl.classify(feats, lib)
        info_out["distance"] = res.distance
        label = res.label_name if res.label is not None else UNKNOWN_LABEL
        return label, info_out
    except ValueError:
        return UNKNOWN_LABEL, info_out


_WORKER_LIB: Optional[cl.TemplateLibrary] = None
_DEFAULT_LIB: Optional[cl.TemplateLibrary] = None


def default_templates() -> cl.TemplateLibrary:
    """Template library used by the canonical pipeline (β step 0.025; the
    finer grid keeps the nearest-template pulse-shape error below the QAM
    inter-class feature gaps)."""
    global _DEFAULT_LIB
    if _DEFAULT_LIB is None:
        _DEFAULT_LIB = cl.build_templates(
            beta_grid=[round(0.025 * b, 3) for b in range(4, 41)]
        )
    return _DEFAULT_LIB


def _run_one(args) -> RecordResult:
    index, spec_dict = args
    global _WORKER_LIB
    if _WORKER_LIB is None:
        _WORKER_LIB = default_templates()
    spec = sm.DatasetSpec(**spec_dict)
    params = sm.sample_params(spec, index)
    rec = sm.synthesize(params)
    label, info = process_record(rec.samples, _WORKER_LIB)
    return RecordResult(
        index=index,
        truth_scheme=params.scheme.value,
        truth_snr_db=params.inband_snr,
        predicted=label,
        distance=info.get("distance"),
        est_rate=info.get("rate"),
        est_cfo=info.get("cfo"),
        est_snr_db=info.get("snr_db"),
        truth_rate=1.0 / params.symbol_period,
        truth_cfo=params.cfo,
    )


def run_dataset(spec: sm.DatasetSpec, threads: int = 1) -> List[RecordResult]:
    """Generate and process every record of a dataset manifest."""
    total = spec.count_per_class * len(SCHEME_ORDER)
    spec_dict = {
        "profile": spec.profile,
        "count_per_class": spec.count_per_class,
        "num_samples": spec.num_samples,
        "master_seed": spec.master_seed,
    }
    jobs = [(i, spec_dict) for i in range(total)]
    if threads <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_run_one, jobs, chunksize=4))


# ---------------------------------------------------------------------------
# metrics


@dataclass
class ConfusionMatrix:
    """Truth schemes along rows; predicted schemes plus an Unknown column."""

    labels: Tuple[str, ...]
    counts: np.ndarray  # (len(labels), len(labels)+1) ints

    @property
    def columns(self) -> Tuple[str, ...]:
        return self.labels + (UNKNOWN_LABEL,)

    def row(self, label: str) -> np.ndarray:
        return self.counts[self.labels.index(label)]

    def as_text(self) -> str:
        width = max(9, max(len(c) for c in self.columns) + 1)
        head = " " * width + "".join(f"{c:>{width}}" for c in self.columns)
        lines = [head]
        for lab, row in zip(self.labels, self.counts):
            lines.append(f"{lab:<{width}}" + "".join(f"{v:>{width}d}" for v in row))
        return "\n".join(lines)


@dataclass
class EvalReport:
    confusion: ConfusionMatrix
    overall_pcc: float
    per_class_pcc: Dict[str, float]
    pcc_vs_snr: List[Tuple[float, float, int]]  # (bin center dB, pcc, count)

    def as_dict(self) -> Dict:
        return {
            "overall_pcc": self.overall_pcc,
            "per_class_pcc": self.per_class_pcc,
            "pcc_vs_snr": [
                {"snr_db": s, "pcc": p, "count": c} for s, p, c in self.pcc_vs_snr
            ],
            "confusion": {
                "labels": list(self.confusion.labels),
                "columns": list(self.confusion.columns),
                "counts": self.confusion.counts.tolist(),
            },
        }


def evaluate(results: Sequence[RecordResult]) -> EvalReport:
    """Aggregate predictions into a confusion matrix, overall and per-class
    P_CC (Unknown counts as error), and a P_CC-versus-SNR curve in 1 dB bins
    with small bins suppressed."""
    labels = tuple(s.value for s in SCHEME_ORDER)
    counts = np.zeros((len(labels), len(labels) + 1), dtype=int)
    for r in results:
        i = labels.index(r.truth_scheme)
        j = labels.index(r.predicted) if r.predicted in labels else len(labels)
        counts[i, j] += 1
    total = int(counts.sum())
    correct = int(np.trace(counts[:, : len(labels)]))
    per_class = {}
    for i, lab in enumerate(labels):
        row_total = int(counts[i].sum())
        per_class[lab] = counts[i, i] / row_total if row_total else float("nan")

    bins: Dict[int, List[bool]] = {}
    for r in results:
        if r.truth_snr_db is None:
            continue
        b = int(math.floor(r.truth_snr_db + 0.5))
        bins.setdefault(b, []).append(r.predicted == r.truth_scheme)
    curve = [
        (float(b), float(np.mean(oks)), len(oks))
        for b, oks in sorted(bins.items())
        if len(oks) >= SNR_BIN_MIN_COUNT
    ]
    return EvalReport(
        confusion=ConfusionMatrix(labels=labels, counts=counts),
        overall_pcc=correct / total if total else float("nan"),
        per_class_pcc=per_class,
        pcc_vs_snr=curve,
    )


EXACT_SENTINEL = "exact"


def _log10_mae(errors: Sequence[float]) -> object:
    errs = [abs(e) for e in errors if e is not None and math.isfinite(e)]
    if not errs:
        return None
    mae = float(np.mean(errs))
    return EXACT_SENTINEL if mae == 0.0 else math.log10(mae)


def mae_report(
    results: Sequence[RecordResult], trim_outliers: int = 0
) -> Dict[str, object]:
    """log10 mean absolute error for symbol rate and CFO (with a per-scheme
    CFO breakdown) plus the absolute in-band SNR error in dB.

    ``trim_outliers`` removes that many largest-|error| records per parameter
    before averaging; the count removed is recorded in the table.
    """

    def collect(key_est, key_truth):
        out = []
        for r in results:
            e, t = getattr(r, key_est), getattr(r, key_truth)
            if e is not None and t is not None:
                out.append((r.truth_scheme, abs(e - t)))
        return out

    def trimmed(pairs):
        if trim_outliers and len(pairs) > trim_outliers:
            pairs = sorted(pairs, key=lambda p: p[1])[: len(pairs) - trim_outliers]
        return pairs

    rate_pairs = trimmed(collect("est_rate", "truth_rate"))
    cfo_pairs = trimmed(collect("est_cfo", "truth_cfo"))
    snr_errs = [
        abs(r.est_snr_db - r.truth_snr_db)
        for r in results
        if r.est_snr_db is not None and r.truth_snr_db is not None
    ]
    if trim_outliers and len(snr_errs) > trim_outliers:
        snr_errs = sorted(snr_errs)[: len(snr_errs) - trim_outliers]

    cfo_by_scheme = {}
    for lab in (s.value for s in SCHEME_ORDER):
        vals = [e for s, e in cfo_pairs if s == lab]
        cfo_by_scheme[lab] = _log10_mae(vals)
    return {
        "symbol_rate_log10_mae": _log10_mae([e for _, e in rate_pairs]),
        "cfo_log10_mae": _log10_mae([e for _, e in cfo_pairs]),
        "cfo_log10_mae_by_scheme": cfo_by_scheme,
        "snr_mae_db": float(np.mean(snr_errs)) if snr_errs else None,
        "outliers_removed": int(trim_outliers),
    }


# ---------------------------------------------------------------------------
# serialization helpers for the CLI


def results_to_jsonl(results: Sequence[RecordResult], path) -> None:
    with open(path, "w") as fh:
        for r in results:
            fh.write(json.dumps(r.__dict__) + "\n")


def results_from_jsonl(path) -> List[RecordResult]:
    out = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                out.append(RecordResult(**json.loads(line)))
    return out
