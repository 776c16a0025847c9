"""Command-line interface.

Subcommands:

* ``generate`` — synthesize a labeled dataset (one ``.npy`` complex record per
  file plus a JSON-lines manifest).
* ``detect`` — band-of-interest detection for one record.
* ``estimate`` — blind key-parameter estimation; ``--cc`` additionally writes
  the 165 cyclic-cumulant values as little-endian float32 real/imaginary
  pairs, slot-major and (n, m)-minor, next to a JSON metadata file.
* ``classify`` — run the full blind pipeline over a dataset directory;
  ``--confusion`` prints the confusion matrix against manifest truth.
* ``features`` — write a UTP8 or USP10 feature bundle for one record.
* ``evaluate`` — aggregate a predictions file into a report JSON and CSVs.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import blindest as be
from . import classifier as cl
from . import cumulants as cu
from . import evalharness as ev
from . import nnfeatures as nf
from . import sigmodel as sm
from . import spectrum as sp

COMMON_FLAGS = ("input", "output", "seed", "profile", "threads", "config")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", type=Path, help="input record or dataset path")
    p.add_argument("--output", type=Path, help="output file or directory")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument(
        "--profile",
        default="cspb2018-like",
        choices=sorted(sm.PROFILES),
        help="dataset parameter profile",
    )
    p.add_argument("--threads", type=int, default=1, help="worker processes")
    p.add_argument("--config", type=Path, help="JSON config overriding flags")


def _apply_config(args: argparse.Namespace) -> argparse.Namespace:
    if args.config:
        for key, value in json.loads(args.config.read_text()).items():
            if hasattr(args, key):
                setattr(args, key, type(getattr(args, key))(value)
                        if getattr(args, key) is not None else value)
    return args


def _load_record(path: Path) -> np.ndarray:
    return np.asarray(np.load(path), dtype=complex)


def _write_json(obj, path: Path | None) -> None:
    text = json.dumps(obj, indent=2)
    if path is None:
        print(text)
    else:
        path.write_text(text + "\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args) -> int:
    out = args.output or Path("dataset")
    out.mkdir(parents=True, exist_ok=True)
    spec = sm.DatasetSpec(
        profile=args.profile,
        count_per_class=args.count_per_class,
        num_samples=args.num_samples,
        master_seed=args.seed,
    )
    total = spec.count_per_class * len(ev.SCHEME_ORDER)
    with open(out / "manifest.jsonl", "w") as fh:
        for i in range(total):
            params = sm.sample_params(spec, i)
            rec = sm.synthesize(params)
            fname = f"rec_{i:05d}.npy"
            np.save(out / fname, rec.samples.astype(np.complex64))
            fh.write(
                json.dumps(
                    {
                        "index": i,
                        "file": fname,
                        "scheme": params.scheme.value,
                        "cfo": params.cfo,
                        "symbol_period": params.symbol_period,
                        "rolloff": params.rolloff,
                        "inband_snr_db": params.inband_snr,
                        "num_samples": params.num_samples,
                        "seed": params.seed,
                    }
                )
                + "\n"
            )
    print(f"wrote {total} records to {out}")
    return 0


def cmd_detect(args) -> int:
    x = _load_record(args.input)
    boi = sp.detect_boi(sp.estimate_psd(x))
    _write_json(
        {
            "center_freq": boi.center_freq,
            "occupied_bw": boi.occupied_bw,
            "noise_density": boi.noise_density,
            "signal_power": boi.signal_power,
            "inband_snr_db": boi.inband_snr_db,
        },
        args.output,
    )
    return 0


def cmd_estimate(args) -> int:
    x = _load_record(args.input)
    boi = sp.detect_boi(sp.estimate_psd(x))
    rec2, info = sp.center_filter_resample(x, boi)
    est = be.estimate_key_params(rec2.samples)
    ratio = float(info.ratio)
    result = {
        "rate": est.rate * ratio,
        "cfo": info.to_original_freq(est.cfo),
        "pattern": est.pattern.name,
        "inband_snr_db": boi.inband_snr_db,
    }
    if args.cc:
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
        base = args.output or Path(args.input.stem + "_cc")
        # Slot-major, (n, m)-minor: row s (slot index + 5) then column order
        # of NM_PAIRS, each value a little-endian float32 real/imag pair.
        cc.values.astype("<c8").tofile(base.with_suffix(".bin"))
        meta = {
            "format": "little-endian float32 real/imag pairs",
            "layout": "slot-major, (n,m)-minor",
            "shape": list(cc.values.shape),
            "slots": [s - 5 for s in range(cc.values.shape[0])],
            "nm_pairs": [list(p) for p in cu.NM_PAIRS],
            "rate": cc.rate,
            "cfo": cc.cfo,
            "pattern": cc.pattern.name,
            "populated": cc.mask.astype(int).tolist(),
        }
        base.with_suffix(".json").write_text(json.dumps(meta, indent=2) + "\n")
        result["cc_file"] = str(base.with_suffix(".bin"))
        _write_json(result, None)
    else:
        _write_json(result, args.output)
    return 0


def cmd_classify(args) -> int:
    lib = ev.default_templates()
    manifest_path = args.input / "manifest.jsonl"
    results = []
    with open(manifest_path) as fh:
        entries = [json.loads(line) for line in fh if line.strip()]
    for entry in entries:
        x = _load_record(args.input / entry["file"])
        label, info = ev.process_record(x, lib)
        results.append(
            ev.RecordResult(
                index=entry["index"],
                truth_scheme=entry["scheme"],
                truth_snr_db=entry.get("inband_snr_db"),
                predicted=label,
                distance=info.get("distance"),
                est_rate=info.get("rate"),
                est_cfo=info.get("cfo"),
                est_snr_db=info.get("snr_db"),
                truth_rate=1.0 / entry["symbol_period"],
                truth_cfo=entry["cfo"],
            )
        )
    out = args.output or (args.input / "predictions.jsonl")
    ev.results_to_jsonl(results, out)
    print(f"wrote {len(results)} predictions to {out}")
    if args.confusion:
        print(ev.evaluate(results).confusion.as_text())
    return 0


def cmd_features(args) -> int:
    x = _load_record(args.input)
    boi = sp.detect_boi(sp.estimate_psd(x))
    centered, _ = sp.center_filter_resample(x, boi, min_samples=len(x))
    if args.variant == "utp8":
        bundle = nf.utp_bundle(centered.samples, boi)
    else:
        bundle = nf.usp_bundle(centered.samples, boi)
    out = args.output or Path(args.input.stem + f"_{args.variant}.bin")
    nf.write_bundle(bundle, out)
    print(f"wrote {bundle.variant} bundle to {out}")
    return 0


def cmd_evaluate(args) -> int:
    results = ev.results_from_jsonl(args.input)
    report = ev.evaluate(results)
    mae = ev.mae_report(results, trim_outliers=args.trim_outliers)
    payload = report.as_dict()
    payload["mae"] = mae
    out = args.output or Path("report.json")
    _write_json(payload, out)
    if args.csv_dir:
        args.csv_dir.mkdir(parents=True, exist_ok=True)
        with open(args.csv_dir / "confusion.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["truth", *report.confusion.columns])
            for lab, row in zip(report.confusion.labels, report.confusion.counts):
                w.writerow([lab, *row.tolist()])
        with open(args.csv_dir / "pcc_vs_snr.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["snr_db", "pcc", "count"])
            w.writerows(report.pcc_vs_snr)
        with open(args.csv_dir / "mae_table.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["parameter", "value"])
            for k, v in mae.items():
                if k != "cfo_log10_mae_by_scheme":
                    w.writerow([k, v])
            for s, v in mae["cfo_log10_mae_by_scheme"].items():
                w.writerow([f"cfo_log10_mae[{s}]", v])
    print(f"overall P_CC = {report.overall_pcc:.3f} ({out})")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cspkit", description="cyclostationary signal processing toolkit"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="synthesize a labeled dataset")
    _add_common(p)
    p.add_argument("--count-per-class", type=int, default=10)
    p.add_argument("--num-samples", type=int, default=32768)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("detect", help="band-of-interest detection")
    _add_common(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("estimate", help="blind key-parameter estimation")
    _add_common(p)
    p.add_argument("--cc", action="store_true",
                   help="also write the cyclic-cumulant feature matrix")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("classify", help="classify a dataset directory")
    _add_common(p)
    p.add_argument("--confusion", action="store_true",
                   help="print the confusion matrix against manifest truth")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("features", help="write an NN feature bundle")
    _add_common(p)
    p.add_argument("--variant", choices=["utp8", "usp10"], default="utp8")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("evaluate", help="aggregate predictions into a report")
    _add_common(p)
    p.add_argument("--trim-outliers", type=int, default=0)
    p.add_argument("--csv-dir", type=Path,
                   help="also write confusion/pcc_vs_snr/mae CSVs here")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    args = _apply_config(build_parser().parse_args(argv))
    for name in ("detect", "estimate", "classify", "features", "evaluate"):
        if args.command == name and args.input is None:
            print(f"{name}: --input is required", file=sys.stderr)
            return 2
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
