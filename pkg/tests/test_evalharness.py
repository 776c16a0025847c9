import json
import random

import numpy as np
import pytest

from cspkit import cli
from cspkit import evalharness as ev
from cspkit import sigmodel as sm

LABELS = [s.value for s in ev.SCHEME_ORDER]


def result(truth, pred, snr=8.0, **kw):
    return ev.RecordResult(index=0, truth_scheme=truth, truth_snr_db=snr,
                           predicted=pred, **kw)


class TestEvaluate:
    def test_perfect_predictions(self):
        res = [result(l, l) for l in LABELS for _ in range(3)]
        rep = ev.evaluate(res)
        assert rep.overall_pcc == 1.0
        assert all(v == 1.0 for v in rep.per_class_pcc.values())

    def test_all_unknown(self):
        res = [result(l, "unknown") for l in LABELS]
        rep = ev.evaluate(res)
        assert rep.overall_pcc == 0.0
        unk_col = rep.confusion.counts[:, -1]
        assert np.all(unk_col == 1)

    def test_random_guessing_near_chance(self):
        rng = random.Random(4)
        res = [result(rng.choice(LABELS), rng.choice(LABELS))
               for _ in range(10_000)]
        rep = ev.evaluate(res)
        assert abs(rep.overall_pcc - 0.125) < 0.02

    def test_row_sums(self):
        rng = random.Random(5)
        res = [result(l, rng.choice(LABELS + ["unknown"]))
               for l in LABELS for _ in range(7)]
        rep = ev.evaluate(res)
        assert np.all(rep.confusion.counts.sum(axis=1) == 7)
        assert np.all(rep.confusion.counts >= 0)

    def test_permutation_invariance(self):
        rng = random.Random(6)
        res = [result(rng.choice(LABELS), rng.choice(LABELS), snr=rng.uniform(0, 12))
               for _ in range(300)]
        a = ev.evaluate(res)
        shuffled = list(res)
        rng.shuffle(shuffled)
        b = ev.evaluate(shuffled)
        assert a.overall_pcc == b.overall_pcc
        assert np.array_equal(a.confusion.counts, b.confusion.counts)
        assert a.pcc_vs_snr == b.pcc_vs_snr

    def test_small_snr_bins_suppressed(self):
        res = [result("bpsk", "bpsk", snr=5.0) for _ in range(30)]
        res += [result("bpsk", "bpsk", snr=9.0) for _ in range(5)]
        rep = ev.evaluate(res)
        bins = [b for b, _, _ in rep.pcc_vs_snr]
        assert 5.0 in bins
        assert 9.0 not in bins


class TestMaeReport:
    def test_exact_sentinel(self):
        res = [result("bpsk", "bpsk", est_rate=0.125, truth_rate=0.125,
                      est_cfo=0.001, truth_cfo=0.001)]
        mae = ev.mae_report(res)
        assert mae["symbol_rate_log10_mae"] == ev.EXACT_SENTINEL
        assert mae["cfo_log10_mae"] == ev.EXACT_SENTINEL

    def test_constant_error(self):
        res = [result("bpsk", "bpsk", est_rate=0.126, truth_rate=0.125)
               for _ in range(4)]
        mae = ev.mae_report(res)
        assert abs(mae["symbol_rate_log10_mae"] - (-3.0)) < 1e-9

    def test_outlier_trimming(self):
        res = [result("bpsk", "bpsk", est_rate=0.125 + 1e-4, truth_rate=0.125)
               for _ in range(9)]
        res.append(result("bpsk", "bpsk", est_rate=0.5, truth_rate=0.125))
        full = ev.mae_report(res)
        trimmed = ev.mae_report(res, trim_outliers=1)
        assert trimmed["outliers_removed"] == 1
        assert trimmed["symbol_rate_log10_mae"] < full["symbol_rate_log10_mae"]
        assert abs(trimmed["symbol_rate_log10_mae"] - (-4.0)) < 1e-9


def test_jsonl_roundtrip(tmp_path):
    res = [result("qpsk", "qpsk", est_rate=0.1, truth_rate=0.1)]
    path = tmp_path / "r.jsonl"
    ev.results_to_jsonl(res, path)
    back = ev.results_from_jsonl(path)
    assert back == res


def test_process_record_end_to_end():
    spec = sm.DatasetSpec(profile="cspb2018-like", count_per_class=1,
                          num_samples=32768, master_seed=7)
    params = sm.sample_params(spec, 0)  # a BPSK record
    rec = sm.synthesize(params)
    label, info = ev.process_record(rec.samples)
    assert label == "bpsk"
    assert abs(info["rate"] - 1.0 / params.symbol_period) < 1e-3
    assert abs(info["cfo"] - params.cfo) < 1e-3


def test_process_record_noise_gives_unknown(noise_record):
    label, info = ev.process_record(noise_record)
    assert label == "unknown"


class TestCli:
    def test_full_workflow(self, tmp_path):
        ds = tmp_path / "ds"
        rc = cli.main(["generate", "--output", str(ds), "--count-per-class",
                       "1", "--num-samples", "16384", "--seed", "5"])
        assert rc == 0
        manifest = [json.loads(l) for l in
                    (ds / "manifest.jsonl").read_text().splitlines()]
        assert len(manifest) == 8

        rec0 = ds / "rec_00000.npy"
        assert cli.main(["detect", "--input", str(rec0),
                         "--output", str(tmp_path / "boi.json")]) == 0
        boi = json.loads((tmp_path / "boi.json").read_text())
        assert "inband_snr_db" in boi

        assert cli.main(["estimate", "--input", str(rec0), "--cc",
                         "--output", str(tmp_path / "cc")]) == 0
        vals = np.fromfile(tmp_path / "cc.bin", dtype="<c8")
        assert vals.size == 165
        meta = json.loads((tmp_path / "cc.json").read_text())
        assert meta["shape"] == [11, 15]

        assert cli.main(["classify", "--input", str(ds)]) == 0
        preds = ev.results_from_jsonl(ds / "predictions.jsonl")
        assert len(preds) == 8

        assert cli.main(["features", "--input", str(rec0), "--variant",
                         "utp8", "--output", str(tmp_path / "f.bin")]) == 0
        assert (tmp_path / "f.bin").stat().st_size > 0

        assert cli.main(["evaluate", "--input", str(ds / "predictions.jsonl"),
                         "--output", str(tmp_path / "rep.json"),
                         "--csv-dir", str(tmp_path / "csv")]) == 0
        rep = json.loads((tmp_path / "rep.json").read_text())
        assert 0.0 <= rep["overall_pcc"] <= 1.0
        assert (tmp_path / "csv" / "confusion.csv").exists()

    def test_missing_input_rejected(self):
        assert cli.main(["detect"]) == 2
