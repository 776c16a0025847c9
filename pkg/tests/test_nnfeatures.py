import json

import numpy as np
import pytest

from cspkit import nnfeatures as nf
from cspkit import spectrum as sp
from conftest import make_record


def _pair(x):
    return np.real(x).astype(float), np.imag(x).astype(float)


class TestLayers:
    def test_square_layer_units(self):
        i, q = nf.square_layer(np.array([1.0]), np.array([0.0]))
        assert (i[0], q[0]) == (1.0, 0.0)
        i, q = nf.square_layer(np.array([0.0]), np.array([1.0]))
        assert (i[0], q[0]) == (-1.0, 0.0)

    def test_pow3_layer_units(self):
        i, q = nf.pow3_layer(np.array([0.0]), np.array([1.0]))
        assert (i[0], q[0]) == (0.0, -1.0)
        i, q = nf.pow3_layer(np.array([1.0]), np.array([0.0]))
        assert (i[0], q[0]) == (1.0, 0.0)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            nf.square_layer(np.zeros(4), np.zeros(5))

    @pytest.mark.parametrize("order", [2, 4, 6, 8])
    def test_chains_are_exact_complex_powers(self, order):
        rng = np.random.default_rng(31)
        z = rng.standard_normal(1024) + 1j * rng.standard_normal(1024)
        i, q = nf._order_chain(*_pair(z), order)
        ref = z ** order
        err = np.max(np.abs((i + 1j * q) - ref))
        assert err < 1e-10 * max(1.0, float(np.max(np.abs(ref))))

    def test_fft_mag_center_dc(self):
        mag = nf.fft_mag_layer(np.ones(256), np.zeros(256))
        assert np.argmax(mag) == 128
        assert np.all(mag >= 0)

    def test_fft_mag_tone_bin(self):
        n = np.arange(1024)
        z = np.exp(2j * np.pi * 0.25 * n)
        mag = nf.fft_mag_layer(*_pair(z))
        assert np.argmax(mag) == 512 + 256

    def test_fft_parseval(self):
        rng = np.random.default_rng(32)
        z = rng.standard_normal(512) + 1j * rng.standard_normal(512)
        mag = nf.fft_mag_layer(*_pair(z))
        assert abs(np.sum(mag ** 2) / 512 - np.sum(np.abs(z) ** 2)) \
            < 1e-9 * np.sum(np.abs(z) ** 2)

    def test_fft_requires_power_of_two(self):
        with pytest.raises(ValueError):
            nf.fft_mag_layer(np.zeros(100), np.zeros(100))

    def test_warp_time_order4(self):
        i = np.array([16.0, 0.0])
        q = np.array([0.0, 1.0])
        wi, wq = nf.warp_time_layer(i, q, 4)
        assert abs(wi[0] - 4.0) < 1e-12  # divided by 16**0.5

    def test_warp_time_order6(self):
        wi, _ = nf.warp_time_layer(np.array([8.0]), np.array([0.0]), 6)
        assert abs(wi[0] - 2.0) < 1e-12  # divided by 8**(2/3)

    def test_warp_order2_uses_order4_exponent(self):
        i, q = np.array([9.0, 1.0]), np.array([0.0, 0.0])
        w2 = nf.warp_time_layer(i, q, 2)
        w4 = nf.warp_time_layer(i, q, 4)
        assert np.allclose(w2[0], w4[0])

    def test_warp_freq(self):
        out = nf.warp_freq_layer(np.array([16.0, 4.0]), 4)
        assert abs(out[0] - 4.0) < 1e-12

    def test_warp_zero_input_rejected(self):
        with pytest.raises(ValueError):
            nf.warp_time_layer(np.zeros(8), np.zeros(8), 4)

    def test_warp_output_max_magnitude(self):
        rng = np.random.default_rng(33)
        z = 3.0 * (rng.standard_normal(256) + 1j * rng.standard_normal(256))
        wi, wq = nf.warp_time_layer(*_pair(z), 6)
        mx = float(np.max(np.abs(z)))
        assert abs(np.max(np.hypot(wi, wq)) - mx ** (1 - 2 / 3)) < 1e-9


@pytest.fixture(scope="module")
def centered_record():
    rec = make_record("bpsk", T0=8.0, f0=0.002, snr=10.0, seed=130)
    boi = sp.detect_boi(sp.estimate_psd(rec.samples))
    cen, _ = sp.center_filter_resample(rec.samples, boi,
                                       min_samples=len(rec.samples))
    return cen.samples, boi


class TestBundles:
    def test_utp_bundle_shape(self, centered_record):
        x, boi = centered_record
        b = nf.utp_bundle(x, boi)
        assert b.variant == "UTP8" and len(b.branches) == 8
        orders = sorted({br.order for br in b.branches})
        assert orders == [2, 4, 6, 8]

    def test_usp_bundle_shape(self, centered_record):
        x, boi = centered_record
        b = nf.usp_bundle(x, boi)
        assert b.variant == "USP10" and len(b.branches) == 10
        assert [br.branch_id for br in b.branches[:5]] == [
            "utp-t2", "utp-f2", "utp-t4", "utp-f4", "utp-t6"]
        assert [br.branch_id for br in b.branches[5:]] == [
            "usp-t2", "usp-f2", "usp-t4", "usp-f4", "usp-t6"]

    def test_time_branches_are_exact_powers(self, centered_record):
        x, boi = centered_record
        b = nf.utp_bundle(x, boi)
        z = x / np.sqrt(np.mean(np.abs(x) ** 2))
        for order in (2, 4, 6, 8):
            d = b.branch(f"utp-t{order}").data
            ref = z ** order
            assert np.max(np.abs((d[:, 0] + 1j * d[:, 1]) - ref)) \
                < 1e-9 * max(1.0, float(np.max(np.abs(ref))))

    def test_bpsk_conjugate_comb_in_order2_spectrum(self):
        x = make_record("bpsk", T0=8.0, f0=0.01, snr=None, seed=131).samples
        b = nf.utp_bundle(x)
        mag = b.branch("utp-f2").data
        n = len(mag)
        # conjugate order-2 line at 2*f0
        k = int(round(0.02 * n)) + n // 2
        window = mag[k - 2:k + 3]
        assert np.max(window) > 10.0 * np.median(mag)

    def test_qpsk_quartic_line_but_no_order2_line(self):
        x = make_record("qpsk", T0=8.0, f0=0.01, snr=None, seed=132).samples
        b = nf.utp_bundle(x)
        n = len(x)
        m2 = b.branch("utp-f2").data
        m4 = b.branch("utp-f4").data
        k2 = int(round(0.02 * n)) + n // 2
        k4 = int(round(0.04 * n)) + n // 2
        # lines stand out against the local continuous spectrum, so compare
        # each candidate bin with the median of its surrounding band
        win4 = np.median(m4[k4 - 500:k4 + 500])
        win2 = np.median(m2[k2 - 500:k2 + 500])
        assert np.max(m4[k4 - 2:k4 + 3]) > 10.0 * win4
        assert np.max(m2[k2 - 2:k2 + 3]) < 10.0 * win2

    def test_determinism(self, centered_record):
        x, boi = centered_record
        a = nf.usp_bundle(x, boi)
        b = nf.usp_bundle(x, boi)
        for ba, bb in zip(a.branches, b.branches):
            assert np.array_equal(ba.data, bb.data)

    def test_utp_amplitude_invariance(self, centered_record):
        x, boi = centered_record
        a = nf.utp_bundle(x, boi)
        b = nf.utp_bundle(2.0 * x, boi)
        for ba, bb in zip(a.branches, b.branches):
            assert np.allclose(ba.data, bb.data, atol=1e-9)

    def test_usp_separates_qam_power_structure(self):
        # unit-total-power normalization destroys the QAM power-structure
        # distinction; unit-signal-power keeps it
        mags = {}
        for scheme in ("16qam", "64qam"):
            x = make_record(scheme, T0=12.0, beta=1.0, snr=None,
                            seed=133).samples
            boi_like = sp.detect_boi(sp.estimate_psd(
                x + 1e-3 * (np.random.default_rng(0).standard_normal(len(x))
                            + 1j * np.random.default_rng(1).standard_normal(len(x)))))
            b = nf.usp_bundle(x, boi_like)
            d = b.branch("usp-t4").data
            mags[scheme] = float(np.mean(np.hypot(d[:, 0], d[:, 1])))
        rel = abs(mags["16qam"] - mags["64qam"]) / mags["64qam"]
        assert rel > 0.05

    def test_all_branches_finite_at_low_snr(self):
        x = make_record("64qam", T0=8.0, snr=0.0, seed=134).samples
        b = nf.utp_bundle(x)
        for br in b.branches:
            assert np.all(np.isfinite(br.data))


class TestDescriptor:
    def test_branch_counts(self):
        assert len(nf.export_descriptor("UTP8").branches) == 8
        assert len(nf.export_descriptor("USP10").branches) == 10

    def test_conv_stack_tables(self):
        d = nf.export_descriptor("UTP8")
        for br in d.branches:
            layers = br["layers"]
            convs = [l for l in layers if l["layer"].startswith("conv")]
            assert [c["filters"] for c in convs] == [16, 24, 32, 48, 64, 96]
            assert all(c["filter_size"][0] == 23 for c in convs)
            acts = [l["activations"][0] for l in layers
                    if "activations" in l]
            assert acts == [32768, 16384, 8192, 4096, 2048, 1024, 1]
            assert layers[-1] == {"layer": "fully_connected", "outputs": 8}

    def test_channel_chaining(self):
        d = nf.export_descriptor("UTP8")
        for br in d.branches:
            convs = [l for l in br["layers"] if l["layer"].startswith("conv")]
            chans = [c["filter_size"][1] for c in convs]
            expect_first = 2 if br["domain"] == "time" else 1
            assert chans == [expect_first, 16, 24, 32, 48, 64]

    def test_unknown_variant_rejected(self):
        with pytest.raises(ValueError):
            nf.export_descriptor("UTP9")


def test_write_bundle_roundtrip(tmp_path, centered_record):
    x, boi = centered_record
    b = nf.utp_bundle(x, boi)
    path = tmp_path / "bundle.bin"
    nf.write_bundle(b, path)
    raw = path.read_bytes()
    hlen = int.from_bytes(raw[:8], "little")
    header = json.loads(raw[8:8 + hlen])
    assert header["variant"] == "UTP8"
    assert len(header["branches"]) == 8
    blob = np.frombuffer(raw[8 + hlen:], dtype="<f4")
    expect = sum(br["length"] * br["values_per_sample"]
                 for br in header["branches"])
    assert blob.size == expect
    first = b.branches[0].data.astype("<f4").reshape(-1)
    assert np.array_equal(blob[:first.size], first)
