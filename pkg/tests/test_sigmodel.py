import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cspkit import oracles as orc
from cspkit import sigmodel as sm
from conftest import make_record


def test_eight_schemes():
    assert len(sm.ModulationScheme) == 8


def test_alphabets_unit_power():
    for scheme in sm.ModulationScheme:
        if scheme is sm.ModulationScheme.MSK:
            continue
        a = sm.alphabet(scheme)
        assert np.isclose(np.mean(np.abs(a) ** 2), 1.0, atol=1e-12)
        assert np.isclose(np.mean(a), 0.0, atol=1e-12)


def test_bpsk_alphabet_values():
    a = sorted(sm.alphabet(sm.ModulationScheme.BPSK).real)
    assert np.allclose(a, [-1.0, 1.0])


class TestSrrcPulse:
    def test_beta_zero_is_sinc_with_nyquist_zeros(self):
        T0 = 8.0
        taps = sm.srrc_pulse(0.0, T0)
        center = len(taps) // 2
        for k in (1, 2, 3, 4):
            assert abs(taps[center + int(k * T0)]) < 1e-9

    @pytest.mark.parametrize("beta,T0", [(0.1, 4.0), (0.35, 10.0),
                                         (0.7, 7.3), (1.0, 23.0)])
    def test_unit_energy(self, beta, T0):
        taps = sm.srrc_pulse(beta, T0)
        assert abs(np.sum(taps ** 2) - 1.0) < 1e-9

    def test_zero_isi_of_self_convolution(self):
        T0 = 10.0
        taps = sm.srrc_pulse(0.35, T0)
        rc = np.convolve(taps, taps)
        center = len(rc) // 2
        peak = rc[center]
        for k in range(1, 6):
            assert abs(rc[center + int(k * T0)]) < 1e-3 * peak

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            sm.srrc_pulse(-0.1, 8.0)
        with pytest.raises(ValueError):
            sm.srrc_pulse(0.3, 0.0)


class TestSynthesize:
    def test_unit_power_noise_free(self):
        x = make_record("bpsk", n=32768).samples
        assert abs(np.mean(np.abs(x) ** 2) - 1.0) < 0.02

    def test_msk_constant_envelope(self):
        x = make_record("msk", amplitude=1.7).samples
        assert np.max(np.abs(np.abs(x) - 1.7)) < 1e-9

    def test_record_length_and_finiteness(self):
        rec = make_record("16qam", n=4096, snr=5.0)
        assert len(rec.samples) == 4096
        assert np.all(np.isfinite(rec.samples))

    def test_scale_covariance_exact(self):
        a = make_record("qpsk", seed=3, amplitude=1.0).samples
        b = make_record("qpsk", seed=3, amplitude=2.5).samples
        assert np.allclose(b, 2.5 * a, rtol=0, atol=1e-12)

    def test_frequency_shift_covariance_exact(self):
        a = make_record("8psk", seed=4, f0=0.0).samples
        b = make_record("8psk", seed=4, f0=0.01).samples
        n = np.arange(len(a))
        assert np.allclose(b, a * np.exp(2j * np.pi * 0.01 * n), atol=1e-9)

    def test_inband_snr_calibration(self):
        for scheme, seed in [("qpsk", 11), ("bpsk", 12), ("64qam", 13)]:
            rec = make_record(scheme, T0=9.0, beta=0.4, snr=10.0, seed=seed)
            bw = (1 + 0.4) / 9.0
            measured = orc.snr_meter(rec.samples, (-bw / 2, bw / 2))
            assert abs(measured - 10.0) < 0.5, (scheme, measured)


class TestSampleParams:
    def spec(self, profile):
        return sm.DatasetSpec(profile=profile, count_per_class=100,
                              num_samples=32768, master_seed=42)

    def test_determinism(self):
        s = self.spec("cspb2018-like")
        assert sm.sample_params(s, 17) == sm.sample_params(s, 17)

    def test_profile_ranges_2018(self):
        s = self.spec("cspb2018-like")
        for i in range(0, 800, 37):
            p = sm.sample_params(s, i)
            assert -0.001 < p.cfo < 0.001
            assert 1.0 <= p.symbol_period <= 23.0
            assert 0.1 <= p.rolloff <= 1.0
            assert 0.0 <= p.inband_snr <= 12.0

    def test_profile_ranges_2022(self):
        s = self.spec("cspb2022-like")
        for i in range(0, 800, 37):
            p = sm.sample_params(s, i)
            assert 0.01 < p.cfo < 0.02
            assert 1.0 <= p.symbol_period <= 29.0
            assert 1.0 <= p.inband_snr <= 18.0

    def test_snr_mode_2022(self):
        s = sm.DatasetSpec(profile="cspb2022-like", count_per_class=1250,
                           num_samples=32768, master_seed=9)
        snrs = [sm.sample_params(s, i).inband_snr for i in range(10000)]
        hist, edges = np.histogram(snrs, bins=17, range=(1.0, 18.0))
        mode = 0.5 * (edges[np.argmax(hist)] + edges[np.argmax(hist) + 1])
        assert 10.0 <= mode <= 14.0

    def test_index_out_of_range(self):
        s = self.spec("cspb2018-like")
        with pytest.raises((IndexError, ValueError)):
            sm.sample_params(s, 100 * 8)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), c=st.floats(0.5, 4.0))
def test_amplitude_scaling_property(seed, c):
    a = make_record("16qam", n=2048, seed=seed, amplitude=1.0).samples
    b = make_record("16qam", n=2048, seed=seed, amplitude=c).samples
    assert np.allclose(b, c * a, atol=1e-12)
