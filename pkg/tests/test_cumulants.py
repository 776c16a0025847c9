import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cspkit import blindest as be
from cspkit import cumulants as cu
from cspkit import oracles as orc
from cspkit import sigmodel as sm
from conftest import make_record


class TestPartitions:
    @pytest.mark.parametrize("n,bell", [(2, 2), (4, 15), (6, 203)])
    def test_bell_counts(self, n, bell):
        parts = cu.enumerate_partitions(n)
        assert len(parts) == bell
        assert len(set(parts)) == bell  # duplicate-free
        for p in parts:
            flat = sorted(i for part in p for i in part)
            assert flat == list(range(n))

    @pytest.mark.parametrize("p,h", [(1, 1), (2, -1), (3, 2), (4, -6)])
    def test_partition_weights(self, p, h):
        assert cu.partition_weight(p) == h


class TestCtmf:
    def test_constant_signal(self):
        x = np.ones(2048, dtype=complex)
        for pair in [(2, 0), (4, 2), (6, 3)]:
            assert abs(cu.ctmf_estimate(x, pair, 0.0).value - 1.0) < 1e-12

    def test_tone_phase_cancellation(self):
        n = np.arange(8192)
        x = np.exp(2j * np.pi * 0.031 * n)
        v = cu.ctmf_estimate(x, (2, 0), 0.062).value
        assert abs(v - 1.0) < 1e-2

    def test_gaussian_fourth_moment(self):
        rng = np.random.default_rng(5)
        w = (rng.standard_normal(2 ** 16)
             + 1j * rng.standard_normal(2 ** 16)) * np.sqrt(0.5)
        v = cu.ctmf_estimate(w, (4, 2), 0.0).value
        assert abs(v - 2.0) < 0.1

    def test_scale_covariance_exact(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal(512) + 1j * rng.standard_normal(512)
        a = cu.ctmf_estimate(x, (4, 1), 0.17).value
        b = cu.ctmf_estimate(2.0 * x, (4, 1), 0.17).value
        assert abs(b - 16.0 * a) < 1e-9 * abs(b)


def _zero_gamma_grid(pairs):
    """Grid whose every candidate comb collapses to gamma = 0 (rate 0),
    isolating the partition combination for toy-sequence comparisons."""
    return be.CycleFrequencySet(
        pairs={pair: [(0, 0.0)] for pair in pairs},
        rate=0.0, cfo=0.0, pattern=be.CfPattern.BPSK_LIKE)


class TestCcEstimate:
    def test_toy_matches_direct_joint_cumulant_exactly(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal(64) + 1j * rng.standard_normal(64)
        grid = _zero_gamma_grid(cu.NM_PAIRS)
        cc = cu.cc_estimate(x, grid)
        for col, (n, m) in enumerate(cu.NM_PAIRS):
            cols = np.tile(x, (n, 1))
            conj = [i >= n - m for i in range(n)]
            ref = orc.direct_joint_cumulant(cols, conj)
            got = cc.values[5, col]
            assert abs(got - ref) <= 1e-10 * max(1.0, abs(ref)), (n, m)

    def test_unit_power_slot(self):
        x = make_record("qpsk", T0=8.0, seed=110).samples
        grid = be.build_cf_grid(be.KeyParamEstimates(
            rate=1 / 8, cfo=0.0, pattern=be.CfPattern.QPSK_LIKE))
        cc = cu.cc_estimate(x, grid)
        i21 = cu.NM_PAIRS.index((2, 1))
        assert abs(cc.values[5, i21] - 1.0) < 0.02

    def test_gaussian_higher_cumulants_vanish(self):
        rng = np.random.default_rng(8)
        w = (rng.standard_normal(2 ** 15)
             + 1j * rng.standard_normal(2 ** 15)) * np.sqrt(0.5)
        grid = _zero_gamma_grid([(4, 0), (4, 2), (6, 3)])
        cc = cu.cc_estimate(w, grid)
        floor = 5.0 * 10.0 / np.sqrt(2 ** 15)
        for pair in [(4, 0), (4, 2), (6, 3)]:
            assert abs(cc.values[5, cu.NM_PAIRS.index(pair)]) < floor

    def test_unresolved_grid_rejected(self):
        with pytest.raises(ValueError):
            cu.cc_estimate(np.ones(2048, dtype=complex),
                           be.CycleFrequencySet())

    def test_mask_matches_populated_slots(self):
        x = make_record("bpsk", T0=8.0, seed=111).samples
        grid = be.build_cf_grid(be.KeyParamEstimates(
            rate=1 / 8, cfo=0.0, pattern=be.CfPattern.BPSK_LIKE))
        cc = cu.cc_estimate(x, grid)
        assert int(cc.mask.sum()) == grid.total
        assert np.all(cc.values[~cc.mask] == 0)

    def test_noise_subtraction_only_touches_power_slot(self):
        x = make_record("qpsk", T0=8.0, snr=6.0, seed=112).samples
        grid = be.build_cf_grid(be.KeyParamEstimates(
            rate=1 / 8, cfo=0.0, pattern=be.CfPattern.QPSK_LIKE))
        a = cu.cc_estimate(x, grid, noise_power=0.0)
        b = cu.cc_estimate(x, grid, noise_power=0.5)
        diff = a.values - b.values
        i21 = cu.NM_PAIRS.index((2, 1))
        assert abs(diff[5, i21] - 0.5) < 1e-12
        diff[5, i21] = 0.0
        assert np.max(np.abs(diff)) < 1e-12


class TestWarpAndScale:
    def make_cc(self, mag, n):
        cc = cu.CcFeatureMatrix.empty(rate=0.1, cfo=0.0,
                                      pattern=be.CfPattern.BPSK_LIKE,
                                      power=1.0)
        col = cu.NM_PAIRS.index((n, 0))
        cc.values[5, col] = mag
        cc.mask[5, col] = True
        return cc

    def test_order6_exponent(self):
        w = cu.warp_and_scale(self.make_cc(8.0, 6), 1.0)
        assert abs(abs(w.values[5, cu.NM_PAIRS.index((6, 0))]) - 2.0) < 1e-12

    def test_order2_unchanged(self):
        w = cu.warp_and_scale(self.make_cc(0.7, 2), 1.0)
        assert abs(abs(w.values[5, cu.NM_PAIRS.index((2, 0))]) - 0.7) < 1e-12

    def test_phase_preserved(self):
        cc = self.make_cc(8.0 * np.exp(1j * 1.1), 4)
        w = cu.warp_and_scale(cc, 1.0)
        v = w.values[5, cu.NM_PAIRS.index((4, 0))]
        assert abs(np.angle(v) - 1.1) < 1e-12

    def test_nonpositive_power_rejected(self):
        with pytest.raises(ValueError):
            cu.warp_and_scale(self.make_cc(1.0, 2), 0.0)

    def test_magnitude_cap(self):
        w = cu.warp_and_scale(self.make_cc(1e9, 2), 1e-6)
        assert np.max(np.abs(w.values)) <= cu.WARPED_MAG_CAP + 1e-12


class TestSymbolCumulant:
    def test_power_slot(self):
        for scheme in sm.ModulationScheme:
            if scheme is sm.ModulationScheme.MSK:
                continue
            a = sm.alphabet(scheme)
            assert abs(cu.symbol_cumulant(a, (2, 1)) - 1.0) < 1e-12

    def test_qpsk_quartic(self):
        a = sm.alphabet(sm.ModulationScheme.QPSK)
        assert abs(cu.symbol_cumulant(a, (4, 0)) - (-1.0)) < 1e-12

    def test_bpsk_four_two(self):
        a = np.array([1.0, -1.0])
        assert abs(cu.symbol_cumulant(a, (4, 2)) - (-2.0)) < 1e-12

    def test_matches_bruteforce_oracle(self):
        for scheme in (sm.ModulationScheme.QAM16, sm.ModulationScheme.PSK8):
            a = sm.alphabet(scheme)
            for (n, m) in [(4, 0), (4, 2), (6, 3), (6, 1)]:
                ref = orc.symbol_cumulant_bruteforce(a, n, m)
                assert abs(cu.symbol_cumulant(a, (n, m)) - ref) < 1e-10


@settings(max_examples=15, deadline=None)
@given(phi=st.floats(0.0, 2 * np.pi), n=st.sampled_from([2, 4, 6]),
       m=st.integers(0, 6))
def test_phase_covariance_exact(phi, n, m):
    m = m % (n + 1)
    rng = np.random.default_rng(17)
    x = rng.standard_normal(256) + 1j * rng.standard_normal(256)
    grid = _zero_gamma_grid([(n, m)])
    a = cu.cc_estimate(x, grid).values[5, cu.NM_PAIRS.index((n, m))]
    b = cu.cc_estimate(x * np.exp(1j * phi), grid).values[
        5, cu.NM_PAIRS.index((n, m))]
    assert abs(b - a * np.exp(1j * (n - 2 * m) * phi)) < 1e-9 * max(1.0, abs(a))


def test_cumulant_additivity_distinct_rates():
    x = make_record("bpsk", T0=8.0, seed=120).samples
    y = make_record("bpsk", T0=12.5, seed=121).samples
    grid = be.build_cf_grid(be.KeyParamEstimates(
        rate=1 / 8, cfo=0.0, pattern=be.CfPattern.BPSK_LIKE))
    i21 = cu.NM_PAIRS.index((2, 1))
    a = cu.cc_estimate(x, grid).values[6, i21]          # alpha = 1/8
    ab = cu.cc_estimate(x + y, grid).values[6, i21]
    assert abs(ab - a) < 0.05 * abs(a)
