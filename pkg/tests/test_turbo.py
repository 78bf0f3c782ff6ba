import math

import numpy as np
import pytest

from turboce.channel import (
    FrameConfig,
    data_times,
    draw_channel,
    frame_capacity,
    modulate_frame,
    transmit,
)
from turboce.constellation import make_constellation
from turboce.estimation import EstimatorKind
from turboce.ldpc import default_code_path, load_code
from turboce.turbo import (
    DemapMode,
    ReceiverConfig,
    dft_denoise,
    equalize_and_demap,
    pilot_channel_estimate,
    run_receiver,
)


@pytest.fixture(scope="module")
def code():
    return load_code(default_code_path())


def make_trial(code, seed, modulation_order=4, n_rx=2, taps=4, noise_power=0.0,
               rb_num=1, n_data=12, pilot_positions=(2, 11)):
    cfg = FrameConfig(
        rb_num=rb_num,
        n_rx=n_rx,
        modulation_order=modulation_order,
        n_data=n_data,
        pilot_positions=pilot_positions,
    )
    rng = np.random.default_rng(seed)
    n_cw, _ = frame_capacity(cfg, code)
    info = rng.integers(0, 2, size=n_cw * code.k)
    tx = modulate_frame(cfg, code, info, rng)
    ch = draw_channel(cfg, taps, rng, noise_power)
    grid = transmit(tx, ch, rng)
    return cfg, tx, ch, grid


def oracle_exact_llrs(z, nu, const):
    """Brute-force per-bit log-sum-exp over all lattice points."""
    q = const.order
    out = np.zeros(q)
    for k in range(q):
        num, den = [], []
        for j in range(const.size):
            metric = -abs(z - const.points[j]) ** 2 / nu
            (num if const.labels[j, k] == 0 else den).append(metric)
        m0, m1 = max(num), max(den)
        out[k] = (m0 + math.log(sum(math.exp(v - m0) for v in num))) - (
            m1 + math.log(sum(math.exp(v - m1) for v in den))
        )
    return out


class TestEqualizeAndDemap:
    def test_noiseless_true_channel_signs_match_bits(self, code):
        cfg, tx, ch, grid = make_trial(code, 0, modulation_order=2)
        const = make_constellation(2)
        n_tracked = tx.n_codewords * (code.n // 2)
        llrs, n_deg = equalize_and_demap(grid, ch.h, 0.0, cfg, const, n_tracked)
        assert n_deg == 0
        bits = tx.coded_bits.reshape(-1)
        signs = np.where(bits == 0, 1.0, -1.0)
        assert np.all(np.sign(llrs) == signs)

    def test_qpsk_maxlog_equals_exact(self, code):
        cfg, tx, ch, grid = make_trial(code, 1, modulation_order=2, noise_power=0.3)
        const = make_constellation(2)
        n_tracked = tx.n_codewords * (code.n // 2)
        a, _ = equalize_and_demap(grid, ch.h, 0.3, cfg, const, n_tracked, DemapMode.EXACT)
        b, _ = equalize_and_demap(grid, ch.h, 0.3, cfg, const, n_tracked, DemapMode.MAX_LOG)
        np.testing.assert_allclose(a, b, atol=1e-11)

    def test_qam16_exact_llr_against_enumeration(self, code):
        cfg, tx, ch, grid = make_trial(code, 2, modulation_order=4, noise_power=0.2, n_rx=3)
        const = make_constellation(4)
        n_tracked = tx.n_codewords * (code.n // 4)
        llrs, _ = equalize_and_demap(grid, ch.h, 0.2, cfg, const, n_tracked)
        # recompute the combining and one symbol's LLRs by brute force
        weight = np.sum(np.abs(ch.h) ** 2, axis=1)
        dt = data_times(cfg)
        for sym_idx in (0, 7, 100):
            t = dt[sym_idx // cfg.n_used]
            f = sym_idx % cfg.n_used
            z = np.sum(np.conj(ch.h[f]) * grid[t, f, :]) / weight[f]
            nu = 0.2 / weight[f]
            expected = oracle_exact_llrs(z, nu, const)
            got = llrs[sym_idx * 4 : (sym_idx + 1) * 4]
            np.testing.assert_allclose(got, expected, atol=1e-12)

    def test_all_zero_channel_estimate_gives_neutral_llrs(self, code):
        cfg, tx, ch, grid = make_trial(code, 3, modulation_order=4)
        const = make_constellation(4)
        n_tracked = tx.n_codewords * (code.n // 4)
        h_zero = ch.h.copy()
        h_zero[5, :] = 0.0
        llrs, n_deg = equalize_and_demap(grid, h_zero, 0.1, cfg, const, n_tracked)
        assert n_deg == 1
        # bits of data symbols on subcarrier 5 are exactly zero
        for sym_idx in range(n_tracked):
            f = sym_idx % cfg.n_used
            chunk = llrs[sym_idx * 4 : (sym_idx + 1) * 4]
            if f == 5:
                assert np.all(chunk == 0.0)

    def test_llrs_clipped(self, code):
        cfg, tx, ch, grid = make_trial(code, 4, modulation_order=2)
        const = make_constellation(2)
        n_tracked = tx.n_codewords * (code.n // 2)
        llrs, _ = equalize_and_demap(grid, ch.h, 0.0, cfg, const, n_tracked)
        assert np.max(np.abs(llrs)) <= 1000.0


class TestDftDenoise:
    def test_identity_at_full_cutoff(self):
        rng = np.random.default_rng(5)
        row = rng.normal(size=24) + 1j * rng.normal(size=24)
        out = dft_denoise(row, 24)
        np.testing.assert_allclose(out, row, atol=1e-12)

    def test_recovers_band_limited_channel(self, code):
        cfg = FrameConfig(rb_num=2, n_rx=2)
        ch = draw_channel(cfg, 3, np.random.default_rng(6))
        for a in range(2):
            out = dft_denoise(ch.h[:, a], 6)
            np.testing.assert_allclose(out, ch.h[:, a], atol=1e-10)

    def test_idempotent(self):
        rng = np.random.default_rng(7)
        row = rng.normal(size=12) + 1j * rng.normal(size=12)
        once = dft_denoise(row, 4)
        twice = dft_denoise(once, 4)
        np.testing.assert_allclose(once, twice, atol=1e-12)

    def test_cutoff_validation(self):
        with pytest.raises(ValueError, match="tap_cutoff"):
            dft_denoise(np.ones(12, complex), 0)
        with pytest.raises(ValueError, match="tap_cutoff"):
            dft_denoise(np.ones(12, complex), 13)


class TestRunReceiver:
    def test_zero_outer_iterations_trace_length_one(self, code):
        cfg, tx, ch, grid = make_trial(code, 8, noise_power=0.2)
        rx = ReceiverConfig(estimator=EstimatorKind.HARD, outer_iterations=0)
        trace = run_receiver(grid, tx, ch, code, rx)
        assert len(trace) == 1

    def test_non_turbo_trace_independent_of_estimator(self, code):
        cfg, tx, ch, grid = make_trial(code, 9, noise_power=0.2)
        traces = []
        for kind in EstimatorKind:
            rx = ReceiverConfig(estimator=kind, outer_iterations=0)
            traces.append(run_receiver(grid, tx, ch, code, rx))
        ref = traces[0].records[0]
        for t in traces[1:]:
            rec = t.records[0]
            assert rec.channel_mse == ref.channel_mse
            assert rec.mean_abs_llr == ref.mean_abs_llr
            assert rec.frame_error == ref.frame_error

    @pytest.mark.parametrize("kind", list(EstimatorKind))
    def test_noiseless_any_estimator_perfect(self, code, kind):
        cfg, tx, ch, grid = make_trial(code, 10, noise_power=0.0)
        rx = ReceiverConfig(estimator=kind, outer_iterations=1)
        trace = run_receiver(grid, tx, ch, code, rx)
        assert not trace.records[0].frame_error
        assert not trace.records[1].frame_error
        assert trace.records[1].channel_mse <= 1e-20

    def test_trace_deterministic(self, code):
        cfg, tx, ch, grid = make_trial(code, 11, noise_power=0.3)
        rx = ReceiverConfig(estimator=EstimatorKind.SOFT_PARAM, outer_iterations=2)
        a = run_receiver(grid, tx, ch, code, rx)
        b = run_receiver(grid, tx, ch, code, rx)
        assert a == b

    def test_oracle_llr_override_improves_mse(self, code):
        # certainty beliefs from the true bits: data-aided CE must beat
        # pilot-only on average (more energy, same noise)
        mse0, mse1 = [], []
        for seed in range(60):
            cfg, tx, ch, grid = make_trial(code, 100 + seed, noise_power=0.2, n_rx=2)
            bits = tx.coded_bits.reshape(-1).astype(float)
            oracle = np.where(bits == 0, np.inf, -np.inf)
            rx = ReceiverConfig(estimator=EstimatorKind.SOFT_PARAM, outer_iterations=1)
            trace = run_receiver(grid, tx, ch, code, rx, data_llrs_override=oracle)
            mse0.append(trace.records[0].channel_mse)
            mse1.append(trace.records[1].channel_mse)
        assert np.mean(mse1) < np.mean(mse0)

    def test_data_aiding_gain_matches_energy_ratio(self, code):
        # improvement factor should sit near total-energy / pilot-energy
        mse0, mse1 = [], []
        for seed in range(120):
            cfg, tx, ch, grid = make_trial(code, 300 + seed, noise_power=0.2, n_rx=2)
            bits = tx.coded_bits.reshape(-1).astype(float)
            oracle = np.where(bits == 0, np.inf, -np.inf)
            rx = ReceiverConfig(estimator=EstimatorKind.SOFT_PARAM, outer_iterations=1)
            trace = run_receiver(grid, tx, ch, code, rx, data_llrs_override=oracle)
            mse0.append(trace.records[0].channel_mse)
            mse1.append(trace.records[1].channel_mse)
        # per-subcarrier symbol energy: 2 pilots at power 2 + 12 data at power ~1
        cfg = FrameConfig()
        theory = (cfg.n_data * 1.0 + cfg.n_pilot * cfg.pilot_amp**2) / (
            cfg.n_pilot * cfg.pilot_amp**2
        )
        factor = np.mean(mse0) / np.mean(mse1)
        assert 0.5 * theory < factor < 1.5 * theory

    def test_estimator_error_carries_context(self, code, monkeypatch):
        cfg, tx, ch, grid = make_trial(code, 12, noise_power=0.2)
        import turboce.turbo as turbo_mod

        def boom(*args, **kwargs):
            raise ValueError("synthetic estimator failure")

        monkeypatch.setattr(turbo_mod, "estimate", boom)
        rx = ReceiverConfig(estimator=EstimatorKind.HARD, outer_iterations=1)
        with pytest.raises(ValueError, match="subcarrier 0, antenna 0"):
            run_receiver(grid, tx, ch, code, rx)

    def test_turbo_iteration_reduces_mse_with_noise(self, code):
        wins = 0
        trials = 40
        for seed in range(trials):
            cfg, tx, ch, grid = make_trial(code, 500 + seed, noise_power=0.15, n_rx=4)
            rx = ReceiverConfig(estimator=EstimatorKind.SOFT_PARAM, outer_iterations=1)
            trace = run_receiver(grid, tx, ch, code, rx)
            if trace.records[1].channel_mse < trace.records[0].channel_mse:
                wins += 1
        assert wins > trials * 0.8

    def test_round_trip_noiseless_recovers_coded_bits(self, code):
        # demapping the noiseless grid with the true channel recovers the
        # transmitted codewords exactly
        cfg, tx, ch, grid = make_trial(code, 13, modulation_order=4)
        const = make_constellation(4)
        n_tracked = tx.n_codewords * (code.n // 4)
        llrs, _ = equalize_and_demap(grid, ch.h, 0.0, cfg, const, n_tracked)
        hard = (llrs < 0).astype(np.uint8)
        np.testing.assert_array_equal(hard, tx.coded_bits.reshape(-1))


class TestReceiverConfig:
    def test_validation(self):
        with pytest.raises(ValueError, match="outer_iterations"):
            ReceiverConfig(outer_iterations=-1)
        with pytest.raises(ValueError, match="tap_cutoff"):
            ReceiverConfig(dft_denoise=True, tap_cutoff=0)

    def test_label_defaults_to_estimator(self):
        rx = ReceiverConfig(estimator=EstimatorKind.HARD)
        assert rx.label == "hard"

    def test_pilot_channel_estimate_matches_manual(self, code):
        cfg, tx, ch, grid = make_trial(code, 14, noise_power=0.1)
        manual = (grid[2] + grid[11]) / (2 * cfg.pilot_amp)
        np.testing.assert_allclose(pilot_channel_estimate(grid, cfg), manual, atol=1e-15)
