import math

import numpy as np
import pytest

from cvqkd_spda.analysis import gof_test
from cvqkd_spda.analytic import CORRECT, WRONG, absence_density, ber_absence, ber_presence, spda_mixture
from cvqkd_spda.errors import DomainError
from cvqkd_spda.model import NO_ATTACK, AttackConfig, CoherentSignal, EveDetector, ProtocolParams, Strategy
from cvqkd_spda.montecarlo import (
    VACUUM_INDEX,
    HistogramSpec,
    QuadratureHistogram,
    SessionStats,
    eve_sma_trial,
    eve_spda_trial,
    homodyne_batch,
    sample_homodyne,
    simulate_session,
    sma_decide,
    sma_resend_batch,
    spda_resend_batch,
)

TABLE1_SPDA = (0.4323, 0.0, 0.1163, 0.1163, 0.3351)
TABLE1_SMA = (0.7079, 0.0252, 0.1334, 0.1334, 0.0)


def frequencies(indices):
    """Empirical (|a>, |-a>, |ia>, |-ia>, vac) frequencies of resend indices."""
    n = indices.size
    return tuple(np.count_nonzero(indices == k) / n for k in (0, 2, 1, 3, VACUUM_INDEX)), n


def within_3_sigma(freqs, n, expected):
    for f, p in zip(freqs, expected):
        sigma = math.sqrt(p * (1 - p) / n)
        if abs(f - p) > 3 * sigma + 5e-5:  # reference values are rounded to 4 dp
            return False
    return True


class TestHomodyne:
    def test_vacuum_mean(self, rng):
        n = 10**6
        x = homodyne_batch(0.0, np.full(n, VACUUM_INDEX), np.zeros(n, dtype=int), rng)
        assert abs(x.mean()) < 4 * 0.5 / 1e3
        assert x.std() == pytest.approx(0.5, rel=5e-3)

    def test_coherent_mean(self, rng):
        n = 10**6
        x = homodyne_batch(1.0, np.zeros(n, dtype=int), np.zeros(n, dtype=int), rng)
        assert abs(x.mean() - 1.0) < 4 * 0.5 / math.sqrt(n)

    def test_scalar_agrees_in_distribution(self, rng):
        xs = [sample_homodyne(CoherentSignal(1.0, 1), 1.0, math.pi / 2, rng) for _ in range(20000)]
        assert abs(np.mean(xs) - 1.0) < 4 * 0.5 / math.sqrt(len(xs))
        xs = [sample_homodyne(CoherentSignal(0.0), 5.0, 0.0, rng) for _ in range(20000)]
        assert abs(np.mean(xs)) < 4 * 0.5 / math.sqrt(len(xs))

    def test_deterministic(self):
        a = sample_homodyne(CoherentSignal(1.0, 0), 0.3, 0.0, np.random.default_rng(7))
        b = sample_homodyne(CoherentSignal(1.0, 0), 0.3, 0.0, np.random.default_rng(7))
        assert a == b

    def test_negative_intensity(self, rng):
        with pytest.raises(DomainError):
            sample_homodyne(CoherentSignal(1.0), -1.0, 0.0, rng)


class TestEveTrials:
    def test_spda_table1(self, rng):
        idx = spda_resend_batch(np.zeros(10**7, dtype=int), 1.0, EveDetector(), rng)
        freqs, n = frequencies(idx)
        assert within_3_sigma(freqs, n, TABLE1_SPDA), freqs

    def test_spda_blind_detector(self, rng):
        idx = spda_resend_batch(np.zeros(10**5, dtype=int), 1.0, EveDetector(0.0, 1e-300), rng)
        assert np.all(idx == VACUUM_INDEX)
        assert eve_spda_trial(CoherentSignal(1.0), EveDetector(0.0, 1e-300), 3.0, rng).is_vacuum

    def test_spda_rotation_symmetry(self, rng):
        idx = spda_resend_batch(np.full(10**6, 2), 1.0, EveDetector(), rng)
        f_minus, n = frequencies(idx)
        swapped = (f_minus[1], f_minus[0], f_minus[2], f_minus[3], f_minus[4])
        assert within_3_sigma(swapped, n, TABLE1_SPDA)

    def test_spda_scalar_trial(self, rng):
        out = [eve_spda_trial(CoherentSignal(1.0, 0), EveDetector(), 3.0, rng) for _ in range(3000)]
        assert all(s.is_vacuum or s.intensity == 3.0 for s in out)
        # perfect detectors never resend |-alpha>
        assert not any(s.phase_index == 2 and not s.is_vacuum for s in out)

    def test_sma_table1(self, rng):
        idx = sma_resend_batch(np.zeros(10**7, dtype=int), 1.0, rng)
        freqs, n = frequencies(idx)
        assert within_3_sigma(freqs, n, TABLE1_SMA), freqs

    def test_sma_vacuum_input(self, rng):
        idx = sma_resend_batch(np.zeros(10**6, dtype=int), 0.0, rng)
        freqs, n = frequencies(idx)
        assert within_3_sigma(freqs, n, (0.25, 0.25, 0.25, 0.25, 0.0))

    def test_sma_scalar_trial(self, rng):
        s = eve_sma_trial(CoherentSignal(1.0, 1), 3.0, rng)
        assert s.intensity == 3.0 and s.phase_index in (0, 1, 2, 3)

    def test_sma_rule_exhaustive(self, rng):
        x1, x2 = rng.normal(size=(2, 10**5))
        d = sma_decide(x1, x2)
        assert np.all(d != VACUUM_INDEX)
        region_hits = (
            (x1 >= np.abs(x2)).astype(int)
            + (-x1 >= np.abs(x2))
            + (x2 > np.abs(x1))
            + (-x2 > np.abs(x1))
        )
        assert np.all(region_hits == 1)

    def test_sma_boundary_goes_to_real_axis(self):
        assert sma_decide(1.0, 1.0) == 0
        assert sma_decide(-1.0, -1.0) == 2


class TestSession:
    def test_empty(self):
        r = simulate_session(ProtocolParams(1.0, 1.12, 30), n_pulses=0)
        assert r.stats == SessionStats()
        assert r.stats.ber_estimate is None and r.stats.ber_stderr is None

    def test_negative_pulses(self):
        with pytest.raises(DomainError):
            simulate_session(ProtocolParams(1.0, 0), n_pulses=-1)

    def test_tallies_ordered(self):
        s = simulate_session(ProtocolParams(1.0, 0.8, 10), AttackConfig("sma", 2.0), 50_000, seed=3).stats
        assert 0 <= s.n_errors <= s.n_conclusive <= s.n_sifted <= s.n_sent == 50_000
        assert s.ber_estimate == s.n_errors / s.n_conclusive

    def test_undefined_ber_when_nothing_conclusive(self):
        s = simulate_session(ProtocolParams(1.0, 50.0), n_pulses=1000, seed=1).stats
        assert s.n_conclusive == 0 and s.ber_estimate is None

    @pytest.mark.slow
    def test_inherent_ber_at_fig2_point(self):
        p = ProtocolParams(1.0, 1.12, 30)
        s = simulate_session(p, NO_ATTACK, 10**7, seed=11, workers=4).stats
        expected = ber_absence(p).ber
        assert abs(s.ber_estimate - 0.0165) < 3 * s.ber_stderr + 5e-5
        assert abs(s.ber_estimate - expected) < 3 * math.sqrt(expected * (1 - expected) / s.n_conclusive)

    def test_spda_threshold_grid(self):
        mix = spda_mixture(1.0)
        for i, x0 in enumerate((0.0, 0.5, 1.0, 1.5)):
            p = ProtocolParams(1.0, x0, 30)
            s = simulate_session(p, AttackConfig(Strategy.SPDA, 3.0), 10**6, seed=100 + i).stats
            expected = ber_presence(mix, 3.0, x0).ber
            assert abs(s.ber_estimate - expected) < 3 * math.sqrt(expected * (1 - expected) / s.n_conclusive)

    def test_sifting_rate(self):
        s = simulate_session(ProtocolParams(1.0, 0.5), NO_ATTACK, 10**6, seed=5).stats
        assert abs(s.sifting_rate - 0.5) < 3 * math.sqrt(0.25 / s.n_sent)

    @pytest.mark.parametrize("attack", [NO_ATTACK, AttackConfig("spda", 3.0, EveDetector(1e-3, 0.4)), AttackConfig("sma", 2.0)])
    def test_worker_count_does_not_matter(self, attack):
        p = ProtocolParams(1.0, 0.7, 20)
        spec = HistogramSpec(4.0, 40)
        n = 3 * (1 << 18) + 1234
        a = simulate_session(p, attack, n, seed=9, histogram_spec=spec, workers=1)
        b = simulate_session(p, attack, n, seed=9, histogram_spec=spec, workers=4)
        assert a.stats == b.stats
        assert a.histograms == b.histograms

    def test_different_seeds_differ(self):
        p = ProtocolParams(1.0, 0.7, 20)
        assert simulate_session(p, n_pulses=10**5, seed=1).stats != simulate_session(p, n_pulses=10**5, seed=2).stats

    def test_histograms(self):
        p = ProtocolParams(1.0, 0.0, 30)
        r = simulate_session(p, NO_ATTACK, 200_000, seed=4, histogram_spec=HistogramSpec(5.0, 50))
        hc, hw = r.histograms[CORRECT], r.histograms[WRONG]
        assert hc.total + hw.total <= 200_000
        assert hc.total == pytest.approx(r.stats.n_sifted, abs=5)  # samples beyond +-5 are dropped
        centres = 0.5 * (hc.bin_edges[1:] + hc.bin_edges[:-1])
        mean_c = np.sum(centres * hc.counts) / hc.total
        mean_w = np.sum(centres * hw.counts) / hw.total
        assert mean_c == pytest.approx(math.sqrt(p.received_intensity), abs=0.02)
        assert mean_w == pytest.approx(0.0, abs=0.02)

    @pytest.mark.slow
    def test_histogram_passes_chi_square_under_null(self):
        p = ProtocolParams(1.0, 0.0, 30)
        spec = HistogramSpec(4.0, 60)
        consistent = 0
        for seed in range(100):
            h = simulate_session(p, NO_ATTACK, 20_000, seed=seed, histogram_spec=spec).histograms[CORRECT]
            rep = gof_test(h, lambda x: absence_density(p, CORRECT, x), significance=0.01)
            consistent += rep.decision == "consistent"
        assert consistent >= 98


class TestHistogramType:
    def test_validation(self):
        with pytest.raises(DomainError):
            QuadratureHistogram(CORRECT, [0.0, 0.0, 1.0])
        with pytest.raises(DomainError):
            QuadratureHistogram(CORRECT, [0.0, 1.0], [-1])
        with pytest.raises(DomainError):
            QuadratureHistogram("diagonal", [0.0, 1.0])

    def test_add(self):
        a = QuadratureHistogram(CORRECT, [0, 1, 2], [1, 2])
        b = QuadratureHistogram(CORRECT, [0, 1, 2], [3, 4])
        assert (a + b).counts.tolist() == [4, 6] and (a + b).total == 10
        with pytest.raises(DomainError):
            a + QuadratureHistogram(WRONG, [0, 1, 2], [0, 0])
