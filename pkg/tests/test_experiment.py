import math

import numpy as np
import pytest

import oracles
from wams_tsa import csvio
from wams_tsa.attack import AttackScenario, RandomShift
from wams_tsa.errors import ConfigError
from wams_tsa.experiment import (Engine, PhyConfig, RunRecord, cdf_value, default_config,
                                 delay_cdf, delay_fa_from_records, delay_fa_roc, first_crossing,
                                 identification_delays, interpolate_fa, monte_carlo, run_scenario,
                                 seed_streams)

SHORT = 150


@pytest.fixture(scope="module")
def engine():
    return Engine(default_config(horizon=SHORT))


@pytest.fixture(scope="module")
def null_engine():
    return Engine(default_config(phy=None, attack=AttackScenario(target=None)))


def record(pi_rows, target=4, threshold=0.9, eta=None, seed=0):
    pi = np.asarray(pi_rows, dtype=float)
    return RunRecord(seed, target, threshold, pi, eta, np.zeros(pi.shape[0], bool))


def detect_at(slot, pmu=4, horizon=200, m=5, target=4, seed=0):
    pi = np.full((horizon, m), 0.1)
    if slot is not None:
        pi[slot - 1:, pmu] = 0.95
    return record(pi, target=target, seed=seed)


class TestConfig:
    @pytest.mark.parametrize("kwargs, path", [
        (dict(horizon=0), "horizon"),
        (dict(n_seeds=0), "n_seeds"),
        (dict(thresholds=(0.5, 0.5)), "thresholds"),
        (dict(thresholds=(0.5, 1.0)), "thresholds"),
        (dict(thresholds=()), "thresholds"),
        (dict(detect_threshold=1.0), "detect_threshold"),
        (dict(no_attacker_prior_ratio=-1.0), "no_attacker_prior_ratio"),
        (dict(attack=AttackScenario(target=5)), "attack.target"),
        (dict(phy=PhyConfig.default(3)), "phy.scenes"),
    ])
    def test_validation(self, kwargs, path):
        with pytest.raises(ConfigError) as exc:
            default_config(**kwargs)
        assert exc.value.path == path

    def test_phy_config_validation(self):
        with pytest.raises(ConfigError):
            PhyConfig.default(5, spoof_mode="sometimes")
        with pytest.raises(ConfigError):
            PhyConfig.default(5, calibration_epochs=10)


class TestEngine:
    def test_shapes(self, engine):
        rec = engine.run(0, keep_innovations=True)
        assert rec.factor.shape == rec.eta.shape == rec.innovations.shape == (SHORT, 5)
        assert rec.attack_mask.shape == (SHORT,)
        assert rec.target == 4
        assert np.allclose(rec.factor.sum(axis=1), 1.0, atol=1e-9)
        assert np.all((rec.pi >= 0) & (rec.pi <= 1))

    def test_replay_bit_exact(self, engine):
        a = csvio.render_trace(engine.run(7))
        b = csvio.render_trace(Engine(default_config(horizon=SHORT)).run(7))
        assert a == b
        assert a != csvio.render_trace(engine.run(8))

    def test_run_scenario_matches_engine(self, engine):
        rec = run_scenario(default_config(horizon=SHORT), 3)
        assert np.array_equal(rec.pi, engine.run(3).pi)

    def test_workers_do_not_change_results(self):
        cfg = default_config(horizon=60)
        serial = monte_carlo(cfg, [4, 1, 9])
        parallel = monte_carlo(cfg, [4, 1, 9], workers=2)
        assert [r.seed for r in parallel] == [4, 1, 9]
        for a, b in zip(serial, parallel):
            assert csvio.render_trace(a) == csvio.render_trace(b)

    def test_phy_stream_does_not_disturb_grid(self):
        with_phy = Engine(default_config(horizon=80)).run(5)
        without = Engine(default_config(horizon=80, phy=None)).run(5)
        assert np.array_equal(with_phy.factor, without.factor)
        assert np.array_equal(with_phy.attack_mask, without.attack_mask)
        assert without.eta is None

    def test_attack_seed_only_moves_attack(self):
        a = seed_streams(3, attack_seed=0)
        b = seed_streams(3, attack_seed=1)
        for name in ("process", "measurement", "cno"):
            assert np.array_equal(a[name].random(4), b[name].random(4))
        assert not np.array_equal(a["attack"].random(4), b["attack"].random(4))

    def test_neutral_eta(self):
        cfg = default_config(horizon=40, phy=PhyConfig.default(5, neutral=True))
        rec = Engine(cfg).run(0)
        assert np.all(rec.eta[:, :4] == 0.5)
        assert rec.eta[:, 4].mean() > 0.9

    def test_spoof_only_on_attacked_slots(self):
        cfg = default_config(horizon=300, phy=PhyConfig.default(5, spoof_mode="attacked_slots"))
        rec = Engine(cfg).run(2)
        hit = rec.eta[rec.attack_mask, 4]
        miss = rec.eta[~rec.attack_mask, 4]
        assert hit.mean() > 0.9 and miss.mean() < 0.1

    def test_genuine_receivers_get_low_eta(self, engine):
        rec = engine.run(1)
        assert rec.eta[:, :4].max() < 0.5
        assert rec.eta[:, 4].min() > 0.5

    def test_upper_mode_ignores_eta(self, engine):
        rec = engine.run(1)
        assert np.array_equal(rec.pi_for("upper"), rec.factor)
        assert np.array_equal(rec.pi_for("cross"), rec.factor * rec.eta)
        with pytest.raises(ValueError):
            rec.pi_for("sideways")

    def test_cross_mode_needs_phy(self):
        rec = Engine(default_config(horizon=10, phy=None)).run(0)
        with pytest.raises(ValueError):
            rec.pi_for("cross")

    def test_random_shift_per_run(self):
        cfg = default_config(horizon=60, attack=AttackScenario(strategy=RandomShift(6, per_slot=False)))
        rec = Engine(cfg).run(0)
        assert rec.factor.shape == (60, 5)

    def test_no_attacker_variant_runs(self):
        cfg = default_config(horizon=60, no_attacker_prior_ratio=4.0)
        rec = Engine(cfg).run(0)
        assert np.all(rec.factor.sum(axis=1) < 1.0)

    def test_null_floor(self, null_engine):
        crossings = sum(null_engine.run(s).first_crossing() is not None for s in range(100))
        assert crossings <= 1

    def test_innovations_white(self, null_engine):
        recs = [null_engine.run(s, keep_innovations=True) for s in range(20)]
        first = recs[0].innovations
        assert all(oracles.ljung_box_pvalue(first[:, j], 10) > 0.01 for j in range(5))
        pvals = [oracles.ljung_box_pvalue(r.innovations[:, j], 10) for r in recs for j in range(5)]
        assert np.mean(np.array(pvals) > 0.01) >= 0.95
        pooled = np.concatenate([r.innovations for r in recs])
        assert np.allclose(pooled.var(axis=0), 1.0, atol=0.05)


class TestFirstCrossing:
    def test_none(self):
        assert first_crossing(np.full((5, 3), 0.3), 0.9, 0) is None

    def test_target_and_false_alarm(self):
        pi = np.full((6, 3), 0.1)
        pi[3, 1] = 0.95
        det = first_crossing(pi, 0.9, 1)
        assert (det.pmu, det.slot, det.false_alarm) == (1, 4, False)
        assert first_crossing(pi, 0.9, 2).false_alarm

    def test_largest_wins_on_same_slot(self):
        pi = np.array([[0.92, 0.97]])
        assert first_crossing(pi, 0.9, 0).pmu == 1


class TestDelayCdf:
    def test_all_at_one_slot(self):
        rows = delay_cdf([detect_at(100, seed=s) for s in range(5)])
        assert rows == [(100, 1.0)]
        assert cdf_value(rows, 99) == 0.0 and cdf_value(rows, 100) == 1.0

    def test_undetected_and_false_alarm_plateau(self):
        recs = [detect_at(10), detect_at(20), detect_at(None), detect_at(5, pmu=1)]
        rows = delay_cdf(recs)
        assert rows == [(10, 0.25), (20, 0.5)]
        assert identification_delays(recs).tolist() == [10, 20, math.inf, math.inf]

    def test_nondecreasing_bounded(self, engine):
        rows = delay_cdf([engine.run(s) for s in range(10)])
        fr = [f for _, f in rows]
        assert all(b >= a for a, b in zip(fr, fr[1:])) and fr[-1] <= 1.0
        assert [d for d, _ in rows] == sorted({d for d, _ in rows})

    def test_needs_records(self):
        with pytest.raises(ValueError):
            delay_cdf([])


class TestDelayFa:
    def test_shape_and_definitions(self):
        recs = [detect_at(10), detect_at(30), detect_at(5, pmu=0), detect_at(None)]
        rows = delay_fa_from_records(recs, [0.5, 0.9, 0.99])
        assert len(rows) == 3
        assert rows[0] == (0.5, 20.0, 0.25)
        assert rows[2][2] == 0.0 and math.isnan(rows[2][1])

    def test_extreme_threshold(self, engine):
        recs = [engine.run(s) for s in range(10)]
        rows = delay_fa_from_records(recs, [0.5, 0.9, 1 - 1e-15])
        assert rows[-1][2] == 0.0
        assert math.isnan(rows[-1][1]) or rows[-1][1] >= rows[0][1]

    def test_roc_rows_match_threshold_grid(self):
        cfg = default_config(horizon=40)
        assert len(delay_fa_roc(cfg, [0.3, 0.6, 0.9], n_seeds=3)) == 3

    def test_interpolation(self):
        rows = [(0.5, 10.0, 0.2), (0.7, 20.0, 0.1), (0.9, 30.0, 0.0), (0.99, math.nan, 0.0)]
        assert interpolate_fa(rows, 15.0) == pytest.approx(0.15)
        assert interpolate_fa(rows, 5.0) is None
        assert interpolate_fa(rows, 30.0) == 0.0
