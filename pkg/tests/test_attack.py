import logging

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import chisquare

from wams_tsa.attack import (AttackScenario, ConstantShift, MeasurementBuffer, RandomShift,
                             apply_tsa, resolve_strategy, schedule)
from wams_tsa.errors import ConfigError
from wams_tsa.grid import MeasurementFrame


def truth(slot, m=3):
    """Distinct, recognisable values: PMU n at slot t reads 100*n + t."""
    return MeasurementFrame(100.0 * np.arange(m) + slot, np.full(m, slot))


def filled(capacity, upto, m=3):
    buf = MeasurementBuffer(capacity)
    for t in range(1, upto + 1):
        buf.push(t, truth(t, m))
    return buf


class TestSchedule:
    def test_zero_frequency(self, rng):
        assert not schedule(AttackScenario(frequency=0.0), 1000, rng).any()

    def test_full_frequency(self, rng):
        assert schedule(AttackScenario(frequency=1.0), 1000, rng).all()

    def test_rate(self, rng):
        mask = schedule(AttackScenario(frequency=0.3), 100_000, rng)
        assert 0.29 <= mask.mean() <= 0.31

    def test_no_target(self, rng):
        assert not schedule(AttackScenario(target=None, frequency=1.0), 50, rng).any()

    def test_horizon_check(self, rng):
        with pytest.raises(ValueError):
            schedule(AttackScenario(), 0, rng)


class TestScenario:
    @pytest.mark.parametrize("kwargs, path", [
        (dict(frequency=1.5), "attack.frequency"),
        (dict(target=-1), "attack.target"),
    ])
    def test_validation(self, kwargs, path):
        with pytest.raises(ConfigError) as exc:
            AttackScenario(**kwargs)
        assert exc.value.path == path

    def test_shift_bounds(self):
        with pytest.raises(ConfigError):
            ConstantShift(0)
        with pytest.raises(ConfigError):
            RandomShift(0)

    def test_target_within_pmus(self):
        with pytest.raises(ConfigError):
            AttackScenario(target=5).validate_for(5)
        AttackScenario(target=4).validate_for(5)

    def test_per_run_random_shift_resolves_once(self, rng):
        sc = resolve_strategy(AttackScenario(strategy=RandomShift(7, per_slot=False)), rng)
        assert isinstance(sc.strategy, ConstantShift) and 1 <= sc.strategy.k <= 7

    def test_buffer_capacity(self):
        assert MeasurementBuffer.for_scenario(AttackScenario(strategy=RandomShift(10))).capacity == 11
        assert MeasurementBuffer.for_scenario(AttackScenario()).capacity == 6


class TestApply:
    def test_pass_through_when_unattacked(self):
        buf = filled(6, 10)
        frame = truth(10)
        out = apply_tsa(buf, frame, AttackScenario(target=1), 10, False)
        assert out is frame

    def test_constant_shift(self):
        buf = filled(4, 10)
        sc = AttackScenario(target=2, strategy=ConstantShift(3))
        out = apply_tsa(buf, truth(10), sc, 10, True)
        assert out.values[2] == truth(7).values[2]
        assert out.stamps.tolist() == [10, 10, 10]
        assert out.values[:2].tolist() == truth(10).values[:2].tolist()

    def test_full_mask_indexing(self):
        buf = filled(6, 10)
        mask = np.zeros(20, dtype=bool)
        mask[10] = True
        sc = AttackScenario(target=0, strategy=ConstantShift(2))
        assert apply_tsa(buf, truth(10), sc, 10, mask).values[0] == 8.0

    def test_random_shift_uniform(self):
        buf = filled(6, 10, m=1)
        sc = AttackScenario(target=0, strategy=RandomShift(5))
        r = np.random.default_rng(3)
        shifts = [10 - int(apply_tsa(buf, truth(10, 1), sc, 10, True, r).values[0])
                  for _ in range(10_000)]
        counts = np.bincount(shifts, minlength=6)[1:]
        assert counts.sum() == 10_000
        assert chisquare(counts).pvalue > 0.01

    def test_clamps_and_records(self, caplog):
        buf = filled(6, 2)
        sc = AttackScenario(target=1, strategy=ConstantShift(5))
        with caplog.at_level(logging.WARNING, logger="wams_tsa.attack"):
            out = apply_tsa(buf, truth(2), sc, 2, True)
        assert out.values[1] == truth(1).values[1]
        assert len(buf.events) == 1 and "clamped" in buf.events[0]
        assert "clamped" in caplog.text

    def test_empty_buffer(self):
        buf = MeasurementBuffer(3)
        frame = truth(0)
        out = apply_tsa(buf, frame, AttackScenario(target=0), 0, True)
        assert out is frame and buf.events

    def test_buffer_order_enforced(self):
        buf = filled(3, 5)
        with pytest.raises(ValueError):
            buf.push(5, truth(5))

    @given(st.integers(0, 2**32 - 1), st.floats(0, 1), st.integers(1, 8), st.booleans())
    def test_no_fabrication_and_non_target_untouched(self, seed, freq, k, random):
        r = np.random.default_rng(seed)
        strat = RandomShift(k) if random else ConstantShift(k)
        sc = AttackScenario(target=1, strategy=strat, frequency=freq)
        mask = schedule(sc, 40, r)
        buf = MeasurementBuffer.for_scenario(sc)
        history = set()
        for t in range(1, 41):
            frame = truth(t)
            buf.push(t, frame)
            history.add(frame.values[1])
            out = apply_tsa(buf, frame, sc, t, mask[t - 1], r)
            assert out.values[1] in history
            assert np.array_equal(out.values[[0, 2]], frame.values[[0, 2]])
            assert np.array_equal(out.stamps, frame.stamps)
            if not mask[t - 1]:
                assert np.array_equal(out.values, frame.values)

    @given(st.integers(0, 2**32 - 1))
    def test_zero_frequency_is_identity(self, seed):
        r = np.random.default_rng(seed)
        sc = AttackScenario(target=0, frequency=0.0)
        mask = schedule(sc, 30, r)
        buf = MeasurementBuffer.for_scenario(sc)
        for t in range(1, 31):
            frame = truth(t)
            buf.push(t, frame)
            assert apply_tsa(buf, frame, sc, t, mask[t - 1], r) is frame
