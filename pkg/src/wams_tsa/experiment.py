"""Closed-loop scenario runner and Monte Carlo analysis.

One slot of :meth:`Engine.run`:

1. propagate the grid and read every PMU,
2. let the attacker re-time the target's reading,
3. score each PMU against its leave-one-out Kalman prediction,
4. update the suspicion levels (with the physical-layer prior when enabled),
5. apply LQR control from the all-PMU filter estimate.

Random streams are split from the master seed so that toggling one subsystem
never perturbs another::

    root = SeedSequence(seed)
    process noise, measurement noise, C/No noise = root.spawn(3)
    attack schedule and shifts = SeedSequence([seed, attack.seed])
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from . import phy as phy_mod
from .attack import (AttackScenario, MeasurementBuffer, apply_tsa, resolve_strategy,
                     schedule)
from .errors import ConfigError
from .grid import GridModel, StateVector, default_five_machine, observe, step
from .lqr import LqrConfig, control, lqr_gain, solve_riccati
from .trust import (Detection, FilterBank, GainSchedule, SuspicionState, no_attacker_factor,
                    softmax_factor)

DEFAULT_THRESHOLDS = (0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99, 0.999)


@dataclass(frozen=True, eq=False)
class PhyConfig:
    """Physical-layer set-up: one satellite scene per PMU receiver."""

    scenes: tuple
    patterns: tuple = field(default_factory=phy_mod.default_patterns)
    model: phy_mod.SpoofPdfModel | None = None
    neutral: bool = False
    spoof_mode: str = "persistent"
    calibration_epochs: int = 5000
    calibration_seed: int = 0

    def __post_init__(self):
        if self.spoof_mode not in ("persistent", "attacked_slots"):
            raise ConfigError("must be 'persistent' or 'attacked_slots'", "phy.spoof_mode")
        if self.calibration_epochs < 100:
            raise ConfigError("must be >= 100", "phy.calibration_epochs")
        object.__setattr__(self, "scenes", tuple(self.scenes))

    @classmethod
    def default(cls, n_pmus: int = 5, **kw) -> "PhyConfig":
        return cls(tuple(phy_mod.default_scene() for _ in range(n_pmus)), **kw)


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    grid: GridModel
    lqr: LqrConfig
    attack: AttackScenario
    phy: PhyConfig | None = None
    horizon: int = 500
    n_seeds: int = 200
    thresholds: tuple = DEFAULT_THRESHOLDS
    detect_threshold: float = 0.9
    no_attacker_prior_ratio: float = 0.0
    output_dir: str = "out"

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError("must be >= 1", "horizon")
        if self.n_seeds < 1:
            raise ConfigError("must be >= 1", "n_seeds")
        th = tuple(float(t) for t in self.thresholds)
        if not th or any(not 0 < t < 1 for t in th) or any(b <= a for a, b in zip(th, th[1:])):
            raise ConfigError("must be strictly increasing within (0, 1)", "thresholds")
        object.__setattr__(self, "thresholds", th)
        if not 0 < self.detect_threshold < 1:
            raise ConfigError("must lie in (0, 1)", "detect_threshold")
        if self.no_attacker_prior_ratio < 0:
            raise ConfigError("must be >= 0", "no_attacker_prior_ratio")
        self.attack.validate_for(self.grid.n_pmus)
        if self.lqr.q_weight.shape[0] != self.grid.n_states:
            raise ConfigError(f"must be {self.grid.n_states}x{self.grid.n_states}", "lqr.q_weight")
        if self.lqr.p_weight.shape[0] != self.grid.n_inputs:
            raise ConfigError(f"must be {self.grid.n_inputs}x{self.grid.n_inputs}", "lqr.p_weight")
        if self.phy is not None and len(self.phy.scenes) != self.grid.n_pmus:
            raise ConfigError(f"need one scene per PMU ({self.grid.n_pmus})", "phy.scenes")

    def with_(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)


def default_config(**overrides) -> ExperimentConfig:
    """Five PMUs, PMU 5 (index 4) attacked with a constant 5-slot shift at rate 0.3."""
    grid = default_five_machine()
    cfg = ExperimentConfig(
        grid=grid,
        lqr=LqrConfig.identity(grid.n_states, grid.n_inputs),
        attack=AttackScenario(),
        phy=PhyConfig.default(grid.n_pmus),
    )
    return cfg.with_(**overrides) if overrides else cfg


@dataclass(eq=False)
class RunRecord:
    """Outcome of one seeded run.

    ``factor`` is the eta-free suspicion part per slot; ``pi`` multiplies in
    ``eta`` when the physical layer was enabled.  Row ``i`` is slot ``i + 1``.
    """

    seed: int
    target: int | None
    threshold: float
    factor: np.ndarray
    eta: np.ndarray | None
    attack_mask: np.ndarray
    innovations: np.ndarray | None = None

    @property
    def horizon(self) -> int:
        return self.factor.shape[0]

    @property
    def n_pmus(self) -> int:
        return self.factor.shape[1]

    def pi_for(self, mode: str | None = None) -> np.ndarray:
        """Suspicion matrix for ``mode`` ``"cross"`` (with eta) or ``"upper"`` (eta = 1)."""
        if mode is None:
            mode = "upper" if self.eta is None else "cross"
        if mode == "upper":
            return self.factor
        if mode == "cross":
            if self.eta is None:
                raise ValueError("run had no physical layer; cross-layer mode unavailable")
            return self.factor * self.eta
        raise ValueError(f"unknown mode {mode!r}")

    @property
    def pi(self) -> np.ndarray:
        return self.pi_for(None)

    def first_crossing(self, threshold: float | None = None, mode: str | None = None) -> Detection | None:
        th = self.threshold if threshold is None else threshold
        return first_crossing(self.pi_for(mode), th, self.target)

    @property
    def detection(self) -> Detection | None:
        return self.first_crossing()


def first_crossing(pi: np.ndarray, threshold: float, target: int | None) -> Detection | None:
    over = pi > threshold
    rows = np.flatnonzero(over.any(axis=1))
    if rows.size == 0:
        return None
    i = int(rows[0])
    pmu = int(np.argmax(np.where(over[i], pi[i], -np.inf)))
    return Detection(pmu, i + 1, pmu != target)


def seed_streams(seed: int, attack_seed: int = 0) -> dict[str, np.random.Generator]:
    root = np.random.SeedSequence(seed)
    proc, meas, cno = root.spawn(3)
    return {
        "process": np.random.default_rng(proc),
        "measurement": np.random.default_rng(meas),
        "cno": np.random.default_rng(cno),
        "attack": np.random.default_rng(np.random.SeedSequence([seed, attack_seed])),
    }


class Engine:
    """Prepared experiment: LQR gain, filter gain schedule and fitted phy model
    are computed once and shared by every run."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        grid = cfg.grid
        riccati = solve_riccati(grid.a_d, grid.b_d, cfg.lqr)
        self.riccati = riccati
        self.k_gain = lqr_gain(grid.a_d, grid.b_d, riccati, cfg.lqr.p_weight)
        self.gain_schedule = GainSchedule(grid, grid.w_cov)
        self.pdf_model = None
        self.calibration = None
        if cfg.phy is not None:
            if cfg.phy.model is not None:
                self.pdf_model = cfg.phy.model
            else:
                self.calibration = calibrate_phy(cfg.phy)
                self.pdf_model = self.calibration.model

    def _eta(self, seed_rng: np.random.Generator, mask: np.ndarray) -> np.ndarray:
        cfg, phy = self.cfg, self.cfg.phy
        h, m = cfg.horizon, cfg.grid.n_pmus
        target = cfg.attack.target if cfg.attack.active else None
        epochs = np.arange(1, h + 1)
        stats = np.empty((h, m))
        for n in range(m):
            scene = phy.scenes[n]
            if n != target:
                stats[:, n] = phy_mod.simulate_statistics(scene, phy.patterns, False, epochs, seed_rng)
            elif phy.spoof_mode == "persistent":
                stats[:, n] = phy_mod.simulate_statistics(scene, phy.patterns, True, epochs, seed_rng)
            else:
                genuine = phy_mod.simulate_statistics(scene, phy.patterns, False, epochs, seed_rng)
                spoofed = phy_mod.simulate_statistics(scene, phy.patterns, True, epochs, seed_rng)
                stats[:, n] = np.where(mask, spoofed, genuine)
        eta = np.asarray(phy_mod.eta(stats, self.pdf_model), dtype=float)
        if phy.neutral:
            for n in range(m):
                if n != target:
                    eta[:, n] = 0.5
        return eta

    def run(self, seed: int, keep_innovations: bool = False) -> RunRecord:
        cfg, grid = self.cfg, self.cfg.grid
        h, m = cfg.horizon, grid.n_pmus
        rngs = seed_streams(seed, cfg.attack.seed)
        mask = schedule(cfg.attack, h, rngs["attack"])
        scenario = resolve_strategy(cfg.attack, rngs["attack"])
        eta = self._eta(rngs["cno"], mask) if cfg.phy is not None else None

        buffer = MeasurementBuffer.for_scenario(scenario)
        bank = FilterBank(self.gain_schedule)
        ss = SuspicionState.initial(m, cfg.detect_threshold, cfg.no_attacker_prior_ratio)
        x = StateVector(np.zeros(grid.n_states), 0)
        u = np.zeros(grid.n_inputs)
        factor = np.empty((h, m))
        innovations = np.empty((h, m)) if keep_innovations else None
        ratio = cfg.no_attacker_prior_ratio
        for i in range(h):
            t = i + 1
            x = step(grid, x, u, rngs["process"])
            frame = observe(grid, x, rngs["measurement"])
            buffer.push(t, frame)
            delivered = apply_tsa(buffer, frame, scenario, t, mask[i], rngs["attack"])
            loglik, innov = bank.step(delivered.values, u)
            log_acc = ss.log_acc - loglik
            fac = softmax_factor(log_acc) if ratio == 0 else no_attacker_factor(log_acc, ratio)
            ss = ss._next(log_acc, fac, 1.0 if eta is None else eta[i])
            factor[i] = fac
            if innovations is not None:
                innovations[i] = innov / np.sqrt(np.diag(self.gain_schedule.innovation_cov(i)))
            u = control(self.k_gain, bank.full_estimate)
        target = cfg.attack.target if cfg.attack.active else None
        return RunRecord(seed, target, cfg.detect_threshold, factor, eta, mask, innovations)


def calibrate_phy(phy: PhyConfig) -> phy_mod.Calibration:
    """Fit the statistic laws on the first PMU's scene with a fixed calibration seed."""
    rng = np.random.default_rng(phy.calibration_seed)
    return phy_mod.calibrate(phy.scenes[0], phy.patterns, phy.calibration_epochs, rng)


def run_scenario(cfg: ExperimentConfig, seed: int) -> RunRecord:
    return Engine(cfg).run(seed)


_WORKER_ENGINE: Engine | None = None


def _worker_init(cfg):
    global _WORKER_ENGINE
    _WORKER_ENGINE = Engine(cfg)


def _worker_run(seed):
    return _WORKER_ENGINE.run(seed)


def monte_carlo(cfg: ExperimentConfig, seeds: Iterable[int] | int | None = None,
                workers: int = 1, engine: Engine | None = None) -> list[RunRecord]:
    """Run every seed; results come back in seed order regardless of ``workers``."""
    if seeds is None:
        seeds = cfg.n_seeds
    seeds = list(range(seeds)) if isinstance(seeds, int) else list(seeds)
    if workers <= 1:
        eng = engine or Engine(cfg)
        return [eng.run(s) for s in seeds]
    with ProcessPoolExecutor(max_workers=workers, initializer=_worker_init,
                             initargs=(cfg,)) as pool:
        return list(pool.map(_worker_run, seeds, chunksize=max(1, len(seeds) // (4 * workers))))


# ---------------------------------------------------------------------------
# analysis


def identification_delays(records: Sequence[RunRecord], threshold: float | None = None,
                          mode: str | None = None) -> np.ndarray:
    """Delay per run; ``inf`` when the target was never (or not first) identified."""
    out = np.full(len(records), np.inf)
    for i, rec in enumerate(records):
        det = rec.first_crossing(threshold, mode)
        if det is not None and not det.false_alarm:
            out[i] = det.slot
    return out


def delay_cdf(records: Sequence[RunRecord], threshold: float | None = None,
              mode: str | None = None) -> list[tuple[int, float]]:
    """Empirical CDF of identification delays as ``(delay, fraction)`` steps.

    Undetected runs and false alarms count as infinite delay, so the curve can
    plateau below 1.
    """
    if not records:
        raise ValueError("need at least one record")
    delays = identification_delays(records, threshold, mode)
    finite = np.sort(delays[np.isfinite(delays)])
    n = len(records)
    rows = []
    for d in np.unique(finite):
        rows.append((int(d), float(np.searchsorted(finite, d, side="right") / n)))
    return rows


def cdf_value(rows: Sequence[tuple[int, float]], delay: float) -> float:
    val = 0.0
    for d, f in rows:
        if d <= delay:
            val = f
        else:
            break
    return val


def delay_fa_from_records(records: Sequence[RunRecord], thresholds: Sequence[float],
                          mode: str | None = None) -> list[tuple[float, float, float]]:
    """``(threshold, mean delay, false-alarm rate)`` per threshold.

    Mean delay averages over runs whose first crossing is the target (``nan``
    when there are none); the false-alarm rate is the fraction of runs whose
    first crossing is any other PMU.
    """
    rows = []
    for th in thresholds:
        delays, fa = [], 0
        for rec in records:
            det = rec.first_crossing(th, mode)
            if det is None:
                continue
            if det.false_alarm:
                fa += 1
            else:
                delays.append(det.slot)
        mean = float(np.mean(delays)) if delays else math.nan
        rows.append((float(th), mean, fa / len(records)))
    return rows


def delay_fa_roc(cfg: ExperimentConfig, thresholds: Sequence[float] | None = None,
                 n_seeds: int | None = None, mode: str | None = None,
                 workers: int = 1) -> list[tuple[float, float, float]]:
    thresholds = cfg.thresholds if thresholds is None else thresholds
    records = monte_carlo(cfg, n_seeds if n_seeds is not None else cfg.n_seeds, workers)
    return delay_fa_from_records(records, thresholds, mode)


def interpolate_fa(rows: Sequence[tuple[float, float, float]], delay: float) -> float | None:
    """False-alarm rate of a delay/false-alarm curve at ``delay`` (``None`` outside its range)."""
    pts = sorted((d, fa) for _, d, fa in rows if math.isfinite(d))
    if not pts or delay < pts[0][0] or delay > pts[-1][0]:
        return None
    ds = np.array([p[0] for p in pts])
    fas = np.array([p[1] for p in pts])
    # several thresholds may share a mean delay; take the most favourable rate
    uniq = np.unique(ds)
    best = np.array([fas[ds == d].min() for d in uniq])
    return float(np.interp(delay, uniq, best))
