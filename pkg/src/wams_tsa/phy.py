"""Two-antenna C/No spoofing detector.

A patch and a monopole antenna feed two receivers.  The dB difference of
their C/No readings for a satellite depends on its elevation, so genuine
signals (many directions) produce a spread of power ratios while a single
spoofer (one direction) produces nearly identical ratios.  The test
statistic is the sample standard deviation of the ratios at one epoch.

Genuine statistics are modelled with a noncentral chi law and spoofed ones
with a chi law; :func:`eta` turns the two densities into the prior handed to
the trust-fusion layer.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import integrate, optimize, special, stats

from .errors import ConfigError, FitError, InsufficientDataError

# ---------------------------------------------------------------------------
# antenna patterns


@dataclass(frozen=True, eq=False)
class AntennaPattern:
    """Elevation-only gain table (degrees, dB), linearly interpolated."""

    elevations: np.ndarray
    gains_db: np.ndarray
    label: str = "custom"

    def __post_init__(self):
        el = np.array(self.elevations, dtype=float).reshape(-1)
        g = np.array(self.gains_db, dtype=float).reshape(-1)
        if el.shape != g.shape or el.size < 2:
            raise ConfigError("need matching elevation and gain columns with >= 2 rows", "pattern")
        if np.any(np.diff(el) <= 0):
            raise ConfigError("elevations must be strictly increasing", "pattern")
        if el[0] != 0.0 or el[-1] != 90.0:
            raise ConfigError("table must cover 0 and 90 degrees", "pattern")
        for name, arr in (("elevations", el), ("gains_db", g)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_csv(cls, path: str | Path, label: str = "custom") -> "AntennaPattern":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        try:
            el = [float(r["elevation_deg"]) for r in rows]
            g = [float(r["gain_db"]) for r in rows]
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad pattern CSV {path}: {exc}", "pattern") from exc
        return cls(el, g, label)

    def to_csv(self, path: str | Path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["elevation_deg", "gain_db"])
            for e, g in zip(self.elevations, self.gains_db):
                w.writerow([repr(float(e)), repr(float(g))])


_TABLE_ELEV = np.arange(0.0, 91.0, 10.0)


def default_patch() -> AntennaPattern:
    """Patch: weak at the horizon, peak gain at zenith."""
    gains = [-12.0, -8.0, -5.0, -2.5, -0.5, 1.5, 3.0, 4.0, 4.7, 5.0]
    return AntennaPattern(_TABLE_ELEV, gains, "patch")


def default_monopole() -> AntennaPattern:
    """Monopole: good gain at low elevations, null at zenith."""
    gains = [0.0, 1.0, 1.5, 1.2, 0.0, -2.0, -5.0, -9.0, -14.0, -20.0]
    return AntennaPattern(_TABLE_ELEV, gains, "monopole")


def default_patterns() -> tuple[AntennaPattern, AntennaPattern]:
    return default_patch(), default_monopole()


def gain(pattern: AntennaPattern, elevation) -> np.ndarray | float:
    """Interpolated gain in dB; elevation must lie in [0, 90]."""
    el = np.asarray(elevation, dtype=float)
    if np.any(el < 0) or np.any(el > 90) or np.any(np.isnan(el)):
        raise ValueError(f"elevation outside [0, 90]: {elevation!r}")
    out = np.interp(el, pattern.elevations, pattern.gains_db)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# satellite scene


@dataclass(frozen=True, eq=False)
class SatelliteScene:
    """Satellite geometry and C/No noise seen by one receiver pair.

    Satellite elevations drift by ``drift_rate`` degrees per epoch, alternately
    rising and setting, and fold back into [0, 90].
    """

    satellites: np.ndarray  # (n_sat, 2): elevation, azimuth in degrees
    spoofer_direction: tuple[float, float] = (5.0, 200.0)
    baseline_cno: float = 45.0
    cno_noise_std: float = 1.0
    drift_rate: float = 0.001

    def __post_init__(self):
        sats = np.array(self.satellites, dtype=float).reshape(-1, 2)
        if sats.shape[0] < 1:
            raise ConfigError("need at least one satellite", "phy.scene.satellites")
        if np.any(sats[:, 0] < 0) or np.any(sats[:, 0] > 90):
            raise ConfigError("elevations must lie in [0, 90]", "phy.scene.satellites")
        el_s = float(self.spoofer_direction[0])
        if not 0 <= el_s <= 90:
            raise ConfigError("elevation must lie in [0, 90]", "phy.scene.spoofer_direction")
        if self.cno_noise_std < 0:
            raise ConfigError("must be >= 0", "phy.scene.cno_noise_std")
        sats.setflags(write=False)
        object.__setattr__(self, "satellites", sats)
        object.__setattr__(self, "spoofer_direction", (el_s, float(self.spoofer_direction[1])))

    @property
    def n_satellites(self) -> int:
        return self.satellites.shape[0]

    def elevations_at(self, epochs) -> np.ndarray:
        """Elevations with shape ``epochs.shape + (n_sat,)``."""
        epochs = np.asarray(epochs, dtype=float)
        direction = np.where(np.arange(self.n_satellites) % 2 == 0, 1.0, -1.0)
        raw = self.satellites[:, 0] + direction * self.drift_rate * epochs[..., None]
        folded = np.mod(raw, 180.0)
        return np.where(folded > 90.0, 180.0 - folded, folded)


def preset_scene(name: str = "b", **overrides) -> SatelliteScene:
    """Eight-satellite presets for two times of day.

    ``a``: satellites bunched at mid elevations (weaker separation).
    ``b``: satellites spread from near the horizon to near zenith.
    """
    if name == "a":
        el = [18.0, 22.0, 26.0, 30.0, 35.0, 40.0, 47.0, 56.0]
    elif name == "b":
        el = [12.0, 25.0, 33.0, 41.0, 52.0, 63.0, 74.0, 86.0]
    else:
        raise ConfigError(f"unknown preset {name!r}; use 'a' or 'b'", "phy.scene.preset")
    az = [15.0, 70.0, 110.0, 160.0, 205.0, 250.0, 300.0, 340.0]
    return SatelliteScene(np.column_stack([el, az]), **overrides)


def default_scene(**overrides) -> SatelliteScene:
    return preset_scene("b", **overrides)


def _scene_gains(scene, patterns, spoofed, epochs):
    patch, mono = patterns
    epochs = np.asarray(epochs, dtype=float)
    if spoofed:
        el = np.full(epochs.shape + (scene.n_satellites,), scene.spoofer_direction[0])
    else:
        el = scene.elevations_at(epochs)
    return np.stack([gain(patch, el), gain(mono, el)], axis=-1)


def simulate_cno(scene: SatelliteScene, patterns, spoofed: bool, epoch: int,
                 rng: np.random.Generator) -> np.ndarray:
    """C/No in dB-Hz for each satellite and antenna, shape ``(n_sat, 2)``.

    Under spoofing every satellite arrives from the spoofer's direction.
    """
    g = _scene_gains(scene, patterns, spoofed, epoch)
    noise = scene.cno_noise_std * rng.standard_normal((scene.n_satellites, 2))
    return scene.baseline_cno + g + noise


def power_ratio(cno1, cno2):
    return np.subtract(cno1, cno2)


def test_statistic(ratios) -> float:
    """Sample standard deviation (divisor n-1) of the per-satellite power ratios."""
    r = np.asarray(ratios, dtype=float).reshape(-1)
    if r.size < 2:
        raise InsufficientDataError(f"need >= 2 satellites, got {r.size}")
    return float(np.std(r, ddof=1))


test_statistic.__test__ = False  # keep pytest from collecting this by name


def simulate_statistics(scene: SatelliteScene, patterns, spoofed: bool, epochs,
                        rng: np.random.Generator) -> np.ndarray:
    """Test statistic for each epoch in ``epochs``.

    Draws noise in the same order as successive :func:`simulate_cno` calls.
    """
    epochs = np.atleast_1d(np.asarray(epochs))
    if scene.n_satellites < 2:
        raise InsufficientDataError("need >= 2 satellites")
    g = _scene_gains(scene, patterns, spoofed, epochs)
    noise = scene.cno_noise_std * rng.standard_normal(epochs.shape + (scene.n_satellites, 2))
    cno = scene.baseline_cno + g + noise
    ratios = power_ratio(cno[..., 0], cno[..., 1])
    return np.std(ratios, axis=-1, ddof=1)


# ---------------------------------------------------------------------------
# chi / noncentral chi laws


@dataclass(frozen=True)
class ChiDist:
    dof: float
    scale: float

    def logpdf(self, x):
        return stats.chi.logpdf(x, self.dof, scale=self.scale)

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def cdf(self, x):
        return stats.chi.cdf(x, self.dof, scale=self.scale)

    def mean(self) -> float:
        return float(stats.chi.mean(self.dof, scale=self.scale))

    def rvs(self, size, rng):
        return stats.chi.rvs(self.dof, scale=self.scale, size=size, random_state=rng)


@dataclass(frozen=True)
class NoncentralChiDist:
    """Law of ``scale * sqrt(Y)`` with ``Y ~ ncx2(dof, nc**2)``."""

    dof: float
    nc: float
    scale: float

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        z = x / self.scale
        with np.errstate(divide="ignore", invalid="ignore"):
            out = (math.log(2.0) + np.log(z) - math.log(self.scale)
                   + stats.ncx2.logpdf(z * z, self.dof, self.nc ** 2))
        out = np.where(z > 0, out, -np.inf)
        return float(out) if out.ndim == 0 else out

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        z = np.clip(x / self.scale, 0.0, None)
        out = stats.ncx2.cdf(z * z, self.dof, self.nc ** 2)
        return float(out) if np.ndim(out) == 0 else out

    def mean(self) -> float:
        hi = self.scale * (self.nc + 10.0 * math.sqrt(self.dof + 1.0) + 10.0)
        val, _ = integrate.quad(lambda s: s * self.pdf(s), 0.0, hi, limit=200)
        return float(val)

    def rvs(self, size, rng):
        y = stats.ncx2.rvs(self.dof, self.nc ** 2, size=size, random_state=rng)
        return self.scale * np.sqrt(y)


def _integrated_mass(dist, upper: float) -> float:
    val, _ = integrate.quad(lambda s: dist.pdf(s), 0.0, upper, limit=400,
                            points=[dist.scale * max(getattr(dist, "nc", 0.0), 1.0)])
    return float(val)


@dataclass(frozen=True)
class SpoofPdfModel:
    """H0 (genuine) noncentral chi and H1 (spoofed) chi laws of the statistic."""

    h0: NoncentralChiDist
    h1: ChiDist

    def __post_init__(self):
        for name, v in (("h0.dof", self.h0.dof), ("h0.nc", self.h0.nc), ("h0.scale", self.h0.scale),
                        ("h1.dof", self.h1.dof), ("h1.scale", self.h1.scale)):
            if not (v > 0 and math.isfinite(v)):
                raise ConfigError("must be finite and > 0", name)

    def density_mass(self) -> tuple[float, float]:
        """Integrated density of (H0, H1) over ``[0, (nc + 20) * scale]``."""
        return (_integrated_mass(self.h0, (self.h0.nc + 20.0) * self.h0.scale),
                _integrated_mass(self.h1, 20.0 * self.h1.scale))

    def check_normalized(self, tol: float = 1e-3):
        m0, m1 = self.density_mass()
        if abs(m0 - 1) > tol or abs(m1 - 1) > tol:
            raise FitError(f"densities integrate to {m0:.6f} (H0) and {m1:.6f} (H1)")

    def logpdf_h0(self, x):
        return self.h0.logpdf(x)

    def logpdf_h1(self, x):
        return self.h1.logpdf(x)

    def swapped(self) -> "_Swapped":
        return _Swapped(self)

    def to_dict(self) -> dict:
        return {"format": "wams-tsa-spoof-pdf/1",
                "h0": {"family": "noncentral_chi", **asdict(self.h0)},
                "h1": {"family": "chi", **asdict(self.h1)}}

    @classmethod
    def from_dict(cls, d: dict) -> "SpoofPdfModel":
        try:
            h0 = NoncentralChiDist(float(d["h0"]["dof"]), float(d["h0"]["nc"]), float(d["h0"]["scale"]))
            h1 = ChiDist(float(d["h1"]["dof"]), float(d["h1"]["scale"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed model: {exc}", "phy.model") from exc
        return cls(h0, h1)

    def save(self, path: str | Path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "SpoofPdfModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


class _Swapped:
    """Same densities with the hypothesis labels exchanged."""

    def __init__(self, model: SpoofPdfModel):
        self._m = model

    def logpdf_h0(self, x):
        return self._m.logpdf_h1(x)

    def logpdf_h1(self, x):
        return self._m.logpdf_h0(x)


# ---------------------------------------------------------------------------
# fitting

_MIN_SAMPLES = 100


def _check_samples(samples, name) -> np.ndarray:
    s = np.asarray(samples, dtype=float).reshape(-1)
    if s.size < _MIN_SAMPLES:
        raise FitError(f"{name}: need >= {_MIN_SAMPLES} samples, got {s.size}")
    if np.any(~np.isfinite(s)) or np.any(s < 0):
        raise FitError(f"{name}: samples must be finite and >= 0")
    if np.var(s) <= 0:
        raise FitError(f"{name}: samples have zero variance")
    return s


def _chi_mean_factor(k):
    # E[chi_k] = sqrt(2) Gamma((k+1)/2) / Gamma(k/2)
    return math.sqrt(2.0) * math.exp(special.gammaln((k + 1) / 2) - special.gammaln(k / 2))


def chi_moments_fit(samples) -> ChiDist:
    """Method-of-moments chi fit: solve the coefficient of variation for dof."""
    s = np.asarray(samples, dtype=float)
    mean, var = s.mean(), s.var()
    cv2 = var / mean ** 2

    def f(k):
        mu = _chi_mean_factor(k)
        return k / mu ** 2 - 1 - cv2

    lo, hi = 0.05, 1e5
    if f(lo) * f(hi) > 0:
        k = lo if abs(f(lo)) < abs(f(hi)) else hi
    else:
        k = optimize.brentq(f, lo, hi)
    return ChiDist(float(k), float(mean / _chi_mean_factor(k)))


def ncchi_moments_fit(samples, dof: float) -> NoncentralChiDist:
    """Method of moments on the squared statistic with dof held fixed.

    With ``Y = (S/scale)^2 ~ ncx2(k, L)``: ``E[S^2] = c (k + L)`` and
    ``Var[S^2] = 2 c^2 (k + 2L)`` where ``c = scale^2``.
    """
    s2 = np.asarray(samples, dtype=float) ** 2
    m, v = s2.mean(), s2.var()
    rho = v / m ** 2
    k = float(dof)
    disc = 16.0 - 8.0 * rho * k
    if disc <= 0:
        lam2 = 0.0
    else:
        lam2 = max(((4.0 - 2.0 * rho * k) + math.sqrt(disc)) / (2.0 * rho), 0.0)
    c = m / (k + lam2)
    return NoncentralChiDist(k, max(math.sqrt(lam2), 1e-3), math.sqrt(c))


def _refine(negll, x0, bounds):
    res = optimize.minimize(negll, x0, method="L-BFGS-B", bounds=bounds)
    if not np.all(np.isfinite(res.x)):
        raise FitError("likelihood refinement diverged")
    # keep the start point if the optimizer made things worse
    return res.x if res.fun <= negll(np.asarray(x0)) else np.asarray(x0)


def fit_chi(samples, dof_hint: float | None = None, dof_freedom: float = 2.0) -> ChiDist:
    s = _check_samples(samples, "h1")
    start = chi_moments_fit(s)
    if dof_hint is not None:
        k_lo, k_hi = max(0.5, dof_hint - dof_freedom), dof_hint + dof_freedom
    else:
        k_lo, k_hi = max(0.5, start.dof / 4), start.dof * 4 + 1
    k0 = float(np.clip(start.dof, k_lo, k_hi))
    x0 = np.array([k0, start.scale])

    def negll(p):
        val = -np.sum(stats.chi.logpdf(s, p[0], scale=p[1]))
        return val if np.isfinite(val) else 1e300

    k, scale = _refine(negll, x0, [(k_lo, k_hi), (start.scale / 20, start.scale * 20)])
    return ChiDist(float(k), float(scale))


def fit_noncentral_chi(samples, dof_hint: float, dof_freedom: float = 2.0) -> NoncentralChiDist:
    s = _check_samples(samples, "h0")
    start = ncchi_moments_fit(s, dof_hint)
    k_lo, k_hi = max(0.5, dof_hint - dof_freedom), dof_hint + dof_freedom
    x0 = np.array([start.dof, start.nc, start.scale])

    def negll(p):
        val = -np.sum(NoncentralChiDist(p[0], p[1], p[2]).logpdf(s))
        return val if np.isfinite(val) else 1e300

    bounds = [(k_lo, k_hi), (1e-3, max(4 * start.nc, 1.0) + 20), (start.scale / 20, start.scale * 20)]
    k, nc, scale = _refine(negll, x0, bounds)
    return NoncentralChiDist(float(k), float(nc), float(scale))


def fit_pdfs(h0_samples, h1_samples, dof_hint: float | None = None,
             dof_freedom: float = 2.0) -> SpoofPdfModel:
    """Fit the genuine (noncentral chi) and spoofed (chi) statistic laws.

    ``dof_hint`` is normally ``n_satellites - 1``; without it the chi fit's dof
    seeds the noncentral fit, since both come from the same ratio count.
    """
    h1 = fit_chi(h1_samples, dof_hint, dof_freedom)
    hint0 = dof_hint if dof_hint is not None else h1.dof
    h0 = fit_noncentral_chi(h0_samples, hint0, dof_freedom)
    model = SpoofPdfModel(h0, h1)
    model.check_normalized()
    return model


# ---------------------------------------------------------------------------
# decisions


def _log_densities(stat, model):
    stat = np.asarray(stat, dtype=float)
    if np.any(stat < 0):
        raise ValueError("statistic must be >= 0")
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.asarray(model.logpdf_h0(stat), float), np.asarray(model.logpdf_h1(stat), float)


def likelihood_ratio(stat, model) -> np.ndarray | float:
    """``pdf_h1(stat) / pdf_h0(stat)``, evaluated in the log domain.

    Returns ``inf`` when only the H0 density underflows and ``nan`` when both
    do (indeterminate; :func:`eta` falls back to 0.5 there).
    """
    lp0, lp1 = _log_densities(stat, model)
    with np.errstate(invalid="ignore", over="ignore"):
        out = np.exp(lp1 - lp0)
    out = np.where(np.isneginf(lp0) & np.isneginf(lp1), np.nan, out)
    return float(out) if out.ndim == 0 else out


def eta(stat, model) -> np.ndarray | float:
    """Prior probability of spoofing: ``pdf_h1 / (pdf_h1 + pdf_h0)``; 0.5 if both vanish."""
    lp0, lp1 = _log_densities(stat, model)
    with np.errstate(invalid="ignore"):
        out = special.expit(lp1 - lp0)
    out = np.where(np.isneginf(lp0) & np.isneginf(lp1), 0.5, out)
    return float(out) if out.ndim == 0 else out


def crossing_point(model: SpoofPdfModel) -> float:
    """Statistic value between the two modes where both densities are equal."""
    lo, hi = model.h1.mean(), model.h0.mean()

    def f(x):
        return float(model.logpdf_h1(x) - model.logpdf_h0(x))

    return float(optimize.brentq(f, lo, hi, xtol=1e-14, rtol=1e-14))


def roc_curve(source, thresholds) -> np.ndarray:
    """``(false_alarm_rate, detection_prob)`` per threshold, deciding "spoofed" when stat < tau.

    ``source`` is a :class:`SpoofPdfModel` (uses its CDFs) or a pair
    ``(h0_samples, h1_samples)`` (empirical rates).
    """
    tau = np.asarray(thresholds, dtype=float).reshape(-1)
    if tau.size < 2:
        raise ValueError("need >= 2 thresholds")
    if isinstance(source, SpoofPdfModel):
        fa = np.asarray(source.h0.cdf(tau), dtype=float)
        pd = np.asarray(source.h1.cdf(tau), dtype=float)
    else:
        h0, h1 = (np.sort(np.asarray(s, dtype=float)) for s in source)
        fa = np.searchsorted(h0, tau, side="left") / h0.size
        pd = np.searchsorted(h1, tau, side="left") / h1.size
    return np.column_stack([fa, pd])


def auc(roc) -> float:
    """Area under an ROC polyline, closed with the (0,0) and (1,1) corners."""
    pts = np.asarray(roc, dtype=float)
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]
    pts = np.vstack([[0.0, 0.0], pts, [1.0, 1.0]])
    return float(np.trapezoid(pts[:, 1], pts[:, 0]))


def default_thresholds(model_or_samples, n: int = 201) -> np.ndarray:
    if isinstance(model_or_samples, SpoofPdfModel):
        hi = max(model_or_samples.h0.scale * (model_or_samples.h0.nc + 8 * math.sqrt(model_or_samples.h0.dof)),
                 model_or_samples.h1.scale * 8 * math.sqrt(model_or_samples.h1.dof))
    else:
        hi = float(max(np.max(s) for s in model_or_samples)) * 1.05
    return np.append(np.linspace(0.0, hi, n), np.inf)


@dataclass
class Calibration:
    h0_samples: np.ndarray
    h1_samples: np.ndarray
    model: SpoofPdfModel
    thresholds: np.ndarray = field(default=None)

    def roc(self) -> np.ndarray:
        return roc_curve(self.model, self.thresholds)


def calibrate(scene: SatelliteScene, patterns, n_epochs: int, rng: np.random.Generator,
              dof_freedom: float = 2.0) -> Calibration:
    """Simulate genuine and spoofed epochs and fit the statistic laws to them."""
    epochs = np.arange(n_epochs)
    h0 = simulate_statistics(scene, patterns, False, epochs, rng)
    h1 = simulate_statistics(scene, patterns, True, epochs, rng)
    model = fit_pdfs(h0, h1, dof_hint=scene.n_satellites - 1, dof_freedom=dof_freedom)
    return Calibration(h0, h1, model, default_thresholds(model))


def write_roc_csv(path: str | Path, thresholds, roc):
    with open(path, "w", newline="") as fh:
        fh.write("# wams-tsa-csv/1 phy-roc\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["threshold", "fa_rate", "pd"])
        for t, (fa, pd) in zip(thresholds, roc):
            w.writerow([_fmt(t), _fmt(fa), _fmt(pd)])


def _fmt(x: float) -> str:
    return "inf" if math.isinf(x) else repr(float(x))


def sample_patterns(patch_db: Sequence[float], mono_db: Sequence[float],
                    elevations: Sequence[float] | None = None):
    el = _TABLE_ELEV if elevations is None else elevations
    return AntennaPattern(el, patch_db, "patch"), AntennaPattern(el, mono_db, "monopole")
