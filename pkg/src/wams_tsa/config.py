"""YAML/JSON configuration loading.

Every section is optional; missing keys fall back to the defaults of
:func:`wams_tsa.experiment.default_config`.  PMU numbers in files are 1-based
(``attack.target: 5`` is the fifth PMU).  Unknown keys are rejected so typos
surface as a :class:`ConfigError` naming the offending path.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

from . import phy as phy_mod
from .attack import AttackScenario, ConstantShift, RandomShift
from .errors import ConfigError
from .experiment import DEFAULT_THRESHOLDS, ExperimentConfig, PhyConfig
from .grid import GridModel, default_five_machine, discretize
from .lqr import LqrConfig

_TOP_KEYS = {"grid", "lqr", "attack", "phy", "horizon", "n_seeds", "thresholds",
             "detect_threshold", "no_attacker_prior_ratio", "output_dir"}
_GRID_PRESET_KEYS = {"preset", "dt", "inertia", "damping", "stiffness", "process_var",
                     "load_var", "meas_var"}
_GRID_EXPLICIT_KEYS = {"a_cont", "b_cont", "a_d", "b_d", "c_obs", "w_cov", "v_var", "dt",
                       "discretize_sign"}
_LQR_KEYS = {"q_weight", "p_weight", "beta", "riccati_tol", "riccati_max_iter"}
_ATTACK_KEYS = {"target", "strategy", "k", "max_k", "per_slot", "frequency", "seed"}
_PHY_KEYS = {"enabled", "scene", "scenes", "patch_csv", "monopole_csv", "model", "neutral",
             "spoof_mode", "calibration_epochs", "calibration_seed", "baseline_cno",
             "cno_noise_std"}


def _check_keys(section: Mapping, allowed: set, prefix: str):
    if not isinstance(section, Mapping):
        raise ConfigError("must be a mapping", prefix or "<root>")
    for key in section:
        if key not in allowed:
            path = f"{prefix}.{key}" if prefix else str(key)
            raise ConfigError("unknown key", path)


def _num(value, path: str, kind=float):
    if isinstance(value, bool):
        raise ConfigError(f"expected {kind.__name__}, got bool", path)
    try:
        out = kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"expected {kind.__name__}, got {value!r}", path) from None
    if kind is int and out != value:
        raise ConfigError(f"expected an integer, got {value!r}", path)
    return out


def _matrix(value, path: str, n: int | None = None) -> np.ndarray:
    """Nested list, scalar (times identity of size ``n``) or ``"identity"``."""
    if isinstance(value, str):
        if value != "identity" or n is None:
            raise ConfigError(f"unrecognized matrix literal {value!r}", path)
        return np.eye(n)
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError("not a numeric matrix", path) from None
    if arr.ndim == 0:
        if n is None:
            raise ConfigError("scalar shorthand needs a known dimension", path)
        return float(arr) * np.eye(n)
    if arr.ndim == 1 and n is not None and arr.shape[0] == n:
        return np.diag(arr)
    if arr.ndim != 2:
        raise ConfigError(f"expected a 2-D matrix, got {arr.ndim}-D", path)
    return arr


def _rewrap(exc: ConfigError, prefix: str) -> ConfigError:
    path = exc.path or ""
    full = path if path.startswith(prefix + ".") else f"{prefix}.{path}" if path else prefix
    return ConfigError(exc.msg, full)


def build_grid(section: Mapping | None) -> GridModel:
    section = dict(section or {})
    if any(k in section for k in ("a_cont", "a_d")):
        _check_keys(section, _GRID_EXPLICIT_KEYS, "grid")
        return _explicit_grid(section)
    _check_keys(section, _GRID_PRESET_KEYS, "grid")
    preset = section.pop("preset", "five_machine")
    if preset != "five_machine":
        raise ConfigError(f"unknown preset {preset!r}", "grid.preset")
    kwargs = {k: _num(v, f"grid.{k}") for k, v in section.items()}
    try:
        return default_five_machine(**kwargs)
    except ConfigError as exc:
        raise _rewrap(exc, "grid") from None


def _explicit_grid(section: Mapping) -> GridModel:
    if "a_cont" in section and "a_d" in section:
        raise ConfigError("give either a_cont or a_d, not both", "grid.a_d")
    dt = _num(section.get("dt", 0.02), "grid.dt")
    if "a_cont" in section:
        a = _matrix(section["a_cont"], "grid.a_cont")
        n = a.shape[0]
        b = _matrix(section.get("b_cont", "identity"), "grid.b_cont", n)
        try:
            a_d, b_d = discretize(a, b, dt, section.get("discretize_sign", "minus"))
        except ConfigError as exc:
            raise _rewrap(exc, "grid") from None
    else:
        a_d = _matrix(section["a_d"], "grid.a_d")
        n = a_d.shape[0]
        b_d = _matrix(section.get("b_d", "identity"), "grid.b_d", n)
    c = _matrix(section.get("c_obs", "identity"), "grid.c_obs", n)
    w = _matrix(section.get("w_cov", 1e-4), "grid.w_cov", n)
    v_raw = section.get("v_var", 1e-3)
    v = np.array(v_raw, dtype=float)
    if v.ndim == 0:
        v = np.full(c.shape[0], float(v))
    try:
        return GridModel(a_d, b_d, c, w, v, dt)
    except ConfigError as exc:
        raise _rewrap(exc, "grid") from None


def build_lqr(section: Mapping | None, n_states: int, n_inputs: int) -> LqrConfig:
    section = dict(section or {})
    _check_keys(section, _LQR_KEYS, "lqr")
    q = _matrix(section.get("q_weight", "identity"), "lqr.q_weight", n_states)
    p = _matrix(section.get("p_weight", "identity"), "lqr.p_weight", n_inputs)
    kw = {}
    if "beta" in section:
        kw["beta"] = _num(section["beta"], "lqr.beta")
    if "riccati_tol" in section:
        kw["riccati_tol"] = _num(section["riccati_tol"], "lqr.riccati_tol")
    if "riccati_max_iter" in section:
        kw["riccati_max_iter"] = _num(section["riccati_max_iter"], "lqr.riccati_max_iter", int)
    try:
        return LqrConfig(q, p, **kw)
    except ConfigError as exc:
        raise _rewrap(exc, "lqr") from None


def build_attack(section: Mapping | None) -> AttackScenario:
    section = dict(section or {})
    _check_keys(section, _ATTACK_KEYS, "attack")
    target = section.get("target", 5)
    if target is not None:
        target = _num(target, "attack.target", int)
        if target < 1:
            raise ConfigError("PMU numbers start at 1", "attack.target")
        target -= 1
    kind = section.get("strategy", "constant")
    if kind == "constant":
        if "max_k" in section or "per_slot" in section:
            raise ConfigError("only valid with strategy 'random'", "attack.max_k"
                              if "max_k" in section else "attack.per_slot")
        strategy = ConstantShift(_num(section.get("k", 5), "attack.k", int))
    elif kind == "random":
        if "k" in section:
            raise ConfigError("only valid with strategy 'constant'", "attack.k")
        per_slot = section.get("per_slot", True)
        if not isinstance(per_slot, bool):
            raise ConfigError("expected true or false", "attack.per_slot")
        strategy = RandomShift(_num(section.get("max_k", 10), "attack.max_k", int), per_slot)
    else:
        raise ConfigError(f"must be 'constant' or 'random', got {kind!r}", "attack.strategy")
    return AttackScenario(
        target, strategy,
        _num(section.get("frequency", 0.3), "attack.frequency"),
        _num(section.get("seed", 0), "attack.seed", int),
    )


def _scene(entry, path: str, section: Mapping) -> phy_mod.SatelliteScene:
    overrides = {}
    for key in ("baseline_cno", "cno_noise_std"):
        if key in section:
            overrides[key] = _num(section[key], f"phy.{key}")
    try:
        return phy_mod.preset_scene(str(entry), **overrides)
    except ValueError as exc:
        raise ConfigError(str(exc), path) from None


def _pattern(path_value, path: str, fallback):
    if path_value is None:
        return fallback
    try:
        return phy_mod.AntennaPattern.from_csv(path_value)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc), path) from None


def build_phy(section: Mapping | None, n_pmus: int, base_dir: Path | None = None) -> PhyConfig | None:
    section = dict(section or {})
    _check_keys(section, _PHY_KEYS, "phy")
    enabled = section.get("enabled", True)
    if not isinstance(enabled, bool):
        raise ConfigError("expected true or false", "phy.enabled")
    if not enabled:
        return None
    if "scene" in section and "scenes" in section:
        raise ConfigError("give either scene or scenes, not both", "phy.scenes")
    if "scenes" in section:
        specs = section["scenes"]
        if not isinstance(specs, list) or len(specs) != n_pmus:
            raise ConfigError(f"need a list of {n_pmus} scene names", "phy.scenes")
        scenes = [_scene(s, f"phy.scenes[{i}]", section) for i, s in enumerate(specs)]
    else:
        one = _scene(section.get("scene", "b"), "phy.scene", section)
        scenes = [one] * n_pmus

    def resolve(p):
        if p is None:
            return None
        p = Path(p)
        return p if p.is_absolute() or base_dir is None else base_dir / p

    patch_default, mono_default = phy_mod.default_patterns()
    patterns = (
        _pattern(resolve(section.get("patch_csv")), "phy.patch_csv", patch_default),
        _pattern(resolve(section.get("monopole_csv")), "phy.monopole_csv", mono_default),
    )
    model = None
    if section.get("model") is not None:
        try:
            model = phy_mod.SpoofPdfModel.load(resolve(section["model"]))
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot load model: {exc}", "phy.model") from None
    neutral = section.get("neutral", False)
    if not isinstance(neutral, bool):
        raise ConfigError("expected true or false", "phy.neutral")
    try:
        return PhyConfig(
            tuple(scenes), patterns, model, neutral,
            section.get("spoof_mode", "persistent"),
            _num(section.get("calibration_epochs", 5000), "phy.calibration_epochs", int),
            _num(section.get("calibration_seed", 0), "phy.calibration_seed", int),
        )
    except ConfigError as exc:
        raise _rewrap(exc, "phy") from None


def config_from_mapping(data: Mapping[str, Any] | None, base_dir: Path | None = None) -> ExperimentConfig:
    data = {} if data is None else data
    _check_keys(data, _TOP_KEYS, "")
    grid = build_grid(data.get("grid"))
    lqr = build_lqr(data.get("lqr"), grid.n_states, grid.n_inputs)
    attack = build_attack(data.get("attack"))
    if attack.target is not None and attack.target >= grid.n_pmus:
        raise ConfigError(f"must be in 1..{grid.n_pmus}", "attack.target")
    phy = build_phy(data.get("phy"), grid.n_pmus, base_dir)
    thresholds = data.get("thresholds", list(DEFAULT_THRESHOLDS))
    if not isinstance(thresholds, list):
        raise ConfigError("expected a list", "thresholds")
    thresholds = tuple(_num(t, f"thresholds[{i}]") for i, t in enumerate(thresholds))
    return ExperimentConfig(
        grid=grid,
        lqr=lqr,
        attack=attack,
        phy=phy,
        horizon=_num(data.get("horizon", 500), "horizon", int),
        n_seeds=_num(data.get("n_seeds", 200), "n_seeds", int),
        thresholds=thresholds,
        detect_threshold=_num(data.get("detect_threshold", 0.9), "detect_threshold"),
        no_attacker_prior_ratio=_num(data.get("no_attacker_prior_ratio", 0.0),
                                     "no_attacker_prior_ratio"),
        output_dir=str(data.get("output_dir", "out")),
    )


def load_config(path: str | Path) -> ExperimentConfig:
    """Read a ``.yaml``/``.yml``/``.json`` file into an :class:`ExperimentConfig`."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}", "<file>") from None
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(text)
        else:
            data = yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"parse failure: {exc}", "<file>") from None
    return config_from_mapping(data, path.parent)
