"""Discrete-time linear grid model: propagation, noisy PMU observation and the
default five-machine system."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError

#: Sign conventions accepted by :func:`discretize`. ``minus`` reproduces
#: ``a_d = I - dt * a_cont``; ``plus`` is forward Euler on ``x' = A x``.
DISCRETIZE_SIGNS = {"minus": -1.0, "plus": 1.0, -1: -1.0, 1: 1.0}


def _as_matrix(value, name: str) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise ConfigError(f"expected a 2-D matrix, got shape {arr.shape}", name)
    return arr


def _psd_factor(cov: np.ndarray) -> np.ndarray:
    """Return F with F @ F.T == cov for a symmetric PSD matrix (possibly singular)."""
    vals, vecs = np.linalg.eigh(cov)
    vals = np.clip(vals, 0.0, None)
    return vecs * np.sqrt(vals)


@dataclass(frozen=True, eq=False)
class GridModel:
    """Linear system ``x(t+1) = a_d x + b_d u + w``, ``y = c_obs x + v``.

    ``w ~ N(0, w_cov)`` and ``v_n ~ N(0, v_var[n])`` independently per PMU.
    Arrays are copied and frozen on construction.
    """

    a_d: np.ndarray
    b_d: np.ndarray
    c_obs: np.ndarray
    w_cov: np.ndarray
    v_var: np.ndarray
    dt: float

    def __post_init__(self):
        a_d = _as_matrix(self.a_d, "a_d")
        b_d = _as_matrix(self.b_d, "b_d")
        c_obs = _as_matrix(self.c_obs, "c_obs")
        w_cov = _as_matrix(self.w_cov, "w_cov")
        v_var = np.array(self.v_var, dtype=float).reshape(-1)
        n = a_d.shape[0]
        if a_d.shape != (n, n):
            raise ConfigError(f"must be square, got {a_d.shape}", "a_d")
        if b_d.shape[0] != n:
            raise ConfigError(f"needs {n} rows, got {b_d.shape[0]}", "b_d")
        if c_obs.shape[1] != n:
            raise ConfigError(f"needs {n} columns, got {c_obs.shape[1]}", "c_obs")
        if w_cov.shape != (n, n):
            raise ConfigError(f"must be {n}x{n}, got {w_cov.shape}", "w_cov")
        if not np.allclose(w_cov, w_cov.T, atol=1e-12):
            raise ConfigError("must be symmetric", "w_cov")
        if np.linalg.eigvalsh(w_cov).min() < -1e-10:
            raise ConfigError("must be positive semidefinite", "w_cov")
        if v_var.shape[0] != c_obs.shape[0]:
            raise ConfigError(
                f"needs {c_obs.shape[0]} entries (one per PMU), got {v_var.shape[0]}", "v_var"
            )
        if np.any(v_var <= 0):
            raise ConfigError("entries must be strictly positive", "v_var")
        if not float(self.dt) > 0:
            raise ConfigError("must be > 0", "dt")
        for name, arr in (("a_d", a_d), ("b_d", b_d), ("c_obs", c_obs), ("w_cov", w_cov), ("v_var", v_var)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "dt", float(self.dt))
        factor = _psd_factor(w_cov)
        factor.setflags(write=False)
        object.__setattr__(self, "_w_factor", factor)

    @property
    def n_states(self) -> int:
        return self.a_d.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.b_d.shape[1]

    @property
    def n_pmus(self) -> int:
        return self.c_obs.shape[0]

    @property
    def w_factor(self) -> np.ndarray:
        """Square-root factor of ``w_cov`` used to draw process noise."""
        return self._w_factor

    def replace(self, **changes) -> "GridModel":
        fields = dict(a_d=self.a_d, b_d=self.b_d, c_obs=self.c_obs, w_cov=self.w_cov,
                      v_var=self.v_var, dt=self.dt)
        fields.update(changes)
        return GridModel(**fields)


@dataclass(frozen=True, eq=False)
class StateVector:
    values: np.ndarray
    slot: int = 0

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.slot < 0:
            raise ValueError("slot must be >= 0")


@dataclass(frozen=True, eq=False)
class MeasurementFrame:
    """One reporting instant: a value and a claimed time stamp per PMU."""

    values: np.ndarray
    stamps: np.ndarray
    pmu_ids: np.ndarray | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        stamps = np.array(self.stamps, dtype=np.int64).reshape(-1)
        if stamps.shape != values.shape:
            raise ValueError("stamps and values must have equal length")
        pmu_ids = np.arange(values.shape[0]) if self.pmu_ids is None else np.asarray(self.pmu_ids)
        if not np.array_equal(pmu_ids, np.arange(values.shape[0])):
            raise ValueError("pmu_ids must list 0..M-1 in order")
        for name, arr in (("values", values), ("stamps", stamps), ("pmu_ids", pmu_ids)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_pmus(self) -> int:
        return self.values.shape[0]


def discretize(a_cont, b_cont, dt: float, sign: str | int = "minus"):
    """First-order discretization ``a_d = I + s*dt*a_cont``, ``b_d = dt*b_cont``.

    With the default ``sign="minus"`` the continuous matrix is taken with the
    convention ``x' = -A x`` so ``a_d = I - dt*A``.
    """
    a_cont = _as_matrix(a_cont, "a_cont")
    b_cont = _as_matrix(b_cont, "b_cont")
    if a_cont.shape[0] != a_cont.shape[1]:
        raise ConfigError(f"must be square, got {a_cont.shape}", "a_cont")
    if b_cont.shape[0] != a_cont.shape[0]:
        raise ConfigError(f"needs {a_cont.shape[0]} rows, got {b_cont.shape[0]}", "b_cont")
    if not dt > 0:
        raise ConfigError("must be > 0", "dt")
    if sign not in DISCRETIZE_SIGNS:
        raise ConfigError(f"unknown sign {sign!r}; use 'minus' or 'plus'", "discretize_sign")
    s = DISCRETIZE_SIGNS[sign]
    a_d = np.eye(a_cont.shape[0]) + s * dt * a_cont
    return a_d, dt * b_cont


def _check_len(vec: np.ndarray, n: int, what: str):
    if vec.shape != (n,):
        raise ValueError(f"{what}: expected length {n}, got shape {vec.shape}")


def step(model: GridModel, x: StateVector, u, rng: np.random.Generator) -> StateVector:
    """Propagate one slot: ``a_d x + b_d u + w``."""
    u = np.asarray(u, dtype=float).reshape(-1)
    _check_len(x.values, model.n_states, "state")
    _check_len(u, model.n_inputs, "input")
    w = model.w_factor @ rng.standard_normal(model.n_states)
    return StateVector(model.a_d @ x.values + model.b_d @ u + w, x.slot + 1)


def observe(model: GridModel, x: StateVector, rng: np.random.Generator) -> MeasurementFrame:
    """Noisy PMU readings of ``x`` with truthful stamps (all equal to ``x.slot``)."""
    _check_len(x.values, model.n_states, "state")
    v = np.sqrt(model.v_var) * rng.standard_normal(model.n_pmus)
    values = model.c_obs @ x.values + v
    return MeasurementFrame(values, np.full(model.n_pmus, x.slot))


def spectral_radius(mat) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(np.asarray(mat, dtype=float)))))


def _per_machine(value, n: int, name: str) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(value, dtype=float), (n,)).copy()
    if np.any(arr <= 0):
        raise ConfigError("must be > 0", name)
    return arr


def ring_stiffness(n: int, k: float) -> np.ndarray:
    """Symmetric coupling matrix for machines on a ring, each tied to two neighbours."""
    stiff = np.zeros((n, n))
    for i in range(n):
        j = (i + 1) % n
        stiff[i, j] = stiff[j, i] = k
    return stiff


def five_machine_continuous(
    inertia: float | Sequence[float] = 1.0,
    damping: float | Sequence[float] = 0.5,
    stiffness: float | np.ndarray = 10.0,
    n_machines: int = 5,
):
    """Continuous frequency-deviation model ``x' = -A x + B u``.

    ``A = M^-1 (D + L)`` where ``L`` is the Laplacian of the symmetric stiffness
    matrix (scalar ``stiffness`` means a ring with uniform tie strength) and
    ``B = M^-1`` (one governor input per machine).
    """
    m = _per_machine(inertia, n_machines, "inertia")
    d = _per_machine(damping, n_machines, "damping")
    if np.ndim(stiffness) == 0:
        stiff = ring_stiffness(n_machines, float(stiffness))
    else:
        stiff = np.array(stiffness, dtype=float)
        if stiff.shape != (n_machines, n_machines) or not np.allclose(stiff, stiff.T):
            raise ConfigError("must be a symmetric n_machines x n_machines matrix", "stiffness")
        stiff = stiff - np.diag(np.diag(stiff))
    if np.any(stiff < 0):
        raise ConfigError("tie strengths must be >= 0", "stiffness")
    laplacian = np.diag(stiff.sum(axis=1)) - stiff
    a_cont = (np.diag(d) + laplacian) / m[:, None]
    b_cont = np.diag(1.0 / m)
    return a_cont, b_cont


def default_five_machine(
    dt: float = 0.02,
    inertia: float | Sequence[float] = 1.0,
    damping: float | Sequence[float] = 0.5,
    stiffness: float | np.ndarray = 10.0,
    process_var: float = 1e-4,
    load_var: float = 3e-2,
    meas_var: float = 1e-3,
) -> GridModel:
    """Five machines on a ring, one frequency PMU per machine (``c_obs = I5``).

    Process noise is ``process_var * I + load_var * 11^T``: an independent
    per-machine term plus a system-wide load disturbance that moves every
    machine's frequency together.
    """
    a_cont, b_cont = five_machine_continuous(inertia, damping, stiffness)
    a_d, b_d = discretize(a_cont, b_cont, dt)
    n = a_d.shape[0]
    w_cov = process_var * np.eye(n) + load_var * np.ones((n, n))
    return GridModel(a_d, b_d, np.eye(n), w_cov, np.full(n, meas_var), dt)
