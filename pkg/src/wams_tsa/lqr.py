"""Infinite-horizon LQR: Riccati fixed point, feedback gain and Monte Carlo cost."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError, StabilizabilityError
from .grid import GridModel, StateVector, step


def _spd(mat, name: str) -> np.ndarray:
    arr = np.atleast_2d(np.array(mat, dtype=float))
    if arr.shape[0] != arr.shape[1]:
        raise ConfigError(f"must be square, got {arr.shape}", name)
    if not np.allclose(arr, arr.T, atol=1e-12):
        raise ConfigError("must be symmetric", name)
    if np.linalg.eigvalsh(arr).min() <= 0:
        raise ConfigError("must be positive definite", name)
    return arr


@dataclass(frozen=True, eq=False)
class LqrConfig:
    q_weight: np.ndarray
    p_weight: np.ndarray
    beta: float = 1.0
    riccati_tol: float = 1e-10
    riccati_max_iter: int = 1_000_000

    def __post_init__(self):
        object.__setattr__(self, "q_weight", _spd(self.q_weight, "q_weight"))
        object.__setattr__(self, "p_weight", _spd(self.p_weight, "p_weight"))
        if not 0 < self.beta <= 1:
            raise ConfigError("must lie in (0, 1]", "beta")
        if not self.riccati_tol > 0:
            raise ConfigError("must be > 0", "riccati_tol")
        if int(self.riccati_max_iter) < 1:
            raise ConfigError("must be >= 1", "riccati_max_iter")

    @classmethod
    def identity(cls, n_states: int, n_inputs: int, **kw) -> "LqrConfig":
        return cls(np.eye(n_states), np.eye(n_inputs), **kw)


@dataclass(frozen=True, eq=False)
class RiccatiSolution:
    s_matrix: np.ndarray
    iterations: int
    residual: float


def riccati_map(a_d, b_d, s, q_weight, p_weight) -> np.ndarray:
    """One application of ``S -> A^T (S - S B (B^T S B + P)^-1 B^T S) A + Q``."""
    sb = s @ b_d
    inner = s - sb @ np.linalg.solve(b_d.T @ sb + p_weight, sb.T)
    out = a_d.T @ inner @ a_d + q_weight
    return 0.5 * (out + out.T)


def riccati_residual(a_d, b_d, s, q_weight, p_weight) -> float:
    """Frobenius norm of ``S - riccati_map(S)``."""
    return float(np.linalg.norm(s - riccati_map(a_d, b_d, s, q_weight, p_weight)))


def solve_riccati(a_d, b_d, cfg: LqrConfig) -> RiccatiSolution:
    """Solve the discrete algebraic Riccati equation by value iteration from ``S0 = Q``.

    The returned matrix ``S`` has ``residual(S) <= cfg.riccati_tol``.
    """
    a_d = np.atleast_2d(np.asarray(a_d, dtype=float))
    b_d = np.atleast_2d(np.asarray(b_d, dtype=float))
    q, p = cfg.q_weight, cfg.p_weight
    n = a_d.shape[0]
    if a_d.shape != (n, n) or b_d.shape[0] != n or q.shape != (n, n) or p.shape[0] != b_d.shape[1]:
        raise ConfigError(
            f"inconsistent shapes a_d={a_d.shape} b_d={b_d.shape} q={q.shape} p={p.shape}"
        )
    s = q.copy()
    for it in range(1, int(cfg.riccati_max_iter) + 1):
        s_next = riccati_map(a_d, b_d, s, q, p)
        if not np.all(np.isfinite(s_next)):
            break
        res = float(np.linalg.norm(s_next - s))
        if res <= cfg.riccati_tol:
            return RiccatiSolution(s, it, res)
        s = s_next
    raise StabilizabilityError(
        f"Riccati iteration did not converge in {cfg.riccati_max_iter} iterations"
    )


def lqr_gain(a_d, b_d, s: RiccatiSolution, p_weight) -> np.ndarray:
    """``K = (B^T S B + P)^-1 B^T S A``; the control law is ``u = -K x_hat``."""
    a_d = np.atleast_2d(np.asarray(a_d, dtype=float))
    b_d = np.atleast_2d(np.asarray(b_d, dtype=float))
    sm = s.s_matrix
    lhs = b_d.T @ sm @ b_d + np.atleast_2d(p_weight)
    try:
        return np.linalg.solve(lhs, b_d.T @ sm @ a_d)
    except np.linalg.LinAlgError as exc:  # only reachable with a non-PD p_weight
        raise NumericalError("B^T S B + P is singular") from exc


def control(k_gain, x_hat: StateVector | np.ndarray) -> np.ndarray:
    values = x_hat.values if isinstance(x_hat, StateVector) else np.asarray(x_hat, dtype=float)
    k_gain = np.atleast_2d(k_gain)
    if k_gain.shape[1] != values.shape[0]:
        raise ValueError(f"gain has {k_gain.shape[1]} columns, state has {values.shape[0]} entries")
    return -k_gain @ values


def evaluate_cost(
    model: GridModel,
    k_gain,
    cfg: LqrConfig,
    horizon: int,
    n_runs: int,
    rng: np.random.Generator,
    x0=None,
) -> float:
    """Monte Carlo estimate of ``sum_t beta^t (x'Qx + u'Pu)`` under ``u = -K x``.

    Uses perfect state feedback; each run starts from ``x0`` (zeros by default).
    """
    if horizon < 1 or n_runs < 1:
        raise ValueError("horizon and n_runs must be >= 1")
    x0 = np.zeros(model.n_states) if x0 is None else np.asarray(x0, dtype=float)
    q, p = cfg.q_weight, cfg.p_weight
    discount = cfg.beta ** np.arange(horizon)
    total = 0.0
    for _ in range(n_runs):
        x = StateVector(x0, 0)
        cost = 0.0
        for t in range(horizon):
            u = control(k_gain, x)
            cost += discount[t] * (x.values @ q @ x.values + u @ p @ u)
            x = step(model, x, u, rng)
        total += cost
    return total / n_runs
