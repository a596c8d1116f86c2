"""Leave-one-out Kalman prediction and the suspicion-level recursion.

For each PMU ``n`` a Kalman filter runs on every measurement except PMU
``n``'s own; PMU ``n``'s report is then scored against that prediction.  The
accumulated negative log-likelihoods are normalized across PMUs (a softmax)
and multiplied by the physical-layer prior ``eta`` to give the suspicion
level ``pi_n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import NumericalError
from .grid import GridModel

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class KalmanState:
    """Posterior ``x_hat(t|t)`` and ``sigma(t|t)``.

    ``sigma_pred`` is the one-step prediction covariance ``sigma(t|t-1)`` that
    produced this state (``None`` for an initial state).
    """

    x_hat: np.ndarray
    sigma: np.ndarray
    slot: int = 0
    sigma_pred: np.ndarray | None = None

    @classmethod
    def initial(cls, model: GridModel, x0=None, sigma0=None) -> "KalmanState":
        x0 = np.zeros(model.n_states) if x0 is None else np.asarray(x0, dtype=float)
        sigma0 = model.w_cov if sigma0 is None else np.asarray(sigma0, dtype=float)
        return cls(x0.copy(), np.array(sigma0, dtype=float), 0)


def kept_rows(model: GridModel, n: int | None) -> np.ndarray:
    rows = np.arange(model.n_pmus)
    return rows if n is None else rows[rows != n]


def covariance_step(model: GridModel, rows: np.ndarray, sigma: np.ndarray):
    """Data-independent part of one filter step.

    Returns ``(sigma_pred, gain, sigma_post)`` for observation rows ``rows``.
    """
    a = model.a_d
    sigma_pred = a @ sigma @ a.T + model.w_cov
    sigma_pred = 0.5 * (sigma_pred + sigma_pred.T)
    c = model.c_obs[rows]
    innov_cov = c @ sigma_pred @ c.T + np.diag(model.v_var[rows])
    try:
        gain_t = np.linalg.solve(innov_cov, c @ sigma_pred).T
    except np.linalg.LinAlgError as exc:
        raise NumericalError("singular innovation covariance") from exc
    post = (np.eye(model.n_states) - gain_t @ c) @ sigma_pred
    post = 0.5 * (post + post.T)
    return sigma_pred, gain_t, post


def kalman_predict_excluding(
    model: GridModel,
    n: int | None,
    ks: KalmanState,
    y_minus_n,
    u=None,
) -> KalmanState:
    """Advance a filter that ignores PMU ``n`` by one slot.

    ``y_minus_n`` holds the delivered measurements of every other PMU at slot
    ``ks.slot + 1`` in PMU order (all ``M`` values when ``n`` is None).
    """
    rows = kept_rows(model, n)
    y = np.asarray(y_minus_n, dtype=float).reshape(-1)
    if y.shape[0] != rows.shape[0]:
        raise ValueError(f"expected {rows.shape[0]} measurements, got {y.shape[0]}")
    sigma_pred, gain_t, post = covariance_step(model, rows, ks.sigma)
    pred = model.a_d @ ks.x_hat
    if u is not None:
        pred = pred + model.b_d @ np.asarray(u, dtype=float)
    x_new = pred + gain_t @ (y - model.c_obs[rows] @ pred)
    return KalmanState(x_new, post, ks.slot + 1, sigma_pred)


def residual_loglik(model: GridModel, n: int, predicted: KalmanState, y_n: float) -> float:
    """``log N(y_n; c_n x_hat, c_n sigma_pred c_n^T + v_var[n])``.

    ``predicted`` is the state returned by :func:`kalman_predict_excluding` for
    exclusion ``n``; its ``sigma_pred`` sets the spread.
    """
    if predicted.sigma_pred is None:
        raise ValueError("state carries no prediction covariance")
    c = model.c_obs[n]
    var = float(c @ predicted.sigma_pred @ c) + float(model.v_var[n])
    if not var > 0:
        raise NumericalError(f"non-positive residual variance {var}")
    r = float(y_n) - float(c @ predicted.x_hat)
    return -0.5 * (r * r / var + _LOG_2PI + math.log(var))


# ---------------------------------------------------------------------------
# suspicion recursion


@dataclass(frozen=True, eq=False)
class SuspicionState:
    """Running evidence per PMU.

    ``log_acc[n]`` is the sum over past slots of ``-log p(y_n | PMU n honest)``.
    ``factor`` is the eta-free part of ``pi``.
    """

    log_acc: np.ndarray
    pi: np.ndarray
    eta_last: np.ndarray
    no_attacker_prior_ratio: float = 0.0
    threshold: float = 0.9
    slot: int = 0
    factor: np.ndarray | None = None

    @classmethod
    def initial(cls, n_pmus: int, threshold: float = 0.9,
                no_attacker_prior_ratio: float = 0.0) -> "SuspicionState":
        if no_attacker_prior_ratio < 0:
            raise ValueError("no_attacker_prior_ratio must be >= 0")
        uniform = np.full(n_pmus, 1.0 / n_pmus)
        return cls(np.zeros(n_pmus), uniform.copy(), np.ones(n_pmus),
                   float(no_attacker_prior_ratio), float(threshold), 0, uniform)

    def _next(self, log_acc, factor, eta) -> "SuspicionState":
        return SuspicionState(log_acc, factor * eta, eta, self.no_attacker_prior_ratio,
                              self.threshold, self.slot + 1, factor)


def _check_inputs(ss: SuspicionState, loglik, eta):
    loglik = np.asarray(loglik, dtype=float).reshape(-1)
    eta = np.broadcast_to(np.asarray(eta, dtype=float), loglik.shape).copy()
    if loglik.shape != ss.log_acc.shape:
        raise ValueError(f"expected {ss.log_acc.shape[0]} log-likelihoods, got {loglik.shape[0]}")
    if not np.all(np.isfinite(loglik)):
        raise ValueError("log-likelihoods must be finite")
    if np.any(eta < 0) or np.any(eta > 1):
        raise ValueError("eta entries must lie in [0, 1]")
    return loglik, eta


def softmax_factor(log_acc: np.ndarray) -> np.ndarray:
    return np.exp(log_acc - logsumexp(log_acc))


def update_suspicion(ss: SuspicionState, loglik, eta=1.0) -> SuspicionState:
    """Exactly-one-attacker update: ``pi = softmax(log_acc) * eta``."""
    loglik, eta = _check_inputs(ss, loglik, eta)
    log_acc = ss.log_acc - loglik
    return ss._next(log_acc, softmax_factor(log_acc), eta)


def no_attacker_factor(log_acc: np.ndarray, ratio: float) -> np.ndarray:
    """``1 / (1 + ratio + sum_{m != n} exp(a_m - a_n))`` for every ``n``."""
    if ratio == 0:
        return softmax_factor(log_acc)
    if math.isinf(ratio):
        return np.zeros_like(log_acc)
    m = log_acc.shape[0]
    out = np.empty(m)
    log_base = math.log1p(ratio)
    for n in range(m):
        others = np.delete(log_acc, n) - log_acc[n]
        terms = np.append(others, log_base)
        out[n] = math.exp(-logsumexp(terms))
    return out


def update_suspicion_no_attacker(ss: SuspicionState, loglik, eta=1.0) -> SuspicionState:
    """Update allowing for "no attacker at all".

    The prior odds ``p(no attacker) / p(one attacker)`` are added to each
    candidate's denominator; a ratio of zero reproduces :func:`update_suspicion`.
    """
    if ss.no_attacker_prior_ratio == 0:
        return update_suspicion(ss, loglik, eta)
    loglik, eta = _check_inputs(ss, loglik, eta)
    log_acc = ss.log_acc - loglik
    return ss._next(log_acc, no_attacker_factor(log_acc, ss.no_attacker_prior_ratio), eta)


@dataclass(frozen=True)
class Detection:
    pmu: int
    slot: int
    false_alarm: bool

    @property
    def delay(self) -> int:
        return self.slot


def detect(ss: SuspicionState, target: int | None = None) -> Detection | None:
    """PMU whose ``pi`` exceeds the threshold (largest ``pi`` on ties).

    Any detection of a PMU other than ``target`` is a false alarm; with no
    target every detection is.
    """
    over = ss.pi > ss.threshold
    if not np.any(over):
        return None
    pmu = int(np.argmax(np.where(over, ss.pi, -np.inf)))
    return Detection(pmu, ss.slot, pmu != target)


# ---------------------------------------------------------------------------
# vectorized filter bank


@dataclass
class GainSchedule:
    """Precomputed gains and residual variances for all ``M + 1`` filters.

    Filter ``f < M`` excludes PMU ``f``; filter ``M`` uses every PMU.  Gains
    are embedded as ``N x M`` matrices with a zero column for the excluded PMU.
    Once covariances stop changing the last entry is reused.
    """

    model: GridModel
    sigma0: np.ndarray
    gains: list = field(default_factory=list)
    res_var: list = field(default_factory=list)
    full_innov_cov: list = field(default_factory=list)
    _sigmas: np.ndarray | None = None
    converged: bool = False

    def __post_init__(self):
        m = self.model.n_pmus
        self._rows = [kept_rows(self.model, n) for n in range(m)] + [kept_rows(self.model, None)]
        self._sigmas = np.repeat(np.asarray(self.sigma0, dtype=float)[None], m + 1, axis=0)

    @property
    def n_filters(self) -> int:
        return self.model.n_pmus + 1

    def _advance(self):
        model = self.model
        m, n_st = model.n_pmus, model.n_states
        emb = np.zeros((m + 1, n_st, m))
        res_var = np.empty(m)
        new_sigmas = np.empty_like(self._sigmas)
        for f, rows in enumerate(self._rows):
            sigma_pred, gain_t, post = covariance_step(model, rows, self._sigmas[f])
            emb[f][:, rows] = gain_t
            new_sigmas[f] = post
            if f < m:
                c = model.c_obs[f]
                res_var[f] = c @ sigma_pred @ c + model.v_var[f]
            else:
                full_cov = model.c_obs @ sigma_pred @ model.c_obs.T + np.diag(model.v_var)
        if self.gains and np.allclose(new_sigmas, self._sigmas, rtol=1e-15, atol=0.0):
            self.converged = True
        self._sigmas = new_sigmas
        self.gains.append(emb)
        self.res_var.append(res_var)
        self.full_innov_cov.append(full_cov)

    def at(self, index: int):
        """Gains and residual variances for the ``index``-th step (0-based)."""
        i = self._index(index)
        return self.gains[i], self.res_var[i]

    def innovation_cov(self, index: int) -> np.ndarray:
        """Innovation covariance of the full filter at step ``index``."""
        return self.full_innov_cov[self._index(index)]

    def _index(self, index: int) -> int:
        while len(self.gains) <= index and not self.converged:
            self._advance()
        return min(index, len(self.gains) - 1)


class FilterBank:
    """All leave-one-out filters plus the full filter, advanced together."""

    def __init__(self, schedule: GainSchedule, x0=None):
        model = schedule.model
        self.schedule = schedule
        self.model = model
        x0 = np.zeros(model.n_states) if x0 is None else np.asarray(x0, dtype=float)
        self.x_hat = np.repeat(x0[None], schedule.n_filters, axis=0)
        self.steps = 0
        self._diag = np.arange(model.n_pmus)

    def step(self, y, u=None):
        """Fold in delivered measurements ``y``; return per-PMU log-likelihoods
        and the full filter's innovation."""
        model = self.model
        gains, res_var = self.schedule.at(self.steps)
        pred = self.x_hat @ model.a_d.T
        if u is not None:
            pred = pred + model.b_d @ np.asarray(u, dtype=float)
        innov = np.asarray(y, dtype=float)[None, :] - pred @ model.c_obs.T
        self.x_hat = pred + np.einsum("fnm,fm->fn", gains, innov)
        self.steps += 1
        m = model.n_pmus
        fitted = np.einsum("mn,mn->m", model.c_obs, self.x_hat[:m])
        r = np.asarray(y, dtype=float) - fitted
        loglik = -0.5 * (r * r / res_var + _LOG_2PI + np.log(res_var))
        return loglik, innov[m]

    @property
    def full_estimate(self) -> np.ndarray:
        return self.x_hat[-1]
