"""Value functions and optimal portfolio weights for the solved variants.

Every value function follows the same exponential-affine shape

    Phi(t, v, x, e) = (v**delta / delta) * f(t, x, e),    f > 0,

so Phi scales as c**delta in wealth and carries the sign of delta.
The optimal weight splits into a mean-variance part and a hedging part;
the hedging part vanishes whenever the asset and factor noises are
uncorrelated (rho = 0):

    pi_mv(t) = (1/(1-delta)) * lam_hat(e) / nu(e)^2
    pi_h(t)  = (1/(1-delta)) * rho * (chi(e)/nu(e)) * f_x/f (t)

Neither component depends on wealth or on the current factor level.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainViolation
from .markov_chain import MarkovChainSpec, RegimePath, occupation_integral, path_stream, sample_path
from .models import HestonRegimeParams, Variant
from .regime_expectation import XiTable
from .riccati import B_separable, D_leverage, PiecewiseAB, compose_piecewise

__all__ = [
    "ValueQuery",
    "StrategyPoint",
    "optimal_strategy",
    "timedep_strategy",
    "value_timedep_heston",
    "value_mmh_general",
    "value_smmh",
    "value_smmh_rho",
    "strategy_rows",
]


@dataclass(frozen=True)
class ValueQuery:
    """Evaluation point (t, wealth, factor level, state label)."""

    t: float
    v: float
    x: float
    state: int

    def __post_init__(self):
        if self.v <= 0.0:
            raise ValueError("wealth must be strictly positive")
        if self.x < 0.0:
            raise ValueError("factor level must be nonnegative")
        if self.state < 1:
            raise ValueError("state labels start at 1")

    def check(self, p: HestonRegimeParams) -> "ValueQuery":
        if not 0.0 <= self.t <= p.horizon + 1e-12:
            raise DomainViolation(f"t must lie in [0, {p.horizon}]")
        if self.state > p.n_states:
            raise ValueError(f"state {self.state} exceeds n_states = {p.n_states}")
        return self


@dataclass(frozen=True)
class StrategyPoint:
    """Optimal weight decomposition; pi_total = pi_mv + pi_h by construction."""

    pi_mv: float
    pi_h: float
    pi_total: float

    @classmethod
    def of(cls, pi_mv: float, pi_h: float) -> "StrategyPoint":
        return cls(pi_mv=pi_mv, pi_h=pi_h, pi_total=pi_mv + pi_h)


def optimal_strategy(p: HestonRegimeParams, t: float, state: int) -> StrategyPoint:
    """Optimal portfolio weight at (t, state); wealth and factor free.

    SMMH_RHO uses the leverage exponent D(t) in the hedging part; SMMH
    and MMH (rho = 0) have no hedging part at all.
    """
    if not 1 <= state <= p.n_states:
        raise ValueError(f"state must be in 1..{p.n_states}")
    e = state - 1
    inv = 1.0 / (1.0 - p.delta)
    if p.variant is Variant.SMMH_RHO:
        pi_mv = inv * p.d / p.nu[e]
        pi_h = inv * p.rho * (p.chi[e] / p.nu[e]) * D_leverage(p, t)
        return StrategyPoint.of(float(pi_mv), float(pi_h))
    if p.variant is Variant.SMMH:
        return StrategyPoint.of(float(inv * p.d / p.nu[e]), 0.0)
    if p.rho != 0.0:
        raise DomainViolation(
            "no optimal strategy is available for MMH with rho != 0 and "
            "state-dependent coefficients"
        )
    return StrategyPoint.of(float(inv * p.lam_hat[e] / p.nu[e] ** 2), 0.0)


def timedep_strategy(p: HestonRegimeParams, coeffs: PiecewiseAB) -> Callable[[float, int], float]:
    """Optimal weight along one frozen regime trajectory.

    pi(t, e) = (1/(1-delta)) [ lam_hat(e)/nu(e)^2
                               + rho (chi(e)/nu(e)) vt B(t) ].
    """
    inv = 1.0 / (1.0 - p.delta)
    slope = p.excess_slope / p.nu**2
    hedge_coef = p.rho * p.chi / p.nu * coeffs.vartheta

    def weight(t: float, state: int) -> float:
        e = state - 1
        return float(inv * (slope[e] + hedge_coef[e] * coeffs.B(t)))

    return weight


def value_timedep_heston(p: HestonRegimeParams, path: RegimePath, q: ValueQuery) -> float:
    """Value along a frozen regime trajectory.

    Phi(t, v, x) = (v**delta/delta) * exp{ int_t^T delta r(m(s)) ds }
                   * exp{ vt A(t) + vt B(t) x }
    with (A, B) composed backward over the trajectory's segments.
    """
    q.check(p)
    coeffs = compose_piecewise(path, p)
    rate = p.delta * p.r

    def g(s: float, state: int) -> float:
        return rate[state - 1]

    growth = occupation_integral(path, g, q.t, path.horizon)
    vt = coeffs.vartheta
    util = q.v**p.delta / p.delta
    return float(util * np.exp(growth + vt * coeffs.A(q.t) + vt * coeffs.B(q.t) * q.x))


def value_mmh_general(
    p: HestonRegimeParams,
    chain: MarkovChainSpec,
    q: ValueQuery,
    n_paths: int,
    seed,
) -> tuple[float, float]:
    """Partial Monte Carlo value for the general regime-switching model, rho = 0.

    Only the chain is simulated: each sampled trajectory contributes
    exp{ int delta r } * exp{ A(t) + B(t) x } with the trajectory's own
    composed coefficients, and the average is scaled by v**delta/delta.
    Fresh paths are drawn per query.  Returns (estimate, std_err).
    """
    if p.rho != 0.0:
        raise DomainViolation("the regime-switching value requires rho = 0")
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    q.check(p)
    rate = p.delta * p.r

    def g(s: float, state: int) -> float:
        return rate[state - 1]

    vals = np.empty(n_paths)
    for i in range(n_paths):
        rng = path_stream(seed, i)
        if q.t >= p.horizon:
            vals[i] = 1.0
            continue
        path = sample_path(chain, q.t, p.horizon, q.state, rng)
        coeffs = compose_piecewise(path, p)
        growth = occupation_integral(path, g, q.t, p.horizon)
        vals[i] = np.exp(growth + coeffs.A(q.t) + coeffs.B(q.t) * q.x)
    util = q.v**p.delta / p.delta
    est = util * float(vals.mean())
    err = 0.0 if n_paths == 1 else abs(util) * float(vals.std(ddof=1) / np.sqrt(n_paths))
    return est, err


def value_smmh(p: HestonRegimeParams, q: ValueQuery, xi: XiTable) -> float:
    """Separable no-leverage value: (v**delta/delta) xi(t, e) exp{B(t) x}."""
    if p.variant is not Variant.SMMH:
        raise DomainViolation("value_smmh applies to the SMMH variant only")
    q.check(p)
    util = q.v**p.delta / p.delta
    return float(util * xi.at(q.t, q.state) * np.exp(B_separable(p, q.t) * q.x))


def value_smmh_rho(p: HestonRegimeParams, q: ValueQuery, xi: XiTable) -> float:
    """Separable leverage value: (v**delta/delta) xi(t, e) exp{D(t) x}."""
    if p.variant is not Variant.SMMH_RHO:
        raise DomainViolation("value_smmh_rho applies to the SMMH_RHO variant only")
    q.check(p)
    util = q.v**p.delta / p.delta
    return float(util * xi.at(q.t, q.state) * np.exp(D_leverage(p, q.t) * q.x))


def strategy_rows(p: HestonRegimeParams, times) -> list[tuple[float, int, float, float, float]]:
    """(t, state, pi_mv, pi_h, pi_total) rows for CSV serialization."""
    rows = []
    for t in np.atleast_1d(np.asarray(times, dtype=float)):
        for e in range(1, p.n_states + 1):
            sp = optimal_strategy(p, float(t), e)
            rows.append((float(t), e, sp.pi_mv, sp.pi_h, sp.pi_total))
    return rows
