"""Model-parameter catalog and well-posedness validators.

The market has one bank account and one risky asset whose dynamics are
modulated by an observable finite-state chain (label e) and a CIR-type
stochastic factor X:

    dP0 = P0 r(e) dt
    dP1 = P1 [ (r(e) + lam_hat(e) X) dt + nu(e) sqrt(X) dW_P ]
    dX  = kappa(e) (theta(e) - X) dt + chi(e) sqrt(X) dW_X
    d<W_P, W_X> = rho dt

with power utility U(v) = v**delta / delta, delta < 1, delta != 0.

Three variants are supported:

* ``MMH``      - every coefficient may switch with the regime; lam_hat
                 is given per state.
* ``SMMH``     - separable special case: kappa, chi and the market-price
                 slope d (lam_hat = d * nu) are regime independent and
                 rho = 0.
* ``SMMH_RHO`` - the separable case with leverage (rho != 0 allowed).

The general affine coefficient tables (AffineCoefficients) exist so the
Heston mapping can be checked against the generic affine structure; the
solvers themselves consume HestonRegimeParams.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import AssumptionViolated, FellerViolated

__all__ = [
    "Variant",
    "UtilitySpec",
    "HestonRegimeParams",
    "AffineCoefficients",
    "CheckResult",
    "ValidationReport",
    "to_affine_coefficients",
    "validate_feller",
    "validate_solution_assumptions",
]


class Variant(str, Enum):
    MMH = "mmh"
    SMMH = "smmh"
    SMMH_RHO = "smmh_rho"


@dataclass(frozen=True)
class UtilitySpec:
    """Power utility v -> v**delta / delta with delta < 1, delta != 0.

    delta = 0 (log utility) is rejected outright; no limiting case is
    implemented.
    """

    delta: float

    def __post_init__(self):
        if not self.delta < 1 or self.delta == 0:
            raise ValueError(f"delta must satisfy delta < 1 and delta != 0, got {self.delta}")

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        if np.any(v <= 0):
            raise ValueError("utility is only defined for strictly positive wealth")
        out = v**self.delta / self.delta
        return float(out) if out.ndim == 0 else out


def _per_state(name: str, value, l: int) -> np.ndarray:
    arr = np.atleast_1d(np.array(value, dtype=float, copy=True))
    if arr.size == 1:
        arr = np.full(l, float(arr[0]))
    if arr.shape != (l,):
        raise ValueError(f"{name} must be scalar or length {l}, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class HestonRegimeParams:
    """Per-regime Heston parameters plus utility and horizon.

    ``kappa``, ``theta``, ``chi``, ``r``, ``nu`` are per-state tables
    (scalars broadcast).  The excess-return slope is ``lam_hat`` per
    state for MMH, or the single market-price slope ``d`` for the
    separable variants (there lam_hat(e) = d * nu(e)).

    chi = 0 is tolerated at this level (deterministic factor, useful in
    validator and simulation edge cases); the closed-form coefficient
    functions themselves require chi > 0.
    """

    variant: Variant
    horizon: float
    delta: float
    rho: float
    r: np.ndarray
    nu: np.ndarray
    kappa: np.ndarray
    theta: np.ndarray
    chi: np.ndarray
    lam_hat: np.ndarray | None = None
    d: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        l = np.atleast_1d(np.asarray(self.nu)).size
        for name in ("r", "nu", "kappa", "theta", "chi"):
            object.__setattr__(self, name, _per_state(name, getattr(self, name), l))
        UtilitySpec(self.delta)
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [-1, 1], got {self.rho}")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if np.any(self.kappa <= 0) or np.any(self.theta <= 0):
            raise ValueError("kappa and theta must be strictly positive in every state")
        if np.any(self.chi < 0) or np.any(self.nu <= 0):
            raise ValueError("chi must be nonnegative and nu strictly positive")
        if self.variant is Variant.MMH:
            if self.lam_hat is None:
                raise ValueError("MMH requires per-state lam_hat")
            object.__setattr__(self, "lam_hat", _per_state("lam_hat", self.lam_hat, l))
            if self.d is not None:
                raise ValueError("MMH takes lam_hat, not d")
        else:
            if self.d is None or self.lam_hat is not None:
                raise ValueError(f"{self.variant.value} requires the scalar slope d")
            if np.any(self.kappa != self.kappa[0]) or np.any(self.chi != self.chi[0]):
                raise ValueError("separable variants need state-independent kappa and chi")
            if self.variant is Variant.SMMH and self.rho != 0.0:
                raise ValueError("SMMH requires rho = 0")

    @property
    def n_states(self) -> int:
        return self.nu.size

    @property
    def utility(self) -> UtilitySpec:
        return UtilitySpec(self.delta)

    @property
    def delta_ratio(self) -> float:
        """delta / (1 - delta), the risk-aversion tilt."""
        return self.delta / (1.0 - self.delta)

    @property
    def vartheta(self) -> float:
        """Distortion power (1-delta)/(1-delta+delta*rho**2); exactly 1 when rho = 0."""
        if self.rho == 0.0:
            return 1.0
        return (1.0 - self.delta) / (1.0 - self.delta + self.delta * self.rho**2)

    @property
    def excess_slope(self) -> np.ndarray:
        """lam_hat(e): excess return of the asset per unit of X."""
        if self.variant is Variant.MMH:
            return self.lam_hat
        return self.d * self.nu

    @property
    def price_of_risk_slope(self) -> np.ndarray:
        """lam_hat(e)/nu(e): market price of risk per sqrt(X)."""
        return self.excess_slope / self.nu

    def tilted_kappa(self) -> np.ndarray:
        """Mean-reversion speed of the drift-adjusted factor used by the exponent ODEs."""
        return self.kappa - self.delta_ratio * self.rho * self.chi * self.price_of_risk_slope


@dataclass(frozen=True, eq=False)
class AffineCoefficients:
    """Per-state tables of the generic affine structure.

    gamma^2 = G1 + G2 x, mu_X = M1 + M2 x, sigma_X^2 = S1 + S2 x, and
    rho*gamma*sigma_X = Z1 + Z2 x, together with r, rho and delta.
    """

    g1: np.ndarray
    g2: np.ndarray
    m1: np.ndarray
    m2: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    z1: np.ndarray
    z2: np.ndarray
    r: np.ndarray
    rho: float
    delta: float

    def __post_init__(self):
        if np.any(self.g1 < 0) or np.any(self.g2 < 0) or np.any(self.s1 < 0) or np.any(self.s2 < 0):
            raise ValueError("g1, g2, s1, s2 must be nonnegative")
        UtilitySpec(self.delta)
        if self.rho != 0.0:
            # with correlation, sigma_X must be a per-state multiple of gamma
            ok = np.allclose(self.z1 * self.g2, self.z2 * self.g1, atol=1e-12) and np.allclose(
                self.rho**2 * (self.g1 * self.s1), self.z1**2, atol=1e-12
            ) and np.allclose(self.rho**2 * (self.g2 * self.s2), self.z2**2, atol=1e-12)
            if not ok:
                raise ValueError("rho != 0 requires sigma_X proportional to gamma per state")


def to_affine_coefficients(p: HestonRegimeParams) -> AffineCoefficients:
    """Map Heston regime parameters onto the generic affine tables."""
    slope = p.price_of_risk_slope
    return AffineCoefficients(
        g1=np.zeros(p.n_states),
        g2=slope**2,
        m1=p.kappa * p.theta,
        m2=-p.kappa,
        s1=np.zeros(p.n_states),
        s2=p.chi**2,
        z1=np.zeros(p.n_states),
        z2=p.rho * slope * p.chi,
        r=p.r,
        rho=p.rho,
        delta=p.delta,
    )


@dataclass(frozen=True)
class CheckResult:
    name: str
    state: int | None
    passed: bool
    lhs: float
    rhs: float
    relation: str = "<"

    def describe(self) -> str:
        where = f" state {self.state}" if self.state is not None else ""
        status = "pass" if self.passed else "FAIL"
        return f"{self.name}{where}: {self.lhs:.6g} {self.relation} {self.rhs:.6g} [{status}]"


@dataclass(frozen=True)
class ValidationReport:
    """Deterministic, order-stable list of per-check outcomes."""

    checks: tuple[CheckResult, ...]
    vartheta: float = 1.0

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> tuple[CheckResult, ...]:
        return tuple(c for c in self.checks if not c.passed)

    def raise_if_failed(self, exc_type=AssumptionViolated) -> "ValidationReport":
        if not self.ok:
            raise exc_type("; ".join(c.describe() for c in self.failures))
        return self


def validate_feller(p: HestonRegimeParams) -> ValidationReport:
    """Per-state check of 2*kappa*theta >= chi**2 (non-strict).

    Call ``.raise_if_failed(FellerViolated)`` to turn failures into an
    exception listing the failing states.
    """
    checks = tuple(
        CheckResult(
            name="feller",
            state=e + 1,
            passed=bool(2.0 * p.kappa[e] * p.theta[e] >= p.chi[e] ** 2),
            lhs=float(2.0 * p.kappa[e] * p.theta[e]),
            rhs=float(p.chi[e] ** 2),
            relation=">=",
        )
        for e in range(p.n_states)
    )
    return ValidationReport(checks=checks, vartheta=p.vartheta)


def require_feller(p: HestonRegimeParams) -> ValidationReport:
    return validate_feller(p).raise_if_failed(FellerViolated)


def validate_solution_assumptions(p: HestonRegimeParams) -> ValidationReport:
    """Solvability conditions guaranteeing the closed-form exponents exist.

    MMH: per state, (1/(2*vt)) * (delta/(1-delta)) * lam_hat^2/nu^2 must
    stay below kt^2/(2*chi^2) for the tilted rate kt, the tilted rate
    must be positive, and max_e (kt - at)/chi^2 <= min_e (kt + at)/chi^2
    so the backward recursion never leaves the admissible strip.

    SMMH: (delta/(1-delta)) d^2 < kappa^2 / chi^2.

    SMMH_RHO: 0 < kb and (delta/(1-delta)) d^2 < vt * kb^2 / chi^2 for
    the leverage-adjusted rate kb = kappa - (delta/(1-delta)) rho chi |d|.
    """
    vt = p.vartheta
    ratio = p.delta_ratio
    checks: list[CheckResult] = []
    if p.variant is Variant.MMH:
        kt = p.tilted_kappa()
        slope2 = p.price_of_risk_slope**2
        beta = ratio * slope2 / (2.0 * vt)
        for e in range(p.n_states):
            checks.append(
                CheckResult(
                    "tilted_rate_positive", e + 1, bool(kt[e] > 0.0), 0.0, float(kt[e])
                )
            )
            checks.append(
                CheckResult(
                    "riccati_constant_bound",
                    e + 1,
                    bool(beta[e] < kt[e] ** 2 / (2.0 * p.chi[e] ** 2)),
                    float(beta[e]),
                    float(kt[e] ** 2 / (2.0 * p.chi[e] ** 2)),
                )
            )
        if all(c.passed for c in checks):
            at = np.sqrt(kt**2 - 2.0 * beta * p.chi**2)
            lo = np.max((kt - at) / p.chi**2)
            hi = np.min((kt + at) / p.chi**2)
            checks.append(
                CheckResult("state_bound_compatible", None, bool(lo <= hi), float(lo), float(hi), "<=")
            )
    elif p.variant is Variant.SMMH:
        kap, chi = float(p.kappa[0]), float(p.chi[0])
        checks.append(
            CheckResult(
                "excess_slope_bound",
                None,
                bool(ratio * p.d**2 < kap**2 / chi**2),
                float(ratio * p.d**2),
                float(kap**2 / chi**2),
            )
        )
    else:  # SMMH_RHO
        kap, chi = float(p.kappa[0]), float(p.chi[0])
        kb = kap - ratio * p.rho * chi * abs(p.d)
        checks.append(CheckResult("tilted_rate_positive", None, bool(kb > 0.0), 0.0, float(kb)))
        checks.append(
            CheckResult(
                "excess_slope_bound",
                None,
                bool(ratio * p.d**2 < vt * kb**2 / chi**2),
                float(ratio * p.d**2),
                float(vt * kb**2 / chi**2),
            )
        )
    return ValidationReport(checks=tuple(checks), vartheta=vt)
