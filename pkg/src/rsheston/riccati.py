"""Exponent coefficient functions for the CIR exponential-affine transform.

For a CIR factor dX = kappa (theta - X) dt + chi sqrt(X) dW and real
exponents with beta <= kappa^2/(2 chi^2), alpha <= (kappa + a)/chi^2,
a = sqrt(kappa^2 - 2 beta chi^2), the conditional transform

    E[ exp{ alpha X(T) + beta int_t^T X(s) ds } | X(t) = x ]
      = exp{ A(T - t) + B(T - t) x }

has closed-form coefficients

    B(tau) = ( -c (kappa + a) e^{-a tau} + kappa - a )
             / ( chi^2 (1 - c e^{-a tau}) ),
    A(tau) = kappa theta (kappa - a)/chi^2 * tau
             - (2 kappa theta / chi^2) ln( (1 - c e^{-a tau}) / (1 - c) ),

with c = (kappa - a - alpha chi^2) / (kappa + a - alpha chi^2).  In
backward time they solve

    B_t + (1/2) chi^2 B^2 - kappa B + beta = 0,   B(T) = alpha,
    A_t + kappa theta B = 0,                      A(T) = 0.

This module provides the closed forms, an independent backward RK4
integrator over piecewise-constant coefficients, the backward
composition across a regime path, and the two explicit single-equation
solutions used by the separable model variants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BlowUp, DomainViolation
from .markov_chain import RegimePath
from .models import HestonRegimeParams, Variant

__all__ = [
    "CharFnCoeffs",
    "PiecewiseAB",
    "RiccatiSolution",
    "char_fn_coeffs",
    "riccati_numeric",
    "compose_piecewise",
    "B_separable",
    "D_leverage",
    "b_separable_fn",
    "d_leverage_fn",
]

_B_ESCAPE = 1e8


@dataclass(frozen=True)
class CharFnCoeffs:
    """One evaluation (A, B) of the exponential-affine coefficients."""

    A: float
    B: float


def _discriminant_root(kappa: float, chi: float, beta: float) -> float:
    disc = kappa * kappa - 2.0 * beta * chi * chi
    if disc < 0.0:
        # roundoff at the boundary beta = kappa^2/(2 chi^2) must map to a = 0
        if disc > -1e-12 * kappa * kappa:
            return 0.0
        raise DomainViolation(
            f"beta = {beta} exceeds kappa^2/(2 chi^2) = {kappa**2 / (2 * chi**2)}"
        )
    return math.sqrt(disc)


def _closed_ab(kappa, theta, chi, alpha, beta, tau):
    """Vectorized closed-form (A(tau), B(tau)); tau scalar or ndarray."""
    if kappa <= 0 or theta <= 0 or chi <= 0:
        raise DomainViolation("closed forms need kappa, theta, chi > 0")
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise DomainViolation("tau must be nonnegative")
    a = _discriminant_root(kappa, chi, beta)
    chi2 = chi * chi
    bound = (kappa + a) / chi2
    if alpha == bound:
        # boundary branch: B is frozen at its terminal value
        b = np.full_like(tau, bound)
        big_a = kappa * theta * bound * tau
        return big_a, b
    if a == 0.0:
        raise DomainViolation(
            "beta = kappa^2/(2 chi^2) is only admissible with alpha = kappa/chi^2"
        )
    if alpha > bound:
        raise DomainViolation(f"alpha = {alpha} exceeds (kappa + a)/chi^2 = {bound}")
    c = (kappa - a - alpha * chi2) / (kappa + a - alpha * chi2)
    decay = np.exp(-a * tau)
    den = 1.0 - c * decay
    if np.any(den <= 0.0):
        raise DomainViolation("coefficient denominator vanished inside the domain")
    b = (-c * (kappa + a) * decay + kappa - a) / (chi2 * den)
    big_a = kappa * theta * (kappa - a) / chi2 * tau - (2.0 * kappa * theta / chi2) * np.log(
        den / (1.0 - c)
    )
    return big_a, b


def char_fn_coeffs(
    kappa: float, theta: float, chi: float, alpha: float, beta: float, tau: float
) -> CharFnCoeffs:
    """Closed-form (A, B) at elapsed backward time tau.

    Raises DomainViolation whenever (alpha, beta) leave the region where
    the transform is well defined.
    """
    big_a, b = _closed_ab(kappa, theta, chi, alpha, beta, float(tau))
    return CharFnCoeffs(A=float(big_a), B=float(b))


@dataclass(frozen=True, eq=False)
class RiccatiSolution:
    """Backward RK4 samples of (A(t), B(t)) on a grid aligned with segment edges."""

    times: np.ndarray
    A: np.ndarray
    B: np.ndarray


def riccati_numeric(
    boundaries,
    kappa,
    theta,
    chi,
    beta,
    terminal_alpha: float = 0.0,
    grid_step: float = 1e-3,
) -> RiccatiSolution:
    """Integrate the coefficient ODE pair backward with classic RK4.

    ``boundaries`` are the segment edges t_0 < ... < t_n (the last one
    is the horizon); ``kappa``/``theta``/``chi``/``beta`` give the
    constant coefficients on each of the n segments.  Integration starts
    from (A, B)(t_n) = (0, terminal_alpha) and is continuous across
    segment edges.  Each segment is subdivided so steps never exceed
    ``grid_step`` and always land exactly on the edges.

    Raises BlowUp once |B| exceeds 1e8, the signature of a violated
    solvability condition (finite-time Riccati escape).
    """
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    edges = np.asarray(boundaries, dtype=float)
    kap = np.atleast_1d(np.asarray(kappa, dtype=float))
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    ch = np.atleast_1d(np.asarray(chi, dtype=float))
    be = np.atleast_1d(np.asarray(beta, dtype=float))
    n_seg = len(edges) - 1
    if n_seg < 1 or not (len(kap) == len(th) == len(ch) == len(be) == n_seg):
        raise ValueError("need one (kappa, theta, chi, beta) tuple per segment")
    if np.any(np.diff(edges) <= 0):
        raise ValueError("boundaries must be strictly increasing")

    times = [np.array([edges[-1]])]
    a_vals = [np.array([0.0])]
    b_vals = [np.array([float(terminal_alpha)])]
    b_cur, a_cur = float(terminal_alpha), 0.0
    for j in range(n_seg - 1, -1, -1):
        seg_len = edges[j + 1] - edges[j]
        m = max(1, int(math.ceil(seg_len / grid_step - 1e-12)))
        h = seg_len / m
        kj, tj, cj, bj = kap[j], th[j], ch[j], be[j]
        c2 = 0.5 * cj * cj

        def rhs(b):
            return -c2 * b * b + kj * b - bj

        seg_t = np.empty(m)
        seg_a = np.empty(m)
        seg_b = np.empty(m)
        t = edges[j + 1]
        for k in range(m):
            # one RK4 step of size -h for the pair (B, A)
            k1b = rhs(b_cur)
            k1a = -kj * tj * b_cur
            b2 = b_cur - 0.5 * h * k1b
            k2b = rhs(b2)
            k2a = -kj * tj * b2
            b3 = b_cur - 0.5 * h * k2b
            k3b = rhs(b3)
            k3a = -kj * tj * b3
            b4 = b_cur - h * k3b
            k4b = rhs(b4)
            k4a = -kj * tj * b4
            b_cur = b_cur - h / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b)
            a_cur = a_cur - h / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a)
            t -= h
            if not math.isfinite(b_cur) or abs(b_cur) > _B_ESCAPE:
                raise BlowUp(f"|B| escaped past {_B_ESCAPE:g} near t = {t:.6g}")
            seg_t[k] = t
            seg_a[k] = a_cur
            seg_b[k] = b_cur
        seg_t[-1] = edges[j]  # pin the edge exactly against rounding drift
        times.append(seg_t)
        a_vals.append(seg_a)
        b_vals.append(seg_b)
    t_all = np.concatenate(times)[::-1]
    return RiccatiSolution(times=t_all, A=np.concatenate(a_vals)[::-1], B=np.concatenate(b_vals)[::-1])


@dataclass(frozen=True, eq=False)
class _Segment:
    t_lo: float
    t_hi: float
    state: int
    alpha_end: float  # B value carried in from the later segment
    beta: float
    kappa_t: float
    theta_t: float
    chi: float
    a_tail: float  # accumulated A contributions of all later segments


@dataclass(frozen=True, eq=False)
class PiecewiseAB:
    """Piecewise closed-form coefficient functions along one regime path.

    Built backward from the horizon: the last segment starts from
    terminal value 0, each earlier segment from the B value its
    successor attains at their shared edge, which makes B continuous at
    every edge and forces A(horizon) = B(horizon) = 0.
    """

    segments: tuple[_Segment, ...]
    start: float
    horizon: float
    vartheta: float

    def _locate(self, t: np.ndarray) -> np.ndarray:
        edges = np.array([s.t_lo for s in self.segments] + [self.horizon])
        idx = np.searchsorted(edges, t, side="right") - 1
        return np.clip(idx, 0, len(self.segments) - 1)

    def _eval(self, t):
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t_arr < self.start - 1e-12) or np.any(t_arr > self.horizon + 1e-12):
            raise DomainViolation("query time outside the path interval")
        idx = self._locate(t_arr)
        a_out = np.empty_like(t_arr)
        b_out = np.empty_like(t_arr)
        for j, seg in enumerate(self.segments):
            mask = idx == j
            if not mask.any():
                continue
            tau = seg.t_hi - t_arr[mask]
            big_a, b = _closed_ab(seg.kappa_t, seg.theta_t, seg.chi, seg.alpha_end, seg.beta, tau)
            a_out[mask] = big_a + seg.a_tail
            b_out[mask] = b
        return a_out, b_out

    def A(self, t):
        out = self._eval(t)[0]
        return float(out[0]) if np.ndim(t) == 0 else out

    def B(self, t):
        out = self._eval(t)[1]
        return float(out[0]) if np.ndim(t) == 0 else out


def compose_piecewise(path: RegimePath, p: HestonRegimeParams) -> PiecewiseAB:
    """Backward composition of the closed forms over a regime path.

    Works on the drift-adjusted coefficients: per state,
    kt = kappa - (delta/(1-delta)) rho chi lam_hat/nu (the adjusted
    reversion speed), tt = kappa theta / kt (so kt*tt = kappa*theta) and
    beta = (1/(2 vt)) (delta/(1-delta)) (lam_hat/nu)^2.  All of these
    are computed here, in one place, to keep the formulas from drifting
    apart between modules.
    """
    if np.any(path.states > p.n_states):
        raise ValueError("path states exceed the model's state count")
    vt = p.vartheta
    ratio = p.delta_ratio
    kt = p.tilted_kappa()
    if np.any(kt <= 0.0):
        raise DomainViolation("drift-adjusted reversion speed must stay positive")
    tt = p.kappa * p.theta / kt
    beta = ratio * p.price_of_risk_slope**2 / (2.0 * vt)

    edges = path.boundaries()
    segs: list[_Segment] = []
    alpha = 0.0
    a_tail = 0.0
    for j in range(len(path.states) - 1, -1, -1):
        e = int(path.states[j]) - 1
        tau_j = edges[j + 1] - edges[j]
        seg = _Segment(
            t_lo=float(edges[j]),
            t_hi=float(edges[j + 1]),
            state=e + 1,
            alpha_end=alpha,
            beta=float(beta[e]),
            kappa_t=float(kt[e]),
            theta_t=float(tt[e]),
            chi=float(p.chi[e]),
            a_tail=a_tail,
        )
        segs.append(seg)
        big_a, b = _closed_ab(seg.kappa_t, seg.theta_t, seg.chi, alpha, seg.beta, tau_j)
        alpha = float(b)
        a_tail += float(big_a)
    return PiecewiseAB(
        segments=tuple(reversed(segs)), start=path.start, horizon=path.horizon, vartheta=vt
    )


def _check_time_in_horizon(t, horizon: float):
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < -1e-12) or np.any(t_arr > horizon + 1e-12):
        raise DomainViolation(f"t must lie in [0, {horizon}]")


def B_separable(p: HestonRegimeParams, t):
    """Explicit factor-exponent B(t) for the separable no-leverage variant.

    B(t) = (-c (kappa + a) e^{-a (T-t)} + kappa - a)
           / (chi^2 (1 - c e^{-a (T-t)}))

    with a = sqrt(kappa^2 - (delta/(1-delta)) d^2 chi^2) and
    c = (kappa - a)/(kappa + a).  B(T) = 0.
    """
    if p.variant is not Variant.SMMH:
        raise DomainViolation("B_separable applies to the SMMH variant only")
    _check_time_in_horizon(t, p.horizon)
    kap, chi = float(p.kappa[0]), float(p.chi[0])
    disc = kap * kap - p.delta_ratio * p.d**2 * chi * chi
    if disc <= 0.0:
        raise DomainViolation("(delta/(1-delta)) d^2 < kappa^2/chi^2 fails")
    a = math.sqrt(disc)
    c = (kap - a) / (kap + a)
    decay = np.exp(-a * (p.horizon - np.asarray(t, dtype=float)))
    den = 1.0 - c * decay
    if np.any(den <= 0.0):
        raise DomainViolation("coefficient denominator vanished")
    out = (-c * (kap + a) * decay + kap - a) / (chi * chi * den)
    return float(out) if np.ndim(t) == 0 else out


def D_leverage(p: HestonRegimeParams, t):
    """Explicit factor exponent D(t) for the separable variant with leverage.

    With kb = kappa - (delta/(1-delta)) rho chi |d|,
    a = sqrt(kb^2 - (delta/(1-delta)) (chi^2/vt) d^2) and
    c = (kb - a)/(kb + a):

    D(t) = vt (-c (kb + a) e^{-a (T-t)} + kb - a)
           / (chi^2 (1 - c e^{-a (T-t)}))

    D(T) = 0, and D coincides with B_separable when rho = 0.
    """
    if p.variant is not Variant.SMMH_RHO:
        raise DomainViolation("D_leverage applies to the SMMH_RHO variant only")
    _check_time_in_horizon(t, p.horizon)
    vt = p.vartheta
    kap, chi = float(p.kappa[0]), float(p.chi[0])
    kb = kap - p.delta_ratio * p.rho * chi * abs(p.d)
    if kb <= 0.0:
        raise DomainViolation("leverage-adjusted reversion speed must be positive")
    disc = kb * kb - p.delta_ratio * (chi * chi / vt) * p.d**2
    if disc <= 0.0:
        raise DomainViolation("(delta/(1-delta)) d^2 < vt kb^2 / chi^2 fails")
    a = math.sqrt(disc)
    c = (kb - a) / (kb + a)
    decay = np.exp(-a * (p.horizon - np.asarray(t, dtype=float)))
    den = 1.0 - c * decay
    if np.any(den <= 0.0):
        raise DomainViolation("coefficient denominator vanished")
    out = vt * (-c * (kb + a) * decay + kb - a) / (chi * chi * den)
    return float(out) if np.ndim(t) == 0 else out


def b_separable_fn(p: HestonRegimeParams):
    """Scalar fast path of B_separable: validates once, then pure math.

    Intended for hot loops (quadrature, ODE right-hand sides); returns
    the same values as B_separable.
    """
    B_separable(p, 0.0)  # run the full validation once
    kap, chi = float(p.kappa[0]), float(p.chi[0])
    a = math.sqrt(kap * kap - p.delta_ratio * p.d**2 * chi * chi)
    c = (kap - a) / (kap + a)
    chi2, horizon = chi * chi, p.horizon

    def b_of(t: float) -> float:
        decay = math.exp(-a * (horizon - t))
        return (-c * (kap + a) * decay + kap - a) / (chi2 * (1.0 - c * decay))

    return b_of


def d_leverage_fn(p: HestonRegimeParams):
    """Scalar fast path of D_leverage: validates once, then pure math."""
    D_leverage(p, 0.0)  # run the full validation once
    vt = p.vartheta
    kap, chi = float(p.kappa[0]), float(p.chi[0])
    kb = kap - p.delta_ratio * p.rho * chi * abs(p.d)
    a = math.sqrt(kb * kb - p.delta_ratio * (chi * chi / vt) * p.d**2)
    c = (kb - a) / (kb + a)
    chi2, horizon = chi * chi, p.horizon

    def d_of(t: float) -> float:
        decay = math.exp(-a * (horizon - t))
        return vt * (-c * (kb + a) * decay + kb - a) / (chi2 * (1.0 - c * decay))

    return d_of
