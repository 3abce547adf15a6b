"""Finite-state continuous-time Markov chain: validation, simulation, path functionals.

The chain is specified by an intensity (generator) matrix Q, where the
off-diagonal entry q_ij >= 0 is the instantaneous rate of jumping from
state i to state j and every row sums to zero.  States are labeled
1..l to match the convention used in parameter files and CSV output.

Holding times in state i are Exponential(-q_ii); on a jump the next
state j is drawn with probability q_ij / (-q_ii).  A state with
q_ii = 0 is absorbing and never jumps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad

from .errors import NegativeRate, RowSumNonZero

__all__ = [
    "MarkovChainSpec",
    "RegimePath",
    "validate_intensity",
    "sample_path",
    "transition_probabilities",
    "occupation_integral",
    "path_stream",
]

_ROW_SUM_TOL = 1e-12
_SERIES_TOL = 1e-16
_MAX_STATES = 32


@dataclass(frozen=True, eq=False)
class MarkovChainSpec:
    """Validated intensity matrix of a finite-state chain.

    Attributes
    ----------
    n_states : int
        Number of states l (labels run 1..l).
    intensity : ndarray
        The l x l generator matrix Q, per unit time (years).
    """

    n_states: int
    intensity: np.ndarray

    def rate_out(self, state: int) -> float:
        """Total jump rate -q_ii out of a state label (1-based)."""
        return -float(self.intensity[state - 1, state - 1])


@dataclass(frozen=True, eq=False)
class RegimePath:
    """One piecewise-constant regime trajectory on [start, horizon].

    ``states`` has length K+1 for K jumps: states[j] is occupied on
    [t_j, t_{j+1}) with t_0 = start and t_{K+1} = horizon.  A jump
    landing exactly at the horizon is kept (the closed right endpoint),
    consistent with half-open occupation intervals.
    """

    start: float
    horizon: float
    jump_times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        jt = np.asarray(self.jump_times, dtype=float)
        st = np.asarray(self.states, dtype=np.int64)
        if st.ndim != 1 or jt.ndim != 1 or len(st) != len(jt) + 1:
            raise ValueError("states must have exactly one more entry than jump_times")
        if len(jt) and (jt[0] <= self.start or jt[-1] > self.horizon + 1e-15):
            raise ValueError("jump times must lie in (start, horizon]")
        if len(jt) > 1 and np.any(np.diff(jt) <= 0):
            raise ValueError("jump times must be strictly increasing")
        if np.any(st[1:] == st[:-1]):
            raise ValueError("consecutive states must differ across a jump")
        object.__setattr__(self, "jump_times", jt)
        object.__setattr__(self, "states", st)

    @property
    def n_jumps(self) -> int:
        return len(self.jump_times)

    def state_at(self, t):
        """State label occupied at time(s) t, right-continuous."""
        idx = np.searchsorted(self.jump_times, t, side="right")
        out = self.states[idx]
        return out if np.ndim(t) else int(out)

    def boundaries(self) -> np.ndarray:
        """Segment edges start = b_0 < ... < b_{K+1} = horizon."""
        return np.concatenate(([self.start], self.jump_times, [self.horizon]))


def validate_intensity(matrix) -> MarkovChainSpec:
    """Validate a candidate intensity matrix and wrap it in a spec.

    Raises
    ------
    NegativeRate
        If any off-diagonal entry is negative.
    RowSumNonZero
        If any row sum exceeds 1e-12 in magnitude.
    """
    q = np.array(matrix, dtype=float)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise ValueError(f"intensity matrix must be square, got shape {q.shape}")
    l = q.shape[0]
    if l < 1 or l > _MAX_STATES:
        raise ValueError(f"n_states must be in [1, {_MAX_STATES}], got {l}")
    off = q[~np.eye(l, dtype=bool)]
    if off.size and off.min() < 0:
        bad = sorted(
            (i + 1, j + 1)
            for i in range(l)
            for j in range(l)
            if i != j and q[i, j] < 0
        )
        raise NegativeRate(f"negative off-diagonal rate(s) at {bad}")
    sums = q.sum(axis=1)
    if np.any(np.abs(sums) > _ROW_SUM_TOL):
        bad_rows = [i + 1 for i in range(l) if abs(sums[i]) > _ROW_SUM_TOL]
        raise RowSumNonZero(f"row(s) {bad_rows} sum to {sums[np.array(bad_rows) - 1]}")
    q.setflags(write=False)
    return MarkovChainSpec(n_states=l, intensity=q)


def path_stream(seed, index: int) -> np.random.Generator:
    """Dedicated RNG stream for one simulated path.

    Streams are derived deterministically from (seed, path index), so a
    run is reproducible no matter how paths are batched across workers.
    """
    return np.random.default_rng(np.random.SeedSequence((int(seed), int(index))))


def sample_path(
    spec: MarkovChainSpec,
    t0: float,
    horizon: float,
    state0: int,
    rng: np.random.Generator,
) -> RegimePath:
    """Draw one chain trajectory on [t0, horizon] started in state0.

    Holding times use inverse-CDF exponential sampling on uniforms from
    ``rng``; the successor state uses one more uniform.  Absorbing
    states (zero outflow rate) simply hold forever.
    """
    if not t0 < horizon:
        raise ValueError("t0 must be strictly before the horizon")
    if not 1 <= state0 <= spec.n_states:
        raise ValueError(f"state0 must be in 1..{spec.n_states}")
    q = spec.intensity
    jump_times: list[float] = []
    states = [state0]
    t, state = t0, state0
    while True:
        rate = -q[state - 1, state - 1]
        if rate <= 0.0:
            break
        u = rng.random()
        while u == 0.0:  # zero holding time would repeat a jump instant
            u = rng.random()
        t = t - math.log1p(-u) / rate
        if t > horizon:
            break
        targets = np.flatnonzero(q[state - 1] > 0.0)
        cum = np.cumsum(q[state - 1, targets])
        cum /= cum[-1]
        state = int(targets[np.searchsorted(cum, rng.random(), side="right")]) + 1
        jump_times.append(t)
        states.append(state)
        if t == horizon:  # jump exactly at the closed right endpoint
            break
    return RegimePath(
        start=t0,
        horizon=horizon,
        jump_times=np.asarray(jump_times),
        states=np.asarray(states, dtype=np.int64),
    )


def transition_probabilities(spec: MarkovChainSpec, t: float) -> np.ndarray:
    """Transition matrix exp(Q t) by scaling-and-squaring.

    The Taylor series is truncated once the term's max-norm falls below
    1e-16; the argument is pre-scaled by 2**s so the series converges in
    a few terms, then squared s times.  Rows sum to 1 within 1e-10.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    l = spec.n_states
    a = spec.intensity * float(t)
    norm = np.linalg.norm(a, np.inf)
    s = 0 if norm <= 0.5 else int(math.ceil(math.log2(norm))) + 1
    a /= 2.0**s
    p = np.eye(l)
    term = np.eye(l)
    k = 1
    while True:
        term = term @ a / k
        p += term
        if np.linalg.norm(term, np.inf) < _SERIES_TOL or k > 80:
            break
        k += 1
    for _ in range(s):
        p = p @ p
    # rounding can leave entries a hair outside [0, 1]
    return np.clip(p, 0.0, 1.0)


def occupation_integral(
    path: RegimePath,
    g: Callable[[float, int], float],
    t: float,
    horizon: float,
) -> float:
    """Integrate s -> g(s, state(s)) along a regime path over [t, horizon].

    The integral is computed exactly segment by segment: within one
    segment the state is constant and adaptive quadrature (absolute
    tolerance 1e-12) handles the remaining time dependence.
    """
    if not path.start <= t <= horizon <= path.horizon + 1e-12:
        raise ValueError("need path.start <= t <= horizon <= path.horizon")
    edges = path.boundaries()
    total = 0.0
    for j in range(len(path.states)):
        lo = max(edges[j], t)
        hi = min(edges[j + 1], horizon)
        if hi <= lo:
            continue
        state = int(path.states[j])
        val, _ = quad(g, lo, hi, args=(state,), epsabs=1e-12, epsrel=1e-12, limit=200)
        total += val
    return total
