"""The random propagator and its convergence diagnostics.

Along a trajectory with states ``X_0, X_1, ...`` and renewal times
``0 = T_0 < T_1 < ...`` the propagator is the time-ordered product

    S(t) = exp((t - T_n) A_{X_n}) exp(tau_n A_{X_{n-1}}) ... exp(tau_1 A_{X_0})

for ``T_n <= t < T_{n+1}``; the newest factor is applied on the left.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import spectral
from .graph_core import OperatorModel
from .semi_markov import SemiMarkovSpec, Trajectory, occupation_fractions, occupation_time

__all__ = [
    "UNDERFLOW_FLOOR",
    "Ensemble",
    "DeviationSeries",
    "RateReport",
    "GronwallReport",
    "UnitClockReport",
    "propagate",
    "deviation_series",
    "covering_contraction_norm",
    "theoretical_rate",
    "estimate_rate",
    "fit_decay_rate",
    "gronwall_bound_check",
    "unit_clock_decay_check",
]

UNDERFLOW_FLOOR = 1e-300


class Ensemble:
    """Generators ``A_1..A_N`` on a shared weighted space, with cached spectra.

    Segment exponentials are memoised per ``(state, duration)``, which pays
    off for deterministic clocks where the same duration repeats.
    """

    def __init__(self, operators, labels=None, tol: float = spectral.DEFAULT_TOL, cache_size: int = 256):
        self.operators = list(operators)
        if not self.operators:
            raise ValueError("ensemble needs at least one operator")
        spectral._check_compatible(self.operators)
        self.labels = list(labels) if labels is not None else [str(i) for i in range(len(self.operators))]
        if len(self.labels) != len(self.operators):
            raise ValueError("one label per operator required")
        self.tol = tol
        self.spectra = [spectral.eigendecompose(op) for op in self.operators]
        for spec in self.spectra:
            if spec.eigenvalues.size and spec.eigenvalues[0] > tol * spec.scale:
                raise ValueError("ensemble operators must be negative semi-definite")
        self.P_K = spectral.intersection_projector(self.operators, tol)
        self._cache: dict[tuple[int, float], np.ndarray] = {}
        self._cache_size = cache_size

    def __len__(self):
        return len(self.operators)

    @property
    def dim(self) -> int:
        return self.operators[0].dim

    @property
    def mass(self) -> np.ndarray:
        return self.operators[0].mass

    def norm(self, matrix) -> float:
        return spectral.weighted_operator_norm(matrix, self.mass)

    def exp(self, state: int, duration: float) -> np.ndarray:
        key = (int(state), float(duration))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        mat = spectral.evolve(self.operators[state], duration, self.spectra[state], self.tol)
        if len(self._cache) < self._cache_size:
            self._cache[key] = mat
        return mat

    def kernel_rank(self, state: int) -> int:
        return int(self.spectra[state].kernel_mask(self.tol).sum())

    def qualifies(self, state: int) -> bool:
        """True when ``ker A_state`` is exactly the common kernel ``K``."""
        return self.kernel_rank(state) == self.P_K.rank

    def gap(self, state: int) -> float:
        """Spectral gap of ``A_state``; raises when the operator is zero."""
        spec = self.spectra[state]
        off = spec.eigenvalues[~spec.kernel_mask(self.tol)]
        if off.size == 0:
            raise ValueError(f"operator {state} has no non-zero eigenvalue")
        return float(off[0])

    def gap_off_kernel(self, state: int) -> float:
        """Largest eigenvalue of ``A_state`` restricted to ``K^perp`` (0 when its kernel exceeds K)."""
        if not self.qualifies(state):
            return 0.0
        if self.P_K.rank == self.dim:
            return 0.0
        return self.gap(state)


@dataclass
class DeviationSeries:
    times: np.ndarray
    deviation: np.ndarray
    residual_norm: np.ndarray
    state_at_time: np.ndarray
    trajectory_seed: int | None
    bound: np.ndarray | None = None

    @property
    def clamped(self) -> np.ndarray:
        return self.residual_norm < UNDERFLOW_FLOOR

    def csv_rows(self):
        yield ("t", "state", "deviation", "residual", "bound")
        bound = self.bound if self.bound is not None else np.full(len(self.times), np.nan)
        for t, z, d, r, b in zip(self.times, self.state_at_time, self.deviation, self.residual_norm, bound):
            yield (f"{t:.16e}", str(int(z)), f"{d:.16e}", f"{max(r, 0.0):.16e}", f"{b:.16e}")


def _check_pair(ens: Ensemble, traj: Trajectory):
    if traj.states.size and int(traj.states.max()) >= len(ens):
        raise ValueError(
            f"trajectory visits state {int(traj.states.max())} but the ensemble has {len(ens)} operators"
        )


def propagate(ens: Ensemble, traj: Trajectory, t: float) -> np.ndarray:
    _check_pair(ens, traj)
    times = traj.renewal_times
    if t < 0 or t > times[-1]:
        raise ValueError(f"time {t} outside the sampled range [0, {times[-1]}]")
    s = np.eye(ens.dim)
    n = 0
    while n < len(traj.holdings) and times[n + 1] <= t:
        s = ens.exp(traj.states[n], traj.holdings[n]) @ s
        n += 1
    if t > times[n]:
        s = ens.exp(traj.states[n], t - times[n]) @ s
    return s


class _Walker:
    """Advances ``S`` and ``P_K^perp S`` through a trajectory in time order."""

    def __init__(self, ens: Ensemble, traj: Trajectory):
        self.ens, self.traj = ens, traj
        self.times = traj.renewal_times
        self.n = 0
        self.s = np.eye(ens.dim)
        self.perp = ens.P_K.complement
        self.r = self.perp.copy()

    def at(self, t: float):
        ens, traj, times = self.ens, self.traj, self.times
        if t < times[self.n]:
            raise ValueError("query times must be non-decreasing")
        while self.n < len(traj.holdings) and times[self.n + 1] <= t:
            e = ens.exp(traj.states[self.n], traj.holdings[self.n])
            self.s = e @ self.s
            # re-projecting each step keeps round-off from leaking into K
            self.r = self.perp @ (e @ self.r)
            self.n += 1
        if t > times[self.n]:
            e = ens.exp(traj.states[self.n], t - times[self.n])
            return e @ self.s, self.perp @ (e @ self.r), int(traj.states[self.n])
        return self.s, self.r, int(traj.states[self.n])


def deviation_series(ens: Ensemble, traj: Trajectory, times, with_bound: bool = True) -> DeviationSeries:
    """``||S(t) - P_K||_m`` and ``||P_K^perp S(t)||_m`` at each query time.

    The deviation is taken from the plain product; the residual from the
    re-projected product, which stays accurate long after the deviation hits
    round-off.  ``bound`` is ``exp(sum_j g_j * occ_j(t))`` with ``g_j`` the
    gap of ``A_j`` on ``K^perp``.
    """
    _check_pair(ens, traj)
    times = np.asarray(times, dtype=float)
    if times.size and (times[0] < 0 or times[-1] > traj.end_time):
        raise ValueError("query times must lie within the sampled trajectory")
    if np.any(np.diff(times) < 0):
        raise ValueError("query times must be non-decreasing")
    walker = _Walker(ens, traj)
    dev = np.empty(times.size)
    res = np.empty(times.size)
    states = np.empty(times.size, dtype=int)
    p_k = ens.P_K.matrix
    for i, t in enumerate(times):
        s, r, z = walker.at(t)
        dev[i] = ens.norm(s - p_k)
        res[i] = ens.norm(r)
        states[i] = z
    bound = None
    if with_bound:
        gaps = np.array([ens.gap_off_kernel(j) for j in range(len(ens))])
        bound = np.array([math.exp(float(gaps @ occupation_time(traj, t, len(ens)))) for t in times])
        if ens.P_K.rank == ens.dim:
            bound[:] = 0.0
    return DeviationSeries(times, dev, res, states, traj.seed, bound)


def covering_contraction_norm(ens: Ensemble, sequence, durations) -> float:
    """``|| P_K^perp exp(t_L A_{k_L}) ... exp(t_1 A_{k_1}) ||_m`` for a covering sequence."""
    sequence = [int(k) for k in sequence]
    if np.isscalar(durations):
        durations = [float(durations)] * len(sequence)
    durations = [float(d) for d in durations]
    if len(durations) != len(sequence):
        raise ValueError("need one duration per sequence entry")
    if any(d <= 0 for d in durations):
        raise ValueError("durations must be positive")
    if any(k < 0 or k >= len(ens) for k in sequence):
        raise ValueError("sequence refers to a state outside the ensemble")
    missing = set(range(len(ens))) - set(sequence)
    if missing:
        raise ValueError(f"sequence does not cover states {sorted(missing)}")
    prod = ens.P_K.complement
    for k, d in zip(sequence, durations):
        prod = ens.exp(k, d) @ prod
    return ens.norm(ens.P_K.complement @ prod)


@dataclass
class RateReport:
    """Theoretical decay rates.

    ``averaged`` is ``-sum_j g_j Theta_j`` with ``g_j`` the gap of ``A_j`` on
    ``K^perp`` (zero for states whose kernel exceeds ``K``).  ``conservative``
    is ``-s_d(A_ref) Theta_ref`` for the reference state, or ``None`` when no
    state has kernel equal to ``K``.
    """

    occupation: np.ndarray
    qualifying: list[bool]
    gaps: list[float | None]
    averaged: float
    conservative: float | None
    reference_state: int | None
    per_state: dict[int, float] = field(default_factory=dict)
    note: str = ""

    def table(self) -> list[dict]:
        return [
            {
                "state": j,
                "theta": float(self.occupation[j]),
                "kernel_is_K": self.qualifying[j],
                "gap": self.gaps[j],
                "bound": self.per_state.get(j),
            }
            for j in range(len(self.qualifying))
        ]


def theoretical_rate(ens: Ensemble, spec: SemiMarkovSpec, reference_state: int | None = None) -> RateReport:
    if spec.n_states != len(ens):
        raise ValueError("switching spec and ensemble have different state counts")
    theta = occupation_fractions(spec)
    qual = [ens.qualifies(j) for j in range(len(ens))]
    trivial = ens.P_K.rank == ens.dim
    gaps: list[float | None] = []
    per_state = {}
    for j in range(len(ens)):
        if qual[j] and not trivial:
            g = ens.gap(j)
            gaps.append(g)
            per_state[j] = -g * float(theta[j])
        else:
            gaps.append(None)
    averaged = float(sum(per_state.values()))
    if reference_state is None:
        reference_state = next((j for j in range(len(ens)) if qual[j] and not trivial), None)
        note = "" if reference_state is not None else "no operator has kernel equal to K; conservative bound unavailable"
    elif not qual[reference_state] or trivial:
        note = f"state {reference_state} does not have kernel equal to K; conservative bound unavailable"
        reference_state = None
    else:
        note = ""
    conservative = per_state.get(reference_state) if reference_state is not None else None
    return RateReport(theta, qual, gaps, averaged, conservative, reference_state, per_state, note)


def fit_decay_rate(times, values, window=None) -> float:
    """Least-squares slope of ``-log(values)`` against ``times`` inside ``window``."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    keep = v > UNDERFLOW_FLOOR
    if window is not None:
        lo, hi = window
        keep &= (t >= lo) & (t <= hi)
    if keep.sum() < 3:
        raise ValueError("fewer than three usable samples in the fitting window")
    slope = np.polyfit(t[keep], -np.log(v[keep]), 1)[0]
    return float(slope)


def estimate_rate(series: DeviationSeries, window=None) -> float:
    """Empirical exponential rate of ``||P_K^perp S(t)||`` over ``window``."""
    return fit_decay_rate(series.times, series.residual_norm, window)


@dataclass
class GronwallReport:
    times: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    margin: float

    @property
    def ok(self) -> bool:
        return self.margin >= -1e-9


def gronwall_bound_check(ens: Ensemble, traj: Trajectory, f, times, reference_state: int = 0) -> GronwallReport:
    """Check ``||P^perp S(t) f||^2 <= ||P^perp f||^2 exp(2 s_d(A_ref) occ_ref(t))``.

    ``margin`` is the smallest ``(rhs - lhs) / ||P^perp f||^2`` (or the
    smallest ``rhs - lhs`` when ``f`` lies in ``K``).
    """
    _check_pair(ens, traj)
    if not ens.qualifies(reference_state):
        raise ValueError(f"kernel of operator {reference_state} differs from K; the bound does not apply")
    if ens.P_K.rank == ens.dim:
        raise ValueError("K is the whole space; there is nothing to decay")
    s_d = ens.gap(reference_state)
    f = np.asarray(f, dtype=float)
    mass = ens.mass
    perp = ens.P_K.complement
    pf = perp @ f
    base = float(np.sum(mass * pf * pf))
    # f in K up to round-off: both sides are zero, compare absolutely
    if base <= (1e-12) ** 2 * float(np.sum(mass * f * f)):
        base = 0.0
    times = np.asarray(times, dtype=float)
    walker = _Walker(ens, traj)
    lhs = np.empty(times.size)
    rhs = np.empty(times.size)
    for i, t in enumerate(times):
        _, r, _ = walker.at(t)
        u = r @ f
        lhs[i] = float(np.sum(mass * u * u))
        occ = occupation_time(traj, t, len(ens))[reference_state]
        rhs[i] = base * math.exp(2.0 * s_d * occ)
    diff = rhs - lhs
    margin = float(np.min(diff / base)) if base > 0 else float(np.min(diff, initial=0.0))
    return GronwallReport(times, lhs, rhs, margin)


@dataclass
class UnitClockReport:
    delta: float
    steps: np.ndarray
    residual: np.ndarray
    bound: np.ndarray
    violations: int
    min_ratio_margin: float

    @property
    def ok(self) -> bool:
        return self.violations == 0


def unit_clock_decay_check(ens: Ensemble, traj: Trajectory, rel_tol: float = 1e-9) -> UnitClockReport:
    """Check ``||P_0^perp S(k)|| <= delta^(k-1)`` at integer times on a unit clock.

    ``delta = max_i ||P_0^perp exp(L_i)||``.  ``min_ratio_margin`` is the
    smallest ``1 - residual / bound`` over the checked steps.
    """
    _check_pair(ens, traj)
    if not np.allclose(traj.holdings, 1.0, rtol=0, atol=1e-15):
        raise ValueError("unit-clock check needs every holding time equal to 1")
    ones = np.ones(ens.dim)
    for j, op in enumerate(ens.operators):
        if ens.kernel_rank(j) != 1 or np.abs(op.matrix @ ones).max() > 1e-9 * ens.spectra[j].scale:
            raise ValueError(f"operator {j} does not have kernel spanned by the constants")
    perp = ens.P_K.complement
    delta = max(ens.norm(perp @ ens.exp(j, 1.0)) for j in range(len(ens)))
    k_max = int(math.floor(traj.end_time))
    steps = np.arange(1, k_max + 1)
    walker = _Walker(ens, traj)
    residual = np.array([ens.norm(walker.at(float(k))[1]) for k in steps])
    with np.errstate(under="ignore"):
        bound = delta ** (steps - 1.0)
    over = residual > bound * (1.0 + rel_tol)
    ratios = np.where(bound > 0, 1.0 - residual / np.where(bound > 0, bound, 1.0), 0.0)
    return UnitClockReport(
        delta=delta,
        steps=steps,
        residual=residual,
        bound=bound,
        violations=int(over.sum()),
        min_ratio_margin=float(ratios.min(initial=1.0)),
    )
