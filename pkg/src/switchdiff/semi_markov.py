"""Semi-Markov switching environment.

A :class:`SemiMarkovSpec` couples an embedded jump chain ``pi(x, y)`` with a
holding-time law per state; the next state and the holding time are drawn
independently given the current state.

Random numbers come from NumPy's Philox4x64 counter-based generator.  The
stream for trajectory ``i`` of an ensemble seeded with ``s`` is
``Philox(SeedSequence([s, i]))``, so trajectories can be sampled in any order
or in parallel and still reproduce bit for bit.  Exponential holding times
use the inverse CDF ``-log1p(-U) / rate``; gamma holding times use NumPy's
``Generator.standard_gamma`` (Marsaglia-Tsang), scaled by ``1 / rate``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "HoldingDistribution",
    "SemiMarkovSpec",
    "Trajectory",
    "SpecReport",
    "validate_spec",
    "invariant_distribution",
    "occupation_fractions",
    "make_rng",
    "sample_trajectory",
    "empirical_occupation",
    "occupation_time",
    "spec_from_json",
    "load_spec",
    "SpecError",
]

KINDS = ("deterministic", "exponential", "gamma")


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class HoldingDistribution:
    """Holding-time law: ``deterministic(value)``, ``exponential(rate)`` or ``gamma(shape, rate)``."""

    kind: str
    value: float | None = None
    rate: float | None = None
    shape: float | None = None

    @classmethod
    def deterministic(cls, value):
        return cls("deterministic", value=float(value))

    @classmethod
    def exponential(cls, rate):
        return cls("exponential", rate=float(rate))

    @classmethod
    def gamma(cls, shape, rate):
        return cls("gamma", shape=float(shape), rate=float(rate))

    @property
    def mean(self) -> float:
        if self.kind == "deterministic":
            return self.value
        if self.kind == "exponential":
            return 1.0 / self.rate
        if self.kind == "gamma":
            return self.shape / self.rate
        raise SpecError(f"unknown holding law {self.kind!r}")

    def problems(self) -> list[str]:
        if self.kind not in KINDS:
            if self.kind == "uniform":
                return ["uniform holding times are not supported: their density vanishes on part of (0, inf)"]
            return [f"unknown holding law {self.kind!r}"]
        params = {"deterministic": ("value",), "exponential": ("rate",), "gamma": ("shape", "rate")}[self.kind]
        out = []
        for name in params:
            x = getattr(self, name)
            if x is None or not math.isfinite(x) or x <= 0:
                out.append(f"{self.kind} parameter {name} must be positive and finite, got {x!r}")
        return out

    def sample(self, rng: np.random.Generator) -> float:
        if self.kind == "deterministic":
            return self.value
        if self.kind == "exponential":
            return -math.log1p(-rng.random()) / self.rate
        return float(rng.standard_gamma(self.shape)) / self.rate

    def to_json(self) -> dict:
        d = {"kind": self.kind}
        for name in ("value", "rate", "shape"):
            if getattr(self, name) is not None:
                d[name] = getattr(self, name)
        return d


@dataclass(frozen=True, eq=False)
class SemiMarkovSpec:
    transition: np.ndarray
    holding: tuple[HoldingDistribution, ...]
    initial: int | np.ndarray = 0

    def __post_init__(self):
        p = np.array(self.transition, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise SpecError(f"transition matrix must be square, got shape {p.shape}")
        p.flags.writeable = False
        object.__setattr__(self, "transition", p)
        object.__setattr__(self, "holding", tuple(self.holding))
        if len(self.holding) != p.shape[0]:
            raise SpecError("need one holding law per state")
        if not np.isscalar(self.initial):
            init = np.array(self.initial, dtype=float)
            init.flags.writeable = False
            object.__setattr__(self, "initial", init)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def means(self) -> np.ndarray:
        return np.array([h.mean for h in self.holding])


@dataclass
class SpecReport:
    violations: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def _irreducible(p: np.ndarray) -> bool:
    n = p.shape[0]
    reach = (p > 0) | np.eye(n, dtype=bool)
    # transitive closure by repeated squaring of the boolean reachability matrix
    for _ in range(max(1, int(np.ceil(np.log2(max(n, 2)))))):
        reach = reach | ((reach.astype(np.int64) @ reach.astype(np.int64)) > 0)
    return bool(reach.all())


def validate_spec(spec: SemiMarkovSpec) -> SpecReport:
    """Check the switching assumptions; each violated clause becomes one message."""
    rep = SpecReport()
    p = spec.transition
    n = spec.n_states
    if n == 0:
        rep.violations.append("state space is empty")
        return rep
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        rep.violations.append("transition matrix has negative or non-finite entries")
    rows = p.sum(axis=1)
    bad = np.flatnonzero(np.abs(rows - 1.0) > 1e-12)
    if bad.size:
        rep.violations.append(
            f"transition matrix is not row-stochastic (rows {bad.tolist()} sum to {rows[bad].tolist()})"
        )
    if not _irreducible(p):
        rep.violations.append("irreducibility: the embedded jump chain is not irreducible")
    for i, h in enumerate(spec.holding):
        for msg in h.problems():
            rep.violations.append(f"holding law, state {i}: {msg}")
    if np.isscalar(spec.initial):
        if not 0 <= int(spec.initial) < n:
            rep.violations.append(f"initial state {spec.initial} out of range")
    else:
        init = spec.initial
        if init.shape != (n,) or np.any(init < 0) or abs(init.sum() - 1.0) > 1e-12:
            rep.violations.append("initial distribution must be a probability vector over the states")
    if not rep.violations and all(h.kind == "deterministic" for h in spec.holding) and n > 1:
        rep.warnings.append(
            "all holding times are deterministic; the clock is periodic, so convergence relies on covering cycles alone"
        )
    return rep


def invariant_distribution(p) -> np.ndarray:
    """Unique ``rho`` with ``rho P = rho``, ``sum rho = 1`` for an irreducible chain."""
    p = np.asarray(p, dtype=float)
    n = p.shape[0]
    if not _irreducible(p):
        raise SpecError("transition matrix is not irreducible; the invariant distribution is not unique")
    # replace one balance equation by the normalisation constraint
    a = (p.T - np.eye(n)).copy()
    a[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    rho = np.linalg.solve(a, b)
    # one refinement step keeps the residual at round-off level
    r = b - a @ rho
    rho = rho + np.linalg.solve(a, r)
    rho = np.clip(rho, 0.0, None)
    return rho / rho.sum()


def occupation_fractions(spec: SemiMarkovSpec) -> np.ndarray:
    """Long-run fraction of time per state: ``rho_x mu_x / sum_j rho_j mu_j``."""
    rho = invariant_distribution(spec.transition)
    w = rho * spec.means
    return w / w.sum()


@dataclass(frozen=True, eq=False)
class Trajectory:
    """A sampled path: ``states[k]`` is held for ``holdings[k]``.

    Renewal times are the cumulative sums of the holdings with ``T_0 = 0``;
    they are recomputed on access rather than stored.
    """

    states: np.ndarray
    holdings: np.ndarray
    seed: int | None
    horizon: float

    @property
    def renewal_times(self) -> np.ndarray:
        return np.concatenate(([0.0], np.cumsum(self.holdings)))

    @property
    def end_time(self) -> float:
        return float(self.renewal_times[-1])

    def state_at(self, t: float) -> int:
        idx = int(np.searchsorted(self.renewal_times, t, side="right")) - 1
        return int(self.states[min(idx, len(self.states) - 1)])

    def to_csv_rows(self):
        """Rows ``(n, X_n, tau_n, T_n)`` with ``tau_n`` the holding that ends at ``T_n``."""
        times = self.renewal_times
        yield ("n", "X_n", "tau_n", "T_n")
        for k, x in enumerate(self.states):
            tau = self.holdings[k - 1] if k > 0 else 0.0
            yield (k, int(x), f"{tau:.16e}", f"{times[k]:.16e}")


def make_rng(seed: int, index: int | None = None) -> np.random.Generator:
    entropy = [int(seed)] if index is None else [int(seed), int(index)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def _draw_categorical(rng, cdf) -> int:
    u = rng.random()
    idx = int(np.searchsorted(cdf, u, side="right"))
    return min(idx, len(cdf) - 1)


def sample_trajectory(spec: SemiMarkovSpec, horizon: float, seed: int, index: int | None = None) -> Trajectory:
    """Sample states and holding times until the renewal times pass ``horizon``."""
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    rep = validate_spec(spec)
    if not rep.ok:
        raise SpecError("; ".join(rep.violations))
    rng = make_rng(seed, index)
    cdfs = np.cumsum(spec.transition, axis=1)
    if np.isscalar(spec.initial):
        x = int(spec.initial)
    else:
        x = _draw_categorical(rng, np.cumsum(spec.initial))
    states, holds = [x], []
    t = 0.0
    while True:
        tau = spec.holding[x].sample(rng)
        holds.append(tau)
        t += tau
        if t >= horizon:
            break
        x = _draw_categorical(rng, cdfs[x])
        states.append(x)
    # the path ends with the holding that crosses the horizon; append the state
    # entered at that renewal so T_M >= horizon is a genuine renewal time
    x = _draw_categorical(rng, cdfs[x])
    states.append(x)
    holds_arr = np.asarray(holds, dtype=float)
    return Trajectory(np.asarray(states, dtype=int), holds_arr, seed, float(horizon))


def occupation_time(traj: Trajectory, t: float, n_states: int) -> np.ndarray:
    """Exact ``int_0^t 1{Z(s) = x} ds`` for every state ``x``."""
    times = traj.renewal_times
    if t < 0 or t > times[-1]:
        raise ValueError(f"time {t} outside the sampled range [0, {times[-1]}]")
    occ = np.zeros(n_states)
    k = int(np.searchsorted(times, t, side="right")) - 1
    k = min(k, len(traj.holdings))
    if k > 0:
        np.add.at(occ, traj.states[:k], traj.holdings[:k])
    if k < len(traj.holdings):
        occ[traj.states[k]] += t - times[k]
    return occ


def empirical_occupation(traj: Trajectory, t: float, n_states: int | None = None) -> np.ndarray:
    if not t > 0:
        raise ValueError("time must be positive")
    n = int(traj.states.max()) + 1 if n_states is None else n_states
    return occupation_time(traj, t, n) / t


def spec_from_json(obj) -> SemiMarkovSpec:
    """Parse ``{"pi": [[...]], "holding": [{"kind": ..., ...}], "initial": 0}``."""
    if isinstance(obj, str):
        obj = json.loads(obj)
    try:
        pi = obj["pi"]
        holding = [HoldingDistribution(**h) for h in obj["holding"]]
    except (KeyError, TypeError) as exc:
        raise SpecError(f"malformed switching spec: {exc}") from exc
    return SemiMarkovSpec(np.asarray(pi, dtype=float), holding, obj.get("initial", 0))


def load_spec(path) -> SemiMarkovSpec:
    return spec_from_json(json.loads(Path(path).read_text()))
