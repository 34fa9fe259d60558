"""Numerical verification suites.

Each ``check_*`` function runs one acceptance criterion end to end on
seeded random instances and returns a :class:`Verdict`.  Suites group them
for ``switchdiff verify <suite>``.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import graph_core as gc
from . import metric_graph as mgr
from . import propagator as prop
from . import semi_markov as sm
from . import spectral as sp
from .experiment import shipped_config, build_ensemble

__all__ = ["Verdict", "SUITES", "run_suite", "CHECKS"]


@dataclass
class Verdict:
    criterion: int
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] criterion {self.criterion:>2} {self.name} ({self.seconds:.2f}s)"

    def to_json(self) -> dict:
        return {
            "criterion": self.criterion,
            "name": self.name,
            "passed": bool(self.passed),
            "seconds": round(self.seconds, 3),
            "details": _jsonable(self.details),
        }


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def _timed(criterion, name):
    def wrap(fn):
        def run(*args, **kwargs):
            t0 = time.perf_counter()
            passed, details = fn(*args, **kwargs)
            return Verdict(criterion, name, bool(passed), details, time.perf_counter() - t0)

        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run

    return wrap


# random instances -----------------------------------------------------------


def random_graph(rng, n, p_edge=0.3, weights=(0.1, 10.0), m=None, weighted=True):
    pairs = [(v, w) for v in range(n) for w in range(v + 1, n) if rng.random() < p_edge]
    mu = rng.uniform(*weights, size=len(pairs)) if weighted else None
    return gc.build_graph(n, pairs, m, mu)


def random_connected_graph(rng, n, extra=0.3, weights=None, m=None):
    order = rng.permutation(n)
    pairs = {tuple(sorted((int(order[k]), int(order[rng.integers(0, k)])))) for k in range(1, n)}
    for v in range(n):
        for w in range(v + 1, n):
            if rng.random() < extra:
                pairs.add((v, w))
    pairs = sorted(pairs)
    mu = rng.uniform(*weights, size=len(pairs)) if weights is not None else None
    return gc.build_graph(n, pairs, m, mu)


def random_ensemble(rng, max_graphs=4, max_vertices=10, p_edge=0.3, weights=(0.1, 10.0)):
    n_graphs = int(rng.integers(1, max_graphs + 1))
    n = int(rng.integers(2, max_vertices + 1))
    m = rng.uniform(*weights, size=n)
    return [random_graph(rng, n, p_edge, weights, m) for _ in range(n_graphs)]


def random_gluing(rng, n_edges):
    n_points = 2 * n_edges
    k = int(rng.integers(1, n_points + 1))
    labels = rng.integers(0, k, size=n_points)
    classes = {}
    for p, lab in enumerate(labels):
        classes.setdefault(int(lab), []).append((p // 2, p % 2))
    return list(classes.values())


def random_metric_graph(rng, n_edges, lengths=None):
    if lengths is None:
        lengths = rng.uniform(0.5, 2.0, size=n_edges)
    return mgr.build_metric_graph(lengths, random_gluing(rng, n_edges))


def random_connected_metric_graph(rng, max_edges=6):
    while True:
        mg = random_metric_graph(rng, int(rng.integers(1, max_edges + 1)))
        if len(mgr.metric_components(mg)) == 1 and not mgr.is_lone_loop(mg):
            return mg


def constants_projector(mass):
    mass = np.asarray(mass, dtype=float)
    return np.outer(np.ones(mass.size), mass) / mass.sum()


def two_cycle(holding):
    return sm.SemiMarkovSpec(np.array([[0.0, 1.0], [1.0, 0.0]]), [holding, holding], 0)


def random_stochastic(rng, n):
    p = rng.uniform(0.05, 1.0, size=(n, n))
    return p / p.sum(axis=1, keepdims=True)


# criteria -------------------------------------------------------------------


@_timed(1, "union-kernel identity")
def check_union_kernel(n_ensembles=200, seed=1):
    rng = np.random.default_rng(seed)
    worst, rank_fail = 0.0, 0
    for _ in range(n_ensembles):
        graphs = random_ensemble(rng)
        p_k = sp.intersection_projector([gc.laplacian(g) for g in graphs])
        union = gc.union_graphs(graphs)
        p_u = sp.kernel_projector(gc.laplacian(union))
        worst = max(worst, sp.weighted_operator_norm(p_k.matrix - p_u.matrix, p_k.mass))
        rank_fail += p_k.rank != len(gc.connected_components(union))
    return worst <= 1e-8 and rank_fail == 0, {"max_projector_gap": worst, "rank_mismatches": rank_fail}


def _constants_match(p_k, tol=1e-8):
    if p_k.rank != 1:
        return False
    diff = p_k.matrix - constants_projector(p_k.mass)
    return sp.weighted_operator_norm(diff, p_k.mass) <= tol


@_timed(2, "connectivity dichotomy")
def check_dichotomy(n_ensembles=200, n_metric=50, seed=1, metric_seed=2):
    rng = np.random.default_rng(seed)
    bad_comb = 0
    connected_comb = 0
    for _ in range(n_ensembles):
        graphs = random_ensemble(rng)
        p_k = sp.intersection_projector([gc.laplacian(g) for g in graphs])
        connected = len(gc.connected_components(gc.union_graphs(graphs))) == 1
        connected_comb += connected
        bad_comb += connected != _constants_match(p_k)
    rng = np.random.default_rng(metric_seed)
    bad_metric = 0
    connected_metric = 0
    for _ in range(n_metric):
        n_edges = int(rng.integers(1, 7))
        lengths = rng.uniform(0.5, 2.0, size=n_edges)
        graphs = [random_metric_graph(rng, n_edges, lengths) for _ in range(int(rng.integers(1, 4)))]
        counts = mgr.mesh_counts(graphs[0], 0.1)
        ops = [mgr.discretize(g, counts=counts).operator for g in graphs]
        p_k = sp.intersection_projector(ops)
        connected = len(mgr.metric_components(mgr.union_metric(graphs))) == 1
        connected_metric += connected
        bad_metric += connected != _constants_match(p_k)
    details = {
        "combinatorial_counterexamples": bad_comb,
        "metric_counterexamples": bad_metric,
        "combinatorial_connected": connected_comb,
        "metric_connected": connected_metric,
    }
    return bad_comb == 0 and bad_metric == 0, details


@_timed(3, "fixed-clock contraction")
def check_covering_contraction(n_sequences=100, seed=3):
    rng = np.random.default_rng(seed)
    deltas = (0.01, 0.1, 1.0)
    worst = {d: 0.0 for d in deltas}
    for _ in range(n_sequences):
        graphs = random_ensemble(rng)
        ens = prop.Ensemble([gc.laplacian(g) for g in graphs])
        n = len(graphs)
        seq = list(rng.permutation(n)) + list(rng.integers(0, n, size=int(rng.integers(0, n + 1))))
        seq = [int(k) for k in rng.permutation(seq)]
        for d in deltas:
            worst[d] = max(worst[d], prop.covering_contraction_norm(ens, seq, d))
    margins = {d: 1.0 - worst[d] for d in deltas}
    passed = all(worst[d] < 1.0 for d in deltas) and margins[1.0] > 1e-10
    return passed, {"max_norm": worst, "min_margin": margins}


@_timed(4, "pathwise convergence")
def check_pathwise(config="two_components"):
    cfg = shipped_config(config)
    ens = build_ensemble(cfg)
    finals, worst_rise = [], 0.0
    for i in range(cfg.n_trajectories):
        traj = sm.sample_trajectory(cfg.switching, cfg.horizon, cfg.seed, i)
        series = prop.deviation_series(ens, traj, cfg.times, with_bound=False)
        finals.append(float(series.deviation[-1]))
        worst_rise = max(worst_rise, float(np.max(np.diff(series.residual_norm), initial=0.0)))
    passed = max(finals) <= 1e-6 and worst_rise <= 1e-9 and ens.P_K.rank == 1
    return passed, {"worst_final_deviation": max(finals), "max_residual_rise": worst_rise, "finals": finals}


@_timed(5, "exponential rate and Gronwall bound")
def check_rates(config="path_k3_rates"):
    cfg = shipped_config(config)
    ens = build_ensemble(cfg)
    report = prop.theoretical_rate(ens, cfg.switching, reference_state=0)
    alpha = report.conservative
    rates, margins = [], []
    for i in range(cfg.n_trajectories):
        traj = sm.sample_trajectory(cfg.switching, cfg.horizon, cfg.seed, i)
        series = prop.deviation_series(ens, traj, cfg.times, with_bound=False)
        rates.append(prop.estimate_rate(series, cfg.rate_window))
        f = sm.make_rng(cfg.seed, 10_000 + i).standard_normal(ens.dim)
        margins.append(prop.gronwall_bound_check(ens, traj, f, cfg.times, 0).margin)
    passed = min(rates) >= 0.9 * alpha and min(margins) >= -1e-9
    details = {
        "alpha_conservative": alpha,
        "alpha_averaged": report.averaged,
        "min_empirical_rate": min(rates),
        "median_empirical_rate": float(np.median(rates)),
        "min_gronwall_margin": min(margins),
    }
    return passed, details


@_timed(6, "unit-clock bound")
def check_unit_clock(n_ensembles=20, seed=6, horizon=50):
    rng = np.random.default_rng(seed)
    violations, margin = 0, 1.0
    for _ in range(n_ensembles):
        n = int(rng.integers(2, 9))
        n_graphs = int(rng.integers(1, 5))
        graphs = [random_connected_graph(rng, n, 0.2, weights=(0.5, 2.0)) for _ in range(n_graphs)]
        ens = prop.Ensemble([gc.laplacian(g) for g in graphs])
        spec = sm.SemiMarkovSpec(
            random_stochastic(rng, n_graphs), [sm.HoldingDistribution.deterministic(1.0)] * n_graphs, 0
        )
        traj = sm.sample_trajectory(spec, horizon, int(rng.integers(0, 2**31)))
        rep = prop.unit_clock_decay_check(ens, traj)
        violations += rep.violations
        margin = min(margin, rep.min_ratio_margin)
    return violations == 0, {"violations": violations, "min_ratio_margin": margin}


@_timed(7, "occupation fractions")
def check_occupation(seeds=range(10)):
    h = sm.HoldingDistribution
    specs = [
        sm.SemiMarkovSpec(
            np.array([[0.0, 0.8, 0.2], [0.2, 0.0, 0.8], [0.8, 0.2, 0.0]]),
            [h.exponential(1.0), h.gamma(2.0, 2.0), h.gamma(4.0, 2.0)],
            0,
        ),
        sm.SemiMarkovSpec(
            np.array([[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]]),
            [h.gamma(2.0, 1.0), h.exponential(2.0), h.gamma(3.0, 1.5)],
            0,
        ),
    ]
    worst = 0.0
    for spec in specs:
        theta = sm.occupation_fractions(spec)
        # largest mean holding, so every state contributes >= 1e4 mean holdings
        horizon = 1e4 * float(spec.means.max())
        for s in seeds:
            traj = sm.sample_trajectory(spec, horizon, s)
            emp = sm.empirical_occupation(traj, horizon, 3)
            worst = max(worst, float(np.abs(emp - theta).sum()))
    return worst <= 0.02, {"max_l1_distance": worst}


@_timed(8, "metric spectra")
def check_metric_spectra(n=2000):
    k = np.arange(1, 6)
    single = sp.eigendecompose(mgr.discretize(mgr.build_metric_graph([2.0]), counts=n).operator).eigenvalues
    exact = -(k**2) * math.pi**2 / 4
    rel = np.abs(single[1:6] / exact - 1)

    b = sp.eigendecompose(mgr.discretize(mgr.model_b(), counts=n // 2).operator).eigenvalues
    kk = np.arange(0, 6)
    pairs = b[: 2 * kk.size].reshape(-1, 2)
    target = -(kk**2) * math.pi**2
    rel_b = np.abs(pairs[1:] / target[1:, None] - 1)
    kernel_ok = bool(np.all(np.abs(pairs[0]) <= 1e-9 * max(1.0, abs(b[-1]))))
    gap_ok = bool(b[2 * kk.size] < target[-1] * (1 + 1e-2))

    coarse, fine = 200, 400
    ec = sp.eigendecompose(mgr.discretize(mgr.build_metric_graph([2.0]), counts=coarse).operator).eigenvalues
    ef = sp.eigendecompose(mgr.discretize(mgr.build_metric_graph([2.0]), counts=fine).operator).eigenvalues
    ratio = np.abs(ec[1:6] - exact) / np.abs(ef[1:6] - exact)
    passed = (
        rel.max() <= 1e-3
        and rel_b.max() <= 1e-3
        and kernel_ok
        and gap_ok
        and bool(np.all((ratio >= 3.6) & (ratio <= 4.4)))
    )
    details = {
        "single_edge_rel_err": rel,
        "model_b_rel_err": rel_b.max(),
        "model_b_kernel_pair": kernel_ok,
        "richardson_ratio": ratio,
    }
    return passed, details


@_timed(9, "metric lambda_2 band")
def check_lambda2_band(n_graphs=30, seed=9, h_target=0.02):
    rng = np.random.default_rng(seed)
    failures, worst_lo, worst_hi = 0, math.inf, math.inf
    for _ in range(n_graphs):
        mg = random_connected_metric_graph(rng)
        disc = mgr.discretize(mg, h_target=h_target)
        lam2 = sp.spectral_gap(disc.operator)
        lo, hi = mgr.lambda2_bounds(mg)
        slack = 10 * disc.h**2 * math.pi**2 * mg.n_edges**2 / mg.total_length**2
        worst_lo = min(worst_lo, lam2 - (lo - slack))
        worst_hi = min(worst_hi, (hi + slack) - lam2)
        failures += not (lo - slack <= lam2 <= hi + slack)
    interval = mgr.build_metric_graph([1.7])
    lam_i = sp.spectral_gap(mgr.discretize(interval, counts=1000).operator)
    interval_rel = abs(lam_i / mgr.lambda2_bounds(interval)[1] - 1)
    details = {
        "failures": failures,
        "min_margin_lower": worst_lo,
        "min_margin_upper": worst_hi,
        "interval_rel_err": interval_rel,
    }
    return failures == 0 and interval_rel <= 1e-3, details


TOY_ENSEMBLES = {
    "neumann+krein": (("neumann", "krein_surrogate"), 1e-6),
    "neumann+dirichlet": (("neumann", "dirichlet"), 1e-6),
    "krein+dirichlet": (("krein_surrogate", "dirichlet"), 1e-6),
    "variable_p+dirichlet": (("variable_p", "dirichlet"), 1e-6),
    "neumann+dirichlet_shifted": (("neumann", "dirichlet_shifted"), 1e-3),
}


@_timed(10, "interval toy models")
def check_toy(n=200, horizon=100.0, seeds=range(10)):
    spec = two_cycle(sm.HoldingDistribution.exponential(1.0))
    details, passed = {}, True
    for name, (kinds, threshold) in TOY_ENSEMBLES.items():
        ens = prop.Ensemble([mgr.interval_operator(k, n) for k in kinds])
        expected_rank = 1 if "krein_surrogate" in kinds and "dirichlet" not in kinds else 0
        rank_ok = ens.P_K.rank == expected_rank
        if expected_rank == 1:
            rank_ok = rank_ok and _constants_match(ens.P_K)
        finals = []
        for s in seeds:
            traj = sm.sample_trajectory(spec, horizon, s)
            series = prop.deviation_series(ens, traj, [0.0, horizon], with_bound=False)
            finals.append(float(series.deviation[-1]))
        ok = rank_ok and max(finals) <= threshold
        passed &= ok
        details[name] = {"kernel_rank": ens.P_K.rank, "worst_final_deviation": max(finals), "threshold": threshold}
    return passed, details


def _connected_unweighted(n):
    pairs = list(itertools.combinations(range(n), 2))
    for mask in range(1 << len(pairs)):
        edges = [pairs[i] for i in range(len(pairs)) if mask >> i & 1]
        if len(edges) < n - 1:
            continue
        g = gc.build_graph(n, edges)
        if len(gc.connected_components(g)) == 1:
            yield g


def _is_path(g):
    return g.n_vertices - 1 == len(g.edges) and g.degree().max(initial=0) <= 2


@_timed(11, "Fiedler bounds")
def check_fiedler(max_vertices=6, n_pairs=100, seed=11):
    bad_bounds, bad_equality, count = 0, 0, 0
    for n in range(2, max_vertices + 1):
        graphs = list(_connected_unweighted(n))
        mats = np.stack([gc.laplacian(g).matrix for g in graphs])
        lam2 = np.linalg.eigvalsh(mats)[:, -2]
        upper = -2 * (1 - math.cos(math.pi / n))
        for g, lam in zip(graphs, lam2):
            count += 1
            if not (-n - 1e-9 <= lam <= upper + 1e-9):
                bad_bounds += 1
            if (abs(lam - upper) <= 1e-9) != _is_path(g):
                bad_equality += 1
    rng = np.random.default_rng(seed)
    bad_order = 0
    for _ in range(n_pairs):
        n = int(rng.integers(3, 11))
        base = random_connected_graph(rng, n, 0.0)
        extras = []
        for _ in range(2):
            add = [e for e in itertools.combinations(range(n), 2) if rng.random() < 0.3]
            extras.append(gc.build_graph(n, sorted(set(base.edges) | set(add))))
        cap = gc.intersection_graphs(extras)
        cup = gc.union_graphs(extras)
        l_cap = sp.spectral_gap(gc.laplacian(cap))
        l_cup = sp.spectral_gap(gc.laplacian(cup))
        for g in extras:
            lk = sp.spectral_gap(gc.laplacian(g))
            if not (l_cup - 1e-9 <= lk <= l_cap + 1e-9):
                bad_order += 1
    # weighted variant with the max/min union and intersection weights: reported, not asserted
    weighted_bad = 0
    for _ in range(n_pairs):
        n = int(rng.integers(3, 11))
        base = random_connected_graph(rng, n, 0.0)
        extras = []
        for _ in range(2):
            add = [e for e in itertools.combinations(range(n), 2) if rng.random() < 0.3]
            edges = sorted(set(base.edges) | set(add))
            extras.append(gc.build_graph(n, edges, rng.uniform(0.1, 10, n), rng.uniform(0.1, 10, len(edges))))
        l_cap = sp.spectral_gap(gc.laplacian(gc.intersection_graphs(extras)))
        l_cup = sp.spectral_gap(gc.laplacian(gc.union_graphs(extras)))
        for g in extras:
            lk = sp.spectral_gap(gc.laplacian(g))
            weighted_bad += not (l_cup - 1e-9 <= lk <= l_cap + 1e-9)
    details = {
        "graphs_checked": count,
        "bound_violations": bad_bounds,
        "equality_mismatches": bad_equality,
        "union_intersection_order_violations": bad_order,
        "weighted_order_violations_reported": weighted_bad,
    }
    return bad_bounds == 0 and bad_equality == 0 and bad_order == 0, details


CHECKS = {
    1: check_union_kernel,
    2: check_dichotomy,
    3: check_covering_contraction,
    4: check_pathwise,
    5: check_rates,
    6: check_unit_clock,
    7: check_occupation,
    8: check_metric_spectra,
    9: check_lambda2_band,
    10: check_toy,
    11: check_fiedler,
}

SUITES = {
    "kernels": (1, 2, 11),
    "contraction": (3, 6),
    "rates": (4, 5, 7),
    "metric": (8, 9),
    "toy": (10,),
}


def run_suite(name: str) -> list[Verdict]:
    if name == "all":
        ids = sorted(CHECKS)
    elif name in SUITES:
        ids = SUITES[name]
    else:
        raise ValueError(f"unknown suite {name!r}; choose from {sorted(SUITES) + ['all']}")
    return [CHECKS[i]() for i in ids]
