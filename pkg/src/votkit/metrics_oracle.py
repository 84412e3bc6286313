"""Exact small-instance ground truth: Kantorovich LP, brute-force Monge
enumeration, sorted 1-D barycenters, and the generalized-metric checker.

Everything here is desk-scale by design; these routines exist so the
gradient-descent solvers can be tested against independent optima.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .measures import DiscreteMeasure, total_mass

LP_FEAS_TOL = 1e-9
LP_SIZE_LIMIT = 10**6
ENUM_BUDGET = 10**7


@dataclass(frozen=True)
class TransportPlan:
    """Coupling matrix in mass units; rows follow samples, columns atoms."""

    matrix: np.ndarray

    def marginal_residual(self, mu_masses: np.ndarray, nu_masses: np.ndarray) -> float:
        """Max deviation of the plan's marginals from the prescribed ones."""
        row = np.abs(self.matrix.sum(axis=1) - mu_masses).max()
        col = np.abs(self.matrix.sum(axis=0) - nu_masses).max()
        return float(max(row, col))


def _pairwise_sq(points: np.ndarray, atoms: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - atoms[None, :, :]
    return np.sum(diff * diff, axis=2)


def exact_ot_lp(mu: DiscreteMeasure, nu: DiscreteMeasure) -> tuple[float, TransportPlan]:
    """Optimal Kantorovich cost and plan under squared Euclidean cost.

    Solved with the HiGHS LP backend; the returned plan is certified to
    satisfy both marginals within 1e-9 (raises otherwise).  Balanced
    totals only.
    """
    n, k = len(mu), len(nu)
    if n * k > LP_SIZE_LIMIT:
        raise ValueError(f"LP oracle limited to n*K <= {LP_SIZE_LIMIT}")
    wm, wn = total_mass(mu), total_mass(nu)
    if abs(wm - wn) > LP_FEAS_TOL * max(1.0, wm, wn):
        raise ValueError(
            f"oracle requires balanced totals ({wm} vs {wn}); "
            "use the unbalanced solver for mismatched masses"
        )
    cost_matrix = _pairwise_sq(mu.points, nu.points)
    # force exact float-level consistency of the two marginal sums
    b_nu = nu.masses * (wm / wn)
    a_rows = []
    for j in range(n):
        row = np.zeros((n, k))
        row[j, :] = 1.0
        a_rows.append(row.ravel())
    for i in range(k):
        col = np.zeros((n, k))
        col[:, i] = 1.0
        a_rows.append(col.ravel())
    a_eq = np.array(a_rows)
    b_eq = np.concatenate([mu.masses, b_nu])
    res = linprog(cost_matrix.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"LP oracle failed: {res.message}")
    plan = np.clip(res.x.reshape(n, k), 0.0, None)
    tp = TransportPlan(plan)
    resid = tp.marginal_residual(mu.masses, b_nu)
    if resid > LP_FEAS_TOL:
        raise RuntimeError(f"LP plan infeasible beyond tolerance ({resid:.3e})")
    return float(np.sum(cost_matrix * plan)), tp


@dataclass(frozen=True)
class MongeSearchResult:
    feasible: bool
    cost: float | None
    optima: list = field(default_factory=list)  # all cost-tied optimal assignments

    @property
    def unique(self) -> bool:
        return self.feasible and len(self.optima) == 1


def brute_force_monge(
    mu: DiscreteMeasure, nu: DiscreteMeasure, mass_tol: float = 1e-9
) -> MongeSearchResult:
    """Exhaustive search over hard assignments whose cell masses equal nu.

    Returns every cost-tied optimum (degenerate instances have several and
    a variational solver cannot distinguish them).  Infeasible when no hard
    assignment reproduces nu, e.g. three equal Diracs onto two.
    """
    n, k = len(mu), len(nu)
    if k**n > ENUM_BUDGET:
        raise ValueError(f"enumeration budget exceeded: {k}^{n} > {ENUM_BUDGET}")
    cost_matrix = _pairwise_sq(mu.points, nu.points)
    masses = mu.masses
    target = nu.masses
    best_cost = math.inf
    optima: list[np.ndarray] = []
    assign = np.zeros(n, dtype=np.int64)
    filled = np.zeros(k)

    def recurse(j: int, cost_so_far: float):
        nonlocal best_cost, optima
        if cost_so_far > best_cost + 1e-12:
            return
        if j == n:
            if np.max(np.abs(filled - target)) > mass_tol:
                return
            if cost_so_far < best_cost - 1e-12:
                best_cost = cost_so_far
                optima = [assign[:].copy()]
            elif abs(cost_so_far - best_cost) <= 1e-12:
                optima.append(assign[:].copy())
            return
        for c in range(k):
            if filled[c] + masses[j] > target[c] + mass_tol:
                continue
            filled[c] += masses[j]
            assign[j] = c
            recurse(j + 1, cost_so_far + masses[j] * cost_matrix[j, c])
            filled[c] -= masses[j]

    recurse(0, 0.0)
    if not optima:
        return MongeSearchResult(False, None, [])
    return MongeSearchResult(True, best_cost, optima)


def _require_uniform_1d(marginals: list[DiscreteMeasure], k: int):
    for i, m in enumerate(marginals):
        if m.dim != 1:
            raise ValueError(f"marginal {i} is not one-dimensional")
        if len(m) != k:
            raise ValueError(f"marginal {i} has {len(m)} points, expected {k}")
        if np.max(np.abs(m.masses - m.masses[0])) > 1e-12 * max(1.0, m.masses[0]):
            raise ValueError(f"marginal {i} does not have uniform masses")


def exact_1d_barycenter(marginals: list[DiscreteMeasure], k: int) -> np.ndarray:
    """Free-support barycenter of 1-D uniform k-point measures.

    Sorted (monotone) matching is optimal in one dimension, so atom j is the
    mean over marginals of each j-th smallest support point.  Sums use
    ``math.fsum`` so the result is exactly invariant under permutations of
    the marginals.
    """
    _require_uniform_1d(marginals, k)
    sorted_pts = [np.sort(m.points[:, 0]) for m in marginals]
    n = len(marginals)
    atoms = np.array(
        [math.fsum(pts[j] for pts in sorted_pts) / n for j in range(k)]
    )
    return atoms[:, None]


def w2_uniform_1d(a: DiscreteMeasure, b: DiscreteMeasure) -> float:
    """Exact squared 2-Wasserstein distance between uniform k-point 1-D measures."""
    if len(a) != len(b):
        raise ValueError("measures must have the same number of points")
    _require_uniform_1d([a, b], len(a))
    sa = np.sort(a.points[:, 0])
    sb = np.sort(b.points[:, 0])
    k = len(a)
    return math.fsum((sa[j] - sb[j]) ** 2 for j in range(k)) / k


class Exact1DBackend:
    """n-metric backend using the sorted-matching oracle (1-D, uniform, equal k)."""

    def barycenter(self, marginals: list[DiscreteMeasure]) -> DiscreteMeasure:
        k = len(marginals[0])
        return DiscreteMeasure.uniform(exact_1d_barycenter(marginals, k))

    def distance(self, m: DiscreteMeasure, ref: DiscreteMeasure) -> float:
        return w2_uniform_1d(m, ref)


@dataclass(frozen=True)
class NMetricCheck:
    name: str
    value: float
    bound: float
    margin: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "value": self.value,
            "bound": self.bound,
            "margin": self.margin,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class NMetricReport:
    n: int
    w_b: float
    checks: list

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "w_b": self.w_b,
            "checks": [c.to_dict() for c in self.checks],
            "all_passed": self.all_passed,
        }

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def worst_margin(self) -> float:
        return min(c.margin for c in self.checks)


def _measures_equal(a: DiscreteMeasure, b: DiscreteMeasure) -> bool:
    return (
        a.domain == b.domain
        and a.points.shape == b.points.shape
        and np.array_equal(a.points, b.points)
        and np.array_equal(a.masses, b.masses)
    )


def check_nmetric(
    marginals: list[DiscreteMeasure],
    aux: DiscreteMeasure | None = None,
    backend=None,
    margin_tol: float = 1e-9,
) -> NMetricReport:
    """Evaluate the generalized-metric properties of the barycenter total.

    The total over N marginals is the mean of their squared distances to the
    barycenter of the collection.  The leave-one-out totals entering the
    triangle bounds are evaluated at that same base barycenter, which is the
    relay construction the bounds are stated for; ``aux`` plays the role of
    the (N+1)-th measure and is required for the two triangle checks.

    Violations are reported (margin < 0), never raised.
    """
    if backend is None:
        backend = Exact1DBackend()
    n = len(marginals)
    if n < 2:
        raise ValueError("need at least two marginals")
    ref = backend.barycenter(marginals)
    dists = [backend.distance(m, ref) for m in marginals]
    w_b = math.fsum(dists) / n
    checks = []

    checks.append(
        NMetricCheck("non_negativity", w_b, 0.0, w_b, w_b >= -margin_tol)
    )

    perms = [tuple(reversed(range(n))), tuple(range(1, n)) + (0,)]
    sym_dev = 0.0
    for perm in perms:
        permuted = [marginals[i] for i in perm]
        ref_p = backend.barycenter(permuted)
        w_p = math.fsum(backend.distance(m, ref_p) for m in permuted) / n
        sym_dev = max(sym_dev, abs(w_p - w_b))
    checks.append(
        NMetricCheck("symmetry", sym_dev, 0.0, -sym_dev, sym_dev <= margin_tol)
    )

    all_equal = all(_measures_equal(marginals[0], m) for m in marginals[1:])
    if all_equal:
        checks.append(
            NMetricCheck("identity_equal_implies_zero", w_b, 0.0, -w_b, w_b <= margin_tol)
        )
    else:
        checks.append(
            NMetricCheck(
                "identity_distinct_implies_positive", w_b, 0.0, w_b, w_b > margin_tol
            )
        )

    if aux is not None:
        d_aux = backend.distance(aux, ref)
        total_all = math.fsum(dists) + d_aux
        leave_out = [(total_all - dists[i]) / n for i in range(n)]
        rhs = math.fsum(leave_out)
        tri_margin = rhs - w_b
        checks.append(
            NMetricCheck("triangle", w_b, rhs, tri_margin, tri_margin >= -margin_tol)
        )
        scaled = rhs - (n / 2.0) * w_b
        checks.append(
            NMetricCheck(
                "scaled_triangle", (n / 2.0) * w_b, rhs, scaled, scaled >= -margin_tol
            )
        )

    return NMetricReport(n, w_b, checks)
