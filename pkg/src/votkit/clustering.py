"""K-means family built on the transport primitives.

``regularized_kmeans`` interpolates between plain Lloyd clustering (lam = 0)
and fully mass-constrained clustering (lam -> inf) through the blended-height
partition rule of the unbalanced solver.  Co-clustering shares one centroid
set across several domains; its constrained variant is exactly the
free-support barycenter and delegates to it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .measures import DiscreteMeasure, cell_masses, total_mass
from .vot_solver import VotConfig, solve_unbalanced, transport_cost

ENERGY_SLACK = 1e-9


@dataclass(frozen=True)
class ClusteringConfig:
    max_rounds: int = 100
    seed: int = 0
    vot: VotConfig = VotConfig()


@dataclass(frozen=True)
class ClusteringResult:
    centroids: np.ndarray
    assignment: np.ndarray
    energy_trace: np.ndarray
    cell_mass: np.ndarray
    converged: bool


@dataclass(frozen=True)
class CoclusterResult:
    shared_centroids: np.ndarray
    assignments: list
    energy_trace: np.ndarray
    cell_mass: list
    converged: bool
    domain_centroids: np.ndarray | None = None  # (N, K, d) per-domain cluster means


def kmeans_plus_plus(
    points: np.ndarray, masses: np.ndarray, k: int, rng: np.random.Generator
) -> np.ndarray:
    """Mass-weighted D^2 seeding."""
    n = points.shape[0]
    if k > n:
        raise ValueError(f"cannot seed {k} centroids from {n} points")
    probs = masses / masses.sum()
    centers = np.empty((k, points.shape[1]))
    idx = rng.choice(n, p=probs)
    centers[0] = points[idx]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        weights = probs * d2
        s = weights.sum()
        if s <= 0:
            # all remaining mass sits on already-chosen locations
            idx = rng.choice(n, p=probs)
        else:
            idx = rng.choice(n, p=weights / s)
        centers[c] = points[idx]
        d2 = np.minimum(d2, np.sum((points - centers[c]) ** 2, axis=1))
    return centers


def weighted_cell_means(
    points: np.ndarray,
    masses: np.ndarray,
    assignment: np.ndarray,
    k: int,
    fallback: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Mass-weighted mean per cell; empty cells take the fallback row.

    Returns (means, empty_mask).
    """
    d = points.shape[1]
    den = np.bincount(assignment, weights=masses, minlength=k)
    num = np.empty((k, d))
    for axis in range(d):
        num[:, axis] = np.bincount(assignment, weights=masses * points[:, axis], minlength=k)
    empty = den == 0.0
    means = np.where(empty[:, None], fallback, num / np.where(empty, 1.0, den)[:, None])
    return means, empty


def _eq12_energy(
    samples: DiscreteMeasure,
    centroids: np.ndarray,
    assignment: np.ndarray,
    nu: np.ndarray,
    lam: float,
) -> float:
    sse = transport_cost(samples, centroids, assignment)
    if lam == 0.0 or math.isinf(lam):
        return sse
    w = total_mass(samples)
    frac = cell_masses(assignment, samples, centroids.shape[0]) / w
    return sse + lam * float(np.sum((nu - frac) ** 2))


def regularized_kmeans(
    samples: DiscreteMeasure,
    k: int,
    nu: np.ndarray | None = None,
    lam: float = 0.0,
    config: ClusteringConfig = ClusteringConfig(),
) -> ClusteringResult:
    """Alternate blended-height partitions with centroid means.

    The recorded energy is the mass-weighted within-cluster cost plus
    lam * sum (nu_k - w_k)^2 over cell-mass fractions.  A partition step that
    would raise the energy is rejected and the run stops there (converged to
    a cycle of one), so the trace is non-increasing by construction.
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    if k > len(samples):
        raise ValueError("more clusters than samples")
    nu = np.full(k, 1.0 / k) if nu is None else np.asarray(nu, dtype=float)
    rng = np.random.default_rng(config.seed)
    centroids = kmeans_plus_plus(samples.points, samples.masses, k, rng)
    vot_cfg = config.vot
    trace: list[float] = []
    state = None  # (centroids, assignment, cell_mass)
    converged = False
    prev_assignment = None
    heights0 = None
    for _ in range(config.max_rounds):
        res = solve_unbalanced(samples, centroids, nu, lam, vot_cfg, heights0=heights0)
        heights0 = res.full_heights if lam > 0 else None
        energy = _eq12_energy(samples, centroids, res.assignment, nu, lam)
        if trace and energy > trace[-1] + ENERGY_SLACK:
            converged = True  # alternation cycled; keep the previous state
            break
        state = (centroids, res.assignment, res.cell_mass)
        trace.append(energy)
        if prev_assignment is not None and np.array_equal(res.assignment, prev_assignment):
            converged = True
            break
        prev_assignment = res.assignment
        centroids, _ = weighted_cell_means(
            samples.points, samples.masses, res.assignment, k, centroids
        )
    centroids, assignment, mass = state
    return ClusteringResult(centroids, assignment, np.asarray(trace), mass, converged)


def lloyd_kmeans(
    samples: DiscreteMeasure, k: int, config: ClusteringConfig = ClusteringConfig()
) -> ClusteringResult:
    """Plain seeded Lloyd clustering (the lam = 0 endpoint)."""
    return regularized_kmeans(samples, k, nu=None, lam=0.0, config=config)


def _shared_energy(
    domains: list[DiscreteMeasure], assignments: list[np.ndarray], shared: np.ndarray
) -> float:
    return math.fsum(
        transport_cost(dom, shared, a) for dom, a in zip(domains, assignments)
    )


def cocluster(
    domains: list[DiscreteMeasure],
    k: int,
    constrained: bool = False,
    nu: np.ndarray | None = None,
    config: ClusteringConfig = ClusteringConfig(),
    weights: np.ndarray | None = None,
) -> CoclusterResult:
    """Partition several domains with one shared centroid set.

    Unconstrained: each domain assigns to the nearest shared centroid, where
    shared centroid k is the mean of the per-domain cluster-k means.
    Constrained: cell masses are pinned to nu, which makes the problem the
    free-support barycenter; that solver is reused verbatim, so traces agree
    bit for bit.
    """
    if not domains:
        raise ValueError("need at least one domain")
    dims = {m.dim for m in domains}
    if len(dims) != 1:
        raise ValueError("domains must share one dimension")

    if constrained:
        from .barycenter import BarycenterConfig, solve_vwb

        bc = BarycenterConfig(
            outer_max=config.max_rounds, seed=config.seed, vot=config.vot
        )
        result = solve_vwb(
            [m if abs(total_mass(m) - 1.0) <= 1e-9 else _normalized(m) for m in domains],
            k,
            mode="support",
            config=bc,
            weights=weights,
            nu=nu,
        )
        masses = [
            cell_masses(a, m, k) for a, m in zip(result.assignments, domains)
        ]
        return CoclusterResult(
            shared_centroids=result.state.atoms,
            assignments=list(result.assignments),
            energy_trace=np.asarray(result.objective_trace),
            cell_mass=masses,
            converged=result.converged,
        )

    n = len(domains)
    pooled_pts = np.vstack([m.points for m in domains])
    pooled_mass = np.concatenate([m.masses / total_mass(m) for m in domains])
    rng = np.random.default_rng(config.seed)
    shared = kmeans_plus_plus(pooled_pts, pooled_mass, k, rng)
    trace: list[float] = []
    state = None
    converged = False
    prev = None
    for _ in range(config.max_rounds):
        assignments = []
        for m in domains:
            d2 = np.sum((m.points[:, None, :] - shared[None, :, :]) ** 2, axis=2)
            assignments.append(np.argmin(d2, axis=1))
        energy = _shared_energy(domains, assignments, shared)
        if trace and energy > trace[-1] + ENERGY_SLACK:
            converged = True
            break
        per_domain = np.empty((n, k, pooled_pts.shape[1]))
        for i, (m, a) in enumerate(zip(domains, assignments)):
            per_domain[i], _ = weighted_cell_means(m.points, m.masses, a, k, shared)
        state = (shared, assignments, per_domain)
        trace.append(energy)
        if prev is not None and all(
            np.array_equal(a, b) for a, b in zip(assignments, prev)
        ):
            converged = True
            break
        prev = assignments
        shared = per_domain.mean(axis=0)
    shared, assignments, per_domain = state
    masses = [cell_masses(a, m, k) for a, m in zip(assignments, domains)]
    return CoclusterResult(
        shared_centroids=shared,
        assignments=assignments,
        energy_trace=np.asarray(trace),
        cell_mass=masses,
        converged=converged,
        domain_centroids=per_domain,
    )


def _normalized(m: DiscreteMeasure) -> DiscreteMeasure:
    return DiscreteMeasure(m.points, m.masses / total_mass(m), m.domain)
