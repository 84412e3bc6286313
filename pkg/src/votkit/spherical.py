"""Transport and barycenters on the unit sphere under the -ln<x, y> cost.

The descent loop is shared with the Euclidean solver; only the assignment
rule and the gauge differ.  Heights are pinned to max h = 0 so the per-cell
radius factors exp(h_k) stay in (0, 1].
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .barycenter import BarycenterConfig, BarycenterResult, BarycenterState, marginal_weight_vector
from .clustering import kmeans_plus_plus
from .measures import SPHERE, DiscreteMeasure, cell_masses, total_mass
from .power_diagram import assign_spherical
from .vot_solver import VotConfig, descend, transport_cost

OBJECTIVE_SLACK = 1e-9


@dataclass(frozen=True)
class SphericalVotResult:
    heights: np.ndarray       # gauge-fixed, max = 0
    assignment: np.ndarray
    cost: float               # sum of masses times -ln<x, T(x)>
    grad_norm: float
    iterations: int
    converged: bool
    cell_mass: np.ndarray
    grad_trace: np.ndarray = None
    final_step: float = 0.0


def _check_sphere_inputs(samples: DiscreteMeasure, atoms: np.ndarray) -> np.ndarray:
    if samples.domain != SPHERE:
        raise ValueError("samples must be a sphere-tagged measure")
    atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
    if np.max(np.abs(np.linalg.norm(atoms, axis=1) - 1.0)) > 1e-9:
        raise ValueError("atoms must lie on the unit sphere")
    return atoms


def solve_vot_sphere(
    samples: DiscreteMeasure,
    atoms: np.ndarray,
    nu: np.ndarray,
    config: VotConfig = VotConfig(),
    heights0: np.ndarray | None = None,
    step0: float | None = None,
) -> SphericalVotResult:
    """Height descent with the spherical power-cost assignment."""
    atoms = _check_sphere_inputs(samples, atoms)
    k = atoms.shape[0]
    nu = np.asarray(nu, dtype=float)
    if nu.shape != (k,):
        raise ValueError(f"nu must have shape ({k},)")
    w = total_mass(samples)
    hat = DiscreteMeasure(samples.points, samples.masses / w, SPHERE)
    nu_hat = nu / np.sum(nu)
    h0 = np.zeros(k) if heights0 is None else np.asarray(heights0, dtype=float)

    def assign_fn(h):
        report = assign_spherical(hat, atoms, h)
        return report.assignment, report.cell_mass

    def gauge(h):
        return h - np.max(h)

    best_h, gnorm, iters, converged, trace, eta = descend(
        assign_fn, nu_hat, config, h0, gauge=gauge, default_step=0.1, step0=step0
    )
    best_h = gauge(best_h)
    assignment, _ = assign_fn(best_h)
    mass = cell_masses(assignment, samples, k)
    cost = transport_cost(samples, atoms, assignment)
    return SphericalVotResult(best_h, assignment, cost, gnorm, iters, converged, mass, trace, eta)


def project_to_sphere(vectors: np.ndarray) -> np.ndarray:
    v = np.atleast_2d(np.asarray(vectors, dtype=float))
    norms = np.linalg.norm(v, axis=1)
    if np.any(norms < 1e-12):
        raise ValueError("zero-mean degenerate cell (antipodally balanced); cannot project")
    return v / norms[:, None]


def update_supports_sphere(
    atoms: np.ndarray,
    marginals: list[DiscreteMeasure],
    assignments: list[np.ndarray],
    weights: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Weighted Euclidean cell mean projected back to the sphere."""
    k, d = atoms.shape
    weights = marginal_weight_vector(len(marginals), weights)
    num = np.zeros((k, d))
    den = np.zeros(k)
    for wi, m, a in zip(weights, marginals, assignments):
        scaled = wi * m.masses
        den += np.bincount(a, weights=scaled, minlength=k)
        for axis in range(d):
            num[:, axis] += np.bincount(a, weights=scaled * m.points[:, axis], minlength=k)
    stale = np.flatnonzero(den == 0.0)
    new_atoms = atoms.copy()
    live = den > 0.0
    new_atoms[live] = project_to_sphere(num[live])
    return new_atoms, stale


def update_measures_sphere(
    atoms: np.ndarray,
    marginals: list[DiscreteMeasure],
    weights: np.ndarray | None = None,
) -> np.ndarray:
    """Geodesic-nearest cell masses (largest inner product wins)."""
    weights = marginal_weight_vector(len(marginals), weights)
    k = atoms.shape[0]
    nu = np.zeros(k)
    for wi, m in zip(weights, marginals):
        a = np.argmax(m.points @ atoms.T, axis=1)
        nu += wi * np.bincount(a, weights=m.masses / total_mass(m), minlength=k)
    return nu


def _init_atoms_sphere(marginals, k, weights, config: BarycenterConfig) -> np.ndarray:
    pooled_pts = np.vstack([m.points for m in marginals])
    pooled_mass = np.concatenate(
        [wi * m.masses / total_mass(m) for wi, m in zip(weights, marginals)]
    )
    rng = np.random.default_rng(config.seed)
    atoms = kmeans_plus_plus(pooled_pts, pooled_mass, k, rng)
    atoms = project_to_sphere(atoms)
    for _ in range(config.init_rounds):
        a = np.argmax(pooled_pts @ atoms.T, axis=1)
        den = np.bincount(a, weights=pooled_mass, minlength=k)
        num = np.empty_like(atoms)
        for axis in range(atoms.shape[1]):
            num[:, axis] = np.bincount(a, weights=pooled_mass * pooled_pts[:, axis], minlength=k)
        live = den > 0
        new_atoms = atoms.copy()
        new_atoms[live] = project_to_sphere(num[live])
        if np.array_equal(new_atoms, atoms):
            break
        atoms = new_atoms
    return atoms


def solve_vwb_sphere(
    marginals: list[DiscreteMeasure],
    k: int,
    config: BarycenterConfig = BarycenterConfig(),
    mode: str = "support",
    weights: np.ndarray | None = None,
    nu: np.ndarray | None = None,
    atoms0: np.ndarray | None = None,
) -> BarycenterResult:
    """Spherical barycenter: alternate spherical transport solves with a
    projected-mean support update (or a geodesic-nearest measure update).

    The objective trace is non-increasing by construction: an update round
    that would raise the total cost is rolled back and the run stops.
    """
    if mode not in ("support", "measure"):
        raise ValueError("mode must be 'support' or 'measure'")
    for i, m in enumerate(marginals):
        if m.domain != SPHERE:
            raise ValueError(f"marginal {i} is not sphere-tagged")
        if abs(total_mass(m) - 1.0) > 1e-9:
            raise ValueError(f"marginal {i} is not normalized")
    weights = marginal_weight_vector(len(marginals), weights)
    atoms = (
        _init_atoms_sphere(marginals, k, weights, config)
        if atoms0 is None
        else project_to_sphere(np.asarray(atoms0, dtype=float))
    )
    nu = np.full(k, 1.0 / k) if nu is None else np.asarray(nu, dtype=float)
    heights = [None] * len(marginals)
    prev_obj = math.inf
    trace: list[float] = []
    snapshot = None
    stale = np.empty(0, dtype=np.int64)
    converged = False
    rounds = 0
    for rounds in range(1, config.outer_max + 1):
        results = []
        for i, m in enumerate(marginals):
            cfg = replace(config.vot, seed=config.vot.seed + i)
            results.append(solve_vot_sphere(m, atoms, nu, cfg, heights0=heights[i]))
        heights = [r.heights for r in results]
        assignments = [r.assignment for r in results]
        obj = math.fsum(wi * r.cost for wi, r in zip(weights, results))
        if obj > prev_obj + OBJECTIVE_SLACK:
            atoms, nu, heights, assignments, results = snapshot
            converged = True
            break
        trace.append(obj)
        if math.isfinite(prev_obj) and prev_obj - obj <= config.rel_tol * max(abs(prev_obj), 1e-30):
            converged = True
            break
        snapshot = (atoms, nu, list(heights), assignments, results)
        prev_obj = obj
        if mode == "support":
            atoms, stale = update_supports_sphere(atoms, marginals, assignments, weights)
        else:
            nu = update_measures_sphere(atoms, marginals, weights)
    else:
        if snapshot is not None:
            atoms, nu, heights, assignments, results = snapshot
    state = BarycenterState(
        atoms=atoms,
        atom_masses=nu,
        heights=tuple(heights),
        free_support=(mode == "support"),
        free_measure=(mode == "measure"),
        marginal_weights=weights,
    )
    return BarycenterResult(
        state, assignments, results, np.asarray(trace), converged, rounds, stale
    )


def total_spherical(state: BarycenterState, marginals: list[DiscreteMeasure]) -> float:
    """Weighted spherical transport total reconstructed from (atoms, heights)."""
    parts = []
    for wi, m, h in zip(state.marginal_weights, marginals, state.heights):
        report = assign_spherical(m, state.atoms, h)
        parts.append(wi * transport_cost(m, state.atoms, report.assignment))
    return math.fsum(parts)
