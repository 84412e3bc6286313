"""Gradient descent on the height vector for one semi-discrete transport problem.

The solver minimizes the convex height energy whose gradient component k is
``(mass of power cell k) - nu_k``.  Measures are normalized internally, so a
raw-mass run follows exactly the same height trajectory as the equivalent
normalized run (this is the step scaling eta/w for a source of total mass w).
At a converged height vector the induced Monge map satisfies
``|cell_mass[k] - nu_k * w / sum(nu)| <= tolerance * w``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .measures import SPHERE, DiscreteMeasure, cell_masses, total_mass, validate_assignment
from .power_diagram import assign_euclidean, linear_scores, voronoi_heights

# consecutive iterations without a new best gradient norm before the step shrinks
DECAY_PATIENCE = 10


@dataclass(frozen=True)
class VotConfig:
    """Solver knobs.

    The update is a normalized subgradient step: heights move by
    ``step_size * g / max|g|`` per iteration, so ``step_size`` is measured in
    height (score) units and the worst cell always moves by exactly one step.
    ``step_size=None`` resolves to a tenth of the instance's score scale at
    solve time.  ``tolerance`` is a max-norm bound on the cell-mass residual
    as a fraction of the total source mass.  ``batch_fraction < 1`` switches
    to seeded mini-batch gradients (full-batch convergence checks every 25
    iterations).
    """

    max_iters: int = 5000
    step_size: float | None = None
    tolerance: float = 1e-3
    step_decay: float = 0.95
    seed: int = 0
    batch_fraction: float = 1.0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if self.step_size is not None and self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if not 0 < self.step_decay <= 1:
            raise ValueError("step_decay must lie in (0, 1]")
        if not 0 < self.batch_fraction <= 1:
            raise ValueError("batch_fraction must lie in (0, 1]")


@dataclass(frozen=True)
class VotResult:
    heights: np.ndarray
    assignment: np.ndarray
    cost: float
    grad_norm: float          # max-norm residual, fraction of source mass
    iterations: int
    converged: bool
    cell_mass: np.ndarray     # raw mass units
    grad_trace: np.ndarray = field(repr=False, default=None)
    final_step: float = 0.0   # step size at exit; pass back in to resume


@dataclass(frozen=True)
class UnbalancedResult(VotResult):
    """Result of the quadratic-penalty solver; ``heights`` is the blended
    vector lam/(1+lam) * h*, ``full_heights`` the unblended optimum."""

    full_heights: np.ndarray = None
    blend: float = 1.0


def transport_cost(samples: DiscreteMeasure, atoms: np.ndarray, assignment: np.ndarray) -> float:
    """Mass-weighted transport cost of a hard assignment.

    Euclidean domains use the squared distance |x - y|^2; spherical domains
    use -ln<x, y> and reject pairs outside an open hemisphere.
    """
    atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
    a = validate_assignment(assignment, len(samples), atoms.shape[0])
    targets = atoms[a]
    if samples.domain == SPHERE:
        dots = np.sum(samples.points * targets, axis=1)
        if np.any(dots <= 0.0):
            bad = int(np.flatnonzero(dots <= 0.0)[0])
            raise ValueError(f"sample {bad} is transported outside its hemisphere")
        per = -np.log(dots)
    else:
        diff = samples.points - targets
        per = np.sum(diff * diff, axis=1)
    return float(np.sum(samples.masses * per))


def vot_gradient(
    samples: DiscreteMeasure, atoms: np.ndarray, nu: np.ndarray, heights: np.ndarray
) -> np.ndarray:
    """Raw height-energy gradient: cell_mass - nu, in the measure's own units.

    Components sum to total_mass(samples) - sum(nu).
    """
    report = assign_euclidean(samples, atoms, heights)
    return report.cell_mass - np.asarray(nu, dtype=float)


def dual_energy(
    samples: DiscreteMeasure, atoms: np.ndarray, nu: np.ndarray, heights: np.ndarray
) -> float:
    """Semi-dual objective sum_j m_j max_k(x_j . y_k + h_k) - sum_k nu_k h_k.

    Its gradient equals ``vot_gradient`` away from cell boundaries, which is
    what the finite-difference consistency checks exercise.
    """
    heights = np.asarray(heights, dtype=float)
    scores = linear_scores(samples.points, np.atleast_2d(np.asarray(atoms, float)), heights)
    return float(np.sum(samples.masses * scores.max(axis=1)) - np.dot(np.asarray(nu, float), heights))


def linear_score_scale(points: np.ndarray, atoms: np.ndarray) -> float:
    """Rough magnitude of x . y_k + |y_k|^2/2 terms; sets the default step."""
    smax = float(np.max(np.linalg.norm(points, axis=1)))
    amax = float(np.max(np.linalg.norm(atoms, axis=1)))
    return max(smax * amax + 0.5 * amax * amax, 1e-12)


def descend(assign_fn, nu_hat: np.ndarray, config: VotConfig, h0: np.ndarray,
            gauge=None, batch_grad_fn=None, rng=None, default_step: float = 0.25,
            step0: float | None = None):
    """Shared descent loop over a normalized target vector.

    ``assign_fn(h) -> (assignment, cell_hat)`` evaluates the full-batch
    partition; ``batch_grad_fn(h, rng) -> grad_hat`` (optional) supplies a
    stochastic gradient.  Steps are normalized (``eta * g / max|g|``) and the
    starting step is scaled by the initially misplaced mass, so warm starts
    are not wrecked by a full-size first step; the step regrows on progress
    up to the configured size (``step0`` overrides the start).  Returns the
    best iterate seen (smallest full-batch residual), so the reported
    gradient norm never exceeds any recorded one.
    """
    h = np.array(h0, dtype=float)
    eta_cap = config.step_size if config.step_size is not None else default_step
    eta = min(step0, eta_cap) if step0 is not None else eta_cap
    if config.tolerance >= float(np.min(nu_hat)):
        warnings.warn(
            "tolerance is not below the smallest target mass; "
            "empty cells may persist at convergence",
            stacklevel=3,
        )
    check_every = 1 if batch_grad_fn is None else 25
    best_norm = np.inf
    best_h = h.copy()
    # the stall detector watches total misplaced mass: the max-norm can sit at
    # single-cell granularity for long stretches while heights still make
    # large useful moves, and decaying on it starves the step budget
    best_l1 = np.inf
    stall = 0
    trace = []
    iterations = 0
    converged = False
    for it in range(1, config.max_iters + 1):
        iterations = it
        if batch_grad_fn is None or it % check_every == 0:
            _, cell_hat = assign_fn(h)
            grad = cell_hat - nu_hat
            gnorm = float(np.max(np.abs(grad)))
            trace.append(gnorm)
            if gnorm < best_norm:
                best_norm = gnorm
                best_h = h.copy()
            gl1 = float(np.sum(np.abs(grad)))
            if it == 1 and step0 is None:
                eta = eta_cap * min(1.0, max(0.5 * gl1, 0.01))
            if gl1 < best_l1 * (1.0 - 1e-12):
                best_l1 = gl1
                stall = 0
                # regrow after decays so warm restarts can still march
                eta = min(eta / config.step_decay, eta_cap)
            else:
                stall += 1
                if stall >= DECAY_PATIENCE:
                    eta *= config.step_decay
                    stall = 0
            if gnorm <= config.tolerance:
                converged = True
                break
        else:
            grad = batch_grad_fn(h, rng)
        scale = float(np.max(np.abs(grad)))
        if scale > 0.0:
            h -= (eta / scale) * grad
        if gauge is not None:
            h = gauge(h)
    return best_h, best_norm, iterations, converged, np.asarray(trace), eta


def competitive_heights(points: np.ndarray, atoms: np.ndarray) -> np.ndarray:
    """Warm-start heights: Voronoi heights raised by each atom's squared
    distance to its nearest sample.

    Every atom then scores on par with its local competitors at its nearest
    sample, so no cell starts hopelessly dominated even when the atoms do not
    overlap the samples.
    """
    from scipy.spatial import cKDTree

    atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
    d, _ = cKDTree(points).query(atoms, k=1)
    h0 = voronoi_heights(atoms) + 0.5 * d * d
    return h0 - np.mean(h0)


def solve_vot(
    samples: DiscreteMeasure,
    atoms: np.ndarray,
    nu: np.ndarray,
    config: VotConfig = VotConfig(),
    heights0: np.ndarray | None = None,
    step0: float | None = None,
) -> VotResult:
    """Solve one semi-discrete transport problem by height descent.

    ``nu`` may have a different total mass than the samples; targets are
    rescaled internally so converged cells carry ``nu_k * w / sum(nu)``.
    """
    atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
    k = atoms.shape[0]
    nu = np.asarray(nu, dtype=float)
    if nu.shape != (k,):
        raise ValueError(f"nu must have shape ({k},)")
    if np.any(nu <= 0):
        raise ValueError("target masses must be positive")
    w = total_mass(samples)
    hat = DiscreteMeasure(samples.points, samples.masses / w, samples.domain)
    nu_hat = nu / np.sum(nu)
    if heights0 is None:
        h0 = competitive_heights(samples.points, atoms)
    else:
        h0 = np.asarray(heights0, dtype=float)

    def assign_fn(h):
        report = assign_euclidean(hat, atoms, h)
        return report.assignment, report.cell_mass

    batch_grad_fn = None
    rng = None
    if config.batch_fraction < 1.0:
        rng = np.random.default_rng(config.seed)
        n = len(hat)
        m = max(1, int(round(config.batch_fraction * n)))

        def batch_grad_fn(h, rng):
            idx = rng.choice(n, size=m, replace=False)
            sub = DiscreteMeasure(
                hat.points[idx], hat.masses[idx] / config.batch_fraction, hat.domain
            )
            report = assign_euclidean(sub, atoms, h)
            return report.cell_mass - nu_hat

    best_h, gnorm, iters, converged, trace, eta = descend(
        assign_fn, nu_hat, config, h0,
        gauge=lambda h: h - np.mean(h),
        batch_grad_fn=batch_grad_fn, rng=rng,
        default_step=0.1 * linear_score_scale(samples.points, atoms),
        step0=step0,
    )
    best_h = best_h - np.mean(best_h)
    assignment, _ = assign_fn(best_h)
    mass = cell_masses(assignment, samples, k)
    cost = transport_cost(samples, atoms, assignment)
    return VotResult(best_h, assignment, cost, gnorm, iters, converged, mass, trace, eta)


def solve_unbalanced(
    samples: DiscreteMeasure,
    atoms: np.ndarray,
    nu: np.ndarray,
    lam: float,
    config: VotConfig = VotConfig(),
    heights0: np.ndarray | None = None,
) -> UnbalancedResult:
    """Quadratic mass-mismatch penalty of strength lam around the balanced solve.

    The penalized optimum blends the balanced heights by lam / (1 + lam):
    lam = 0 gives the unweighted Voronoi partition, lam -> inf recovers the
    fully constrained transport map.
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
    k = atoms.shape[0]
    if lam == 0.0:
        full = np.zeros(k)
        base = None
        blend = 0.0
    else:
        base = solve_vot(samples, atoms, nu, config, heights0)
        full = base.heights
        blend = 1.0 if np.isinf(lam) else lam / (1.0 + lam)
    blended = blend * full
    report = assign_euclidean(samples, atoms, blended)
    cost = transport_cost(samples, atoms, report.assignment)
    w = total_mass(samples)
    nu_hat = np.asarray(nu, dtype=float) / np.sum(nu)
    gnorm = float(np.max(np.abs(report.cell_mass / w - nu_hat)))
    return UnbalancedResult(
        heights=blended,
        assignment=report.assignment,
        cost=cost,
        grad_norm=gnorm,
        iterations=0 if base is None else base.iterations,
        converged=True if base is None else base.converged,
        cell_mass=report.cell_mass,
        grad_trace=None if base is None else base.grad_trace,
        full_heights=full,
        blend=blend,
    )
