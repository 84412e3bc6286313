"""Free-support / free-measure Wasserstein barycenters by alternating
height descent with support or measure updates, plus the rigid-regularized
variant for congruent point clouds and the transshipment distance built on
two-marginal barycenters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .clustering import kmeans_plus_plus, weighted_cell_means
from .measures import DiscreteMeasure, total_mass
from .power_diagram import assign_euclidean
from .vot_solver import VotConfig, VotResult, solve_vot, transport_cost

OBJECTIVE_SLACK = 1e-9


@dataclass(frozen=True)
class BarycenterConfig:
    outer_max: int = 100
    rel_tol: float = 1e-5
    init: str = "kmeans"      # "kmeans": pooled Lloyd; "uniform": box sampling
    init_rounds: int = 50
    seed: int = 0
    vot: VotConfig = VotConfig()


@dataclass(frozen=True)
class BarycenterState:
    """Barycenter support/measure plus one gauge-fixed height vector per marginal."""

    atoms: np.ndarray
    atom_masses: np.ndarray
    heights: tuple
    free_support: bool
    free_measure: bool
    marginal_weights: np.ndarray

    def __post_init__(self):
        if self.free_support and self.free_measure:
            raise ValueError("one alternation phase may free the support or the measure, not both")


@dataclass(frozen=True)
class BarycenterResult:
    state: BarycenterState
    assignments: list
    vot_results: list
    objective_trace: np.ndarray
    converged: bool
    rounds: int
    stale_atoms: np.ndarray  # atom indices that received no mass in the last update


def marginal_weight_vector(n: int, weights) -> np.ndarray:
    if weights is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,) or np.any(w < 0):
        raise ValueError(f"weights must be {n} nonnegative reals")
    s = w.sum()
    if abs(s - 1.0) > 1e-9:
        raise ValueError("marginal weights must sum to 1")
    return w


def _check_normalized(marginals: list[DiscreteMeasure]):
    for i, m in enumerate(marginals):
        if abs(total_mass(m) - 1.0) > 1e-9:
            raise ValueError(
                f"marginal {i} is not normalized; normalize it or use the "
                "unbalanced solver for raw totals"
            )


def init_atoms(
    marginals: list[DiscreteMeasure],
    k: int,
    weights: np.ndarray,
    config: BarycenterConfig,
) -> np.ndarray:
    """Initial supports: pooled weighted Lloyd (default) or box sampling."""
    pooled_pts = np.vstack([m.points for m in marginals])
    pooled_mass = np.concatenate(
        [wi * m.masses / total_mass(m) for wi, m in zip(weights, marginals)]
    )
    rng = np.random.default_rng(config.seed)
    if config.init == "uniform":
        lo = pooled_pts.min(axis=0)
        hi = pooled_pts.max(axis=0)
        return lo + rng.random((k, pooled_pts.shape[1])) * (hi - lo)
    if config.init != "kmeans":
        raise ValueError(f"unknown init {config.init!r}")
    atoms = kmeans_plus_plus(pooled_pts, pooled_mass, k, rng)
    for _ in range(config.init_rounds):
        d2 = np.sum((pooled_pts[:, None, :] - atoms[None, :, :]) ** 2, axis=2)
        assign = np.argmin(d2, axis=1)
        new_atoms, _ = weighted_cell_means(pooled_pts, pooled_mass, assign, k, atoms)
        if np.array_equal(new_atoms, atoms):
            break
        atoms = new_atoms
    return atoms


def update_supports(
    atoms: np.ndarray,
    marginals: list[DiscreteMeasure],
    assignments: list[np.ndarray],
    weights: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Move each atom to the mass-weighted mean of its cells across marginals.

    Atoms with zero assigned mass everywhere keep their position; their
    indices are returned alongside the new support.
    """
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
    safe = np.where(den == 0.0, 1.0, den)
    new_atoms = np.where((den == 0.0)[:, None], atoms, num / safe[:, None])
    return new_atoms, stale


def update_measures(
    atoms: np.ndarray,
    marginals: list[DiscreteMeasure],
    weights: np.ndarray | None = None,
) -> np.ndarray:
    """Weighted nearest-atom cell masses; returns a probability vector.

    Uses the unweighted Voronoi partition (zero heights), the critical point
    of the barycenter objective in the measure, which is also one Lloyd step.
    """
    _check_normalized(marginals)
    weights = marginal_weight_vector(len(marginals), weights)
    k = atoms.shape[0]
    nu = np.zeros(k)
    for wi, m in zip(weights, marginals):
        d2 = np.sum((m.points[:, None, :] - atoms[None, :, :]) ** 2, axis=2)
        a = np.argmin(d2, axis=1)
        nu += wi * np.bincount(a, weights=m.masses, minlength=k)
    return nu


def _solve_round(marginals, atoms, nu, heights, vot: VotConfig):
    results = []
    for i, m in enumerate(marginals):
        cfg = replace(vot, seed=vot.seed + i)
        results.append(solve_vot(m, atoms, nu, cfg, heights0=heights[i]))
    return results


def solve_vwb(
    marginals: list[DiscreteMeasure],
    k: int,
    mode: str = "support",
    config: BarycenterConfig = BarycenterConfig(),
    weights: np.ndarray | None = None,
    nu: np.ndarray | None = None,
    atoms0: np.ndarray | None = None,
    support_update=None,
    monotone_guard: bool = True,
) -> BarycenterResult:
    """Alternate per-marginal transport solves with one update phase.

    mode "support" moves atoms to cell means under fixed masses; mode
    "measure" re-derives the atom masses from nearest-atom cells under fixed
    support.  Rounds stop when the weighted objective stalls (relative
    decrease below ``rel_tol``) or after ``outer_max`` rounds; with the
    default guard a round that would increase the objective is rolled back,
    so the recorded trace is non-increasing.  A custom ``support_update``
    that trades transport cost against another criterion should pass
    ``monotone_guard=False`` and is stopped on stalling instead.
    """
    if mode not in ("support", "measure"):
        raise ValueError("mode must be 'support' or 'measure' (never both at once)")
    if not marginals:
        raise ValueError("need at least one marginal")
    dims = {m.dim for m in marginals}
    if len(dims) != 1:
        raise ValueError("marginals must share one dimension")
    _check_normalized(marginals)
    weights = marginal_weight_vector(len(marginals), weights)
    atoms = init_atoms(marginals, k, weights, config) if atoms0 is None else np.array(atoms0, dtype=float)
    nu = np.full(k, 1.0 / k) if nu is None else np.asarray(nu, dtype=float)
    heights = [None] * len(marginals)
    prev_obj = math.inf
    trace: list[float] = []
    snapshot = None
    stale = np.empty(0, dtype=np.int64)
    converged = False
    rounds = 0
    for rounds in range(1, config.outer_max + 1):
        results = _solve_round(marginals, atoms, nu, heights, config.vot)
        heights = [r.heights for r in results]
        assignments = [r.assignment for r in results]
        obj = math.fsum(wi * r.cost for wi, r in zip(weights, results))
        if monotone_guard and obj > prev_obj + OBJECTIVE_SLACK:
            atoms, nu, heights, assignments, results = snapshot
            converged = True
            break
        trace.append(obj)
        change = prev_obj - obj if monotone_guard else abs(prev_obj - obj)
        if math.isfinite(prev_obj) and change <= config.rel_tol * max(abs(prev_obj), 1e-30):
            converged = True
            break
        snapshot = (atoms, nu, list(heights), assignments, results)
        prev_obj = obj
        if mode == "support":
            if support_update is None:
                atoms, stale = update_supports(atoms, marginals, assignments, weights)
            else:
                atoms, stale = support_update(atoms, marginals, assignments, weights)
        else:
            nu = update_measures(atoms, marginals, weights)
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


def total_wasserstein(state: BarycenterState, marginals: list[DiscreteMeasure]) -> float:
    """Weighted transport total, re-derived from (atoms, heights) alone.

    Each Monge map is reconstructed through the power diagram, which is the
    whole point of the compact storage format.
    """
    parts = []
    for wi, m, h in zip(state.marginal_weights, marginals, state.heights):
        report = assign_euclidean(m, state.atoms, h)
        parts.append(wi * transport_cost(m, state.atoms, report.assignment))
    return math.fsum(parts)


def vwd(
    mu1: DiscreteMeasure,
    mu2: DiscreteMeasure,
    k: int,
    config: BarycenterConfig = BarycenterConfig(),
) -> float:
    """Transshipment estimate of the squared 2-Wasserstein distance.

    Four times the two-marginal free-support barycenter total; exact when
    both measures are uniform on k points and the relay also has k atoms.
    """
    result = solve_vwb([mu1, mu2], k, mode="support", config=config)
    return 4.0 * float(result.objective_trace[-1])


# ---------------------------------------------------------------------------
# Rigid transforms and the rigid-regularized barycenter
# ---------------------------------------------------------------------------


def _quat_from_matrix(r: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) of a rotation matrix, scalar part >= 0."""
    t = np.trace(r)
    if t > 0:
        s = math.sqrt(t + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
        )
    else:
        i = int(np.argmax(np.diag(r)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = math.sqrt(max(1.0 + r[i, i] - r[j, j] - r[k, k], 0.0)) * 2.0
        q = np.empty(4)
        q[0] = (r[k, j] - r[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (r[j, i] + r[i, j]) / s
        q[1 + k] = (r[k, i] + r[i, k]) / s
    q /= np.linalg.norm(q)
    if q[0] < 0:
        q = -q
    return q


def _matrix_from_quat(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


@dataclass(frozen=True)
class RigidTransform:
    """Proper rotation plus translation in 3-D."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.array(self.rotation, dtype=float)
        t = np.array(self.translation, dtype=float)
        if r.shape != (3, 3) or t.shape != (3,):
            raise ValueError("rotation must be 3x3 and translation length 3")
        if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-9:
            raise ValueError("rotation must be orthonormal")
        if abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise ValueError("rotation must have determinant +1 (no reflections)")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @property
    def quaternion(self) -> np.ndarray:
        return _quat_from_matrix(self.rotation)

    @property
    def angle(self) -> float:
        """Rotation angle in radians, in [0, pi]."""
        w = min(1.0, abs(float(self.quaternion[0])))
        return 2.0 * math.acos(w)

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return pts @ self.rotation.T + self.translation


def estimate_rigid(source: np.ndarray, target: np.ndarray) -> RigidTransform:
    """Least-squares rotation + translation mapping source onto target.

    Demean, SVD of the cross-covariance, determinant correction so a
    reflected fit is folded back into a proper rotation.  Collinear sources
    leave the rotation underdetermined and raise.
    """
    src = np.atleast_2d(np.asarray(source, dtype=float))
    tgt = np.atleast_2d(np.asarray(target, dtype=float))
    if src.shape != tgt.shape or src.shape[1] != 3 or src.shape[0] < 3:
        raise ValueError("need matched 3-D point lists with at least 3 points")
    sc = src.mean(axis=0)
    tc = tgt.mean(axis=0)
    m = (src - sc).T @ (tgt - tc)
    u, s, vt = np.linalg.svd(m)
    if s[1] <= 1e-12 * max(s[0], 1.0):
        raise ValueError("degenerate (collinear) configuration; rotation is ambiguous")
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    t = tc - r @ sc
    return RigidTransform(r, t)


def average_rigid(
    transforms: list[RigidTransform], weights: np.ndarray | None = None
) -> RigidTransform:
    """Weighted mean transform: quaternion average for the rotations
    (sign-aligned to the first), arithmetic mean for the translations."""
    if not transforms:
        raise ValueError("need at least one transform")
    n = len(transforms)
    if weights is None:
        weights = np.full(n, 1.0 / n)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (n,) or np.any(weights < 0):
        raise ValueError("weights must be nonnegative, one per transform")
    if abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError("weights must sum to 1")
    active = np.flatnonzero(weights > 0)
    if active.size == 1:
        return transforms[int(active[0])]
    quats = np.array([t.quaternion for t in transforms])
    ref = quats[active[0]]
    signs = np.where(quats @ ref < 0, -1.0, 1.0)
    mean_q = (weights[:, None] * signs[:, None] * quats).sum(axis=0)
    norm = np.linalg.norm(mean_q)
    if norm < 1e-6:
        raise ValueError("near-antipodal rotations with balancing weights: mean is ambiguous")
    mean_q /= norm
    if mean_q[0] < 0:
        mean_q = -mean_q
    rot = _matrix_from_quat(mean_q)
    # reproject: quaternion round-trips keep orthonormality to ~1e-12 anyway
    u, _, vt = np.linalg.svd(rot)
    rot = u @ vt
    trans = (weights[:, None] * np.array([t.translation for t in transforms])).sum(axis=0)
    return RigidTransform(rot, trans)


@dataclass(frozen=True)
class RigidBarycenterResult(BarycenterResult):
    transforms: list = None          # per-marginal cluster-means -> atoms
    mean_transform: RigidTransform = None


def _cluster_means(marginals, assignments, k, fallback):
    means = []
    valid = []
    for m, a in zip(marginals, assignments):
        mu, empty = weighted_cell_means(m.points, m.masses, a, k, fallback)
        means.append(mu)
        valid.append(~empty)
    return means, valid


def _rigid_prediction(atoms, marginals, assignments, weights, target):
    """Per-marginal rigid fits of the cluster means onto the target supports,
    combined as a weighted mean of the per-marginal predictions."""
    k = atoms.shape[0]
    means, valid = _cluster_means(marginals, assignments, k, target)
    transforms = []
    used = []
    for mu, ok, wi in zip(means, valid, weights):
        if wi == 0.0:
            transforms.append(None)
            continue
        if ok.sum() < 3:
            raise ValueError("fewer than three populated clusters; rigid fit impossible")
        transforms.append(estimate_rigid(mu[ok], target[ok]))
        used.append(transforms[-1])
    pred_num = np.zeros_like(atoms)
    pred_den = np.zeros(k)
    for tr, mu, ok, wi in zip(transforms, means, valid, weights):
        if tr is None:
            continue
        mapped = tr.apply(mu)
        pred_num[ok] += wi * mapped[ok]
        pred_den[ok] += wi
    prediction = np.where(pred_den[:, None] > 0, pred_num / np.where(pred_den == 0, 1.0, pred_den)[:, None], target)
    live = [t for t in transforms if t is not None]
    live_w = weights[weights > 0]
    mean_tr = average_rigid(live, live_w / live_w.sum())
    return prediction, transforms, mean_tr


def solve_vwb_rigid(
    marginals: list[DiscreteMeasure],
    k: int,
    rigid_strength: float,
    config: BarycenterConfig = BarycenterConfig(),
    weights: np.ndarray | None = None,
) -> RigidBarycenterResult:
    """Free-support barycenter whose support update is pulled toward a rigid
    motion consensus.

    Each round fits, per marginal, the rigid transform taking that marginal's
    cluster means onto the unregularized centroid update; the supports then
    blend the weighted mean of those rigid predictions with the centroid
    update as (strength * prediction + centroids) / (strength + 1).  Strength
    0 reproduces the plain barycenter bit for bit; strength -> inf keeps the
    supports exactly rigid to the data.  The returned transforms map each
    marginal's final cluster means onto the final supports, so two congruent
    clouds should each report about half the relating rotation.
    """
    if rigid_strength < 0:
        raise ValueError("rigid_strength must be nonnegative")
    dims = {m.dim for m in marginals}
    if dims != {3}:
        raise ValueError("rigid regularization expects 3-D point clouds")
    nweights = marginal_weight_vector(len(marginals), weights)
    mean_tr_holder = {}

    if rigid_strength == 0.0:
        support_update = None
    else:
        def support_update(atoms, margs, assignments, w):
            yhat, stale = update_supports(atoms, margs, assignments, w)
            prediction, transforms, mean_tr = _rigid_prediction(
                atoms, margs, assignments, nweights, yhat
            )
            mean_tr_holder["mean"] = mean_tr
            if math.isinf(rigid_strength):
                blended = prediction
            else:
                blended = (rigid_strength * prediction + yhat) / (rigid_strength + 1.0)
            return blended, stale

    base = solve_vwb(
        marginals,
        k,
        mode="support",
        config=config,
        weights=weights,
        support_update=support_update,
        monotone_guard=(rigid_strength == 0.0),
    )
    final_means, final_valid = _cluster_means(
        marginals, base.assignments, k, base.state.atoms
    )
    transforms = []
    for mu, ok in zip(final_means, final_valid):
        if ok.sum() < 3:
            raise ValueError("fewer than three populated clusters; rigid fit impossible")
        transforms.append(estimate_rigid(mu[ok], base.state.atoms[ok]))
    mean_tr = mean_tr_holder.get("mean")
    if mean_tr is None:
        mean_tr = average_rigid(transforms, nweights) if len(transforms) > 1 else transforms[0]
    return RigidBarycenterResult(
        state=base.state,
        assignments=base.assignments,
        vot_results=base.vot_results,
        objective_trace=base.objective_trace,
        converged=base.converged,
        rounds=base.rounds,
        stale_atoms=base.stale_atoms,
        transforms=transforms,
        mean_transform=mean_tr,
    )
