"""Power (Laguerre) diagram assignment of samples to weighted atoms.

A height vector h over K atoms y_k defines the piecewise-linear function
``theta_h(x) = max_k (x . y_k + h_k)``.  The argmax partitions the domain
into power cells; equivalently (with weights ``phi_k = -2 h_k - |y_k|^2``)
each sample goes to ``argmin_k |x - y_k|^2 + phi_k``.  Adding a constant to
every height leaves the partition unchanged.

On the unit sphere the cost of atom k is ``-ln<x, y_k> / cos(r_k)`` with
``cos(r_k) = exp(h_k)`` after shifting heights so ``max h = 0``; atoms
outside a sample's open hemisphere are unreachable (infinite cost).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

try:  # optional fused kernel; the numpy path below is the reference semantics
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

from .measures import SPHERE, DiscreteMeasure, cell_masses


@dataclass(frozen=True)
class PowerCellReport:
    """Hard assignment plus per-cell mass totals and empty-cell indices."""

    assignment: np.ndarray  # (n,) int
    cell_mass: np.ndarray   # (K,) float
    empty_cells: np.ndarray  # indices of cells with zero mass

    @property
    def k(self) -> int:
        return self.cell_mass.shape[0]


def _check_geometry(samples: DiscreteMeasure, atoms: np.ndarray, heights: np.ndarray):
    atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
    heights = np.asarray(heights, dtype=float)
    if atoms.shape[1] != samples.dim:
        raise ValueError(
            f"dimension mismatch: samples are {samples.dim}-d, atoms are {atoms.shape[1]}-d"
        )
    if heights.shape != (atoms.shape[0],):
        raise ValueError(
            f"heights must have shape ({atoms.shape[0]},), got {heights.shape}"
        )
    if not np.all(np.isfinite(heights)):
        raise ValueError("heights must be finite")
    return atoms, heights


def _report(assignment: np.ndarray, samples: DiscreteMeasure, k: int) -> PowerCellReport:
    mass = cell_masses(assignment, samples, k)
    return PowerCellReport(assignment, mass, np.flatnonzero(mass == 0.0))


def linear_scores(points: np.ndarray, atoms: np.ndarray, heights: np.ndarray) -> np.ndarray:
    """(n, K) matrix of x . y_k + h_k."""
    return points @ atoms.T + heights


_KERNEL_BLOCK = 512

if _HAVE_NUMBA:

    @numba.njit(parallel=True, cache=True)
    def _argmax_d2(x0, x1, a0, a1, heights):  # pragma: no cover - jitted
        n = x0.shape[0]
        k = a0.shape[0]
        out = np.empty(n, dtype=np.int64)
        nblocks = (n + _KERNEL_BLOCK - 1) // _KERNEL_BLOCK
        for b in numba.prange(nblocks):
            lo = b * _KERNEL_BLOCK
            hi = min(lo + _KERNEL_BLOCK, n)
            m = hi - lo
            best = np.full(m, -np.inf)
            arg = np.zeros(m, dtype=np.int64)
            for c in range(k):
                hc = heights[c]
                ac0 = a0[c]
                ac1 = a1[c]
                for j in range(m):
                    s = hc + x0[lo + j] * ac0 + x1[lo + j] * ac1
                    if s > best[j]:
                        best[j] = s
                        arg[j] = c
            out[lo:hi] = arg
        return out

    @numba.njit(parallel=True, cache=True)
    def _argmax_d3(x0, x1, x2, a0, a1, a2, heights):  # pragma: no cover - jitted
        n = x0.shape[0]
        k = a0.shape[0]
        out = np.empty(n, dtype=np.int64)
        nblocks = (n + _KERNEL_BLOCK - 1) // _KERNEL_BLOCK
        for b in numba.prange(nblocks):
            lo = b * _KERNEL_BLOCK
            hi = min(lo + _KERNEL_BLOCK, n)
            m = hi - lo
            best = np.full(m, -np.inf)
            arg = np.zeros(m, dtype=np.int64)
            for c in range(k):
                hc = heights[c]
                ac0 = a0[c]
                ac1 = a1[c]
                ac2 = a2[c]
                for j in range(m):
                    s = hc + x0[lo + j] * ac0 + x1[lo + j] * ac1 + x2[lo + j] * ac2
                    if s > best[j]:
                        best[j] = s
                        arg[j] = c
            out[lo:hi] = arg
        return out


def argmax_linear(points: np.ndarray, atoms: np.ndarray, heights: np.ndarray) -> np.ndarray:
    """Exhaustive per-sample argmax of x . y_k + h_k, ties to the lowest index.

    Every sample scans all K atoms; the blocked kernels only avoid
    materializing the (n, K) score matrix and match numpy's first-max
    tie-break exactly.
    """
    n, d = points.shape
    if _HAVE_NUMBA and n * atoms.shape[0] >= 1 << 16 and d in (2, 3):
        cols = [np.ascontiguousarray(points[:, i]) for i in range(d)]
        acols = [np.ascontiguousarray(atoms[:, i]) for i in range(d)]
        h = np.ascontiguousarray(heights)
        if d == 2:
            return _argmax_d2(cols[0], cols[1], acols[0], acols[1], h)
        return _argmax_d3(cols[0], cols[1], cols[2], acols[0], acols[1], acols[2], h)
    return np.argmax(linear_scores(points, atoms, heights), axis=1)


def assign_euclidean(
    samples: DiscreteMeasure, atoms: np.ndarray, heights: np.ndarray
) -> PowerCellReport:
    """Assign each sample to argmax_k (x . y_k + h_k), ties to the lowest index."""
    atoms, heights = _check_geometry(samples, atoms, heights)
    assignment = argmax_linear(samples.points, atoms, heights)
    return _report(assignment, samples, atoms.shape[0])


def power_weights(atoms: np.ndarray, heights: np.ndarray) -> np.ndarray:
    """Per-atom power weights phi_k = -2 h_k - |y_k|^2.

    Minimizing ``|x - y_k|^2 + phi_k`` reproduces the linear-max assignment
    exactly.
    """
    atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
    heights = np.asarray(heights, dtype=float)
    if heights.shape != (atoms.shape[0],):
        raise ValueError("atoms and heights must have matching length")
    return -2.0 * heights - np.sum(atoms * atoms, axis=1)


def voronoi_heights(atoms: np.ndarray) -> np.ndarray:
    """Heights -|y_k|^2 / 2 (zero power weights): the assignment reduces to
    the unweighted nearest-atom Voronoi partition."""
    atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
    return -0.5 * np.sum(atoms * atoms, axis=1)


def spherical_costs(
    points: np.ndarray, atoms: np.ndarray, heights: np.ndarray
) -> np.ndarray:
    """(n, K) spherical power costs; +inf where <x, y_k> <= 0.

    Heights are shifted so max h = 0 before exponentiation, keeping every
    cell radius factor in (0, 1]; the shift reuses the translation freedom
    of the Euclidean diagram and never changes the assignment.
    """
    h = heights - np.max(heights)
    cos_r = np.exp(h)
    dots = points @ atoms.T
    with np.errstate(divide="ignore", invalid="ignore"):
        costs = -np.log(dots) / cos_r
    costs[dots <= 0.0] = np.inf
    return costs


def assign_spherical(
    samples: DiscreteMeasure, atoms: np.ndarray, heights: np.ndarray
) -> PowerCellReport:
    """Assign unit-norm samples to argmin of the spherical power cost.

    Raises if some sample has no atom in its open hemisphere.
    """
    atoms, heights = _check_geometry(samples, atoms, heights)
    if samples.domain != SPHERE:
        raise ValueError("assign_spherical requires a sphere-tagged measure")
    norms = np.linalg.norm(atoms, axis=1)
    if np.max(np.abs(norms - 1.0)) > 1e-9:
        raise ValueError("atoms must lie on the unit sphere")
    costs = spherical_costs(samples.points, atoms, heights)
    finite = np.isfinite(costs).any(axis=1)
    if not finite.all():
        bad = int(np.flatnonzero(~finite)[0])
        raise ValueError(
            f"sample {bad} has no atom in its open hemisphere; "
            "the spherical cost is undefined for <x, y> <= 0"
        )
    assignment = np.argmin(costs, axis=1)
    return _report(assignment, samples, atoms.shape[0])
