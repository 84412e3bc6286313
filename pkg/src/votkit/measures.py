"""Weighted point sets (discrete measures) on Euclidean space or the unit sphere."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EUCLIDEAN = "euclidean"
SPHERE = "sphere"

# max allowed |norm - 1| for points tagged as spherical
SPHERE_NORM_TOL = 1e-9


@dataclass(frozen=True)
class DiscreteMeasure:
    """A measure ``sum_j m_j * delta[x_j]`` with nonnegative masses.

    ``points`` is an (n, d) float array, ``masses`` an (n,) float array.
    Masses are stored as given (possibly unnormalized); solvers decide
    whether to rescale.  Instances are immutable and safe to share.
    """

    points: np.ndarray
    masses: np.ndarray
    domain: str = EUCLIDEAN

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError("points must be a nonempty (n, d) array")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        mas = np.array(self.masses, dtype=float)
        if mas.ndim != 1 or mas.shape[0] != pts.shape[0]:
            raise ValueError(
                f"masses must be a length-{pts.shape[0]} vector, got shape {mas.shape}"
            )
        if not np.all(np.isfinite(mas)) or np.any(mas < 0):
            raise ValueError("masses must be finite and nonnegative")
        if not np.any(mas > 0):
            raise ValueError("at least one mass must be positive")
        if self.domain not in (EUCLIDEAN, SPHERE):
            raise ValueError(f"unknown domain {self.domain!r}")
        if self.domain == SPHERE:
            norms = np.linalg.norm(pts, axis=1)
            worst = float(np.max(np.abs(norms - 1.0)))
            if worst > SPHERE_NORM_TOL:
                raise ValueError(
                    f"sphere-tagged points must have unit norm (max deviation {worst:.3e})"
                )
        pts.setflags(write=False)
        mas.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "masses", mas)

    @classmethod
    def uniform(cls, points, domain: str = EUCLIDEAN) -> "DiscreteMeasure":
        """Measure with mass 1/n on each of the n points."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        n = pts.shape[0]
        return cls(pts, np.full(n, 1.0 / n), domain)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def total_mass(m: DiscreteMeasure) -> float:
    """Sum of masses.  numpy's pairwise reduction is deterministic for a
    fixed array length, so repeated calls agree bit for bit."""
    return float(np.sum(m.masses))


def normalize(m: DiscreteMeasure) -> DiscreteMeasure:
    """Rescale masses to total 1; points unchanged."""
    return DiscreteMeasure(m.points, m.masses / total_mass(m), m.domain)


def validate_assignment(assignment: np.ndarray, n_samples: int, k: int) -> np.ndarray:
    """Check a hard assignment vector: one target per sample, indices in [0, k)."""
    a = np.asarray(assignment)
    if a.shape != (n_samples,):
        raise ValueError(f"assignment must have shape ({n_samples},), got {a.shape}")
    if not np.issubdtype(a.dtype, np.integer):
        raise ValueError("assignment must be integer-valued")
    if a.size and (a.min() < 0 or a.max() >= k):
        raise ValueError(f"assignment indices must lie in [0, {k})")
    return a


def cell_masses(assignment: np.ndarray, m: DiscreteMeasure, k: int) -> np.ndarray:
    """Mass received by each of k cells under a hard assignment.

    Component ``j`` is the sum of masses of samples assigned to ``j``;
    the components sum to ``total_mass(m)``.
    """
    a = validate_assignment(assignment, len(m), k)
    return np.bincount(a, weights=m.masses, minlength=k)
