"""Seeded demo datasets: nested ellipses, unequal blobs, a Gaussian pair,
and spherical caps.  All randomness flows from one seed through named
spawn keys, so each dataset has its own reproducible stream.
"""
from __future__ import annotations

import math
import zlib

import numpy as np

from .measures import SPHERE, DiscreteMeasure


def rng_for(seed: int, *names: str) -> np.random.Generator:
    """Named, splittable stream: one root seed, one spawn key per name."""
    key = tuple(zlib.crc32(n.encode()) for n in names)
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


def nested_ellipses(
    count: int = 10, points_per: int = 200, seed: int = 0
) -> tuple[list[DiscreteMeasure], dict]:
    """Concentric random ellipses, one ring-shaped measure per scale rank."""
    rng = rng_for(seed, "ellipses")
    base_axes = 1.0 + 0.5 * rng.random(2)
    phi = rng.random() * math.pi
    rot = np.array([[math.cos(phi), -math.sin(phi)], [math.sin(phi), math.cos(phi)]])
    measures = []
    scales = []
    for e in range(count):
        scale = (e + 1.0) / count * (1.0 + 0.05 * rng.random())
        scales.append(scale)
        theta = rng.random(points_per) * 2.0 * math.pi
        ring = np.stack(
            [scale * base_axes[0] * np.cos(theta), scale * base_axes[1] * np.sin(theta)],
            axis=1,
        )
        measures.append(DiscreteMeasure.uniform(ring @ rot.T))
    params = {
        "demo": "ellipses",
        "count": count,
        "points_per": points_per,
        "seed": seed,
        "axes": [float(a) for a in base_axes],
        "rotation_rad": float(phi),
        "scales": [float(s) for s in scales],
    }
    return measures, params


def gaussian_blobs(
    sizes: tuple = (500, 200, 200), seed: int = 0, spread: float = 4.0, std: float = 0.5
) -> tuple[DiscreteMeasure, dict]:
    """Unequal isotropic blobs with unit mass per sample (raw totals)."""
    rng = rng_for(seed, "blobs")
    k = len(sizes)
    centers = np.stack(
        [
            spread * np.cos(2 * math.pi * np.arange(k) / k),
            spread * np.sin(2 * math.pi * np.arange(k) / k),
        ],
        axis=1,
    )
    parts = [c + std * rng.normal(size=(n, 2)) for c, n in zip(centers, sizes)]
    pts = np.vstack(parts)
    measure = DiscreteMeasure(pts, np.ones(pts.shape[0]))
    params = {
        "demo": "blobs",
        "sizes": [int(s) for s in sizes],
        "seed": seed,
        "spread": spread,
        "std": std,
        "centers": centers.tolist(),
    }
    return measure, params


def gaussian_pair(
    n: int = 5000, gap: float = 1.0, var: float = 0.1, seed: int = 0
) -> tuple[DiscreteMeasure, DiscreteMeasure, dict]:
    """Two 2-D isotropic Gaussians with identical covariance var*I, means
    ``gap`` apart; the squared 2-Wasserstein distance between the underlying
    laws is gap^2."""
    rng = rng_for(seed, "gaussians")
    std = math.sqrt(var)
    a = rng.normal(size=(n, 2)) * std
    b = rng.normal(size=(n, 2)) * std + np.array([gap, 0.0])
    params = {"demo": "gaussians", "n": n, "gap": gap, "var": var, "seed": seed}
    return DiscreteMeasure.uniform(a), DiscreteMeasure.uniform(b), params


def sphere_caps(
    n: int = 500,
    axes: np.ndarray | None = None,
    concentration: float = 50.0,
    fractions: tuple = (0.5, 0.5),
    seed: int = 0,
) -> tuple[DiscreteMeasure, dict]:
    """One measure: caps of samples around the given unit axes.

    Samples are axis + tangential Gaussian noise of scale 1/sqrt(c),
    renormalized to the sphere.
    """
    rng = rng_for(seed, "sphere-caps")
    if axes is None:
        axes = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
    axes = np.asarray(axes, dtype=float)
    axes = axes / np.linalg.norm(axes, axis=1, keepdims=True)
    counts = [int(round(f * n)) for f in fractions]
    counts[-1] = n - sum(counts[:-1])
    sigma = 1.0 / math.sqrt(concentration)
    parts = []
    for axis, m in zip(axes, counts):
        raw = axis + sigma * rng.normal(size=(m, 3))
        parts.append(raw / np.linalg.norm(raw, axis=1, keepdims=True))
    pts = np.vstack(parts)
    measure = DiscreteMeasure.uniform(pts, domain=SPHERE)
    params = {
        "demo": "sphere-caps",
        "n": n,
        "axes": axes.tolist(),
        "concentration": concentration,
        "fractions": list(fractions),
        "seed": seed,
    }
    return measure, params


def rod_star(n: int = 1000, seed: int = 0) -> np.ndarray:
    """Centered asymmetric 3-D test shape: four thin rods of distinct lengths
    in generic directions.  Thin straight segments force a monotone (rigid)
    transport correspondence, so rigid-regularized runs can be checked
    against exact half-transforms."""
    rng = rng_for(seed, "rod-star")
    dirs = np.array(
        [[1.0, 0.15, 0.05], [-0.25, 1.0, 0.3], [0.1, -0.4, 1.0], [-0.8, -0.7, -0.35]]
    )
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    lens = np.array([2.2, 1.5, 1.0, 0.7])
    counts = (n * lens / lens.sum()).astype(int)
    counts[0] += n - counts.sum()
    parts = []
    for d, length, m in zip(dirs, lens, counts):
        s = rng.random(m) * length
        parts.append(s[:, None] * d + 0.02 * rng.normal(size=(m, 3)))
    pts = np.vstack(parts)
    return pts - pts.mean(axis=0)


def gradient_image(width: int = 64, height: int = 64) -> np.ndarray:
    """Smooth synthetic test image; all pixel colors are distinct (row and
    column gradients are injective per channel), so a balanced palette with
    exactly equal pixel counts is attainable."""
    i = np.arange(height)[:, None]
    j = np.arange(width)[None, :]
    r = np.rint(i / max(height - 1, 1) * 250.0)
    g = np.rint(j / max(width - 1, 1) * 250.0)
    b = np.rint((i + j) / max(height + width - 2, 1) * 250.0)
    img = np.stack(
        [np.broadcast_to(r, (height, width)),
         np.broadcast_to(g, (height, width)),
         np.broadcast_to(b, (height, width))],
        axis=2,
    )
    return img.astype(np.uint8)
