"""CSV / XYZ / PPM codecs and run reports.

Floats are written with 17 significant digits so every emitted file
re-ingests to bit-identical values.  Images use binary PPM (P6, maxval 255),
which round-trips exactly with no external codec.
"""
from __future__ import annotations

import json
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .measures import EUCLIDEAN, SPHERE, DiscreteMeasure

FLOAT_FMT = "{:.17g}"


def _fmt(x: float) -> str:
    return FLOAT_FMT.format(float(x))


def _is_number(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


def write_measure_csv(path, m: DiscreteMeasure, header: bool = True) -> Path:
    path = Path(path)
    cols = [f"x{i}" for i in range(m.dim)] + ["mass"]
    lines = []
    if header:
        lines.append(",".join(cols))
    for p, w in zip(m.points, m.masses):
        lines.append(",".join([_fmt(v) for v in p] + [_fmt(w)]))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_measure_csv(path, domain: str = EUCLIDEAN, with_mass: bool | None = None) -> DiscreteMeasure:
    """Read one sample per row: n coordinate columns, optional final mass column.

    A non-numeric first row is treated as a header; a header whose last
    column is named ``mass`` marks the mass column.  Without a header the
    mass column must be requested explicitly (``with_mass=True``), otherwise
    all columns are coordinates and masses are uniform.  Sphere-tagged input
    is renormalized onto the unit sphere, warning when any norm is off by
    more than 1e-6.
    """
    path = Path(path)
    rows = []
    header_fields = None
    with path.open() as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            fields = [f.strip() for f in line.split(",")]
            if lineno == 1 and not all(_is_number(f) for f in fields):
                header_fields = fields
                continue
            try:
                rows.append([float(f) for f in fields])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed row ({exc})") from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValueError(f"{path}: inconsistent column counts {sorted(widths)}")
    data = np.asarray(rows, dtype=float)
    if with_mass is None:
        with_mass = header_fields is not None and header_fields[-1].lower() in ("mass", "m", "weight")
    if with_mass:
        if data.shape[1] < 2:
            raise ValueError(f"{path}: mass column requested but only one column present")
        points, masses = data[:, :-1], data[:, -1]
    else:
        points = data
        masses = np.full(data.shape[0], 1.0 / data.shape[0])
    if domain == SPHERE:
        norms = np.linalg.norm(points, axis=1)
        if np.any(norms == 0):
            raise ValueError(f"{path}: zero vector cannot be projected to the sphere")
        if np.max(np.abs(norms - 1.0)) > 1e-6:
            warnings.warn(f"{path}: renormalizing points off the unit sphere", stacklevel=2)
        points = points / norms[:, None]
    return DiscreteMeasure(points, masses, domain)


def write_xyz(path, points: np.ndarray, masses: np.ndarray | None = None) -> Path:
    path = Path(path)
    lines = []
    for i, p in enumerate(np.atleast_2d(points)):
        cols = [_fmt(v) for v in p]
        if masses is not None:
            cols.append(_fmt(masses[i]))
        lines.append(" ".join(cols))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_xyz(path) -> DiscreteMeasure:
    """Whitespace-separated x y z rows with an optional 4th mass column."""
    path = Path(path)
    rows = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) not in (3, 4):
            raise ValueError(f"{path}:{lineno}: expected 3 or 4 columns, got {len(fields)}")
        try:
            rows.append([float(f) for f in fields])
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: malformed row ({exc})") from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValueError(f"{path}: mixed 3- and 4-column rows")
    data = np.asarray(rows, dtype=float)
    if data.shape[1] == 4:
        return DiscreteMeasure(data[:, :3], data[:, 3])
    return DiscreteMeasure.uniform(data)


def write_ppm(path, pixels: np.ndarray) -> Path:
    """Binary P6 image from an (H, W, 3) uint8 array."""
    pixels = np.asarray(pixels)
    if pixels.ndim != 3 or pixels.shape[2] != 3 or pixels.dtype != np.uint8:
        raise ValueError("pixels must be an (H, W, 3) uint8 array")
    h, w, _ = pixels.shape
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(pixels.tobytes())
    return path


def read_ppm(path) -> np.ndarray:
    path = Path(path)
    data = path.read_bytes()

    pos = 0

    def next_token():
        nonlocal pos
        while pos < len(data):
            if data[pos : pos + 1].isspace():
                pos += 1
            elif data[pos : pos + 1] == b"#":
                while pos < len(data) and data[pos : pos + 1] != b"\n":
                    pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        return data[start:pos]

    magic = next_token()
    if magic != b"P6":
        raise ValueError(f"{path}: not a binary PPM (P6) file")
    w = int(next_token())
    h = int(next_token())
    maxval = int(next_token())
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 is supported")
    pos += 1  # the single whitespace after the header
    raw = data[pos : pos + w * h * 3]
    if len(raw) != w * h * 3:
        raise ValueError(f"{path}: truncated pixel data")
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3).copy()


def image_measure(pixels: np.ndarray) -> DiscreteMeasure:
    """Pixels embedded in the unit color cube with uniform masses."""
    pts = pixels.reshape(-1, 3).astype(float) / 255.0
    return DiscreteMeasure.uniform(pts)


def quantized_image(pixels_shape, palette01: np.ndarray, assignment: np.ndarray) -> np.ndarray:
    """Rebuild an (H, W, 3) uint8 image from palette indices."""
    rgb = np.clip(np.rint(palette01 * 255.0), 0, 255).astype(np.uint8)
    return rgb[assignment].reshape(pixels_shape)


def stable_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False)


@dataclass
class RunReport:
    """One self-contained record per command invocation."""

    command: str
    config: dict
    seed: int
    objective_trace: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    wall_time_s: float = 0.0
    _started: float = field(default_factory=time.perf_counter, repr=False)

    def add_output(self, path) -> None:
        p = Path(path)
        self.outputs.append({"path": str(p), "bytes": p.stat().st_size})

    def write(self, path) -> Path:
        self.wall_time_s = time.perf_counter() - self._started
        doc = {
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "objective_trace": [float(v) for v in self.objective_trace],
            "metrics": self.metrics,
            "outputs": self.outputs,
            "wall_time_s": self.wall_time_s,
        }
        path = Path(path)
        path.write_text(stable_json(doc) + "\n")
        return path
