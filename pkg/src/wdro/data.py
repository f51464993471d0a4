"""Dataset generation and ingestion.

The synthetic task draws standard 2-D Gaussians, labels them by whether
they fall inside the circle of radius sqrt(2), and rejects an annulus
around that circle to leave a wide margin between the classes.  CSV files
use a header row f0..f{m-1} plus a label column; the IDX loader covers
the classic image/label binary layout when a user supplies such files.
"""

from __future__ import annotations

import csv
import hashlib
import math
import struct
from dataclasses import dataclass

import numpy as np

from .nets import Sample

MARGIN_FACTOR = 1.3
CLASS_RADIUS = math.sqrt(2.0)


@dataclass
class SyntheticSpec:
    n: int
    seed: int = 0
    margin_factor: float = MARGIN_FACTOR
    radius: float = CLASS_RADIUS

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")


def gen_synthetic(spec: SyntheticSpec):
    """Rejection-sample exactly spec.n labeled points.

    X ~ N(0, I_2); label 0 inside the radius, 1 outside; points with norm
    in (radius/margin, radius*margin) are discarded.  About 70% of the
    retained mass is the inner class.
    """
    rng = np.random.default_rng(spec.seed)
    lo = spec.radius / spec.margin_factor
    hi = spec.radius * spec.margin_factor
    out = []
    while len(out) < spec.n:
        x = rng.standard_normal(2)
        r = float(np.linalg.norm(x))
        if lo < r < hi:
            continue
        out.append(Sample(x, 0 if r <= lo else 1))
    return out


@dataclass
class CsvSchema:
    label_column: str = "y"
    classification: bool = True


class CsvFormatError(ValueError):
    def __init__(self, path, line, msg):
        super().__init__(f"{path}:{line}: {msg}")
        self.line = line


def load_csv(path, schema: CsvSchema | None = None):
    """Order-preserving parse; feature dimension inferred from the header
    and enforced on every row."""
    if schema is None:
        schema = CsvSchema()
    samples = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(path, 1, "missing header row")
        if schema.label_column not in header:
            raise CsvFormatError(path, 1, f"no label column {schema.label_column!r}")
        label_idx = header.index(schema.label_column)
        feat_idx = [i for i in range(len(header)) if i != label_idx]
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise CsvFormatError(
                    path, line_no, f"expected {len(header)} fields, got {len(row)}"
                )
            try:
                x = np.array([float(row[i]) for i in feat_idx])
                raw = row[label_idx]
                y = int(raw) if schema.classification else float(raw)
            except ValueError as e:
                raise CsvFormatError(path, line_no, str(e))
            samples.append(Sample(x, y))
    return samples


def write_csv(path, samples):
    if not samples:
        raise ValueError("nothing to write")
    m = samples[0].x.shape[0]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"f{i}" for i in range(m)] + ["y"])
        for z in samples:
            w.writerow([repr(float(v)) for v in z.x] + [z.y])


def norm_stats(data, p) -> float:
    """Mean p-norm of the feature vectors."""
    if not data:
        raise ValueError("empty dataset")
    if p == 2:
        return float(np.mean([np.linalg.norm(z.x) for z in data]))
    if math.isinf(p):
        return float(np.mean([np.max(np.abs(z.x)) if z.x.size else 0.0 for z in data]))
    return float(np.mean([np.sum(np.abs(z.x) ** p) ** (1.0 / p) for z in data]))


def dataset_hash(data) -> str:
    """Reproducibility stamp: sha256 over the canonical byte layout."""
    h = hashlib.sha256()
    for z in data:
        h.update(np.ascontiguousarray(z.x, dtype="<f8").tobytes())
        h.update(repr(z.y).encode())
    return h.hexdigest()


def load_idx_images(path) -> np.ndarray:
    """IDX3 image file -> array (n, rows*cols) scaled to [0, 1]."""
    with open(path, "rb") as fh:
        magic, n, rows, cols = struct.unpack(">IIII", fh.read(16))
        if magic != 2051:
            raise ValueError(f"{path}: bad IDX image magic {magic}")
        buf = fh.read(n * rows * cols)
    arr = np.frombuffer(buf, dtype=np.uint8).reshape(n, rows * cols)
    return arr.astype(np.float64) / 255.0


def load_idx_labels(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic, n = struct.unpack(">II", fh.read(8))
        if magic != 2049:
            raise ValueError(f"{path}: bad IDX label magic {magic}")
        buf = fh.read(n)
    return np.frombuffer(buf, dtype=np.uint8).astype(np.int64)


def load_idx_dataset(image_path, label_path, limit=None):
    xs = load_idx_images(image_path)
    ys = load_idx_labels(label_path)
    if xs.shape[0] != ys.shape[0]:
        raise ValueError("image/label counts differ")
    if limit is not None:
        xs, ys = xs[:limit], ys[:limit]
    return [Sample(x, int(y)) for x, y in zip(xs, ys)]
