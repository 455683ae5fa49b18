"""Feature extraction: grayscale statistics and voxels-as-features.

The six grayscale statistics of a sample are mean, variance, skewness,
kurtosis, energy and entropy, computed with these conventions:

  * population (biased) central moments, so single-voxel blocks are defined;
  * skewness m3/m2^1.5 and kurtosis m4/m2^2, both 0 when the variance is 0
    (kurtosis is non-excess, a Gaussian scores ~3);
  * energy/entropy from a histogram over [min, max] with `bins` equal-width
    bins (one bin when min == max), p_k = count_k / N, energy = sum p_k^2,
    entropy = -sum_{p_k>0} p_k log2 p_k.

block_features partitions the volume into an axis-aligned grid of boxes
(remainder voxels go to the last box along each axis) and concatenates the
six statistics per box, boxes ordered x-fastest like the voxels themselves.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .labels import VALID_LABELS
from .manifest import read_manifest
from .volume import Volume, flatten, load_volume

STAT_NAMES = ("mean", "variance", "skewness", "kurtosis", "energy", "entropy")
DEFAULT_BINS = 32
DEFAULT_BLOCK_GRID = (4, 4, 4)


class FeatureKind(enum.Enum):
    GRAYSCALE = "GRAYSCALE"
    VAF = "VAF"


@dataclass(frozen=True)
class FeatureMatrix:
    """n samples x m features with labels, in manifest order."""

    values: np.ndarray
    labels: tuple[str, ...]
    subject_ids: tuple[str, ...]
    feature_kind: FeatureKind
    block_grid: tuple[int, int, int] | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("values must be a 2-D array")
        if not np.isfinite(values).all():
            raise ValueError("feature values must all be finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "subject_ids", tuple(self.subject_ids))
        n = values.shape[0]
        if len(self.labels) != n or len(self.subject_ids) != n:
            raise ValueError("labels/subject_ids length must equal the row count")
        for label in self.labels:
            if label not in VALID_LABELS:
                raise ValueError(f"unknown label {label!r}")

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]


def grayscale_features(intensities, bins: int = DEFAULT_BINS) -> np.ndarray:
    """Six grayscale statistics of a flat intensity sample."""
    x = np.asarray(intensities, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("intensities must be non-empty")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    mean = x.mean()
    d = x - mean
    m2 = np.mean(d * d)
    if m2 > 0.0:
        skewness = np.mean(d**3) / m2**1.5
        kurtosis = np.mean(d**4) / (m2 * m2)
    else:
        skewness = 0.0
        kurtosis = 0.0
    lo, hi = x.min(), x.max()
    if lo == hi:
        p = np.array([1.0])
    else:
        counts, _ = np.histogram(x, bins=bins, range=(lo, hi))
        p = counts / x.size
    energy = float(np.sum(p * p))
    nz = p[p > 0.0]
    entropy = float(-np.sum(nz * np.log2(nz)))
    return np.array([mean, m2, skewness, kurtosis, energy, entropy])


def _axis_edges(n: int, blocks: int) -> list[tuple[int, int]]:
    base = n // blocks
    edges = [(i * base, (i + 1) * base) for i in range(blocks - 1)]
    edges.append(((blocks - 1) * base, n))  # last block absorbs the remainder
    return edges


def block_features(v: Volume, block_grid: tuple[int, int, int] = DEFAULT_BLOCK_GRID,
                   bins: int = DEFAULT_BINS) -> np.ndarray:
    """Concatenated grayscale statistics over a bx*by*bz box partition."""
    nx, ny, nz = v.dims
    bx, by, bz = block_grid
    if min(bx, by, bz) < 1:
        raise ValueError(f"block grid components must be >= 1, got {block_grid}")
    if bx > nx or by > ny or bz > nz:
        raise ValueError(f"block grid {block_grid} exceeds volume dims {v.dims}")
    arr = v.as_array()
    xs, ys, zs = _axis_edges(nx, bx), _axis_edges(ny, by), _axis_edges(nz, bz)
    out = np.empty(6 * bx * by * bz)
    pos = 0
    for z0, z1 in zs:
        for y0, y1 in ys:
            for x0, x1 in xs:
                out[pos:pos + 6] = grayscale_features(arr[x0:x1, y0:y1, z0:z1], bins)
                pos += 6
    return out


def vaf_features(v: Volume) -> np.ndarray:
    """Raw voxels-as-features baseline: identical to flatten(v)."""
    return flatten(v)


def build_feature_matrix(manifest_path, kind: FeatureKind,
                         block_grid: tuple[int, int, int] = DEFAULT_BLOCK_GRID,
                         bins: int = DEFAULT_BINS) -> FeatureMatrix:
    """Extract one feature row per manifest row, preserving manifest order.

    All referenced volumes must share the same dims.
    """
    rows = read_manifest(manifest_path)
    values = None
    dims = None
    labels = []
    subject_ids = []
    for i, row in enumerate(rows):
        vol = load_volume(row.path, subject_id=row.subject_id)
        if dims is None:
            dims = vol.dims
        elif vol.dims != dims:
            raise ValueError(
                f"{row.path}: dims {vol.dims} differ from first volume's {dims}"
            )
        if kind is FeatureKind.VAF:
            feats = vaf_features(vol)
        else:
            feats = block_features(vol, block_grid, bins)
        if values is None:
            values = np.empty((len(rows), feats.size))
        values[i] = feats
        labels.append(row.label)
        subject_ids.append(row.subject_id)
    return FeatureMatrix(
        values=values,
        labels=tuple(labels),
        subject_ids=tuple(subject_ids),
        feature_kind=kind,
        block_grid=tuple(block_grid) if kind is FeatureKind.GRAYSCALE else None,
    )


def save_feature_matrix(fm: FeatureMatrix, path) -> None:
    """Persist as CSV (subject_id,label,f0..f{m-1}), 17 significant digits."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["subject_id", "label"] + [f"f{j}" for j in range(fm.n_features)])
        for i in range(fm.n_samples):
            row = [fm.subject_ids[i], fm.labels[i]]
            row.extend(format(x, ".17g") for x in fm.values[i])
            writer.writerow(row)


def load_feature_matrix(path, kind: FeatureKind = FeatureKind.GRAYSCALE,
                        block_grid: tuple[int, int, int] | None = None) -> FeatureMatrix:
    """Load a feature CSV written by save_feature_matrix.

    The CSV does not carry the extraction config, so kind/block_grid must be
    supplied by the caller when they matter downstream.
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["subject_id", "label"]:
            raise ValueError(f"{path}: expected header subject_id,label,f0..")
        m = len(header) - 2
        subject_ids, labels, data = [], [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != m + 2:
                raise ValueError(f"{path}:{lineno}: expected {m + 2} fields")
            subject_ids.append(rec[0])
            labels.append(rec[1])
            data.append([float(x) for x in rec[2:]])
    return FeatureMatrix(
        values=np.array(data, dtype=np.float64).reshape(len(data), m),
        labels=tuple(labels),
        subject_ids=tuple(subject_ids),
        feature_kind=kind,
        block_grid=tuple(block_grid) if block_grid else None,
    )
