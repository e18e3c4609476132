"""Synthetic multimodal datasets."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError


@dataclass(frozen=True)
class MultimodalDataset:
    xa: np.ndarray
    xb: np.ndarray
    y: np.ndarray
    k: int

    def __post_init__(self):
        xa = np.atleast_2d(np.asarray(self.xa, dtype=float))
        xb = np.atleast_2d(np.asarray(self.xb, dtype=float))
        y = np.asarray(self.y).astype(int)
        if not (xa.shape[0] == xb.shape[0] == y.shape[0]):
            raise DimensionError("modalities and labels must have equal length")
        if y.size and (y.min() < 0 or y.max() >= self.k):
            raise ValueError(f"labels must lie in [0, {self.k})")
        object.__setattr__(self, "xa", xa)
        object.__setattr__(self, "xb", xb)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return self.y.shape[0]

    @property
    def combined(self) -> np.ndarray:
        """Both modalities side by side, for single-network baselines."""
        return np.hstack([self.xa, self.xb])

    def subset(self, idx) -> MultimodalDataset:
        return MultimodalDataset(self.xa[idx], self.xb[idx], self.y[idx], self.k)

    def split(self, train_fraction: float = 0.8, seed: int = 0):
        """Shuffled train/test split; stable for a given seed."""
        order = np.random.default_rng(seed).permutation(len(self))
        cut = int(round(train_fraction * len(self)))
        return self.subset(np.sort(order[:cut])), self.subset(np.sort(order[cut:]))


def two_moons(n: int = 2000, jitter: float = 0.1, seed: int = 0) -> MultimodalDataset:
    """Two interleaving half circles; modality A is x, modality B is y.

    Label 0 is the upper arc ``(cos t, sin t)``, label 1 the lower arc
    ``(1 - cos t, 0.5 - sin t)``, ``t`` evenly spaced on ``[0, pi]``. Label 0 gets
    ``ceil(n / 2)`` points.
    """
    if n < 2:
        raise ValueError("two_moons needs n >= 2")
    n0 = (n + 1) // 2
    n1 = n - n0
    t0 = np.linspace(0.0, np.pi, n0)
    t1 = np.linspace(0.0, np.pi, n1)
    pts = np.vstack(
        [
            np.column_stack([np.cos(t0), np.sin(t0)]),
            np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)]),
        ]
    )
    y = np.concatenate([np.zeros(n0, dtype=int), np.ones(n1, dtype=int)])
    rng = np.random.default_rng(seed)
    if jitter > 0:
        pts = pts + rng.normal(0.0, jitter, size=pts.shape)
    order = rng.permutation(n)
    pts, y = pts[order], y[order]
    return MultimodalDataset(pts[:, :1], pts[:, 1:], y, 2)


def simplex_means(k: int, dim: int, separation: float) -> np.ndarray:
    """``k`` class means with equal pairwise distance ``separation * sqrt(2)``."""
    if dim >= k:
        means = np.zeros((k, dim))
        means[:, :k] = np.eye(k)
    else:
        # fewer dimensions than classes: fixed random projection of the simplex
        proj = np.random.default_rng(k * 7919 + dim).normal(size=(k, dim))
        means = proj / np.linalg.norm(proj, axis=1, keepdims=True)
    return separation * means


def gaussian_blobs(
    n: int, k: int, dim_a: int, dim_b: int, separation: float, seed: int = 0
) -> MultimodalDataset:
    """Isotropic unit-variance Gaussian classes in each modality, means on a scaled simplex."""
    if n < 1 or k < 2 or dim_a < 1 or dim_b < 1:
        raise ValueError("need n >= 1, k >= 2 and positive dimensions")
    rng = np.random.default_rng(seed)
    y = np.arange(n) % k
    rng.shuffle(y)
    xa = simplex_means(k, dim_a, separation)[y] + rng.normal(size=(n, dim_a))
    xb = simplex_means(k, dim_b, separation)[y] + rng.normal(size=(n, dim_b))
    return MultimodalDataset(xa, xb, y, k)


# -- text format -----------------------------------------------------------------
#
#   # robust-fusion-dataset k=<K> dim_a=<DA> dim_b=<DB>
#   a_1,...,a_DA,b_1,...,b_DB,label          (one sample per line)


def save_dataset(ds: MultimodalDataset, path) -> None:
    da, db = ds.xa.shape[1], ds.xb.shape[1]
    lines = [f"# robust-fusion-dataset k={ds.k} dim_a={da} dim_b={db}"]
    for xa, xb, y in zip(ds.xa, ds.xb, ds.y):
        fields = [repr(float(v)) for v in xa] + [repr(float(v)) for v in xb] + [str(int(y))]
        lines.append(",".join(fields))
    Path(path).write_text("\n".join(lines) + "\n")


def load_dataset(path) -> MultimodalDataset:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# robust-fusion-dataset"):
        raise ValueError(f"{path}: missing dataset header")
    meta = dict(tok.split("=") for tok in lines[0].split()[2:])
    k, da, db = int(meta["k"]), int(meta["dim_a"]), int(meta["dim_b"])
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != da + db + 1:
            raise ValueError(f"{path}:{lineno}: expected {da + db + 1} fields, got {len(parts)}")
        rows.append(parts)
    data = np.array([[float(v) for v in r[:-1]] for r in rows]).reshape(len(rows), da + db)
    y = np.array([int(r[-1]) for r in rows], dtype=int)
    return MultimodalDataset(data[:, :da], data[:, da:], y, k)
