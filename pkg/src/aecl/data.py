"""Embedding dataset loading, synthesis, augmentation and batching.

The on-disk embedding format is deliberately plain: a one-line ASCII header
``AECL-EMB v1 <S> <D1>`` followed by S lines of D1 space-separated decimal
reals. Labels files carry one integer per line. Values are written with
``repr(float)`` so a write/read round trip is bit-exact.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

from .errors import ConfigError, DataError

EMB_MAGIC = "AECL-EMB"
EMB_VERSION = "v1"


def _read_only(a: np.ndarray) -> np.ndarray:
    out = np.asarray(a, dtype=np.float64).copy()
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class EmbeddingDataset:
    """Immutable per-sample embeddings for one or two views.

    view0 holds the original-view vectors; view1, when present, the
    augmented-view vectors of identical shape. labels are ground truth used
    for evaluation only.
    """

    ids: np.ndarray
    view0: np.ndarray
    view1: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None
    num_classes_hint: Optional[int] = None

    @property
    def n_samples(self) -> int:
        return self.view0.shape[0]

    @property
    def dim(self) -> int:
        return self.view0.shape[1]

    def with_view1(self, view1: np.ndarray) -> "EmbeddingDataset":
        view1 = _read_only(view1)
        if view1.shape != self.view0.shape:
            raise DataError("view shape mismatch")
        return replace(self, view1=view1)


@dataclass(frozen=True, eq=False)
class Batch:
    """Paired same-row slices of both views; indices refer to dataset rows."""

    indices: np.ndarray
    v0: np.ndarray
    v1: np.ndarray

    @property
    def size(self) -> int:
        return self.v0.shape[0]


def _validate_matrix(mat: np.ndarray, reject_zero_rows: bool = True) -> np.ndarray:
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim != 2:
        raise DataError("invalid embedding file")
    if not np.all(np.isfinite(mat)):
        raise DataError("invalid embedding value")
    if reject_zero_rows and np.any(~np.any(mat != 0.0, axis=1)):
        raise DataError("degenerate embedding row")
    return mat


def save_embeddings(path: Path | str, matrix: np.ndarray) -> None:
    """Write a matrix in the AECL-EMB v1 format."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise DataError("invalid embedding matrix")
    s, d = matrix.shape
    lines = [f"{EMB_MAGIC} {EMB_VERSION} {s} {d}"]
    for row in matrix:
        lines.append(" ".join(repr(float(x)) for x in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def load_embeddings(path: Path | str) -> np.ndarray:
    """Read a matrix in the AECL-EMB v1 format."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"embedding file not found: {path}")
    text = path.read_text(encoding="ascii")
    lines = text.splitlines()
    if not lines:
        raise DataError("invalid embedding file header")
    header = lines[0].split()
    if len(header) != 4 or header[0] != EMB_MAGIC or header[1] != EMB_VERSION:
        raise DataError("invalid embedding file header")
    try:
        s, d = int(header[2]), int(header[3])
    except ValueError as exc:
        raise DataError("invalid embedding file header") from exc
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != s:
        raise DataError("invalid embedding file")
    try:
        mat = np.array([[float(tok) for tok in ln.split()] for ln in body],
                       dtype=np.float64)
    except ValueError as exc:
        raise DataError("invalid embedding value") from exc
    if mat.ndim != 2 or mat.shape != (s, d):
        raise DataError("invalid embedding file")
    return mat


def save_labels(path: Path | str, labels: Sequence[int]) -> None:
    Path(path).write_text(
        "\n".join(str(int(v)) for v in labels) + "\n", encoding="ascii")


def load_labels(path: Path | str) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"labels file not found: {path}")
    lines = [ln for ln in path.read_text(encoding="ascii").splitlines()
             if ln.strip()]
    try:
        return np.array([int(ln) for ln in lines], dtype=np.int64)
    except ValueError as exc:
        raise DataError("invalid label value") from exc


def load_dataset(path_view0: Path | str,
                 path_view1: Optional[Path | str] = None,
                 path_labels: Optional[Path | str] = None,
                 num_classes_hint: Optional[int] = None) -> EmbeddingDataset:
    """Load and validate an embedding dataset from disk.

    Raises DataError on shape mismatches between views, non-finite entries,
    all-zero rows (cosine similarity is applied downstream) or a labels file
    whose length disagrees with the embeddings.
    """
    view0 = _validate_matrix(load_embeddings(path_view0))
    view1 = None
    if path_view1 is not None:
        view1 = _validate_matrix(load_embeddings(path_view1))
        if view1.shape != view0.shape:
            raise DataError("view shape mismatch")
    labels = None
    if path_labels is not None:
        labels = load_labels(path_labels)
        if labels.shape[0] != view0.shape[0]:
            raise DataError("label count mismatch")
        if num_classes_hint is not None and (
                labels.min() < 0 or labels.max() >= num_classes_hint):
            raise DataError("label out of range")
    return EmbeddingDataset(
        ids=np.arange(view0.shape[0]),
        view0=_read_only(view0),
        view1=_read_only(view1) if view1 is not None else None,
        labels=labels.copy() if labels is not None else None,
        num_classes_hint=num_classes_hint,
    )


def generate_synthetic(num_clusters: int, per_cluster: int, dim: int,
                       separation: float, noise_sigma: float,
                       seed: int) -> EmbeddingDataset:
    """Gaussian blobs around centers at pairwise distance >= separation.

    Centers are axis multiples of the separation pushed through a random
    rotation, so the guarantee holds exactly for any cluster count. view1 is
    a copy of view0; callers augment separately. Deterministic per seed.
    """
    if num_clusters < 2 or per_cluster < 2 or dim < 2:
        raise ConfigError("synthetic dataset needs num_clusters>=2, per_cluster>=2, dim>=2")
    if separation <= 0 or noise_sigma <= 0:
        raise ConfigError("separation and noise_sigma must be positive")
    rng = np.random.default_rng(seed)
    centers = np.zeros((num_clusters, dim))
    for c in range(num_clusters):
        centers[c, c % dim] = separation * (1 + c // dim)
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    q = q * np.sign(np.diag(r))
    centers = centers @ q.T
    labels = np.repeat(np.arange(num_clusters), per_cluster)
    view0 = centers[labels] + noise_sigma * rng.standard_normal((labels.size, dim))
    return EmbeddingDataset(
        ids=np.arange(labels.size),
        view0=_read_only(view0),
        view1=_read_only(view0),
        labels=labels,
        num_classes_hint=num_clusters,
    )


def augment_features(view0: np.ndarray, noise_sigma: float, mask_prob: float,
                     seed: int) -> np.ndarray:
    """Feature-space augmentation: coordinate masking plus Gaussian noise.

    Each input coordinate is independently zeroed with probability
    mask_prob, then isotropic noise of scale noise_sigma is added. When
    noise_sigma is 0 a row whose surviving coordinates are all zero gets its
    mask redrawn, so no output row is all-zero. Deterministic per seed.
    """
    if mask_prob >= 1.0 or mask_prob < 0.0:
        raise ConfigError("degenerate augmentation")
    if noise_sigma < 0.0:
        raise ConfigError("noise_sigma must be nonnegative")
    view0 = np.asarray(view0, dtype=np.float64)
    rng = np.random.default_rng(seed)
    if mask_prob > 0.0:
        keep = rng.random(view0.shape) >= mask_prob
        out = view0 * keep
    else:
        out = view0.copy()
    if noise_sigma > 0.0:
        out = out + noise_sigma * rng.standard_normal(view0.shape)
    elif mask_prob > 0.0:
        for i in np.flatnonzero(~np.any(out != 0.0, axis=1)):
            if not np.any(view0[i] != 0.0):
                continue  # nothing to rescue; upstream validation rejects these
            while not np.any(out[i] != 0.0):
                out[i] = view0[i] * (rng.random(view0.shape[1]) >= mask_prob)
    return out


def batch_iterator(dataset: EmbeddingDataset, batch_size: int,
                   shuffle_seed: int, epoch: int) -> Iterator[Batch]:
    """Yield floor(S/N) training batches over a per-epoch permutation.

    The permutation is a pure function of (shuffle_seed, epoch); the final
    partial batch is dropped so every contrastive denominator sees the full
    2N-2 terms. Batches pair the same rows of both views.
    """
    if batch_size < 2:
        raise ConfigError("batch size must be at least 2")
    s = dataset.n_samples
    if s < batch_size:
        raise DataError("dataset smaller than batch size")
    if dataset.view1 is None:
        raise DataError("dataset has no augmented view")
    rng = np.random.default_rng([shuffle_seed, epoch])
    perm = rng.permutation(s)
    for b in range(s // batch_size):
        idx = perm[b * batch_size:(b + 1) * batch_size]
        yield Batch(indices=idx, v0=dataset.view0[idx], v1=dataset.view1[idx])
