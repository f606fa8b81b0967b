"""Three-stage training: contrastive warm-up, k-means bootstrap, full objective.

Stage 1 (epochs 1..E1) minimizes the instance loss only and leaves the
clustering head untouched. Stage 2 (E1+1..E1+E2) adds cross-entropy against
k-means labels computed once, at stage entry, on the frozen original-view
embeddings. Stage 3 regenerates confidence-thresholded pseudo-labels from
the current assignments per batch and optimizes the full composite.

Every run is a pure function of (dataset, config): parameter init, view
augmentation, batch shuffling and k-means derive their seeds from
config.seed with fixed offsets (+0, +1, +2, +3 respectively).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from .data import Batch, EmbeddingDataset, augment_features, batch_iterator
from .errors import ConfigError, DataError
from .evaluation import accuracy, align_labels, iter_forward_batches, \
    negative_similarity, nmi as nmi_score
from .losses import LossWeights, cluster_loss, composite_loss, \
    entropy_balance_loss, entropy_sharpness_loss, instance_loss, \
    positive_sets, pseudo_label_loss
from .model import ModelDims, ParameterSet, forward_all, init_params


@dataclass(frozen=True)
class TrainConfig:
    """Everything a training run depends on besides the dataset itself.

    lr_encoder is reserved: embeddings are precomputed here, so no encoder
    is fine-tuned, but the field keeps configs forward compatible.
    """

    dims: ModelDims
    batch_size: int = 400
    epochs_stage1: int = 10
    epochs_stage2: int = 1
    epochs_total: int = 70
    weights: LossWeights = field(default_factory=LossWeights)
    lr_heads: float = 5e-4
    lr_encoder: float = 5e-6
    confidence_threshold: float = 0.95
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    pseudo_mode: str = "threshold"
    entropy_sign: str = "intent"
    use_similarity_term: bool = True
    aug_noise_sigma: float = 0.1
    aug_mask_prob: float = 0.1

    def validate(self) -> None:
        if self.epochs_stage1 < 0 or self.epochs_stage2 < 0:
            raise ConfigError("stage lengths must be nonnegative")
        if self.epochs_stage1 + self.epochs_stage2 > self.epochs_total:
            raise ConfigError("stage budget exceeds total epochs")
        if self.batch_size < 2:
            raise ConfigError("batch size must be at least 2")
        if not (0.0 < self.confidence_threshold < 1.0):
            raise ConfigError("confidence threshold must be in (0, 1)")
        if self.lr_heads <= 0:
            raise ConfigError("learning rate must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        if self.pseudo_mode not in ("threshold", "argmax"):
            raise ConfigError("pseudo_mode must be 'threshold' or 'argmax'")
        if self.entropy_sign not in ("intent", "paper"):
            raise ConfigError("entropy_sign must be 'intent' or 'paper'")

    def to_mapping(self) -> dict[str, str]:
        """Flat key=value view, used by config files and the run manifest."""
        w = self.weights
        items = {
            "d1": self.dims.d1, "d2": self.dims.d2, "m": self.dims.m,
            "batch_size": self.batch_size,
            "epochs_stage1": self.epochs_stage1,
            "epochs_stage2": self.epochs_stage2,
            "epochs_total": self.epochs_total,
            "lambda1": w.lambda1, "lambda2": w.lambda2,
            "lambda3": w.lambda3, "lambda4": w.lambda4,
            "tau_i": w.tau_i, "tau_c": w.tau_c,
            "lr_heads": self.lr_heads, "lr_encoder": self.lr_encoder,
            "confidence_threshold": self.confidence_threshold,
            "seed": self.seed,
            "adam_beta1": self.adam_beta1, "adam_beta2": self.adam_beta2,
            "adam_eps": self.adam_eps,
            "pseudo_mode": self.pseudo_mode,
            "entropy_sign": self.entropy_sign,
            "use_similarity_term": self.use_similarity_term,
            "aug_noise_sigma": self.aug_noise_sigma,
            "aug_mask_prob": self.aug_mask_prob,
        }
        return {k: repr(float(v)) if isinstance(v, float) else str(v)
                for k, v in items.items()}


@dataclass(frozen=True)
class PseudoLabelSet:
    """Hard labels for the confident subset; keys are batch row positions."""

    labeled: dict[int, int]

    def __len__(self) -> int:
        return len(self.labeled)


@dataclass
class EpochRecord:
    epoch: int
    stage: int
    l_i: float
    l_c: float
    l_p: float
    l_e1: float
    l_e2: float
    n_pseudo: int
    acc: Optional[float] = None
    nmi: Optional[float] = None
    ns: Optional[float] = None
    ps: Optional[float] = None
    # diagnostics kept in memory only, not serialized to curves.csv
    pseudo_min_conf: Optional[float] = None
    pseudo_precision: Optional[float] = None


@dataclass
class TrainHistory:
    """One record per completed epoch, serializable to curves.csv."""

    records: list[EpochRecord] = field(default_factory=list)

    CSV_COLUMNS = ("epoch", "stage", "l_i", "l_c", "l_p", "l_e1", "l_e2",
                   "n_pseudo", "acc", "nmi", "ns", "ps")

    def to_csv_text(self) -> str:
        def fmt(value) -> str:
            if value is None:
                return ""
            if isinstance(value, float):
                return repr(value)
            return str(value)

        lines = [",".join(self.CSV_COLUMNS)]
        for r in self.records:
            lines.append(",".join(fmt(getattr(r, col)) for col in self.CSV_COLUMNS))
        return "\n".join(lines) + "\n"

    def to_csv(self, path: Path | str) -> None:
        Path(path).write_text(self.to_csv_text(), encoding="ascii")


def _pairwise_sq(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d2 = ((points * points).sum(axis=1)[:, None]
          + (centers * centers).sum(axis=1)[None, :]
          - 2.0 * points @ centers.T)
    return np.maximum(d2, 0.0)


def _kmeanspp(points: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    s = points.shape[0]
    centers = np.empty((m, points.shape[1]))
    centers[0] = points[int(rng.integers(s))]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for j in range(1, m):
        total = d2.sum()
        if total > 0.0:
            idx = int(rng.choice(s, p=d2 / total))
        else:
            idx = int(rng.integers(s))
        centers[j] = points[idx]
        d2 = np.minimum(d2, ((points - centers[j]) ** 2).sum(axis=1))
    return centers


def kmeans(points: np.ndarray, m: int, seed: int,
           restarts: int = 10, max_iter: int = 100,
           tol: float = 1e-6) -> np.ndarray:
    """Lloyd's algorithm with k-means++ seeding; best of `restarts` runs.

    Empty clusters are re-seeded at the point currently farthest from its
    center. Deterministic for a fixed seed.
    """
    points = np.asarray(points, dtype=np.float64)
    s = points.shape[0]
    if m < 2:
        raise ValueError("k-means needs m >= 2")
    if s < m:
        raise DataError("fewer points than clusters")
    rng = np.random.default_rng(seed)
    best_labels: Optional[np.ndarray] = None
    best_inertia = np.inf
    for _ in range(restarts):
        centers = _kmeanspp(points, m, rng)
        for _ in range(max_iter):
            d2 = _pairwise_sq(points, centers)
            labels = d2.argmin(axis=1)
            assigned = d2[np.arange(s), labels]
            new_centers = centers.copy()
            for j in range(m):
                members = labels == j
                if members.any():
                    new_centers[j] = points[members].mean(axis=0)
            for j in range(m):
                if not (labels == j).any():
                    far = int(assigned.argmax())
                    new_centers[j] = points[far]
                    assigned[far] = 0.0
            shift = np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max()
            centers = new_centers
            if shift < tol:
                break
        d2 = _pairwise_sq(points, centers)
        labels = d2.argmin(axis=1)
        inertia = float(d2[np.arange(s), labels].sum())
        if inertia < best_inertia:
            best_inertia = inertia
            best_labels = labels
    assert best_labels is not None
    return best_labels.astype(np.int64)


def generate_pseudo_labels(p0: np.ndarray, threshold: float) -> PseudoLabelSet:
    """Label exactly the rows whose max probability strictly exceeds threshold."""
    p0 = np.asarray(p0)
    winners = p0.argmax(axis=1)
    conf = p0[np.arange(p0.shape[0]), winners]
    return PseudoLabelSet(labeled={
        int(i): int(winners[i]) for i in np.flatnonzero(conf > threshold)})


@dataclass
class AdamState:
    """First/second moment buffers plus the shared step counter."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: ParameterSet) -> "AdamState":
        return cls(m={k: np.zeros_like(t.data) for k, t in params.named()},
                   v={k: np.zeros_like(t.data) for k, t in params.named()},
                   t=0)


def adam_step(params: ParameterSet, grads: Mapping[str, np.ndarray],
              state: AdamState, lr: float,
              config: TrainConfig) -> tuple[ParameterSet, AdamState]:
    """One bias-corrected Adam update, in place. Zero grads leave params alone."""
    b1, b2, eps = config.adam_beta1, config.adam_beta2, config.adam_eps
    state.t += 1
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for name, tensor in params.named():
        g = grads[name]
        if g.shape != tensor.data.shape:
            raise ValueError(f"gradient shape mismatch for {name}")
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = state.m[name] / bc1
        v_hat = state.v[name] / bc2
        tensor.data = tensor.data - lr * m_hat / (np.sqrt(v_hat) + eps)
    return params, state


def stage_objective(params: ParameterSet, batch: Batch, stage: int,
                    pseudo: Optional[PseudoLabelSet], weights: LossWeights,
                    threshold: float = 0.95, pseudo_mode: str = "threshold",
                    entropy_sign: str = "intent",
                    use_similarity_term: bool = True, lam=None):
    """Forward pass and per-stage composite for one batch.

    Positive sets are recomputed from the current view-0 assignments unless
    a fixed `lam` is supplied (the finite-difference tests freeze it, since
    the composite treats it as a constant); stage-3 pseudo-labels are
    generated from the current assignments when `pseudo` is None. Returns
    (composite Tensor, component Tensors, pseudo set used, min
    generation-time confidence over that set or None).
    """
    out0, out1 = forward_all(params, batch)
    p0_vals = out0.p.data
    if stage == 3 and pseudo is None:
        cut = threshold if pseudo_mode == "threshold" else 0.0
        pseudo = generate_pseudo_labels(p0_vals, cut)
    if pseudo is None:
        pseudo = PseudoLabelSet({})
    min_conf = None
    if pseudo.labeled:
        rows = np.fromiter(pseudo.labeled.keys(), dtype=np.int64)
        min_conf = float(p0_vals[rows].max(axis=1).min())

    if lam is None:
        lam = positive_sets(p0_vals)
    paper = entropy_sign == "paper"
    comps = {
        "l_i": instance_loss(out0.z, out1.z, out0.h, out1.h, out0.s, out1.s,
                             lam, weights.tau_i,
                             include_similarity_term=use_similarity_term),
        "l_c": cluster_loss(out0.p, out1.p, weights.tau_c),
        "l_p": pseudo_label_loss(pseudo.labeled, out1.p),
        "l_e1": entropy_sharpness_loss(out0.p, paper_sign=paper),
        "l_e2": entropy_balance_loss(out0.p, out1.p, paper_sign=paper),
    }
    total = composite_loss(stage, comps, weights)
    return total, comps, pseudo, min_conf


def _stage_pass(params: ParameterSet, batch: Batch, stage: int,
                pseudo: Optional[PseudoLabelSet], weights: LossWeights,
                threshold: float = 0.95, pseudo_mode: str = "threshold",
                entropy_sign: str = "intent", use_similarity_term: bool = True,
                lam=None):
    """stage_objective plus backward; returns grads, values, pseudo, conf."""
    total, comps, pseudo, min_conf = stage_objective(
        params, batch, stage, pseudo, weights, threshold, pseudo_mode,
        entropy_sign, use_similarity_term, lam)
    params.zero_grads()
    total.backward()
    grads: dict[str, np.ndarray] = {}
    for name, tensor in params.named():
        g = tensor.grad
        if g is None or (stage == 1 and name.startswith("clus_")):
            g = np.zeros_like(tensor.data)
        grads[name] = np.array(g, copy=True)
    params.zero_grads()
    values = {key: float(t.data) for key, t in comps.items()}
    return grads, values, pseudo, min_conf


def compute_gradients(params: ParameterSet, batch: Batch, stage: int,
                      pseudo: Optional[PseudoLabelSet], weights: LossWeights,
                      entropy_sign: str = "intent",
                      use_similarity_term: bool = True) -> dict[str, np.ndarray]:
    """Exact gradients of the stage composite for every trainable parameter.

    Positive sets and pseudo-labels are constants; stage 1 zeroes the
    clustering-head gradients.
    """
    grads, _, _, _ = _stage_pass(params, batch, stage, pseudo, weights,
                                 entropy_sign=entropy_sign,
                                 use_similarity_term=use_similarity_term)
    return grads


def _stage_of(epoch: int, config: TrainConfig) -> int:
    if epoch <= config.epochs_stage1:
        return 1
    if epoch <= config.epochs_stage1 + config.epochs_stage2:
        return 2
    return 3


def train(dataset: EmbeddingDataset,
          config: TrainConfig) -> tuple[ParameterSet, TrainHistory]:
    """Run the full schedule and return trained parameters plus history.

    When the dataset carries no augmented view, one is synthesized from the
    configured feature-space augmentation. Per-epoch metrics (when ground
    truth is present) come from a full-dataset inference pass at the
    training batch size with the partial final batch kept.
    """
    config.validate()
    if dataset.dim != config.dims.d1:
        raise ConfigError("dataset dimensionality disagrees with configured d1")
    ds = dataset
    if ds.view1 is None:
        ds = ds.with_view1(augment_features(
            ds.view0, config.aug_noise_sigma, config.aug_mask_prob,
            config.seed + 1))

    params = init_params(config.dims, config.seed)
    state = AdamState.for_params(params)
    kmeans_labels: Optional[np.ndarray] = None
    history = TrainHistory()

    for epoch in range(1, config.epochs_total + 1):
        stage = _stage_of(epoch, config)
        if stage == 2 and kmeans_labels is None:
            kmeans_labels = kmeans(ds.view0, config.dims.m, config.seed + 3)

        sums = dict.fromkeys(("l_i", "l_c", "l_p", "l_e1", "l_e2"), 0.0)
        batches = 0
        n_pseudo = 0
        stage3_pairs: list[tuple[int, int]] = []
        min_conf: Optional[float] = None
        for batch in batch_iterator(ds, config.batch_size, config.seed + 2, epoch):
            if stage == 1:
                pseudo = PseudoLabelSet({})
            elif stage == 2:
                pseudo = PseudoLabelSet({
                    pos: int(kmeans_labels[row])
                    for pos, row in enumerate(batch.indices)})
            else:
                pseudo = None  # regenerated inside from the current P
            grads, values, used, conf = _stage_pass(
                params, batch, stage, pseudo, config.weights,
                threshold=config.confidence_threshold,
                pseudo_mode=config.pseudo_mode,
                entropy_sign=config.entropy_sign,
                use_similarity_term=config.use_similarity_term)
            adam_step(params, grads, state, config.lr_heads, config)
            for key in sums:
                sums[key] += values[key]
            batches += 1
            n_pseudo += len(used)
            if stage == 3:
                stage3_pairs.extend(
                    (int(batch.indices[pos]), y)
                    for pos, y in used.labeled.items())
                if conf is not None:
                    min_conf = conf if min_conf is None else min(min_conf, conf)

        record = EpochRecord(
            epoch=epoch, stage=stage,
            **{k: sums[k] / batches for k in sums},
            n_pseudo=n_pseudo, pseudo_min_conf=min_conf)
        if ds.labels is not None:
            # one inference pass over the dataset in order, partial batch kept
            pred_parts = []
            ns_values = []
            for start, fwd in iter_forward_batches(params, ds.view0,
                                                   config.batch_size):
                pred_parts.append(fwd.p.data.argmax(axis=1))
                y_batch = ds.labels[start:start + fwd.s.data.shape[0]]
                ns_values.append(negative_similarity(fwd.s.data, y_batch)[0])
            pred = np.concatenate(pred_parts)
            record.acc = accuracy(ds.labels, pred)
            record.nmi = nmi_score(ds.labels, pred)
            ns = float(np.mean(ns_values))
            record.ns = ns
            record.ps = 1.0 - ns
            if stage3_pairs:
                mapping = align_labels(ds.labels, pred)
                hits = [1.0 if mapping.get(y, -1) == int(ds.labels[i]) else 0.0
                        for i, y in stage3_pairs]
                record.pseudo_precision = float(np.mean(hits))
        history.records.append(record)

    return params, history
