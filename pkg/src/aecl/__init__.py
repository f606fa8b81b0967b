"""Attention-enhanced contrastive clustering on precomputed embeddings."""

__version__ = "0.1.0"

from .autograd import Tensor, softmax_rows
from .data import Batch, EmbeddingDataset, augment_features, batch_iterator, \
    generate_synthetic, load_dataset, load_embeddings, load_labels, \
    save_embeddings, save_labels
from .errors import ConfigError, DataError
from .evaluation import EvaluationReport, accuracy, align_labels, \
    batch_diagnostics, emit_report, evaluate_params, negative_similarity, \
    nmi, predict
from .losses import LossWeights, PositiveIndexSets, cluster_loss, \
    composite_loss, cosine_matrix, cosine_sim, entropy_balance_loss, \
    entropy_sharpness_loss, instance_loss, positive_sets, pseudo_label_loss, \
    value_and_grads
from .model import ForwardOutputs, ModelDims, ParameterSet, \
    attention_forward, cluster_probs, forward_all, forward_view, init_params, \
    load_checkpoint, project, save_checkpoint
from .training import AdamState, EpochRecord, PseudoLabelSet, TrainConfig, \
    TrainHistory, adam_step, compute_gradients, generate_pseudo_labels, \
    kmeans, stage_objective, train

__all__ = [
    "Tensor", "softmax_rows",
    "Batch", "EmbeddingDataset", "augment_features", "batch_iterator",
    "generate_synthetic", "load_dataset", "load_embeddings", "load_labels",
    "save_embeddings", "save_labels",
    "ConfigError", "DataError",
    "EvaluationReport", "accuracy", "align_labels", "batch_diagnostics",
    "emit_report", "evaluate_params", "negative_similarity", "nmi", "predict",
    "LossWeights", "PositiveIndexSets", "cluster_loss", "composite_loss",
    "cosine_matrix", "cosine_sim", "entropy_balance_loss",
    "entropy_sharpness_loss", "instance_loss", "positive_sets",
    "pseudo_label_loss", "value_and_grads",
    "ForwardOutputs", "ModelDims", "ParameterSet", "attention_forward",
    "cluster_probs", "forward_all", "forward_view", "init_params",
    "load_checkpoint", "project", "save_checkpoint",
    "AdamState", "EpochRecord", "PseudoLabelSet", "TrainConfig",
    "TrainHistory", "adam_step", "compute_gradients",
    "generate_pseudo_labels", "kmeans", "stage_objective", "train",
]
