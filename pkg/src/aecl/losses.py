"""Differentiable training objectives.

Five scalar losses over a batch's forward outputs:

* instance_loss: similarity-guided contrastive loss. One NT-Xent-style term
  pairs the two projections of each sample; two further terms pair each
  view's projections with its consistent representations, with numerators
  summed over the sample's positive set and weighted by the learned
  similarity matrix. The negative log is taken of the SUM of the plain and
  weighted terms, per sample and per view.
* cluster_loss: contrasts matching columns of the two views' assignment
  matrices against all other columns.
* pseudo_label_loss: cross-entropy of the augmented view's assignments
  against hard pseudo-labels, averaged over the labeled subset.
* entropy_sharpness_loss / entropy_balance_loss: negative entropies of the
  per-row assignments and of the mean assignment respectively, so that
  positive weights push towards higher entropy (anti-collapse). The sign
  flip relative to this convention is available via paper_sign=True.

composite_loss assembles the per-stage training objective.

All losses accept Tensors (gradients flow) or plain arrays (coerced to
constants); exp ratios are evaluated with a detached per-row max subtracted
from every exponent, and every log argument is floored at 1e-12.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .autograd import Tensor

LOG_FLOOR = 1e-12
NORM_EPS = 1e-12

ArrayOrTensor = Union[Tensor, np.ndarray]


@dataclass(frozen=True)
class LossWeights:
    """Loss mixing weights and contrastive temperatures.

    lambda4 has no universal value; 10 suits balanced data, 0.18 slight and
    0.09 heavy imbalance.
    """

    lambda1: float = 10.0
    lambda2: float = 5.0
    lambda3: float = 0.01
    lambda4: float = 10.0
    tau_i: float = 1.0
    tau_c: float = 0.5

    def __post_init__(self) -> None:
        if self.tau_i <= 0 or self.tau_c <= 0:
            raise ValueError("temperatures must be positive")
        if min(self.lambda1, self.lambda2, self.lambda3, self.lambda4) < 0:
            raise ValueError("loss weights must be nonnegative")


@dataclass(frozen=True)
class PositiveIndexSets:
    """Per-sample positive sets: indices sharing the sample's argmax cluster."""

    sets: tuple[frozenset[int], ...]

    def __len__(self) -> int:
        return len(self.sets)

    def mask(self) -> np.ndarray:
        """[N x N] float mask, mask[i, j] = 1 iff j is a positive of i."""
        n = len(self.sets)
        out = np.zeros((n, n))
        for i, members in enumerate(self.sets):
            out[i, list(members)] = 1.0
        return out


def positive_sets(p0: np.ndarray) -> PositiveIndexSets:
    """Group batch rows by the argmax of their view-0 assignments.

    Ties break toward the lowest index, so each row always contains itself
    and membership is symmetric.
    """
    p0 = np.asarray(p0)
    owners = np.argmax(p0, axis=1)
    groups: dict[int, list[int]] = {}
    for i, c in enumerate(owners):
        groups.setdefault(int(c), []).append(i)
    return PositiveIndexSets(
        sets=tuple(frozenset(groups[int(c)]) for c in owners))


def cosine_sim(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity with an epsilon-guarded denominator."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b) + NORM_EPS))


def cosine_matrix(a: ArrayOrTensor, b: ArrayOrTensor) -> Tensor:
    """Pairwise cosine similarities between rows of a and rows of b.

    The squared norms are floored at NORM_EPS**2 before the square root:
    values are unchanged for any row of norm >= NORM_EPS, while an
    exactly-zero row (possible at init, when zero biases meet a fully
    negative relu row) keeps a finite gradient instead of producing NaN.
    """
    a = Tensor._coerce(a)
    b = Tensor._coerce(b)
    na = (a * a).sum(axis=1, keepdims=True).clamp_min(NORM_EPS ** 2) ** 0.5
    nb = (b * b).sum(axis=1, keepdims=True).clamp_min(NORM_EPS ** 2) ** 0.5
    return (a @ b.T) / (na @ nb.T + NORM_EPS)


def _contrast_ratios(weights: ArrayOrTensor, c_num: Tensor, c_den_a: Tensor,
                     c_den_b: Tensor, tau: float, off_diag: np.ndarray) -> Tensor:
    """Vector of per-row ratios sum_j w_ij e^(c_num_ij/tau) / negatives.

    The denominator sums exp of both c_den matrices over k != i. A detached
    per-row max is subtracted from every exponent; it cancels exactly, so
    values and gradients are unchanged while large 1/tau stays safe.
    """
    shift = np.maximum(c_num.data.max(axis=1),
                       np.maximum(c_den_a.data.max(axis=1),
                                  c_den_b.data.max(axis=1)))
    shift = (shift / tau)[:, None]
    e_num = (c_num * (1.0 / tau) - shift).exp()
    e_den_a = (c_den_a * (1.0 / tau) - shift).exp()
    e_den_b = (c_den_b * (1.0 / tau) - shift).exp()
    numer = (Tensor._coerce(weights) * e_num).sum(axis=1)
    denom = ((e_den_a + e_den_b) * off_diag).sum(axis=1)
    return numer / denom


def instance_loss(z0: ArrayOrTensor, z1: ArrayOrTensor,
                  h0: ArrayOrTensor, h1: ArrayOrTensor,
                  s0: ArrayOrTensor, s1: ArrayOrTensor,
                  lam: PositiveIndexSets, tau_i: float,
                  include_similarity_term: bool = True) -> Tensor:
    """Similarity-guided contrastive loss over a batch.

    include_similarity_term=False drops the weighted positive-set terms
    (ablation switch), leaving only the cross-view projection term.
    """
    z0, z1 = Tensor._coerce(z0), Tensor._coerce(z1)
    h0, h1 = Tensor._coerce(h0), Tensor._coerce(h1)
    n = z0.shape[0]
    if n < 2:
        raise ValueError("contrastive loss undefined for N<2")
    if len(lam) != n:
        raise ValueError("positive sets inconsistent with batch size")
    eye = np.eye(n)
    off = 1.0 - eye

    c01 = cosine_matrix(z0, z1)
    c00 = cosine_matrix(z0, z0)
    c11 = cosine_matrix(z1, z1)
    c10 = cosine_matrix(z1, z0)
    l1 = (_contrast_ratios(eye, c01, c00, c01, tau_i, off)
          + _contrast_ratios(eye, c10, c11, c10, tau_i, off))

    per_view = []
    for z, h, s in ((z0, h0, s0), (z1, h1, s1)):
        if not include_similarity_term:
            per_view.append(None)
            continue
        w = Tensor._coerce(s) * lam.mask()
        czh = cosine_matrix(z, h)
        chz = cosine_matrix(h, z)
        czz = cosine_matrix(z, z)
        chh = cosine_matrix(h, h)
        l2 = (_contrast_ratios(w, czh, czz, czh, tau_i, off)
              + _contrast_ratios(w, chz, chh, chz, tau_i, off))
        per_view.append(l2)

    total = None
    for l2 in per_view:
        inner = l1 if l2 is None else l1 + l2
        term = -(inner.clamp_min(LOG_FLOOR).log()).sum()
        total = term if total is None else total + term
    return total * (1.0 / (2.0 * n))


def cluster_loss(p0: ArrayOrTensor, p1: ArrayOrTensor, tau_c: float) -> Tensor:
    """Column-wise contrastive loss between the two assignment matrices."""
    p0, p1 = Tensor._coerce(p0), Tensor._coerce(p1)
    m = p0.shape[1]
    if m < 2:
        raise ValueError("cluster loss undefined for M<2")
    a0, a1 = p0.T, p1.T
    eye = np.eye(m)
    off = 1.0 - eye
    c01 = cosine_matrix(a0, a1)
    c00 = cosine_matrix(a0, a0)
    c11 = cosine_matrix(a1, a1)
    c10 = cosine_matrix(a1, a0)
    r0 = _contrast_ratios(eye, c01, c00, c01, tau_c, off)
    r1 = _contrast_ratios(eye, c10, c11, c10, tau_c, off)
    lc = -(r0.clamp_min(LOG_FLOOR).log()) - (r1.clamp_min(LOG_FLOOR).log())
    return lc.sum() * (1.0 / (2.0 * m))


def pseudo_label_loss(pseudo: Mapping[int, int], p1: ArrayOrTensor) -> Tensor:
    """Cross-entropy of p1 rows against hard labels on the labeled subset.

    Returns 0 for an empty subset; unlabeled rows do not enter the
    denominator.
    """
    p1 = Tensor._coerce(p1)
    n, m = p1.shape
    if not pseudo:
        return Tensor(0.0)
    onehot = np.zeros((n, m))
    for i, y in pseudo.items():
        if not (0 <= int(i) < n) or not (0 <= int(y) < m):
            raise ValueError("invalid pseudo-label")
        onehot[int(i), int(y)] = 1.0
    picked = (p1.clamp_min(LOG_FLOOR).log() * onehot).sum()
    return picked * (-1.0 / len(pseudo))


def entropy_sharpness_loss(p0: ArrayOrTensor, paper_sign: bool = False) -> Tensor:
    """Negative mean row entropy of the assignments, in [-log M, 0].

    Minimizing it spreads each row's probability mass, delaying premature
    one-hot collapse; paper_sign=True returns the plain entropy instead.
    """
    p0 = Tensor._coerce(p0)
    n = p0.shape[0]
    value = (p0 * p0.clamp_min(LOG_FLOOR).log()).sum() * (1.0 / n)
    return -value if paper_sign else value


def entropy_balance_loss(p0: ArrayOrTensor, p1: ArrayOrTensor,
                         paper_sign: bool = False) -> Tensor:
    """Negative entropy of the per-view mean assignments, in [-log M, 0].

    Minimizing it pushes cluster sizes toward uniform, preventing the
    all-one-cluster degenerate solution; paper_sign flips as above.
    """
    p0, p1 = Tensor._coerce(p0), Tensor._coerce(p1)
    value = None
    for p in (p0, p1):
        q = p.mean(axis=0)
        term = (q * q.clamp_min(LOG_FLOOR).log()).sum() * 0.5
        value = term if value is None else value + term
    return -value if paper_sign else value


def composite_loss(stage: int, components: Mapping[str, ArrayOrTensor | float],
                   weights: LossWeights):
    """Per-stage objective.

    Stage 1: L_I alone. Stage 2: lambda1 L_I + lambda2 L_P. Stage 3 adds
    L_C plus both entropy regularizers.
    """
    def need(key: str):
        if key not in components:
            raise ValueError(f"missing component for stage {stage}: {key}")
        return components[key]

    if stage == 1:
        return need("l_i")
    if stage == 2:
        return weights.lambda1 * need("l_i") + weights.lambda2 * need("l_p")
    if stage == 3:
        return (need("l_c")
                + weights.lambda1 * need("l_i")
                + weights.lambda2 * need("l_p")
                + weights.lambda3 * need("l_e1")
                + weights.lambda4 * need("l_e2"))
    raise ValueError(f"unknown training stage: {stage}")


def value_and_grads(fn, *arrays: np.ndarray, **kwargs):
    """Evaluate a Tensor-valued loss on arrays; return its value and input grads."""
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    out = fn(*tensors, **kwargs)
    out.backward()
    return float(out.data), [t.grad if t.grad is not None else np.zeros_like(t.data)
                             for t in tensors]
