"""The three trainable heads and their forward pass.

A projecting head maps encoder vectors V [N x D1] to Z [N x D2]; a
single-head sample-level attention block turns Z into a row-stochastic
similarity matrix S [N x N] and consistent representations H = S @ (Z W_t);
a clustering head maps H to row-stochastic probabilities P [N x M]. Both
perceptrons are two affine layers with one rectifier in between.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
import numpy as np

from .autograd import Tensor, softmax_rows
from .data import Batch
from .errors import DataError

CKPT_MAGIC = "AECL-CKPT"
CKPT_VERSION = "v1"


@dataclass(frozen=True)
class ModelDims:
    """d1: encoder output width; d2: head width; m: number of clusters."""

    d1: int
    d2: int
    m: int

    def __post_init__(self) -> None:
        if self.d1 < 1 or self.d2 < 1 or self.m < 2:
            raise ValueError("invalid model dimensions")


@dataclass
class ParameterSet:
    """All trainable weights, in checkpoint declaration order."""

    dims: ModelDims
    proj_w1: Tensor
    proj_b1: Tensor
    proj_w2: Tensor
    proj_b2: Tensor
    w_k1: Tensor
    w_k2: Tensor
    w_t: Tensor
    clus_w1: Tensor
    clus_b1: Tensor
    clus_w2: Tensor
    clus_b2: Tensor

    _ORDER = ("proj_w1", "proj_b1", "proj_w2", "proj_b2",
              "w_k1", "w_k2", "w_t",
              "clus_w1", "clus_b1", "clus_w2", "clus_b2")

    def named(self) -> list[tuple[str, Tensor]]:
        return [(name, getattr(self, name)) for name in self._ORDER]

    def zero_grads(self) -> None:
        for _, t in self.named():
            t.grad = None


@dataclass
class ForwardOutputs:
    """Per-batch projection Z, similarity S, consistent H and assignment P."""

    z: Tensor
    s: Tensor
    h: Tensor
    p: Tensor


def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_params(dims: ModelDims, seed: int) -> ParameterSet:
    """Xavier-uniform weights, zero biases; deterministic per seed.

    Matrices are drawn in declaration order from a single generator.
    """
    rng = np.random.default_rng(seed)
    d1, d2, m = dims.d1, dims.d2, dims.m

    def weight(fan_in: int, fan_out: int) -> Tensor:
        return Tensor(_xavier(rng, fan_in, fan_out), requires_grad=True)

    def bias(n: int) -> Tensor:
        return Tensor(np.zeros(n), requires_grad=True)

    return ParameterSet(
        dims=dims,
        proj_w1=weight(d1, d2), proj_b1=bias(d2),
        proj_w2=weight(d2, d2), proj_b2=bias(d2),
        w_k1=weight(d2, d2), w_k2=weight(d2, d2), w_t=weight(d2, d2),
        clus_w1=weight(d2, d2), clus_b1=bias(d2),
        clus_w2=weight(d2, m), clus_b2=bias(m),
    )


def project(params: ParameterSet, v: Tensor | np.ndarray) -> Tensor:
    """Z = affine2(relu(affine1(V)))."""
    v = Tensor._coerce(v)
    hidden = (v @ params.proj_w1 + params.proj_b1).relu()
    return hidden @ params.proj_w2 + params.proj_b2


def attention_forward(params: ParameterSet,
                      z: Tensor | np.ndarray) -> tuple[Tensor, Tensor]:
    """Similarity S = softmax(K1 K2^T / sqrt(D2)) and H = S @ T.

    K1, K2 and T are the three linear maps of Z; no residual, no output
    projection beyond W_t.
    """
    z = Tensor._coerce(z)
    k1 = z @ params.w_k1
    k2 = z @ params.w_k2
    t = z @ params.w_t
    logits = (k1 @ k2.T) * (1.0 / np.sqrt(params.dims.d2))
    s = softmax_rows(logits)
    h = s @ t
    return s, h


def cluster_probs(params: ParameterSet, h: Tensor | np.ndarray) -> Tensor:
    """P = softmax(affine2(relu(affine1(H)))), rows summing to 1."""
    h = Tensor._coerce(h)
    hidden = (h @ params.clus_w1 + params.clus_b1).relu()
    return softmax_rows(hidden @ params.clus_w2 + params.clus_b2)


def forward_view(params: ParameterSet, v: Tensor | np.ndarray) -> ForwardOutputs:
    """Full pipeline for one view; attention stays within the batch."""
    z = project(params, v)
    s, h = attention_forward(params, z)
    p = cluster_probs(params, h)
    return ForwardOutputs(z=z, s=s, h=h, p=p)


def forward_all(params: ParameterSet,
                batch: Batch) -> tuple[ForwardOutputs, ForwardOutputs]:
    """Run both views through shared parameters, independently per view."""
    return forward_view(params, batch.v0), forward_view(params, batch.v1)


def save_checkpoint(path: Path | str, params: ParameterSet) -> None:
    """ASCII checkpoint; values round-trip bit-exactly via repr."""
    dims = params.dims
    lines = [f"{CKPT_MAGIC} {CKPT_VERSION}",
             f"dims {dims.d1} {dims.d2} {dims.m}"]
    for name, tensor in params.named():
        mat = np.atleast_2d(tensor.data)
        lines.append(f"param {name} {mat.shape[0]} {mat.shape[1]}")
        for row in mat:
            lines.append(" ".join(repr(float(x)) for x in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def load_checkpoint(path: Path | str) -> ParameterSet:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"checkpoint file not found: {path}")
    try:
        return _parse_checkpoint(path.read_text(encoding="ascii"))
    except DataError:
        raise
    except Exception as exc:
        raise DataError("checkpoint parse error") from exc


def _parse_checkpoint(text: str) -> ParameterSet:
    lines = text.splitlines()
    if not lines or lines[0].split() != [CKPT_MAGIC, CKPT_VERSION]:
        raise DataError("checkpoint parse error")
    dims_tok = lines[1].split()
    if len(dims_tok) != 4 or dims_tok[0] != "dims":
        raise DataError("checkpoint parse error")
    dims = ModelDims(int(dims_tok[1]), int(dims_tok[2]), int(dims_tok[3]))
    arrays: dict[str, np.ndarray] = {}
    i = 2
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        head = lines[i].split()
        if len(head) != 4 or head[0] != "param":
            raise DataError("checkpoint parse error")
        name, rows, cols = head[1], int(head[2]), int(head[3])
        block = lines[i + 1:i + 1 + rows]
        mat = np.array([[float(tok) for tok in ln.split()] for ln in block],
                       dtype=np.float64)
        if mat.shape != (rows, cols):
            raise DataError("checkpoint parse error")
        arrays[name] = mat
        i += 1 + rows
    expected = {
        "proj_w1": (dims.d1, dims.d2), "proj_b1": (1, dims.d2),
        "proj_w2": (dims.d2, dims.d2), "proj_b2": (1, dims.d2),
        "w_k1": (dims.d2, dims.d2), "w_k2": (dims.d2, dims.d2),
        "w_t": (dims.d2, dims.d2),
        "clus_w1": (dims.d2, dims.d2), "clus_b1": (1, dims.d2),
        "clus_w2": (dims.d2, dims.m), "clus_b2": (1, dims.m),
    }
    if set(arrays) != set(expected):
        raise DataError("checkpoint parse error")
    tensors: dict[str, Tensor] = {}
    for name, shape in expected.items():
        mat = arrays[name]
        if mat.shape != shape:
            raise DataError("checkpoint parse error")
        data = mat[0] if name.endswith(("b1", "b2")) else mat
        tensors[name] = Tensor(data, requires_grad=True)
    return ParameterSet(dims=dims, **tensors)
