"""Clustering metrics, attention diagnostics and report emission.

Accuracy aligns predicted to true clusters with the Hungarian algorithm on
the (zero-padded, square) contingency table. NMI normalizes mutual
information by the geometric mean of the marginal entropies, natural logs.
NS measures how much attention mass crosses ground-truth class boundaries;
PS = 1 - NS by definition.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DataError
from .model import ForwardOutputs, ParameterSet, forward_view

REPORT_COLUMNS = ("acc", "nmi", "ns", "ps", "n_samples", "m")


@dataclass
class EvaluationReport:
    """Final metrics of a run; acc/nmi/ns/ps are None without ground truth."""

    acc: Optional[float]
    nmi: Optional[float]
    ns: Optional[float]
    ps: Optional[float]
    cluster_sizes: np.ndarray
    n_samples: int
    m: int


def iter_forward_batches(params: ParameterSet, view0: np.ndarray,
                         batch_size: int) -> Iterator[tuple[int, ForwardOutputs]]:
    """Inference batching: dataset order, partial final batch kept."""
    view0 = np.asarray(view0, dtype=np.float64)
    if batch_size < 1:
        raise ValueError("batch size must be positive")
    for start in range(0, view0.shape[0], batch_size):
        yield start, forward_view(params, view0[start:start + batch_size])


def predict(params: ParameterSet, view0: np.ndarray,
            batch_size: int) -> np.ndarray:
    """Row-wise argmax of the assignment probabilities, ties toward index 0.

    Attention aggregates within each inference batch, so predictions depend
    on the batch composition; a single-sample batch attends only to itself.
    """
    if np.asarray(view0).shape[1] != params.dims.d1:
        raise DataError("embedding width disagrees with model dims")
    parts = [out.p.data.argmax(axis=1)
             for _, out in iter_forward_batches(params, view0, batch_size)]
    return np.concatenate(parts).astype(np.int64)


def _contingency(y_true, y_pred) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    yt = np.asarray(y_true).ravel()
    yp = np.asarray(y_pred).ravel()
    if yt.shape != yp.shape or yt.size == 0:
        raise ValueError("length mismatch")
    t_vals, t_idx = np.unique(yt, return_inverse=True)
    p_vals, p_idx = np.unique(yp, return_inverse=True)
    table = np.zeros((t_vals.size, p_vals.size), dtype=np.int64)
    np.add.at(table, (t_idx, p_idx), 1)
    return table, t_vals, p_vals


def _assignment(table: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    k = max(table.shape)
    padded = np.zeros((k, k), dtype=np.int64)
    padded[:table.shape[0], :table.shape[1]] = table
    rows, cols = linear_sum_assignment(padded, maximize=True)
    return rows, cols


def accuracy(y_true, y_pred) -> float:
    """Fraction correct under the best one-to-one cluster relabeling."""
    table, _, _ = _contingency(y_true, y_pred)
    rows, cols = _assignment(table)
    k = max(table.shape)
    padded = np.zeros((k, k), dtype=np.int64)
    padded[:table.shape[0], :table.shape[1]] = table
    return float(padded[rows, cols].sum()) / float(np.asarray(y_true).size)


def align_labels(y_true, y_pred) -> dict[int, int]:
    """Optimal predicted-label -> true-label mapping (Hungarian matching).

    Predicted labels left unmatched by a rectangular table are absent from
    the mapping.
    """
    table, t_vals, p_vals = _contingency(y_true, y_pred)
    rows, cols = _assignment(table)
    mapping: dict[int, int] = {}
    for r, c in zip(rows, cols):
        if r < t_vals.size and c < p_vals.size:
            mapping[int(p_vals[c])] = int(t_vals[r])
    return mapping


def nmi(y_true, y_pred) -> float:
    """Mutual information over the geometric mean of entropies, in [0, 1].

    Two single-cluster partitions score 1.0; exactly one constant partition
    scores 0.0.
    """
    table, _, _ = _contingency(y_true, y_pred)
    n = float(table.sum())
    pi = table.sum(axis=1) / n
    pj = table.sum(axis=0) / n
    h_true = float(-(pi[pi > 0] * np.log(pi[pi > 0])).sum())
    h_pred = float(-(pj[pj > 0] * np.log(pj[pj > 0])).sum())
    if h_true == 0.0 and h_pred == 0.0:
        return 1.0
    if h_true == 0.0 or h_pred == 0.0:
        return 0.0
    ti, pj_idx = np.nonzero(table)
    p_ij = table[ti, pj_idx] / n
    mi = float((p_ij * np.log(p_ij / (pi[ti] * pj[pj_idx]))).sum())
    return float(np.clip(mi / np.sqrt(h_true * h_pred), 0.0, 1.0))


def negative_similarity(s0: np.ndarray, y) -> tuple[float, float]:
    """Attention mass crossing class boundaries, averaged over the batch."""
    s0 = np.asarray(s0, dtype=np.float64)
    y = np.asarray(y).ravel()
    if s0.ndim != 2 or s0.shape[0] != s0.shape[1] or y.size != s0.shape[0]:
        raise ValueError("length mismatch")
    ns = float((s0 * (y[:, None] != y[None, :])).sum() / s0.shape[0])
    return ns, 1.0 - ns


def batch_diagnostics(params: ParameterSet, view0: np.ndarray, y_true,
                      batch_size: int) -> list[tuple[float, float]]:
    """Per-inference-batch (NS, PS) pairs over the dataset in order."""
    y_true = np.asarray(y_true).ravel()
    out: list[tuple[float, float]] = []
    for start, fwd in iter_forward_batches(params, view0, batch_size):
        y_batch = y_true[start:start + fwd.s.data.shape[0]]
        out.append(negative_similarity(fwd.s.data, y_batch))
    return out


def evaluate_params(params: ParameterSet, view0: np.ndarray, batch_size: int,
                    y_true=None) -> tuple[EvaluationReport, np.ndarray]:
    """Full-dataset report plus the underlying predictions.

    The dataset-level NS is the unweighted mean of per-batch NS values at
    the given batch size.
    """
    pred = predict(params, view0, batch_size)
    sizes = np.bincount(pred, minlength=params.dims.m)
    acc_v = nmi_v = ns_v = ps_v = None
    if y_true is not None:
        y_true = np.asarray(y_true).ravel()
        acc_v = accuracy(y_true, pred)
        nmi_v = nmi(y_true, pred)
        per_batch = batch_diagnostics(params, view0, y_true, batch_size)
        ns_v = float(np.mean([b[0] for b in per_batch]))
        ps_v = 1.0 - ns_v
    report = EvaluationReport(acc=acc_v, nmi=nmi_v, ns=ns_v, ps=ps_v,
                              cluster_sizes=sizes,
                              n_samples=int(np.asarray(view0).shape[0]),
                              m=params.dims.m)
    return report, pred


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_report(report: EvaluationReport, history, out_dir: Path | str) -> dict[str, Path]:
    """Write report.csv, cluster_sizes.csv and curves.csv into out_dir.

    `history` is any object with a ``to_csv(path)`` method (a TrainHistory);
    re-emitting identical inputs reproduces the files byte for byte.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / "report.csv"
    row = (report.acc, report.nmi, report.ns, report.ps,
           report.n_samples, report.m)
    report_path.write_text(
        ",".join(REPORT_COLUMNS) + "\n" + ",".join(_fmt(v) for v in row) + "\n",
        encoding="ascii")
    sizes_path = out_dir / "cluster_sizes.csv"
    size_lines = ["cluster,count"]
    size_lines += [f"{c},{int(n)}" for c, n in enumerate(report.cluster_sizes)]
    sizes_path.write_text("\n".join(size_lines) + "\n", encoding="ascii")
    curves_path = out_dir / "curves.csv"
    history.to_csv(curves_path)
    return {"report": report_path, "cluster_sizes": sizes_path,
            "curves": curves_path}
