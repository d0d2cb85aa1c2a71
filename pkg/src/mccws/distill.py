"""Logit distillation from a frozen teacher."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .numerics import ShapeError, Tensor, make_op


@dataclass(frozen=True)
class DistillConfig:
    alpha: float = 0.15

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")


def _unit_rows(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norm = np.linalg.norm(x, axis=-1, keepdims=True)
    safe = np.where(norm > 0, norm, 1.0)
    return np.where(norm > 0, x / safe, 0.0), safe


def _pad(seqs: Sequence) -> tuple[np.ndarray, np.ndarray]:
    arrays = [np.asarray(s, dtype=np.float64) for s in seqs]
    lengths = np.array([a.shape[0] for a in arrays], dtype=np.int64)
    width = int(lengths.max()) if len(arrays) else 0
    dim = arrays[0].shape[-1] if arrays else 0
    out = np.zeros((len(arrays), width, dim))
    for i, a in enumerate(arrays):
        out[i, : len(a)] = a
    return out, lengths


def distill_loss(student_logits, teacher_logits, lengths=None) -> Tensor:
    """Squared distance between L2-normalized student and teacher logit vectors.

    ``(1 / 2T) * sum over real positions of |s/|s| - t/|t||^2`` with T the
    number of real positions. Inputs are either padded [batch, len, labels]
    arrays/tensors with ``lengths``, or lists of per-sentence [n, labels]
    arrays. Zero vectors normalize to zero. The teacher side never receives a
    gradient.
    """
    if isinstance(student_logits, (list, tuple)):
        if not isinstance(teacher_logits, (list, tuple)) or len(student_logits) != len(teacher_logits):
            raise ShapeError("student and teacher logits must be lists of the same length")
        for k, (a, b) in enumerate(zip(student_logits, teacher_logits)):
            if np.shape(a) != np.shape(b):
                raise ShapeError(f"sentence {k}: student logits {np.shape(a)} vs teacher logits {np.shape(b)}")
        s_arr, lengths = _pad(student_logits)
        t_arr, _ = _pad(teacher_logits)
        student = Tensor(s_arr)
    else:
        student = student_logits if isinstance(student_logits, Tensor) else Tensor(student_logits)
        t_arr = teacher_logits.data if isinstance(teacher_logits, Tensor) else np.asarray(teacher_logits)
    s = student.data
    if s.shape != t_arr.shape:
        raise ShapeError(f"student logits {s.shape} vs teacher logits {t_arr.shape}")
    if s.ndim == 2:
        s, t_arr = s[None], t_arr[None]
    if lengths is None:
        mask = np.ones(s.shape[:2], dtype=bool)
    else:
        mask = np.arange(s.shape[1])[None, :] < np.asarray(lengths)[:, None]
    total = int(mask.sum())
    if total == 0:
        return make_op(np.asarray(0.0, dtype=s.dtype), (student,), lambda g: (np.zeros_like(student.data),))
    u, s_norm = _unit_rows(s)
    v, _ = _unit_rows(t_arr.astype(s.dtype))
    diff = (u - v) * mask[..., None]
    loss = (diff * diff).sum() / (2.0 * total)

    def backward(g):
        radial = (diff * u).sum(axis=-1, keepdims=True)
        grad = (diff - u * radial) / (total * s_norm)
        return (float(g) * grad.reshape(student.shape),)

    return make_op(np.asarray(loss, dtype=s.dtype), (student,), backward)


def combined_loss(seg_loss, dis_loss, alpha: float) -> Tensor:
    """seg + alpha * dis (both already in minimization form)."""
    return seg_loss + dis_loss * alpha
