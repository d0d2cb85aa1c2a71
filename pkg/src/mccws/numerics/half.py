"""Software emulation of 16-bit binary floating point."""

import numpy as np

from .tensor import HALF, Tensor, make_op

HALF_MAX = float(np.finfo(np.float16).max)  # 65504


def round_half(values: np.ndarray) -> np.ndarray:
    """Round to the nearest binary16 value (ties to even), clamping to +-HALF_MAX.

    The result keeps the input dtype so it can flow through full-precision code.
    """
    values = np.asarray(values)
    out_dtype = values.dtype if values.dtype.kind == "f" and values.dtype.itemsize >= 4 else np.float32
    clipped = np.clip(values, -HALF_MAX, HALF_MAX)
    return clipped.astype(np.float16).astype(out_dtype)


def quantize_half(x: Tensor) -> Tensor:
    """Return ``x`` rounded to binary16 and tagged as emulated half precision.

    The gradient passes straight through; half precision is only used at inference.
    """
    return make_op(round_half(x.data), (x,), lambda g: (g,), precision=HALF)


def is_half_exact(values: np.ndarray) -> bool:
    values = np.asarray(values)
    return bool(np.array_equal(round_half(values), values))
