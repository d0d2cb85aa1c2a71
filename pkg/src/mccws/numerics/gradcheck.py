from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, gradients, no_grad


@dataclass
class GradCheckReport:
    max_rel_error: float
    max_abs_error: float
    worst_param: int
    n_checked: int
    tolerance: float

    @property
    def ok(self) -> bool:
        return self.max_rel_error <= self.tolerance


def grad_check(
    fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    tolerance: float = 1e-3,
    h: float = 1e-5,
    max_entries: int | None = None,
    seed: int = 0,
    floor: float = 1e-6,
) -> GradCheckReport:
    """Compare analytic gradients of the scalar ``fn()`` with central differences.

    Relative error per entry is ``|a - n| / max(|a|, |n|, floor)``. With
    ``max_entries`` only a random subset of each parameter's entries is probed.
    """
    analytic = gradients(fn(), params)
    rng = np.random.default_rng(seed)
    worst_rel, worst_abs, worst_param, count = 0.0, 0.0, -1, 0
    for k, (p, a) in enumerate(zip(params, analytic)):
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = rng.choice(flat.size, size=max_entries, replace=False)
        for j in idx:
            orig = flat[j]
            with no_grad():
                flat[j] = orig + h
                fp = float(fn().data)
                flat[j] = orig - h
                fm = float(fn().data)
            flat[j] = orig
            num = (fp - fm) / (2 * h)
            ana = float(a.reshape(-1)[j])
            abs_err = abs(ana - num)
            rel = abs_err / max(abs(ana), abs(num), floor)
            count += 1
            worst_abs = max(worst_abs, abs_err)
            if rel > worst_rel:
                worst_rel, worst_param = rel, k
    return GradCheckReport(worst_rel, worst_abs, worst_param, count, tolerance)
