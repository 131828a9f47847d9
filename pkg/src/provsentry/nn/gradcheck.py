"""Central finite-difference oracle for every registered primitive."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .autodiff import Tape, Tensor
from .params import ParamStore

REL_ERR_FLOOR = 1e-6


def finite_diff_check(f: Callable[[], Tensor], params: ParamStore,
                      h: float = 1e-5, param_names=None) -> float:
    """Compare reverse-mode gradients of f() against central differences.

    f must be deterministic and rebuild the scalar loss from the current
    parameter values on each call. Returns the max relative error over all
    coordinates of the checked parameters. Raises FloatingPointError naming
    the parameter if any evaluation goes non-finite.
    """
    if not (1e-7 <= h <= 1e-4):
        raise ValueError(f"h={h} outside [1e-7, 1e-4]")

    params.zero_grad()
    with Tape() as tape:
        loss = f()
        if not np.isfinite(loss.data).all():
            raise FloatingPointError("non-finite loss at the base point")
        tape.backward(loss)
    analytic = {name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
                for name, t in params.items()}

    names = list(param_names) if param_names is not None else params.names()
    max_rel = 0.0
    for name in names:
        p = params[name]
        base = p.data.copy()
        flat = p.data.reshape(-1)
        ad = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = f().item()
            flat[i] = orig - h
            lm = f().item()
            flat[i] = orig
            if not (np.isfinite(lp) and np.isfinite(lm)):
                p.data = base
                raise FloatingPointError(f"non-finite loss while perturbing {name}[{i}]")
            fd = (lp - lm) / (2.0 * h)
            denom = max(abs(fd), abs(ad[i]), REL_ERR_FLOOR)
            rel = abs(fd - ad[i]) / denom
            if rel > max_rel:
                max_rel = rel
        p.data = base
    return max_rel
