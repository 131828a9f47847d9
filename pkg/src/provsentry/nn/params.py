"""Named parameter store with Adam state."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor


class ParamStore:
    """Maps unique names to trainable 2-D tensors plus optimizer moments."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.step_count = 0

    def add(self, name: str, data) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"parameter {name} must be 2-D, got shape {arr.shape}")
        t = Tensor(arr, requires_grad=True)
        self._params[name] = t
        self._m[name] = np.zeros_like(arr)
        self._v[name] = np.zeros_like(arr)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def grads(self) -> dict[str, np.ndarray | None]:
        """Parallel map of gradients (None when a parameter is untouched)."""
        return {name: t.grad for name, t in self._params.items()}

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self._params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray], prefix: str = ""):
        for name, t in self._params.items():
            src = arrays[prefix + name]
            if src.shape != t.data.shape:
                raise ValueError(f"shape mismatch loading {name}: "
                                 f"{src.shape} vs {t.data.shape}")
            t.data = src.astype(np.float64).copy()


def adam_step(params: ParamStore, lr: float = 1e-3, betas=(0.9, 0.999),
              eps: float = 1e-8):
    """One Adam update with bias correction; missing gradients count as zero."""
    b1, b2 = betas
    params.step_count += 1
    t = params.step_count
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        m = params._m[name]
        v = params._v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + eps)
