"""Layer primitives used by the encoder, the sequence stack, and the losses.

Each op registers its gradient on the active tape and is certified by the
finite-difference oracle in ``gradcheck``.
"""

from __future__ import annotations

import numpy as np

from .autodiff import ShapeError, Tensor, _record

LOG_CLAMP = 1e-12


def affine(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """y = x @ w + b with b broadcast over rows. 3-D x is flattened over time."""
    xd = x.data
    if xd.ndim == 3:
        from .autodiff import add, matmul, reshape
        bt = xd.shape[0] * xd.shape[1]
        flat = reshape(x, (bt, xd.shape[2]))
        out = matmul(flat, w)
        if b is not None:
            out = add(out, b)
        return reshape(out, (xd.shape[0], xd.shape[1], w.data.shape[1]))
    if xd.ndim != 2 or w.data.ndim != 2:
        raise ShapeError(f"affine: need 2-D operands, got x{xd.shape} w{w.data.shape}")
    if xd.shape[1] != w.data.shape[0]:
        raise ShapeError(f"affine: x has {xd.shape[1]} cols but w has {w.data.shape[0]} rows "
                         f"(x{xd.shape} w{w.data.shape})")
    from .autodiff import add, matmul
    out = matmul(x, w)
    if b is not None:
        out = add(out, b)
    return out


def softmax_rows(z: Tensor) -> Tensor:
    """Row-wise softmax with max subtraction; rows of the output sum to 1."""
    zd = z.data
    shifted = zd - zd.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - dot),)

    return _record([z], out, backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each row to zero mean / unit variance, then scale and shift."""
    if eps <= 0.0:
        raise ValueError("layer_norm: eps must be positive")
    xd = x.data
    d = xd.shape[-1]
    if gain.data.size != d or bias.data.size != d:
        raise ShapeError(f"layer_norm: gain/bias length {gain.data.size}/{bias.data.size} "
                         f"does not match feature dim {d}")
    gd = gain.data.reshape(1, d) if xd.ndim == 2 else gain.data.reshape(1, 1, d)
    bd = bias.data.reshape(gd.shape)
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gd + bd

    def backward(g):
        dxhat = g * gd
        # standard layer-norm backward, per row
        dx = inv / d * (d * dxhat - dxhat.sum(axis=-1, keepdims=True)
                        - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True))
        dgain = (g * xhat).reshape(-1, d).sum(axis=0).reshape(gain.data.shape)
        dbias = g.reshape(-1, d).sum(axis=0).reshape(bias.data.shape)
        return dx, dgain, dbias

    return _record([x, gain, bias], out, backward)


def _check_one_hot(targets: np.ndarray):
    if not np.isin(targets, (0.0, 1.0)).all() or not np.allclose(targets.sum(axis=1), 1.0):
        bad = int(np.argmax(np.abs(targets.sum(axis=1) - 1.0)))
        raise ValueError(f"targets must be one-hot; row {bad} is not")


def weighted_cross_entropy(probs: Tensor, targets: np.ndarray, class_weights: np.ndarray,
                           weight_negative: bool = False) -> Tensor:
    """Mean over rows of -sum_i(w_i y_i log f_i + (1 - y_i) log(1 - f_i)).

    The class weight applies to the positive term only unless
    ``weight_negative`` is set. Probabilities are clamped to
    [LOG_CLAMP, 1 - LOG_CLAMP] before the logs.
    """
    f = probs.data
    y = np.asarray(targets, dtype=np.float64)
    w = np.asarray(class_weights, dtype=np.float64).reshape(1, -1)
    if f.shape != y.shape:
        raise ShapeError(f"probs {f.shape} and targets {y.shape} differ")
    if w.shape[1] != f.shape[1]:
        raise ShapeError(f"class_weights has {w.shape[1]} entries for {f.shape[1]} classes")
    _check_one_hot(y)
    if not np.allclose(f.sum(axis=1), 1.0, atol=1e-6):
        raise ValueError("probs rows must sum to 1")
    n = f.shape[0]
    fc = np.clip(f, LOG_CLAMP, 1.0 - LOG_CLAMP)
    wneg = w if weight_negative else np.ones_like(w)
    rows = -(w * y * np.log(fc) + wneg * (1.0 - y) * np.log(1.0 - fc)).sum(axis=1)
    loss = rows.mean()
    inside = (f > LOG_CLAMP) & (f < 1.0 - LOG_CLAMP)

    def backward(g):
        s = float(g.reshape(-1)[0]) / n
        df = -(w * y / fc - wneg * (1.0 - y) / (1.0 - fc)) * s
        return (np.where(inside, df, 0.0),)

    return _record([probs], np.array([[loss]]), backward)


def nll_onehot(probs: Tensor, target_idx) -> Tensor:
    """Mean reconstruction error -log p[target] against one-hot targets."""
    idx = np.asarray(target_idx, dtype=np.int64)
    f = probs.data
    if f.ndim != 2 or idx.ndim != 1 or idx.shape[0] != f.shape[0]:
        raise ShapeError(f"nll_onehot: probs {f.shape} vs {idx.shape[0]} targets")
    n = f.shape[0]
    picked = f[np.arange(n), idx]
    clamped = np.clip(picked, LOG_CLAMP, 1.0)
    loss = -np.log(clamped).mean()
    inside = picked > LOG_CLAMP

    def backward(g):
        s = float(g.reshape(-1)[0]) / n
        df = np.zeros_like(f)
        df[np.arange(n), idx] = np.where(inside, -s / clamped, 0.0)
        return (df,)

    return _record([probs], np.array([[loss]]), backward)


def diag_ssm_scan(x: Tensor, a: Tensor, b: Tensor, c: Tensor, d: Tensor) -> Tensor:
    """Per-channel diagonal linear state-space recurrence over a batch.

    x is (batch, time, channels); a, b, c are (channels, state_dim) and d is
    (channels, 1). For every channel:

        s_t = a * s_{t-1} + b * x_t        (s_0 = 0)
        y_t = sum(c * s_t) + d * x_t

    Rejects unstable state matrices (any |a| >= 1). The backward pass is the
    reverse-time adjoint recurrence.
    """
    xd = x.data
    if xd.ndim != 3:
        raise ShapeError(f"diag_ssm_scan: x must be (batch, time, channels), got {xd.shape}")
    B, T, C = xd.shape
    ad, bd, cd = a.data, b.data, c.data
    dd = d.data.reshape(-1)
    m = ad.shape[1]
    if ad.shape != (C, m) or bd.shape != (C, m) or cd.shape != (C, m) or dd.shape != (C,):
        raise ShapeError(f"diag_ssm_scan: param shapes a{ad.shape} b{bd.shape} c{cd.shape} "
                         f"d{d.data.shape} inconsistent with {C} channels")
    amax = np.abs(ad).max() if ad.size else 0.0
    if amax >= 1.0:
        raise ValueError(f"diag_ssm_scan: unstable state matrix, max |a| = {amax}")

    states = np.zeros((B, T, C, m))
    s = np.zeros((B, C, m))
    y = np.empty((B, T, C))
    for t in range(T):
        s = ad[None] * s + bd[None] * xd[:, t, :, None]
        states[:, t] = s
        y[:, t] = (cd[None] * s).sum(axis=-1) + dd[None] * xd[:, t]

    def backward(gy):
        dx = np.empty_like(xd)
        da = np.zeros_like(ad)
        db = np.zeros_like(bd)
        dc = np.zeros_like(cd)
        ddv = np.zeros_like(dd)
        gs = np.zeros((B, C, m))
        for t in range(T - 1, -1, -1):
            gyt = gy[:, t]
            dc += (gyt[:, :, None] * states[:, t]).sum(axis=0)
            ddv += (gyt * xd[:, t]).sum(axis=0)
            gs = cd[None] * gyt[:, :, None] + ad[None] * gs
            prev = states[:, t - 1] if t > 0 else np.zeros((B, C, m))
            da += (gs * prev).sum(axis=0)
            db += (gs * xd[:, t, :, None]).sum(axis=0)
            dx[:, t] = (bd[None] * gs).sum(axis=-1) + dd[None] * gyt
        return dx, da, db, dc, ddv.reshape(d.data.shape)

    return _record([x, a, b, c, d], y, backward)
