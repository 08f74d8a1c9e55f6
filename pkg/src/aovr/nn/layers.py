"""Differentiable building blocks: dense layer, GRU cell, single-head
self-attention, and softmax cross-entropy.

All layers operate on :class:`~aovr.nn.autograd.Tensor` values. Parameters
are plain Tensors with ``requires_grad=True`` registered in a name->Tensor
dict so optimizers and checkpoints can walk them.
"""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .autograd import Tensor

# Additive score bias for masked attention keys. Large enough that exp()
# underflows to exactly 0 in float32 and float64.
MASK_BIAS = -1e30


class ShapeError(ValueError):
    pass


def _init(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Dense:
    """y = W x + b with W of shape [d_out, d_in]."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator,
                 dtype=np.float32, prefix: str = "dense"):
        self.d_in = d_in
        self.d_out = d_out
        self.W = Tensor(_init(rng, (d_out, d_in), d_in, dtype), requires_grad=True)
        self.b = Tensor(np.zeros(d_out, dtype=dtype), requires_grad=True)
        self.prefix = prefix

    def params(self) -> dict[str, Tensor]:
        return {f"{self.prefix}.W": self.W, f"{self.prefix}.b": self.b}

    def __call__(self, x: Tensor) -> Tensor:
        if x.data.shape[-1] != self.d_in:
            raise ShapeError(f"{self.prefix}: expected input dim {self.d_in}, got {x.data.shape[-1]}")
        return x @ self.W.T + self.b


def dense_forward(W: np.ndarray, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    if W.shape[1] != x.shape[-1] or W.shape[0] != b.shape[0]:
        raise ShapeError(f"dense: W {W.shape}, b {b.shape}, x {x.shape} do not conform")
    return W @ x + b


def dense_backward(W: np.ndarray, b: np.ndarray, x: np.ndarray, upstream: np.ndarray):
    """Analytic gradients of y = Wx + b. Returns (dW, db, dx)."""
    dW = np.outer(upstream, x)
    db = upstream.copy()
    dx = W.T @ upstream
    return dW, db, dx


class GRUCell:
    """Single GRU step.

    Convention: z = sigmoid(Wz x + Uz h + bz), r = sigmoid(Wr x + Ur h + br),
    c = tanh(Wh x + Uh (r*h) + bh), h' = (1-z)*c + z*h.
    """

    def __init__(self, d_in: int, d_h: int, rng: np.random.Generator,
                 dtype=np.float32, prefix: str = "gru"):
        self.d_in = d_in
        self.d_h = d_h
        self.prefix = prefix
        self._p: dict[str, Tensor] = {}
        for gate in ("z", "r", "h"):
            self._p[f"W_{gate}"] = Tensor(_init(rng, (d_h, d_in), d_in, dtype), requires_grad=True)
            self._p[f"U_{gate}"] = Tensor(_init(rng, (d_h, d_h), d_h, dtype), requires_grad=True)
            self._p[f"b_{gate}"] = Tensor(np.zeros(d_h, dtype=dtype), requires_grad=True)

    def params(self) -> dict[str, Tensor]:
        return {f"{self.prefix}.{k}": v for k, v in self._p.items()}

    def __call__(self, x: Tensor, h: Tensor) -> Tensor:
        if x.data.shape[-1] != self.d_in or h.data.shape[-1] != self.d_h:
            raise ShapeError(f"{self.prefix}: got x {x.data.shape}, h {h.data.shape}")
        p = self._p
        z = ag.sigmoid(x @ p["W_z"].T + h @ p["U_z"].T + p["b_z"])
        r = ag.sigmoid(x @ p["W_r"].T + h @ p["U_r"].T + p["b_r"])
        c = ag.tanh(x @ p["W_h"].T + (r * h) @ p["U_h"].T + p["b_h"])
        one = np.ones((), dtype=z.data.dtype)
        return (one - z) * c + z * h


def gru_step(cell: GRUCell, x, h) -> np.ndarray:
    """Convenience forward returning plain numpy."""
    return cell(ag.as_tensor(np.asarray(x)), ag.as_tensor(np.asarray(h))).data


class SelfAttention:
    """Single-head scaled dot-product self-attention.

    Masked positions never receive attention (their key columns are biased
    to -inf before the row softmax) but still produce output rows.
    """

    def __init__(self, d_in: int, d_model: int, rng: np.random.Generator,
                 dtype=np.float32, prefix: str = "attn"):
        self.d_in = d_in
        self.d_model = d_model
        self.prefix = prefix
        self.W_q = Tensor(_init(rng, (d_in, d_model), d_in, dtype), requires_grad=True)
        self.W_k = Tensor(_init(rng, (d_in, d_model), d_in, dtype), requires_grad=True)
        self.W_v = Tensor(_init(rng, (d_in, d_model), d_in, dtype), requires_grad=True)

    def params(self) -> dict[str, Tensor]:
        return {f"{self.prefix}.W_q": self.W_q,
                f"{self.prefix}.W_k": self.W_k,
                f"{self.prefix}.W_v": self.W_v}

    def __call__(self, rows: Tensor, mask: np.ndarray) -> Tensor:
        """rows: [t, d_in]; mask: [t] booleans, True = visible."""
        mask = np.asarray(mask, dtype=bool)
        t = rows.data.shape[0]
        if mask.shape != (t,):
            raise ShapeError(f"mask shape {mask.shape} does not match {t} rows")
        if not mask.any():
            raise ValueError("self-attention requires at least one unmasked row")
        q = rows @ self.W_q
        k = rows @ self.W_k
        v = rows @ self.W_v
        scores = (q @ k.T) * (1.0 / np.sqrt(self.d_model))
        bias = np.where(mask, 0.0, MASK_BIAS).astype(scores.data.dtype)
        weights = ag.softmax(scores + bias, axis=-1)
        return weights @ v


def softmax_cross_entropy(logits: Tensor, label: int) -> Tensor:
    """loss = -log softmax(logits)[label]; gradient is softmax - onehot."""
    n = logits.data.shape[-1]
    if not (0 <= int(label) < n):
        raise IndexError(f"label {label} out of range for {n} logits")
    return -ag.log_softmax(logits, axis=-1)[int(label)]
