"""Adam optimizer with bias correction."""

from __future__ import annotations

import numpy as np

from .autograd import Tensor


class GradientError(RuntimeError):
    """Raised when an update would be driven by non-finite gradients."""


class Adam:
    def __init__(self, params: dict[str, Tensor], lr: float = 3e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = dict(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        """Apply one bias-corrected update. Aborts before touching any
        parameter if a gradient contains NaN/inf."""
        for name, p in self.params.items():
            if p.grad is not None and not np.all(np.isfinite(p.grad)):
                raise GradientError(f"non-finite gradient in '{name}'")
        self.step_count += 1
        b1t = 1.0 - self.beta1 ** self.step_count
        b2t = 1.0 - self.beta2 ** self.step_count
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (self.lr / b1t) * m / (np.sqrt(v / b2t) + self.eps)
            p.data = p.data - update.astype(p.data.dtype)

    def state_tensors(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {"adam.step": np.array([self.step_count], dtype=np.float32)}
        for name in self.params:
            out[f"adam.m.{name}"] = self.m[name]
            out[f"adam.v.{name}"] = self.v[name]
        return out

    def load_state_tensors(self, tensors: dict[str, np.ndarray]) -> None:
        self.step_count = int(tensors["adam.step"][0])
        for name in self.params:
            self.m[name] = tensors[f"adam.m.{name}"].astype(self.m[name].dtype)
            self.v[name] = tensors[f"adam.v.{name}"].astype(self.v[name].dtype)
