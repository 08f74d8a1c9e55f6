"""Central finite-difference verification of backward passes.

The numeric side only ever calls the forward function, so it stays
independent of the tape: (f(x+h) - f(x-h)) / 2h per parameter coordinate.
"""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from .autograd import Tensor

# Central differences at h=1e-5 in double precision carry ~1e-11..1e-10
# absolute noise, so a relative comparison at the 1e-6..1e-4 tolerances used
# here is meaningless for coordinates whose gradient sits below ~1e-5; those
# are skipped rather than compared.
NOISE_FLOOR = 1e-5


def finite_diff_check(loss_fn: Callable[[], Tensor],
                      params: Iterable[Tensor],
                      h: float = 1e-5) -> float:
    """Return the max relative error between analytic and central-difference
    gradients of ``loss_fn`` w.r.t. every coordinate of ``params``.

    ``loss_fn`` must rebuild its graph from the current ``.data`` of the
    parameters on each call and return a scalar Tensor.
    """
    params = list(params)
    for p in params:
        p.grad = None
    loss = loss_fn()
    if loss.data.size != 1:
        raise ValueError("finite_diff_check requires a scalar loss")
    loss.backward()

    worst = 0.0
    for p in params:
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad
        flat = p.data.reshape(-1)
        aflat = analytic.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = float(loss_fn().data)
            flat[i] = orig - h
            down = float(loss_fn().data)
            flat[i] = orig
            numeric = (up - down) / (2.0 * h)
            scale = max(abs(aflat[i]), abs(numeric))
            if scale < NOISE_FLOOR:
                continue
            err = abs(aflat[i] - numeric) / scale
            if err > worst:
                worst = err
    return worst


def finite_diff_check_sampled(loss_fn: Callable[[], Tensor],
                              params: Iterable[Tensor],
                              n_coords: int,
                              rng: np.random.Generator,
                              h: float = 1e-5) -> float:
    """Same check restricted to ``n_coords`` randomly sampled coordinates,
    for composites too large to sweep exhaustively."""
    params = list(params)
    for p in params:
        p.grad = None
    loss = loss_fn()
    loss.backward()

    sizes = [p.data.size for p in params]
    total = sum(sizes)
    picks = rng.choice(total, size=min(n_coords, total), replace=False)
    bounds = np.cumsum(sizes)

    worst = 0.0
    for flat_idx in sorted(picks.tolist()):
        pi = int(np.searchsorted(bounds, flat_idx, side="right"))
        local = flat_idx - (0 if pi == 0 else bounds[pi - 1])
        p = params[pi]
        analytic = 0.0 if p.grad is None else p.grad.reshape(-1)[local]
        flat = p.data.reshape(-1)
        orig = flat[local]
        flat[local] = orig + h
        up = float(loss_fn().data)
        flat[local] = orig - h
        down = float(loss_fn().data)
        flat[local] = orig
        numeric = (up - down) / (2.0 * h)
        scale = max(abs(analytic), abs(numeric))
        if scale < NOISE_FLOOR:
            continue
        err = abs(analytic - numeric) / scale
        if err > worst:
            worst = err
    return worst
