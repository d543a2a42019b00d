"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from .params import ParamTensor
from .tape import Tape, Value


def grad_check(
    make_loss: Callable[[], tuple[Tape, Value]],
    params: Iterable[ParamTensor],
    h: float = 1e-5,
    atol: float = 1e-8,
) -> float:
    """Max over parameter coordinates of the relative error between the
    analytic gradient and a central finite difference of the loss.

    `make_loss` must rebuild the forward pass from scratch on every call so
    the perturbed parameter values are actually consumed. Coordinates where
    both sides differ by less than `atol` count as exact: central differences
    carry ~eps/h of rounding noise, which would otherwise swamp the relative
    error at structurally zero gradients.
    """
    params = list(params)
    for p in params:
        p.zero_grad()
    tape, root = make_loss()
    tape.backward(root)
    analytic = [p.grad.copy() for p in params]
    for p in params:
        p.zero_grad()

    worst = 0.0
    for p, grads in zip(params, analytic):
        flat = p.values.reshape(-1)
        gflat = grads.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = float(make_loss()[1].data)
            flat[i] = orig - h
            f_minus = float(make_loss()[1].data)
            flat[i] = orig
            central = (f_plus - f_minus) / (2.0 * h)
            a = gflat[i]
            if abs(a - central) <= atol:
                continue
            err = abs(a - central) / (abs(a) + abs(central) + 1e-12)
            worst = max(worst, err)
    return worst
