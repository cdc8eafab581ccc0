"""Loss, gradient and exact Hessian-vector products over flat parameters.

HVPs are computed by differentiating the gradient a second time (double
reverse mode), never by finite differences.
"""

from __future__ import annotations

import numpy as np
import torch

from .descriptor import ParamVector


def _theta(params: ParamVector) -> torch.Tensor:
    return torch.tensor(params.values, dtype=torch.float64, requires_grad=True)


def _check_layout(model, params: ParamVector) -> None:
    if params.values.size != model.size:
        raise ValueError(f"parameter vector has {params.values.size} entries, model expects {model.size}")


def forward(model, params: ParamVector, batch, bn_stats=None) -> tuple[np.ndarray, float]:
    """Logits ``[n, outputs]`` and the scalar loss."""
    _check_layout(model, params)
    with torch.no_grad():
        logits, loss = model.objective(torch.from_numpy(params.values), batch, bn_stats)
    loss = float(loss)
    if not np.isfinite(loss):
        raise FloatingPointError("non-finite loss")
    return logits.numpy().copy(), loss


def grad(model, params: ParamVector, batch, bn_stats=None) -> ParamVector:
    _check_layout(model, params)
    theta = _theta(params)
    _, loss = model.objective(theta, batch, bn_stats)
    (g,) = torch.autograd.grad(loss, theta, allow_unused=True)
    if g is None:
        g = torch.zeros_like(theta)
    return params.like(g.detach().numpy().copy())


class HessianOperator:
    """``v -> H v`` for the loss Hessian at fixed parameters and batch.

    The first-order graph is built once; each product costs one extra
    backward pass. Read-only with respect to the parameters.
    """

    def __init__(self, model, params: ParamVector, batch, bn_stats=None):
        _check_layout(model, params)
        self.params = params
        self.dim = params.values.size
        self._theta = _theta(params)
        _, loss = model.objective(self._theta, batch, bn_stats)
        (self._g,) = torch.autograd.grad(loss, self._theta, create_graph=True)
        self.calls = 0

    def __call__(self, v) -> np.ndarray:
        v = np.asarray(v.values if isinstance(v, ParamVector) else v, dtype=np.float64)
        if v.shape != (self.dim,):
            raise ValueError(f"direction has shape {v.shape}, expected ({self.dim},)")
        self.calls += 1
        if not self._g.requires_grad:
            # loss is at most linear in theta
            return np.zeros(self.dim)
        (hv,) = torch.autograd.grad(
            self._g, self._theta, grad_outputs=torch.from_numpy(v), retain_graph=True, allow_unused=True
        )
        return np.zeros(self.dim) if hv is None else hv.numpy().copy()


def hvp(model, params: ParamVector, batch, v: ParamVector, bn_stats=None) -> ParamVector:
    if isinstance(v, ParamVector) and v.layout != params.layout:
        raise ValueError("direction layout does not match the parameter layout")
    return params.like(HessianOperator(model, params, batch, bn_stats)(v))
