"""Gated recurrent unit.

Gate equations (per step)::

    r  = sigmoid(W_r x + U_r h + b_r)
    u  = sigmoid(W_u x + U_u h + b_u)
    h~ = tanh(W_h x + U_h (r * h) + b_h)
    h' = (1 - u) * h + u * h~

The input projections do not depend on the hidden state, so a whole sequence
is projected with one matmul and only the recurrence is unrolled.  The
recurrence is a single tape node with a hand-written BPTT backward.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeMismatch
from .params import uniform
from .tensor import Tensor, _make, _sigmoid, add, as_tensor, concat, matmul, reshape


@dataclass
class GRUParams:
    W_r: Tensor
    W_u: Tensor
    W_h: Tensor
    U_r: Tensor
    U_u: Tensor
    U_h: Tensor
    b_r: Tensor
    b_u: Tensor
    b_h: Tensor

    @property
    def input_dim(self) -> int:
        return self.W_r.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.U_r.shape[0]

    @classmethod
    def init(cls, rng: np.random.Generator, d_in: int, d_hidden: int) -> "GRUParams":
        def u(*shape):
            return uniform(rng, shape, d_hidden)

        return cls(
            W_r=u(d_in, d_hidden), W_u=u(d_in, d_hidden), W_h=u(d_in, d_hidden),
            U_r=u(d_hidden, d_hidden), U_u=u(d_hidden, d_hidden), U_h=u(d_hidden, d_hidden),
            b_r=u(d_hidden), b_u=u(d_hidden), b_h=u(d_hidden),
        )


def project_inputs(x: Tensor, params: GRUParams) -> Tensor:
    """Stacked input projections ``[W_r x + b_r, W_u x + b_u, W_h x + b_h]``."""
    if x.shape[-1] != params.input_dim:
        raise ShapeMismatch(f"GRU input width {x.shape[-1]} != {params.input_dim}")
    W = concat([params.W_r, params.W_u, params.W_h], axis=1)
    b = concat([params.b_r, params.b_u, params.b_h], axis=0)
    return add(matmul(x, W), b)


def gru_recurrence(xproj: Tensor, h0: Tensor, params: GRUParams) -> Tensor:
    """Run the recurrence over pre-projected inputs.

    Args:
        xproj: (T, B, 3*d_H) output of :func:`project_inputs`.
        h0: (B, d_H) initial hidden state.

    Returns:
        (T, B, d_H) hidden states h_1..h_T.
    """
    xproj, h0 = as_tensor(xproj), as_tensor(h0)
    d = params.hidden_dim
    if xproj.ndim != 3 or xproj.shape[2] != 3 * d:
        raise ShapeMismatch(f"xproj must be (T, B, {3 * d}), got {xproj.shape}")
    if h0.shape != (xproj.shape[1], d):
        raise ShapeMismatch(f"h0 must be {(xproj.shape[1], d)}, got {h0.shape}")
    Ur, Uu, Uh = params.U_r.data, params.U_u.data, params.U_h.data
    X = xproj.data
    steps = X.shape[0]
    H = np.empty((steps,) + h0.shape)
    R = np.empty_like(H)
    Ug = np.empty_like(H)
    C = np.empty_like(H)
    h = h0.data
    for t in range(steps):
        r = _sigmoid(X[t, :, :d] + h @ Ur)
        u = _sigmoid(X[t, :, d:2 * d] + h @ Uu)
        c = np.tanh(X[t, :, 2 * d:] + (r * h) @ Uh)
        h = h + u * (c - h)
        R[t], Ug[t], C[t], H[t] = r, u, c, h

    def bw(g):
        dX = np.empty_like(X)
        dUr = np.zeros_like(Ur)
        dUu = np.zeros_like(Uu)
        dUh = np.zeros_like(Uh)
        carry = np.zeros_like(h0.data)
        for t in range(steps - 1, -1, -1):
            hp = H[t - 1] if t > 0 else h0.data
            r, u, c = R[t], Ug[t], C[t]
            dh_next = g[t] + carry
            dc = dh_next * u * (1.0 - c * c)
            du = dh_next * (c - hp) * u * (1.0 - u)
            rh = r * hp
            drh = dc @ Uh.T
            dr = drh * hp * r * (1.0 - r)
            dX[t, :, :d] = dr
            dX[t, :, d:2 * d] = du
            dX[t, :, 2 * d:] = dc
            dUh += rh.T @ dc
            dUu += hp.T @ du
            dUr += hp.T @ dr
            carry = dh_next * (1.0 - u) + drh * r + du @ Uu.T + dr @ Ur.T
        return dX, carry, dUr, dUu, dUh

    return _make(H, (xproj, h0, params.U_r, params.U_u, params.U_h), bw, "gru")


def gru_cell(x, h_prev, params: GRUParams) -> Tensor:
    """One GRU step for a single vector (d_X,) or a batch (B, d_X)."""
    x, h_prev = as_tensor(x), as_tensor(h_prev)
    single = x.ndim == 1
    if single:
        x = reshape(x, (1, x.shape[0]))
        h_prev = reshape(h_prev, (1, h_prev.shape[0]))
    if h_prev.shape[-1] != params.hidden_dim or x.shape[0] != h_prev.shape[0]:
        raise ShapeMismatch(f"hidden state shape {h_prev.shape} does not fit params")
    xproj = project_inputs(x, params)
    out = gru_recurrence(reshape(xproj, (1,) + xproj.shape), h_prev, params)
    shape = (params.hidden_dim,) if single else out.shape[1:]
    return reshape(out, shape)
