"""MACs and parameter counts for dense models."""
from __future__ import annotations

from .nn import Dense, Model


def _dense(n_out: int, n_in: int):
    return n_out * n_in, n_out * n_in + n_out


def count_macs_params(model):
    """``(macs, params)`` for one forward pass of a single input.

    A dense ``m x n`` layer costs ``m*n`` MACs and holds ``m*n + m`` parameters;
    an extended block adds ``2*N_W`` catalyst parameters and no MACs.
    Accepts a :class:`~catalyst.nn.Model`, a bare (extended) block or one
    :class:`~catalyst.nn.Dense` layer.
    """
    if isinstance(model, Dense):
        return _dense(*model.W.shape)
    if isinstance(model, Model):
        sub, pre, post = model.sub, model.pre, model.post
    else:
        sub, pre, post = model, [], []
    layers = [l.W.shape for l in pre] + [sub.W.shape, sub.A.shape] + [l.W.shape for l in post]
    macs = params = 0
    for m, n in layers:
        a, b = _dense(m, n)
        macs += a
        params += b
    if hasattr(sub, "D"):
        params += 2 * sub.W.shape[0]
    return macs, params
