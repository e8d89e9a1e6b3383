"""Channel selection and the bias-folding contraction of an extended block."""
from __future__ import annotations

import numpy as np

from .ext import ExtendedSubmodule, psi
from .nn import PruneSet, ShapeError, Submodule, filter_norms


def select_prune_indices(ext: ExtendedSubmodule) -> PruneSet:
    """Channels with ``|D_ii| > ||F_i||``.  Ties stay."""
    prunable = np.abs(ext.D) > filter_norms(ext.W)
    return PruneSet(np.flatnonzero(prunable), ext.n_hidden)


def prune(ext: ExtendedSubmodule, P) -> ExtendedSubmodule:
    """Remove channels ``P`` and fold their constant output into ``b_A``.

    Returns ``(W[P^c], b_W[P^c], A[:, P^c], b_A', -Dbar[P^c], 0)`` with
    ``b_A' = b_A + A D b_W + A[:, P] psi_{-Dbar,0}(b_W)[P]``.  Exact whenever
    ``D W = 0`` and ``P = supp(D)``; otherwise the dropped ``A D W x`` term is
    the error.
    """
    if not isinstance(P, PruneSet):
        P = PruneSet(P, ext.n_hidden)
    elif P.n_channels != ext.n_hidden:
        raise IndexError(f"PruneSet built for {P.n_channels} channels, block has {ext.n_hidden}")
    s = ext.sub
    p = list(P.indices)
    keep = P.kept
    folded = psi(-ext.Dbar, np.zeros_like(ext.Dbar), s.b_W, s.sigma)[p]
    b_A = s.b_A + s.A @ (ext.D * s.b_W) + s.A[:, p] @ folded
    sub = Submodule(s.W[keep], s.b_W[keep], s.A[:, keep], b_A, s.sigma)
    return ExtendedSubmodule(sub, -ext.Dbar[keep], np.zeros(keep.size))


def contract(ext: ExtendedSubmodule) -> Submodule:
    """Drop the catalyst slots once both are zero."""
    if np.any(ext.D != 0) or np.any(ext.Dbar != 0):
        raise ValueError("cannot contract: D or Dbar still nonzero")
    return ext.sub.copy()


def _forward_fn(m):
    return m.forward if hasattr(m, "forward") else m


def verify_function_preservation(before, after, n_samples: int = 100, input_dim=None,
                                 seed: int = 0, scale: float = 1.0) -> float:
    """Max over seeded N(0, scale^2) inputs of ``||before(x) - after(x)||_inf``."""
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    dims = {getattr(m, "n_in", None) for m in (before, after)} - {None}
    if len(dims) > 1:
        raise ShapeError(f"input dims differ: {sorted(dims)}")
    if input_dim is None:
        if not dims:
            raise ValueError("input_dim is required for plain callables")
        input_dim = dims.pop()
    elif dims and input_dim not in dims:
        raise ShapeError(f"input_dim {input_dim} does not match model input {dims}")
    x = np.random.default_rng(seed).normal(0.0, scale, size=(n_samples, input_dim))
    dev = np.abs(_forward_fn(before)(x) - _forward_fn(after)(x))
    return float(dev.max())
