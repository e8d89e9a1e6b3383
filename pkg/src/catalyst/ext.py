"""Catalyst extension of the target block.

The hidden activation becomes ``psi(x) = D x - Dbar x + sigma(x)`` with
diagonal ``D`` and ``Dbar`` stored as vectors.  ``embed`` sets
``D = Dbar = c * ||F_i||`` so the realised function does not change, and the
regulariser ``||D W||_{2,1}`` pulls every channel toward either ``D_ii = 0``
or ``F_i = 0``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .nn import Activation, ShapeError, Submodule, activate, activate_grad, filter_norms, forward_submodule

log = logging.getLogger(__name__)


def _diag(v, n=None, name="D"):
    v = np.array(v, dtype=np.float64).reshape(-1)
    if n is not None and v.shape[0] != n:
        raise ShapeError(f"{name} has length {v.shape[0]}, expected {n}")
    return v


def psi(D, Dbar, x, sigma=Activation.RELU):
    x = np.asarray(x, dtype=np.float64)
    D = np.asarray(D, dtype=np.float64)
    Dbar = np.asarray(Dbar, dtype=np.float64)
    if D.shape[-1] != x.shape[-1] or Dbar.shape[-1] != x.shape[-1]:
        raise ShapeError(f"psi: lengths D={D.shape}, Dbar={Dbar.shape}, x={x.shape}")
    return D * x - Dbar * x + activate(x, sigma)


@dataclass
class ExtendedSubmodule:
    """A :class:`Submodule` plus catalyst diagonals ``D`` and ``Dbar``."""

    sub: Submodule
    D: np.ndarray
    Dbar: np.ndarray

    def __post_init__(self):
        n = self.sub.n_hidden
        self.D = _diag(self.D, n, "D")
        self.Dbar = _diag(self.Dbar, n, "Dbar")

    # block parameters are exposed directly so the extended block can stand
    # wherever a plain Submodule is expected
    W = property(lambda self: self.sub.W)
    b_W = property(lambda self: self.sub.b_W)
    A = property(lambda self: self.sub.A)
    b_A = property(lambda self: self.sub.b_A)
    sigma = property(lambda self: self.sub.sigma)
    n_in = property(lambda self: self.sub.n_in)
    n_hidden = property(lambda self: self.sub.n_hidden)
    n_out = property(lambda self: self.sub.n_out)

    def hidden(self, u):
        return psi(self.D, self.Dbar, u, self.sub.sigma)

    def hidden_grad(self, u):
        return (self.D - self.Dbar) + activate_grad(u, self.sub.sigma)

    def forward(self, x):
        return forward_extended(self, x)

    def copy(self) -> "ExtendedSubmodule":
        return ExtendedSubmodule(self.sub.copy(), self.D.copy(), self.Dbar.copy())


def forward_extended(ext: ExtendedSubmodule, x):
    return forward_submodule(ext, x)


def embed(sub: Submodule, c: float = 1.0) -> ExtendedSubmodule:
    """Extend ``sub`` with ``D = Dbar = c * diag(||F_1||, ..., ||F_N||)``."""
    if not c > 0:
        raise ValueError(f"embed scale c must be positive, got {c}")
    norms = filter_norms(sub.W)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        log.warning("embed: zero filters at channels %s get D_ii = 0", zero.tolist())
    d = c * norms
    return ExtendedSubmodule(sub.copy(), d.copy(), d.copy())


def catalyst_reg(D, W) -> float:
    """``||D W||_{2,1} = sum_i |D_ii| ||F_i||``."""
    D = np.asarray(D, dtype=np.float64)
    norms = filter_norms(W)
    if D.shape[0] != norms.shape[0]:
        raise ShapeError(f"D length {D.shape[0]} != N_W {norms.shape[0]}")
    return float(np.abs(D) @ norms)


def catalyst_reg_grad(D, W):
    """Gradient of ``||D W||_{2,1}`` in ``D`` and ``W``.

    At the kinks: ``sgn(0) = 0`` and a zero filter gets a zero ``W`` gradient.
    """
    D = np.asarray(D, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    norms = filter_norms(W)
    if D.shape[0] != norms.shape[0]:
        raise ShapeError(f"D length {D.shape[0]} != N_W {norms.shape[0]}")
    gD = np.sign(D) * norms
    safe = np.where(norms > 0, norms, 1.0)
    scale = np.where(norms > 0, np.abs(D) / safe, 0.0)
    gW = scale[:, None] * W
    return gD, gW


def c_ratios(ext) -> np.ndarray:
    """Per-channel ``|D_ii| / ||F_i||``.

    Zero filter with ``D_ii != 0`` gives ``inf``; ``0/0`` gives 1 (degenerate).
    """
    return ratios(ext.D, ext.W)


def ratios(D, W) -> np.ndarray:
    absd = np.abs(np.asarray(D, dtype=np.float64))
    norms = filter_norms(W)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = absd / norms
    c[(norms == 0) & (absd != 0)] = np.inf
    c[(norms == 0) & (absd == 0)] = 1.0
    return c


def degenerate_channels(ext) -> np.ndarray:
    """Indices whose ratio is ``0/0``."""
    norms = filter_norms(ext.W)
    return np.flatnonzero((norms == 0) & (np.asarray(ext.D) == 0))
