"""The set of weight matrices with at least one zero filter, and the
catalyst characterisation of its neighbourhoods."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ext import catalyst_reg


class NoWitnessError(ValueError):
    pass


def exact_filter_norms(W) -> np.ndarray:
    """Filter norms from a correctly rounded sum of squares (order independent)."""
    W = np.asarray(W, dtype=np.float64)
    return np.array([math.sqrt(math.fsum(row * row)) for row in W])


def in_Xtgt(W, tol: float = 0.0) -> bool:
    if tol < 0:
        raise ValueError("tol must be non-negative")
    return bool(exact_filter_norms(W).min() <= tol)


def dist_to_Xtgt(W) -> float:
    """L2 distance to the nearest ``{W : F_i = 0}``, i.e. the smallest filter norm."""
    return float(exact_filter_norms(W).min())


def nearest_filter(W) -> int:
    # np.argmin returns the lowest index on ties
    return int(np.argmin(exact_filter_norms(W)))


def witness_D(W, epsilon: float, k: float) -> np.ndarray:
    """A diagonal ``D`` with ``||D W||_{2,1} < k eps`` and ``||D||_1 > k``.

    Supported on the smallest filter with entry ``k'`` at the midpoint of
    ``(k, eps k / ||F||)``, or ``2k`` when that filter is zero.
    """
    if not (epsilon > 0 and k > 0):
        raise ValueError("epsilon and k must be positive")
    i = nearest_filter(W)
    m = exact_filter_norms(W)[i]
    if not m < epsilon:
        raise NoWitnessError(f"min filter norm {m} is not below epsilon={epsilon}")
    kp = 2.0 * k if m == 0 else 0.5 * (k + epsilon * k / m)
    D = np.zeros(np.shape(W)[0])
    D[i] = kp
    return D


@dataclass
class Thm1Result:
    ok: bool
    forward_checked: bool
    backward_checked: bool
    message: str = ""

    def __bool__(self):
        return self.ok


def check_thm1_equivalence(W, epsilon: float, k: float, D=None, rng=None) -> Thm1Result:
    """Check both inclusions of the neighbourhood characterisation on one instance.

    Forward: if ``W`` is within ``epsilon`` of the zero-filter set, the
    witness exists and satisfies both strict inequalities.  Backward: for
    ``D`` (supplied, or a random draw) with ``||D W||_{2,1} < k eps`` and
    ``||D||_1 > k``, the smallest filter is below ``epsilon``, and the
    weighted-average chain bounding it holds term by term.
    """
    W = np.asarray(W, dtype=np.float64)
    norms = exact_filter_norms(W)
    msgs = []
    ok = True

    fwd = bool(norms.min() < epsilon)
    if fwd:
        Dw = witness_D(W, epsilon, k)
        reg, l1 = catalyst_reg(Dw, W), float(np.abs(Dw).sum())
        if not (reg < k * epsilon and l1 > k):
            ok = False
            msgs.append(f"witness fails: ||DW||={reg!r} vs k*eps={k * epsilon!r}, ||D||_1={l1!r} vs k={k!r}")

    if D is None:
        D = np.random.default_rng(rng).normal(size=norms.shape[0])
    D = np.asarray(D, dtype=np.float64)
    l1 = float(np.abs(D).sum())
    reg = catalyst_reg(D, W)
    bwd = bool(reg < k * epsilon and l1 > k)
    if bwd:
        m = norms.min()
        weights = np.abs(D) / l1
        avg = float(weights @ norms)
        chain = [m <= avg * (1 + 1e-12), avg <= reg / k * (1 + 1e-12), reg / k < epsilon]
        if not all(chain) or not m < epsilon:
            ok = False
            msgs.append(f"backward chain broken: min={m!r}, weighted={avg!r}, reg/k={reg / k!r}, eps={epsilon!r}")
    return Thm1Result(ok, fwd, bwd, "; ".join(msgs))
