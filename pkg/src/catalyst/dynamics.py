"""Gradient descent on ``||d M||_2`` and the ratio recurrence behind it.

One step with learning rate ``lam`` and weight decay ``alpha`` scales ``d`` by
``1 - alpha - lam/c`` and ``M`` by ``1 - alpha - lam*c`` where
``c = |d| / ||M||``.  Hence ``c_{t+1} = f(c_t, lam_t) c_t`` with
``f(x, y) = (1 - alpha - y/x) / (1 - alpha - x*y)``, valid while
``lam/(1-alpha) <= c <= (1-alpha)/lam`` keeps both factors non-negative.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Iterable, List, Optional, Union

import numpy as np

Schedule = Union[float, Callable[[int], float]]


class SingularityError(ZeroDivisionError):
    pass


class WindowViolation(ValueError):
    pass


class Outcome(str, Enum):
    PRESERVE = "Preserve"
    PRUNE = "Prune"
    BOUNDARY = "Boundary"
    SIGN_FLIP = "SignFlip"
    BUDGET = "Budget"


@dataclass(frozen=True)
class DynamicsState:
    d: float
    M: np.ndarray
    alpha: float = 0.0
    lambda_schedule: Schedule = 1e-3
    t: int = 0
    sign_flip: bool = False
    terminal: bool = False

    def __post_init__(self):
        object.__setattr__(self, "M", np.array(self.M, dtype=np.float64).reshape(-1))
        object.__setattr__(self, "d", float(self.d))
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must lie in [0, 1), got {self.alpha}")

    def lam(self, t: Optional[int] = None) -> float:
        t = self.t if t is None else t
        s = self.lambda_schedule
        lam = float(s(t)) if callable(s) else float(s)
        if not lam > 0:
            raise ValueError(f"lambda_t must be positive, got {lam} at t={t}")
        return lam

    @property
    def m_norm(self) -> float:
        return float(np.linalg.norm(self.M))

    @property
    def c(self) -> float:
        m = self.m_norm
        if m == 0:
            return math.inf if self.d != 0 else math.nan
        return abs(self.d) / m


def state_from_ratio(c0: float, n: int = 1, alpha: float = 0.0, lambda_schedule: Schedule = 1e-3,
                     rng=None) -> DynamicsState:
    """A state with ``|d|/||M|| = c0``: random direction for ``M``, ``||M|| = 1``."""
    rng = np.random.default_rng(rng)
    M = rng.normal(size=n)
    M /= np.linalg.norm(M)
    return DynamicsState(c0, M, alpha, lambda_schedule)


def gd_step(s: DynamicsState) -> DynamicsState:
    m = s.m_norm
    if m == 0 or s.d == 0 or s.terminal:
        return replace(s, terminal=True)
    lam = s.lam()
    a = s.alpha
    d_new = s.d - a * s.d - math.copysign(1.0, s.d) * lam * m
    M_new = s.M - a * s.M - lam * abs(s.d) * s.M / m
    flip = (d_new * s.d < 0) or bool(np.any(M_new * s.M < 0))
    return DynamicsState(d_new, M_new, a, s.lambda_schedule, s.t + 1, sign_flip=flip)


def f_coeff(x: float, y: float, alpha: float = 0.0) -> float:
    den = 1.0 - alpha - x * y
    if abs(den) < 1e-12:
        raise SingularityError(f"f({x}, {y}; alpha={alpha}) has a vanishing denominator")
    return (1.0 - alpha - y / x) / den


def in_window(c: float, lam: float, alpha: float = 0.0) -> bool:
    return lam / (1.0 - alpha) <= c <= (1.0 - alpha) / lam


def recurrence_step(c: float, lam: float, alpha: float = 0.0) -> float:
    if not in_window(c, lam, alpha):
        raise WindowViolation(
            f"c={c} outside [{lam / (1 - alpha)}, {(1 - alpha) / lam}] for lambda={lam}, alpha={alpha}"
        )
    return f_coeff(c, lam, alpha) * c


def safety_bound(c0: float, alpha: float = 0.0) -> float:
    """Largest admissible learning rate: a tenth of ``min((1-a)/c0, (1-a) c0)``."""
    return 0.1 * min((1.0 - alpha) / c0, (1.0 - alpha) * c0)


@dataclass
class Trajectory:
    t: List[int] = field(default_factory=list)
    d: List[float] = field(default_factory=list)
    m_norm: List[float] = field(default_factory=list)
    c: List[float] = field(default_factory=list)
    lam: List[float] = field(default_factory=list)
    outcome: Outcome = Outcome.BUDGET
    exit_step: Optional[int] = None

    def append(self, s: DynamicsState):
        self.t.append(s.t)
        self.d.append(s.d)
        self.m_norm.append(s.m_norm)
        self.c.append(s.c)
        self.lam.append(s.lam())

    def rows(self):
        return list(zip(self.t, self.d, self.m_norm, self.c))

    def __len__(self):
        return len(self.t)


def simulate_trajectory(s0: DynamicsState, T: int, lambda_inf: Optional[float] = None,
                        run_past_exit: bool = False, boundary_tol: float = 1e-9) -> Trajectory:
    """Iterate :func:`gd_step` for up to ``T`` steps and classify the run.

    Stops at the first window exit (``c <= lam/(1-alpha)`` gives Preserve,
    ``c >= (1-alpha)/lam`` gives Prune) unless ``run_past_exit``.  A sign change
    in ``d`` or ``M`` leaves the regime the recurrence describes and yields SignFlip.
    ``lambda_inf`` (the schedule's infimum) is only used for the safety check.
    """
    c0 = s0.c
    lam_inf = s0.lam(0) if lambda_inf is None else lambda_inf
    if math.isfinite(c0) and c0 > 0 and lam_inf > safety_bound(c0, s0.alpha):
        warnings.warn(
            f"lambda_*={lam_inf:g} exceeds the safety bound {safety_bound(c0, s0.alpha):g} for c0={c0:g}",
            RuntimeWarning,
            stacklevel=2,
        )
    traj = Trajectory()
    traj.append(s0)
    if not (math.isfinite(c0) and c0 > 0):
        traj.outcome = Outcome.PRESERVE if c0 == 0 else Outcome.PRUNE
        traj.exit_step = 0
        return traj
    boundary = abs(c0 - 1.0) <= boundary_tol
    s = s0
    a = s0.alpha
    for _ in range(T):
        lam = s.lam()
        c = s.c
        if traj.exit_step is None:
            if c <= lam / (1.0 - a):
                traj.outcome, traj.exit_step = Outcome.PRESERVE, s.t
            elif c >= (1.0 - a) / lam:
                traj.outcome, traj.exit_step = Outcome.PRUNE, s.t
            if traj.exit_step is not None and not run_past_exit:
                return traj
        s = gd_step(s)
        if s.terminal:
            break
        traj.append(s)
        if s.sign_flip:
            # past an exit the classification stands; the flip only ends the run
            if traj.exit_step is None:
                traj.outcome = Outcome.SIGN_FLIP
                traj.exit_step = s.t
            return traj
    if traj.exit_step is None:
        lam = s.lam()
        if s.c <= lam / (1.0 - a):
            traj.outcome, traj.exit_step = Outcome.PRESERVE, s.t
        elif s.c >= (1.0 - a) / lam:
            traj.outcome, traj.exit_step = Outcome.PRUNE, s.t
        elif boundary:
            traj.outcome = Outcome.BOUNDARY
    return traj


def recurrence_trajectory(c0: float, lams: Iterable[float], alpha: float = 0.0) -> List[float]:
    """Compose :func:`recurrence_step` along a learning-rate sequence."""
    out = [c0]
    c = c0
    for lam in lams:
        c = recurrence_step(c, lam, alpha)
        out.append(c)
    return out


def dfdx(x: float, y: float, alpha: float = 0.0) -> float:
    a = 1.0 - alpha
    return y * a / (x * x * (a - x * y) ** 2) * ((x - y / a) ** 2 - y * y / (a * a) + 1.0)


def dfdy(x: float, y: float, alpha: float = 0.0) -> float:
    a = 1.0 - alpha
    return a * (x * x - 1.0) / (x * (a - x * y) ** 2)


@dataclass
class LemmaPoint:
    x: float
    y: float
    alpha: float
    f: float
    dfdx_fd: float
    dfdy_fd: float
    dfdx_exact: float
    dfdy_exact: float
    in_window: bool
    sign_ok: bool
    fd_rel_err: float

    @property
    def passed(self) -> bool:
        return self.sign_ok


def check_lemma_f(points, h: float = 1e-6) -> List[LemmaPoint]:
    """Evaluate the sign claims on ``f`` at each ``(x, y, alpha)``.

    For ``x < 1``: ``f < 1``, ``df/dx > 0``, ``df/dy < 0``; for ``x > 1``:
    ``f > 1``, ``df/dx > 0``, ``df/dy > 0``; at ``x == 1``: ``f == 1`` and
    ``df/dy == 0``.  Partials come from central differences with step ``h``
    and are compared with the closed forms.  ``in_window`` records whether
    ``y/(1-alpha) <= x <= (1-alpha)/y``, the region the dynamics ever visit.
    """
    report = []
    for x, y, alpha in points:
        f = f_coeff(x, y, alpha)
        fx = (f_coeff(x + h, y, alpha) - f_coeff(x - h, y, alpha)) / (2 * h)
        fy = (f_coeff(x, y + h, alpha) - f_coeff(x, y - h, alpha)) / (2 * h)
        ex, ey = dfdx(x, y, alpha), dfdy(x, y, alpha)
        if x < 1:
            ok = f < 1 and fx > 0 and fy < 0
        elif x > 1:
            ok = f > 1 and fx > 0 and fy > 0
        else:
            ok = abs(f - 1.0) <= 1e-15 and abs(fy) <= 1e-6
        err_x = abs(fx - ex) / max(abs(ex), 1e-300)
        err_y = abs(fy - ey) / abs(ey) if ey != 0 else abs(fy)
        report.append(LemmaPoint(x, y, alpha, f, fx, fy, ex, ey, in_window(x, y, alpha), bool(ok),
                                 max(err_x, err_y)))
    return report


@dataclass
class SweepRow:
    c0: float
    lam: float
    alpha: float
    outcome: Outcome
    steps_to_exit: Optional[int]
    final_c: float


def phase_sweep(c0s, lams, alphas, T: int = 100_000, n: int = 1, seed: int = 0) -> List[SweepRow]:
    """Classify constant-rate trajectories over a ``(c0, lambda, alpha)`` grid."""
    rows = []
    for alpha in alphas:
        for lam in lams:
            for c0 in c0s:
                s0 = state_from_ratio(c0, n, alpha, lam, rng=seed)
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    tr = simulate_trajectory(s0, T)
                rows.append(SweepRow(c0, lam, alpha, tr.outcome, tr.exit_step, tr.c[-1]))
    return rows


SWEEP_COLUMNS = ("c0", "lambda", "alpha", "outcome", "steps_to_exit", "final_c")


def write_sweep_csv(rows: List[SweepRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([repr(r.c0), repr(r.lam), repr(r.alpha), r.outcome.value,
                        "" if r.steps_to_exit is None else r.steps_to_exit, repr(r.final_c)])
