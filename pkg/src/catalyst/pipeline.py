"""Catalyst pruning end to end: embed, two regularise-and-prune phases, finetune."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .accounting import count_macs_params
from .ext import ExtendedSubmodule, c_ratios, catalyst_reg, catalyst_reg_grad, embed, ratios
from .nn import Model, NumericalError, evaluate, filter_norms, model_forward_backward, param_group, sgd_step
from .prune import contract, prune, select_prune_indices

log = logging.getLogger(__name__)

OPT1, OPT2, FINETUNE = "opt1", "opt2", "finetune"
CHECKPOINTS = ("post-embed", "post-opt1", "post-prune1", "post-opt2", "post-prune2", "final")


@dataclass
class LRSchedule:
    """Piecewise-constant rate: ``base * ratio ** (#decay epochs passed)``."""

    base: float
    decay_epochs: Tuple[int, ...] = ()
    ratio: float = 0.1

    def __post_init__(self):
        self.decay_epochs = tuple(int(e) for e in self.decay_epochs)
        if not self.base > 0:
            raise ValueError(f"learning rate must be positive, got {self.base}")

    def __call__(self, epoch: int) -> float:
        return self.base * self.ratio ** sum(epoch >= e for e in self.decay_epochs)


def gamma_schedule(gamma0: float, t: int) -> float:
    """Regularisation weight after ``t`` epochs of the current phase."""
    if t < 0:
        raise ValueError("epoch index must be non-negative")
    return gamma0 * (1.0 + 0.25 * t)


@dataclass
class TrainConfig:
    lr_opt1: LRSchedule = field(default_factory=lambda: LRSchedule(0.01, (30, 40), 0.1))
    lr_opt2: LRSchedule = field(default_factory=lambda: LRSchedule(0.01, (30, 40), 0.1))
    lr_finetune: LRSchedule = field(default_factory=lambda: LRSchedule(0.01))
    alpha_theta: float = 5e-3
    alpha_D: float = 5e-3
    gamma0: float = 0.05
    gamma0_prime: float = 0.05
    epsilon: float = 5e-4
    epsilon_prime: float = 5e-4
    kappa: float = math.inf
    T: int = 5640
    T_prime: int = 5640
    c_init: float = 1.0
    seed: int = 0
    batch_size: int = 32
    finetune_epochs: int = 5
    momentum: float = 0.9

    def __post_init__(self):
        for name in ("lr_opt1", "lr_opt2", "lr_finetune"):
            v = getattr(self, name)
            if isinstance(v, (int, float)):
                setattr(self, name, LRSchedule(float(v)))
            elif isinstance(v, dict):
                setattr(self, name, LRSchedule(**v))
        if min(self.epsilon, self.epsilon_prime, self.c_init) <= 0:
            raise ValueError("epsilon, epsilon_prime and c_init must be positive")
        if min(self.T, self.T_prime, self.batch_size) < 1 or self.finetune_epochs < 0:
            raise ValueError("step budgets and batch size must be positive")
        if min(self.gamma0, self.gamma0_prime, self.alpha_theta, self.alpha_D, self.momentum) < 0:
            raise ValueError("gamma, weight decays and momentum must be non-negative")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive (inf disables)")
        if self.alpha_theta < self.alpha_D:
            log.info("alpha_theta=%g < alpha_D=%g: weight decay favours keeping channels",
                     self.alpha_theta, self.alpha_D)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class StepRecord:
    step: int
    phase: str
    train_loss: float
    reg_value: float
    test_loss: float
    test_acc: float


@dataclass
class ChannelSnapshot:
    checkpoint: str
    layer: int
    c: np.ndarray
    filter_norm: np.ndarray
    d: np.ndarray


@dataclass
class PruneEvent:
    phase: str
    step: int
    pruned: Tuple[int, ...]
    n_before: int
    acc_before: float
    acc_after: float
    loss_before: float
    loss_after: float
    macs_before: int
    macs_after: int
    params_before: int
    params_after: int
    margin: Optional[float]
    deviation: float

    @property
    def pruned_count(self) -> int:
        return len(self.pruned)

    @property
    def delta_acc(self) -> float:
        return self.acc_after - self.acc_before

    @property
    def delta_loss(self) -> float:
        return self.loss_after - self.loss_before


@dataclass
class RunLog:
    steps: List[StepRecord] = field(default_factory=list)
    snapshots: List[ChannelSnapshot] = field(default_factory=list)
    events: List[PruneEvent] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)
    stop_reasons: Dict[str, str] = field(default_factory=dict)
    dense_macs: Optional[int] = None
    final_macs: Optional[int] = None
    final_acc: Optional[float] = None
    final_loss: Optional[float] = None

    @property
    def last_step(self) -> int:
        return self.steps[-1].step if self.steps else 0

    def snapshot(self, name: str, sub, layer: int = 0):
        d = np.asarray(getattr(sub, "D", np.zeros(sub.n_hidden)), dtype=np.float64).copy()
        self.snapshots.append(ChannelSnapshot(name, layer, ratios(d, sub.W), filter_norms(sub.W), d))


def decision_margin(c, P) -> Optional[float]:
    """``min_{i in P} log10 c_i - max_{i not in P} log10 c_i``; None if either side is empty."""
    c = np.asarray(c, dtype=np.float64)
    mask = np.zeros(c.shape[0], dtype=bool)
    mask[list(P)] = True
    if mask.all() or not mask.any():
        return None
    with np.errstate(divide="ignore"):
        logc = np.log10(c)
    return float(logc[mask].min() - logc[~mask].max())


def _batches(n, batch_size, rng):
    perm = rng.permutation(n)
    for k in range(0, n, batch_size):
        yield perm[k:k + batch_size]


def _decays(model: Model, cfg: TrainConfig):
    return {name: (cfg.alpha_D if param_group(name) == "D" else cfg.alpha_theta) for name in model.params()}


def _kappa_reached(ext, kappa: float) -> bool:
    if not math.isfinite(kappa):
        return False
    c = c_ratios(ext)
    live = (filter_norms(ext.W) > 0) | (ext.D != 0)
    if not live.any():
        return False
    with np.errstate(divide="ignore"):
        return bool(np.all(np.abs(np.log(c[live])) > kappa))


def run_opt_phase(model: Model, cfg: TrainConfig, phase: str, data, runlog: Optional[RunLog] = None,
                  loss_weight: float = 1.0) -> Tuple[Model, RunLog]:
    """Minimise ``loss_weight * L + gamma_t ||D W||_{2,1}`` on the extended block.

    Stops when the regulariser drops below the phase's epsilon, when every
    live channel has ``|log c_i| > kappa``, or when the step budget is spent.
    The model is updated in place and also returned.
    """
    if phase not in (OPT1, OPT2):
        raise ValueError(f"unknown phase {phase!r}")
    ext = model.sub
    if not isinstance(ext, ExtendedSubmodule):
        raise TypeError("run_opt_phase needs a model whose target block is extended")
    if phase == OPT2 and np.any(ext.Dbar != 0):
        raise ValueError("opt2 requires Dbar = 0 (run the first prune first)")
    runlog = RunLog() if runlog is None else runlog
    eps, budget = (cfg.epsilon, cfg.T) if phase == OPT1 else (cfg.epsilon_prime, cfg.T_prime)
    lr_sched = cfg.lr_opt1 if phase == OPT1 else cfg.lr_opt2
    gamma0 = cfg.gamma0 if phase == OPT1 else cfg.gamma0_prime
    rng = np.random.default_rng([cfg.seed, 1 if phase == OPT1 else 2])
    X, y = data.train
    Xte, yte = data.test
    decay = _decays(model, cfg)
    if phase == OPT2:
        decay["sub.Dbar"] = 0.0
    buffers: Dict[str, np.ndarray] = {}
    step = runlog.last_step
    t = epoch = 0
    reason = None
    while reason is None:
        gamma = gamma_schedule(gamma0, epoch)
        lr = lr_sched(epoch)
        for idx in _batches(len(y), cfg.batch_size, rng):
            loss, grads = model_forward_backward(model, (X[idx], y[idx]), step + 1)
            if loss_weight != 1.0:
                grads = {k: loss_weight * g for k, g in grads.items()}
            if phase == OPT2:
                grads["sub.Dbar"] = np.zeros_like(ext.Dbar)
            gD, gW = catalyst_reg_grad(ext.D, ext.W)
            grads["sub.D"] = grads["sub.D"] + gamma * gD
            grads["sub.W"] = grads["sub.W"] + gamma * gW
            model.assign(sgd_step(model.params(), grads, lr, decay, cfg.momentum, buffers))
            t += 1
            step += 1
            reg = catalyst_reg(ext.D, ext.W)
            if not math.isfinite(reg):
                raise NumericalError(f"non-finite regulariser {reg}", step)
            te_loss, te_acc = evaluate(model, Xte, yte)
            runlog.steps.append(StepRecord(step, phase, loss_weight * loss, reg, te_loss, te_acc))
            if reg < eps:
                reason = "epsilon"
            elif _kappa_reached(ext, cfg.kappa):
                reason = "kappa"
            elif t >= budget:
                reason = "budget"
            if reason:
                break
        epoch += 1
    runlog.stop_reasons[phase] = reason
    log.info("%s stopped by %s after %d steps (||DW||=%.3g)", phase, reason, t, reg)
    return model, runlog


def _prune_event(model: Model, phase: str, data, runlog: RunLog) -> Model:
    ext = model.sub
    Xte, yte = data.test
    P = select_prune_indices(ext)
    margin = decision_margin(c_ratios(ext), P)
    loss0, acc0 = evaluate(model, Xte, yte)
    macs0, params0 = count_macs_params(model)
    pruned = Model(prune(ext, P), model.pre, model.post)
    if phase == OPT2:
        pruned = Model(contract(pruned.sub), model.pre, model.post)
    loss1, acc1 = evaluate(pruned, Xte, yte)
    macs1, params1 = count_macs_params(pruned)
    deviation = float(np.abs(model.forward(Xte) - pruned.forward(Xte)).max())
    step = runlog.last_step
    runlog.events.append(PruneEvent(phase, step, P.indices, ext.n_hidden, acc0, acc1, loss0, loss1,
                                    macs0, macs1, params0, params1, margin, deviation))
    runlog.steps.append(StepRecord(step, "prune1" if phase == OPT1 else "prune2", math.nan,
                                   catalyst_reg(getattr(pruned.sub, "D", np.zeros(pruned.sub.n_hidden)), pruned.sub.W),
                                   loss1, acc1))
    log.info("%s prune: removed %d/%d channels, dacc=%+.4f pp, dloss=%+.3g", phase, len(P),
             ext.n_hidden, acc1 - acc0, loss1 - loss0)
    return pruned


def train_plain(model: Model, data, lr_sched: LRSchedule, n_steps: int, cfg: TrainConfig,
                runlog: Optional[RunLog] = None, phase: str = FINETUNE, stream: int = 3) -> Model:
    """Unregularised SGD for ``n_steps`` minibatch steps (in place)."""
    X, y = data.train
    Xte, yte = data.test
    rng = np.random.default_rng([cfg.seed, stream])
    decay = {name: cfg.alpha_theta for name in model.params()}
    buffers: Dict[str, np.ndarray] = {}
    step = runlog.last_step if runlog is not None else 0
    t = epoch = 0
    while t < n_steps:
        lr = lr_sched(epoch)
        for idx in _batches(len(y), cfg.batch_size, rng):
            loss, grads = model_forward_backward(model, (X[idx], y[idx]), step + 1)
            model.assign(sgd_step(model.params(), grads, lr, decay, cfg.momentum, buffers))
            t += 1
            step += 1
            if runlog is not None:
                te_loss, te_acc = evaluate(model, Xte, yte)
                runlog.steps.append(StepRecord(step, phase, loss, 0.0, te_loss, te_acc))
            if t >= n_steps:
                break
        epoch += 1
    return model


def steps_per_epoch(data, cfg: TrainConfig) -> int:
    return -(-len(data.train[1]) // cfg.batch_size)


def catalyst_prune_full(model: Model, cfg: TrainConfig, data,
                        runlog: Optional[RunLog] = None) -> Tuple[Model, RunLog]:
    """Embed, opt1, prune, opt2, prune, finetune.  The input model is not modified.

    Pass ``runlog`` to keep the partial log if a step fails numerically.
    """
    runlog = RunLog() if runlog is None else runlog
    model = model.copy()
    runlog.dense_macs = count_macs_params(model)[0]
    ext = embed(model.sub, cfg.c_init)
    if np.any(filter_norms(ext.W) == 0):
        runlog.notes.append("zero filters at embed: " + ",".join(map(str, np.flatnonzero(filter_norms(ext.W) == 0))))
    model = Model(ext, model.pre, model.post)
    runlog.snapshot("post-embed", model.sub)

    run_opt_phase(model, cfg, OPT1, data, runlog)
    runlog.snapshot("post-opt1", model.sub)
    model = _prune_event(model, OPT1, data, runlog)
    runlog.snapshot("post-prune1", model.sub)

    run_opt_phase(model, cfg, OPT2, data, runlog)
    runlog.snapshot("post-opt2", model.sub)
    model = _prune_event(model, OPT2, data, runlog)
    runlog.snapshot("post-prune2", model.sub)

    if cfg.finetune_epochs:
        train_plain(model, data, cfg.lr_finetune, cfg.finetune_epochs * steps_per_epoch(data, cfg), cfg, runlog)
    runlog.snapshot("final", model.sub)
    runlog.final_macs = count_macs_params(model)[0]
    runlog.final_loss, runlog.final_acc = evaluate(model, *data.test)
    return model, runlog


def phase_lengths(runlog: RunLog) -> Dict[str, int]:
    out: Dict[str, int] = {}
    for r in runlog.steps:
        if r.phase in (OPT1, OPT2, FINETUNE):
            out[r.phase] = out.get(r.phase, 0) + 1
    return out


def dense_baseline(model: Model, cfg: TrainConfig, data, runlog: RunLog) -> Model:
    """Train the dense model for as many steps, under the same per-phase rates,
    as the catalyst run recorded in ``runlog`` used."""
    model = model.copy()
    lengths = phase_lengths(runlog)
    for stream, (phase, sched) in enumerate(((OPT1, cfg.lr_opt1), (OPT2, cfg.lr_opt2),
                                             (FINETUNE, cfg.lr_finetune)), start=11):
        if lengths.get(phase):
            train_plain(model, data, sched, lengths[phase], cfg, stream=stream)
    return model
