"""Dense network core: the two-layer target block, a small MLP around it,
softmax cross-entropy backprop and plain SGD with per-group weight decay.

Layout conventions: weights are stored ``(out, in)``, inputs are batched
row-wise as ``(batch, in)``.  Everything is float64.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np


class ShapeError(ValueError):
    pass


class NumericalError(FloatingPointError):
    """Raised when the loss turns NaN/Inf."""

    def __init__(self, message: str, step: Optional[int] = None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class Activation(str, Enum):
    RELU = "relu"
    IDENTITY = "identity"
    TANH = "tanh"


def activate(u, kind: Activation = Activation.RELU):
    kind = Activation(kind)
    if kind is Activation.RELU:
        return np.maximum(u, 0.0)
    if kind is Activation.TANH:
        return np.tanh(u)
    return np.array(u, dtype=np.float64, copy=True)


def activate_grad(u, kind: Activation = Activation.RELU):
    """Element-wise derivative; ReLU uses 0 at the kink."""
    kind = Activation(kind)
    if kind is Activation.RELU:
        return (u > 0).astype(np.float64)
    if kind is Activation.TANH:
        return 1.0 - np.tanh(u) ** 2
    return np.ones_like(u, dtype=np.float64)


def _as_f64(a, ndim):
    a = np.array(a, dtype=np.float64)
    if a.ndim != ndim:
        raise ShapeError(f"expected a {ndim}-d array, got shape {a.shape}")
    return a


@dataclass
class Dense:
    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.W = _as_f64(self.W, 2)
        self.b = _as_f64(self.b, 1)
        if self.W.shape[0] != self.b.shape[0]:
            raise ShapeError(f"bias length {self.b.shape[0]} != rows {self.W.shape[0]}")

    @property
    def n_in(self) -> int:
        return self.W.shape[1]

    @property
    def n_out(self) -> int:
        return self.W.shape[0]

    def copy(self) -> "Dense":
        return Dense(self.W.copy(), self.b.copy())


@dataclass
class Submodule:
    """The block ``x -> b_A + A sigma(b_W + W x)``.

    Row ``i`` of ``W`` is the filter of hidden channel ``i``.
    """

    W: np.ndarray
    b_W: np.ndarray
    A: np.ndarray
    b_A: np.ndarray
    sigma: Activation = Activation.RELU

    def __post_init__(self):
        self.W = _as_f64(self.W, 2)
        self.b_W = _as_f64(self.b_W, 1)
        self.A = _as_f64(self.A, 2)
        self.b_A = _as_f64(self.b_A, 1)
        self.sigma = Activation(self.sigma)
        n_w, n_i = self.W.shape
        if n_i < 1 or self.A.shape[0] < 1:
            raise ShapeError("N_I and N_A must be at least 1")
        if self.b_W.shape[0] != n_w or self.A.shape[1] != n_w:
            raise ShapeError(
                f"inconsistent hidden width: W {self.W.shape}, b_W {self.b_W.shape}, A {self.A.shape}"
            )
        if self.b_A.shape[0] != self.A.shape[0]:
            raise ShapeError(f"b_A length {self.b_A.shape[0]} != rows(A) {self.A.shape[0]}")

    @property
    def n_in(self) -> int:
        return self.W.shape[1]

    @property
    def n_hidden(self) -> int:
        return self.W.shape[0]

    @property
    def n_out(self) -> int:
        return self.A.shape[0]

    @property
    def sub(self) -> "Submodule":
        return self

    def hidden(self, u):
        return activate(u, self.sigma)

    def hidden_grad(self, u):
        return activate_grad(u, self.sigma)

    def forward(self, x):
        return forward_submodule(self, x)

    def copy(self) -> "Submodule":
        return Submodule(self.W.copy(), self.b_W.copy(), self.A.copy(), self.b_A.copy(), self.sigma)


def forward_submodule(sub, x):
    """Evaluate ``b_A + A h(b_W + W x)`` for one input or a batch.

    ``h`` is the block's hidden activation: ``sigma`` for a plain
    :class:`Submodule`, the catalyst activation for an extended one.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != sub.W.shape[1]:
        raise ShapeError(f"input dim {x.shape[-1]} != N_I {sub.W.shape[1]}")
    u = x @ sub.W.T + sub.b_W
    return sub.hidden(u) @ sub.A.T + sub.b_A


def filter_norms(W) -> np.ndarray:
    W = np.asarray(W, dtype=np.float64)
    if W.size == 0 and W.shape[0] == 0:
        return np.zeros(0)
    return np.sqrt(np.einsum("ij,ij->i", W, W))


@dataclass(frozen=True)
class PruneSet:
    """Channels to REMOVE from the target block; the survivors are the complement."""

    indices: tuple
    n_channels: int

    def __init__(self, indices: Sequence[int], n_channels: int):
        idx = tuple(int(i) for i in indices)
        if len(set(idx)) != len(idx):
            raise IndexError(f"duplicate prune indices in {idx}")
        for i in idx:
            if not 0 <= i < n_channels:
                raise IndexError(f"prune index {i} out of range for {n_channels} channels")
        object.__setattr__(self, "indices", tuple(sorted(idx)))
        object.__setattr__(self, "n_channels", int(n_channels))

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __contains__(self, i):
        return i in self.indices

    @property
    def mask(self) -> np.ndarray:
        m = np.zeros(self.n_channels, dtype=bool)
        m[list(self.indices)] = True
        return m

    @property
    def kept(self) -> np.ndarray:
        return np.flatnonzero(~self.mask)


@dataclass
class Model:
    """``pre`` dense layers (each followed by sigma) -> target block -> ``post`` layers.

    The block output is a pre-activation, so every ``post`` layer is fed
    ``sigma`` of the previous output.  The last layer's output are logits.
    """

    sub: Submodule
    pre: List[Dense] = field(default_factory=list)
    post: List[Dense] = field(default_factory=list)

    def __post_init__(self):
        dims = []
        for layer in self.pre:
            dims.append((layer.n_in, layer.n_out))
        dims.append((self.sub.n_in, self.sub.n_out))
        for layer in self.post:
            dims.append((layer.n_in, layer.n_out))
        for (_, out), (nxt, _) in zip(dims[:-1], dims[1:]):
            if out != nxt:
                raise ShapeError(f"layer dims do not chain: {dims}")

    @property
    def sigma(self) -> Activation:
        return self.sub.sigma

    @property
    def n_in(self) -> int:
        return self.pre[0].n_in if self.pre else self.sub.n_in

    @property
    def n_out(self) -> int:
        return self.post[-1].n_out if self.post else self.sub.n_out

    @property
    def extended(self) -> bool:
        return hasattr(self.sub, "D")

    def params(self) -> Dict[str, np.ndarray]:
        """Named parameter arrays (live references, not copies)."""
        out = {}
        for k, layer in enumerate(self.pre):
            out[f"pre.{k}.W"] = layer.W
            out[f"pre.{k}.b"] = layer.b
        s = self.sub
        out["sub.W"] = s.W
        out["sub.b_W"] = s.b_W
        out["sub.A"] = s.A
        out["sub.b_A"] = s.b_A
        if self.extended:
            out["sub.D"] = s.D
            out["sub.Dbar"] = s.Dbar
        for k, layer in enumerate(self.post):
            out[f"post.{k}.W"] = layer.W
            out[f"post.{k}.b"] = layer.b
        return out

    def assign(self, params: Mapping[str, np.ndarray]) -> None:
        for name, value in params.items():
            target = self.params()[name]
            if target.shape != np.shape(value):
                raise ShapeError(f"{name}: shape {np.shape(value)} != {target.shape}")
            target[...] = value

    def copy(self) -> "Model":
        return Model(self.sub.copy(), [l.copy() for l in self.pre], [l.copy() for l in self.post])

    def forward(self, x):
        return _forward(self, np.asarray(x, dtype=np.float64))[0]

    def predict(self, x):
        return np.argmax(self.forward(x), axis=-1)


def param_group(name: str) -> str:
    """``"D"`` for catalyst diagonals, ``"theta"`` for everything else."""
    return "D" if name in ("sub.D", "sub.Dbar") else "theta"


def _forward(model: Model, x):
    sig = model.sigma
    cache = {"pre": []}
    h = x
    if h.shape[-1] != model.n_in:
        raise ShapeError(f"input dim {h.shape[-1]} != model input {model.n_in}")
    for layer in model.pre:
        z = h @ layer.W.T + layer.b
        cache["pre"].append((h, z))
        h = activate(z, sig)
    s = model.sub
    u = h @ s.W.T + s.b_W
    a = s.hidden(u)
    out = a @ s.A.T + s.b_A
    cache["sub"] = (h, u, a)
    cache["post"] = []
    for layer in model.post:
        hin = activate(out, sig)
        cache["post"].append((out, hin))
        out = hin @ layer.W.T + layer.b
    return out, cache


def softmax_cross_entropy(logits, labels):
    """Mean loss and d(loss)/d(logits)."""
    labels = np.asarray(labels, dtype=np.int64)
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1))
    logp = shifted - logz[:, None]
    loss = -logp[np.arange(n), labels].mean()
    g = np.exp(logp)
    g[np.arange(n), labels] -= 1.0
    return loss, g / n


def evaluate(model: Model, X, y):
    """(mean cross-entropy, accuracy in percent) on a labelled set."""
    logits = model.forward(X)
    loss, _ = softmax_cross_entropy(logits, y)
    acc = 100.0 * float(np.mean(np.argmax(logits, axis=1) == np.asarray(y)))
    return float(loss), acc


def model_forward_backward(model: Model, batch, step: Optional[int] = None):
    """Mean softmax cross-entropy over ``batch = (inputs, labels)`` and exact
    gradients for every parameter returned by ``model.params()``."""
    X, y = batch
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    logits, cache = _forward(model, X)
    loss, g = softmax_cross_entropy(logits, y)
    if not np.isfinite(loss):
        raise NumericalError(f"non-finite loss {loss}", step)

    sig = model.sigma
    grads = {}
    for k in reversed(range(len(model.post))):
        layer = model.post[k]
        out_prev, hin = cache["post"][k]
        grads[f"post.{k}.W"] = g.T @ hin
        grads[f"post.{k}.b"] = g.sum(axis=0)
        g = (g @ layer.W) * activate_grad(out_prev, sig)

    s = model.sub
    h, u, a = cache["sub"]
    grads["sub.A"] = g.T @ a
    grads["sub.b_A"] = g.sum(axis=0)
    g_a = g @ s.A
    if model.extended:
        g_scale = (g_a * u).sum(axis=0)
        grads["sub.D"] = g_scale
        grads["sub.Dbar"] = -g_scale
    g_u = g_a * s.hidden_grad(u)
    grads["sub.W"] = g_u.T @ h
    grads["sub.b_W"] = g_u.sum(axis=0)
    g = g_u @ s.W

    for k in reversed(range(len(model.pre))):
        layer = model.pre[k]
        hin, z = cache["pre"][k]
        g = g * activate_grad(z, sig)
        grads[f"pre.{k}.W"] = g.T @ hin
        grads[f"pre.{k}.b"] = g.sum(axis=0)
        g = g @ layer.W

    return float(loss), {name: grads[name] for name in model.params()}


def sgd_step(params, grads, lr, decay=0.0, momentum=0.0, buffers=None):
    """One SGD update ``p <- p - lr (g + decay p)``; returns new arrays.

    ``decay`` is a scalar or a mapping from parameter name to its decay.
    With ``momentum > 0`` the torch convention is used and ``buffers`` (a dict)
    is updated in place.
    """
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    new = {}
    for name, p in params.items():
        wd = decay[name] if isinstance(decay, Mapping) else decay
        if wd < 0:
            raise ValueError(f"negative weight decay for {name}")
        d = grads[name] + wd * p if wd else np.asarray(grads[name], dtype=np.float64)
        if momentum:
            if buffers is None:
                raise ValueError("momentum needs a buffers dict")
            buf = buffers.get(name)
            buf = d.copy() if buf is None else momentum * buf + d
            buffers[name] = buf
            d = buf
        new[name] = p - lr * d
    return new


def init_mlp(widths: Sequence[int], target: int = 0, sigma=Activation.RELU, rng=None) -> Model:
    """He-initialised MLP with layer widths ``widths`` (input .. classes).

    ``target`` picks which hidden layer's channels form the prunable block:
    the block's ``W`` maps into hidden layer ``target`` and its ``A`` maps out.
    """
    rng = np.random.default_rng(rng)
    widths = list(widths)
    n_hidden = len(widths) - 2
    if n_hidden < 1:
        raise ShapeError("need at least one hidden layer")
    if not 0 <= target < n_hidden:
        raise ShapeError(f"target {target} out of range for {n_hidden} hidden layers")
    layers = []
    for n_in, n_out in zip(widths[:-1], widths[1:]):
        W = rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_out, n_in))
        layers.append(Dense(W, np.zeros(n_out)))
    first, second = layers[target], layers[target + 1]
    sub = Submodule(first.W, first.b, second.W, second.b, sigma)
    return Model(sub, pre=layers[:target], post=layers[target + 2:])
