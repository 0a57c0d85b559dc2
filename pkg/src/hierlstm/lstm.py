"""LSTM cell, unrolling, softmax head and exact backpropagation through time.

All functions accept either a single sequence (``xs`` of shape ``(T, D)``)
or a batch of equal-length sequences (``(T, N, D)``); the arithmetic is the
same, numpy broadcasting handles the leading axes.
"""

from dataclasses import dataclass, fields

import numpy as np

from . import checkpoint
from .numcore import DTYPE, DomainError, ShapeError, init_uniform, sigmoid, tanh_act

GATES = ("i", "f", "o", "c")
CLAMP = 1e-12


@dataclass
class LstmParams:
    """Weights of one LSTM layer.

    ``Wx*`` are ``(hidden_dim, input_dim)``, ``Wh*`` are
    ``(hidden_dim, hidden_dim)`` and ``b*`` are ``(hidden_dim,)``. The ``c``
    suffix is the input modulation gate ``g``.
    """

    Wxi: np.ndarray
    Wxf: np.ndarray
    Wxo: np.ndarray
    Wxc: np.ndarray
    Whi: np.ndarray
    Whf: np.ndarray
    Who: np.ndarray
    Whc: np.ndarray
    bi: np.ndarray
    bf: np.ndarray
    bo: np.ndarray
    bc: np.ndarray

    def __post_init__(self):
        H, D = np.shape(self.Wxi)
        for g in GATES:
            if np.shape(getattr(self, "Wx" + g)) != (H, D):
                raise ShapeError(f"Wx{g} must be {(H, D)}, got {np.shape(getattr(self, 'Wx' + g))}")
            if np.shape(getattr(self, "Wh" + g)) != (H, H):
                raise ShapeError(f"Wh{g} must be {(H, H)}, got {np.shape(getattr(self, 'Wh' + g))}")
            if np.shape(getattr(self, "b" + g)) != (H,):
                raise ShapeError(f"b{g} must be {(H,)}, got {np.shape(getattr(self, 'b' + g))}")

    @property
    def input_dim(self):
        return self.Wxi.shape[1]

    @property
    def hidden_dim(self):
        return self.Wxi.shape[0]

    @classmethod
    def zeros(cls, input_dim, hidden_dim):
        H, D = hidden_dim, input_dim
        return cls(
            *[np.zeros((H, D)) for _ in GATES],
            *[np.zeros((H, H)) for _ in GATES],
            *[np.zeros(H) for _ in GATES],
        )

    @classmethod
    def init(cls, input_dim, hidden_dim, rng, forget_bias=1.0):
        """Scaled-uniform weights, zero biases except the forget gate."""
        H, D = hidden_dim, input_dim
        p = cls(
            *[init_uniform(H, D, rng) for _ in GATES],
            *[init_uniform(H, H, rng) for _ in GATES],
            *[np.zeros(H) for _ in GATES],
        )
        p.bf[:] = forget_bias
        return p

    def arrays(self):
        """Name -> array mapping in the fixed field order (arrays are shared)."""
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def copy(self):
        return LstmParams(**{k: v.copy() for k, v in self.arrays().items()})


@dataclass
class LstmState:
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    g: np.ndarray
    c: np.ndarray
    h: np.ndarray


@dataclass
class LstmTape:
    """Everything the backward pass needs; gate arrays are ``(T, ..., H)``."""

    xs: np.ndarray
    h0: np.ndarray
    c0: np.ndarray
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    g: np.ndarray
    c: np.ndarray
    h: np.ndarray

    def __len__(self):
        return self.xs.shape[0]

    def state(self, t):
        return LstmState(self.i[t], self.f[t], self.o[t], self.g[t], self.c[t], self.h[t])


@dataclass
class SoftmaxHead:
    """Affine map followed by softmax; ``W`` is ``(num_classes, in_dim)``."""

    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        if np.ndim(self.W) != 2 or np.shape(self.b) != (np.shape(self.W)[0],):
            raise ShapeError(f"head W {np.shape(self.W)} and b {np.shape(self.b)} are inconsistent")

    @property
    def num_classes(self):
        return self.W.shape[0]

    @property
    def in_dim(self):
        return self.W.shape[1]

    @classmethod
    def init(cls, in_dim, num_classes, rng):
        return cls(init_uniform(num_classes, in_dim, rng), np.zeros(num_classes))

    def arrays(self):
        return {"W": self.W, "b": self.b}

    def copy(self):
        return SoftmaxHead(self.W.copy(), self.b.copy())

    def logits(self, v):
        v = np.asarray(v, dtype=DTYPE)
        if v.shape[-1] != self.in_dim:
            raise ShapeError(f"head expects input dim {self.in_dim}, got {v.shape[-1]}")
        return v @ self.W.T + self.b


def _check_dims(p, x, h_prev, c_prev):
    if x.shape[-1] != p.input_dim:
        raise ShapeError(f"x_t has dim {x.shape[-1]} but the cell expects {p.input_dim}")
    H = p.hidden_dim
    if h_prev.shape[-1] != H or c_prev.shape[-1] != H:
        raise ShapeError(f"h_prev/c_prev dims {h_prev.shape[-1]}/{c_prev.shape[-1]} != hidden {H}")


def lstm_step(p, x_t, h_prev, c_prev):
    x_t = np.asarray(x_t, dtype=DTYPE)
    h_prev = np.asarray(h_prev, dtype=DTYPE)
    c_prev = np.asarray(c_prev, dtype=DTYPE)
    _check_dims(p, x_t, h_prev, c_prev)
    i = sigmoid(x_t @ p.Wxi.T + h_prev @ p.Whi.T + p.bi)
    f = sigmoid(x_t @ p.Wxf.T + h_prev @ p.Whf.T + p.bf)
    o = sigmoid(x_t @ p.Wxo.T + h_prev @ p.Who.T + p.bo)
    g = tanh_act(x_t @ p.Wxc.T + h_prev @ p.Whc.T + p.bc)
    c = f * c_prev + i * g
    h = o * tanh_act(c)
    return LstmState(i, f, o, g, c, h)


def lstm_forward(p, xs, h0=None, c0=None):
    """Unroll the cell over ``xs``; ``h0``/``c0`` default to zeros."""
    xs = np.asarray(xs, dtype=DTYPE)
    if xs.ndim < 2 or xs.shape[0] == 0:
        raise DomainError("lstm_forward needs a non-empty sequence")
    state_shape = xs.shape[1:-1] + (p.hidden_dim,)
    h = np.zeros(state_shape) if h0 is None else np.asarray(h0, dtype=DTYPE)
    c = np.zeros(state_shape) if c0 is None else np.asarray(c0, dtype=DTYPE)
    h_init, c_init = h, c
    T = xs.shape[0]
    out = {k: np.empty((T,) + state_shape) for k in ("i", "f", "o", "g", "c", "h")}
    for t in range(T):
        s = lstm_step(p, xs[t], h, c)
        for k in out:
            out[k][t] = getattr(s, k)
        h, c = s.h, s.c
    if not np.all(np.abs(out["h"]) < 1.0):
        raise FloatingPointError("hidden state left the open interval (-1, 1)")
    return LstmTape(xs, h_init, c_init, **out)


def lstm_backward(p, tape, dh, dc_last=None):
    """Backpropagate upstream gradients ``dh`` (one per ``h_t``) through time.

    Returns ``(grads, dxs, dh0, dc0)`` with ``grads`` keyed like
    :meth:`LstmParams.arrays`.
    """
    T = len(tape)
    grads = {k: np.zeros_like(v) for k, v in p.arrays().items()}
    dxs = np.zeros_like(tape.xs)
    state_shape = tape.h.shape[1:]
    dh_next = np.zeros(state_shape)
    dc_next = np.zeros(state_shape) if dc_last is None else np.array(dc_last, dtype=DTYPE)
    flat = lambda a: a.reshape(-1, a.shape[-1])  # noqa: E731
    for t in range(T - 1, -1, -1):
        h_prev = tape.h[t - 1] if t > 0 else tape.h0
        c_prev = tape.c[t - 1] if t > 0 else tape.c0
        i, f, o, g, c = tape.i[t], tape.f[t], tape.o[t], tape.g[t], tape.c[t]
        tc = tanh_act(c)
        dh_t = dh[t] + dh_next
        dc = dc_next + dh_t * o * (1.0 - tc * tc)
        pre = {
            "i": dc * g * i * (1.0 - i),
            "f": dc * c_prev * f * (1.0 - f),
            "o": dh_t * tc * o * (1.0 - o),
            "c": dc * i * (1.0 - g * g),
        }
        x2 = flat(tape.xs[t])
        h2 = flat(np.broadcast_to(h_prev, state_shape))
        dx = 0.0
        dhp = 0.0
        for gate, a in pre.items():
            a2 = flat(a)
            grads["Wx" + gate] += a2.T @ x2
            grads["Wh" + gate] += a2.T @ h2
            grads["b" + gate] += a2.sum(axis=0)
            dx = dx + a @ getattr(p, "Wx" + gate)
            dhp = dhp + a @ getattr(p, "Wh" + gate)
        dxs[t] = dx
        dh_next = dhp
        dc_next = dc * f
    return grads, dxs, dh_next, dc_next


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_apply(head, v):
    return softmax(head.logits(v))


def cross_entropy(probs, label):
    probs = np.asarray(probs, dtype=DTYPE)
    label = int(label)
    if not 0 <= label < probs.shape[-1]:
        raise DomainError(f"label {label} out of range for {probs.shape[-1]} classes")
    return float(-np.log(max(probs[label], CLAMP)))


def softmax_loss(head, v, labels, weight=1.0):
    """Mean cross-entropy of ``head`` over every entry with ``labels >= 0``.

    Returns ``(loss, head_grads, dv, probs)``. Entries with a negative label
    are ignored (absent people, excluded timesteps).
    """
    labels = np.asarray(labels)
    probs = softmax(head.logits(v))
    if labels.shape != probs.shape[:-1]:
        raise ShapeError(f"labels shape {labels.shape} does not match outputs {probs.shape[:-1]}")
    C = probs.shape[-1]
    if np.any(labels >= C):
        raise DomainError(f"label out of range for {C} classes")
    valid = labels >= 0
    n = int(valid.sum())
    if n == 0:
        raise DomainError("no labelled entries to compute a loss over")
    safe = np.where(valid, labels, 0)
    picked = np.take_along_axis(probs, safe[..., None], axis=-1)[..., 0]
    loss = weight * float(-np.log(np.maximum(picked[valid], CLAMP)).sum()) / n
    dlogits = probs.copy()
    np.put_along_axis(dlogits, safe[..., None], np.take_along_axis(dlogits, safe[..., None], -1) - 1.0, -1)
    dlogits *= (valid * (weight / n))[..., None]
    v = np.asarray(v, dtype=DTYPE)
    d2 = dlogits.reshape(-1, C)
    head_grads = {"W": d2.T @ v.reshape(-1, v.shape[-1]), "b": d2.sum(axis=0)}
    dv = dlogits @ head.W
    return loss, head_grads, dv, probs


def loss_labels(labels, T, loss_timesteps):
    """Expand per-timestep labels to the mask used for ``all`` or ``last`` loss."""
    labels = np.asarray(labels)
    if loss_timesteps == "all":
        if labels.shape[0] != T:
            raise DomainError(f"mode 'all' needs {T} labels, got {labels.shape[0]}")
        return labels
    if loss_timesteps == "last":
        if labels.shape[0] not in (1, T):
            raise DomainError(f"mode 'last' needs 1 or {T} labels, got {labels.shape[0]}")
        out = np.full((T,) + labels.shape[1:], -1, dtype=np.int64)
        out[-1] = labels[-1]
        return out
    raise DomainError(f"unknown loss_timesteps {loss_timesteps!r}")


@dataclass
class BpttResult:
    loss: float
    lstm_grads: dict
    head_grads: dict
    dxs: np.ndarray
    probs: np.ndarray


def bptt(p, head, tape, labels, loss_timesteps="all", weight=1.0):
    """Gradients of the mean cross-entropy of ``head`` applied to every ``h_t``."""
    full = loss_labels(labels, len(tape), loss_timesteps)
    loss, head_grads, dh, probs = softmax_loss(head, tape.h, full, weight=weight)
    grads, dxs, _, _ = lstm_backward(p, tape, dh)
    return BpttResult(loss, grads, head_grads, dxs, probs)


def save_params(path, p):
    checkpoint.save(path, "lstm", {"input_dim": p.input_dim, "hidden_dim": p.hidden_dim}, p.arrays())


def load_params(path):
    _, arrays = checkpoint.load(path, kind="lstm")
    return LstmParams(**arrays)
