"""Feed-forward building blocks: the per-person feature encoder and the fc layer."""

from dataclasses import dataclass

import numpy as np

from .numcore import DTYPE, ShapeError, init_uniform


@dataclass
class Encoder:
    """Two-layer perceptron ``W2 @ tanh(W1 @ o + b1) + b2``.

    Stands in for a CNN feature extractor: maps a raw observation to the
    feature vector fed to the person LSTM and to pooling.
    """

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    @classmethod
    def init(cls, in_dim, hidden_dim, out_dim, rng):
        return cls(init_uniform(hidden_dim, in_dim, rng), np.zeros(hidden_dim),
                   init_uniform(out_dim, hidden_dim, rng), np.zeros(out_dim))

    @property
    def in_dim(self):
        return self.W1.shape[1]

    @property
    def out_dim(self):
        return self.W2.shape[0]

    def arrays(self):
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}

    def forward(self, obs):
        obs = np.asarray(obs, dtype=DTYPE)
        if obs.shape[-1] != self.in_dim:
            raise ShapeError(f"encoder expects input dim {self.in_dim}, got {obs.shape[-1]}")
        a = np.tanh(obs @ self.W1.T + self.b1)
        return a @ self.W2.T + self.b2, (obs, a)

    def backward(self, dout, cache):
        obs, a = cache
        d2 = dout.reshape(-1, dout.shape[-1])
        a2 = a.reshape(-1, a.shape[-1])
        da = (dout @ self.W2) * (1.0 - a * a)
        da2 = da.reshape(-1, da.shape[-1])
        grads = {
            "W1": da2.T @ obs.reshape(-1, obs.shape[-1]),
            "b1": da2.sum(axis=0),
            "W2": d2.T @ a2,
            "b2": d2.sum(axis=0),
        }
        return grads, da @ self.W1


@dataclass
class Dense:
    """Fully connected layer with a tanh nonlinearity."""

    W: np.ndarray
    b: np.ndarray

    @classmethod
    def init(cls, in_dim, out_dim, rng):
        return cls(init_uniform(out_dim, in_dim, rng), np.zeros(out_dim))

    @property
    def in_dim(self):
        return self.W.shape[1]

    @property
    def out_dim(self):
        return self.W.shape[0]

    def arrays(self):
        return {"W": self.W, "b": self.b}

    def forward(self, z):
        z = np.asarray(z, dtype=DTYPE)
        if z.shape[-1] != self.in_dim:
            raise ShapeError(f"fc expects input dim {self.in_dim}, got {z.shape[-1]}")
        u = np.tanh(z @ self.W.T + self.b)
        return u, (z, u)

    def backward(self, du, cache):
        z, u = cache
        da = du * (1.0 - u * u)
        da2 = da.reshape(-1, da.shape[-1])
        grads = {"W": da2.T @ z.reshape(-1, z.shape[-1]), "b": da2.sum(axis=0)}
        return grads, da @ self.W
