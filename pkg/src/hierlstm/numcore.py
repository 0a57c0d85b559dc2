"""Dense float64 primitives shared by every layer.

Vectors and matrices are plain ``numpy.ndarray`` objects of dtype float64.
Randomness always flows through :func:`make_rng`, which wraps numpy's PCG64
bit generator (stable output for a given seed across platforms and numpy
releases).
"""

import numpy as np

DTYPE = np.float64


class ShapeError(ValueError):
    """Raised when operand dimensions are inconsistent."""


class DomainError(ValueError):
    """Raised when an argument lies outside an operation's domain."""


def make_rng(seed):
    """Return a PCG64-backed generator for a 64-bit unsigned ``seed``."""
    seed = int(seed)
    if seed < 0 or seed >= 2**64:
        raise DomainError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.PCG64(seed))


def child_rng(seed, *keys):
    """Independent sub-stream derived from ``seed`` and integer ``keys``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


# Largest double below 1; saturated activations are pinned here so that gate
# and hidden values stay strictly inside their open ranges.
_BELOW_ONE = 1.0 - 2.0**-53
_TINY = np.finfo(DTYPE).tiny


def sigmoid(x):
    """Logistic function, overflow-free for any finite input.

    Output is clamped to ``[tiny, 1 - 2**-53]`` so it never touches 0 or 1.
    """
    x = np.asarray(x, dtype=DTYPE)
    z = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    np.clip(out, _TINY, _BELOW_ONE, out=out)
    if out.ndim == 0:
        return float(out)
    return out


def tanh_act(x):
    out = np.asarray(np.tanh(np.asarray(x, dtype=DTYPE)))
    np.clip(out, -_BELOW_ONE, _BELOW_ONE, out=out)
    if out.ndim == 0:
        return float(out)
    return out


def matvec(M, v):
    M = np.asarray(M, dtype=DTYPE)
    v = np.asarray(v, dtype=DTYPE)
    if M.ndim != 2 or v.ndim != 1:
        raise ShapeError(f"matvec expects a matrix and a vector, got ndim {M.ndim} and {v.ndim}")
    if M.shape[1] != v.shape[0]:
        raise ShapeError(f"matvec: matrix has {M.shape[1]} columns but vector has dim {v.shape[0]}")
    return M @ v


def default_scale(rows, cols):
    return float(np.sqrt(6.0 / (rows + cols)))


def init_uniform(rows, cols, rng, scale=None):
    """Matrix with i.i.d. entries uniform on ``[-scale, scale]``.

    ``scale`` defaults to ``sqrt(6 / (rows + cols))``.
    """
    if rows <= 0 or cols <= 0:
        raise ShapeError(f"matrix dims must be positive, got ({rows}, {cols})")
    if scale is None:
        scale = default_scale(rows, cols)
    if not scale > 0:
        raise DomainError(f"init scale must be > 0, got {scale}")
    return rng.uniform(-scale, scale, size=(rows, cols)).astype(DTYPE, copy=False)


def check_finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"{name} contains non-finite values")
    return arr
