"""Person representations, ordered sub-group pooling and its gradient.

People in a frame are first put in a canonical order (top-left bounding-box
corner, x first). The ordered list is cut into ``d`` contiguous sub-groups,
each sub-group is pooled elementwise (max or mean) and the pooled vectors are
concatenated in group order. With ``d == 1`` this is plain pooling over every
person.

The list-based functions mirror the math on individual vectors; the
``*_batched`` functions do the same work on ``(T, B, K, D)`` arrays and are
what the models use.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .numcore import DTYPE, DomainError, ShapeError

STRATEGIES = ("max", "average")


@dataclass(frozen=True)
class GroupBounds:
    """1-based inclusive person positions ``start..end`` of one sub-group."""

    start: int
    end: int

    def __len__(self):
        return self.end - self.start + 1


@dataclass(frozen=True)
class PoolingConfig:
    strategy: str = "max"
    d: int = 1

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise DomainError(f"pooling strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if int(self.d) < 1:
            raise DomainError(f"sub-group count must be >= 1, got {self.d}")


def concat_person(x_tk, h_tk):
    return np.concatenate([np.asarray(x_tk, dtype=DTYPE), np.asarray(h_tk, dtype=DTYPE)])


def subgroup_bounds(k, d, m):
    """Bounds of the ``m``-th of ``d`` sub-groups over ``k`` ordered people.

    When ``d`` divides ``k`` this is ``start = (m-1)k/d + 1``, ``end = mk/d``.
    Otherwise every group holds ``ceil(k/d)`` people except the trailing ones,
    which take what is left.
    """
    k, d, m = int(k), int(d), int(m)
    if not 1 <= d <= k:
        raise DomainError(f"need 1 <= d <= k, got d={d}, k={k}")
    if not 1 <= m <= d:
        raise DomainError(f"group index m={m} outside 1..{d}")
    if k % d == 0:
        return GroupBounds((m - 1) * k // d + 1, m * k // d)
    size = -(-k // d)
    # ceil-sized groups can exhaust k before d groups exist (e.g. k=5, d=4);
    # the sizes then shrink so that every group keeps at least one person.
    sizes = _remainder_sizes(k, d, size)
    start = 1 + sum(sizes[: m - 1])
    return GroupBounds(start, start + sizes[m - 1] - 1)


@lru_cache(maxsize=None)
def _remainder_sizes(k, d, size):
    sizes = []
    left = k
    for j in range(d):
        groups_after = d - j - 1
        s = min(size, left - groups_after)
        sizes.append(s)
        left -= s
    return tuple(sizes)


def all_bounds(k, d):
    return [subgroup_bounds(k, d, m) for m in range(1, d + 1)]


def pool_group(reprs, bounds, strategy="max"):
    """Elementwise max or mean of ``reprs[start-1:end]``."""
    chunk = list(reprs)[bounds.start - 1:bounds.end]
    if not chunk:
        raise DomainError(f"sub-group {bounds} selects no people")
    stack = np.stack([np.asarray(r, dtype=DTYPE) for r in chunk])
    if strategy == "max":
        return stack.max(axis=0)
    if strategy == "average":
        return stack.mean(axis=0)
    raise DomainError(f"unknown pooling strategy {strategy!r}")


def scene_repr(reprs, cfg):
    """Concatenate the ``cfg.d`` pooled sub-group vectors of ordered ``reprs``."""
    reprs = list(reprs)
    if len(reprs) < cfg.d:
        raise DomainError(f"{len(reprs)} people cannot fill {cfg.d} sub-groups")
    return np.concatenate([pool_group(reprs, b, cfg.strategy) for b in all_bounds(len(reprs), cfg.d)])


def order_people(people):
    """Indices of ``people`` (``(x, y)`` or ``(x, y, idx)`` keys) sorted by x, y, then input order."""
    keyed = [(float(p[0]), float(p[1]), p[2] if len(p) > 2 else j, j) for j, p in enumerate(people)]
    return [j for *_, j in sorted(keyed)]


def pool_backward(strategy, inputs, upstream_grad):
    """Gradient of pooling w.r.t. each input vector.

    Max routes each coordinate to its first arg-max input; average splits
    the gradient evenly.
    """
    stack = np.stack([np.asarray(v, dtype=DTYPE) for v in inputs])
    g = np.asarray(upstream_grad, dtype=DTYPE)
    if g.shape != stack.shape[1:]:
        raise ShapeError(f"upstream grad shape {g.shape} != pooled shape {stack.shape[1:]}")
    out = np.zeros_like(stack)
    if strategy == "max":
        winner = stack.argmax(axis=0)
        np.put_along_axis(out, winner[None], g[None], axis=0)
    elif strategy == "average":
        out[:] = g / len(stack)
    else:
        raise DomainError(f"unknown pooling strategy {strategy!r}")
    return list(out)


# ---------------------------------------------------------------------------
# batched form: arrays laid out (T, B, K, D) in original person order


def frame_order(bbox, present):
    """Per-frame canonical ordering.

    ``bbox`` is ``(T, B, K, 2)`` and ``present`` ``(T, B, K)``. Returns
    ``order`` ``(T, B, K)``, a permutation of person slots per frame with
    present people first in canonical order, and ``counts`` ``(T, B)``.
    """
    T, B, K = present.shape
    x = np.where(present, bbox[..., 0], np.inf)
    y = np.where(present, bbox[..., 1], np.inf)
    idx = np.broadcast_to(np.arange(K), (T, B, K))
    # lexsort: last key is primary
    order = np.lexsort((idx, y, x), axis=-1)
    counts = present.sum(axis=-1)
    return order, counts


@lru_cache(maxsize=4096)
def _group_index_row(k, d, K):
    row = np.full(K, -1, dtype=np.int64)
    for m, b in enumerate(all_bounds(k, d)):
        row[b.start - 1:b.end] = m
    row.flags.writeable = False
    return row


def group_index(counts, d, K):
    """Sub-group id of every ordered slot, ``-1`` for empty slots."""
    if np.any(counts < d):
        raise DomainError(f"a frame has {int(counts.min())} people, fewer than d={d} sub-groups")
    out = np.empty(counts.shape + (K,), dtype=np.int64)
    for pos in np.ndindex(counts.shape):
        out[pos] = _group_index_row(int(counts[pos]), d, K)
    return out


@dataclass
class PoolCache:
    order: np.ndarray
    groups: np.ndarray
    winners: np.ndarray  # (T, B, d, D) slot index of the max, or None for average
    sizes: np.ndarray  # (T, B, d)
    strategy: str


def pool_batched(P, order, groups, d, strategy):
    """Pool ``P`` ``(T, B, K, D)`` into ``Z`` ``(T, B, d*D)``."""
    Ps = np.take_along_axis(P, order[..., None], axis=2)
    T, B, K, D = Ps.shape
    Z = np.empty((T, B, d, D))
    sizes = np.empty((T, B, d))
    winners = np.empty((T, B, d, D), dtype=np.int64) if strategy == "max" else None
    for m in range(d):
        mask = (groups == m)[..., None]
        sizes[:, :, m] = mask[..., 0].sum(axis=-1)
        if strategy == "max":
            masked = np.where(mask, Ps, -np.inf)
            w = masked.argmax(axis=2)
            winners[:, :, m] = w
            Z[:, :, m] = np.take_along_axis(Ps, w[:, :, None, :], axis=2)[:, :, 0]
        elif strategy == "average":
            Z[:, :, m] = np.where(mask, Ps, 0.0).sum(axis=2) / sizes[:, :, m, None]
        else:
            raise DomainError(f"unknown pooling strategy {strategy!r}")
    return Z.reshape(T, B, d * D), PoolCache(order, groups, winners, sizes, strategy)


def pool_batched_backward(dZ, cache, K):
    """Gradient of :func:`pool_batched` w.r.t. ``P`` in original slot order."""
    T, B = dZ.shape[:2]
    d = cache.sizes.shape[-1]
    D = dZ.shape[-1] // d
    dZ = dZ.reshape(T, B, d, D)
    dPs = np.zeros((T, B, K, D))
    for m in range(d):
        if cache.strategy == "max":
            np.put_along_axis(dPs, cache.winners[:, :, m][:, :, None, :], dZ[:, :, m][:, :, None, :], axis=2)
        else:
            mask = (cache.groups == m)[..., None]
            dPs += np.where(mask, (dZ[:, :, m] / cache.sizes[:, :, m, None])[:, :, None, :], 0.0)
    dP = np.zeros_like(dPs)
    np.put_along_axis(dP, cache.order[..., None], dPs, axis=2)
    return dP
