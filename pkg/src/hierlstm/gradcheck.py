"""Central finite-difference checks of every hand-written backward pass."""

from dataclasses import dataclass

import numpy as np

from .hierarchy import (
    ModelConfig, build_model, lower_backward, lower_forward, make_batch, prepare,
    stage1_loss_and_grad, upper_loss_and_grad,
)
from .lstm import LstmParams, SoftmaxHead, bptt, lstm_forward
from .numcore import child_rng
from .pooling import GroupBounds, PoolingConfig, pool_backward, pool_group
from .scenegen import Scene, Tracklet

EPS = 1e-5
TOL = 1e-4
FLOOR = 1e-6

GROUPS = ("lstm.Wx", "lstm.Wh", "lstm.b", "lstm.input", "head", "pool.max", "pool.average",
          "fc", "stage2", "stage1", "joint")


def rel_error(analytic, numeric):
    """Largest coordinatewise ``|a - n| / max(|a|, |n|, 1e-6)``."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), FLOOR)))


def numeric_grad(f, arr, eps=EPS):
    """Central differences of scalar ``f()`` w.r.t. every entry of ``arr`` (perturbed in place)."""
    g = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = g.reshape(-1)
    for j in range(flat.size):
        old = flat[j]
        flat[j] = old + eps
        fp = f()
        flat[j] = old - eps
        fm = f()
        flat[j] = old
        gflat[j] = (fp - fm) / (2 * eps)
    return g


def _pairs(f, params, grads, keys):
    return [(grads[k], numeric_grad(f, params[k])) for k in keys]


def check_lstm(rng, T=3, D=3, H=4, C=3):
    """bptt vs finite differences on one sequence.

    Returns ``group -> [(analytic, numeric), ...]``.
    """
    p = LstmParams.init(D, H, rng)
    for v in p.arrays().values():
        v += rng.uniform(-0.5, 0.5, size=v.shape)
    head = SoftmaxHead(rng.uniform(-1, 1, (C, H)), rng.uniform(-0.5, 0.5, C))
    xs = rng.standard_normal((T, D))
    labels = rng.integers(0, C, size=T)

    def loss():
        return bptt(p, head, lstm_forward(p, xs), labels).loss

    res = bptt(p, head, lstm_forward(p, xs), labels)
    params = p.arrays()
    return {
        "lstm.Wx": _pairs(loss, params, res.lstm_grads, [k for k in params if k.startswith("Wx")]),
        "lstm.Wh": _pairs(loss, params, res.lstm_grads, [k for k in params if k.startswith("Wh")]),
        "lstm.b": _pairs(loss, params, res.lstm_grads, [k for k in params if k.startswith("b")]),
        "lstm.input": [(res.dxs, numeric_grad(loss, xs))],
        "head": _pairs(loss, head.arrays(), res.head_grads, ["W", "b"]),
    }


def check_pool(rng, strategy, k=5, D=4):
    """pool_backward vs finite differences of ``<w, pool(inputs)>``."""
    inputs = [rng.standard_normal(D) for _ in range(k)]
    w = rng.standard_normal(D)
    bounds = GroupBounds(1, k)

    def loss():
        return float(w @ pool_group(inputs, bounds, strategy))

    analytic = pool_backward(strategy, inputs, w)
    return [(a, numeric_grad(loss, x)) for a, x in zip(analytic, inputs)]


def tiny_model_and_batch(rng, variant="Full", d=2, freeze=True):
    """A 4-person, 3-frame, 4-dim problem (2 people per sub-group when d=2)."""
    T, K, O = 3, 4, 4
    cfg = ModelConfig(obs_dim=O, num_actions=3, num_activities=3, variant=variant, feature_dim=4,
                      encoder_hidden=4, stage1_hidden=4, stage1_timesteps=2, stage2_hidden=4,
                      stage2_timesteps=3, fc_dim=4, pooling=PoolingConfig("max", d), max_persons=K,
                      freeze_stage1=freeze)
    model = build_model(cfg, int(rng.integers(0, 2**32)))
    for v in model.params().values():
        v += rng.uniform(-0.3, 0.3, size=v.shape)
    persons = [Tracklet(rng.standard_normal((T, O)), rng.integers(0, 3, size=T),
                        np.tile(rng.uniform(0, 1, 2), (T, 1))) for _ in range(K)]
    scene = Scene(persons, rng.integers(0, 3, size=T))
    return model, make_batch([prepare(scene)])


def check_model(rng):
    model, batch = tiny_model_and_batch(rng)
    out = {}
    # stage 2 on frozen pooling inputs
    Z, _ = lower_forward(model, batch)

    def upper_loss():
        return upper_loss_and_grad(model, Z, batch.group)[0]

    _, grads, _, _, _ = upper_loss_and_grad(model, Z, batch.group)
    params = model.params(["fc", "lstm2", "head2"])
    keys = list(params)
    pairs = _pairs(upper_loss, params, grads, keys)
    out["fc"] = [pr for k, pr in zip(keys, pairs) if k.startswith("fc.")]
    out["stage2"] = pairs

    # stage 1: encoder -> person LSTM -> person head
    def s1_loss():
        return stage1_loss_and_grad(model, batch)[0]

    _, g1, _, _ = stage1_loss_and_grad(model, batch)
    p1 = model.params(["encoder", "lstm1", "head1"])
    out["stage1"] = _pairs(s1_loss, p1, g1, list(p1))

    # scene loss back through pooling into the person LSTM and encoder
    def joint_loss():
        Z, _ = lower_forward(model, batch)
        return upper_loss_and_grad(model, Z, batch.group)[0]

    Z, cache = lower_forward(model, batch)
    _, _, dZ, _, _ = upper_loss_and_grad(model, Z, batch.group)
    gl = lower_backward(model, dZ, cache, ["encoder", "lstm1"])
    pl = model.params(["encoder", "lstm1"])
    out["joint"] = _pairs(joint_loss, pl, gl, list(pl))
    return out


@dataclass
class GradcheckReport:
    errors: dict  # group -> max relative error over seeds
    tol: float = TOL

    @property
    def failures(self):
        return [g for g, e in self.errors.items() if not e < self.tol]

    @property
    def ok(self):
        return not self.failures

    def lines(self):
        return [f"{g:<14} max_rel_err={e:.3e}  {'PASS' if e < self.tol else 'FAIL'}"
                for g, e in self.errors.items()]


def run_gradcheck(seeds=20, base_seed=0, corrupt=None):
    """Run every suite for ``seeds`` seeds and keep the worst error per group.

    ``corrupt`` names a group whose analytic gradients are scaled by 1.01
    before comparison (negative control).
    """
    if corrupt is not None and corrupt not in GROUPS:
        raise KeyError(f"unknown gradcheck group {corrupt!r}")
    errors = {g: 0.0 for g in GROUPS}
    for s in range(seeds):
        rng = child_rng(base_seed, 7, s)
        res = check_lstm(rng)
        res["pool.max"] = check_pool(rng, "max")
        res["pool.average"] = check_pool(rng, "average")
        res.update(check_model(rng))
        for g, pairs in res.items():
            scale = 1.01 if g == corrupt else 1.0
            errors[g] = max([errors[g]] + [rel_error(a * scale, n) for a, n in pairs])
    return GradcheckReport(errors)
