import numpy as np
import pytest

from hierlstm.hierarchy import ModelConfig, build_model, fit, train_stage1
from hierlstm.numcore import ShapeError
from hierlstm.scenegen import TaskSpec, generate_dataset
from hierlstm.trainer import (
    VIDEO_LEARNING_RATE, TrainHyper, TrainingError, clip_by_global_norm, global_norm, run_epochs,
    sgd_momentum_step, zero_velocity,
)


def test_plain_sgd_when_momentum_is_zero(rng):
    p = {"w": rng.standard_normal((3, 2))}
    g = {"w": rng.standard_normal((3, 2))}
    want = p["w"] - 0.1 * g["w"]
    sgd_momentum_step(p, g, zero_velocity(p), 0.1, 0.0)
    assert np.array_equal(p["w"], want)


def test_zero_gradient_is_fixed_point(rng):
    p = {"w": rng.standard_normal(4)}
    before = p["w"].copy()
    sgd_momentum_step(p, {"w": np.zeros(4)}, zero_velocity(p), 0.5, 0.9)
    assert np.array_equal(p["w"], before)


def test_two_step_momentum_unroll(rng):
    p0 = rng.standard_normal(5)
    g = rng.standard_normal(5)
    p = {"w": p0.copy()}
    vel = zero_velocity(p)
    for _ in range(2):
        sgd_momentum_step(p, {"w": g}, vel, 1.0, 0.9)
    assert np.array_equal(p["w"], (p0 + (-g)) + (0.9 * -g - g))
    np.testing.assert_allclose(p["w"] - p0, -(1 + 1.9) * g, atol=1e-15)


def test_step_shape_mismatch():
    p = {"w": np.zeros(3)}
    with pytest.raises(ShapeError):
        sgd_momentum_step(p, {"w": np.zeros(4)}, zero_velocity(p), 0.1, 0.9)


def test_clipping(rng):
    g = {"a": rng.standard_normal(3), "b": rng.standard_normal((2, 2))}
    n = global_norm(g)
    same = {k: v.copy() for k, v in g.items()}
    clip_by_global_norm(same, n * 2)
    for k in g:
        assert np.array_equal(same[k], g[k])
    clip_by_global_norm(g, n / 4)
    assert global_norm(g) == pytest.approx(n / 4)
    assert global_norm(g) <= n


def test_hyper_validation():
    with pytest.raises(ValueError):
        TrainHyper(momentum=1.0)
    with pytest.raises(ValueError):
        TrainHyper(batch_size=0)
    with pytest.raises(ValueError):
        TrainHyper(clip_norm=0.0)
    assert TrainHyper.video().learning_rate == VIDEO_LEARNING_RATE


def quadratic_problem():
    target = np.array([1.0, -2.0])
    params = {"w": np.zeros(2)}

    def loss_and_grad(batch):
        diff = params["w"] - target
        return float(diff @ diff), {"w": 2 * diff}, len(batch), len(batch)

    return params, loss_and_grad


def test_run_epochs_converges_and_logs():
    params, lg = quadratic_problem()
    log = run_epochs(params, lg, range(4), TrainHyper(learning_rate=0.05, batch_size=2, max_epochs=60))
    assert len(log) == 60 and log.records[0].phase == "train"
    np.testing.assert_allclose(params["w"], [1.0, -2.0], atol=1e-2)
    tsv = log.to_tsv().splitlines()
    assert tsv[0] == "epoch\tphase\tloss\taccuracy" and len(tsv) == 61


def test_zero_epochs_leave_params_untouched():
    params, lg = quadratic_problem()
    log = run_epochs(params, lg, range(3), TrainHyper(max_epochs=0))
    assert len(log) == 0 and np.array_equal(params["w"], np.zeros(2))
    with pytest.raises(TrainingError):
        run_epochs(params, lg, [], TrainHyper())


def test_non_finite_loss_names_epoch_and_batch():
    calls = []

    def lg(batch):
        calls.append(1)
        loss = np.nan if len(calls) == 5 else 1.0
        return loss, {"w": np.zeros(1)}, 0, 1

    with pytest.raises(TrainingError, match="epoch 3, batch 0"):
        run_epochs({"w": np.zeros(1)}, lg, range(4), TrainHyper(batch_size=2, max_epochs=5))


def test_early_stop_on_flat_loss():
    log = run_epochs({"w": np.zeros(1)}, lambda b: (1.0, {"w": np.zeros(1)}, 0, 1), range(2),
                     TrainHyper(max_epochs=50, early_stop=(3, 0.0)))
    assert len(log) == 4


def tiny_task():
    spec = TaskSpec(rule="majority", num_actions=3, num_activities=3, persons_per_scene=(3, 3), timesteps=6,
                    obs_dim=6, num_modes=2, noise_sigma=0.05)
    return spec, generate_dataset(spec, 8, 1)[0]


def tiny_config(spec, **kw):
    return ModelConfig(obs_dim=spec.obs_dim, num_actions=spec.num_actions, num_activities=spec.num_activities,
                       stage1_timesteps=6, stage2_timesteps=6, max_persons=3, **kw)


def test_zero_learning_rate_keeps_model_bitwise():
    spec, scenes = tiny_task()
    model = build_model(tiny_config(spec), 0)
    before = {k: v.copy() for k, v in model.params().items()}
    h = TrainHyper(learning_rate=0.0, max_epochs=3)
    fit(model, scenes, h, h)
    for k, v in model.params().items():
        assert np.array_equal(v, before[k]), k


def test_single_scene_descent():
    spec, scenes = tiny_task()
    model = build_model(tiny_config(spec), 1)
    _, log = train_stage1(model, scenes[:1], TrainHyper(learning_rate=1e-3, batch_size=1, max_epochs=50))
    losses = np.array(log.losses)
    assert int((np.diff(losses) > 0).sum()) <= 2
    assert losses[-1] < losses[0]


def test_training_is_deterministic():
    spec, scenes = tiny_task()
    runs = []
    for _ in range(2):
        model = build_model(tiny_config(spec), 3)
        h = TrainHyper(learning_rate=0.05, batch_size=3, max_epochs=5, shuffle_seed=11)
        _, log = fit(model, scenes, h, h)
        runs.append((log.to_tsv(), model.to_bytes()))
    assert runs[0] == runs[1]
