"""scikit-learn style wrapper around the two-stage model.

``X`` is a list of :class:`~hierlstm.scenegen.Scene`; labels live inside
the scenes, so ``y`` is accepted only for API compatibility and ignored.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .hierarchy import ModelConfig, build_model, evaluate, fit, predict_many
from .pooling import PoolingConfig
from .scenegen import Scene
from .trainer import TrainHyper


def check_scenes(X):
    """Return ``X`` as a non-empty list of scenes sharing one frame count and obs width."""
    if isinstance(X, Scene):
        X = [X]
    X = list(X)
    if not X:
        raise ValueError("expected at least one scene")
    bad = [type(s).__name__ for s in X if not isinstance(s, Scene)]
    if bad:
        raise TypeError(f"expected Scene objects, got {bad[0]}")
    if len({s.obs_dim for s in X}) > 1:
        raise ValueError("scenes disagree on obs_dim")
    return X


class GroupActivityClassifier(ClassifierMixin, BaseEstimator):
    """Two-stage hierarchical LSTM for per-frame group activity labels.

    Parameters mirror :class:`~hierlstm.hierarchy.ModelConfig` and
    :class:`~hierlstm.trainer.TrainHyper`. ``num_actions`` and
    ``num_activities`` default to one more than the largest label seen in
    ``fit``.
    """

    def __init__(self, variant="Full", num_actions=None, num_activities=None, feature_dim=16,
                 encoder_hidden=32, stage1_hidden=16, stage1_timesteps=10, stage2_hidden=16,
                 stage2_timesteps=10, fc_dim=16, pooling="max", subgroups=1, max_persons=None,
                 freeze_stage1=True, stage2_loss="all", learning_rate=0.05, momentum=0.9,
                 batch_size=16, stage1_epochs=40, stage2_epochs=40, clip_norm=None, random_state=0):
        self.variant = variant
        self.num_actions = num_actions
        self.num_activities = num_activities
        self.feature_dim = feature_dim
        self.encoder_hidden = encoder_hidden
        self.stage1_hidden = stage1_hidden
        self.stage1_timesteps = stage1_timesteps
        self.stage2_hidden = stage2_hidden
        self.stage2_timesteps = stage2_timesteps
        self.fc_dim = fc_dim
        self.pooling = pooling
        self.subgroups = subgroups
        self.max_persons = max_persons
        self.freeze_stage1 = freeze_stage1
        self.stage2_loss = stage2_loss
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.batch_size = batch_size
        self.stage1_epochs = stage1_epochs
        self.stage2_epochs = stage2_epochs
        self.clip_norm = clip_norm
        self.random_state = random_state

    def _model_config(self, scenes):
        acts = max(int(s.actions().max()) for s in scenes) + 1
        grps = max(int(s.group_labels.max()) for s in scenes) + 1
        return ModelConfig(
            obs_dim=scenes[0].obs_dim,
            num_actions=self.num_actions or max(acts, 1),
            num_activities=self.num_activities or grps,
            variant=self.variant, feature_dim=self.feature_dim, encoder_hidden=self.encoder_hidden,
            stage1_hidden=self.stage1_hidden, stage1_timesteps=self.stage1_timesteps,
            stage2_hidden=self.stage2_hidden, stage2_timesteps=self.stage2_timesteps,
            fc_dim=self.fc_dim, pooling=PoolingConfig(self.pooling, self.subgroups),
            max_persons=self.max_persons or max(s.K for s in scenes),
            freeze_stage1=self.freeze_stage1, stage2_loss=self.stage2_loss)

    def _hyper(self, epochs, offset):
        seed = int(self.random_state)
        return TrainHyper(learning_rate=self.learning_rate, momentum=self.momentum,
                          batch_size=self.batch_size, max_epochs=epochs, clip_norm=self.clip_norm,
                          shuffle_seed=seed + offset)

    def fit(self, X, y=None):
        scenes = check_scenes(X)
        cfg = self._model_config(scenes)
        model = build_model(cfg, int(self.random_state))
        self.model_, self.log_ = fit(model, scenes, self._hyper(self.stage1_epochs, 1),
                                     self._hyper(self.stage2_epochs, 2))
        self.classes_ = np.arange(cfg.num_activities)
        self.n_features_in_ = cfg.obs_dim
        return self

    def predict(self, X):
        """Clip-level label per scene (arg-max of the mean frame distribution)."""
        check_is_fitted(self, "model_")
        return np.array([p.group_label for p in predict_many(self.model_, check_scenes(X))])

    def predict_proba(self, X):
        """Mean per-frame activity distribution per scene, shape ``(n, C)``."""
        check_is_fitted(self, "model_")
        return np.stack([p.group_probs.mean(axis=0) for p in predict_many(self.model_, check_scenes(X))])

    def predict_frames(self, X):
        check_is_fitted(self, "model_")
        return [p.group_probs.argmax(axis=-1) for p in predict_many(self.model_, check_scenes(X))]

    def predict_actions(self, X):
        """Per-person action labels ``(T, K)`` per scene (-1 where absent), or ``None`` per scene
        for variants without a person head."""
        check_is_fitted(self, "model_")
        return [p.person_actions for p in predict_many(self.model_, check_scenes(X))]

    def score(self, X, y=None, sample_weight=None, mode="frame"):
        check_is_fitted(self, "model_")
        return evaluate(self.model_, check_scenes(X), mode).accuracy
