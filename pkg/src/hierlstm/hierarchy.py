"""Two-stage hierarchical model, its ablation variants, training and inference.

Stage 1 encodes every person's observations and runs a person LSTM over each
tracklet, trained on per-frame person actions. Stage 2 builds a person
representation ``x ⊕ h`` at every frame, pools it over (sub-groups of) people,
passes the pooled vector through a fully connected layer and a scene LSTM,
and classifies the group activity at every frame.

Variants (see :data:`VARIANTS`):

======  =====================================================================
Full    encoder + person LSTM, then pooling + fc + scene LSTM
B1      whole-frame encoder + softmax, per frame
B2      person encoder + pooling + softmax, trained on the scene loss only
B3      person encoder trained on actions, then pooling + softmax
B4      whole-frame encoder + scene LSTM
B5      person encoder + pooling + scene LSTM, trained on the scene loss only
B6      Full without the person LSTM (person representation is ``x`` alone)
B7      Full without the scene LSTM (fc output goes straight to the softmax)
======  =====================================================================

"Whole-frame" input for B1/B4 is the concatenation of every person's
observation in canonical order, zero padded to ``max_persons`` slots.
"""

from dataclasses import asdict, dataclass, field, replace
import enum

import numpy as np

from . import checkpoint
from .layers import Dense, Encoder
from .lstm import LstmParams, SoftmaxHead, loss_labels, lstm_backward, lstm_forward, softmax, softmax_loss
from .numcore import DomainError, make_rng
from .pooling import PoolingConfig, frame_order, group_index, pool_batched, pool_batched_backward
from .trainer import TrainHyper, TrainingLog, run_epochs


class ConfigError(ValueError):
    pass


class StateError(RuntimeError):
    pass


class DataError(ValueError):
    pass


class ModelVariant(str, enum.Enum):
    FULL = "Full"
    B1 = "B1"
    B2 = "B2"
    B3 = "B3"
    B4 = "B4"
    B5 = "B5"
    B6 = "B6"
    B7 = "B7"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class VariantLayout:
    person_encoder: bool
    scene_encoder: bool
    lstm1: bool
    person_head: str  # "h", "x" or "" for none
    fc: bool
    lstm2: bool

    @property
    def two_phase(self):
        return bool(self.person_head)


VARIANTS = {
    ModelVariant.FULL: VariantLayout(True, False, True, "h", True, True),
    ModelVariant.B1: VariantLayout(False, True, False, "", False, False),
    ModelVariant.B2: VariantLayout(True, False, False, "", False, False),
    ModelVariant.B3: VariantLayout(True, False, False, "x", False, False),
    ModelVariant.B4: VariantLayout(False, True, False, "", False, True),
    ModelVariant.B5: VariantLayout(True, False, False, "", False, True),
    ModelVariant.B6: VariantLayout(True, False, False, "x", True, True),
    ModelVariant.B7: VariantLayout(True, False, True, "h", True, False),
}

COMPONENTS = ("encoder", "lstm1", "head1", "fc", "lstm2", "head2")
STAGE1 = ("encoder", "lstm1", "head1")


@dataclass
class ModelConfig:
    obs_dim: int = 8
    num_actions: int = 4
    num_activities: int = 4
    variant: ModelVariant = ModelVariant.FULL
    feature_dim: int = 16
    encoder_hidden: int = 32
    stage1_hidden: int = 16
    stage1_timesteps: int = 10
    stage2_hidden: int = 16
    stage2_timesteps: int = 10
    fc_dim: int = 16
    pooling: PoolingConfig = field(default_factory=PoolingConfig)
    max_persons: int = 12
    freeze_stage1: bool = True
    stage2_loss: str = "all"
    forget_bias: float = 1.0

    def __post_init__(self):
        self.variant = ModelVariant(self.variant)
        if isinstance(self.pooling, dict):
            self.pooling = PoolingConfig(**self.pooling)
        self.validate()

    @property
    def layout(self):
        return VARIANTS[self.variant]

    @property
    def person_dim(self):
        """Width of a person representation ``P`` (``x ⊕ h`` or ``x``)."""
        return self.feature_dim + (self.stage1_hidden if self.layout.lstm1 else 0)

    @property
    def z_dim(self):
        """Width of the input to the scene-level layers."""
        if self.layout.scene_encoder:
            return self.feature_dim
        return self.pooling.d * self.person_dim

    def validate(self):
        lay = self.layout
        for name in ("obs_dim", "num_actions", "num_activities", "feature_dim", "encoder_hidden",
                     "stage1_timesteps", "stage2_timesteps", "max_persons"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if lay.lstm1 and self.stage1_hidden < 1:
            raise ConfigError(f"variant {self.variant} needs stage1_hidden >= 1")
        if lay.lstm2 and self.stage2_hidden < 1:
            raise ConfigError(f"variant {self.variant} needs stage2_hidden >= 1")
        if lay.fc and self.fc_dim < 1:
            raise ConfigError(f"variant {self.variant} needs fc_dim >= 1")
        if lay.scene_encoder and self.pooling.d > 1:
            raise ConfigError(f"variant {self.variant} has no person pooling; sub-groups d={self.pooling.d} "
                              f"cannot be honoured")
        if self.stage2_loss not in ("all", "last"):
            raise ConfigError(f"stage2_loss must be 'all' or 'last', got {self.stage2_loss!r}")

    def to_dict(self):
        out = asdict(self)
        out["variant"] = self.variant.value
        return out

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def collective_video_config(**overrides):
    """Video-scale sizes for pedestrian scenes (9-step 3000-unit person LSTM,
    3000-unit fc, 9-step 500-unit scene LSTM); fc7 is 4096-d."""
    base = dict(feature_dim=4096, stage1_hidden=3000, stage1_timesteps=9, fc_dim=3000,
                stage2_hidden=500, stage2_timesteps=9, num_actions=5, num_activities=5)
    base.update(overrides)
    return ModelConfig(**base)


def volleyball_video_config(**overrides):
    """Video-scale sizes for volleyball scenes (5-step 3000-unit person LSTM,
    10-step 2000-unit scene LSTM, 2 sub-groups with max pooling)."""
    base = dict(feature_dim=4096, stage1_hidden=3000, stage1_timesteps=5, fc_dim=3000,
                stage2_hidden=2000, stage2_timesteps=10, num_actions=9, num_activities=8,
                pooling=PoolingConfig("max", 2))
    base.update(overrides)
    return ModelConfig(**base)


@dataclass
class TrainedModel:
    config: ModelConfig
    encoder: Encoder = None
    lstm1: LstmParams = None
    head1: SoftmaxHead = None
    fc: Dense = None
    lstm2: LstmParams = None
    head2: SoftmaxHead = None
    stage1_done: bool = False
    stage2_done: bool = False

    @property
    def variant(self):
        return self.config.variant

    def components(self):
        return {name: getattr(self, name) for name in COMPONENTS if getattr(self, name) is not None}

    def params(self, names=None):
        """Flat ``"component.array" -> ndarray`` view (arrays are shared)."""
        out = {}
        for name, comp in self.components().items():
            if names is not None and name not in names:
                continue
            for k, v in comp.arrays().items():
                out[f"{name}.{k}"] = v
        return out

    @property
    def fitted(self):
        return self.stage2_done

    def save(self, path):
        checkpoint.save(path, "model", self._meta(), self.params())

    def to_bytes(self):
        return checkpoint.dumps("model", self._meta(), self.params())

    def _meta(self):
        return {"config": self.config.to_dict(), "variant": self.variant.value,
                "stage1_done": self.stage1_done, "stage2_done": self.stage2_done}

    @classmethod
    def load(cls, path):
        meta, arrays = checkpoint.load(path, kind="model")
        return cls._from_parts(meta, arrays)

    @classmethod
    def from_bytes(cls, blob):
        meta, arrays = checkpoint.loads(blob, kind="model")
        return cls._from_parts(meta, arrays)

    @classmethod
    def _from_parts(cls, meta, arrays):
        cfg = ModelConfig.from_dict(meta["config"])
        grouped = {}
        for key, arr in arrays.items():
            comp, name = key.split(".", 1)
            grouped.setdefault(comp, {})[name] = arr
        types = {"encoder": Encoder, "lstm1": LstmParams, "head1": SoftmaxHead, "fc": Dense,
                 "lstm2": LstmParams, "head2": SoftmaxHead}
        comps = {name: types[name](**vals) for name, vals in grouped.items()}
        return cls(cfg, stage1_done=meta["stage1_done"], stage2_done=meta["stage2_done"], **comps)


def build_model(cfg, rng=0):
    """Allocate exactly the sub-networks ``cfg.variant`` needs."""
    if isinstance(rng, (int, np.integer)):
        rng = make_rng(rng)
    cfg.validate()
    lay = cfg.layout
    m = TrainedModel(cfg)
    if lay.person_encoder:
        m.encoder = Encoder.init(cfg.obs_dim, cfg.encoder_hidden, cfg.feature_dim, rng)
    else:
        m.encoder = Encoder.init(cfg.obs_dim * cfg.max_persons, cfg.encoder_hidden, cfg.feature_dim, rng)
    if lay.lstm1:
        m.lstm1 = LstmParams.init(cfg.feature_dim, cfg.stage1_hidden, rng, cfg.forget_bias)
    if lay.person_head:
        width = cfg.stage1_hidden if lay.person_head == "h" else cfg.feature_dim
        m.head1 = SoftmaxHead.init(width, cfg.num_actions, rng)
    width = cfg.z_dim
    if lay.fc:
        m.fc = Dense.init(width, cfg.fc_dim, rng)
        width = cfg.fc_dim
    if lay.lstm2:
        m.lstm2 = LstmParams.init(width, cfg.stage2_hidden, rng, cfg.forget_bias)
        width = cfg.stage2_hidden
    m.head2 = SoftmaxHead.init(width, cfg.num_activities, rng)
    return m


# ---------------------------------------------------------------------------
# data preparation


@dataclass
class SceneArrays:
    obs: np.ndarray  # (T, K, O)
    actions: np.ndarray  # (T, K)
    present: np.ndarray  # (T, K)
    bbox: np.ndarray  # (T, K, 2)
    group: np.ndarray  # (T,)
    scene_id: int


def prepare(scene):
    return SceneArrays(scene.obs(), scene.actions(), scene.present(), scene.bbox(),
                       scene.group_labels, scene.scene_id)


@dataclass
class Batch:
    obs: np.ndarray  # (T, B, K, O)
    actions: np.ndarray  # (T, B, K)
    present: np.ndarray
    bbox: np.ndarray
    group: np.ndarray  # (T, B)
    order: np.ndarray  # (T, B, K)
    counts: np.ndarray  # (T, B)


def make_batch(items):
    T = items[0].obs.shape[0]
    if any(it.obs.shape[0] != T for it in items):
        raise DataError("all scenes in a batch must have the same number of frames")
    K = max(it.obs.shape[1] for it in items)
    B = len(items)
    O = items[0].obs.shape[2]
    obs = np.zeros((T, B, K, O))
    actions = np.full((T, B, K), -1, dtype=np.int64)
    bbox = np.zeros((T, B, K, 2))
    for b, it in enumerate(items):
        k = it.obs.shape[1]
        obs[:, b, :k] = it.obs
        actions[:, b, :k] = it.actions
        bbox[:, b, :k] = it.bbox
    present = actions >= 0
    group = np.stack([it.group for it in items], axis=1)
    order, counts = frame_order(bbox, present)
    return Batch(obs, actions, present, bbox, group, order, counts)


def check_compatible(cfg, scenes):
    """Raise :class:`DataError` if ``scenes`` cannot be fed to a ``cfg`` model."""
    if not scenes:
        raise DataError("no scenes")
    for s in scenes:
        if s.obs_dim != cfg.obs_dim:
            raise DataError(f"scene {s.scene_id}: obs_dim {s.obs_dim} but model expects {cfg.obs_dim}")
        acts = s.actions()
        if acts.max() >= cfg.num_actions or s.group_labels.max() >= cfg.num_activities \
                or s.group_labels.min() < 0:
            raise DataError(f"scene {s.scene_id}: labels exceed the model's "
                            f"{cfg.num_actions} actions / {cfg.num_activities} activities")
        counts = (acts >= 0).sum(axis=1)
        if counts.min() < cfg.pooling.d:
            t = int(counts.argmin())
            raise DataError(f"scene {s.scene_id}, frame {t}: {int(counts[t])} people < d={cfg.pooling.d}")
        if cfg.layout.scene_encoder and counts.max() > cfg.max_persons:
            raise DataError(f"scene {s.scene_id}: {int(counts.max())} people exceed max_persons="
                            f"{cfg.max_persons} of the whole-frame encoder")


# ---------------------------------------------------------------------------
# forward / backward pieces


def _windows(T, w):
    return [(s, min(s + w, T)) for s in range(0, T, w)]


def windowed_lstm_forward(p, xs, w):
    """Run ``p`` on consecutive non-overlapping windows of ``w`` steps, resetting state."""
    tapes = [lstm_forward(p, xs[a:b]) for a, b in _windows(xs.shape[0], w)]
    return np.concatenate([tp.h for tp in tapes], axis=0), tapes


def windowed_lstm_backward(p, tapes, dh):
    grads = None
    dxs = []
    t = 0
    for tp in tapes:
        n = len(tp)
        g, dx, _, _ = lstm_backward(p, tp, dh[t:t + n])
        t += n
        dxs.append(dx)
        if grads is None:
            grads = g
        else:
            for k in grads:
                grads[k] += g[k]
    return grads, np.concatenate(dxs, axis=0)


def whole_frame_obs(batch, max_persons):
    """``(T, B, max_persons*O)``: observations of present people in canonical order."""
    T, B, K, O = batch.obs.shape
    ordered = np.take_along_axis(batch.obs, batch.order[..., None], axis=2)
    mask = np.take_along_axis(batch.present, batch.order, axis=2)
    ordered = np.where(mask[..., None], ordered, 0.0)
    out = np.zeros((T, B, max_persons, O))
    n = min(K, max_persons)
    out[:, :, :n] = ordered[:, :, :n]
    return out.reshape(T, B, max_persons * O)


def person_forward(model, batch):
    """Stage-1 forward: features ``x``, hidden ``h`` (or None) and caches."""
    T, B, K, O = batch.obs.shape
    x, enc_cache = model.encoder.forward(batch.obs)
    h = tapes = None
    if model.lstm1 is not None:
        F = x.shape[-1]
        hs, tapes = windowed_lstm_forward(model.lstm1, x.reshape(T, B * K, F), model.config.stage1_timesteps)
        h = hs.reshape(T, B, K, -1)
    return x, h, (enc_cache, tapes)


def person_repr(x, h):
    return x if h is None else np.concatenate([x, h], axis=-1)


def lower_forward(model, batch):
    """Everything below the scene-level layers; returns ``(Z, cache)``."""
    cfg = model.config
    if cfg.layout.scene_encoder:
        s, enc_cache = model.encoder.forward(whole_frame_obs(batch, cfg.max_persons))
        return s, ("scene", enc_cache)
    x, h, pcache = person_forward(model, batch)
    P = person_repr(x, h)
    K = P.shape[2]
    groups = group_index(batch.counts, cfg.pooling.d, K)
    Z, pool_cache = pool_batched(P, batch.order, groups, cfg.pooling.d, cfg.pooling.strategy)
    return Z, ("person", (x, h, pcache, pool_cache, K))


def lower_backward(model, dZ, cache, names):
    """Gradients for the trainable lower components listed in ``names``."""
    kind, c = cache
    grads = {}
    if kind == "scene":
        if "encoder" in names:
            g, _ = model.encoder.backward(dZ, c)
            grads.update({f"encoder.{k}": v for k, v in g.items()})
        return grads
    x, h, (enc_cache, tapes), pool_cache, K = c
    if "encoder" not in names and "lstm1" not in names:
        return grads
    dP = pool_batched_backward(dZ, pool_cache, K)
    F = x.shape[-1]
    dx = dP[..., :F]
    if h is not None:
        T, B = dP.shape[:2]
        dh = dP[..., F:].reshape(T, B * K, -1)
        g, dxs = windowed_lstm_backward(model.lstm1, tapes, dh)
        if "lstm1" in names:
            grads.update({f"lstm1.{k}": v for k, v in g.items()})
        dx = dx + dxs.reshape(dx.shape)
    if "encoder" in names:
        g, _ = model.encoder.backward(dx, enc_cache)
        grads.update({f"encoder.{k}": v for k, v in g.items()})
    return grads


def upper_forward(model, Z):
    """Scene-level layers on ``Z`` ``(T, B, z_dim)``; returns features fed to ``head2``."""
    u = Z
    fc_cache = tapes = None
    if model.fc is not None:
        u, fc_cache = model.fc.forward(u)
    if model.lstm2 is not None:
        u, tapes = windowed_lstm_forward(model.lstm2, u, model.config.stage2_timesteps)
    return u, (fc_cache, tapes)


def upper_backward(model, du, cache):
    fc_cache, tapes = cache
    grads = {}
    if model.lstm2 is not None:
        g, du = windowed_lstm_backward(model.lstm2, tapes, du)
        grads.update({f"lstm2.{k}": v for k, v in g.items()})
    if model.fc is not None:
        g, du = model.fc.backward(du, fc_cache)
        grads.update({f"fc.{k}": v for k, v in g.items()})
    return grads, du


def scene_loss_labels(model, group):
    """Per-frame group labels with frames excluded from the loss set to -1."""
    cfg = model.config
    if model.lstm2 is None or cfg.stage2_loss == "all":
        return group
    out = np.full_like(group, -1)
    for a, b in _windows(group.shape[0], cfg.stage2_timesteps):
        out[a:b] = loss_labels(group[a:b], b - a, "last")
    return out


def _correct(probs, labels):
    valid = labels >= 0
    pred = probs.argmax(axis=-1)
    return int(((pred == labels) & valid).sum()), int(valid.sum())


def upper_loss_and_grad(model, Z, group):
    u, cache = upper_forward(model, Z)
    labels = scene_loss_labels(model, group)
    loss, hg, du, probs = softmax_loss(model.head2, u, labels)
    grads, dZ = upper_backward(model, du, cache)
    grads.update({f"head2.{k}": v for k, v in hg.items()})
    n_ok, n = _correct(probs, group)
    return loss, grads, dZ, n_ok, n


def stage2_loss_and_grad(model, batch, names):
    """Scene-level loss and gradients for every component in ``names``."""
    Z, lcache = lower_forward(model, batch)
    loss, grads, dZ, n_ok, n = upper_loss_and_grad(model, Z, batch.group)
    grads.update(lower_backward(model, dZ, lcache, names))
    return loss, {k: v for k, v in grads.items() if k.split(".")[0] in names}, n_ok, n


def stage1_loss_and_grad(model, batch):
    x, h, (enc_cache, tapes) = person_forward(model, batch)
    T, B, K, F = x.shape
    feats = h if model.config.layout.person_head == "h" else x
    loss, hg, dfeat, probs = softmax_loss(model.head1, feats, batch.actions)
    grads = {f"head1.{k}": v for k, v in hg.items()}
    if model.config.layout.person_head == "h":
        g, dxs = windowed_lstm_backward(model.lstm1, tapes, dfeat.reshape(T, B * K, -1))
        grads.update({f"lstm1.{k}": v for k, v in g.items()})
        dx = dxs.reshape(x.shape)
    else:
        dx = dfeat
    g, _ = model.encoder.backward(dx, enc_cache)
    grads.update({f"encoder.{k}": v for k, v in g.items()})
    n_ok, n = _correct(probs, batch.actions)
    return loss, grads, n_ok, n


# ---------------------------------------------------------------------------
# training


def _batches_by_length(items):
    """Group prepared scenes by frame count (a batch needs equal T)."""
    lengths = {it.obs.shape[0] for it in items}
    if len(lengths) > 1:
        raise DataError(f"scenes have differing frame counts {sorted(lengths)}; use one length per dataset")
    return items


def train_stage1(model, scenes, hyper=None):
    """Train encoder, person LSTM and person head on per-frame person actions."""
    hyper = hyper or TrainHyper()
    if not model.config.layout.person_head:
        raise StateError(f"variant {model.variant} has no person-level stage")
    check_compatible(model.config, scenes)
    items = _batches_by_length([prepare(s) for s in scenes])
    for it in items:
        if not (it.actions >= 0).any():
            raise DataError(f"scene {it.scene_id} carries no person action labels")
    params = model.params(STAGE1)
    log = run_epochs(params, lambda b: stage1_loss_and_grad(model, make_batch(b)), items, hyper, phase="stage1")
    model.stage1_done = True
    return model, log


def stage2_trainable(model):
    lay = model.config.layout
    if lay.two_phase:
        names = ["fc", "lstm2", "head2"]
        if not model.config.freeze_stage1:
            names += ["encoder", "lstm1"]
    else:
        names = ["encoder", "fc", "lstm2", "head2"]
    return [n for n in names if getattr(model, n) is not None]


def train_stage2(model, scenes, hyper=None):
    """Train the scene-level layers on per-frame group activity labels.

    For two-phase variants the stage-1 components are frozen (unless
    ``config.freeze_stage1`` is off), so the pooled representation of every
    scene is computed once up front.
    """
    hyper = hyper or TrainHyper()
    lay = model.config.layout
    if lay.two_phase and not model.stage1_done:
        raise StateError(f"variant {model.variant}: stage 1 must be trained before stage 2")
    check_compatible(model.config, scenes)
    items = _batches_by_length([prepare(s) for s in scenes])
    names = stage2_trainable(model)
    params = model.params(names)
    if lay.two_phase and model.config.freeze_stage1:
        cached = []
        for lo in range(0, len(items), 64):
            chunk = items[lo:lo + 64]
            Z, _ = lower_forward(model, make_batch(chunk))
            cached.extend((Z[:, b], it.group) for b, it in enumerate(chunk))

        def step(batch):
            Z = np.stack([z for z, _ in batch], axis=1)
            group = np.stack([g for _, g in batch], axis=1)
            loss, grads, _, n_ok, n = upper_loss_and_grad(model, Z, group)
            return loss, grads, n_ok, n

        log = run_epochs(params, step, cached, hyper, phase="stage2")
    else:
        log = run_epochs(params, lambda b: stage2_loss_and_grad(model, make_batch(b), names),
                         items, hyper, phase="stage2")
    model.stage2_done = True
    return model, log


def fit(model, scenes, stage1_hyper=None, stage2_hyper=None):
    """Run every training phase the variant has; returns ``(model, log)``."""
    log = TrainingLog()
    if model.config.layout.two_phase:
        _, l1 = train_stage1(model, scenes, stage1_hyper)
        log.extend(l1)
    _, l2 = train_stage2(model, scenes, stage2_hyper)
    log.extend(l2)
    return model, log


# ---------------------------------------------------------------------------
# inference and evaluation


@dataclass
class Prediction:
    group_label: int
    group_probs: np.ndarray  # (T, num_activities)
    person_actions: np.ndarray  # (T, K) or None


def forward_probs(model, scenes, chunk=64):
    """Per-scene ``(group_probs (T, C), person_probs (T, K, A) or None)``."""
    out = []
    items = [prepare(s) for s in scenes]
    for lo in range(0, len(items), chunk):
        part = items[lo:lo + chunk]
        batch = make_batch(part)
        Z, lcache = lower_forward(model, batch)
        u, _ = upper_forward(model, Z)
        gp = softmax(model.head2.logits(u))
        pp = None
        if model.head1 is not None:
            x, h, _ = lcache[1][:3]
            feats = h if model.config.layout.person_head == "h" else x
            pp = softmax(model.head1.logits(feats))
        for b, it in enumerate(part):
            k = it.obs.shape[1]
            out.append((gp[:, b], None if pp is None else pp[:, b, :k]))
    return out


def _require_fitted(model):
    if not model.stage2_done or (model.config.layout.two_phase and not model.stage1_done):
        raise StateError(f"variant {model.variant} is not fully trained")


def predict_many(model, scenes):
    _require_fitted(model)
    check_compatible(model.config, scenes)
    preds = []
    for s, (gp, pp) in zip(scenes, forward_probs(model, scenes)):
        # argmax picks the lowest index on ties
        label = int(np.argmax(gp.mean(axis=0)))
        acts = None
        if pp is not None:
            acts = np.where(s.present(), pp.argmax(axis=-1), -1)
        preds.append(Prediction(label, gp, acts))
    return preds


def predict(model, scene):
    return predict_many(model, [scene])[0]


@dataclass
class Metrics:
    accuracy: float
    per_class_accuracy: np.ndarray
    confusion: np.ndarray  # rows: true class, columns: predicted class
    person_accuracy: float = None
    mode: str = "frame"

    @property
    def total(self):
        return int(self.confusion.sum())


def confusion_matrix(true, pred, num_classes):
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(true), np.asarray(pred)), 1)
    return cm


def metrics_from_confusion(cm, person_accuracy=None, mode="frame"):
    rows = cm.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.where(rows > 0, np.diag(cm) / np.maximum(rows, 1), np.nan)
    return Metrics(float(np.trace(cm) / cm.sum()), per_class, cm, person_accuracy, mode)


def evaluate(model, scenes, mode="frame"):
    """Accuracy and confusion matrix over group activities.

    ``mode="frame"`` scores every frame's arg-max distribution against that
    frame's label; ``mode="clip"`` scores one vote per scene (arg-max of the
    mean distribution) against the scene's most common label.
    """
    if not scenes:
        raise DomainError("cannot evaluate on an empty set of scenes")
    if mode not in ("frame", "clip"):
        raise DomainError(f"mode must be 'frame' or 'clip', got {mode!r}")
    preds = predict_many(model, scenes)
    true, pred = [], []
    ok = n = 0
    for s, p in zip(scenes, preds):
        if mode == "frame":
            true.extend(s.group_labels.tolist())
            pred.extend(p.group_probs.argmax(axis=-1).tolist())
        else:
            true.append(int(np.argmax(np.bincount(s.group_labels))))
            pred.append(p.group_label)
        if p.person_actions is not None:
            acts = s.actions()
            valid = acts >= 0
            ok += int((p.person_actions[valid] == acts[valid]).sum())
            n += int(valid.sum())
    cm = confusion_matrix(true, pred, model.config.num_activities)
    return metrics_from_confusion(cm, ok / n if n else None, mode)


def replace_config(cfg, **changes):
    return replace(cfg, **changes)
