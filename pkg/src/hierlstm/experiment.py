"""Config-driven runs shared by the CLI and the acceptance suite."""

from dataclasses import dataclass
import logging

from .hierarchy import ModelVariant, build_model, evaluate, fit
from .pooling import PoolingConfig
from .scenegen import generate_dataset

logger = logging.getLogger(__name__)

VARIANT_NAMES = {
    ModelVariant.B1: "B1-Image Classification",
    ModelVariant.B2: "B2-Person Classification",
    ModelVariant.B3: "B3-Fine-tuned Person Classification",
    ModelVariant.B4: "B4-Temporal Model with Image Features",
    ModelVariant.B5: "B5-Temporal Model with Person Features",
    ModelVariant.B6: "B6-Two-stage Model without LSTM 1",
    ModelVariant.B7: "B7-Two-stage Model without LSTM 2",
    ModelVariant.FULL: "Two-stage Hierarchical Model",
}


def generate(cfg):
    spec = cfg.task_spec()
    train, test = generate_dataset(spec, cfg.data.n_train, cfg.data.n_test)
    return spec, train, test


def model_config_for(cfg, task=None, variant=None, pooling=None):
    overrides = {}
    if variant is not None:
        overrides["variant"] = ModelVariant(variant)
    if pooling is not None:
        overrides["pooling"] = pooling
    mc = cfg.model_config(task, **overrides)
    if mc.layout.scene_encoder and mc.pooling.d > 1:
        # whole-frame variants have nothing to sub-group
        mc = cfg.model_config(task, **{**overrides, "pooling": PoolingConfig(mc.pooling.strategy, 1)})
    return mc


def train_model(cfg, train, task=None, variant=None, pooling=None):
    mc = model_config_for(cfg, task, variant, pooling)
    model = build_model(mc, cfg.resolved_model_seed)
    return fit(model, train, cfg.hyper("stage1"), cfg.hyper("stage2"))


@dataclass
class AblationRow:
    variant: str
    d: int
    strategy: str
    accuracy: float = None
    person_accuracy: float = None
    error: str = None

    @property
    def method(self):
        return VARIANT_NAMES[ModelVariant(self.variant)]


def run_cell(cfg, train, test, task, variant, pooling=None):
    mc = model_config_for(cfg, task, variant, pooling)
    row = AblationRow(mc.variant.value, mc.pooling.d, mc.pooling.strategy)
    try:
        model, _ = train_model(cfg, train, task, variant, pooling)
        m = evaluate(model, test, cfg.eval.mode)
        row.accuracy = m.accuracy
        row.person_accuracy = m.person_accuracy
    except (ValueError, RuntimeError, FloatingPointError) as e:
        row.error = f"{type(e).__name__}: {e}"
        logger.warning("cell %s d=%d %s failed: %s", row.variant, row.d, row.strategy, e)
    return row


def ablate(cfg, train, test, task=None, variants=None, grid=None):
    """Variant rows (with the configured pooling) followed by the Full pooling grid."""
    task = task or cfg.task_spec()
    variants = cfg.ablation.variants if variants is None else variants
    grid = cfg.ablation.pooling_grid if grid is None else grid
    rows = [run_cell(cfg, train, test, task, v) for v in variants]
    base = cfg.model_config(task)
    for d, strategy in grid:
        pooling = PoolingConfig(strategy, int(d))
        if base.variant == ModelVariant.FULL and pooling == base.pooling and "Full" in variants:
            continue
        rows.append(run_cell(cfg, train, test, task, "Full", pooling))
    return rows


def format_table(rows):
    lines = [f"{'Method':<40} {'d':>2} {'pool':<8} {'Accuracy':>8}"]
    for r in rows:
        acc = "failed" if r.accuracy is None else f"{100 * r.accuracy:.1f}"
        lines.append(f"{r.method:<40} {r.d:>2} {r.strategy:<8} {acc:>8}")
    return "\n".join(lines)


def rows_to_tsv(rows):
    lines = ["variant\tmethod\td\tpooling\taccuracy\tperson_accuracy\terror"]
    for r in rows:
        lines.append("\t".join([r.variant, r.method, str(r.d), r.strategy,
                                "" if r.accuracy is None else repr(r.accuracy),
                                "" if r.person_accuracy is None else repr(r.person_accuracy),
                                r.error or ""]))
    return "\n".join(lines) + "\n"
