"""``hierlstm`` command line: gen, validate, train, eval, gradcheck, ablate.

Exit codes: 0 success, 2 usage, 3 config, 4 data, 5 compatibility,
6 verification failure, 7 training failure. ``HIERLSTM_VERBOSITY``
(0 quiet, 1 normal, 2 debug) sets the logging level.
"""

import argparse
import logging
import os
from pathlib import Path
import sys
import time

from . import config as config_mod
from .dataset_io import (
    ParseError, format_counts, load_dataset, read_manifest, validate_dataset, write_dataset,
)
from .experiment import ablate, format_table, generate, model_config_for, rows_to_tsv
from .gradcheck import GROUPS, run_gradcheck
from .hierarchy import (
    ConfigError as ModelConfigError, DataError, StateError, TrainedModel, build_model, check_compatible,
    evaluate, fit,
)
from .scenegen import ConfigError as TaskConfigError
from .trainer import TrainingError

EXIT_OK = 0
EXIT_CONFIG = 3
EXIT_DATA = 4
EXIT_COMPAT = 5
EXIT_VERIFY = 6
EXIT_TRAIN = 7

logger = logging.getLogger("hierlstm")


class CliError(Exception):
    def __init__(self, code, msg):
        self.code = code
        super().__init__(msg)


def _load_cfg(args):
    try:
        if getattr(args, "preset", None):
            cfg = config_mod.preset(args.preset)
        elif getattr(args, "config", None):
            cfg = config_mod.load_config(args.config)
        else:
            cfg = config_mod.from_dict({})
        if getattr(args, "set", None):
            cfg = config_mod.apply_overrides(cfg, args.set)
        if getattr(args, "seed", None) is not None:
            cfg = config_mod.with_seed(cfg, args.seed)
        return cfg
    except OSError as e:
        raise CliError(EXIT_CONFIG, f"cannot read config: {e}") from None
    except (config_mod.ConfigError, ModelConfigError, TaskConfigError) as e:
        raise CliError(EXIT_CONFIG, f"invalid config: {e}") from None


def _load_data(path):
    try:
        return load_dataset(path)
    except (OSError, ParseError, ValueError, TypeError) as e:
        raise CliError(EXIT_DATA, f"cannot load dataset {path}: {e}") from None


def cmd_gen(args):
    cfg = _load_cfg(args)
    spec, train, test = generate(cfg)
    try:
        write_dataset(args.out, train, test, spec)
        (Path(args.out) / "config.yaml").write_text(cfg.to_yaml())
    except OSError as e:
        raise CliError(EXIT_DATA, f"cannot write dataset to {args.out}: {e}") from None
    report = validate_dataset(args.out)
    print(f"wrote {len(train)} train / {len(test)} test scenes to {args.out}")
    print(format_counts(spec.activity_names(), report.activity_counts, "Group Activity Class"))
    print()
    print(format_counts(spec.action_names(), report.action_counts, "Action Class"))
    return EXIT_OK


def cmd_validate(args):
    report = validate_dataset(args.data, min_persons=args.min_persons)
    for w in report.warnings:
        print(f"warning: {w}")
    for e in report.errors:
        print(f"error: {e}")
    if report.ok:
        man = read_manifest(args.data)
        print(f"ok: {report.num_scenes} scenes")
        print(format_counts(man.activity_names, report.activity_counts, "Group Activity Class"))
        print()
        print(format_counts(man.action_names, report.action_counts, "Action Class"))
        return EXIT_OK
    return EXIT_DATA


def _check_manifest(mc, man):
    pairs = [("obs_dim", mc.obs_dim, man.obs_dim), ("num_actions", mc.num_actions, man.num_actions),
             ("num_activities", mc.num_activities, man.num_activities)]
    for name, ours, theirs in pairs:
        if ours != theirs:
            raise CliError(EXIT_COMPAT, f"incompatible {name}: model has {ours}, dataset has {theirs}")


def cmd_train(args):
    cfg = _load_cfg(args)
    man, train, _ = _load_data(args.data)
    try:
        task = cfg.task_spec()
        mc = model_config_for(cfg, task)
    except (config_mod.ConfigError, ModelConfigError, TaskConfigError) as e:
        raise CliError(EXIT_CONFIG, f"invalid config: {e}") from None
    _check_manifest(mc, man)
    try:
        check_compatible(mc, train)
    except DataError as e:
        raise CliError(EXIT_COMPAT, f"dataset incompatible with model: {e}") from None
    model = build_model(mc, cfg.resolved_model_seed)
    start = time.perf_counter()
    try:
        model, log = fit(model, train, cfg.hyper("stage1"), cfg.hyper("stage2"))
    except (TrainingError, StateError, FloatingPointError) as e:
        raise CliError(EXIT_TRAIN, f"training failed: {e}") from None
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    model.save(out)
    log_path = Path(args.log) if args.log else out.with_name(out.name + ".log.tsv")
    log_path.write_text(log.to_tsv())
    for phase in dict.fromkeys(r.phase for r in log.records):
        last = [r for r in log.records if r.phase == phase][-1]
        what = "person-action" if phase == "stage1" else "group-activity"
        print(f"{phase}: {last.epoch} epochs, {what} loss {last.loss:.4f}, train accuracy {last.accuracy:.4f}")
    logger.info("trained %s in %.1fs", mc.variant.value, time.perf_counter() - start)
    print(f"checkpoint: {out}\nlog: {log_path}")
    return EXIT_OK


def cmd_eval(args):
    try:
        model = TrainedModel.load(args.model)
    except (OSError, ValueError) as e:
        raise CliError(EXIT_DATA, f"cannot load checkpoint {args.model}: {e}") from None
    man, train, test = _load_data(args.data)
    if args.config or args.preset:
        cfg = _load_cfg(args)
        try:
            expected = cfg.model_config()
        except (config_mod.ConfigError, ModelConfigError, TaskConfigError) as e:
            raise CliError(EXIT_COMPAT, f"model variant {model.variant.value} is incompatible with config: {e}") \
                from None
        if model.config.layout.scene_encoder and expected.pooling.d > 1:
            raise CliError(EXIT_COMPAT, f"{model.variant.value} model has no person pooling but the config "
                                        f"asks for d={expected.pooling.d} sub-groups")
        if expected.pooling != model.config.pooling:
            raise CliError(EXIT_COMPAT, f"config pooling {expected.pooling} != checkpoint pooling "
                                        f"{model.config.pooling}")
    _check_manifest(model.config, man)
    scenes = test if args.split == "test" else train
    try:
        check_compatible(model.config, scenes)
        metrics = evaluate(model, scenes, args.mode)
    except DataError as e:
        raise CliError(EXIT_COMPAT, f"dataset incompatible with model: {e}") from None
    except StateError as e:
        raise CliError(EXIT_COMPAT, str(e)) from None
    rep = Path(args.report)
    rep.mkdir(parents=True, exist_ok=True)
    names = man.activity_names
    cm = metrics.confusion
    (rep / "confusion.tsv").write_text(
        "true\\pred\t" + "\t".join(names) + "\n"
        + "".join(names[i] + "\t" + "\t".join(str(v) for v in cm[i]) + "\n" for i in range(len(names))))
    (rep / "per_class.tsv").write_text(
        "class\tinstances\taccuracy\n"
        + "".join(f"{names[i]}\t{int(cm[i].sum())}\t{float(metrics.per_class_accuracy[i])!r}\n"
                  for i in range(len(names))))
    pa = "" if metrics.person_accuracy is None else repr(metrics.person_accuracy)
    (rep / "summary.tsv").write_text(
        "variant\tsplit\tmode\tinstances\taccuracy\tperson_accuracy\n"
        f"{model.variant.value}\t{args.split}\t{metrics.mode}\t{metrics.total}\t{metrics.accuracy!r}\t{pa}\n")
    person = "" if metrics.person_accuracy is None else f"  person-action {100 * metrics.person_accuracy:.1f}"
    print(f"{model.variant.value:<6} {args.split} ({metrics.mode}, n={metrics.total}): "
          f"accuracy {100 * metrics.accuracy:.1f}{person}")
    return EXIT_OK


def cmd_gradcheck(args):
    start = time.perf_counter()
    report = run_gradcheck(seeds=args.seeds, base_seed=args.seed or 0, corrupt=args.corrupt)
    for line in report.lines():
        print(line)
    print(f"{len(report.errors)} groups, {args.seeds} seeds, {time.perf_counter() - start:.1f}s")
    if not report.ok:
        print("FAILED: " + ", ".join(report.failures))
        return EXIT_VERIFY
    return EXIT_OK


def cmd_ablate(args):
    cfg = _load_cfg(args)
    man, train, test = _load_data(args.data)
    try:
        task = cfg.task_spec()
        _check_manifest(cfg.model_config(task), man)
    except (config_mod.ConfigError, ModelConfigError, TaskConfigError) as e:
        raise CliError(EXIT_CONFIG, f"invalid config: {e}") from None
    variants = args.variants.split(",") if args.variants else None
    grid = None
    if args.grid is not None:
        grid = [] if args.grid == "" else [(int(c.split(":")[0]), c.split(":")[1]) for c in args.grid.split(",")]
    scenes = test if cfg.eval.split == "test" else train
    rows = ablate(cfg, train, scenes, task, variants, grid)
    rep = Path(args.report)
    rep.mkdir(parents=True, exist_ok=True)
    (rep / "ablation.tsv").write_text(rows_to_tsv(rows))
    print(format_table(rows))
    failed = [r for r in rows if r.error]
    for r in failed:
        print(f"failed: {r.variant} d={r.d} {r.strategy}: {r.error}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="hierlstm", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def cfg_args(sp):
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--config", help="experiment YAML file")
        g.add_argument("--preset", choices=sorted(config_mod.PRESETS), help="built-in benchmark config")
        sp.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable)")
        sp.add_argument("--seed", type=int, help="derive every seed from this value")

    sp = sub.add_parser("gen", help="generate a synthetic dataset")
    cfg_args(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("validate", help="check a dataset and print label counts")
    sp.add_argument("data")
    sp.add_argument("--min-persons", type=int, default=1)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("train", help="train a model per the config")
    cfg_args(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True, help="checkpoint path")
    sp.add_argument("--log", help="training log path (default: <out>.log.tsv)")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint")
    cfg_args(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--report", required=True)
    sp.add_argument("--split", choices=("train", "test"), default="test")
    sp.add_argument("--mode", choices=("frame", "clip"), default="frame")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    sp.add_argument("--seeds", type=int, default=20)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--corrupt", choices=GROUPS, help="negative control: perturb one group's gradient")
    sp.set_defaults(func=cmd_gradcheck)

    sp = sub.add_parser("ablate", help="train and score every variant and pooling setting")
    cfg_args(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--report", required=True)
    sp.add_argument("--variants", help="comma-separated subset, e.g. Full,B3")
    sp.add_argument("--grid", help="Full pooling cells as d:strategy list, e.g. 1:max,2:max ('' for none)")
    sp.set_defaults(func=cmd_ablate)
    return p


def _setup_logging():
    level = {0: logging.WARNING, 1: logging.INFO, 2: logging.DEBUG}
    try:
        v = int(os.environ.get("HIERLSTM_VERBOSITY", "1"))
    except ValueError:
        v = 1
    logging.basicConfig(level=level.get(v, logging.DEBUG if v > 2 else logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code


if __name__ == "__main__":
    sys.exit(main())
