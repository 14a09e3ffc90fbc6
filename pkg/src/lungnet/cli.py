"""Command-line interface.

Subcommands: synth (generate a synthetic dataset), split (scan + stratified
split to a CSV index), train (full recipe, writing log.csv / best.nncp /
report.csv), eval (Table-style report for a checkpoint on one split),
gradcheck (finite-difference verification of every layer type, the SE block,
and a mini end-to-end model), and params (parameter counts per stage).

Run configs are flat ``key = value`` text with ``#`` comments.  Exit codes:
0 success, 1 usage/config error, 2 data error, 3 numeric failure.
"""

import argparse
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__
from .attention import SEBlock
from .checkpoint import load_weights
from .dataset import (ImageFolderSource, compute_norm_stats, read_index_csv,
                      scan_dataset, stratified_split, write_index_csv)
from .errors import (ConfigError, DataError, NumericError, ShapeError,
                     UsageError)
from .gradcheck import gradient_check, model_gradient_check
from .layers import (BatchNorm2d, Conv2d, GlobalAvgPool, Linear, ReLU6,
                     Sigmoid)
from .metrics import format_table, write_report_csv
from .models import (ARCHITECTURES, ModelConfig, POLICIES, build_model,
                     count_params, mini_config, param_breakdown, set_trainable)
from .rng import TAG_CHECK, derive_rng
from .synthetic import SyntheticSpec, generate_dataset
from .training import (TrainConfig, evaluate, save_training_log, train_loop)
from .transforms import AugmentConfig

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


@dataclass
class RunConfig:
    """Aggregated settings for a training/eval run."""
    index: str = ""
    dataset_root: str = ""
    arch: str = "mobilenet_lung"
    out_dir: str = "runs/out"
    init_checkpoint: str = ""
    policy: str = "all"
    num_classes: int = 3
    width_multiplier: float = 1.0
    input_size: int = 224
    se_after_stem: bool | None = None  # derived from arch unless set explicitly
    se_reduction: int = 16
    dropout_rate: float = 0.2
    lr0: float = 0.01
    momentum: float = 0.9
    lr_step: int = 10
    lr_gamma: float = 0.1
    patience: int = 10
    batch_size: int = 32
    max_epochs: int = 100
    seed: int = 0

    def model_config(self):
        return ModelConfig(num_classes=self.num_classes,
                           width_multiplier=self.width_multiplier,
                           input_size=self.input_size,
                           se_after_stem=self.arch == "mobilenet_lung",
                           se_reduction=self.se_reduction,
                           dropout_rate=self.dropout_rate)

    def train_config(self):
        return TrainConfig(lr0=self.lr0, momentum=self.momentum,
                           lr_step=self.lr_step, lr_gamma=self.lr_gamma,
                           patience=self.patience, batch_size=self.batch_size,
                           max_epochs=self.max_epochs, seed=self.seed)


def _parse_value(name, text, target_type):
    if target_type is bool or name == "se_after_stem":
        low = text.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigError(f"config key {name}: expected true/false, got {text!r}")
    try:
        return target_type(text)
    except ValueError as exc:
        raise ConfigError(
            f"config key {name}: cannot parse {text!r} as {target_type.__name__}") from exc


def parse_run_config(path):
    """Parse a flat key = value config file into a RunConfig."""
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    casts = {"index": str, "dataset_root": str, "arch": str, "out_dir": str,
             "init_checkpoint": str, "policy": str, "num_classes": int,
             "width_multiplier": float, "input_size": int,
             "se_after_stem": bool, "se_reduction": int, "dropout_rate": float,
             "lr0": float, "momentum": float, "lr_step": int,
             "lr_gamma": float, "patience": int, "batch_size": int,
             "max_epochs": int, "seed": int}
    cfg = RunConfig()
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in casts:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            setattr(cfg, key, _parse_value(key, value, casts[key]))
    return cfg


def validate_run_config(cfg, need_index=True):
    if cfg.arch not in ARCHITECTURES:
        raise ConfigError(f"arch must be one of {ARCHITECTURES}, got {cfg.arch!r}")
    if cfg.policy not in POLICIES:
        raise ConfigError(f"policy must be one of {POLICIES}, got {cfg.policy!r}")
    if cfg.se_after_stem is not None and \
            cfg.se_after_stem != (cfg.arch == "mobilenet_lung"):
        raise ConfigError(
            f"se_after_stem={cfg.se_after_stem} contradicts arch={cfg.arch}")
    if need_index:
        if not cfg.index:
            raise ConfigError("config key 'index' is required")
        if not os.path.isfile(cfg.index):
            raise ConfigError(f"index file not found: {cfg.index}")
    if cfg.init_checkpoint and not os.path.isfile(cfg.init_checkpoint):
        raise ConfigError(f"init checkpoint not found: {cfg.init_checkpoint}")
    cfg.model_config()
    cfg.train_config()
    return cfg


def _resolve_index(cfg):
    index = read_index_csv(cfg.index)
    if cfg.dataset_root:
        entries = [e if os.path.isabs(e.path) else
                   type(e)(path=os.path.join(cfg.dataset_root, e.path),
                           label=e.label, split=e.split)
                   for e in index.entries]
        index.entries = entries
    return index


def parse_synth_spec(path):
    """Flat key = value file with per_class / size / seed."""
    if not os.path.isfile(path):
        raise ConfigError(f"spec file not found: {path}")
    values = {}
    casts = {"per_class": int, "size": int, "seed": int}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in casts:
                raise ConfigError(f"{path}:{lineno}: unknown spec key {key!r}")
            values[key] = _parse_value(key, value.strip(), casts[key])
    return SyntheticSpec(**values)


def cmd_synth(args):
    if args.spec is not None:
        spec = parse_synth_spec(args.spec)
        if args.seed is not None:
            spec.seed = args.seed
    else:
        spec = SyntheticSpec(per_class=args.per_class, size=args.size,
                             seed=args.seed if args.seed is not None else 0)
    counts = generate_dataset(spec, args.out)
    for name, n in counts.items():
        print(f"{name}: {n} images")
    print(f"wrote {sum(counts.values())} files under {args.out}")
    return EXIT_OK


def cmd_split(args):
    index = scan_dataset(args.root)
    index = stratified_split(index, seed=args.seed)
    write_index_csv(index, args.out)
    table = index.counts()
    for name in index.class_names:
        c = table[name]
        print(f"{name}: train {c['train']}  val {c['val']}  test {c['test']}")
    if index.skipped:
        print(f"skipped {index.skipped} unreadable files")
    print(f"index written to {args.out}")
    return EXIT_OK


def _apply_overrides(cfg, args):
    if args.init is not None:
        cfg.init_checkpoint = args.init
    if args.policy is not None:
        cfg.policy = args.policy
    if args.out is not None:
        cfg.out_dir = args.out
    if args.seed is not None:
        cfg.seed = args.seed
    if args.max_epochs is not None:
        cfg.max_epochs = args.max_epochs
    return cfg


def cmd_train(args):
    cfg = validate_run_config(_apply_overrides(parse_run_config(args.config), args))
    index = _resolve_index(cfg)
    stats = compute_norm_stats(index, cfg.input_size)
    aug = AugmentConfig(target_size=cfg.input_size)
    train_src = ImageFolderSource(index, "train", stats, cfg.input_size,
                                  augment_cfg=aug, seed=cfg.seed)
    val_src = ImageFolderSource(index, "val", stats, cfg.input_size)

    model = build_model(cfg.arch, cfg.model_config(), seed=cfg.seed)
    if cfg.init_checkpoint:
        load_weights(model, cfg.init_checkpoint, strict=False)
    set_trainable(model, cfg.policy)

    os.makedirs(cfg.out_dir, exist_ok=True)
    tlog, best = train_loop(model, train_src, val_src, cfg.train_config(),
                            out_dir=cfg.out_dir)
    save_training_log(tlog, os.path.join(cfg.out_dir, "log.csv"))
    print(f"trained {len(tlog.rows)} epochs; best epoch {tlog.best_epoch}"
          + (" (early stop)" if tlog.early_stopped else ""))

    if best is not None:
        load_weights(model, best, strict=True)
        eval_split = "test" if index.for_split("test") else "val"
        src = ImageFolderSource(index, eval_split, stats, cfg.input_size)
        _, report = evaluate(model, src, batch_size=cfg.batch_size)
        named = [(model.name, report)]
        write_report_csv(named, os.path.join(cfg.out_dir, "report.csv"))
        print(f"{eval_split} split results:")
        print(format_table(named))
    return EXIT_OK


def cmd_eval(args):
    cfg = parse_run_config(args.config)
    if args.index is not None:
        cfg.index = args.index
    validate_run_config(cfg)
    if not os.path.isfile(args.checkpoint):
        raise ConfigError(f"checkpoint not found: {args.checkpoint}")
    index = _resolve_index(cfg)
    stats = compute_norm_stats(index, cfg.input_size)
    model = build_model(cfg.arch, cfg.model_config(), seed=cfg.seed)
    load_weights(model, args.checkpoint, strict=True)
    src = ImageFolderSource(index, args.split, stats, cfg.input_size)
    _, report = evaluate(model, src, batch_size=cfg.batch_size)
    named = [(model.name, report)]
    if args.out is not None:
        os.makedirs(args.out, exist_ok=True)
        write_report_csv(named, os.path.join(args.out, "report.csv"))
    print(format_table(named))
    return EXIT_OK


def _kink_free(rng, shape):
    """Values in +/-[0.05, 2.9]: at least 3*eps away from relu6 kinks."""
    mag = rng.uniform(0.05, 2.9, size=shape)
    sign = rng.choice([-1.0, 1.0], size=shape)
    return (mag * sign).astype(np.float32)


def gradcheck_suite(seed=0):
    """(name, error, threshold) for every layer type, the SE block, and a
    mini end-to-end model (run in float64)."""
    rng = derive_rng(seed, TAG_CHECK)
    eps = 1e-3
    results = []

    def check(name, layer, x, threshold=1e-2, training=True):
        err = gradient_check(layer, x, epsilon=eps, rng=rng, training=training)
        results.append((name, err, threshold))

    check("linear", Linear(8, 5, rng=rng), _kink_free(rng, (4, 8)))
    check("conv3x3", Conv2d(3, 4, 3, padding=1, rng=rng), _kink_free(rng, (2, 3, 6, 6)))
    check("conv3x3_stride2", Conv2d(3, 4, 3, stride=2, padding=1, rng=rng),
          _kink_free(rng, (2, 3, 7, 7)))
    check("conv1x1", Conv2d(4, 6, 1, rng=rng), _kink_free(rng, (2, 4, 5, 5)))
    check("conv_depthwise", Conv2d(4, 4, 3, padding=1, groups=4, rng=rng),
          _kink_free(rng, (2, 4, 6, 6)))
    check("batchnorm_train", BatchNorm2d(3), _kink_free(rng, (4, 3, 5, 5)),
          training=True)
    check("batchnorm_eval", BatchNorm2d(3), _kink_free(rng, (4, 3, 5, 5)),
          training=False)
    check("relu6", ReLU6(), _kink_free(rng, (3, 4, 5, 5)))
    check("sigmoid", Sigmoid(), _kink_free(rng, (6, 10)))
    check("global_avg_pool", GlobalAvgPool(), _kink_free(rng, (2, 5, 4, 4)))
    check("se_block", SEBlock(8, reduction=2, rng=rng), _kink_free(rng, (2, 8, 3, 3)))

    # Own substream so the end-to-end fixture does not shift when the layer
    # checks above change.
    rng_mini = derive_rng(seed, TAG_CHECK, 1)
    mini = build_model("mobilenet_lung",
                       mini_config(dropout_rate=0.0, input_size=16), seed=seed)
    mini.astype(np.float64)
    _position_off_kinks(mini, rng_mini)
    x = _kink_free(rng_mini, (8, 3, 16, 16)).astype(np.float64)
    err = model_gradient_check(mini, x, epsilon=eps, rng=rng_mini, training=True)
    results.append(("mini_model", err, 2e-2))
    return results


def _position_off_kinks(model, rng):
    """Move a fresh model into general position for finite differences.

    BN beta lands mid-range (3) and gamma well under 1: training-mode
    whitening bounds standardized values by sqrt(n-1), so every relu6
    pre-activation stays strictly inside (0, 6) and the epsilon probes never
    cross a kink.  Other params get a small jitter so zero-initialized
    biases do not pin dead channels exactly onto the kink at 0.
    """
    for _, layer in model.named_layers():
        if isinstance(layer, BatchNorm2d):
            c = layer.num_features
            layer.params["beta"] = 3.0 + rng.uniform(-0.1, 0.1, c)
            layer.params["gamma"] = 0.6 + rng.uniform(-0.05, 0.05, c)
        else:
            for pname in layer.params:
                layer.params[pname] = layer.params[pname] \
                    + rng.normal(0.0, 0.02, layer.params[pname].shape)


def cmd_gradcheck(args):
    failures = 0
    for name, err, threshold in gradcheck_suite(seed=args.seed):
        ok = err < threshold
        failures += 0 if ok else 1
        print(f"{name:<18} rel_err={err:.3e}  limit={threshold:.0e}  "
              f"{'PASS' if ok else 'FAIL'}")
    if failures:
        raise NumericError(f"{failures} gradient check(s) failed")
    return EXIT_OK


def cmd_params(args):
    if args.arch not in ARCHITECTURES:
        raise ConfigError(f"arch must be one of {ARCHITECTURES}, got {args.arch!r}")
    config = ModelConfig(num_classes=args.classes, width_multiplier=args.width,
                         se_after_stem=args.arch == "mobilenet_lung")
    model = build_model(args.arch, config, seed=0)
    for group, n in param_breakdown(model).items():
        print(f"{group:<12} {n}")
    print(f"{'total':<12} {count_params(model)}")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    """argparse exits with code 2 on usage errors; we map them to 1."""

    def error(self, message):
        raise ConfigError(message)


def build_parser():
    parser = _Parser(prog="lungnet",
                     description="SE-attention MobileNetV2 lung X-ray training kit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic 3-class dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--spec", help="key = value file: per_class, size, seed")
    p.add_argument("--per-class", type=int, default=130)
    p.add_argument("--size", type=int, default=72)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("split", help="scan a dataset tree and write a split index")
    p.add_argument("--root", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train a model from a run config")
    p.add_argument("--config", required=True)
    p.add_argument("--init", help="initial checkpoint (loaded non-strict)")
    p.add_argument("--policy", choices=POLICIES)
    p.add_argument("--out", help="override out_dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--max-epochs", type=int, dest="max_epochs")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on one split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--index", help="override config index path")
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="also write report.csv here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference checks for all layers")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("params", help="parameter count and per-stage breakdown")
    p.add_argument("--arch", default="mobilenet_v2")
    p.add_argument("--classes", type=int, default=1000)
    p.add_argument("--width", type=float, default=1.0)
    p.set_defaults(func=cmd_params)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (ConfigError, UsageError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def entrypoint():
    sys.exit(main())
