"""Command-line interface.

Subcommands: ``split``, ``train-cnn``, ``extract``, ``train-fusion``,
``evaluate``, ``predict``, ``dump-activations``, ``gradcheck``.  Outputs
land under the ``--out`` directory:

* ``split.csv`` — replayable train/test membership
* ``checkpoints/cnn_<d_x_y>.ckpt``, ``checkpoints/fusion_<label>.ckpt``
* ``features/{train,test}_<d_x_y>.csv`` — per-network feature stores
* ``reports/<label>.txt`` — confusion matrix plus metrics
* ``activations/<d_x_y>/`` — per-channel map images

Every subcommand prints exactly one summary line to stdout; progress goes
to stderr.  Every failure path prints exactly one line starting with
``error:`` to stderr and exits nonzero.  A ``--config`` file of flat
``key = value`` lines supplies defaults; explicit flags override it.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from . import reports as rep
from .data import (
    NUM_CLASSES,
    CANONICAL_SCRIPTS,
    DatasetSplit,
    discover_corpus,
    load_image,
    load_split,
    save_split,
    split_dataset,
)
from .engine import gradcheck as gc
from .engine.adam import AdamConfig
from .fsio import atomic_write_text
from .metrics import evaluate as evaluate_predictions
from .pipeline import (
    CANONICAL_SPECS,
    InputCache,
    NetworkSpec,
    TrainConfig,
    build_network,
    extract_features,
    features_for_array,
    fuse_matrix,
    parse_selector,
    predict_classes,
    softmax_probs,
    subset_report_plan,
    train_cnn,
    train_fusion_mlp,
)

_CONFIG_KEYS = {
    "corpus", "out", "seed", "epochs", "batch_size", "ratio", "lr", "beta1",
    "beta2", "epsilon", "dropout", "target_accuracy", "spec", "selector",
    "split", "image", "seeds", "step",
}


class CliError(Exception):
    """User-facing failure; rendered as a single ``error:`` line."""


class _Parser(argparse.ArgumentParser):
    """Argparse variant whose failures emit a single ``error:`` line."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(2)


def _progress(message: str) -> None:
    print(message, file=sys.stderr)


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` comments and blanks ignored."""
    values = {}
    for ln, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, eq, value = stripped.partition("=")
        if not eq:
            raise CliError(f"{path}:{ln}: expected 'key = value', got {line!r}")
        key = key.strip().replace("-", "_")
        if key not in _CONFIG_KEYS:
            raise CliError(f"{path}:{ln}: unknown configuration key {key!r}")
        values[key] = value.strip()
    return values


def _add_common(parser):
    parser.add_argument("--out", default="run", help="output directory")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--config", default=None,
                        help="key = value defaults file; flags override")


def _add_training(parser):
    parser.add_argument("--epochs", type=int, default=30)
    parser.add_argument("--batch-size", type=int, default=50)
    parser.add_argument("--lr", type=float, default=1e-3)
    parser.add_argument("--beta1", type=float, default=0.9)
    parser.add_argument("--beta2", type=float, default=0.999)
    parser.add_argument("--epsilon", type=float, default=1e-8)
    parser.add_argument("--dropout", type=float, default=0.5)
    parser.add_argument("--target-accuracy", type=float, default=None,
                        help="stop after the first epoch reaching this "
                             "running train accuracy")


def build_parser():
    parser = _Parser(prog="scriptfuse",
                     description="word-level handwritten script identification")
    sub = parser.add_subparsers(dest="command", metavar="command",
                                parser_class=_Parser)

    p = sub.add_parser("split",
                       help="write a stratified train/test membership file")
    p.add_argument("--corpus", required=True)
    p.add_argument("--ratio", type=float, default=0.8)
    _add_common(p)

    p = sub.add_parser("train-cnn",
                       help="train one network (or all ten) and checkpoint it")
    p.add_argument("--spec", required=True,
                   help="'d,x,y' or 'all'")
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", default=None,
                   help="membership file (default: <out>/split.csv, created "
                        "from the corpus if absent)")
    p.add_argument("--ratio", type=float, default=0.8)
    _add_training(p)
    _add_common(p)

    p = sub.add_parser("extract",
                       help="write per-network feature stores for a split")
    p.add_argument("--spec", default="all")
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", default=None)
    _add_common(p)

    p = sub.add_parser("train-fusion",
                       help="train the fusion classifier on stored features")
    p.add_argument("--selector", default="all")
    p.add_argument("--split", default=None)
    _add_training(p)
    _add_common(p)

    p = sub.add_parser("evaluate",
                       help="train a fusion head per selector and report "
                            "metrics on the test side")
    p.add_argument("--selector", default="all",
                   help="'all', 's', 'f', 'd,x', 'd,x,y', '+'-unions, or "
                        "'sweep' for the standard subset table")
    p.add_argument("--split", default=None)
    _add_training(p)
    _add_common(p)

    p = sub.add_parser("predict",
                       help="classify one image with the fused system")
    p.add_argument("--image", required=True)
    p.add_argument("--selector", default="all")
    _add_common(p)

    p = sub.add_parser("dump-activations",
                       help="write per-channel conv/pool map images")
    p.add_argument("--spec", required=True)
    p.add_argument("--image", required=True)
    _add_common(p)

    p = sub.add_parser("gradcheck",
                       help="finite-difference check of every backward pass")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--step", type=float, default=gc.STEP)
    _add_common(p)

    return parser


def _apply_config(args):
    if getattr(args, "config", None) is None:
        return args
    file_values = read_config_file(args.config)
    argv_given = {a.split("=")[0].lstrip("-").replace("-", "_")
                  for a in sys.argv[1:] if a.startswith("--")}
    casts = {"seed": int, "epochs": int, "batch_size": int, "seeds": int,
             "ratio": float, "lr": float, "beta1": float, "beta2": float,
             "epsilon": float, "dropout": float, "target_accuracy": float,
             "step": float}
    for key, raw in file_values.items():
        try:
            value = casts[key](raw) if key in casts else raw
        except ValueError:
            raise CliError(f"configuration key {key} has non-numeric value {raw!r}")
        if hasattr(args, key) and key not in argv_given:
            setattr(args, key, value)
    return args


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        optimizer=AdamConfig(learning_rate=args.lr, beta1=args.beta1,
                             beta2=args.beta2, epsilon=args.epsilon),
        seed=args.seed,
        dropout_p=args.dropout,
        target_accuracy=args.target_accuracy,
    )


def _out_dir(args) -> Path:
    return Path(args.out)


def _resolve_split(args, allow_create: bool) -> tuple[DatasetSplit, Path]:
    explicit = getattr(args, "split", None)
    path = Path(explicit) if explicit else _out_dir(args) / "split.csv"
    if path.is_file():
        split = load_split(path)
    elif explicit or not allow_create:
        raise CliError(f"split file not found: {path}")
    else:
        manifest = discover_corpus(args.corpus)
        split = split_dataset(manifest, ratio=args.ratio, seed=args.seed)
        save_split(split, path)
        _progress(f"wrote new split {path}")
    if len(split.class_names) != NUM_CLASSES:
        raise CliError(
            f"split covers {len(split.class_names)} classes, need "
            f"{NUM_CLASSES}: {list(split.class_names)}")
    return split, path


def _parse_spec_arg(text: str):
    if text.strip() == "all":
        return list(CANONICAL_SPECS)
    return [NetworkSpec.parse(text)]


def _cnn_ckpt(out: Path, spec: NetworkSpec) -> Path:
    return out / "checkpoints" / f"cnn_{spec.label}.ckpt"


def _label_slug(label: str) -> str:
    return label.replace(",", "_").replace("+", "-")


def _cmd_split(args) -> str:
    manifest = discover_corpus(args.corpus)
    split = split_dataset(manifest, ratio=args.ratio, seed=args.seed)
    path = _out_dir(args) / "split.csv"
    save_split(split, path)
    return (f"split: {len(split.train)} train / {len(split.test)} test "
            f"across {len(split.class_names)} classes -> {path}")


def _cmd_train_cnn(args) -> str:
    specs = _parse_spec_arg(args.spec)
    split, _ = _resolve_split(args, allow_create=True)
    config = _train_config(args)
    cache = InputCache(args.corpus)
    out = _out_dir(args)
    finals = []
    for i, spec in enumerate(specs):
        network = build_network(spec, seed=args.seed, dropout_p=args.dropout)
        history = train_cnn(network, split.train, cache, split.class_names,
                            config)
        for h in history:
            _progress(f"[{spec}] epoch {h.epoch}: loss {h.loss:.4f} "
                      f"acc {h.accuracy:.4f}")
        path = _cnn_ckpt(out, spec)
        ckpt.save_checkpoint(network, path, seed=args.seed, history=history)
        last = history[-1].accuracy if history else float("nan")
        finals.append(f"{spec}:{last:.3f}" if history else f"{spec}:untrained")
        _drop_if_done(cache, specs, i)
    return (f"train-cnn: {len(specs)} network(s) -> {out / 'checkpoints'} "
            f"[{' '.join(finals)}]")


def _drop_if_done(cache: InputCache, specs, i: int) -> None:
    """Free a prepared dataset once no later spec shares its (domain, size)."""
    spec = specs[i]
    combo = (spec.domain, spec.input_size)
    if all((s.domain, s.input_size) != combo for s in specs[i + 1:]):
        cache.drop_datasets(*combo)


def _load_cnn(out: Path, spec: NetworkSpec):
    path = _cnn_ckpt(out, spec)
    if not path.is_file():
        raise CliError(f"no checkpoint for network {spec}: {path} "
                       f"(run train-cnn first)")
    return ckpt.load_checkpoint(path, expected_spec=spec)


def _cmd_extract(args) -> str:
    specs = _parse_spec_arg(args.spec)
    split, _ = _resolve_split(args, allow_create=False)
    cache = InputCache(args.corpus)
    out = _out_dir(args)
    written = 0
    for i, spec in enumerate(specs):
        network = _load_cnn(out, spec)
        for side, entries in (("train", split.train), ("test", split.test)):
            images, _ = cache.dataset(entries, split.class_names,
                                      spec.domain, spec.input_size)
            feats = features_for_array(network, images)
            path = out / "features" / f"{side}_{spec.label}.csv"
            rep.write_features(path, [rel for rel, _ in entries], feats)
            written += 1
            _progress(f"[{spec}] {side}: {feats.shape[0]} x {feats.shape[1]} "
                      f"-> {path}")
        _drop_if_done(cache, specs, i)
    return f"extract: {written} feature stores -> {out / 'features'}"


def _load_feature_side(out: Path, specs, side: str):
    """Fused matrix + sample ids for one split side, canonical column order."""
    by_spec = {}
    ids = None
    for spec in specs:
        path = out / "features" / f"{side}_{spec.label}.csv"
        if not path.is_file():
            raise CliError(f"feature store not found: {path} (run extract first)")
        sids, matrix = rep.read_features(path)
        if ids is None:
            ids = sids
        elif sids != ids:
            raise CliError(f"feature store {path} lists different samples "
                           f"than its siblings")
        by_spec[spec] = matrix
    return ids, fuse_matrix(by_spec, specs)


def _labels_for(ids, split: DatasetSplit, side: str) -> np.ndarray:
    lookup = dict(split.train if side == "train" else split.test)
    index = {cls: i for i, cls in enumerate(split.class_names)}
    try:
        return np.array([index[lookup[sid]] for sid in ids], dtype=np.int64)
    except KeyError as exc:
        raise CliError(f"feature store sample {exc.args[0]!r} is not in the "
                       f"{side} side of the split")


def _cmd_train_fusion(args) -> str:
    label, specs = parse_selector(args.selector)
    split, _ = _resolve_split(args, allow_create=False)
    out = _out_dir(args)
    ids, features = _load_feature_side(out, specs, "train")
    labels = _labels_for(ids, split, "train")
    config = _train_config(args)
    head, history = train_fusion_mlp(features, labels, config,
                                     selector_label=label)
    for h in history:
        _progress(f"[fusion {label}] epoch {h.epoch}: loss {h.loss:.4f} "
                  f"acc {h.accuracy:.4f}")
    path = out / "checkpoints" / f"fusion_{_label_slug(label)}.ckpt"
    ckpt.save_checkpoint(head, path, seed=args.seed, history=history)
    last = history[-1].accuracy if history else float("nan")
    return (f"train-fusion[{label}]: {features.shape[0]} samples x "
            f"{features.shape[1]} features, final acc {last:.3f} -> {path}")


def _evaluate_one(args, split, out: Path, label: str, specs):
    config = _train_config(args)
    head_path = out / "checkpoints" / f"fusion_{_label_slug(label)}.ckpt"
    train_ids, train_x = _load_feature_side(out, specs, "train")
    if head_path.is_file():
        head = ckpt.load_checkpoint(head_path)
        if head.feature_len != train_x.shape[1]:
            raise CliError(
                f"fusion checkpoint {head_path} expects {head.feature_len} "
                f"features but selector {label} fuses {train_x.shape[1]}")
    else:
        labels = _labels_for(train_ids, split, "train")
        head, history = train_fusion_mlp(train_x, labels, config,
                                         selector_label=label)
        ckpt.save_checkpoint(head, head_path, seed=args.seed, history=history)
        _progress(f"[{label}] trained fusion head "
                  f"({len(history)} epochs) -> {head_path}")
    test_ids, test_x = _load_feature_side(out, specs, "test")
    test_labels = _labels_for(test_ids, split, "test")
    preds = predict_classes(head, test_x)
    matrix, report = evaluate_predictions(preds, test_labels,
                                          num_classes=NUM_CLASSES)
    report_path = out / "reports" / f"{_label_slug(label)}.txt"
    rep.write_report(report_path, split.class_names, matrix, report)
    return matrix, report, report_path


def _cmd_evaluate(args) -> str:
    split, _ = _resolve_split(args, allow_create=False)
    out = _out_dir(args)
    if args.selector.strip() == "sweep":
        rows = []
        for label, specs in subset_report_plan():
            _, report, _ = _evaluate_one(args, split, out, label, specs)
            rows.append(f"{_label_slug(label)},{report.accuracy!r},"
                        f"{report.macro_precision!r},{report.macro_recall!r},"
                        f"{report.macro_f_score!r}")
            _progress(f"[{label}] accuracy {report.accuracy:.4f}")
        table = out / "reports" / "subsets.csv"
        header = "selector,accuracy,macro_precision,macro_recall,macro_f_score"
        atomic_write_text(table, header + "\n" + "\n".join(rows) + "\n")
        return f"evaluate[sweep]: {len(rows)} subsets -> {table}"
    label, specs = parse_selector(args.selector)
    matrix, report, report_path = _evaluate_one(args, split, out, label, specs)
    correct = int(matrix.counts.diagonal().sum())
    return (f"evaluate[{label}]: accuracy {report.accuracy:.4f} "
            f"({correct}/{matrix.total}) -> {report_path}")


def _cmd_predict(args) -> str:
    label, specs = parse_selector(args.selector)
    out = _out_dir(args)
    head_path = out / "checkpoints" / f"fusion_{_label_slug(label)}.ckpt"
    if not head_path.is_file():
        raise CliError(f"no fusion checkpoint for selector {label}: "
                       f"{head_path} (run train-fusion or evaluate first)")
    head = ckpt.load_checkpoint(head_path)
    image = load_image(args.image)
    parts = []
    for spec in specs:
        network = _load_cnn(out, spec)
        parts.append(extract_features(network, image))
    fused = np.concatenate(parts).astype(np.float32)
    if fused.shape[0] != head.feature_len:
        raise CliError(f"selector {label} fuses {fused.shape[0]} features but "
                       f"the checkpoint expects {head.feature_len}")
    logits = head.forward(fused[None], train=False)
    probs = softmax_probs(logits)[0]
    split_path = out / "split.csv"
    names = (load_split(split_path).class_names if split_path.is_file()
             else CANONICAL_SCRIPTS)
    best = int(probs.argmax())
    name = names[best] if best < len(names) else str(best)
    return f"predict: {args.image} -> {name} (p={probs[best]:.4f})"


def _cmd_dump_activations(args) -> str:
    from .activations import dump_activations

    spec = NetworkSpec.parse(args.spec)
    out = _out_dir(args)
    network = _load_cnn(out, spec)
    image = load_image(args.image)
    target = out / "activations" / spec.label
    written = dump_activations(network, image, target)
    return f"dump-activations[{spec}]: {len(written)} maps -> {target}"


def _cmd_gradcheck(args) -> str:
    if args.seeds < 1:
        raise CliError(f"--seeds must be >= 1, got {args.seeds}")
    results = gc.run_suite(
        seeds=range(args.seeds), step=args.step,
        on_progress=lambda r: _progress(
            f"[seed {r.seed}] {r.name}: max rel err {r.max_rel_err:.3e}"))
    worst = gc.suite_max_error(results)
    if not gc.suite_passed(results):
        failing = sorted({r.name for r in results if not r.passed})
        raise CliError(f"gradient check failed: max rel err {worst:.3e} "
                       f"exceeds {gc.TOLERANCE:g} in {', '.join(failing)}")
    return (f"gradcheck: {len(results)} checks over {args.seeds} seeds, "
            f"max rel err {worst:.3e} (tolerance {gc.TOLERANCE:g})")


_COMMANDS = {
    "split": _cmd_split,
    "train-cnn": _cmd_train_cnn,
    "extract": _cmd_extract,
    "train-fusion": _cmd_train_fusion,
    "evaluate": _cmd_evaluate,
    "predict": _cmd_predict,
    "dump-activations": _cmd_dump_activations,
    "gradcheck": _cmd_gradcheck,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code or 0
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("error: a subcommand is required", file=sys.stderr)
        return 2
    try:
        args = _apply_config(args)
        summary = _COMMANDS[args.command](args)
    except (CliError, ckpt.CheckpointError, ValueError, OSError,
            FloatingPointError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(summary)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
