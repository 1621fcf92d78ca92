"""Command line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 data error.
Any option can also come from ``--config FILE`` holding ``key=value``
lines, keys spelled like the long options (``cover-dir=covers``).
Explicit flags win over the file.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import analysis, experiment, svm
from ._rng import derive_seed
from .embed import EmbedParams, embed_rate
from .image_io import ImageFormatError, list_images, load_image, save_image
from .patterns import PpdParams, extract_features

log = logging.getLogger("ppdsteg")

EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _power_list(text):
    # accepts "2^-5,2^-3" as well as plain numbers
    out = []
    for v in text.split(","):
        v = v.strip()
        if not v:
            continue
        if "^" in v:
            base, exp = v.split("^")
            out.append(float(base) ** float(exp))
        else:
            out.append(float(v))
    return tuple(out)


def _grid(args):
    C = args.C_values or svm.PAPER_C
    g = args.gamma_values or svm.PAPER_GAMMA
    return svm.GridSpec(tuple(C), tuple(g), args.folds)


def _add_grid(p):
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--C-values", type=_power_list, default=None,
                   help="comma separated C grid (default 2^-5,2^-3,...,2^15)")
    p.add_argument("--gamma-values", type=_power_list, default=None,
                   help="comma separated gamma grid (default 2^-15,...,2^3)")


def _add_corpus(p):
    p.add_argument("--cover-dir", type=Path)
    p.add_argument("--stego-dir", type=Path)
    p.add_argument("--embed-rate", type=float)
    p.add_argument("--S", type=int, default=4)
    p.add_argument("--split", type=float, default=0.5)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--name", default="corpus")
    p.add_argument("--out", type=Path)
    _add_grid(p)


def build_parser():
    parser = _Parser(prog="ppdsteg", description="PPD steganalysis toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def cmd(name, help_, seed="required"):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", type=Path, help="key=value configuration file")
        p.add_argument("--seed", type=int, default=None)
        p.set_defaults(seed_policy=seed)
        return p

    p = cmd("embed", "LSB-matching embedding of random bits")
    p.add_argument("--in", dest="input", type=Path)
    p.add_argument("--out", type=Path)
    p.add_argument("--rate", type=float, default=1.0)

    p = cmd("features", "extract PPD features into a CSV cache")
    p.add_argument("--in", dest="input", type=Path, nargs="+")
    p.add_argument("--label", choices=("cover", "stego", "unknown"), default="unknown")
    p.add_argument("--S", type=int, default=4)
    p.add_argument("--out", type=Path)
    p.add_argument("--append", action="store_true", help="append rows to an existing cache")

    p = cmd("train", "grid search and train an SVM on a feature cache")
    p.add_argument("--features", type=Path)
    p.add_argument("--out", type=Path)
    p.add_argument("--C", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--tol", type=float, default=1e-3)
    _add_grid(p)

    p = cmd("predict", "classify images or cached features", seed="optional")
    p.add_argument("--model", type=Path)
    p.add_argument("--features", type=Path)
    p.add_argument("--in", dest="input", type=Path, nargs="+")
    p.add_argument("--out", type=Path)

    p = cmd("evaluate", "train/test evaluation on a corpus")
    _add_corpus(p)

    p = cmd("roc", "ROC curve of a model on a labelled feature cache", seed="optional")
    p.add_argument("--model", type=Path)
    p.add_argument("--features", type=Path)
    p.add_argument("--out", type=Path)

    p = cmd("sweep-s", "accuracy for several S values and rates")
    _add_corpus(p)
    p.add_argument("--S-values", type=_ints, default=[2, 3, 4, 5])
    p.add_argument("--rates", type=_floats, default=None)

    p = cmd("shift-experiment", "Monte Carlo d-class shift of a block")
    p.add_argument("--block", type=_ints, help="x12,x13,x22,x23,x33")
    p.add_argument("--S", type=int, default=4)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--out", type=Path)

    p = cmd("theoretical-hist", "pattern counts over all blocks in a value range", seed="none")
    p.add_argument("--S", type=int, default=4)
    p.add_argument("--range-max", type=int, default=7)
    p.add_argument("--out", type=Path)

    p = cmd("time-features", "time feature extraction", seed="optional")
    p.add_argument("--in", dest="input", type=Path, nargs="+")
    p.add_argument("--S", type=int, default=4)
    return parser


REQUIRED = {
    "embed": ("input", "out"),
    "features": ("input", "out"),
    "train": ("features", "out"),
    "predict": ("model",),
    "evaluate": ("cover_dir",),
    "roc": ("model", "features"),
    "sweep-s": ("cover_dir",),
    "shift-experiment": ("block",),
    "theoretical-hist": (),
    "time-features": ("input",),
}


def read_config(path):
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    for n, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key] = value
    return values


def parse(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        raise UsageError("no command given")
    if args.config is not None:
        # re-parse with the file's entries placed before the explicit flags
        extra = []
        for key, value in read_config(args.config).items():
            extra += [f"--{key}"] + value.split()
        at = argv.index(args.command) + 1
        args = parser.parse_args(argv[:at] + extra + argv[at:])
    missing = [name for name in REQUIRED[args.command] if getattr(args, name, None) is None]
    if args.seed_policy == "required" and args.seed is None:
        missing.append("seed")
    if missing:
        flags = ", ".join("--" + m.replace("_", "-") for m in missing)
        raise UsageError(f"{args.command}: missing required option(s): {flags}")
    return args


# -- commands -----------------------------------------------------------------

def _collect_images(paths):
    files = []
    for p in paths:
        p = Path(p)
        files.extend(list_images(p) if p.is_dir() else [p])
    if not files:
        raise experiment.DataError("no input images")
    return files


def do_embed(args):
    img = load_image(args.input)
    save_image(embed_rate(img, EmbedParams(args.seed, args.rate)), args.out)
    log.info("wrote %s", args.out)


def do_features(args):
    files = _collect_images(args.input)
    ids, seeds, rows = [], [], []
    for f in files:
        sample_id = f.stem if args.label == "unknown" else f"{args.label}/{f.stem}"
        seed = experiment.calibration_seed(args.seed, sample_id)
        rows.append(extract_features(load_image(f), PpdParams(args.S, seed)).f)
        ids.append(sample_id)
        seeds.append(seed)
    code = {"cover": -1, "stego": 1, "unknown": 0}[args.label]
    labels = [code] * len(ids)
    if args.append and args.out.exists():
        old_ids, old_labels, S, old_seeds, old_rows = experiment.read_feature_cache(args.out)
        if S != args.S:
            raise experiment.DataError(f"cache uses S={S}, not {args.S}")
        ids, labels = old_ids + ids, list(old_labels) + labels
        seeds, rows = old_seeds + seeds, list(old_rows) + rows
    experiment.write_feature_cache(args.out, ids, labels, args.S, seeds, np.vstack(rows))
    print(f"{len(files)} image(s), {args.S ** 4} features -> {args.out}")


def do_train(args):
    ids, labels, S, _, X = experiment.read_feature_cache(args.features)
    keep = labels != 0
    if not keep.all():
        log.warning("ignoring %d unlabelled rows", int((~keep).sum()))
    ids = [i for i, k in zip(ids, keep) if k]
    X, y = X[keep], labels[keep].astype(float)
    if args.C is not None and args.gamma is not None:
        C, gamma = args.C, args.gamma
    else:
        res = svm.grid_search(X, y, _grid(args), derive_seed(args.seed, "grid"), ids,
                              args.tol, log.warning)
        C, gamma = res.best_C, res.best_gamma
        print(f"grid search: C={C:g} gamma={gamma:g} cv accuracy={res.table.max():.4f}")
    meta = {"S": S, "seed": args.seed, "prng": experiment.PRNG_NAME, "smoothing": "add-one"}
    model = svm.train_smo(X, y, C, gamma, args.tol, metadata=meta)
    svm.save_model(model, args.out)
    print(f"{len(model.dual_coefficients)} support vectors -> {args.out}")


def do_predict(args):
    model = svm.load_model(args.model)
    if args.features is not None:
        ids, _, _, _, X = experiment.read_feature_cache(args.features)
    elif args.input:
        S = int(model.metadata.get("S", 4))
        seed = args.seed if args.seed is not None else 0
        files = _collect_images(args.input)
        ids = [f.stem for f in files]
        X = np.vstack([extract_features(load_image(f),
                                        PpdParams(S, experiment.calibration_seed(seed, f.stem))).f
                       for f in files])
    else:
        raise UsageError("predict needs --features or --in")
    values = svm.decision_function(model, X)
    lines = ["image_id,decision_value,label"]
    for i, v in zip(ids, values):
        lines.append(f"{i},{v:.17g},{'stego' if v >= 0 else 'cover'}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _config_from(args, **overrides):
    kw = dict(cover_dir=args.cover_dir, seed=args.seed, stego_dir=args.stego_dir,
              embed_rate=args.embed_rate, S=args.S, split_fraction=args.split,
              grid=_grid(args), output_dir=args.out, workers=args.workers, name=args.name)
    kw.update(overrides)
    return experiment.ExperimentConfig(**kw)


def do_evaluate(args):
    report = experiment.run_evaluation(_config_from(args), log.warning)
    sys.stdout.write(report.table())
    if args.out:
        print(f"outputs in {args.out}")


def do_roc(args):
    model = svm.load_model(args.model)
    _, labels, _, _, X = experiment.read_feature_cache(args.features)
    if np.any(labels == 0):
        raise experiment.DataError("ROC needs labelled rows only")
    points = experiment.roc_from_model(model, X, labels)
    if args.out:
        experiment.write_roc_csv(args.out, points)
    print(f"AUC={experiment.auc(points):.6f} ({len(points)} vertices)")


def do_sweep(args):
    rates = args.rates
    if rates is None and args.embed_rate is None and args.stego_dir is None:
        raise UsageError("sweep-s needs --rates, --embed-rate or --stego-dir")
    first = rates[0] if rates else args.embed_rate
    config = _config_from(args, embed_rate=None if args.stego_dir else first)
    rows = experiment.sweep_s(config, args.S_values, rates, log.info)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        experiment.write_sweep_csv(Path(args.out) / "sweep.csv", rows)
    print("rate,S,feature_dim,accuracy")
    for r in rows:
        print(f"{r['rate']},{r['S']},{r['feature_dim']},{r['accuracy']:.4f}")


def do_shift(args):
    if len(args.block) != 5:
        raise UsageError("--block takes five values x12,x13,x22,x23,x33")
    row = analysis.shift_experiment(args.block, args.S, args.trials, args.seed)
    exact = analysis.exact_shift_distribution(args.block, args.S)
    print(f"source class {row.source_class}, {args.trials} trials")
    print("d_class,count,expected")
    for d in range(args.S):
        print(f"{d},{row.counts[d]},{2 * args.trials * exact[d]:.3f}")
    if args.out:
        analysis.write_class_csv(args.out, {"count": row.counts})


def do_theoretical(args):
    counts = analysis.theoretical_histogram(args.S, args.range_max).counts
    if args.out:
        analysis.write_index_csv(args.out, counts)
    top = int(np.argmax(counts)) + 1
    print(f"{counts.sum()} patterns, most frequent index {top} ({counts[top - 1]})")


def do_time(args):
    files = _collect_images(args.input)
    rep = experiment.time_features(files, args.S, args.seed or 0)
    for p in rep.per_image:
        print(f"{p['image']}: {p['pixels']} px, wall {p['wall_s']:.3f} s, cpu {p['cpu_s']:.3f} s")
    print(f"total: wall {rep.total_wall_s:.3f} s, cpu {rep.total_cpu_s:.3f} s")


COMMANDS = {
    "embed": do_embed, "features": do_features, "train": do_train, "predict": do_predict,
    "evaluate": do_evaluate, "roc": do_roc, "sweep-s": do_sweep,
    "shift-experiment": do_shift, "theoretical-hist": do_theoretical, "time-features": do_time,
}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse(argv)
    except UsageError as exc:
        print(f"ppdsteg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (UsageError, experiment.ConfigError) as exc:
        print(f"ppdsteg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (experiment.DataError, ImageFormatError, svm.ConvergenceError, ValueError,
            OSError) as exc:
        print(f"ppdsteg: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
