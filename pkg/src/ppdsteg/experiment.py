"""Experiment orchestration: corpora, splits, evaluation, ROC, S sweeps, timing.

Randomness fans out from one master seed through ``derive_seed``:

* ``("stego", stem)``        message embedded when synthesising a stego image
* ``("calibration", id)``    calibration embedding inside feature extraction
* ``("split", stem)``        order used for the train/test split
* ``("grid",)``              fold assignment of the grid search

Samples are grouped by file stem. A cover and a stego image with the
same stem always land in the same half, so no test image's cover is ever
seen during training.
"""

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import svm
from ._rng import PRNG_NAME, derive_seed
from .embed import EmbedParams, embed_rate
from .image_io import GrayImage, ImageFormatError, as_array, list_images, load_image
from .patterns import PpdParams, extract_features

LABELS = {"cover": -1, "stego": 1}


class ConfigError(ValueError):
    """Invalid or contradictory experiment configuration."""


class DataError(RuntimeError):
    """Corpus problems: empty directories, unreadable images, overlaps."""


@dataclass(frozen=True)
class ExperimentConfig:
    cover_dir: Path
    seed: int
    stego_dir: Path = None
    embed_rate: float = None
    S: int = 4
    split_fraction: float = 0.5
    grid: svm.GridSpec = field(default_factory=svm.GridSpec)
    output_dir: Path = None
    tol: float = 1e-3
    workers: int = 1
    name: str = "corpus"

    def __post_init__(self):
        if (self.stego_dir is None) == (self.embed_rate is None):
            raise ConfigError("give exactly one of a stego directory or an embedding rate")
        if self.embed_rate is not None and not (0 < self.embed_rate <= 1):
            raise ConfigError(f"embedding rate must lie in (0, 1], got {self.embed_rate}")
        if not (0 < self.split_fraction < 1):
            raise ConfigError("split fraction must lie in (0, 1)")
        if not (2 <= self.S <= 16):
            raise ConfigError(f"S must lie in [2, 16], got {self.S}")


@dataclass
class Sample:
    id: str
    group: str
    label: int
    path: Path
    synth_seed: int = None
    rate: float = None


@dataclass
class EvalReport:
    accuracy: float
    tp: int
    fp: int
    tn: int
    fn: int
    training_accuracy: float
    C: float
    gamma: float
    cv_accuracy: float
    n_train: int
    n_test: int
    S: int
    feature_dim: int
    rate: float
    seed: int
    name: str = "corpus"
    auc: float = None
    prng: str = PRNG_NAME
    smoothing: str = "add-one"
    grid_failures: int = 0
    timing: dict = field(default_factory=dict)

    def to_dict(self, include_timing=False):
        d = asdict(self)
        if not include_timing:
            d.pop("timing")
        return d

    def to_json(self, include_timing=False):
        return json.dumps(self.to_dict(include_timing), indent=2, sort_keys=True) + "\n"

    def table(self):
        rate = "external" if self.rate is None else f"{100 * self.rate:g}%"
        head = ["Database", "Bit rate", "Accuracy", "TP", "FP", "TN", "FN", "Training"]
        row = [self.name, rate, f"{100 * self.accuracy:.2f}%", str(self.tp), str(self.fp),
               str(self.tn), str(self.fn), f"{100 * self.training_accuracy:.2f}%"]
        widths = [max(len(a), len(b)) for a, b in zip(head, row)]
        line = lambda cells: "  ".join(c.rjust(w) for c, w in zip(cells, widths))
        extra = (f"S={self.S} ({self.feature_dim} features), C={self.C:g}, gamma={self.gamma:g}, "
                 f"cv accuracy={100 * self.cv_accuracy:.2f}%, train={self.n_train}, test={self.n_test}")
        return "\n".join([line(head), line(row), extra]) + "\n"


class PhaseTimer:
    def __init__(self):
        self.phases = {}

    def __call__(self, name):
        timer = self

        class _Phase:
            def __enter__(self):
                self.wall = time.perf_counter()
                self.cpu = time.process_time()

            def __exit__(self, *exc):
                timer.phases[name] = {"wall_s": time.perf_counter() - self.wall,
                                      "cpu_s": time.process_time() - self.cpu}

        return _Phase()


# -- corpus -----------------------------------------------------------------

def build_samples(config):
    covers = list_images(config.cover_dir) if Path(config.cover_dir).is_dir() else []
    if not covers:
        raise DataError(f"no cover images in {config.cover_dir}")
    samples = [Sample(f"cover/{p.stem}", p.stem, -1, p) for p in covers]
    if config.stego_dir is not None:
        stegos = list_images(config.stego_dir) if Path(config.stego_dir).is_dir() else []
        if not stegos:
            raise DataError(f"no stego images in {config.stego_dir}")
        samples += [Sample(f"stego/{p.stem}", p.stem, 1, p) for p in stegos]
    else:
        samples += [Sample(f"stego/{p.stem}", p.stem, 1, p,
                           derive_seed(config.seed, "stego", p.stem), config.embed_rate)
                    for p in covers]
    ids = [s.id for s in samples]
    if len(set(ids)) != len(ids):
        raise DataError("duplicate image ids (file stems must be unique per class)")
    return samples


def load_sample(sample):
    try:
        img = load_image(sample.path)
    except ImageFormatError as exc:
        raise DataError(str(exc)) from exc
    if sample.synth_seed is not None:
        img = embed_rate(img, EmbedParams(sample.synth_seed, sample.rate))
    return img


def _feature_job(job):
    sample, S, calibration_seed = job
    return extract_features(load_sample(sample), PpdParams(S, calibration_seed)).f


def calibration_seed(master, sample_id):
    return derive_seed(master, "calibration", sample_id)


def compute_features(samples, S, master_seed, workers=1):
    jobs = [(s, S, calibration_seed(master_seed, s.id)) for s in samples]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            rows = list(pool.map(_feature_job, jobs, chunksize=4))
    else:
        rows = [_feature_job(j) for j in jobs]
    dims = {len(r) for r in rows}
    if len(dims) != 1:
        raise DataError(f"feature dimension drift: {sorted(dims)}")
    return np.vstack(rows)


def split_samples(samples, fraction, seed):
    """Return (train, test) index lists; groups never straddle the halves."""
    groups = {}
    for k, s in enumerate(samples):
        groups.setdefault(s.group, []).append(k)
    # split separately per group composition so both halves stay balanced
    by_kind = {}
    for name, members in groups.items():
        kind = tuple(sorted({samples[k].label for k in members}))
        by_kind.setdefault(kind, []).append(name)
    train, test = [], []
    for kind in sorted(by_kind):
        names = sorted(by_kind[kind], key=lambda g: (derive_seed(seed, "split", g), g))
        cut = int(round(fraction * len(names)))
        for g in names[:cut]:
            train.extend(groups[g])
        for g in names[cut:]:
            test.extend(groups[g])
    train.sort()
    test.sort()
    if set(samples[k].id for k in train) & set(samples[k].id for k in test):
        raise DataError("train and test sets overlap")
    for part, name in ((train, "training"), (test, "testing")):
        labels = {samples[k].label for k in part}
        if labels != {-1, 1}:
            raise DataError(f"{name} set does not contain both classes")
    return train, test


# -- metrics ----------------------------------------------------------------

def confusion(y_true, y_pred):
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    tp = int(np.sum((y_true == 1) & (y_pred == 1)))
    fp = int(np.sum((y_true == -1) & (y_pred == 1)))
    tn = int(np.sum((y_true == -1) & (y_pred == -1)))
    fn = int(np.sum((y_true == 1) & (y_pred == -1)))
    return tp, fp, tn, fn


def roc_curve(scores, labels):
    """ROC vertices ``(fpr, tpr, threshold)`` for stego = +1 positives.

    A sample is called stego when its score is >= threshold. Tied scores
    share one vertex; the first vertex is (0, 0) at threshold +inf.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = int(np.sum(labels == 1))
    neg = int(np.sum(labels != 1))
    if pos == 0 or neg == 0:
        raise ValueError("ROC needs both classes in the test set")
    order = np.argsort(-scores, kind="stable")
    s, l = scores[order], labels[order]
    points = [(0.0, 0.0, math.inf)]
    tp = fp = 0
    k = 0
    while k < len(s):
        t = s[k]
        while k < len(s) and s[k] == t:
            if l[k] == 1:
                tp += 1
            else:
                fp += 1
            k += 1
        points.append((fp / neg, tp / pos, float(t)))
    return points


def auc(points):
    area = 0.0
    for (x0, y0, _), (x1, y1, _) in zip(points, points[1:]):
        area += (x1 - x0) * (y0 + y1) / 2
    return area


def roc_from_model(model, X, y):
    return roc_curve(svm.decision_function(model, X), y)


def write_roc_csv(path, points):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fpr", "tpr", "threshold"])
        for fpr, tpr, t in points:
            w.writerow([f"{fpr:.17g}", f"{tpr:.17g}", "inf" if math.isinf(t) else f"{t:.17g}"])


# -- feature cache ----------------------------------------------------------

def write_feature_cache(path, ids, labels, S, seeds, features):
    names = {-1: "cover", 1: "stego", 0: "unknown"}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["image_id", "label", "S", "seed"] + [f"f{k}" for k in range(1, S ** 4 + 1)])
        for i, lab, sd, row in zip(ids, labels, seeds, features):
            w.writerow([i, names[int(lab)], S, sd] + [f"{v:.17g}" for v in row])


def read_feature_cache(path):
    """Return ``(ids, labels, S, seeds, features)``; unknown labels read as 0."""
    codes = {"cover": -1, "stego": 1, "unknown": 0}
    ids, labels, seeds, rows = [], [], [], []
    S = None
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:4] != ["image_id", "label", "S", "seed"]:
            raise DataError(f"{path}: not a feature cache")
        for rec in reader:
            if not rec:
                continue
            s = int(rec[2])
            if S is None:
                S = s
            elif s != S:
                raise DataError(f"{path}: mixed S values")
            if rec[1] not in codes:
                raise DataError(f"{path}: bad label {rec[1]!r}")
            ids.append(rec[0])
            labels.append(codes[rec[1]])
            seeds.append(int(rec[3]))
            rows.append([float(v) for v in rec[4:]])
    if not rows:
        raise DataError(f"{path}: empty feature cache")
    if any(len(r) != S ** 4 for r in rows):
        raise DataError(f"{path}: feature dimension drift")
    return ids, np.array(labels), S, seeds, np.array(rows)


# -- evaluation -------------------------------------------------------------

def run_evaluation(config, log=None):
    """Train on one half of the corpus, test on the other, report metrics."""
    timer = PhaseTimer()
    samples = build_samples(config)
    train, test = split_samples(samples, config.split_fraction, config.seed)
    with timer("features"):
        X = compute_features(samples, config.S, config.seed, config.workers)
    y = np.array([s.label for s in samples], dtype=float)
    ids = [s.id for s in samples]

    with timer("grid_search"):
        grid = svm.grid_search(X[train], y[train], config.grid, derive_seed(config.seed, "grid"),
                               [ids[k] for k in train], config.tol, log)
    meta = {"S": config.S, "seed": config.seed, "prng": PRNG_NAME, "smoothing": "add-one"}
    with timer("training"):
        model = svm.train_smo(X[train], y[train], grid.best_C, grid.best_gamma, config.tol,
                              metadata=meta)
    with timer("testing"):
        train_pred = svm.predict_labels(model, X[train])
        values = svm.decision_function(model, X[test])
    test_pred = np.where(values >= 0, 1, -1)
    tp, fp, tn, fn = confusion(y[test], test_pred)
    points = roc_curve(values, y[test])
    cv_acc = float(grid.table[list(config.grid.C_values).index(grid.best_C),
                              list(config.grid.gamma_values).index(grid.best_gamma)])
    report = EvalReport(
        accuracy=(tp + tn) / len(test), tp=tp, fp=fp, tn=tn, fn=fn,
        training_accuracy=float(np.mean(train_pred == y[train])),
        C=grid.best_C, gamma=grid.best_gamma, cv_accuracy=cv_acc,
        n_train=len(train), n_test=len(test), S=config.S, feature_dim=X.shape[1],
        rate=config.embed_rate, seed=config.seed, name=config.name, auc=auc(points),
        grid_failures=grid.failures, timing=timer.phases)

    if config.output_dir is not None:
        out = Path(config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        seeds = [calibration_seed(config.seed, i) for i in ids]
        write_feature_cache(out / "features.csv", ids, y, config.S, seeds, X)
        svm.save_model(model, out / "model.txt")
        svm.write_grid_csv(out / "grid.csv", grid)
        write_roc_csv(out / "roc.csv", points)
        with open(out / "split.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["image_id", "part"])
            for k in train:
                w.writerow([ids[k], "train"])
            for k in test:
                w.writerow([ids[k], "test"])
        (out / "report.json").write_text(report.to_json(), encoding="utf-8")
        (out / "report.txt").write_text(report.table(), encoding="utf-8")
        (out / "timing.json").write_text(
            json.dumps(report.timing, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return report


def sweep_s(config, S_values, rates=None, log=None):
    """Accuracy for every (rate, S) pair; returns a list of row dicts."""
    if not S_values or any(s < 2 for s in S_values):
        raise ConfigError("S values must all be >= 2")
    rates = [config.embed_rate] if rates is None else list(rates)
    rows = []
    for rate in rates:
        for S in S_values:
            sub = None
            if config.output_dir is not None:
                tag = "external" if rate is None else f"{rate:g}"
                sub = Path(config.output_dir) / f"rate_{tag}_S{S}"
            cfg = replace(config, S=S, embed_rate=rate, output_dir=sub)
            rep = run_evaluation(cfg, log)
            rows.append({"rate": rate, "S": S, "feature_dim": rep.feature_dim,
                         "accuracy": rep.accuracy, "report": rep})
            if log:
                log(f"rate={rate} S={S}: accuracy {100 * rep.accuracy:.2f}%")
    return rows


def write_sweep_csv(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rate", "S", "feature_dim", "accuracy"])
        for r in rows:
            rate = "external" if r["rate"] is None else f"{r['rate']:g}"
            w.writerow([rate, r["S"], r["feature_dim"], f"{r['accuracy']:.17g}"])


@dataclass
class TimingReport:
    S: int
    per_image: list
    total_wall_s: float
    total_cpu_s: float


def time_features(images, S=4, seed=0):
    """Wall and CPU time of feature extraction, per image and in total.

    ``images`` may hold paths, GrayImage objects or arrays.
    """
    images = list(images)
    if not images:
        raise ValueError("no images to time")
    per_image = []
    for k, img in enumerate(images):
        name = str(img) if isinstance(img, (str, Path)) else f"image{k}"
        img = load_image(img) if isinstance(img, (str, Path)) else GrayImage(as_array(img))
        w0, c0 = time.perf_counter(), time.process_time()
        extract_features(img, PpdParams(S, derive_seed(seed, "calibration", name)))
        per_image.append({"image": name, "pixels": int(img.width * img.height),
                          "wall_s": time.perf_counter() - w0,
                          "cpu_s": time.process_time() - c0})
    return TimingReport(S, per_image, sum(p["wall_s"] for p in per_image),
                        sum(p["cpu_s"] for p in per_image))
