"""Soft-margin RBF support vector machine trained by SMO.

The solver is SMO with second-order working-set selection (Fan, Chen and
Lin, JMLR 2005), the method used by LIBSVM. It stops when the maximal
KKT violation ``m(a) - M(a)`` drops below ``tol``, which bounds every
per-sample KKT residual of the returned model by ``tol``.
"""

import csv
import io
import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.spatial.distance import cdist

from ._rng import derive_seed

MODEL_FORMAT = "ppdsteg-svm"
MODEL_VERSION = 1

PAPER_C = tuple(2.0 ** e for e in range(-5, 16, 2))
PAPER_GAMMA = tuple(2.0 ** e for e in range(-15, 4, 2))


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class GridSpec:
    C_values: tuple = PAPER_C
    gamma_values: tuple = PAPER_GAMMA
    folds: int = 5

    def __post_init__(self):
        if not self.C_values or not self.gamma_values:
            raise ValueError("grid must not be empty")
        if self.folds < 2:
            raise ValueError("at least two folds are needed")


@dataclass(frozen=True)
class SvmModel:
    support_vectors: np.ndarray
    dual_coefficients: np.ndarray
    bias: float
    gamma: float
    C: float
    metadata: dict = field(default_factory=dict)

    @property
    def feature_dim(self):
        return self.support_vectors.shape[1]


def rbf_kernel(a, b, gamma):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return math.exp(-gamma * float(np.sum((a - b) ** 2)))


def rbf_kernel_matrix(X, Y, gamma):
    return np.exp(-gamma * cdist(np.atleast_2d(X), np.atleast_2d(Y), "sqeuclidean"))


@numba.njit(cache=True)
def _smo(K, y, C, tol, max_iter):
    n = y.shape[0]
    alpha = np.zeros(n)
    grad = -np.ones(n)
    tau = 1e-12
    it = 0
    converged = False
    while it < max_iter:
        # i: maximal violator in I_up
        gmax = -np.inf
        i = -1
        for t in range(n):
            if (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0):
                v = -y[t] * grad[t]
                if v > gmax:
                    gmax = v
                    i = t
        # j: second-order choice in I_low
        gmin = np.inf
        j = -1
        best = np.inf
        for t in range(n):
            if (y[t] < 0 and alpha[t] < C) or (y[t] > 0 and alpha[t] > 0):
                v = -y[t] * grad[t]
                if v < gmin:
                    gmin = v
                if i >= 0:
                    b = gmax - v
                    if b > 0:
                        a = K[i, i] + K[t, t] - 2.0 * K[i, t]
                        if a <= 0:
                            a = tau
                        obj = -(b * b) / a
                        if obj <= best:
                            best = obj
                            j = t
        if i < 0 or j < 0 or gmax - gmin < tol:
            converged = True
            break
        it += 1

        old_i = alpha[i]
        old_j = alpha[j]
        if y[i] != y[j]:
            quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
            if quad <= 0:
                quad = tau
            delta = (-grad[i] - grad[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            else:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
        else:
            quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
            if quad <= 0:
                quad = tau
            delta = (grad[i] - grad[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = total - C
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = total
            if total > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = total - C
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = total

        di = alpha[i] - old_i
        dj = alpha[j] - old_j
        for t in range(n):
            grad[t] += y[t] * (y[i] * K[t, i] * di + y[j] * K[t, j] * dj)

    # bias: mean over free vectors, else midpoint of the feasible interval
    ub = np.inf
    lb = -np.inf
    free_sum = 0.0
    n_free = 0
    for t in range(n):
        yg = y[t] * grad[t]
        if alpha[t] >= C:
            if y[t] < 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        elif alpha[t] <= 0:
            if y[t] > 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        else:
            free_sum += yg
            n_free += 1
    if n_free > 0:
        rho = free_sum / n_free
    else:
        rho = (ub + lb) / 2.0
    return alpha, -rho, it, converged


def _check_labels(y):
    y = np.asarray(y, dtype=float)
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be -1 (cover) or +1 (stego)")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise ValueError("training data must contain both classes")
    return y


def solve_dual(K, y, C, tol=1e-3, max_iter=None):
    """Run SMO on a precomputed kernel matrix.

    Returns ``(alpha, bias, iterations)``; raises ConvergenceError when the
    iteration budget (default ``max(10**7, 100 n)``) runs out.
    """
    y = _check_labels(y)
    if C <= 0:
        raise ValueError("C must be positive")
    n = y.shape[0]
    if max_iter is None:
        max_iter = max(10 ** 7, 100 * n)
    alpha, bias, it, ok = _smo(np.ascontiguousarray(K, dtype=float), y, float(C),
                               float(tol), int(max_iter))
    if not ok:
        raise ConvergenceError(f"SMO did not reach tol={tol} within {max_iter} iterations")
    return alpha, bias, it


def dual_objective(alpha, y, K):
    """Dual objective ``sum(alpha) - 1/2 (alpha y)^T K (alpha y)`` (to maximise)."""
    ay = alpha * y
    return float(alpha.sum() - 0.5 * ay @ K @ ay)


def train_smo(X, y, C, gamma, tol=1e-3, max_iter=None, metadata=None):
    X = np.asarray(X, dtype=float)
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    K = rbf_kernel_matrix(X, X, gamma)
    y = _check_labels(y)
    alpha, bias, it = solve_dual(K, y, C, tol, max_iter)
    violation, balance = kkt_audit(alpha, bias, K, y, C)
    if violation > tol * (1 + 1e-9) or balance > 1e-9:
        raise ConvergenceError(f"KKT audit failed: residual {violation:.3g}, "
                               f"|sum alpha y| {balance:.3g}")
    sv = alpha > 0
    meta = {"tol": tol, "iterations": it}
    meta.update(metadata or {})
    return SvmModel(X[sv].copy(), (alpha * y)[sv], float(bias), float(gamma), float(C), meta)


def decision_function(model, X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.feature_dim:
        raise ValueError(f"feature dimension {X.shape[1]} does not match model ({model.feature_dim})")
    K = rbf_kernel_matrix(X, model.support_vectors, model.gamma)
    return K @ model.dual_coefficients + model.bias


def predict(model, features):
    """Decision value and label of one sample; a value of exactly 0 maps to +1."""
    value = float(decision_function(model, features)[0])
    return value, (1 if value >= 0 else -1)


def predict_labels(model, X):
    return np.where(decision_function(model, X) >= 0, 1, -1)


def kkt_audit(alpha, bias, K, y, C):
    """Largest KKT residual of a dual solution and ``|sum(alpha_i y_i)|``.

    Residuals: ``1 - y f`` for alpha = 0, ``|y f - 1|`` for free vectors,
    ``y f - 1`` for alpha = C.
    """
    y = np.asarray(y, dtype=float)
    margin = y * (K @ (alpha * y) + bias)
    at_zero = alpha <= 0
    at_c = alpha >= C
    free = ~(at_zero | at_c)
    worst = 0.0
    if at_zero.any():
        worst = max(worst, float(np.max(1 - margin[at_zero])))
    if at_c.any():
        worst = max(worst, float(np.max(margin[at_c] - 1)))
    if free.any():
        worst = max(worst, float(np.max(np.abs(margin[free] - 1))))
    return worst, abs(float(np.sum(alpha * y)))


# -- cross-validated grid search -------------------------------------------

@dataclass
class GridResult:
    best_C: float
    best_gamma: float
    table: np.ndarray  # cv accuracy, rows C, columns gamma
    grid: GridSpec
    failures: int = 0

    def rows(self):
        for a, C in enumerate(self.grid.C_values):
            for b, g in enumerate(self.grid.gamma_values):
                yield C, g, self.table[a, b]


def _sample_key(seed, sample_id):
    return derive_seed(seed, "fold", sample_id)


def assign_folds(y, ids, folds, seed):
    """Stratified fold numbers that depend only on (seed, id, label)."""
    y = np.asarray(y)
    out = np.empty(len(y), dtype=np.int64)
    for label in np.unique(y):
        members = [k for k in range(len(y)) if y[k] == label]
        if len(members) < folds:
            raise ValueError(f"class {label:+g} has {len(members)} samples, fewer than {folds} folds")
        members.sort(key=lambda k: (_sample_key(seed, ids[k]), str(ids[k])))
        for rank, k in enumerate(members):
            out[k] = rank % folds
    return out


def grid_search(X, y, grid=None, seed=0, ids=None, tol=1e-3, log=None):
    """Stratified k-fold CV accuracy for every (C, gamma) pair.

    The best cell maximises accuracy; ties go to the smaller C, then the
    smaller gamma. Samples are put in a canonical order keyed on their
    ids so the table does not depend on the input order.
    """
    grid = grid or GridSpec()
    X = np.asarray(X, dtype=float)
    y = _check_labels(y)
    if ids is None:
        ids = [str(k) for k in range(len(y))]
    ids = [str(i) for i in ids]
    if len(set(ids)) != len(ids):
        raise ValueError("sample ids must be unique")
    order = sorted(range(len(y)), key=lambda k: (_sample_key(seed, ids[k]), ids[k]))
    X, y = X[order], y[order]
    ids = [ids[k] for k in order]
    fold = assign_folds(y, ids, grid.folds, seed)

    table = np.zeros((len(grid.C_values), len(grid.gamma_values)))
    failures = 0
    for b, gamma in enumerate(grid.gamma_values):
        K = rbf_kernel_matrix(X, X, gamma)
        for a, C in enumerate(grid.C_values):
            correct = 0
            for f in range(grid.folds):
                tr = fold != f
                te = ~tr
                try:
                    alpha, bias, _ = solve_dual(K[np.ix_(tr, tr)], y[tr], C, tol)
                except ConvergenceError:
                    failures += 1
                    if log:
                        log(f"fold {f} at C={C:g}, gamma={gamma:g} did not converge")
                    continue
                values = K[np.ix_(te, tr)] @ (alpha * y[tr]) + bias
                correct += int(np.sum(np.where(values >= 0, 1.0, -1.0) == y[te]))
            table[a, b] = correct / len(y)
    best = max(((table[a, b], -a, -b) for a in range(table.shape[0])
                for b in range(table.shape[1])))
    a, b = -best[1], -best[2]
    return GridResult(grid.C_values[a], grid.gamma_values[b], table, grid, failures)


def write_grid_csv(path, result):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["C", "gamma", "cv_accuracy"])
        for C, g, acc in result.rows():
            w.writerow([f"{C:.17g}", f"{g:.17g}", f"{acc:.17g}"])


# -- persistence ------------------------------------------------------------

def _fmt(x):
    return f"{float(x):.17g}"


def dumps_model(model):
    out = io.StringIO()
    out.write(f"{MODEL_FORMAT} {MODEL_VERSION}\n")
    header = {
        "feature_dim": str(model.feature_dim),
        "C": _fmt(model.C),
        "gamma": _fmt(model.gamma),
        "bias": _fmt(model.bias),
        "n_sv": str(len(model.dual_coefficients)),
    }
    for key in sorted(model.metadata):
        if key in header:
            continue
        value = str(model.metadata[key])
        if "\n" in value or "=" in key:
            raise ValueError(f"metadata {key!r} cannot be serialised")
        header[key] = value
    for key, value in header.items():
        out.write(f"{key}={value}\n")
    out.write("end_header\n")
    for coef, sv in zip(model.dual_coefficients, model.support_vectors):
        out.write(" ".join([_fmt(coef)] + [_fmt(v) for v in sv]) + "\n")
    return out.getvalue()


def loads_model(text):
    lines = text.splitlines()
    if not lines or lines[0].split() != [MODEL_FORMAT, str(MODEL_VERSION)]:
        raise ValueError("not a ppdsteg SVM model file (or unsupported version)")
    header = {}
    k = 1
    while k < len(lines) and lines[k] != "end_header":
        key, _, value = lines[k].partition("=")
        header[key] = value
        k += 1
    if k == len(lines):
        raise ValueError("model file has no end_header line")
    rows = [list(map(float, ln.split())) for ln in lines[k + 1:] if ln.strip()]
    dim = int(header.pop("feature_dim"))
    n_sv = int(header.pop("n_sv"))
    if len(rows) != n_sv or any(len(r) != dim + 1 for r in rows):
        raise ValueError("support vector block does not match the header")
    data = np.array(rows, dtype=float).reshape(n_sv, dim + 1)
    C = float(header.pop("C"))
    gamma = float(header.pop("gamma"))
    bias = float(header.pop("bias"))
    return SvmModel(data[:, 1:].copy(), data[:, 0].copy(), bias, gamma, C, header)


def save_model(model, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_model(model))


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return loads_model(fh.read())
