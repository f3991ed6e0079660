"""Tree yield regression from tracked fruit counts and tree covariates.

Records carry categorical descriptors, tree dimensions and the fruit counts
from tracking on both sides of the tree; the target is the number of fruits
from the first three flowerings. Categorical columns are one-hot encoded and
numeric ones standardized with statistics of the training rows only. The
model is a small fully connected network with rectifier hidden layers and a
single linear output, trained on mean squared error with momentum.
"""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

log = logging.getLogger(__name__)

CATEGORICAL = ("sector", "region", "var_group", "variety", "age_group")
NUMERIC = ("h", "w", "d", "cbyt_a", "cbyt_b")
# CSV header -> record field
CSV_COLUMNS = {
    "ID": "id",
    "Sector": "sector",
    "Region": "region",
    "VarG": "var_group",
    "Var": "variety",
    "AG": "age_group",
    "F1": "f1",
    "F2": "f2",
    "F3": "f3",
    "F4": "f4",
    "H": "h",
    "W": "w",
    "D": "d",
    "CbyT-A": "cbyt_a",
    "CbyT-B": "cbyt_b",
}
_MISSING = {"", "na", "nan", "none", "null", "-"}


class RegressorError(ValueError):
    pass


class ZeroVariance(RegressorError):
    def __init__(self, column: str):
        super().__init__(f"column {column!r} has zero variance")
        self.column = column


class NonFiniteLoss(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"loss became {loss} at epoch {epoch}; lower the learning rate")
        self.epoch = epoch
        self.loss = loss


class RecordFormatError(RegressorError):
    pass


@dataclass(frozen=True)
class TreeRecord:
    id: str
    sector: str
    region: str
    var_group: str
    variety: str
    age_group: str
    f1: int
    f2: int
    f3: int
    f4: int = 0
    h: float | None = None
    w: float | None = None
    d: float | None = None
    cbyt_a: int | None = None
    cbyt_b: int | None = None

    def __post_init__(self):
        for name in ("f1", "f2", "f3", "f4"):
            if getattr(self, name) < 0:
                raise RegressorError(f"tree {self.id}: {name} must be >= 0")
        for name in ("h", "w", "d"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise RegressorError(f"tree {self.id}: {name} must be positive")
        for name in ("cbyt_a", "cbyt_b"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise RegressorError(f"tree {self.id}: {name} must be >= 0")

    @property
    def target(self) -> int:
        return self.f1 + self.f2 + self.f3

    @property
    def complete(self) -> bool:
        return all(getattr(self, name) is not None for name in NUMERIC)


# ---------------------------------------------------------------- CSV

def _parse(value: str, kind, line: int, column: str):
    if value.strip().lower() in _MISSING:
        return None
    try:
        return kind(value)
    except ValueError:
        try:
            as_float = float(value)
        except ValueError:
            raise RecordFormatError(f"line {line}: bad {column} value {value!r}") from None
        if kind is int and as_float.is_integer():
            return int(as_float)
        raise RecordFormatError(f"line {line}: bad {column} value {value!r}") from None


def read_records(path) -> list[TreeRecord]:
    """Read tree records from a CSV whose header uses the yield-table names."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in CSV_COLUMNS if c not in header and c != "F4"]
        if missing:
            raise RecordFormatError(f"missing columns: {', '.join(missing)}")
        out = []
        for line, row in enumerate(reader, start=2):
            vals = {}
            for col, name in CSV_COLUMNS.items():
                raw = row.get(col, "")
                if name in ("id", *CATEGORICAL):
                    vals[name] = (raw or "").strip()
                elif name in ("h", "w", "d"):
                    vals[name] = _parse(raw or "", float, line, col)
                else:
                    vals[name] = _parse(raw or "", int, line, col)
            for name in ("f1", "f2", "f3"):
                if vals[name] is None:
                    raise RecordFormatError(f"line {line}: {name.upper()} is required")
            if vals["f4"] is None:
                vals["f4"] = 0
            try:
                out.append(TreeRecord(**vals))
            except RegressorError as exc:
                raise RecordFormatError(f"line {line}: {exc}") from None
        return out


def write_records(path, records: Iterable[TreeRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(CSV_COLUMNS))
        for r in records:
            writer.writerow(["" if getattr(r, name) is None else getattr(r, name) for name in CSV_COLUMNS.values()])


def write_predictions(path, ids: Sequence[str], predicted: Sequence[float], actual: Sequence[float]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "predicted", "actual"])
        for i, p, a in zip(ids, predicted, actual):
            writer.writerow([i, f"{p:.6g}", f"{a:.6g}"])


# ---------------------------------------------------------------- filtering

def usable_records(records: Iterable[TreeRecord]) -> list[TreeRecord]:
    """Drop records with a missing dimension or a missing side count."""
    return [r for r in records if r.complete]


def filter_by_ratio(records: Iterable[TreeRecord], threshold: float) -> list[TreeRecord]:
    """Keep trees whose tracked count covers at least ``threshold`` of the harvested fruits."""
    kept, skipped = [], []
    for r in records:
        if r.cbyt_a is None or r.cbyt_b is None:
            raise RegressorError(f"tree {r.id} lacks a tracked count")
        if r.target == 0:
            skipped.append(r.id)
            continue
        if (r.cbyt_a + r.cbyt_b) / r.target >= threshold:
            kept.append(r)
    if skipped:
        log.warning("skipped %d records with no harvested fruit: %s", len(skipped), ", ".join(skipped[:10]))
    return kept


# ---------------------------------------------------------------- preprocessing

@dataclass(frozen=True)
class PreprocessPlan:
    vocab: tuple[tuple[str, tuple[str, ...]], ...]
    scale: tuple[tuple[str, float, float], ...]

    @property
    def n_features(self) -> int:
        return sum(len(v) for _, v in self.vocab) + len(self.scale)

    @property
    def feature_names(self) -> list[str]:
        names = [f"{col}={v}" for col, values in self.vocab for v in values]
        return names + [col for col, _, _ in self.scale]

    def transform(self, records: Sequence[TreeRecord]) -> np.ndarray:
        out = np.zeros((len(records), self.n_features))
        col = 0
        for name, values in self.vocab:
            index = {v: k for k, v in enumerate(values)}
            for row, r in enumerate(records):
                k = index.get(getattr(r, name))
                if k is None:
                    warnings.warn(f"unseen {name} value {getattr(r, name)!r} in tree {r.id}; encoded as all zeros")
                else:
                    out[row, col + k] = 1.0
            col += len(values)
        for name, mean, std in self.scale:
            vals = np.array([getattr(r, name) for r in records], dtype=float)
            if np.isnan(vals).any() or any(getattr(r, name) is None for r in records):
                raise RegressorError(f"column {name!r} has missing values")
            out[:, col] = (vals - mean) / std
            col += 1
        return out


def fit_preprocess(
    train: Sequence[TreeRecord],
    categorical: Sequence[str] = CATEGORICAL,
    numeric: Sequence[str] = NUMERIC,
) -> PreprocessPlan:
    if not train:
        raise RegressorError("cannot fit preprocessing on an empty training set")
    vocab = tuple((name, tuple(sorted({getattr(r, name) for r in train}))) for name in categorical)
    scale = []
    for name in numeric:
        vals = [getattr(r, name) for r in train]
        if any(v is None for v in vals):
            raise RegressorError(f"column {name!r} has missing values; filter records first")
        arr = np.array(vals, dtype=float)
        std = float(arr.std())
        if not std > 0:
            raise ZeroVariance(name)
        scale.append((name, float(arr.mean()), std))
    return PreprocessPlan(vocab=vocab, scale=tuple(scale))


def targets(records: Sequence[TreeRecord]) -> np.ndarray:
    return np.array([r.target for r in records], dtype=float)


# ---------------------------------------------------------------- network

@dataclass
class MlpModel:
    sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "relu"

    def __post_init__(self):
        if self.sizes[-1] != 1:
            raise RegressorError("the output layer must have a single unit")
        if self.activation not in _ACTIVATIONS:
            raise RegressorError(f"unknown activation {self.activation!r}")

    def copy(self) -> "MlpModel":
        return MlpModel(self.sizes, [w.copy() for w in self.weights], [b.copy() for b in self.biases], self.activation)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return _forward(self, np.asarray(x, dtype=float))[0][-1][:, 0]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))


def _relu(z):
    return np.maximum(z, 0.0)


def _relu_grad(z):
    return (z > 0).astype(float)


def _tanh_grad(z):
    return 1.0 - np.tanh(z) ** 2


_ACTIVATIONS = {"relu": (_relu, _relu_grad), "tanh": (np.tanh, _tanh_grad)}


def init_mlp(n_inputs: int, hidden: Sequence[int], seed: int = 0, activation: str = "relu") -> MlpModel:
    """He-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    sizes = (n_inputs, *hidden, 1)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = math.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(sizes, weights, biases, activation)


def _forward(model: MlpModel, x: np.ndarray):
    act, _ = _ACTIVATIONS[model.activation]
    outs, pre = [x], []
    last = len(model.weights) - 1
    for k, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = outs[-1] @ w + b
        pre.append(z)
        outs.append(z if k == last else act(z))
    return outs, pre


def loss_and_grads(model: MlpModel, x: np.ndarray, y: np.ndarray) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Mean squared error and its gradients by backpropagation."""
    _, act_grad = _ACTIVATIONS[model.activation]
    outs, pre = _forward(model, x)
    n = len(y)
    resid = outs[-1][:, 0] - y
    # overflow surfaces as a non-finite loss that the trainer reports
    with np.errstate(over="ignore", invalid="ignore"):
        loss = float(np.mean(resid**2))
    delta = (2.0 / n) * resid[:, None]
    gw, gb = [None] * len(model.weights), [None] * len(model.weights)
    for k in range(len(model.weights) - 1, -1, -1):
        gw[k] = outs[k].T @ delta
        gb[k] = delta.sum(axis=0)
        if k:
            delta = (delta @ model.weights[k].T) * act_grad(pre[k - 1])
    return loss, gw, gb


def numerical_grads(model: MlpModel, x: np.ndarray, y: np.ndarray, eps: float = 1e-6):
    """Central finite differences of the loss, same layout as ``loss_and_grads``."""

    def loss_of(m):
        return float(np.mean((m.predict(x) - y) ** 2))

    out = []
    for group in ("weights", "biases"):
        grads = []
        for k, arr in enumerate(getattr(model, group)):
            g = np.zeros_like(arr)
            for idx in np.ndindex(arr.shape):
                probe = model.copy()
                getattr(probe, group)[k][idx] += eps
                up = loss_of(probe)
                getattr(probe, group)[k][idx] -= 2 * eps
                down = loss_of(probe)
                g[idx] = (up - down) / (2 * eps)
            grads.append(g)
        out.append(grads)
    return out[0], out[1]


@dataclass(frozen=True)
class TrainParams:
    lr: float = 0.01
    momentum: float = 0.9
    epochs: int = 500
    # None trains on the full batch
    batch: int | None = 32
    seed: int = 0
    activation: str = "relu"

    def __post_init__(self):
        if not self.lr > 0 or not 0 <= self.momentum < 1 or self.epochs < 0:
            raise RegressorError("need lr > 0, momentum in [0, 1) and epochs >= 0")
        if self.batch is not None and self.batch < 1:
            raise RegressorError("batch must be >= 1")


@dataclass
class TrainResult:
    model: MlpModel
    losses: list[float] = field(default_factory=list)


def train_mlp(
    x: np.ndarray,
    y: np.ndarray,
    hidden: Sequence[int] = (16, 16),
    params: TrainParams = TrainParams(),
    scale_target: bool = True,
) -> TrainResult:
    """Minimise mean squared error by mini-batch gradient descent with momentum.

    With ``scale_target`` the optimisation sees ``(y - mean) / std`` and the
    final layer is rescaled afterwards, so the returned model predicts in the
    original units; fruit counts in the hundreds otherwise need a tiny step.
    ``losses`` holds the per-epoch training loss in the optimised units.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if x.ndim != 2 or len(x) != len(y) or len(y) == 0:
        raise RegressorError(f"features {x.shape} do not match targets {y.shape}")
    mu, sd = (float(y.mean()), float(y.std())) if scale_target else (0.0, 1.0)
    if not sd > 0:
        sd = 1.0
    ys = (y - mu) / sd
    model = init_mlp(x.shape[1], hidden, params.seed, params.activation)
    vel_w = [np.zeros_like(w) for w in model.weights]
    vel_b = [np.zeros_like(b) for b in model.biases]
    rng = np.random.default_rng(params.seed + 1)
    batch = params.batch or len(y)
    losses = []
    for epoch in range(params.epochs):
        order = rng.permutation(len(y)) if batch < len(y) else np.arange(len(y))
        for start in range(0, len(y), batch):
            rows = order[start : start + batch]
            loss, gw, gb = loss_and_grads(model, x[rows], ys[rows])
            if not math.isfinite(loss):
                raise NonFiniteLoss(epoch, loss)
            for k in range(len(model.weights)):
                vel_w[k] = params.momentum * vel_w[k] - params.lr * gw[k]
                vel_b[k] = params.momentum * vel_b[k] - params.lr * gb[k]
                model.weights[k] += vel_w[k]
                model.biases[k] += vel_b[k]
        full = float(np.mean((model.predict(x) - ys) ** 2))
        if not math.isfinite(full):
            raise NonFiniteLoss(epoch, full)
        losses.append(full)
    model.weights[-1] = model.weights[-1] * sd
    model.biases[-1] = model.biases[-1] * sd + mu
    return TrainResult(model, losses)


# ---------------------------------------------------------------- evaluation

def r2(pred, actual) -> float:
    pred = np.asarray(pred, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if actual.size < 2:
        raise RegressorError("R2 needs at least two samples")
    ss_tot = float(np.sum((actual - actual.mean()) ** 2))
    if ss_tot == 0:
        raise ZeroVariance("actual")
    return 1.0 - float(np.sum((actual - pred) ** 2)) / ss_tot


def paired_ttest(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """Two-sided paired t-test; constant differences give t = 0 or +-inf exactly."""
    diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    if np.all(diff == diff[0]):
        if diff[0] == 0:
            return 0.0, 1.0
        return math.copysign(math.inf, diff[0]), 0.0
    res = stats.ttest_rel(a, b)
    return float(res.statistic), float(res.pvalue)


@dataclass
class Comparison:
    a: str
    b: str
    t: float
    p: float
    significant: bool


@dataclass
class CvResult:
    scores: dict[str, np.ndarray]
    ranking: list[str]
    comparisons: list[Comparison]
    # the best architecture beats every other one with p < alpha
    winner_significant: bool

    def to_dict(self) -> dict:
        return {
            "scores": {k: v.tolist() for k, v in self.scores.items()},
            "mean": {k: float(v.mean()) for k, v in self.scores.items()},
            "ranking": self.ranking,
            "comparisons": [c.__dict__ for c in self.comparisons],
            "winner_significant": self.winner_significant,
        }


def kfold_indices(n: int, k: int, seed: int = 0) -> list[np.ndarray]:
    if k < 2:
        raise RegressorError("need at least two folds")
    if k > n:
        raise RegressorError(f"cannot split {n} records into {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    return np.array_split(perm, k)


def compare_scores(scores: Mapping[str, Sequence[float]], p_value: float = 0.05) -> CvResult:
    arrays = {k: np.asarray(v, dtype=float) for k, v in scores.items()}
    ranking = sorted(arrays, key=lambda k: (-arrays[k].mean(), k))
    comps = []
    for a, b in combinations(ranking, 2):
        t, p = paired_ttest(arrays[a], arrays[b])
        comps.append(Comparison(a, b, t, p, p < p_value))
    best = ranking[0]
    wins = [c.significant and c.t > 0 for c in comps if c.a == best]
    return CvResult(arrays, ranking, comps, bool(wins) and all(wins))


def kfold_cv(
    records: Sequence[TreeRecord],
    archs: Mapping[str, Sequence[int]],
    k: int = 10,
    p_value: float = 0.05,
    params: TrainParams = TrainParams(),
) -> CvResult:
    """R2 on each held-out fold for every architecture, then paired t-tests."""
    folds = kfold_indices(len(records), k, params.seed)
    scores: dict[str, list[float]] = {name: [] for name in archs}
    for held in folds:
        held_set = set(held.tolist())
        train = [r for i, r in enumerate(records) if i not in held_set]
        test = [records[i] for i in held]
        plan = fit_preprocess(train)
        xtr, xte = plan.transform(train), plan.transform(test)
        ytr, yte = targets(train), targets(test)
        for name, hidden in archs.items():
            model = train_mlp(xtr, ytr, hidden, params).model
            scores[name].append(r2(model.predict(xte), yte))
    return compare_scores(scores, p_value)


def train_test_split(records: Sequence[TreeRecord], test_fraction: float = 0.2, seed: int = 0):
    if not 0 < test_fraction < 1:
        raise RegressorError("test fraction must be in (0, 1)")
    perm = np.random.default_rng(seed).permutation(len(records))
    n_test = max(1, int(round(test_fraction * len(records))))
    test = sorted(perm[:n_test].tolist())
    train = sorted(perm[n_test:].tolist())
    return [records[i] for i in train], [records[i] for i in test]


# ---------------------------------------------------------------- synthetic data

def synthetic_records(n: int, seed: int = 0, noise: float = 0.1) -> list[TreeRecord]:
    """Trees whose yield grows with canopy volume and tracked counts.

    ``noise`` is the relative standard deviation of the yield around its
    expected value; 0 gives a deterministic target.
    """
    rng = np.random.default_rng(seed)
    varieties = {"Hamlin": ("Early", 1.1), "Valencia": ("Late", 1.0), "Pera": ("Mid", 0.9), "Natal": ("Late", 0.95)}
    names = sorted(varieties)
    out = []
    for i in range(n):
        var = names[int(rng.integers(len(names)))]
        group, factor = varieties[var]
        age = str(rng.choice(["A1", "A2", "A3"]))
        h, w, d = rng.uniform(2.0, 4.5), rng.uniform(2.0, 4.0), rng.uniform(1.5, 3.5)
        expected = factor * (60.0 * h * w * d / 3.0 + 50.0)
        yield_ = max(1.0, expected * (1.0 + noise * rng.standard_normal()))
        # tracking sees roughly a third of the fruit on each side
        seen = rng.uniform(0.25, 0.4, size=2)
        a, b = (int(round(s * yield_ / 2)) for s in seen)
        shares = rng.dirichlet([6.0, 3.0, 1.0])
        f = np.floor(shares * yield_).astype(int)
        f[0] += int(round(yield_)) - int(f.sum())
        out.append(
            TreeRecord(
                id=f"T{i + 1:04d}",
                sector=f"S{int(rng.integers(1, 4))}",
                region=str(rng.choice(["North", "South"])),
                var_group=group,
                variety=var,
                age_group=age,
                f1=int(f[0]),
                f2=int(f[1]),
                f3=int(f[2]),
                f4=int(rng.integers(0, 20)),
                h=round(float(h), 3),
                w=round(float(w), 3),
                d=round(float(d), 3),
                cbyt_a=a,
                cbyt_b=b,
            )
        )
    return out


def linear_dataset(n: int, n_features: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """Noiseless y = x @ w + b with standard normal features."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, n_features))
    w = rng.uniform(-2.0, 2.0, n_features)
    b = float(rng.uniform(-1.0, 1.0))
    return x, x @ w + b, w, b


@dataclass
class RegressionRun:
    plan: PreprocessPlan
    model: MlpModel
    train_ids: list[str]
    test_ids: list[str]
    test_pred: np.ndarray
    test_actual: np.ndarray
    r2_train: float
    r2_test: float

    def metrics(self) -> dict:
        return {
            "n_train": len(self.train_ids),
            "n_test": len(self.test_ids),
            "r2_train": self.r2_train,
            "r2_test": self.r2_test,
            "architecture": list(self.model.sizes),
            "features": self.plan.feature_names,
        }


def fit_and_score(
    records: Sequence[TreeRecord],
    hidden: Sequence[int] = (16, 16),
    params: TrainParams = TrainParams(),
    test_fraction: float = 0.2,
    ratio_threshold: float | None = None,
) -> RegressionRun:
    """Filter, split, preprocess, train and score on the held-out part."""
    recs = usable_records(records)
    if ratio_threshold is not None:
        recs = filter_by_ratio(recs, ratio_threshold)
    if len(recs) < 5:
        raise RegressorError(f"only {len(recs)} usable records")
    train, test = train_test_split(recs, test_fraction, params.seed)
    plan = fit_preprocess(train)
    xtr, ytr = plan.transform(train), targets(train)
    model = train_mlp(xtr, ytr, hidden, params).model
    xte, yte = plan.transform(test), targets(test)
    pred = model.predict(xte)
    return RegressionRun(
        plan=plan,
        model=model,
        train_ids=[r.id for r in train],
        test_ids=[r.id for r in test],
        test_pred=pred,
        test_actual=yte,
        r2_train=r2(model.predict(xtr), ytr),
        r2_test=r2(pred, yte) if len(yte) >= 2 else float("nan"),
    )
