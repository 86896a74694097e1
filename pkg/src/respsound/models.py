"""k-NN, linear SVM (one-vs-one SMO) and Random Forest classifiers.

All three work on z-scored features. Trained models are immutable and
serialize to a versioned, checksummed container (see ``save_model``).
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from respsound.dataset import FeatureDataset
from respsound.errors import (
    ChecksumError,
    DataError,
    MissingFeatureError,
    ModelFormatError,
    VersionError,
)
from respsound.features import WindowFeatureVector

log = logging.getLogger(__name__)

KINDS = ("KNN", "SVM", "RF")


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray

    @classmethod
    def fit(cls, matrix: np.ndarray) -> "Standardizer":
        mean = matrix.mean(axis=0)
        std = matrix.std(axis=0)
        constant = ~(std > 0)
        if constant.any():
            log.info("constant training features at columns %s", np.flatnonzero(constant).tolist())
        return cls(mean, np.where(constant, 1.0, std), constant)

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std


@dataclass(frozen=True)
class Prediction:
    label: str
    scores: dict[str, float]


@dataclass(frozen=True)
class TrainedModel:
    kind: str
    label_catalog: tuple[str, ...]
    feature_names: tuple[str, ...]
    standardizer: Standardizer
    payload: dict[str, Any]
    train_seed: int = 0

    def _vectorize(self, vector) -> np.ndarray:
        if isinstance(vector, WindowFeatureVector):
            return vector.to_array(self.feature_names)
        if isinstance(vector, Mapping):
            missing = [n for n in self.feature_names if n not in vector]
            if missing:
                raise MissingFeatureError(missing)
            return np.array([float(vector[n]) for n in self.feature_names])
        x = np.asarray(vector, dtype=np.float64)
        if x.shape != (len(self.feature_names),):
            raise DataError(f"expected {len(self.feature_names)} feature values, got shape {x.shape}")
        return x

    def scores_matrix(self, x: np.ndarray) -> np.ndarray:
        """Per-class scores for raw (unstandardized) rows in ``feature_names`` order."""
        z = self.standardizer.transform(np.atleast_2d(np.asarray(x, dtype=np.float64)))
        if self.kind == "KNN":
            return _knn_scores(self, z)
        if self.kind == "SVM":
            return _svm_scores(self, z)
        return _rf_scores(self, z)

    def predict_labels(self, x: np.ndarray) -> list[str]:
        s = self.scores_matrix(x)
        return [self.label_catalog[i] for i in np.argmax(s, axis=1)]


def predict(model: TrainedModel, vector) -> Prediction:
    """Classify one window. ``vector`` may be a WindowFeatureVector, a name->value
    mapping, or an array already restricted to ``model.feature_names``."""
    scores = model.scores_matrix(model._vectorize(vector)[None, :])[0]
    # np.argmax returns the first maximum, i.e. catalog order on ties
    label = model.label_catalog[int(np.argmax(scores))]
    return Prediction(label, {c: float(s) for c, s in zip(model.label_catalog, scores)})


def _prepare(data: FeatureDataset):
    if len(data) == 0:
        raise DataError("empty dataset")
    std = Standardizer.fit(data.matrix)
    return std, std.transform(data.matrix), data.y


# ---------------------------------------------------------------- k-NN

def train_knn(data: FeatureDataset, k: int = 1) -> TrainedModel:
    std, z, y = _prepare(data)
    if not 1 <= k <= len(data):
        raise DataError(f"k must be in [1, {len(data)}], got {k}")
    return TrainedModel("KNN", data.label_catalog, data.feature_names, std, {"k": int(k), "x": z, "y": y})


def _knn_scores(model: TrainedModel, z: np.ndarray) -> np.ndarray:
    x, y, k = model.payload["x"], model.payload["y"], model.payload["k"]
    d2 = ((z[:, None, :] - x[None, :, :]) ** 2).sum(axis=2)
    nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]
    scores = np.zeros((z.shape[0], len(model.label_catalog)))
    for row, idx in enumerate(nearest):
        np.add.at(scores[row], y[idx], 1.0)
    return scores / k


# ---------------------------------------------------------------- SVM

def smo_linear(x: np.ndarray, y: np.ndarray, C: float, tol: float = 1e-3, max_iter: int = 200_000):
    """Train a binary linear-kernel SVM by SMO with maximal-violating-pair selection.

    ``y`` holds +1/-1. Returns ``(alpha, b)``. Stops when the KKT violation
    gap ``max_{I_up} -y*grad - min_{I_low} -y*grad`` drops below ``tol``.
    """
    n = len(y)
    y = y.astype(np.float64)
    q = (x @ x.T) * np.outer(y, y)
    alpha = np.zeros(n)
    grad = -np.ones(n)
    for _ in range(max_iter):
        yg = -y * grad
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        if not up.any() or not low.any():
            break
        i = int(np.flatnonzero(up)[np.argmax(yg[up])])
        j = int(np.flatnonzero(low)[np.argmin(yg[low])])
        if yg[i] - yg[j] < tol:
            break
        # two-variable subproblem along direction keeping sum(y*alpha) fixed
        quad = q[i, i] + q[j, j] - 2.0 * y[i] * y[j] * q[i, j]
        quad = quad if quad > 1e-12 else 1e-12
        step = (yg[i] - yg[j]) / quad
        # bounds: alpha_i moves by y_i*step, alpha_j by -y_j*step
        lim_i = C - alpha[i] if y[i] > 0 else alpha[i]
        lim_j = alpha[j] if y[j] > 0 else C - alpha[j]
        step = min(step, lim_i, lim_j)
        di, dj = y[i] * step, -y[j] * step
        alpha[i] += di
        alpha[j] += dj
        alpha[i] = min(max(alpha[i], 0.0), C)
        alpha[j] = min(max(alpha[j], 0.0), C)
        grad += q[:, i] * di + q[:, j] * dj
    else:
        log.warning("SMO hit max_iter=%d before reaching tolerance %g", max_iter, tol)
    yg = -y * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        b = float(yg[free].mean())
    else:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        hi = yg[up].max() if up.any() else 0.0
        lo = yg[low].min() if low.any() else 0.0
        b = float((hi + lo) / 2.0)
    return alpha, b


def kkt_violation(x: np.ndarray, y: np.ndarray, alpha: np.ndarray, b: float, C: float) -> float:
    """Largest KKT violation of a binary machine on its training data (0 = optimal).

    Uses the margin form: alpha=0 needs y*f >= 1, 0<alpha<C needs y*f = 1,
    alpha=C needs y*f <= 1; measured on the dual gradient so it matches the
    SMO stopping rule up to the bias estimate.
    """
    y = y.astype(np.float64)
    w = (alpha * y) @ x
    margin = y * (x @ w + b)
    eps = 1e-9 * C
    at_zero = alpha <= eps
    at_c = alpha >= C - eps
    free = ~(at_zero | at_c)
    v = np.zeros_like(margin)
    v[at_zero] = np.maximum(0.0, 1.0 - margin[at_zero])
    v[at_c] = np.maximum(0.0, margin[at_c] - 1.0)
    v[free] = np.abs(margin[free] - 1.0)
    return float(v.max(initial=0.0))


def train_svm(data: FeatureDataset, C: float = 1.0, tol: float = 1e-3) -> TrainedModel:
    """One-vs-one linear SVMs, one per pair of classes in the catalog."""
    if C <= 0:
        raise DataError(f"C must be positive, got {C}")
    classes = data.classes_present()
    if len(classes) < 2:
        raise DataError("SVM needs at least 2 classes")
    std, z, y = _prepare(data)
    machines = []
    for a, b in combinations(range(len(data.label_catalog)), 2):
        mask = (y == a) | (y == b)
        if not (np.any(y == a) and np.any(y == b)):
            # a class absent from training never wins a pairwise vote against a present one
            machines.append({"pos": a, "neg": b, "w": None, "b": 0.0, "absent": [a] if not np.any(y == a) else [b]})
            continue
        xs, ys = z[mask], np.where(y[mask] == a, 1, -1)
        alpha, bias = smo_linear(xs, ys, C, tol)
        sv = alpha > 0
        w = (alpha * ys) @ xs
        machines.append({
            "pos": a, "neg": b, "w": w, "b": bias,
            "alpha": alpha[sv], "sv": xs[sv], "sv_y": ys[sv].astype(np.int64),
        })
    return TrainedModel("SVM", data.label_catalog, data.feature_names, std, {"C": float(C), "machines": machines})


def _svm_scores(model: TrainedModel, z: np.ndarray) -> np.ndarray:
    votes = np.zeros((z.shape[0], len(model.label_catalog)))
    for m in model.payload["machines"]:
        a, b = m["pos"], m["neg"]
        if m["w"] is None:
            winner = b if a in m["absent"] else a
            votes[:, winner] += 1
            continue
        f = z @ m["w"] + m["b"]
        # f == 0 goes to the earlier class
        votes[:, a] += f >= 0
        votes[:, b] += f < 0
    return votes


# ---------------------------------------------------------------- Random Forest

@dataclass
class _TreeBuilder:
    x: np.ndarray
    y: np.ndarray
    n_classes: int
    n_candidates: int
    rng: np.random.Generator
    max_depth: int = 25
    min_size: int = 2
    feature: list = field(default_factory=list)
    threshold: list = field(default_factory=list)
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    value: list = field(default_factory=list)

    def _new_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(None)
        return len(self.feature) - 1

    def build(self):
        stack = [(self._new_node(), np.arange(len(self.y)), 0)]
        while stack:
            node, idx, depth = stack.pop()
            counts = np.bincount(self.y[idx], minlength=self.n_classes).astype(np.float64)
            split = None
            if np.count_nonzero(counts) > 1 and depth < self.max_depth and len(idx) >= self.min_size:
                split = self._best_split(idx)
            if split is None:
                self.value[node] = counts
                continue
            f, thr = split
            go_left = self.x[idx, f] <= thr
            l, r = self._new_node(), self._new_node()
            self.feature[node], self.threshold[node] = f, thr
            self.left[node], self.right[node] = l, r
            stack.append((r, idx[~go_left], depth + 1))
            stack.append((l, idx[go_left], depth + 1))
        return self

    def _best_split(self, idx):
        m = self.x.shape[1]
        candidates = np.sort(self.rng.choice(m, size=self.n_candidates, replace=False))
        y = self.y[idx]
        n = len(idx)
        onehot = np.eye(self.n_classes)[y]
        best = None
        for f in candidates:
            v = self.x[idx, f]
            order = np.argsort(v, kind="stable")
            vs = v[order]
            boundary = np.flatnonzero(vs[1:] > vs[:-1])
            if boundary.size == 0:
                continue
            cum = np.cumsum(onehot[order], axis=0)
            left = cum[boundary]
            right = cum[-1] - left
            nl = (boundary + 1).astype(np.float64)
            nr = n - nl
            gini_l = 1.0 - ((left / nl[:, None]) ** 2).sum(axis=1)
            gini_r = 1.0 - ((right / nr[:, None]) ** 2).sum(axis=1)
            impurity = (nl * gini_l + nr * gini_r) / n
            k = int(np.argmin(impurity))
            if best is None or impurity[k] < best[0] - 1e-15:
                thr = (vs[boundary[k]] + vs[boundary[k] + 1]) / 2.0
                best = (impurity[k], int(f), float(thr))
        return None if best is None else best[1:]

    def export(self) -> dict:
        leaves = [v / v.sum() if v is not None else None for v in self.value]
        return {
            "feature": np.array(self.feature, dtype=np.int64),
            "threshold": np.array(self.threshold),
            "left": np.array(self.left, dtype=np.int64),
            "right": np.array(self.right, dtype=np.int64),
            "value": np.array([v if v is not None else np.zeros(self.n_classes) for v in leaves]),
        }


def train_rf(
    data: FeatureDataset,
    n_trees: int = 100,
    seed: int = 0,
    max_depth: int = 25,
    max_features: int | None = None,
) -> TrainedModel:
    """Bagged Gini trees with ``floor(sqrt(m))`` candidate features per split.

    Tree ``t`` draws its bootstrap sample and feature candidates from a PCG64
    generator seeded with ``seed + t``, so results are platform-independent.
    """
    if n_trees < 1:
        raise DataError(f"n_trees must be >= 1, got {n_trees}")
    std, z, y = _prepare(data)
    m = z.shape[1]
    n_candidates = max_features or max(1, int(np.floor(np.sqrt(m))))
    n_classes = len(data.label_catalog)
    trees = []
    for t in range(n_trees):
        rng = np.random.Generator(np.random.PCG64(seed + t))
        boot = rng.integers(0, len(y), size=len(y))
        builder = _TreeBuilder(z[boot], y[boot], n_classes, n_candidates, rng, max_depth=max_depth)
        trees.append(builder.build().export())
    return TrainedModel(
        "RF", data.label_catalog, data.feature_names, std,
        {"n_trees": n_trees, "max_depth": max_depth, "trees": trees}, train_seed=seed,
    )


def _tree_leaf_values(tree: dict, z: np.ndarray) -> np.ndarray:
    node = np.zeros(z.shape[0], dtype=np.int64)
    feature, threshold, left, right = tree["feature"], tree["threshold"], tree["left"], tree["right"]
    active = feature[node] >= 0
    while active.any():
        n = node[active]
        go_left = z[active, feature[n]] <= threshold[n]
        node[active] = np.where(go_left, left[n], right[n])
        active = feature[node] >= 0
    return tree["value"][node]


def _rf_scores(model: TrainedModel, z: np.ndarray) -> np.ndarray:
    total = np.zeros((z.shape[0], len(model.label_catalog)))
    for tree in model.payload["trees"]:
        total += _tree_leaf_values(tree, z)
    return total / len(model.payload["trees"])


# ---------------------------------------------------------------- training dispatch

@dataclass(frozen=True)
class ClassifierConfig:
    kind: str = "RF"
    k: int = 1
    C: float = 1.0
    n_trees: int = 100
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", self.kind.upper())
        if self.kind not in KINDS:
            raise DataError(f"unknown classifier kind {self.kind!r}")

    def describe(self) -> str:
        if self.kind == "KNN":
            return f"KNN(k={self.k})"
        if self.kind == "SVM":
            return f"SVM(C={self.C:g})"
        return f"RF(trees={self.n_trees}, seed={self.seed})"


def train(data: FeatureDataset, config: ClassifierConfig) -> TrainedModel:
    if config.kind == "KNN":
        return train_knn(data, config.k)
    if config.kind == "SVM":
        return train_svm(data, config.C)
    return train_rf(data, config.n_trees, config.seed)


# ---------------------------------------------------------------- serialization
#
# Layout (all integers little-endian):
#   magic      8 bytes  b"RSNDMDL\0"
#   version    u16
#   kind       4 bytes  ASCII, space padded ("KNN ", "SVM ", "RF  ")
#   length     u32      byte length of the JSON body
#   body       JSON (UTF-8, sorted keys): label_catalog, feature_names,
#              standardizer, payload, train_seed. Arrays are nested lists;
#              floats are written with repr precision so they round-trip exactly.
#   checksum   32 bytes SHA-256 over everything above

MAGIC = b"RSNDMDL\0"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sH4sI")


def _encode(obj):
    if isinstance(obj, np.ndarray):
        return {"__nd__": obj.dtype.str, "shape": list(obj.shape), "data": obj.ravel().tolist()}
    if isinstance(obj, dict):
        return {k: _encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _decode(obj):
    if isinstance(obj, dict):
        if "__nd__" in obj:
            return np.array(obj["data"], dtype=np.dtype(obj["__nd__"])).reshape(obj["shape"])
        return {k: _decode(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_decode(v) for v in obj]
    return obj


def model_bytes(model: TrainedModel) -> bytes:
    body = json.dumps(
        _encode({
            "label_catalog": list(model.label_catalog),
            "feature_names": list(model.feature_names),
            "standardizer": {
                "mean": model.standardizer.mean,
                "std": model.standardizer.std,
                "constant": model.standardizer.constant,
            },
            "payload": model.payload,
            "train_seed": model.train_seed,
        }),
        sort_keys=True,
        separators=(",", ":"),
        allow_nan=False,
    ).encode("utf-8")
    head = _HEADER.pack(MAGIC, FORMAT_VERSION, model.kind.ljust(4).encode("ascii"), len(body))
    blob = head + body
    return blob + hashlib.sha256(blob).digest()


def save_model(model: TrainedModel, path) -> None:
    Path(path).write_bytes(model_bytes(model))


def model_from_bytes(blob: bytes) -> TrainedModel:
    if len(blob) < _HEADER.size + 32:
        raise ModelFormatError("model file truncated")
    magic, version, kind, length = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ModelFormatError("not a model file (bad magic)")
    if version != FORMAT_VERSION:
        raise VersionError(f"model format version {version} not supported (expected {FORMAT_VERSION})")
    end = _HEADER.size + length
    if len(blob) != end + 32:
        raise ModelFormatError("model file truncated or has trailing data")
    if hashlib.sha256(blob[:end]).digest() != blob[end:]:
        raise ChecksumError("model checksum mismatch")
    kind = kind.decode("ascii").strip()
    if kind not in KINDS:
        raise ModelFormatError(f"unknown model kind {kind!r}")
    body = _decode(json.loads(blob[_HEADER.size:end].decode("utf-8")))
    std = body["standardizer"]
    payload = body["payload"]
    return TrainedModel(
        kind,
        tuple(body["label_catalog"]),
        tuple(body["feature_names"]),
        Standardizer(std["mean"], std["std"], std["constant"]),
        payload,
        body["train_seed"],
    )


def load_model(path) -> TrainedModel:
    return model_from_bytes(Path(path).read_bytes())


def restrict(model_features: Sequence[str], available: Sequence[str]) -> list[str]:
    """Names required by a model that are missing from ``available``."""
    have = set(available)
    return [n for n in model_features if n not in have]
