"""Gradient-boosted regression trees for binary arrow relevance.

Logistic loss; each stage fits a depth-limited regression tree to the
residuals ``y - p`` with exact greedy variance-reduction splits, then sets each
leaf to the Newton step ``sum(r) / sum(p (1 - p))``.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import kernels
from .errors import ModelFormatError, ValidationError
from .geometry import Detection, Frame, center_deviation
from .taxonomy import ARROW_ORDER, ArrowClass

log = logging.getLogger(__name__)

MODEL_FORMAT = "tlrelevance-gbm"
MODEL_VERSION = 1
PROB_CLAMP = 1e-6
HESS_FLOOR = 1e-12
MIN_SPLIT_GAIN = 1e-12
# predict_proba stays strictly inside (0, 1)
_P_EPS = 1e-15
_BOX_MARGIN = 1e-6

FEATURE_NAMES = (
    "cx_norm",
    "cy_norm",
    "w_norm",
    "h_norm",
    *(f"is_{a.value}" for a in ARROW_ORDER),
    "dev_signed",
    "dev_abs",
)
N_FEATURES = len(FEATURE_NAMES)


@dataclass(frozen=True)
class ArrowFeatures:
    cx_norm: float
    cy_norm: float
    w_norm: float
    h_norm: float
    class_onehot: Tuple[int, int, int, int, int]
    dev_signed: float
    dev_abs: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.cx_norm, self.cy_norm, self.w_norm, self.h_norm, *self.class_onehot, self.dev_signed, self.dev_abs],
            dtype=np.float64,
        )


_ARROW_INDEX = {a: i for i, a in enumerate(ARROW_ORDER)}


def _onehot(cls: ArrowClass):
    return tuple(1 if a is cls else 0 for a in ARROW_ORDER)


def _check_inside(x1, y1, x2, y2, W, H):
    return not (x1 < -_BOX_MARGIN * W or x2 > W * (1 + _BOX_MARGIN)
                or y1 < -_BOX_MARGIN * H or y2 > H * (1 + _BOX_MARGIN))


def extract_features(arrow: Detection, frame: Frame) -> ArrowFeatures:
    if not isinstance(arrow.cls, ArrowClass):
        raise ValidationError(f"expected an arrow detection, got class {arrow.cls}")
    W, H = float(frame.width), float(frame.height)
    b = arrow.bbox
    if not _check_inside(*b.xyxy(), W, H):
        raise ValidationError(f"arrow box {b.as_list()} lies outside the {frame.width}x{frame.height} frame")
    dev = center_deviation(b, W)
    return ArrowFeatures(b.cx / W, b.cy / H, b.w / W, b.h / H, _onehot(arrow.cls), dev, abs(dev))


def feature_matrix(arrows: Sequence[Detection], frame: Frame) -> np.ndarray:
    """Feature rows for many arrows at once; row i equals ``extract_features(arrows[i], frame).as_array()``."""
    n = len(arrows)
    out = np.zeros((n, N_FEATURES))
    if n == 0:
        return out
    W, H = float(frame.width), float(frame.height)
    boxes = np.array([(a.bbox.cx, a.bbox.cy, a.bbox.w, a.bbox.h) for a in arrows], dtype=np.float64)
    try:
        cls_idx = [_ARROW_INDEX[a.cls] for a in arrows]
    except KeyError as exc:
        raise ValidationError(f"expected arrow detections, got class {exc.args[0]}") from None
    cx, cy, w, h = boxes.T
    inside = ((cx - w / 2.0 >= -_BOX_MARGIN * W) & (cx + w / 2.0 <= W * (1 + _BOX_MARGIN))
              & (cy - h / 2.0 >= -_BOX_MARGIN * H) & (cy + h / 2.0 <= H * (1 + _BOX_MARGIN)))
    if not inside.all():
        bad = arrows[int(np.flatnonzero(~inside)[0])]
        raise ValidationError(f"arrow box {bad.bbox.as_list()} lies outside the {frame.width}x{frame.height} frame")
    out[:, 0] = cx / W
    out[:, 1] = cy / H
    out[:, 2] = w / W
    out[:, 3] = h / H
    out[np.arange(n), 4 + np.asarray(cls_idx)] = 1.0
    out[:, 9] = out[:, 0] - 0.5
    out[:, 10] = np.abs(out[:, 9])
    return out


def features_from_row(row) -> ArrowFeatures:
    v = row.tolist()
    return ArrowFeatures(v[0], v[1], v[2], v[3], tuple(int(x) for x in v[4:9]), v[9], v[10])


@dataclass(frozen=True)
class GBMConfig:
    stages: int = 300
    max_depth: int = 3
    learning_rate: float = 0.1
    subsample: float = 1.0
    min_samples_leaf: int = 1
    seed: int = 7

    def __post_init__(self):
        if self.stages < 1:
            raise ValidationError("stages must be >= 1")
        if self.max_depth < 1:
            raise ValidationError("max_depth must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValidationError("learning_rate must lie in (0, 1]")
        if not 0.0 < self.subsample <= 1.0:
            raise ValidationError("subsample must lie in (0, 1]")
        if self.min_samples_leaf < 1:
            raise ValidationError("min_samples_leaf must be >= 1")


@dataclass
class RegressionTree:
    """Nodes in pre-order; leaves have ``left == right == -1`` and ``feature == -1``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    def depth(self, node: int = 0) -> int:
        if self.left[node] < 0:
            return 0
        return 1 + max(self.depth(int(self.left[node])), self.depth(int(self.right[node])))

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            internal = self.left[node] >= 0
            if not internal.any():
                return node
            f = np.where(internal, self.feature[node], 0)
            go_left = X[rows, f] <= self.threshold[node]
            node = np.where(internal, np.where(go_left, self.left[node], self.right[node]), node)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_json(self) -> dict:
        nodes = []
        for i in range(self.n_nodes):
            if self.left[i] < 0:
                nodes.append({"value": float(self.value[i])})
            else:
                nodes.append({
                    "feature": int(self.feature[i]),
                    "threshold": float(self.threshold[i]),
                    "left": int(self.left[i]),
                    "right": int(self.right[i]),
                })
        return {"nodes": nodes}

    @classmethod
    def from_json(cls, data: dict, n_features: int) -> "RegressionTree":
        nodes = data["nodes"]
        n = len(nodes)
        if n == 0:
            raise ModelFormatError("tree without nodes")
        feat = np.full(n, -1, dtype=np.int64)
        thr = np.zeros(n)
        left = np.full(n, -1, dtype=np.int64)
        right = np.full(n, -1, dtype=np.int64)
        val = np.zeros(n)
        for i, nd in enumerate(nodes):
            if "value" in nd:
                val[i] = _finite(nd["value"])
            else:
                feat[i], left[i], right[i] = int(nd["feature"]), int(nd["left"]), int(nd["right"])
                thr[i] = _finite(nd["threshold"])
                if not 0 <= feat[i] < n_features:
                    raise ModelFormatError(f"node {i}: feature index {feat[i]} out of range")
                # pre-order layout: children always come after their parent
                if not (i < left[i] < n and i < right[i] < n):
                    raise ModelFormatError(f"node {i}: child index out of range")
        return cls(feat, thr, left, right, val)


def _finite(v) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ModelFormatError(f"expected a finite number, got {v!r}")
    return float(v)


def sigmoid(F):
    F = np.asarray(F, dtype=np.float64)
    out = np.empty_like(F)
    pos = F >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-F[pos]))
    e = np.exp(F[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def logistic_loss(y, F) -> float:
    """Mean negative log-likelihood of labels ``y`` under raw scores ``F``."""
    return float(np.mean(np.logaddexp(0.0, F) - y * F))


@dataclass
class GBMModel:
    base_score: float
    trees: List[RegressionTree]
    config: GBMConfig
    feature_names: Tuple[str, ...] = FEATURE_NAMES
    # diagnostics from fit(); not serialized
    train_loss: List[float] = field(default_factory=list, repr=False, compare=False)
    degenerate: bool = False
    _flat: Optional[tuple] = field(default=None, repr=False, compare=False)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def _flattened(self):
        if self._flat is None:
            feats, thrs, lefts, rights, vals, roots = [], [], [], [], [], []
            offset = 0
            for t in self.trees:
                roots.append(offset)
                feats.append(t.feature)
                thrs.append(t.threshold)
                lefts.append(np.where(t.left >= 0, t.left + offset, -1))
                rights.append(np.where(t.right >= 0, t.right + offset, -1))
                vals.append(t.value)
                offset += t.n_nodes
            if self.trees:
                self._flat = (
                    np.ascontiguousarray(np.concatenate(feats), dtype=np.int64),
                    np.ascontiguousarray(np.concatenate(thrs), dtype=np.float64),
                    np.ascontiguousarray(np.concatenate(lefts), dtype=np.int64),
                    np.ascontiguousarray(np.concatenate(rights), dtype=np.int64),
                    np.ascontiguousarray(np.concatenate(vals), dtype=np.float64),
                    np.asarray(roots, dtype=np.int64),
                )
            else:
                empty_i, empty_f = np.empty(0, dtype=np.int64), np.empty(0)
                self._flat = (empty_i, empty_f, empty_i, empty_i, empty_f, empty_i)
        return self._flat

    def decision_function(self, X, backend=None) -> np.ndarray:
        X = _as_matrix(X, self.n_features)
        k = kernels.get_backend(backend)
        return k.predict_raw(X, *self._flattened(), float(self.base_score), float(self.config.learning_rate))

    def predict_proba(self, X, backend=None) -> np.ndarray:
        return np.clip(sigmoid(self.decision_function(X, backend)), _P_EPS, 1.0 - _P_EPS)

    def predict(self, X, threshold: float = 0.5) -> np.ndarray:
        return self.predict_proba(X) >= threshold

    def split_counts(self) -> dict:
        counts = dict.fromkeys(self.feature_names, 0)
        for t in self.trees:
            for f in t.feature[t.left >= 0]:
                counts[self.feature_names[f]] += 1
        return counts

    def to_json(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "config": asdict(self.config),
            "feature_names": list(self.feature_names),
            "base_score": float(self.base_score),
            "degenerate": self.degenerate,
            "trees": [t.to_json() for t in self.trees],
        }


def _as_matrix(X, n_features) -> np.ndarray:
    if isinstance(X, ArrowFeatures):
        X = X.as_array()
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != n_features:
        raise ValidationError(f"expected {n_features} features per row, got shape {X.shape}")
    return np.ascontiguousarray(X)


def predict_proba(m: GBMModel, x) -> float:
    """Relevance probability of one feature vector."""
    return float(m.predict_proba(x)[0])


def _grow_tree(X, r, h, order, in_node, cfg, k):
    feat, thr, left, right, val = [], [], [], [], []

    def grow(mask, depth):
        node = len(feat)
        feat.append(-1)
        thr.append(0.0)
        left.append(-1)
        right.append(-1)
        val.append(0.0)
        if depth < cfg.max_depth:
            f, t, _gain = k.best_split(X, r, order, mask, cfg.min_samples_leaf, MIN_SPLIT_GAIN)
            if f >= 0:
                goes_left = (X[:, f] <= t).astype(np.uint8)
                feat[node], thr[node] = f, t
                left[node] = grow(mask & goes_left, depth + 1)
                right[node] = grow(mask & (1 - goes_left), depth + 1)
                return node
        rows = np.flatnonzero(mask)
        val[node] = float(np.sum(r[rows]) / max(float(np.sum(h[rows])), HESS_FLOOR))
        return node

    grow(in_node, 0)
    return RegressionTree(
        np.asarray(feat, dtype=np.int64),
        np.asarray(thr, dtype=np.float64),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(val, dtype=np.float64),
    )


def fit_arrays(X, y, cfg: GBMConfig = GBMConfig(), backend=None) -> GBMModel:
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValidationError(f"X has shape {X.shape} but y has {y.shape[0]} labels")
    n = X.shape[0]
    if n == 0:
        raise ValidationError("cannot fit on an empty dataset")
    if not np.all(np.isfinite(X)):
        raise ValidationError("features contain NaN or infinite values")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValidationError("labels must be 0/1")

    p_bar = min(max(float(np.mean(y)), PROB_CLAMP), 1.0 - PROB_CLAMP)
    base = math.log(p_bar / (1.0 - p_bar))
    names = FEATURE_NAMES if X.shape[1] == N_FEATURES else tuple(f"f{i}" for i in range(X.shape[1]))
    F = np.full(n, base)
    model = GBMModel(base, [], cfg, names)
    model.train_loss.append(logistic_loss(y, F))
    if y.min() == y.max():
        log.warning("all %d labels are %d; fitted a constant model without trees", n, int(y[0]))
        model.degenerate = True
        return model

    k = kernels.get_backend(backend)
    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T, dtype=np.int64)
    rng = np.random.default_rng(cfg.seed)
    n_sample = max(1, int(round(cfg.subsample * n)))
    all_rows = np.ones(n, dtype=np.uint8)
    for _ in range(cfg.stages):
        p = sigmoid(F)
        r = y - p
        h = p * (1.0 - p)
        if n_sample < n:
            in_sample = np.zeros(n, dtype=np.uint8)
            in_sample[rng.choice(n, size=n_sample, replace=False)] = 1
        else:
            in_sample = all_rows
        tree = _grow_tree(X, r, h, order, in_sample, cfg, k)
        model.trees.append(tree)
        F = F + cfg.learning_rate * tree.predict(X)
        model.train_loss.append(logistic_loss(y, F))
    return model


def fit(rows: Sequence[Tuple[ArrowFeatures, bool]], cfg: GBMConfig = GBMConfig(), backend=None) -> GBMModel:
    """Train on ``(features, relevant)`` pairs."""
    if not rows:
        raise ValidationError("cannot fit on an empty dataset")
    X = np.stack([f.as_array() for f, _ in rows])
    y = np.array([1.0 if lbl else 0.0 for _, lbl in rows])
    return fit_arrays(X, y, cfg, backend)


def model_from_json(data: dict) -> GBMModel:
    if not isinstance(data, dict):
        raise ModelFormatError("model file must contain a JSON object")
    if data.get("format") != MODEL_FORMAT:
        raise ModelFormatError(f"not a {MODEL_FORMAT} model file")
    version = data.get("version")
    if version != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version {version!r} (expected {MODEL_VERSION})")
    try:
        cfg = GBMConfig(**data["config"])
        names = tuple(data["feature_names"])
        base = _finite(data["base_score"])
        trees = [RegressionTree.from_json(t, len(names)) for t in data["trees"]]
        degenerate = bool(data.get("degenerate", False))
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model file: {exc!r}") from None
    return GBMModel(base, trees, cfg, names, degenerate=degenerate)


def dumps_model(m: GBMModel) -> str:
    # json writes floats with repr(), which round-trips binary64 exactly
    return json.dumps(m.to_json(), sort_keys=True, allow_nan=False)


def loads_model(text: str) -> GBMModel:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model file is truncated or not JSON: {exc}") from None
    return model_from_json(data)


def save_model(m: GBMModel, path) -> None:
    from .dataio import atomic_write_text

    atomic_write_text(path, dumps_model(m) + "\n")


def load_model(path) -> GBMModel:
    return loads_model(Path(path).read_text(encoding="utf-8"))
