"""Success and cost prediction for (query, LLM) pairs.

Feature vectors concatenate the query embedding with a one-hot encoding of
the candidate LLM and pass through a unified min-max scaler.  Two models are
trained on labeled rows: a classifier for the probability that the LLM
resolves the query (binary log-loss objective) and a regressor for the
invocation cost (squared-error objective).  The default family is an
in-repo gradient-boosted tree ensemble; a linear family (logistic
regression / ridge) satisfies the same interface for users who want to plug
in something lighter.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import numpy as np

from .domain import LLMProfile, Query
from .embedding import Embedding, EmbedderConfig, make_embedder
from .errors import InvalidInputError, StateError

# Predicted cost can never be zero (the scheduler divides by it); this floor
# only binds when an LLM prices both directions at zero.
MIN_PREDICTED_COST = 1e-9

GBDT = "gbdt"
LINEAR = "linear"

BUNDLE_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    family: str = GBDT
    n_trees: int = 100
    max_depth: int = 4
    learning_rate: float = 0.1
    # Light leaf regularization and a 4-row leaf floor; the update loop
    # retrains on small corpora where thinner leaves chase label noise.
    l2: float = 0.5
    min_samples_leaf: int = 4
    min_gain: float = 1e-12
    linear_iterations: int = 400
    linear_learning_rate: float = 0.5
    ridge: float = 1e-6
    eval_fraction: float = 0.2

    def __post_init__(self):
        if self.family not in (GBDT, LINEAR):
            raise InvalidInputError(f"unknown model family {self.family!r}")
        if self.n_trees < 1 or self.max_depth < 1:
            raise InvalidInputError("n_trees and max_depth must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise InvalidInputError("learning_rate must be in (0, 1]")
        if self.min_samples_leaf < 1:
            raise InvalidInputError("min_samples_leaf must be >= 1")
        if not 0.0 < self.eval_fraction < 1.0:
            raise InvalidInputError("eval_fraction must be in (0, 1)")

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "learning_rate": self.learning_rate,
            "l2": self.l2,
            "min_samples_leaf": self.min_samples_leaf,
            "min_gain": self.min_gain,
            "linear_iterations": self.linear_iterations,
            "linear_learning_rate": self.linear_learning_rate,
            "ridge": self.ridge,
            "eval_fraction": self.eval_fraction,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ModelConfig":
        known = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass(frozen=True)
class TrainingRow:
    """One labeled observation: raw (unscaled) features plus outcomes."""

    features: np.ndarray  # embedding ++ one-hot, length d + m
    success: int  # {0, 1}
    cost: float  # actual observed invocation cost

    def __post_init__(self):
        if self.success not in (0, 1):
            raise InvalidInputError("success label must be 0 or 1")
        if self.cost < 0:
            raise InvalidInputError("cost label must be >= 0")


@dataclass(frozen=True)
class PredictionPair:
    perf: float  # predicted success probability, in [0, 1]
    cost: float  # predicted invocation cost, > 0


def raw_features(embedding: Embedding, llm_index: int, m: int) -> np.ndarray:
    """Concatenate an embedding with the one-hot encoding of LLM ``llm_index``."""
    if not 0 <= llm_index < m:
        raise InvalidInputError(f"llm_index {llm_index} out of range for m={m}")
    one_hot = np.zeros(m, dtype=np.float64)
    one_hot[llm_index] = 1.0
    return np.concatenate([np.asarray(embedding, dtype=np.float64), one_hot])


class MinMaxScaler:
    """Per-feature min-max scaling to [0, 1]; out-of-range values clip."""

    def __init__(self, mins: np.ndarray | None = None, ranges: np.ndarray | None = None):
        self.mins = mins
        self.ranges = ranges

    def fit(self, X: np.ndarray) -> "MinMaxScaler":
        self.mins = X.min(axis=0)
        self.ranges = X.max(axis=0) - self.mins
        return self

    def transform(self, X: np.ndarray) -> np.ndarray:
        if self.mins is None:
            raise StateError("scaler not fitted")
        denom = np.where(self.ranges > 0, self.ranges, 1.0)
        out = (X - self.mins) / denom
        return np.clip(out, 0.0, 1.0)

    def to_dict(self) -> dict:
        return {
            "mins": [float(v) for v in self.mins],
            "ranges": [float(v) for v in self.ranges],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "MinMaxScaler":
        return cls(
            mins=np.asarray(data["mins"], dtype=np.float64),
            ranges=np.asarray(data["ranges"], dtype=np.float64),
        )


# -- models ----------------------------------------------------------------


class Classifier(Protocol):
    def predict_proba(self, X: np.ndarray) -> np.ndarray: ...
    def to_dict(self) -> dict: ...


class Regressor(Protocol):
    def predict(self, X: np.ndarray) -> np.ndarray: ...
    def to_dict(self) -> dict: ...


@dataclass
class _Tree:
    feature: np.ndarray  # int, -1 for leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        idx = np.zeros(len(X), dtype=np.int64)
        while True:
            feat = self.feature[idx]
            internal = feat >= 0
            if not internal.any():
                return self.value[idx]
            rows = np.nonzero(internal)[0]
            go_left = X[rows, feat[rows]] <= self.threshold[idx[rows]]
            nxt = np.where(go_left, self.left[idx[rows]], self.right[idx[rows]])
            idx[rows] = nxt

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "_Tree":
        return cls(
            feature=np.asarray(data["feature"], dtype=np.int64),
            threshold=np.asarray(data["threshold"], dtype=np.float64),
            left=np.asarray(data["left"], dtype=np.int64),
            right=np.asarray(data["right"], dtype=np.int64),
            value=np.asarray(data["value"], dtype=np.float64),
        )


_MAX_BINS = 64


class _Binning:
    """Per-column histogram codes shared by every tree of one fit.

    Columns with at most _MAX_BINS distinct values are coded exactly; wider
    columns use deduplicated quantile cuts.  A split "code <= b" is exactly
    "x <= cuts[b]", so fitted trees evaluate on raw feature values.
    """

    def __init__(self, X: np.ndarray, max_bins: int = _MAX_BINS):
        n, f = X.shape
        self.cuts: list[np.ndarray] = []
        self.codes = np.empty((n, f), dtype=np.int64)
        for j in range(f):
            col = X[:, j]
            unique = np.unique(col)
            if len(unique) > max_bins:
                qs = np.quantile(col, np.linspace(0.0, 1.0, max_bins + 1)[1:-1])
                cuts = np.unique(qs)
            else:
                # Midpoints between consecutive values, so thresholds sit in
                # the gaps rather than on training points.
                cuts = 0.5 * (unique[:-1] + unique[1:])
            self.cuts.append(cuts)
            self.codes[:, j] = np.searchsorted(cuts, col, side="left")
        self.n_cuts = np.array([len(c) for c in self.cuts])
        self.stride = int(self.n_cuts.max()) + 1 if f else 1


def _build_tree(binning: _Binning, g: np.ndarray, h: np.ndarray, cfg: ModelConfig) -> _Tree:
    """Level-wise histogram tree growth.

    All nodes of one depth accumulate their gradient/hessian/count
    histograms in a single bincount pass, and each takes its best
    (feature, bin) split by argmax; ties break toward the lower feature
    index, then the lower bin (first max of the C-ordered gain array).
    """
    n, f = binning.codes.shape
    stride = binning.stride
    lam = cfg.l2
    msl = cfg.min_samples_leaf

    feature = [-1]
    threshold = [0.0]
    left = [-1]
    right = [-1]
    value = [0.0]

    def new_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    row_node = np.zeros(n, dtype=np.int64)
    active = [0]
    col_ids = np.arange(f, dtype=np.int64)[None, :]
    cut_valid = np.arange(stride)[None, :] < binning.n_cuts[:, None]  # (f, stride)

    for depth in range(cfg.max_depth):
        if not active:
            break
        rank = np.full(len(feature), -1, dtype=np.int64)
        rank[active] = np.arange(len(active))
        row_rank = rank[row_node]
        sel = row_rank >= 0
        rows = np.nonzero(sel)[0]
        if rows.size == 0:
            break
        codes_sel = binning.codes[rows]
        idx = ((row_rank[rows, None] * f + col_ids) * stride + codes_sel).ravel()
        size = len(active) * f * stride
        hist_g = np.bincount(idx, weights=np.repeat(g[rows], f), minlength=size)
        hist_h = np.bincount(idx, weights=np.repeat(h[rows], f), minlength=size)
        hist_c = np.bincount(idx, minlength=size)
        hist_g = hist_g.reshape(len(active), f, stride)
        hist_h = hist_h.reshape(len(active), f, stride)
        hist_c = hist_c.reshape(len(active), f, stride)

        GL = np.cumsum(hist_g, axis=2)
        HL = np.cumsum(hist_h, axis=2)
        CL = np.cumsum(hist_c, axis=2)
        G = GL[:, :1, -1:]  # per-node totals (same for every feature)
        H = HL[:, :1, -1:]
        C = CL[:, :1, -1:]
        GR = G - GL
        HR = H - HL
        CR = C - CL
        gain = GL**2 / (HL + lam) + GR**2 / (HR + lam) - G**2 / (H + lam)
        valid = (CL >= msl) & (CR >= msl) & cut_valid[None, :, :]
        gain = np.where(valid, gain, -np.inf)

        flat_best = np.argmax(gain.reshape(len(active), -1), axis=1)
        next_active = []
        for i, node in enumerate(active):
            best = float(gain.reshape(len(active), -1)[i, flat_best[i]])
            g_tot = float(G[i, 0, 0])
            h_tot = float(H[i, 0, 0])
            if not np.isfinite(best) or best <= cfg.min_gain:
                value[node] = -g_tot / (h_tot + lam)
                continue
            j, b = divmod(int(flat_best[i]), stride)
            feature[node] = j
            threshold[node] = float(binning.cuts[j][b])
            lid = new_node()
            rid = new_node()
            left[node] = lid
            right[node] = rid
            node_rows = rows[row_rank[rows] == i]
            go_left = binning.codes[node_rows, j] <= b
            row_node[node_rows] = np.where(go_left, lid, rid)
            next_active.extend((lid, rid))
        active = next_active

    # Remaining frontier nodes become leaves.
    if active:
        g_sum = np.bincount(row_node, weights=g, minlength=len(feature))
        h_sum = np.bincount(row_node, weights=h, minlength=len(feature))
        for node in active:
            value[node] = -float(g_sum[node]) / (float(h_sum[node]) + cfg.l2)

    return _Tree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=np.asarray(value, dtype=np.float64),
    )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -60.0, 60.0)))


class GradientBoostedModel:
    """Newton-style boosted trees for the logistic or squared objective."""

    def __init__(self, objective: str, config: ModelConfig,
                 base_score: float = 0.0, trees: list[_Tree] | None = None):
        if objective not in ("logistic", "squared"):
            raise InvalidInputError(f"unknown objective {objective!r}")
        self.objective = objective
        self.config = config
        self.base_score = base_score
        self.trees = trees or []

    def fit(self, X: np.ndarray, y: np.ndarray) -> "GradientBoostedModel":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if self.objective == "logistic":
            p0 = min(max(float(y.mean()), 1e-6), 1.0 - 1e-6)
            self.base_score = math.log(p0 / (1.0 - p0))
        else:
            self.base_score = float(y.mean())
        binning = _Binning(X)
        pred = np.full(len(X), self.base_score)
        self.trees = []
        for _ in range(self.config.n_trees):
            if self.objective == "logistic":
                p = _sigmoid(pred)
                g = p - y
                h = p * (1.0 - p)
            else:
                g = pred - y
                h = np.ones_like(y)
            tree = _build_tree(binning, g, h, self.config)
            # A stump with a ~zero leaf means the gradients vanished; every
            # later tree would be identical, so stop early.
            if len(tree.feature) == 1 and abs(float(tree.value[0])) < 1e-15:
                break
            self.trees.append(tree)
            pred += self.config.learning_rate * tree.predict(X)
        return self

    def raw(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        out = np.full(len(X), self.base_score)
        for tree in self.trees:
            out += self.config.learning_rate * tree.predict(X)
        return out

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return _sigmoid(self.raw(X))

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.raw(X)

    def to_dict(self) -> dict:
        return {
            "type": "gbdt",
            "objective": self.objective,
            "base_score": self.base_score,
            "learning_rate": self.config.learning_rate,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, data: Mapping, config: ModelConfig) -> "GradientBoostedModel":
        model = cls(
            objective=data["objective"],
            config=replace(config, learning_rate=float(data["learning_rate"])),
            base_score=float(data["base_score"]),
            trees=[_Tree.from_dict(t) for t in data["trees"]],
        )
        return model


class ConstantClassifier:
    """Degenerate classifier for single-class training data."""

    def __init__(self, probability: float):
        self.probability = probability

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return np.full(len(X), self.probability)

    def to_dict(self) -> dict:
        return {"type": "constant", "probability": self.probability}


class LogisticRegressionModel:
    """Full-batch gradient-descent logistic regression (deterministic)."""

    def __init__(self, weights: np.ndarray | None = None):
        self.weights = weights  # includes trailing intercept

    def fit(self, X: np.ndarray, y: np.ndarray, cfg: ModelConfig) -> "LogisticRegressionModel":
        Xb = np.hstack([X, np.ones((len(X), 1))])
        w = np.zeros(Xb.shape[1])
        for _ in range(cfg.linear_iterations):
            p = _sigmoid(Xb @ w)
            w -= cfg.linear_learning_rate * (Xb.T @ (p - y)) / len(Xb)
        self.weights = w
        return self

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        Xb = np.hstack([X, np.ones((len(X), 1))])
        return _sigmoid(Xb @ self.weights)

    def to_dict(self) -> dict:
        return {"type": "logistic", "weights": [float(v) for v in self.weights]}


class RidgeRegressionModel:
    """Closed-form ridge regression (deterministic)."""

    def __init__(self, weights: np.ndarray | None = None):
        self.weights = weights

    def fit(self, X: np.ndarray, y: np.ndarray, cfg: ModelConfig) -> "RidgeRegressionModel":
        Xb = np.hstack([X, np.ones((len(X), 1))])
        A = Xb.T @ Xb + cfg.ridge * np.eye(Xb.shape[1])
        self.weights = np.linalg.solve(A, Xb.T @ y)
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        Xb = np.hstack([X, np.ones((len(X), 1))])
        return Xb @ self.weights

    def to_dict(self) -> dict:
        return {"type": "ridge", "weights": [float(v) for v in self.weights]}


def _model_from_dict(data: Mapping, config: ModelConfig):
    kind = data["type"]
    if kind == "gbdt":
        return GradientBoostedModel.from_dict(data, config)
    if kind == "constant":
        return ConstantClassifier(float(data["probability"]))
    if kind == "logistic":
        return LogisticRegressionModel(np.asarray(data["weights"], dtype=np.float64))
    if kind == "ridge":
        return RidgeRegressionModel(np.asarray(data["weights"], dtype=np.float64))
    raise InvalidInputError(f"unknown model type {kind!r}")


def _fit_classifier(X: np.ndarray, y: np.ndarray, cfg: ModelConfig):
    if len(np.unique(y)) < 2:
        return ConstantClassifier(float(y[0])), True
    if cfg.family == GBDT:
        return GradientBoostedModel("logistic", cfg).fit(X, y), False
    return LogisticRegressionModel().fit(X, y, cfg), False


def _fit_regressor(X: np.ndarray, y: np.ndarray, cfg: ModelConfig):
    if cfg.family == GBDT:
        return GradientBoostedModel("squared", cfg).fit(X, y)
    return RidgeRegressionModel().fit(X, y, cfg)


# -- evaluation ---------------------------------------------------------------


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    mae: float
    constant_classifier: bool
    eval_on: str  # "holdout" or "train"
    split_seed: int
    n_rows: int

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "mae": self.mae,
            "constant_classifier": self.constant_classifier,
            "eval_on": self.eval_on,
            "split_seed": self.split_seed,
            "n_rows": self.n_rows,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "EvalReport":
        return cls(
            accuracy=float(data["accuracy"]),
            mae=float(data["mae"]),
            constant_classifier=bool(data["constant_classifier"]),
            eval_on=str(data["eval_on"]),
            split_seed=int(data["split_seed"]),
            n_rows=int(data["n_rows"]),
        )


def classification_accuracy(probs: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean((probs > 0.5) == (labels > 0.5)))


def mean_absolute_error(pred: np.ndarray, actual: np.ndarray) -> float:
    return float(np.mean(np.abs(pred - actual)))


def _holdout_split(n: int, cfg: ModelConfig, seed: int):
    """Seeded eval/train index split, or None when the corpus is too small
    for a holdout."""
    n_eval = int(round(cfg.eval_fraction * n))
    if n < 5 or n_eval < 1 or n - n_eval < 2:
        return None
    order = np.random.default_rng(seed).permutation(n)
    return order[:n_eval], order[n_eval:]


def _eval_classifier(X: np.ndarray, y: np.ndarray, cfg: ModelConfig, seed: int,
                     served: Classifier) -> tuple[float, str]:
    """Shadow holdout accuracy: an identically configured classifier is
    fitted on the training side of a seeded 80/20 split and scored on the
    held-out side (the served model keeps all rows).  Too-small corpora
    fall back to training-set accuracy of the served model."""
    split = _holdout_split(len(X), cfg, seed)
    if split is None:
        return classification_accuracy(served.predict_proba(X), y), "train"
    eval_idx, train_idx = split
    clf, _ = _fit_classifier(X[train_idx], y[train_idx], cfg)
    return classification_accuracy(clf.predict_proba(X[eval_idx]), y[eval_idx]), "holdout"


def _eval_regressor(X: np.ndarray, c: np.ndarray, cfg: ModelConfig, seed: int,
                    served: Regressor) -> tuple[float, str]:
    split = _holdout_split(len(X), cfg, seed)
    if split is None:
        return mean_absolute_error(served.predict(X), c), "train"
    eval_idx, train_idx = split
    reg = _fit_regressor(X[train_idx], c[train_idx], cfg)
    return mean_absolute_error(reg.predict(X[eval_idx]), c[eval_idx]), "holdout"


# -- the bundle ---------------------------------------------------------------


@dataclass
class ModelBundle:
    """A trained classifier/regressor pair plus everything needed to build
    and scale features identically at inference time."""

    classifier: Classifier
    regressor: Regressor
    scaler: MinMaxScaler
    llms: tuple[LLMProfile, ...]
    embedder: EmbedderConfig
    model: ModelConfig
    eval: EvalReport

    @property
    def m(self) -> int:
        return len(self.llms)

    def build_features(self, query: Query, llm_index: int,
                       embedding: Embedding | None = None) -> np.ndarray:
        """Scaled feature vector for (query, llm_index)."""
        if embedding is None:
            embedding = make_embedder(self.embedder)(query.payload)
        raw = raw_features(embedding, llm_index, self.m)
        return self.scaler.transform(raw[None, :])[0]

    def predict_matrix(self, embeddings: np.ndarray,
                       input_tokens: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Predictions for every (query, LLM) pair.

        Returns (perf, cost), each of shape (n, m).  Cost is floored at the
        unavoidable input cost plus one output token of the target LLM.
        """
        n = len(embeddings)
        m = self.m
        blocks = []
        for k in range(m):
            one_hot = np.zeros((n, m))
            one_hot[:, k] = 1.0
            blocks.append(np.hstack([embeddings, one_hot]))
        F = self.scaler.transform(np.vstack(blocks))
        perf = np.clip(self.classifier.predict_proba(F), 0.0, 1.0).reshape(m, n).T
        cost = np.asarray(self.regressor.predict(F)).reshape(m, n).T
        price_in = np.array([llm.price_input for llm in self.llms])
        price_out = np.array([llm.price_output for llm in self.llms])
        floors = np.asarray(input_tokens, dtype=np.float64)[:, None] * price_in[None, :]
        floors = floors + price_out[None, :]
        cost = np.maximum(np.maximum(cost, floors), MIN_PREDICTED_COST)
        return perf, cost

    def predict(self, query: Query, llm_index: int,
                embedding: Embedding | None = None) -> PredictionPair:
        if not 0 <= llm_index < self.m:
            raise InvalidInputError(f"llm_index {llm_index} out of range")
        if embedding is None:
            embedding = make_embedder(self.embedder)(query.payload)
        perf, cost = self.predict_matrix(
            np.asarray(embedding)[None, :], np.array([query.input_tokens])
        )
        return PredictionPair(perf=float(perf[0, llm_index]), cost=float(cost[0, llm_index]))

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "version": BUNDLE_VERSION,
            "classifier": self.classifier.to_dict(),
            "regressor": self.regressor.to_dict(),
            "scaler": self.scaler.to_dict(),
            "llms": [llm.to_dict() for llm in self.llms],
            "embedder": self.embedder.to_dict(),
            "model": self.model.to_dict(),
            "eval": self.eval.to_dict(),
        }

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_dict(cls, data: Mapping) -> "ModelBundle":
        if data.get("version") != BUNDLE_VERSION:
            raise InvalidInputError(f"unsupported bundle version {data.get('version')!r}")
        model_cfg = ModelConfig.from_dict(data["model"])
        return cls(
            classifier=_model_from_dict(data["classifier"], model_cfg),
            regressor=_model_from_dict(data["regressor"], model_cfg),
            scaler=MinMaxScaler.from_dict(data["scaler"]),
            llms=tuple(LLMProfile.from_dict(d) for d in data["llms"]),
            embedder=EmbedderConfig.from_dict(data["embedder"]),
            model=model_cfg,
            eval=EvalReport.from_dict(data["eval"]),
        )

    @classmethod
    def load(cls, path: str | Path) -> "ModelBundle":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.blake2b(blob, digest_size=16).hexdigest()


def _stack_rows(rows: Sequence[TrainingRow]):
    X = np.stack([r.features for r in rows]).astype(np.float64)
    y = np.array([r.success for r in rows], dtype=np.float64)
    c = np.array([r.cost for r in rows], dtype=np.float64)
    return X, y, c


def train(rows: Sequence[TrainingRow], llms: Sequence[LLMProfile],
          embedder: EmbedderConfig, model: ModelConfig, seed: int) -> ModelBundle:
    """Fit the scaler and both models on ``rows``; deterministic given
    (rows, seed, config)."""
    if not rows:
        raise InvalidInputError("training requires at least one row")
    if not llms:
        raise InvalidInputError("training requires at least one LLM profile")
    X_raw, y, c = _stack_rows(rows)
    expected = rows[0].features.shape[0]
    if X_raw.shape[1] != expected or expected != embedder.dimension + len(llms):
        raise InvalidInputError(
            f"feature rows must have length d + m = {embedder.dimension + len(llms)}"
        )
    scaler = MinMaxScaler().fit(X_raw)
    X = scaler.transform(X_raw)
    classifier, constant = _fit_classifier(X, y, model)
    regressor = _fit_regressor(X, c, model)
    accuracy, eval_on = _eval_classifier(X, y, model, seed, classifier)
    mae, _ = _eval_regressor(X, c, model, seed, regressor)
    report = EvalReport(accuracy, mae, constant, eval_on, seed, len(rows))
    return ModelBundle(
        classifier=classifier,
        regressor=regressor,
        scaler=scaler,
        llms=tuple(llms),
        embedder=embedder,
        model=model,
        eval=report,
    )


def retrain(bundle: ModelBundle, rows: Sequence[TrainingRow],
            retrain_classifier: bool, retrain_regressor: bool, seed: int) -> ModelBundle:
    """Refit the selected models from scratch on ``rows``.

    The bundle's scaler is kept so both models always share one feature
    space even when only one of them is refreshed.
    """
    if not (retrain_classifier or retrain_regressor):
        return bundle
    if not rows:
        raise InvalidInputError("retraining requires at least one row")
    X_raw, y, c = _stack_rows(rows)
    X = bundle.scaler.transform(X_raw)
    classifier = bundle.classifier
    regressor = bundle.regressor
    constant = isinstance(classifier, ConstantClassifier)
    accuracy, eval_on = bundle.eval.accuracy, bundle.eval.eval_on
    mae = bundle.eval.mae
    if retrain_classifier:
        classifier, constant = _fit_classifier(X, y, bundle.model)
        accuracy, eval_on = _eval_classifier(X, y, bundle.model, seed, classifier)
    if retrain_regressor:
        regressor = _fit_regressor(X, c, bundle.model)
        mae, eval_on = _eval_regressor(X, c, bundle.model, seed, regressor)
    report = EvalReport(accuracy, mae, constant, eval_on, seed, len(rows))
    return ModelBundle(
        classifier=classifier,
        regressor=regressor,
        scaler=bundle.scaler,
        llms=bundle.llms,
        embedder=bundle.embedder,
        model=bundle.model,
        eval=report,
    )
