"""Classifier zoo and metric suite.

Single algorithms (Bernoulli NB, Gaussian NB, decision tree, logistic
regression, KNN, MLP), homogeneous ensembles built from their own base
learners (random forest, bagging, AdaBoost stumps, gradient-boosted
stumps on logistic loss), soft voting, and label-prediction stacking:
base models fit on the full training set, the meta model fit on their
in-sample label predictions. Deliberately no out-of-fold stacking.

Everything is numpy + own code so that predictions are bit-reproducible
under a fixed seed and the stacking construction stays exactly the
label-matrix form described above.
"""

from __future__ import annotations

import math
import pickle
from dataclasses import dataclass, field

import numpy as np

from . import nn

TAG_BERNOULLI = "bernoulli"
TAG_NAIVE_BAYES = "naive_bayes"
TAG_DECISION_TREE = "decision_tree"
TAG_LOGISTIC_REGRESSION = "logistic_regression"
TAG_KNN = "knn"
TAG_MLP = "mlp"
TAG_RANDOM_FOREST = "random_forest"
TAG_BAGGING = "bagging"
TAG_ADABOOST = "adaboost"
TAG_GRADIENT_BOOSTING = "gradient_boosting"
TAG_VOTING = "voting"
TAG_STACKING = "stacking"

SINGLE_TAGS = (
    TAG_BERNOULLI,
    TAG_NAIVE_BAYES,
    TAG_DECISION_TREE,
    TAG_LOGISTIC_REGRESSION,
    TAG_KNN,
)

DEFAULT_HYPERPARAMS: dict[str, dict] = {
    TAG_BERNOULLI: {"alpha": 1.0},
    TAG_NAIVE_BAYES: {"var_smoothing": 1e-9},
    TAG_DECISION_TREE: {"max_depth": 12},
    TAG_LOGISTIC_REGRESSION: {"epochs": 300, "lr": 0.1},
    TAG_KNN: {"k": 5},
    TAG_MLP: {"hidden": (64, 64), "epochs": 40, "batch_size": 32, "lr": 1e-3},
    TAG_RANDOM_FOREST: {"n_trees": 100, "max_depth": 12, "max_features": "sqrt"},
    TAG_BAGGING: {"n_trees": 50, "max_depth": 12, "max_features": "all"},
    TAG_ADABOOST: {"n_rounds": 50},
    TAG_GRADIENT_BOOSTING: {"n_rounds": 100, "lr": 0.1},
    TAG_VOTING: {"members": list(SINGLE_TAGS)},
    TAG_STACKING: {"base_tags": list(SINGLE_TAGS), "meta_tag": TAG_LOGISTIC_REGRESSION},
}


class WidthMismatch(ValueError):
    pass


class DegenerateData(ValueError):
    pass


@dataclass
class Dataset:
    x: np.ndarray  # (n, d) float64
    y: np.ndarray  # (n,) in {0, 1}; 1 = malware
    feature_width: int = 0

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=np.float64))
        self.y = np.asarray(self.y).astype(np.int64).ravel()
        if self.x.shape[0] != self.y.shape[0]:
            raise WidthMismatch("x and y row counts disagree")
        if self.y.size and not np.isin(self.y, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        self.feature_width = self.x.shape[1]

    def __len__(self) -> int:
        return len(self.y)


def _require_two_classes(data: Dataset) -> None:
    if (data.y == 0).sum() < 2 or (data.y == 1).sum() < 2:
        raise DegenerateData("need at least 2 samples per class")


def _as_matrix(x, width: int) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if arr.shape[1] != width:
        raise WidthMismatch(f"feature width {arr.shape[1]}, model expects {width}")
    return arr


# ---------------------------------------------------------------------------
# Base algorithms
# ---------------------------------------------------------------------------


class _BernoulliNB:
    def fit(self, X, y, rng):
        n = len(y)
        self.log_prior = np.log(np.array([(y == 0).sum(), (y == 1).sum()]) / n)
        self.p1 = np.empty((2, X.shape[1]))
        for c in (0, 1):
            xc = X[y == c]
            self.p1[c] = (xc.sum(axis=0) + self.alpha) / (len(xc) + 2.0 * self.alpha)
        return self

    def __init__(self, alpha=1.0):
        self.alpha = alpha

    def proba(self, X):
        xb = (X > 0.5).astype(np.float64)
        joint = np.empty((len(xb), 2))
        for c in (0, 1):
            joint[:, c] = self.log_prior[c] + (
                xb @ np.log(self.p1[c]) + (1.0 - xb) @ np.log(1.0 - self.p1[c])
            )
        m = joint.max(axis=1, keepdims=True)
        ex = np.exp(joint - m)
        return ex[:, 1] / ex.sum(axis=1)


class _GaussianNB:
    def __init__(self, var_smoothing=1e-9):
        self.var_smoothing = var_smoothing

    def fit(self, X, y, rng):
        n = len(y)
        self.log_prior = np.log(np.array([(y == 0).sum(), (y == 1).sum()]) / n)
        self.mean = np.empty((2, X.shape[1]))
        self.var = np.empty((2, X.shape[1]))
        smoothing = self.var_smoothing * max(X.var(axis=0).max(), 1e-12)
        for c in (0, 1):
            xc = X[y == c]
            self.mean[c] = xc.mean(axis=0)
            self.var[c] = xc.var(axis=0) + smoothing
        return self

    def proba(self, X):
        joint = np.empty((len(X), 2))
        for c in (0, 1):
            joint[:, c] = self.log_prior[c] - 0.5 * (
                np.log(2.0 * np.pi * self.var[c]).sum()
                + (((X - self.mean[c]) ** 2) / self.var[c]).sum(axis=1)
            )
        m = joint.max(axis=1, keepdims=True)
        ex = np.exp(joint - m)
        return ex[:, 1] / ex.sum(axis=1)


class _Tree:
    """Binary CART on the gini criterion, vectorized split search.

    `max_features="sqrt"` resamples a feature subset per node (random
    forest); "all" scans every feature. Leaves store the class-1 fraction.
    """

    def __init__(self, max_depth=12, max_features="all", min_samples_split=2):
        self.max_depth = max_depth
        self.max_features = max_features
        self.min_samples_split = min_samples_split

    def fit(self, X, y, rng):
        self.n_features = X.shape[1]
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []
        self._build(X, y.astype(np.float64), 0, rng)
        self.feature_arr = np.array(self.feature)
        self.threshold_arr = np.array(self.threshold)
        self.left_arr = np.array(self.left)
        self.right_arr = np.array(self.right)
        self.value_arr = np.array(self.value)
        return self

    def _new_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def _best_split(self, X, y, rng):
        m, d = X.shape
        if self.max_features == "sqrt" and d > 1:
            k = max(1, int(math.sqrt(d)))
            cols = np.sort(rng.choice(d, size=k, replace=False))
        else:
            cols = np.arange(d)
        Xs = X[:, cols]
        order = np.argsort(Xs, axis=0, kind="stable")
        xs = np.take_along_axis(Xs, order, axis=0)
        ys = y[order]

        pos_left = np.cumsum(ys, axis=0)[:-1]  # (m-1, k)
        n_left = np.arange(1, m)[:, None].astype(np.float64)
        n_right = m - n_left
        pos_right = pos_left[-1] + ys[-1] - pos_left

        pl = pos_left / n_left
        pr = pos_right / n_right
        gini = (n_left * 2.0 * pl * (1.0 - pl) + n_right * 2.0 * pr * (1.0 - pr)) / m
        valid = xs[1:] > xs[:-1]
        gini = np.where(valid, gini, np.inf)
        flat = int(np.argmin(gini))
        row, col = divmod(flat, gini.shape[1])
        if not np.isfinite(gini[row, col]):
            return None
        threshold = 0.5 * (xs[row, col] + xs[row + 1, col])
        return int(cols[col]), float(threshold), float(gini[row, col])

    def _build(self, X, y, depth, rng) -> int:
        node = self._new_node()
        self.value[node] = float(y.mean()) if len(y) else 0.0
        if (
            depth >= self.max_depth
            or len(y) < self.min_samples_split
            or y.min() == y.max()
        ):
            return node
        found = self._best_split(X, y, rng)
        if found is None:
            return node
        f, thr, _ = found
        mask = X[:, f] <= thr
        self.feature[node] = f
        self.threshold[node] = thr
        left = self._build(X[mask], y[mask], depth + 1, rng)
        right = self._build(X[~mask], y[~mask], depth + 1, rng)
        self.left[node] = left
        self.right[node] = right
        return node

    def proba(self, X):
        n = len(X)
        if n <= 64:
            # plain-python walk: the vectorized path pays ~depth numpy-call
            # overheads per level, which dominates single-sample queries
            feature, threshold = self.feature, self.threshold
            left, right, value = self.left, self.right, self.value
            out = np.empty(n)
            for i in range(n):
                row = X[i]
                node = 0
                f = feature[0]
                while f >= 0:
                    node = left[node] if row[f] <= threshold[node] else right[node]
                    f = feature[node]
                out[i] = value[node]
            return out
        out = np.empty(n)
        node_ids = np.zeros(n, dtype=np.int64)
        active = np.arange(n)
        while active.size:
            nodes = node_ids[active]
            feats = self.feature_arr[nodes]
            leaf = feats < 0
            leaves = active[leaf]
            out[leaves] = self.value_arr[node_ids[leaves]]
            active = active[~leaf]
            if not active.size:
                break
            nodes = node_ids[active]
            go_left = (
                X[active, self.feature_arr[nodes]] <= self.threshold_arr[nodes]
            )
            node_ids[active] = np.where(
                go_left, self.left_arr[nodes], self.right_arr[nodes]
            )
        return out


class _LogisticRegression:
    """Full-batch gradient descent on mean log loss."""

    def __init__(self, epochs=300, lr=0.1):
        self.epochs = epochs
        self.lr = lr

    def fit(self, X, y, rng):
        n, d = X.shape
        self.w = np.zeros(d)
        self.b = 0.0
        for _ in range(self.epochs):
            p = self._sigma(X @ self.w + self.b)
            err = p - y
            self.w -= self.lr * (X.T @ err) / n
            self.b -= self.lr * err.mean()
        return self

    @staticmethod
    def _sigma(z):
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out

    def proba(self, X):
        return self._sigma(X @ self.w + self.b)


class _Knn:
    """k nearest neighbors; Hamming distance on 0/1 data, Euclidean otherwise."""

    def __init__(self, k=5):
        self.k = k

    def fit(self, X, y, rng):
        self.X = X
        self.y = y.astype(np.float64)
        self.binary = bool(np.isin(X, (0.0, 1.0)).all())
        return self

    def proba(self, X):
        if self.binary:
            # Hamming count over bits: |a-b| == a + b - 2ab elementwise
            xb = (X > 0.5).astype(np.float64)
            tb = (self.X > 0.5).astype(np.float64)
            dist = (
                xb.sum(axis=1)[:, None]
                + tb.sum(axis=1)[None, :]
                - 2.0 * (xb @ tb.T)
            )
        else:
            dist = (
                (X * X).sum(axis=1)[:, None]
                + (self.X * self.X).sum(axis=1)[None, :]
                - 2.0 * (X @ self.X.T)
            )
        k = min(self.k, len(self.y))
        nearest = np.argsort(dist, axis=1, kind="stable")[:, :k]
        return self.y[nearest].mean(axis=1)


class _Mlp:
    def __init__(self, hidden=(64, 64), epochs=40, batch_size=32, lr=1e-3):
        self.hidden = tuple(hidden)
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr

    def fit(self, X, y, rng):
        widths = [X.shape[1], *self.hidden, 1]
        acts = [nn.ACT_RELU] * len(self.hidden) + [nn.ACT_SIGMOID]
        self.net = nn.init_dense(widths, acts, seed=int(rng.integers(0, 2**31)))
        opt = nn.Adam(lr=self.lr)
        targets = y.astype(np.float64).reshape(-1, 1)
        n = len(y)
        for _ in range(self.epochs):
            order = rng.permutation(n)
            for start in range(0, n, self.batch_size):
                take = order[start:start + self.batch_size]
                nn.train_step(
                    self.net, nn.TrainBatch(X[take], targets[take]), nn.LOSS_BCE, opt
                )
        return self

    def proba(self, X):
        return nn.forward(self.net, X).ravel()


class _Forest:
    """Bootstrap-aggregated trees; random forest when max_features="sqrt"."""

    def __init__(self, n_trees=100, max_depth=12, max_features="sqrt"):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.max_features = max_features

    def fit(self, X, y, rng):
        n = len(y)
        self.trees = []
        for _ in range(self.n_trees):
            take = rng.integers(0, n, size=n)
            tree = _Tree(max_depth=self.max_depth, max_features=self.max_features)
            tree.fit(X[take], y[take], rng)
            self.trees.append(tree)
        return self

    def proba(self, X):
        return np.mean([t.proba(X) for t in self.trees], axis=0)


class _AdaBoost:
    """Discrete AdaBoost over depth-1 trees (weighted-gini stumps)."""

    def __init__(self, n_rounds=50):
        self.n_rounds = n_rounds

    def fit(self, X, y, rng):
        n = len(y)
        w = np.full(n, 1.0 / n)
        y_pm = 2.0 * y - 1.0
        self.stumps: list[_Tree] = []
        self.alphas: list[float] = []
        for _ in range(self.n_rounds):
            stump = _WeightedStump().fit(X, y, w)
            h = stump.predict(X)
            h_pm = 2.0 * h - 1.0
            err = float(w[h != y].sum())
            err = min(max(err, 1e-16), 1.0 - 1e-16)
            if err >= 0.5:
                if not self.stumps:
                    self.stumps.append(stump)
                    self.alphas.append(1.0)
                break
            alpha = 0.5 * math.log((1.0 - err) / err)
            self.stumps.append(stump)
            self.alphas.append(alpha)
            w = w * np.exp(-alpha * y_pm * h_pm)
            w /= w.sum()
            if err <= 1e-12:
                break
        return self

    def proba(self, X):
        total = sum(self.alphas)
        f = np.zeros(len(X))
        for stump, alpha in zip(self.stumps, self.alphas):
            f += alpha * (2.0 * stump.predict(X) - 1.0)
        f /= total
        return (f + 1.0) / 2.0


class _WeightedStump:
    """Single split minimizing weighted misclassification, either polarity."""

    def fit(self, X, y, w):
        m, d = X.shape
        best = (np.inf, 0, -np.inf, 1)  # err, feature, threshold, polarity
        total_pos = float(w[y == 1].sum())
        total_neg = float(w[y == 0].sum())
        wy = w * y
        for f in range(d):
            order = np.argsort(X[:, f], kind="stable")
            xs = X[order, f]
            cw = np.cumsum(w[order])[:-1]
            cwy = np.cumsum(wy[order])[:-1]
            valid = xs[1:] > xs[:-1]
            if not valid.any():
                continue
            # polarity +1: predict 1 on the right of the threshold
            err_plus = cwy + (total_neg - (cw - cwy))
            err_minus = (cw - cwy) + (total_pos - cwy)
            for errs, polarity in ((err_plus, 1), (err_minus, -1)):
                masked = np.where(valid, errs, np.inf)
                i = int(np.argmin(masked))
                if masked[i] < best[0]:
                    best = (float(masked[i]), f, 0.5 * (xs[i] + xs[i + 1]), polarity)
        if not np.isfinite(best[0]):
            majority = 1 if float(wy.sum()) >= 0.5 * float(w.sum()) else 0
            self.feature, self.threshold, self.polarity = 0, -np.inf, 1 if majority else -1
            return self
        _, self.feature, self.threshold, self.polarity = best
        return self

    def predict(self, X):
        right = X[:, self.feature] > self.threshold
        if self.polarity == 1:
            return right.astype(np.float64)
        return (~right).astype(np.float64)


class _RegressionStump:
    """Depth-1 least-squares regressor used by gradient boosting; leaf
    values are one Newton step on the logistic loss."""

    def fit(self, X, residual, hessian):
        m, d = X.shape
        total_r = residual.sum()
        total_sq = float((residual * residual).sum())
        best = (-np.inf, 0, -np.inf)  # score, feature, threshold
        for f in range(d):
            order = np.argsort(X[:, f], kind="stable")
            xs = X[order, f]
            cr = np.cumsum(residual[order])[:-1]
            n_left = np.arange(1, m)
            valid = xs[1:] > xs[:-1]
            if not valid.any():
                continue
            score = cr * cr / n_left + (total_r - cr) ** 2 / (m - n_left)
            score = np.where(valid, score, -np.inf)
            i = int(np.argmax(score))
            if score[i] > best[0]:
                best = (float(score[i]), f, 0.5 * (xs[i] + xs[i + 1]))
        if not np.isfinite(best[0]):
            self.feature, self.threshold = 0, -np.inf
            denom = max(float(hessian.sum()), 1e-12)
            self.left_value = self.right_value = float(total_r / denom)
            return self
        _, self.feature, self.threshold = best
        mask = X[:, self.feature] <= self.threshold
        for side, name in ((mask, "left_value"), (~mask, "right_value")):
            denom = max(float(hessian[side].sum()), 1e-12)
            setattr(self, name, float(residual[side].sum() / denom))
        return self

    def predict(self, X):
        mask = X[:, self.feature] <= self.threshold
        return np.where(mask, self.left_value, self.right_value)


class _GradientBoosting:
    """Additive regression stumps on the logistic loss."""

    def __init__(self, n_rounds=100, lr=0.1):
        self.n_rounds = n_rounds
        self.lr = lr

    def fit(self, X, y, rng):
        p = float(np.clip(y.mean(), 1e-12, 1.0 - 1e-12))
        self.f0 = math.log(p / (1.0 - p))
        f = np.full(len(y), self.f0)
        self.stumps: list[_RegressionStump] = []
        for _ in range(self.n_rounds):
            p_hat = 1.0 / (1.0 + np.exp(-f))
            residual = y - p_hat
            hessian = p_hat * (1.0 - p_hat)
            stump = _RegressionStump().fit(X, residual, hessian)
            self.stumps.append(stump)
            f = f + self.lr * stump.predict(X)
        return self

    def proba(self, X):
        f = np.full(len(X), self.f0)
        for stump in self.stumps:
            f = f + self.lr * stump.predict(X)
        return 1.0 / (1.0 + np.exp(-f))


class _Voting:
    """Soft vote: arithmetic mean of member probabilities."""

    def __init__(self, members):
        self.members = members

    def proba(self, X):
        return np.mean([m.proba(X) for m in self.members], axis=0)


@dataclass
class StackedModel:
    base_models: list
    meta_model: object

    def proba(self, X):
        z = np.column_stack([(m.proba(X) >= 0.5).astype(np.float64) for m in self.base_models])
        return self.meta_model.proba(z)


# ---------------------------------------------------------------------------
# Public surface
# ---------------------------------------------------------------------------


@dataclass
class TrainedDetector:
    tag: str
    hyperparams: dict
    model: object
    feature_width: int
    seed: int


def _build_core(tag: str, hp: dict):
    if tag == TAG_BERNOULLI:
        return _BernoulliNB(alpha=hp["alpha"])
    if tag == TAG_NAIVE_BAYES:
        return _GaussianNB(var_smoothing=hp["var_smoothing"])
    if tag == TAG_DECISION_TREE:
        return _Tree(max_depth=hp["max_depth"], max_features="all")
    if tag == TAG_LOGISTIC_REGRESSION:
        return _LogisticRegression(epochs=hp["epochs"], lr=hp["lr"])
    if tag == TAG_KNN:
        return _Knn(k=hp["k"])
    if tag == TAG_MLP:
        return _Mlp(hidden=hp["hidden"], epochs=hp["epochs"], batch_size=hp["batch_size"], lr=hp["lr"])
    if tag == TAG_RANDOM_FOREST:
        return _Forest(n_trees=hp["n_trees"], max_depth=hp["max_depth"], max_features=hp["max_features"])
    if tag == TAG_BAGGING:
        return _Forest(n_trees=hp["n_trees"], max_depth=hp["max_depth"], max_features=hp["max_features"])
    if tag == TAG_ADABOOST:
        return _AdaBoost(n_rounds=hp["n_rounds"])
    if tag == TAG_GRADIENT_BOOSTING:
        return _GradientBoosting(n_rounds=hp["n_rounds"], lr=hp["lr"])
    raise ValueError(f"unknown detector tag {tag!r}")


def train(tag: str, hyperparams: dict | None, data: Dataset, seed: int) -> TrainedDetector:
    """Fit one detector. Ensembles recursively train their members."""
    _require_two_classes(data)
    hp = dict(DEFAULT_HYPERPARAMS.get(tag, {}))
    hp.update(hyperparams or {})
    rng = np.random.default_rng(seed)

    if tag == TAG_VOTING:
        members = [
            train(member, None, data, int(rng.integers(0, 2**31))).model
            for member in hp["members"]
        ]
        model = _Voting(members)
    elif tag == TAG_STACKING:
        return train_stacking(hp["base_tags"], hp["meta_tag"], data, seed, hyperparams=hp)
    else:
        model = _build_core(tag, hp).fit(data.x, data.y, rng)
    return TrainedDetector(tag=tag, hyperparams=hp, model=model, feature_width=data.feature_width, seed=seed)


def stack_from_models(base_models: list, meta_tag: str, data: Dataset, seed: int):
    """Stacking core: meta features are the bases' in-sample label
    predictions on the same training set (step 2 of the construction)."""
    z = np.column_stack(
        [(m.proba(data.x) >= 0.5).astype(np.float64) for m in base_models]
    )
    meta_data = Dataset(x=z, y=data.y)
    rng = np.random.default_rng(seed)
    hp = dict(DEFAULT_HYPERPARAMS.get(meta_tag, {}))
    meta = _build_core(meta_tag, hp).fit(meta_data.x, meta_data.y, rng)
    return StackedModel(base_models=base_models, meta_model=meta)


def train_stacking(
    base_tags: list[str],
    meta_tag: str,
    data: Dataset,
    seed: int,
    hyperparams: dict | None = None,
) -> TrainedDetector:
    """Step 1: fit every base on the full dataset. Step 2: build the
    label-prediction matrix on that same dataset. Step 3: fit the meta
    model on it."""
    _require_two_classes(data)
    rng = np.random.default_rng(seed)
    base_models = [
        train(tag, None, data, int(rng.integers(0, 2**31))).model for tag in base_tags
    ]
    model = stack_from_models(base_models, meta_tag, data, int(rng.integers(0, 2**31)))
    hp = dict(hyperparams or {})
    hp.update({"base_tags": list(base_tags), "meta_tag": meta_tag})
    return TrainedDetector(
        tag=TAG_STACKING, hyperparams=hp, model=model, feature_width=data.feature_width, seed=seed
    )


def predict_proba(det: TrainedDetector, x) -> float | np.ndarray:
    """Probability of the malware class; scalar for a single vector."""
    single = np.asarray(x).ndim == 1
    X = _as_matrix(x, det.feature_width)
    p = det.model.proba(X)
    return float(p[0]) if single else p


def predict_label(det: TrainedDetector, x) -> int | np.ndarray:
    """1 (malware) iff probability >= 0.5."""
    p = predict_proba(det, x)
    if isinstance(p, float):
        return int(p >= 0.5)
    return (p >= 0.5).astype(np.int64)


@dataclass(frozen=True)
class Metrics:
    tp: int
    tn: int
    fp: int
    fn: int
    accuracy: float
    precision: float
    recall: float
    f1: float
    auc: float
    degenerate: bool = False


def metrics_from_counts(tp: int, fp: int, fn: int, tn: int, auc: float = 0.0, auc_degenerate: bool = False) -> Metrics:
    total = tp + tn + fp + fn
    degenerate = auc_degenerate
    accuracy = (tp + tn) / total if total else 0.0
    if tp + fp:
        precision = tp / (tp + fp)
    else:
        precision, degenerate = 0.0, True
    if tp + fn:
        recall = tp / (tp + fn)
    else:
        recall, degenerate = 0.0, True
    if precision + recall > 0:
        f1 = 2.0 * precision * recall / (precision + recall)
    else:
        f1, degenerate = 0.0, True
    return Metrics(tp=tp, tn=tn, fp=fp, fn=fn, accuracy=accuracy, precision=precision,
                   recall=recall, f1=f1, auc=auc, degenerate=degenerate)


def auc_score(scores: np.ndarray, labels: np.ndarray) -> tuple[float, bool]:
    """Rank-based AUC; tied score pairs count 0.5. Returns (auc, degenerate);
    degenerate (auc 0.0) when either class is absent."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int64)
    pos = int((labels == 1).sum())
    neg = int((labels == 0).sum())
    if pos == 0 or neg == 0:
        return 0.0, True
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores))
    sorted_scores = scores[order]
    i = 0
    rank_pos = 1
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (rank_pos + rank_pos + (j - i))
        rank_pos += j - i + 1
        i = j + 1
    pos_rank_sum = ranks[labels == 1].sum()
    auc = (pos_rank_sum - pos * (pos + 1) / 2.0) / (pos * neg)
    return float(auc), False


def evaluate(det: TrainedDetector, data: Dataset) -> Metrics:
    """Confusion counts from hard labels, AUC from the score ranking."""
    if not len(data):
        raise DegenerateData("cannot evaluate on an empty dataset")
    p = det.model.proba(_as_matrix(data.x, det.feature_width))
    labels = (p >= 0.5).astype(np.int64)
    tp = int(((labels == 1) & (data.y == 1)).sum())
    tn = int(((labels == 0) & (data.y == 0)).sum())
    fp = int(((labels == 1) & (data.y == 0)).sum())
    fn = int(((labels == 0) & (data.y == 1)).sum())
    auc, auc_degenerate = auc_score(p, data.y)
    return metrics_from_counts(tp, fp, fn, tn, auc=auc, auc_degenerate=auc_degenerate)


def evasion_rate(det: TrainedDetector, samples: np.ndarray) -> float:
    """Fraction of (malicious) samples the detector labels benign."""
    X = _as_matrix(samples, det.feature_width)
    if not len(X):
        raise DegenerateData("no samples")
    labels = (det.model.proba(X) >= 0.5).astype(np.int64)
    return float((labels == 0).mean())


def save_detector(det: TrainedDetector, path) -> None:
    with open(path, "wb") as fh:
        pickle.dump(det, fh, protocol=4)


def load_detector(path) -> TrainedDetector:
    with open(path, "rb") as fh:
        return pickle.load(fh)
