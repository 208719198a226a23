"""In-repo classifiers: CART tree, random forest, k-nearest neighbours, one-hidden-layer MLP.

Estimators work on float arrays and integer class codes 0..n_classes-1;
``voltspy.learners`` owns names, labels, and hyperparameter validation.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed
from numba import njit
from scipy.spatial.distance import cdist

logger = logging.getLogger(__name__)

CRITERIA = {"gini": 0, "entropy": 1}
SPLIT_EPS = 1e-12
KNN_CHUNK_ROWS = 256

MLP_EPOCHS = 200
MLP_STEP = 1e-3
MLP_BATCH = 32
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


# ── Tree kernel ──────────────────────────────────────────────────────


@njit(cache=True)
def _impurity(counts, total, criterion):
    if total <= 0.0:
        return 0.0
    result = 0.0
    if criterion == 0:
        squares = 0.0
        for c in range(counts.shape[0]):
            p = counts[c] / total
            squares += p * p
        return 1.0 - squares
    for c in range(counts.shape[0]):
        if counts[c] > 0.0:
            p = counts[c] / total
            result -= p * math.log2(p)
    return result


@njit(cache=True, nogil=True)
def _grow_tree(X, y, n_classes, rows, max_depth, max_features, criterion, seed):
    """
    Grow one CART tree over ``rows`` (bootstrap indices allowed, repeats kept).

    ``max_depth < 0`` means unbounded. With ``max_features < d`` the feature
    visiting order is a seeded permutation and only non-constant features
    count toward the quota; otherwise features are visited in index order.
    Ties go to the lowest feature index, then the lowest threshold.
    """
    m = rows.shape[0]
    d = X.shape[1]
    capacity = 2 * m + 1
    feature = np.full(capacity, -1, np.int64)
    threshold = np.zeros(capacity)
    left = np.full(capacity, -1, np.int64)
    right = np.full(capacity, -1, np.int64)
    value = np.zeros(capacity, np.int64)

    idx = rows.copy()
    buffer = np.empty(m, np.int64)
    stack_node = np.empty(capacity, np.int64)
    stack_start = np.empty(capacity, np.int64)
    stack_end = np.empty(capacity, np.int64)
    stack_depth = np.empty(capacity, np.int64)
    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = m
    stack_depth[0] = 0
    top = 1
    n_nodes = 1

    if max_features < d:
        np.random.seed(seed)
    counts = np.zeros(n_classes)
    left_counts = np.zeros(n_classes)
    right_counts = np.zeros(n_classes)

    while top > 0:
        top -= 1
        node = stack_node[top]
        start = stack_start[top]
        end = stack_end[top]
        depth = stack_depth[top]
        size = end - start

        counts[:] = 0.0
        for i in range(start, end):
            counts[y[idx[i]]] += 1.0
        majority = 0
        for c in range(1, n_classes):
            if counts[c] > counts[majority]:
                majority = c
        value[node] = majority
        if size < 2 or counts[majority] == size or (max_depth >= 0 and depth >= max_depth):
            continue

        parent = _impurity(counts, float(size), criterion)
        if max_features < d:
            candidates = np.random.permutation(d)
        else:
            candidates = np.arange(d)

        best_gain = -1.0
        best_feature = -1
        best_threshold = 0.0
        evaluated = 0
        vals = np.empty(size)
        for ci in range(d):
            if evaluated >= max_features:
                break
            f = candidates[ci]
            for i in range(size):
                vals[i] = X[idx[start + i], f]
            order = np.argsort(vals, kind="mergesort")
            if vals[order[0]] == vals[order[size - 1]]:
                continue
            evaluated += 1
            left_counts[:] = 0.0
            right_counts[:] = counts
            for i in range(size - 1):
                cls = y[idx[start + order[i]]]
                left_counts[cls] += 1.0
                right_counts[cls] -= 1.0
                a = vals[order[i]]
                b = vals[order[i + 1]]
                if a < b:
                    n_left = i + 1.0
                    n_right = size - n_left
                    gain = parent - (n_left / size) * _impurity(left_counts, n_left, criterion) \
                        - (n_right / size) * _impurity(right_counts, n_right, criterion)
                    if gain > best_gain + SPLIT_EPS or (
                        best_feature >= 0 and abs(gain - best_gain) <= SPLIT_EPS and f < best_feature
                    ):
                        cut = (a + b) / 2.0
                        if cut >= b:
                            cut = a
                        best_gain = gain
                        best_feature = f
                        best_threshold = cut

        if best_feature < 0 or best_gain <= SPLIT_EPS:
            continue

        n_left_rows = 0
        for i in range(start, end):
            if X[idx[i], best_feature] <= best_threshold:
                buffer[n_left_rows] = idx[i]
                n_left_rows += 1
        cursor = n_left_rows
        for i in range(start, end):
            if X[idx[i], best_feature] > best_threshold:
                buffer[cursor] = idx[i]
                cursor += 1
        for i in range(size):
            idx[start + i] = buffer[i]

        left_id = n_nodes
        right_id = n_nodes + 1
        n_nodes += 2
        feature[node] = best_feature
        threshold[node] = best_threshold
        left[node] = left_id
        right[node] = right_id

        stack_node[top] = right_id
        stack_start[top] = start + n_left_rows
        stack_end[top] = end
        stack_depth[top] = depth + 1
        top += 1
        stack_node[top] = left_id
        stack_start[top] = start
        stack_end[top] = start + n_left_rows
        stack_depth[top] = depth + 1
        top += 1

    return feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes]


@dataclass(frozen=True)
class TreeArrays:
    """Flat node arrays of a fitted tree; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            current = node[rows]
            go_left = X[rows, self.feature[current]] <= self.threshold[current]
            node[rows] = np.where(go_left, self.left[current], self.right[current])
            active[rows] = self.feature[node[rows]] >= 0
        return self.value[node]

    @property
    def node_count(self) -> int:
        return len(self.feature)

    def used_features(self) -> frozenset[int]:
        return frozenset(int(f) for f in self.feature if f >= 0)


def _grow(X: np.ndarray, y: np.ndarray, n_classes: int, rows: np.ndarray,
          max_depth: int | None, max_features: int, criterion: str, seed: int) -> TreeArrays:
    arrays = _grow_tree(
        np.ascontiguousarray(X, dtype=np.float64),
        np.ascontiguousarray(y, dtype=np.int64),
        n_classes,
        np.ascontiguousarray(rows, dtype=np.int64),
        -1 if max_depth is None else max_depth,
        max_features,
        CRITERIA[criterion],
        seed,
    )
    return TreeArrays(*arrays)


# ── Estimators ───────────────────────────────────────────────────────


class DecisionTree:
    """CART with midpoint thresholds and majority leaves."""

    def __init__(self, criterion: str = "gini", max_depth: int | None = None) -> None:
        self.criterion = criterion
        self.max_depth = max_depth
        self.tree: TreeArrays | None = None

    def fit(self, X: np.ndarray, y: np.ndarray, n_classes: int, seed: int = 0) -> "DecisionTree":
        self.tree = _grow(X, y, n_classes, np.arange(len(X)), self.max_depth, X.shape[1], self.criterion, 0)
        logger.debug("Grew tree nodes=%d depth_cap=%s", self.tree.node_count, self.max_depth)
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.tree.apply(X)


class RandomForest:
    """Bagged unbounded-depth trees with ceil(sqrt(d)) candidate features per split."""

    def __init__(self, n_estimators: int = 100, criterion: str = "gini", n_jobs: int = 1) -> None:
        self.n_estimators = n_estimators
        self.criterion = criterion
        self.n_jobs = n_jobs
        self.trees: list[TreeArrays] = []
        self.n_classes = 0

    def fit(self, X: np.ndarray, y: np.ndarray, n_classes: int, seed: int = 0) -> "RandomForest":
        X = np.ascontiguousarray(X, dtype=np.float64)
        n, d = X.shape
        max_features = max(1, math.ceil(math.sqrt(d)))
        plans = []
        for child in np.random.SeedSequence(seed).spawn(self.n_estimators):
            rng = np.random.default_rng(child)
            plans.append((rng.integers(0, n, size=n), int(rng.integers(0, 2**32 - 1))))
        self.trees = Parallel(n_jobs=self.n_jobs, prefer="threads")(
            delayed(_grow)(X, y, n_classes, rows, None, max_features, self.criterion, tree_seed)
            for rows, tree_seed in plans
        )
        self.n_classes = n_classes
        logger.debug("Grew forest trees=%d max_features=%d", len(self.trees), max_features)
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        votes = np.zeros((len(X), self.n_classes), dtype=np.int64)
        rows = np.arange(len(X))
        for tree in self.trees:
            votes[rows, tree.apply(X)] += 1
        return np.argmax(votes, axis=1)


class KNearest:
    """Euclidean k-NN with uniform or inverse-distance votes."""

    def __init__(self, k: int = 5, weighting: str = "uniform") -> None:
        self.k = k
        self.weighting = weighting
        self.X: np.ndarray | None = None
        self.y: np.ndarray | None = None
        self.n_classes = 0

    def fit(self, X: np.ndarray, y: np.ndarray, n_classes: int, seed: int = 0) -> "KNearest":
        self.X = np.array(X, dtype=np.float64)
        self.y = np.array(y, dtype=np.int64)
        self.X.setflags(write=False)
        self.y.setflags(write=False)
        self.n_classes = n_classes
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        k = min(self.k, len(self.X))
        out = np.empty(len(X), dtype=np.int64)
        for start in range(0, len(X), KNN_CHUNK_ROWS):
            chunk = X[start:start + KNN_CHUNK_ROWS]
            distances = cdist(chunk, self.X)
            nearest = np.argsort(distances, axis=1, kind="stable")[:, :k]
            near_dist = np.take_along_axis(distances, nearest, axis=1)
            near_cls = self.y[nearest]
            if self.weighting == "distance":
                exact = near_dist == 0.0
                with np.errstate(divide="ignore"):
                    weights = 1.0 / near_dist
                weights = np.where(exact.any(axis=1, keepdims=True), exact.astype(float), weights)
            else:
                weights = np.ones_like(near_dist)
            votes = np.zeros((len(chunk), self.n_classes))
            np.add.at(votes, (np.arange(len(chunk))[:, None], near_cls), weights)
            out[start:start + len(chunk)] = np.argmax(votes, axis=1)
        return out


def mlp_loss_and_grads(
    params: dict[str, np.ndarray], X: np.ndarray, y: np.ndarray,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean softmax cross-entropy of a one-hidden-layer ReLU network and its gradients."""
    hidden_in = X @ params["W1"] + params["b1"]
    hidden = np.maximum(hidden_in, 0.0)
    logits = hidden @ params["W2"] + params["b2"]
    logits = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(logits)
    probs = exp / exp.sum(axis=1, keepdims=True)
    batch = len(X)
    rows = np.arange(batch)
    loss = float(-np.log(np.maximum(probs[rows, y], 1e-300)).mean())

    d_logits = probs.copy()
    d_logits[rows, y] -= 1.0
    d_logits /= batch
    d_hidden = (d_logits @ params["W2"].T) * (hidden_in > 0.0)
    grads = {
        "W2": hidden.T @ d_logits,
        "b2": d_logits.sum(axis=0),
        "W1": X.T @ d_hidden,
        "b1": d_hidden.sum(axis=0),
    }
    return loss, grads


def glorot_params(n_in: int, n_hidden: int, n_out: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    first = math.sqrt(6.0 / (n_in + n_hidden))
    second = math.sqrt(6.0 / (n_hidden + n_out))
    return {
        "W1": rng.uniform(-first, first, size=(n_in, n_hidden)),
        "b1": np.zeros(n_hidden),
        "W2": rng.uniform(-second, second, size=(n_hidden, n_out)),
        "b2": np.zeros(n_out),
    }


class Perceptron:
    """One ReLU hidden layer, softmax output, Adam on mini-batches, fixed epoch count."""

    def __init__(self, hidden: int = 100, epochs: int = MLP_EPOCHS,
                 step: float = MLP_STEP, batch: int = MLP_BATCH) -> None:
        self.hidden = hidden
        self.epochs = epochs
        self.step = step
        self.batch = batch
        self.params: dict[str, np.ndarray] = {}
        self.loss_curve: list[float] = []

    def fit(self, X: np.ndarray, y: np.ndarray, n_classes: int, seed: int = 0) -> "Perceptron":
        rng = np.random.default_rng(seed)
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        params = glorot_params(X.shape[1], self.hidden, n_classes, rng)
        first = {key: np.zeros_like(value) for key, value in params.items()}
        second = {key: np.zeros_like(value) for key, value in params.items()}
        self.loss_curve = [mlp_loss_and_grads(params, X, y)[0]]
        steps = 0
        for _ in range(self.epochs):
            order = rng.permutation(len(X))
            for start in range(0, len(X), self.batch):
                batch = order[start:start + self.batch]
                _, grads = mlp_loss_and_grads(params, X[batch], y[batch])
                steps += 1
                for key, grad in grads.items():
                    first[key] = ADAM_BETA1 * first[key] + (1.0 - ADAM_BETA1) * grad
                    second[key] = ADAM_BETA2 * second[key] + (1.0 - ADAM_BETA2) * grad ** 2
                    m_hat = first[key] / (1.0 - ADAM_BETA1 ** steps)
                    v_hat = second[key] / (1.0 - ADAM_BETA2 ** steps)
                    params[key] -= self.step * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
            self.loss_curve.append(mlp_loss_and_grads(params, X, y)[0])
        self.params = params
        logger.debug("Trained MLP hidden=%d loss %.4f -> %.4f", self.hidden, self.loss_curve[0], self.loss_curve[-1])
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        hidden = np.maximum(X @ self.params["W1"] + self.params["b1"], 0.0)
        return np.argmax(hidden @ self.params["W2"] + self.params["b2"], axis=1)
