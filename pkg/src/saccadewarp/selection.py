"""Saccade selection: greedy leave-one-saccade-out labels and a random forest.

The forest is grown from scratch: bootstrap samples, a fixed random attribute
subset per tree, Gini splits on thresholds, and a learned default branch for
missing values (latency is absent without a stimulus log).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .attributes import ATTRIBUTE_NAMES, SaccadeAttributes, compute_attributes

SUITABLE = "suitable"
UNSUITABLE = "unsuitable"
SCHEMA_VERSION = "1.0"


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 20
    attrs_per_tree: int = 5
    max_depth: int = 50
    rng_seed: int = 0
    min_leaf: int = 2

    def __post_init__(self):
        if self.n_trees < 1 or self.max_depth < 1 or self.min_leaf < 1:
            raise ValueError("n_trees, max_depth and min_leaf must be >= 1")
        if not 1 <= self.attrs_per_tree <= len(ATTRIBUTE_NAMES):
            raise ValueError(f"attrs_per_tree must be in [1, {len(ATTRIBUTE_NAMES)}]")


@dataclass(frozen=True)
class LabeledSaccade:
    attributes: SaccadeAttributes
    label: str
    session_id: str = ""
    participant_id: str = ""
    index: int = -1  # position of the saccade within its session


def _gini(counts: np.ndarray) -> np.ndarray:
    n = counts.sum(-1)
    safe = np.where(n > 0, n, 1)
    p = counts / safe[..., None]
    return 1.0 - (p * p).sum(-1)


class DecisionTree:
    """Binary CART tree over a fixed attribute subset, stored as flat arrays."""

    def __init__(self, attrs, feature, threshold, left, right, missing_left, counts):
        self.attrs = np.asarray(attrs, dtype=int)
        self.feature = np.asarray(feature, dtype=int)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=int)
        self.right = np.asarray(right, dtype=int)
        self.missing_left = np.asarray(missing_left, dtype=bool)
        self.counts = np.asarray(counts, dtype=float)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[i] + 1
                depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row of X."""
        node = np.zeros(len(X), dtype=int)
        active = self.feature[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            nd = node[rows]
            x = X[rows, self.feature[nd]]
            go_left = np.where(np.isnan(x), self.missing_left[nd], x <= self.threshold[nd])
            node[rows] = np.where(go_left, self.left[nd], self.right[nd])
            active[rows] = self.feature[node[rows]] >= 0
        return node

    def predict_class(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.counts[self.apply(X)], axis=1)

    def to_dict(self) -> dict:
        return {
            "attrs": self.attrs.tolist(),
            "attr_index": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "missing_left": self.missing_left.tolist(),
            "leaf_counts": self.counts.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        return cls(d["attrs"], d["attr_index"], d["threshold"], d["left"], d["right"],
                   d["missing_left"], d["leaf_counts"])


def _best_split(X, y, idx, attrs, n_classes, min_leaf):
    """Lowest weighted Gini split of the rows ``idx``; None if no valid split."""
    yi = y[idx]
    n = len(idx)
    best = None
    for f in attrs:
        x = X[idx, f]
        miss = np.isnan(x)
        m_counts = np.bincount(yi[miss], minlength=n_classes).astype(float)
        xs_idx = np.flatnonzero(~miss)
        if len(xs_idx) < 2:
            continue
        order = xs_idx[np.argsort(x[xs_idx], kind="stable")]
        xs = x[order]
        onehot = np.zeros((len(order), n_classes))
        onehot[np.arange(len(order)), yi[order]] = 1.0
        cum = np.cumsum(onehot, axis=0)[:-1]
        pos = np.flatnonzero(xs[1:] > xs[:-1])
        if not len(pos):
            continue
        left = cum[pos]
        right = cum[-1] + onehot[-1] - left
        for miss_left in (True, False):
            L = left + m_counts if miss_left else left
            R = right if miss_left else right + m_counts
            nl, nr = L.sum(1), R.sum(1)
            ok = (nl >= min_leaf) & (nr >= min_leaf)
            if not ok.any():
                continue
            score = (nl * _gini(L) + nr * _gini(R)) / n
            score = np.where(ok, score, np.inf)
            j = int(np.argmin(score))
            if best is None or score[j] < best[0]:
                lo, hi = xs[pos[j]], xs[pos[j] + 1]
                thr = 0.5 * (lo + hi)
                if thr >= hi:
                    thr = lo
                best = (float(score[j]), int(f), float(thr), miss_left)
    return best


def grow_tree(X, y, attrs, n_classes, max_depth, min_leaf, importances, n_total):
    """Grow one tree on (X, y); accumulates impurity decreases into ``importances``."""
    feature, threshold, left, right, missing_left, counts = [], [], [], [], [], []

    def new_node(c):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        missing_left.append(False)
        counts.append(c)
        return len(feature) - 1

    root = new_node(np.bincount(y, minlength=n_classes).astype(float))
    stack = [(root, np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        c = counts[node]
        parent_gini = float(_gini(c))
        if depth >= max_depth or parent_gini == 0.0 or len(idx) < 2 * min_leaf:
            continue
        split = _best_split(X, y, idx, attrs, n_classes, min_leaf)
        if split is None or parent_gini - split[0] <= 1e-12:
            continue
        score, f, thr, miss_left = split
        x = X[idx, f]
        go_left = np.where(np.isnan(x), miss_left, x <= thr)
        li, ri = idx[go_left], idx[~go_left]
        importances[f] += len(idx) / n_total * (parent_gini - score)
        feature[node], threshold[node], missing_left[node] = f, thr, miss_left
        ln = new_node(np.bincount(y[li], minlength=n_classes).astype(float))
        rn = new_node(np.bincount(y[ri], minlength=n_classes).astype(float))
        left[node], right[node] = ln, rn
        stack.append((rn, ri, depth + 1))
        stack.append((ln, li, depth + 1))
    return DecisionTree(sorted(attrs), feature, threshold, left, right, missing_left, counts)


class SaccadeForestClassifier(BaseEstimator, ClassifierMixin):
    """Random forest over saccade attribute vectors.

    Each tree sees a bootstrap sample and ``attrs_per_tree`` attributes drawn
    once for that tree. NaN marks a missing value and follows the split's
    default branch.
    """

    def __init__(self, n_trees=20, attrs_per_tree=5, max_depth=50, min_leaf=2, random_state=0):
        self.n_trees = n_trees
        self.attrs_per_tree = attrs_per_tree
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.random_state = random_state

    @classmethod
    def from_config(cls, cfg: ForestConfig) -> "SaccadeForestClassifier":
        return cls(cfg.n_trees, cfg.attrs_per_tree, cfg.max_depth, cfg.min_leaf, cfg.rng_seed)

    @property
    def config(self) -> ForestConfig:
        return ForestConfig(self.n_trees, self.attrs_per_tree, self.max_depth, self.random_state, self.min_leaf)

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, ensure_all_finite="allow-nan")
        self.classes_, y_enc = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("training data must contain at least two classes")
        n, n_features = X.shape
        if n < 2 * self.min_leaf:
            raise ValueError(f"need at least {2 * self.min_leaf} samples")
        if not 1 <= self.attrs_per_tree <= n_features:
            raise ValueError("attrs_per_tree must be between 1 and the number of features")
        self.n_features_in_ = n_features
        k = len(self.classes_)
        self.trees_ = []
        self.bootstrap_ = []  # in-bag row indices per tree
        per_tree = []
        for child in np.random.SeedSequence(self.random_state).spawn(self.n_trees):
            rng = np.random.default_rng(child)
            attrs = rng.choice(n_features, self.attrs_per_tree, replace=False)
            boot = rng.integers(0, n, n)
            imp = np.zeros(n_features)
            tree = grow_tree(X[boot], y_enc[boot], attrs, k, self.max_depth, self.min_leaf, imp, n)
            self.trees_.append(tree)
            self.bootstrap_.append(boot)
            per_tree.append(imp / imp.sum() if imp.sum() > 0 else imp)
        mean = np.mean(per_tree, axis=0)
        self.feature_importances_ = mean / mean.sum() if mean.sum() > 0 else np.full(n_features, 1.0 / n_features)
        return self

    def _votes(self, X) -> np.ndarray:
        check_is_fitted(self, "trees_")
        X = check_array(X, dtype=float, ensure_all_finite="allow-nan")
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        votes = np.zeros((len(X), len(self.classes_)))
        for tree in self.trees_:
            votes[np.arange(len(X)), tree.predict_class(X)] += 1
        return votes / len(self.trees_)

    def predict_proba(self, X) -> np.ndarray:
        """Fraction of trees voting for each class."""
        return self._votes(X)

    def predict(self, X) -> np.ndarray:
        votes = self._votes(X)
        if len(self.classes_) == 2:
            return self.classes_[(votes[:, 1] >= 0.5).astype(int)]
        return self.classes_[np.argmax(votes, axis=1)]

    def to_dict(self) -> dict:
        check_is_fitted(self, "trees_")
        return {
            "schema_version": SCHEMA_VERSION,
            "params": self.get_params(),
            "classes": self.classes_.tolist(),
            "n_features": int(self.n_features_in_),
            "feature_names": list(ATTRIBUTE_NAMES) if self.n_features_in_ == len(ATTRIBUTE_NAMES) else None,
            "importances": self.feature_importances_.tolist(),
            "trees": [t.to_dict() for t in self.trees_],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SaccadeForestClassifier":
        version = str(d.get("schema_version", ""))
        if not version or int(version.split(".")[0]) > int(SCHEMA_VERSION.split(".")[0]):
            raise ValueError(f"unsupported schema_version {version!r}")
        model = cls(**d["params"])
        model.classes_ = np.array(d["classes"])
        model.n_features_in_ = int(d["n_features"])
        model.feature_importances_ = np.array(d["importances"], dtype=float)
        model.trees_ = [DecisionTree.from_dict(t) for t in d["trees"]]
        return model


# functional surface ---------------------------------------------------------

def to_xy(data: Sequence[LabeledSaccade]) -> tuple[np.ndarray, np.ndarray]:
    X = np.vstack([d.attributes.as_array() for d in data])
    y = np.array([1 if d.label == SUITABLE else 0 for d in data])
    return X, y


def downsample_majority(data: Sequence[LabeledSaccade], rng_seed: int = 0) -> list[LabeledSaccade]:
    """Randomly shrink the larger class to the size of the smaller, then shuffle."""
    labels = np.array([d.label for d in data])
    classes, counts = np.unique(labels, return_counts=True)
    if len(classes) < 2:
        raise ValueError("both classes must be present")
    rng = np.random.default_rng(rng_seed)
    m = counts.min()
    keep = []
    for c in classes:
        members = np.flatnonzero(labels == c)
        keep.extend(members if len(members) == m else rng.choice(members, m, replace=False))
    keep = np.array(keep)[rng.permutation(len(keep))]
    return [data[i] for i in keep]


def train(data: Sequence[LabeledSaccade], cfg: ForestConfig = ForestConfig()) -> SaccadeForestClassifier:
    if not data:
        raise ValueError("no training data")
    X, y = to_xy(data)
    return SaccadeForestClassifier.from_config(cfg).fit(X, y)


def predict(forest: SaccadeForestClassifier, attrs: SaccadeAttributes) -> tuple[str, float]:
    """(label, score) where score is the fraction of trees voting suitable."""
    votes = forest.predict_proba(attrs.as_array()[None, :])[0]
    classes = list(forest.classes_)
    score = float(votes[classes.index(1)]) if 1 in classes else 0.0
    return (SUITABLE if score >= 0.5 else UNSUITABLE), score


def greedy_removal(n: int, error_fn: Callable[[np.ndarray], float], rng_seed: int = 0) -> np.ndarray:
    """First-improvement backward elimination; returns the surviving mask.

    Each round visits the remaining members in a fresh random order and drops
    the first one whose removal lowers ``error_fn``; stops when none does.
    """
    rng = np.random.default_rng(rng_seed)
    mask = np.ones(n, dtype=bool)
    current = error_fn(mask)
    while True:
        for k in rng.permutation(np.flatnonzero(mask)):
            trial = mask.copy()
            trial[k] = False
            err = error_fn(trial)
            if err < current:
                mask, current = trial, err
                break
        else:
            return mask


def label_by_loso(saccades, session, warp_fn: Optional[Callable] = None, rng_seed: int = 0, *,
                  fixations=None, stream=None, mode="middle", quad_px=25, kernel=5) -> list[LabeledSaccade]:
    """Label saccades suitable/unsuitable by greedy leave-one-saccade-out.

    ``warp_fn(mask) -> mean error (deg)`` scores a subset of saccades; by
    default a :class:`~saccadewarp.evaluation.SubsetAccuracy` is built from
    ``fixations`` (segmented from ``stream``) and the session's stimulus log.
    """
    if len(saccades) < 2:
        raise ValueError("need at least two saccades")
    if warp_fn is None:
        from .evaluation import SubsetAccuracy, fixation_points

        if fixations is None:
            raise ValueError("fixations are required when warp_fn is not given")
        fp = fixation_points(session.stimulus, fixations, stream if stream is not None else session.stream)
        warp_fn = SubsetAccuracy(saccades, fp, session.geom, mode, quad_px, kernel)
    mask = greedy_removal(len(saccades), warp_fn, rng_seed)
    return [
        LabeledSaccade(compute_attributes(s, session.geom, session.stimulus),
                       SUITABLE if keep else UNSUITABLE, session.session_id, session.participant_id, i)
        for i, (s, keep) in enumerate(zip(saccades, mask))
    ]
