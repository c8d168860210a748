"""Environment classification: the forest used online plus the offline comparison."""

from __future__ import annotations

import functools
import warnings

import numpy as np

from caparrot.adapter.corpus import generate_corpus, to_arrays
from caparrot.adapter.features import FEATURE_NAMES, FeatureVector
from caparrot.adapter.forest import ForestModel, train_forest
from caparrot.adapter.paramdb import REP
from caparrot.channel import RadioConfig

LABELS = [r.value for r in REP.ordered()]


def classify(model: ForestModel, features: FeatureVector) -> REP:
    return REP(LABELS[model.predict_one(features.as_array())])


def fit_forest(X, y, n_trees: int = 100, max_depth: int = 15, seed: int = 0) -> ForestModel:
    return train_forest(X, y, n_trees=n_trees, max_depth=max_depth, seed=seed,
                        classes=LABELS, feature_names=list(FEATURE_NAMES))


@functools.lru_cache(maxsize=4)
def default_model(cfg: RadioConfig = RadioConfig(), windows_per_class: int = 1000,
                  seed: int = 7) -> ForestModel:
    """Forest trained on a seeded synthetic corpus; cached per process."""
    X, y = to_arrays(generate_corpus(LABELS, windows_per_class, seed, cfg))
    return fit_forest(X, y, seed=seed)


def _ann(seed: int):
    from sklearn.neural_network import MLPClassifier
    from sklearn.pipeline import make_pipeline
    from sklearn.preprocessing import StandardScaler

    mlp = MLPClassifier(hidden_layer_sizes=(10, 10), activation="logistic", solver="sgd",
                        learning_rate_init=0.1, momentum=0.01, nesterovs_momentum=False,
                        max_iter=500, n_iter_no_change=500, random_state=seed)
    return make_pipeline(StandardScaler(), mlp)


def _svm(seed: int):
    from sklearn.pipeline import make_pipeline
    from sklearn.preprocessing import StandardScaler
    from sklearn.svm import SVC

    # libsvm trains with an SMO-type decomposition solver
    return make_pipeline(StandardScaler(), SVC(kernel="linear", C=1.0, random_state=seed))


class _ForestAdapter:
    def __init__(self, seed: int, n_trees: int = 100, max_depth: int = 15):
        self.seed, self.n_trees, self.max_depth = seed, n_trees, max_depth

    def fit(self, X, y):
        self.model = train_forest(X, y, self.n_trees, self.max_depth, self.seed)
        return self

    def predict(self, X):
        return self.model.predict(X)


MODELS = ("forest", "ann", "svm")


def cross_validate(X, y, folds: int = 10, models=MODELS, seed: int = 0) -> dict[str, float]:
    """Stratified k-fold accuracy per model."""
    from sklearn.exceptions import ConvergenceWarning
    from sklearn.model_selection import StratifiedKFold

    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if len(y) < folds:
        raise ValueError(f"{len(y)} samples cannot be split into {folds} folds")
    if len(np.unique(y)) < 2:
        raise ValueError("cross-validation needs at least two classes")
    factories = {"forest": _ForestAdapter, "ann": _ann, "svm": _svm}
    unknown = set(models) - set(factories)
    if unknown:
        raise ValueError(f"unknown models {sorted(unknown)}")
    splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    correct = {m: 0 for m in models}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        warnings.filterwarnings("ignore", message="The least populated class")
        for train, test in splitter.split(X, y):
            for name in models:
                est = factories[name](seed).fit(X[train], y[train])
                correct[name] += int(np.sum(est.predict(X[test]) == y[test]))
    return {name: correct[name] / len(y) for name in models}
