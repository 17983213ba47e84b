"""Model artifacts, the native gradient-boosted tree ensembles and model persistence."""

from __future__ import annotations

import enum
import logging
import pickle
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.ensemble import RandomForestClassifier, RandomForestRegressor
from sklearn.linear_model import LinearRegression, LogisticRegression
from sklearn.preprocessing import LabelEncoder
from sklearn.tree import DecisionTreeRegressor
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from toolplan.table import ToolkitIoError

logger = logging.getLogger(__name__)

MODEL_MAGIC = b"TOOLPLAN-MODEL\x01\n"


class ModelKind(enum.Enum):
    LINEAR_REGRESSION = "linear_regression"
    LOGISTIC_REGRESSION = "logistic_regression"
    RANDOM_FOREST_REGRESSOR = "random_forest_regressor"
    RANDOM_FOREST_CLASSIFIER = "random_forest_classifier"
    GBDT_REGRESSOR = "gbdt_regressor"
    GBDT_CLASSIFIER = "gbdt_classifier"

    @property
    def is_classifier(self) -> bool:
        return self in {
            ModelKind.LOGISTIC_REGRESSION,
            ModelKind.RANDOM_FOREST_CLASSIFIER,
            ModelKind.GBDT_CLASSIFIER,
        }


# catalog suffix (after fit_/tune_) -> estimator family
FAMILIES: dict[str, ModelKind] = {
    "logistic_regressor": ModelKind.LOGISTIC_REGRESSION,
    "linear_regressor": ModelKind.LINEAR_REGRESSION,
    "random_forest_regressor": ModelKind.RANDOM_FOREST_REGRESSOR,
    "random_forest_classifier": ModelKind.RANDOM_FOREST_CLASSIFIER,
    "xgboost_regressor": ModelKind.GBDT_REGRESSOR,
    "xgboost_classifier": ModelKind.GBDT_CLASSIFIER,
    "lightgbm_regressor": ModelKind.GBDT_REGRESSOR,
    "lightgbm_classifier": ModelKind.GBDT_CLASSIFIER,
    "catboost_regressor": ModelKind.GBDT_REGRESSOR,
    "catboost_classifier": ModelKind.GBDT_CLASSIFIER,
}


class FeatureMismatch(ValueError):
    def __init__(self, missing: list[str], extra: list[str], reordered: bool = False):
        self.missing = missing
        self.extra = extra
        self.reordered = reordered
        detail = f"missing columns {missing}, unexpected columns {extra}"
        if reordered:
            detail = "columns are not in the order the model was trained on"
        super().__init__(f"Feature names do not match the fitted model: {detail}")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -35.0, 35.0)))


def _softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


class _BoostingMixin:
    n_estimators: int
    learning_rate: float
    max_depth: int | None
    min_samples_leaf: int
    subsample: float
    random_state: int | None

    def _rows(self, rng: np.random.Generator, n_rows: int) -> np.ndarray:
        if self.subsample >= 1.0:
            return np.arange(n_rows)
        size = max(1, int(round(self.subsample * n_rows)))
        return np.sort(rng.choice(n_rows, size=size, replace=False))

    def _fit_tree(
        self, X: np.ndarray, target: np.ndarray, rows: np.ndarray, rng: np.random.Generator
    ) -> DecisionTreeRegressor:
        tree = DecisionTreeRegressor(
            max_depth=self.max_depth,
            min_samples_leaf=self.min_samples_leaf,
            random_state=int(rng.integers(0, 2**31 - 1)),
        )
        tree.fit(X[rows], target[rows])
        return tree


class GradientBoostedTreesRegressor(_BoostingMixin, RegressorMixin, BaseEstimator):
    """Least-squares gradient boosting over `DecisionTreeRegressor` base learners."""

    def __init__(
        self,
        n_estimators: int = 100,
        learning_rate: float = 0.1,
        max_depth: int | None = 3,
        min_samples_leaf: int = 1,
        subsample: float = 1.0,
        random_state: int | None = None,
    ):
        self.n_estimators = n_estimators
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.subsample = subsample
        self.random_state = random_state

    def fit(self, X: Any, y: Any) -> GradientBoostedTreesRegressor:
        X, y = check_X_y(X, y, dtype="float64", y_numeric=True)
        rng = np.random.default_rng(self.random_state)
        self.init_ = float(np.mean(y))
        self.estimators_: list[DecisionTreeRegressor] = []
        prediction = np.full(len(y), self.init_)
        for _ in range(self.n_estimators):
            residual = y - prediction
            tree = self._fit_tree(X, residual, self._rows(rng, len(y)), rng)
            prediction += self.learning_rate * tree.predict(X)
            self.estimators_.append(tree)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X: Any) -> np.ndarray:
        check_is_fitted(self, "estimators_")
        X = check_array(X, dtype="float64")
        prediction = np.full(X.shape[0], self.init_)
        for tree in self.estimators_:
            prediction += self.learning_rate * tree.predict(X)
        return prediction


class GradientBoostedTreesClassifier(_BoostingMixin, ClassifierMixin, BaseEstimator):
    """Gradient boosting on log loss: one logit for two classes, one tree per class per round otherwise."""

    def __init__(
        self,
        n_estimators: int = 100,
        learning_rate: float = 0.1,
        max_depth: int | None = 3,
        min_samples_leaf: int = 1,
        subsample: float = 1.0,
        random_state: int | None = None,
    ):
        self.n_estimators = n_estimators
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.subsample = subsample
        self.random_state = random_state

    def fit(self, X: Any, y: Any) -> GradientBoostedTreesClassifier:
        X, y = check_X_y(X, y, dtype="float64")
        encoder = LabelEncoder()
        encoded = encoder.fit_transform(y)
        self.classes_ = encoder.classes_
        n_classes = len(self.classes_)
        rng = np.random.default_rng(self.random_state)
        self.estimators_: list[list[DecisionTreeRegressor]] = []

        if n_classes <= 2:
            positive = (encoded == 1).astype("float64")
            prior = np.clip(positive.mean(), 1e-6, 1 - 1e-6)
            self.init_ = np.array([np.log(prior / (1 - prior))])
            scores = np.full(len(y), self.init_[0])
            for _ in range(self.n_estimators if n_classes == 2 else 0):
                residual = positive - _sigmoid(scores)
                tree = self._fit_tree(X, residual, self._rows(rng, len(y)), rng)
                scores += self.learning_rate * tree.predict(X)
                self.estimators_.append([tree])
        else:
            onehot = np.eye(n_classes)[encoded]
            priors = np.clip(onehot.mean(axis=0), 1e-6, None)
            self.init_ = np.log(priors)
            scores = np.tile(self.init_, (len(y), 1))
            for _ in range(self.n_estimators):
                residual = onehot - _softmax(scores)
                rows = self._rows(rng, len(y))
                round_trees = []
                for k in range(n_classes):
                    tree = self._fit_tree(X, residual[:, k], rows, rng)
                    scores[:, k] += self.learning_rate * tree.predict(X)
                    round_trees.append(tree)
                self.estimators_.append(round_trees)
        self.n_features_in_ = X.shape[1]
        return self

    def _scores(self, X: np.ndarray) -> np.ndarray:
        scores = np.tile(self.init_, (X.shape[0], 1))
        for round_trees in self.estimators_:
            for k, tree in enumerate(round_trees):
                scores[:, k] += self.learning_rate * tree.predict(X)
        return scores

    def predict_proba(self, X: Any) -> np.ndarray:
        check_is_fitted(self, "estimators_")
        X = check_array(X, dtype="float64")
        scores = self._scores(X)
        if len(self.classes_) == 1:
            return np.ones((X.shape[0], 1))
        if len(self.classes_) == 2:
            positive = _sigmoid(scores[:, 0])
            return np.column_stack([1 - positive, positive])
        return _softmax(scores)

    def predict(self, X: Any) -> np.ndarray:
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]


def build_estimator(kind: ModelKind, params: dict[str, Any], seed: int) -> BaseEstimator:
    """Instantiate the estimator for `kind`; seeded families receive `random_state=seed`."""
    match kind:
        case ModelKind.LINEAR_REGRESSION:
            return LinearRegression(**params)
        case ModelKind.LOGISTIC_REGRESSION:
            return LogisticRegression(**params)
        case ModelKind.RANDOM_FOREST_REGRESSOR:
            return RandomForestRegressor(random_state=seed, **params)
        case ModelKind.RANDOM_FOREST_CLASSIFIER:
            return RandomForestClassifier(random_state=seed, **params)
        case ModelKind.GBDT_REGRESSOR:
            return GradientBoostedTreesRegressor(random_state=seed, **params)
        case ModelKind.GBDT_CLASSIFIER:
            return GradientBoostedTreesClassifier(random_state=seed, **params)


@dataclass
class ModelArtifact:
    """A fitted estimator plus what the search needs to know about it."""

    tool: str
    kind: ModelKind
    estimator: Any = field(repr=False)
    feature_names: list[str]
    cv_score: float
    best_params: dict[str, Any] = field(default_factory=dict)
    target_name: str = "prediction"

    @property
    def is_classifier(self) -> bool:
        return self.kind.is_classifier

    def check_features(self, X: pd.DataFrame) -> None:
        columns = [str(c) for c in X.columns]
        if columns == self.feature_names:
            return
        missing = [c for c in self.feature_names if c not in columns]
        extra = [c for c in columns if c not in self.feature_names]
        raise FeatureMismatch(missing, extra, reordered=not missing and not extra)

    def predict(self, X: pd.DataFrame) -> np.ndarray:
        self.check_features(X)
        return np.asarray(self.estimator.predict(X.to_numpy(dtype="float64", na_value=np.nan)))

    def predict_proba(self, X: pd.DataFrame) -> np.ndarray | None:
        self.check_features(X)
        if not hasattr(self.estimator, "predict_proba"):
            return None
        return np.asarray(self.estimator.predict_proba(X.to_numpy(dtype="float64", na_value=np.nan)))


def save_artifact(model: ModelArtifact, filepath: str | Path) -> Path:
    path = Path(filepath)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(MODEL_MAGIC + pickle.dumps(model, protocol=pickle.HIGHEST_PROTOCOL))
    except OSError as cause:
        raise ToolkitIoError(f"Could not write {path}: {cause}") from cause
    logger.debug("Saved %s model to %s", model.tool, path)
    return path


def load_artifact(filepath: str | Path) -> ModelArtifact:
    path = Path(filepath)
    try:
        payload = path.read_bytes()
    except OSError as cause:
        raise ToolkitIoError(f"Could not read {path}: {cause}") from cause
    if not payload.startswith(MODEL_MAGIC):
        raise ToolkitIoError(f"{path} is not a toolplan model file")
    model = pickle.loads(payload[len(MODEL_MAGIC) :])
    if not isinstance(model, ModelArtifact):
        raise ToolkitIoError(f"{path} does not contain a model artifact")
    return model
