"""Model fitting, tuning, evaluation and prediction tools.

The ten `fit_*` and ten `tune_*` tools are generated from `FAMILIES`; their defaults and tuning grids
come from the packaged `grids.toml` unless the `ToolEnvironment` overrides them.
"""

from __future__ import annotations

import functools
import logging
import math
from typing import Annotated, Any

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator
from sklearn.metrics import (
    accuracy_score,
    f1_score,
    mean_absolute_error,
    mean_squared_error,
    r2_score,
    roc_auc_score,
)
from sklearn.model_selection import GridSearchCV, KFold, StratifiedKFold, cross_val_score

from toolplan import table
from toolplan.config import packaged_toml
from toolplan.models import FAMILIES, ModelArtifact, build_estimator
from toolplan.scratchpad import ObjectKind
from toolplan.table import ColumnKind
from toolplan.toolkit.base import (
    MODEL,
    TABLE,
    TARGET,
    CvTooLarge,
    EmptyGrid,
    ModelSettings,
    NamedOutput,
    NaNInFeatures,
    NonNumericFeatures,
    TargetMissingValues,
    ToolEnvironment,
    ToolOutput,
    tool,
)

logger = logging.getLogger(__name__)

DEFAULT_ENV = ToolEnvironment()

_TITLES = {
    "logistic_regressor": "Logistic Regression",
    "linear_regressor": "Linear Regression",
    "random_forest_regressor": "Random Forest Regressor",
    "random_forest_classifier": "Random Forest Classifier",
    "xgboost_regressor": "XGBoost Regressor",
    "xgboost_classifier": "XGBoost Classifier",
    "lightgbm_regressor": "LightGBM Regressor",
    "lightgbm_classifier": "LightGBM Classifier",
    "catboost_regressor": "CatBoost Regressor",
    "catboost_classifier": "CatBoost Classifier",
}


@functools.cache
def packaged_settings() -> dict[str, ModelSettings]:
    data = packaged_toml("grids.toml")
    return {
        name: ModelSettings(defaults=dict(entry.get("defaults", {})), grid=dict(entry.get("grid", {})))
        for name, entry in data.items()
    }


def settings_for(env: ToolEnvironment, family: str) -> ModelSettings:
    if family in env.models:
        return env.models[family]
    return packaged_settings().get(family, ModelSettings())


def feature_matrix(X: pd.DataFrame) -> np.ndarray:
    """Float matrix of an all-numeric (int/float/bool) feature table without missing cells."""
    kinds = table.kinds(X)
    bad = [name for name, kind in kinds.items() if not (kind.numeric or kind is ColumnKind.BOOL)]
    if bad:
        raise NonNumericFeatures(bad)
    with_nan = [name for name in kinds if X[name].isna().any()]
    if with_nan:
        raise NaNInFeatures(with_nan)
    return X.astype("float64").to_numpy(dtype="float64")


def target_vector(y: pd.Series | pd.DataFrame, classification: bool) -> np.ndarray:
    if isinstance(y, pd.DataFrame):
        if y.shape[1] != 1:
            raise ValueError(f"Expected a single target column, got {y.shape[1]} columns")
        y = y.iloc[:, 0]
    if y.isna().any():
        raise TargetMissingValues()
    kind = table.column_kind(y)
    if kind is ColumnKind.BOOL:
        return y.to_numpy(dtype=bool)
    if kind.numeric:
        if classification and kind is ColumnKind.INT:
            return y.to_numpy(dtype="int64")
        return y.to_numpy(dtype="float64")
    return np.array([str(v) for v in y.tolist()], dtype=object)


def _target_name(y: pd.Series | pd.DataFrame) -> str:
    if isinstance(y, pd.DataFrame):
        return str(y.columns[0])
    return str(y.name) if y.name is not None else "prediction"


def cv_splitter(y: np.ndarray, cv: int, seed: int, classification: bool) -> KFold | StratifiedKFold:
    n_rows = len(y)
    if cv < 2 or cv > n_rows:
        raise CvTooLarge(cv, n_rows)
    if classification:
        _, counts = np.unique(y, return_counts=True)
        if counts.min() >= cv:
            return StratifiedKFold(n_splits=cv, shuffle=True, random_state=seed)
    return KFold(n_splits=cv, shuffle=True, random_state=seed)


def _scoring(classification: bool) -> str:
    return "accuracy" if classification else "neg_root_mean_squared_error"


def _prepare(X: pd.DataFrame, y: pd.Series | pd.DataFrame, classification: bool) -> tuple[np.ndarray, np.ndarray]:
    matrix = feature_matrix(X)
    vector = target_vector(y, classification)
    if len(vector) != matrix.shape[0]:
        raise ValueError(f"X has {matrix.shape[0]} rows but y has {len(vector)}")
    return matrix, vector


def fit_family(
    family: str, X: pd.DataFrame, y: pd.Series | pd.DataFrame, cv: int, env: ToolEnvironment, params: dict[str, Any]
) -> ModelArtifact:
    kind = FAMILIES[family]
    matrix, vector = _prepare(X, y, kind.is_classifier)
    splitter = cv_splitter(vector, cv, env.seed, kind.is_classifier)
    estimator: BaseEstimator = build_estimator(kind, params, env.seed)
    scores = cross_val_score(estimator, matrix, vector, cv=splitter, scoring=_scoring(kind.is_classifier))
    estimator.fit(matrix, vector)
    cv_score = float(np.mean(scores))
    logger.debug("fit_%s on %s rows: cv score %.6f", family, matrix.shape[0], cv_score)
    return ModelArtifact(
        tool=f"fit_{family}",
        kind=kind,
        estimator=estimator,
        feature_names=[str(c) for c in X.columns],
        cv_score=cv_score,
        best_params=dict(params),
        target_name=_target_name(y),
    )


def tune_family(
    family: str, X: pd.DataFrame, y: pd.Series | pd.DataFrame, cv: int, env: ToolEnvironment
) -> ModelArtifact:
    settings = settings_for(env, family)
    if not settings.grid or any(len(values) == 0 for values in settings.grid.values()):
        raise EmptyGrid(f"tune_{family}")
    kind = FAMILIES[family]
    matrix, vector = _prepare(X, y, kind.is_classifier)
    splitter = cv_splitter(vector, cv, env.seed, kind.is_classifier)
    search = GridSearchCV(
        build_estimator(kind, dict(settings.defaults), env.seed),
        param_grid={name: list(values) for name, values in settings.grid.items()},
        cv=splitter,
        scoring=_scoring(kind.is_classifier),
        refit=True,
    )
    search.fit(matrix, vector)
    best_params = {**settings.defaults, **search.best_params_}
    return ModelArtifact(
        tool=f"tune_{family}",
        kind=kind,
        estimator=search.best_estimator_,
        feature_names=[str(c) for c in X.columns],
        cv_score=float(search.best_score_),
        best_params=best_params,
        target_name=_target_name(y),
    )


_FIT_DOC = """
    Fit {title} model.

    Parameters
    ----------
    X_train : pd.DataFrame
        Training features (numeric or bool columns only, no missing values)
    y_train : pd.Series
        Training target
    cv : int, default=5
        Number of cross-validation folds

    Returns
    -------
    model
        Fitted {title} model, with its mean cross-validation score ({metric})
    """

_TUNE_DOC = """
    Perform hyperparameter tuning for {title} using GridSearchCV.

    Parameters
    ----------
    X_train : pd.DataFrame
        Training features (numeric or bool columns only, no missing values)
    y_train : pd.Series
        Training target
    cv : int, default=5
        Number of cross-validation folds

    Returns
    -------
    model
        Best {title} model found, also saved as 'best_estimator'
    """


def _register_family(family: str) -> None:
    title = _TITLES[family]
    metric = "accuracy" if FAMILIES[family].is_classifier else "negated RMSE"

    def fit(
        X_train: Annotated[pd.DataFrame, TABLE],
        y_train: Annotated[pd.Series, TARGET],
        cv: int = 5,
        *,
        env: ToolEnvironment = DEFAULT_ENV,
    ) -> ToolOutput:
        model = fit_family(family, X_train, y_train, cv, env, dict(settings_for(env, family).defaults))
        return ToolOutput(value=model, note=f"The CV score for this method is {model.cv_score}.")

    def tune(
        X_train: Annotated[pd.DataFrame, TABLE],
        y_train: Annotated[pd.Series, TARGET],
        cv: int = 5,
        *,
        env: ToolEnvironment = DEFAULT_ENV,
    ) -> ToolOutput:
        model = tune_family(family, X_train, y_train, cv, env)
        return ToolOutput(
            value=model,
            note=(
                f"The Best params and CV score for this method are {model.best_params} and {model.cv_score} "
                "respectively."
            ),
            named=(NamedOutput("best_estimator", ObjectKind.MODEL, model),),
        )

    for prefix, fn, doc in (("fit", fit, _FIT_DOC), ("tune", tune, _TUNE_DOC)):
        fn.__name__ = fn.__qualname__ = f"{prefix}_{family}"
        fn.__doc__ = doc.format(title=title, metric=metric)
        tool(output=ObjectKind.MODEL)(fn)


for _family in FAMILIES:
    _register_family(_family)


def _labels(values: Any) -> np.ndarray:
    return np.array([str(v) for v in np.asarray(values).tolist()], dtype=object)


def regression_metrics(y_true: np.ndarray, y_pred: np.ndarray) -> dict[str, float]:
    report = {
        "rmse": math.sqrt(mean_squared_error(y_true, y_pred)),
        "mae": float(mean_absolute_error(y_true, y_pred)),
    }
    if len(y_true) >= 2:
        report["r2"] = float(r2_score(y_true, y_pred))
    return {name: value for name, value in report.items() if math.isfinite(value)}


def classification_metrics(
    y_true: Any, y_pred: Any, proba: np.ndarray | None = None, classes: Any = None
) -> dict[str, float]:
    """Accuracy, F1 and (with probabilities) ROC AUC; labels compare by their string form."""
    truth, predicted = _labels(y_true), _labels(y_pred)
    observed = sorted(set(truth.tolist()) | set(predicted.tolist()))
    report = {"accuracy": float(accuracy_score(truth, predicted))}
    if len(observed) == 2:
        report["f1"] = float(f1_score(truth, predicted, pos_label=observed[1], average="binary"))
    elif len(observed) > 2:
        report["f1"] = float(f1_score(truth, predicted, average="macro"))
    if proba is not None and classes is not None:
        class_labels = _labels(classes).tolist()
        present = set(truth.tolist())
        if len(present) >= 2 and present <= set(class_labels):
            if len(class_labels) == 2:
                report["auc"] = float(roc_auc_score(truth == class_labels[1], proba[:, 1]))
            else:
                report["auc"] = float(roc_auc_score(truth, proba, multi_class="ovr", labels=class_labels))
    return {name: value for name, value in report.items() if math.isfinite(value)}


@tool()
def evaluate_regression_model(
    model: Annotated[ModelArtifact, MODEL],
    X_test: Annotated[pd.DataFrame, TABLE],
    y_test: Annotated[pd.Series, TARGET],
    model_name: str = "model",
    eval_data_label: str = "test",
) -> dict[str, float]:
    """
    Evaluate a trained regression model on data.

    This function is used to evaluate the performance of a trained regression model on a given dataset.
    The dataset can be anything, such as the test set or the train set.

    Parameters
    ----------
    model : Any
        Trained regression model
    X_test : pd.DataFrame
        Features, with exactly the columns the model was trained on
    y_test : pd.Series
        True target values
    model_name : str, default="model"
        Name used in the report
    eval_data_label : str, default='test'
        Label of the evaluated data used in the report

    Returns
    -------
    dict
        rmse, mae and r2
    """
    predictions = model.predict(X_test).astype("float64")
    truth = target_vector(y_test, classification=False)
    report = regression_metrics(truth, predictions)
    logger.info("%s on %s data: %s", model_name, eval_data_label, report)
    return report


@tool()
def evaluate_classification_model(
    model: Annotated[ModelArtifact, MODEL],
    X_test: Annotated[pd.DataFrame, TABLE],
    y_test: Annotated[pd.Series, TARGET],
    model_name: str = "model",
    eval_data_label: str = "test",
) -> dict[str, float]:
    """
    Evaluate a trained classification model on data.

    This function is used to evaluate the performance of a trained classification model on a given dataset.
    The dataset can be anything, such as the test set or the train set.

    Parameters
    ----------
    model : Any
        Trained classification model
    X_test : pd.DataFrame
        Features, with exactly the columns the model was trained on
    y_test : pd.Series
        True labels
    model_name : str, default="model"
        Name used in the report
    eval_data_label : str, default='test'
        Label of the evaluated data used in the report

    Returns
    -------
    dict
        accuracy, f1 and, when the model gives probabilities, auc
    """
    predictions = model.predict(X_test)
    proba = model.predict_proba(X_test)
    classes = getattr(model.estimator, "classes_", None)
    report = classification_metrics(target_vector(y_test, classification=True), predictions, proba, classes)
    logger.info("%s on %s data: %s", model_name, eval_data_label, report)
    return report


@tool(output=ObjectKind.PREDICTION_TABLE)
def predict_target(
    model: Annotated[ModelArtifact, MODEL],
    X_data: Annotated[pd.DataFrame, TABLE],
    model_name: str = "model",
    return_probabilities: bool = False,
    *,
    env: ToolEnvironment = DEFAULT_ENV,
) -> pd.DataFrame:
    """
    Make predictions using a trained model.

    Parameters
    ----------
    model : Any
        Trained model (regression or classification)
    X_data : pd.DataFrame
        Features to make predictions on
    model_name : str, default="model"
        Name of the model, used for logging
    return_probabilities : bool, default=False
        For classifiers, add one probability column per class

    Returns
    -------
    pd.DataFrame
        One prediction column named after the target, preceded by the competition's id column when the
        rows line up with the test data
    """
    predictions = model.predict(X_data)
    frame = pd.DataFrame(index=pd.RangeIndex(len(X_data)))
    if env.id_column is not None and env.test_ids is not None and len(env.test_ids) == len(X_data):
        frame[env.id_column] = env.test_ids.reset_index(drop=True)
    column = pd.Series(predictions)
    frame[model.target_name] = column.astype("string") if column.dtype == object else column
    if return_probabilities:
        proba = model.predict_proba(X_data)
        classes = getattr(model.estimator, "classes_", None)
        if proba is None or classes is None:
            raise ValueError(f"{model_name} does not provide class probabilities")
        for index, label in enumerate(classes):
            frame[f"proba_{label}"] = proba[:, index]
    logger.debug("%s predicted %d rows", model_name, len(frame))
    return frame

