"""Deterministic stage checkers, shaped and outcome rewards, the depth penalty and feedback texts."""

from __future__ import annotations

import enum
import logging
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any

import pandas as pd

from toolplan import table
from toolplan.models import ModelArtifact
from toolplan.scratchpad import ObjectKind, PathView, ScratchpadEntry
from toolplan.table import TRACKING_COLUMN, ColumnKind
from toolplan.toolkit.base import FeatureTargetSplit

if TYPE_CHECKING:
    from toolplan.policy import Message

logger = logging.getLogger(__name__)

DEPTH_PENALTY = 0.1
STAGE_REWARD = 1.0
ERROR_SUFFIX = " Please fix your mistakes."


class StageId(enum.Enum):
    """The ten workflow stages, in prerequisite order."""

    TRAIN_DATA_LOADING = "train_data_loading"
    TEST_DATA_LOADING = "test_data_loading"
    COMBINE_TRAIN_TEST = "combine_train_test"
    DATA_CLEANING = "data_cleaning"
    FEATURE_ENGINEERING = "feature_engineering"
    SPLIT_TRAIN_TEST = "split_train_test"
    TRAIN_FEATURES_TARGET = "train_data_to_features_target"
    TEST_FEATURES = "test_data_to_features"
    MODELING = "modeling"
    CREATE_SUBMISSION = "create_submission_dataframe"

    @property
    def index(self) -> int:
        return list(StageId).index(self)

    @property
    def label(self) -> str:
        return _LABELS[self]

    @classmethod
    def parse(cls, text: str) -> StageId:
        for stage in cls:
            if text in {stage.value, stage.label, stage.name.lower()}:
                return stage
        raise ValueError(f"Unknown stage {text!r}; expected one of {[stage.value for stage in cls]}")


_LABELS = {
    StageId.TRAIN_DATA_LOADING: "TrainDataLoading",
    StageId.TEST_DATA_LOADING: "TestDataLoading",
    StageId.COMBINE_TRAIN_TEST: "CombineTrainTest",
    StageId.DATA_CLEANING: "DataCleaning",
    StageId.FEATURE_ENGINEERING: "FeatureEngineering",
    StageId.SPLIT_TRAIN_TEST: "SplitTrainTest",
    StageId.TRAIN_FEATURES_TARGET: "TrainFeaturesTarget",
    StageId.TEST_FEATURES: "TestFeatures",
    StageId.MODELING: "Modeling",
    StageId.CREATE_SUBMISSION: "CreateSubmission",
}


class FeedbackKind(enum.Enum):
    STAGE = "stage"
    TOOL = "tool"


@dataclass(frozen=True)
class StageTargets:
    """What the checkers compare against: the competition's files, target and row counts."""

    train_path: Path
    test_path: Path
    target: str
    n_train: int
    n_test: int
    n_source_columns: int
    submission_path: Path
    submission_columns: tuple[str, ...]
    classification: bool
    id_column: str | None = None
    save_tool_description: str = ""

    @property
    def feature_bound(self) -> int:
        return max(200, 20 * self.n_source_columns)


@dataclass(frozen=True)
class StageCheck:
    passed: bool
    feedback: str


@dataclass(frozen=True)
class StageStatus:
    """Stages met on one root→node path, each with the node it was met at."""

    met_at: Mapping[StageId, str] = field(default_factory=dict)

    def met(self, stage: StageId) -> bool:
        return stage in self.met_at

    def next_unmet(self) -> StageId | None:
        for stage in StageId:
            if stage not in self.met_at:
                return stage
        return None

    def mark(self, stage: StageId, node: str) -> StageStatus:
        return StageStatus({**self.met_at, stage: node})

    def fired(self) -> list[StageId]:
        return [stage for stage in StageId if stage in self.met_at]


@dataclass(frozen=True)
class RewardSignal:
    value: float
    stage: StageId | None
    feedback: str

    def __post_init__(self) -> None:
        if not math.isfinite(self.value):
            raise ValueError(f"Reward must be finite, got {self.value}")


def _same_path(left: str | Path, right: str | Path) -> bool:
    return Path(left).expanduser().resolve() == Path(right).expanduser().resolve()


def _calls(messages: Sequence[Message]) -> list[tuple[int, Any]]:
    """Every tool call on the path with the index of the AI message that issued it."""
    return [(index, call) for index, message in enumerate(messages) for call in message.tool_calls]


def _failed_call_ids(messages: Sequence[Message]) -> set[str]:
    return {
        message.tool_call_id
        for message in messages
        if message.tool_call_id is not None and message.content.startswith("Error:")
    }


def _succeeded(messages: Sequence[Message], tool: str) -> list[tuple[int, Any]]:
    failed = _failed_call_ids(messages)
    answered = {message.tool_call_id for message in messages if message.tool_call_id is not None}
    return [
        (index, call)
        for index, call in _calls(messages)
        if call.tool == tool and call.call_id in answered and call.call_id not in failed
    ]


def _created_by(view: PathView, call_ids: Iterable[str]) -> list[ScratchpadEntry]:
    ids = set(call_ids)
    return [entry for pad in view.pads() for entry in pad if entry.created_by in ids]


def _kind_label(kind: ColumnKind) -> str:
    return {
        ColumnKind.BOOL: "boolean",
        ColumnKind.INT: "integer",
        ColumnKind.FLOAT: "float",
        ColumnKind.TEXT: "string",
        ColumnKind.CATEGORY: "category",
        ColumnKind.DATETIME: "datetime",
    }[kind]


def _check_loading(view: PathView, messages: Sequence[Message], path: Path, which: str) -> StageCheck:
    call_ids = [
        call.call_id
        for _, call in _succeeded(messages, "read_data")
        if _same_path(str(call.func_kwargs.get("filepath", "")), path)
    ]
    if any(entry.kind is ObjectKind.TABLE for entry in _created_by(view, call_ids)):
        return StageCheck(True, f"Human Feedback: Verified that the {which} data was loaded successfully")
    return StageCheck(
        False, f"Human Feedback: The {which} data has not been loaded yet. Load it from {path} using read_data."
    )


def _latest_combined(view: PathView) -> pd.DataFrame | None:
    entry = view.latest(ObjectKind.TRAIN_TEST_PAIR)
    return entry.value if entry is not None else None


def _check_combined(view: PathView, targets: StageTargets) -> StageCheck:
    expected = targets.n_train + targets.n_test
    for entry in view.entries_of(ObjectKind.TRAIN_TEST_PAIR):
        if len(entry.value) == expected:
            return StageCheck(True, "Human Feedback: Verified that the train and test data were combined successfully")
    return StageCheck(
        False,
        "Human Feedback: The train and test data have not been combined yet. Use concatenate_train_test to combine "
        f"them into a single dataframe of {expected} rows.",
    )


def _check_cleaning(view: PathView) -> StageCheck:
    combined = _latest_combined(view)
    if combined is None:
        return StageCheck(False, "Human Feedback: No combined train and test data found to clean.")
    with_missing = [str(c) for c in combined.columns if combined[c].isna().any()]
    if not with_missing:
        return StageCheck(
            True, "Human Feedback: Verified that the data cleaning was successful and no missing values (NaNs) remain"
        )
    return StageCheck(
        False,
        f"Human Feedback: Missing values (NaNs) remain in columns: {with_missing}. Please fill or drop them, "
        "including the target column in the test partition.",
    )


def _check_features(view: PathView, targets: StageTargets) -> StageCheck:
    combined = _latest_combined(view)
    if combined is None:
        return StageCheck(False, "Human Feedback: No combined train and test data found for feature engineering.")
    kinds = {
        name: kind for name, kind in table.kinds(combined).items() if name not in {TRACKING_COLUMN, targets.target}
    }
    categorical = [name for name, kind in kinds.items() if kind in {ColumnKind.CATEGORY, ColumnKind.TEXT}]
    other = [name for name, kind in kinds.items() if kind is ColumnKind.DATETIME]
    if categorical or other:
        return StageCheck(
            False,
            f"Categorical columns found: {categorical}. Columns with dtypes that are not numeric/categorical found: "
            f"{other}. Please convert them to numeric columns before modeling.",
        )
    if len(kinds) > targets.feature_bound:
        return StageCheck(
            False,
            f"Human Feedback: The data has {len(kinds)} feature columns, above the bound of {targets.feature_bound}. "
            "Please drop or aggregate features before modeling.",
        )
    return StageCheck(
        True,
        "Human Feedback: Verified that the feature engineering is complete and all columns are numeric (int/float)",
    )


def _check_split(view: PathView, messages: Sequence[Message], targets: StageTargets) -> StageCheck:
    for _, call in _succeeded(messages, "split_combined_into_train_test"):
        lengths = sorted(
            len(entry.value) for entry in _created_by(view, [call.call_id]) if entry.kind is ObjectKind.TABLE
        )
        if lengths == sorted([targets.n_train, targets.n_test]):
            return StageCheck(True, "Human Feedback: Verified that the train and test data were split successfully")
    return StageCheck(
        False,
        f"Human Feedback: The combined data has not been split back into train ({targets.n_train} rows) and test "
        f"({targets.n_test} rows) yet. Use split_combined_into_train_test.",
    )


def _splits(view: PathView, is_train: bool) -> list[FeatureTargetSplit]:
    return [
        entry.value
        for entry in view.entries_of(ObjectKind.FEATURE_TARGET_SPLIT)
        if isinstance(entry.value, FeatureTargetSplit) and entry.value.is_train is is_train
    ]


def _check_train_features(view: PathView, targets: StageTargets) -> StageCheck:
    for split in _splits(view, True):
        if split.target_column == targets.target and len(split.X) == targets.n_train:
            return StageCheck(
                True,
                "Human Feedback: Verified that the train data was converted to features and target using the correct "
                "target column",
            )
    return StageCheck(
        False,
        "Human Feedback: The train data has not been converted to features and target yet. Use "
        f"convert_dataframe_to_features_target with target_column='{targets.target}' and is_train=True.",
    )


def _check_test_features(view: PathView, targets: StageTargets) -> StageCheck:
    for split in _splits(view, False):
        if len(split.X) == targets.n_test and targets.target not in split.X.columns:
            return StageCheck(
                True, "Human Feedback: Verified that the test data was converted to features with correct arguments"
            )
    return StageCheck(
        False,
        "Human Feedback: The test data has not been converted to features yet. Use "
        f"convert_dataframe_to_features_target with target_column='{targets.target}' and is_train=False.",
    )


def _models(view: PathView) -> list[ModelArtifact]:
    return [
        entry.value
        for entry in view.entries_of(ObjectKind.MODEL)
        if isinstance(entry.value, ModelArtifact) and math.isfinite(entry.value.cv_score)
    ]


def _check_modeling(view: PathView) -> StageCheck:
    if _models(view):
        return StageCheck(True, "Human Feedback: Verified that the modeling was successful")
    return StageCheck(False, "Modeling is still in progress")


def submission_frame(view: PathView, messages: Sequence[Message], targets: StageTargets) -> pd.DataFrame | None:
    """The frame most recently saved to the submission path on this path, as it was when saved."""
    creators = {call.call_id: index for index, call in _calls(messages)}
    for save_index, call in reversed(_succeeded(messages, "save_dataframe_to_csv")):
        if not _same_path(str(call.func_kwargs.get("filepath", "")), targets.submission_path):
            continue
        name = call.bindings.get("df")
        candidates = [
            entry
            for pad in view.pads()
            for entry in pad
            if entry.name == name and creators.get(entry.created_by, len(messages)) < save_index
        ]
        if candidates and isinstance(candidates[-1].value, pd.DataFrame):
            return candidates[-1].value
    return None


def _submission_problems(frame: pd.DataFrame, targets: StageTargets) -> list[str]:
    problems = []
    if len(frame) != targets.n_test:
        problems.append(f"it has {len(frame)} rows instead of {targets.n_test}")
    missing = [c for c in targets.submission_columns if c not in frame.columns]
    if missing:
        problems.append(f"columns {missing} are missing")
    if frame.isna().any().any():
        problems.append("it contains missing values")
    return problems


def _check_submission(view: PathView, messages: Sequence[Message], targets: StageTargets) -> StageCheck:
    frame = submission_frame(view, messages, targets)
    if frame is not None and not _submission_problems(frame, targets):
        kinds = [
            _kind_label(kind)
            for name, kind in table.kinds(frame).items()
            if name in targets.submission_columns and name != targets.id_column
        ]
        return StageCheck(
            True,
            "Human Feedback: Verified that the submission DataFrame was created successfully with "
            f"{len(kinds)} columns ({', '.join(kinds)}) and no missing values.",
        )
    return StageCheck(False, submission_failure(targets))


def submission_failure(targets: StageTargets) -> str:
    return (
        "Human Feedback: submission DataFrame was NOT created successfully. Please check the signature of the "
        "wrapped function if any, and call it with the correct arguments. The tool signature is "
        f"{targets.save_tool_description}"
    )


def check_stage(stage: StageId, view: PathView, messages: Sequence[Message], targets: StageTargets) -> StageCheck:
    """Whether `stage` is satisfied on the path ending at `view`, with the feedback explaining why."""
    match stage:
        case StageId.TRAIN_DATA_LOADING:
            return _check_loading(view, messages, targets.train_path, "train")
        case StageId.TEST_DATA_LOADING:
            return _check_loading(view, messages, targets.test_path, "test")
        case StageId.COMBINE_TRAIN_TEST:
            return _check_combined(view, targets)
        case StageId.DATA_CLEANING:
            return _check_cleaning(view)
        case StageId.FEATURE_ENGINEERING:
            return _check_features(view, targets)
        case StageId.SPLIT_TRAIN_TEST:
            return _check_split(view, messages, targets)
        case StageId.TRAIN_FEATURES_TARGET:
            return _check_train_features(view, targets)
        case StageId.TEST_FEATURES:
            return _check_test_features(view, targets)
        case StageId.MODELING:
            return _check_modeling(view)
        case StageId.CREATE_SUBMISSION:
            return _check_submission(view, messages, targets)


def stages_met(view: PathView, messages: Sequence[Message], targets: StageTargets) -> list[StageId]:
    """The longest prefix of the stage order whose checkers all pass on this path."""
    met = []
    for stage in StageId:
        if not check_stage(stage, view, messages, targets).passed:
            break
        met.append(stage)
    return met


def modeling_value(view: PathView) -> float:
    """Best normalized cross-validation performance among the models on the path."""
    values = []
    for model in _models(view):
        if model.is_classifier:
            values.append(model.cv_score)
        else:
            values.append(1.0 / (1.0 - model.cv_score))
    return max(values, default=0.0)


def shaped_reward(
    status: StageStatus, view: PathView, messages: Sequence[Message], targets: StageTargets
) -> tuple[RewardSignal, StageStatus]:
    """Reward the lowest unmet stage once, if its checker passes at this node."""
    stage = status.next_unmet()
    if stage is None:
        return RewardSignal(0.0, None, "Human Feedback: All stages are complete."), status
    check = check_stage(stage, view, messages, targets)
    if not check.passed:
        return RewardSignal(0.0, None, check.feedback), status
    value = STAGE_REWARD * modeling_value(view) if stage is StageId.MODELING else STAGE_REWARD
    logger.debug("Stage %s met at %s (reward %.4f)", stage.label, view.leaf, value)
    return RewardSignal(value, stage, check.feedback), status.mark(stage, view.leaf)


def outcome_reward(
    status: StageStatus, view: PathView, messages: Sequence[Message], targets: StageTargets
) -> tuple[RewardSignal, StageStatus]:
    """1.0 for the first trained model and 1.0 for the first valid submission on the path."""
    value = 0.0
    fired: StageId | None = None
    feedback: list[str] = []
    for stage in (StageId.MODELING, StageId.CREATE_SUBMISSION):
        if status.met(stage):
            continue
        check = check_stage(stage, view, messages, targets)
        if check.passed:
            value += STAGE_REWARD
            fired = stage
            status = status.mark(stage, view.leaf)
            feedback.append(check.feedback)
    return RewardSignal(value, fired, "\n".join(feedback)), status


def depth_adjust(r: float, depth: int) -> float:
    return r - DEPTH_PENALTY * depth


def failure_feedback(kind: FeedbackKind, detail: str, *, description: str = "") -> str:
    """Human feedback for an unmet stage or a failed tool call."""
    if kind is FeedbackKind.STAGE:
        return detail
    error = detail.removesuffix(ERROR_SUFFIX).rstrip()
    return (
        f"Human Feedback: The tool call failed with {error}. Please check the signature of the wrapped function "
        f"and call it with the correct arguments. The tool signature is {description}\n{ERROR_SUFFIX}"
    )
