"""Native implementations behind the catalog's tool names.

Importing this package registers every implementation in `IMPLEMENTATIONS`.
"""

from toolplan.toolkit import cleaning as cleaning
from toolplan.toolkit import combine as combine
from toolplan.toolkit import features as features
from toolplan.toolkit import loading as loading
from toolplan.toolkit import modeling as modeling
from toolplan.toolkit.base import IMPLEMENTATIONS as IMPLEMENTATIONS
from toolplan.toolkit.base import FeatureTargetSplit as FeatureTargetSplit
from toolplan.toolkit.base import ModelSettings as ModelSettings
from toolplan.toolkit.base import NamedOutput as NamedOutput
from toolplan.toolkit.base import Ref as Ref
from toolplan.toolkit.base import ToolEnvironment as ToolEnvironment
from toolplan.toolkit.base import ToolFunction as ToolFunction
from toolplan.toolkit.base import ToolOutput as ToolOutput

__all__ = [
    "IMPLEMENTATIONS",
    "FeatureTargetSplit",
    "ModelSettings",
    "NamedOutput",
    "Ref",
    "ToolEnvironment",
    "ToolFunction",
    "ToolOutput",
    "cleaning",
    "combine",
    "features",
    "loading",
    "modeling",
]
