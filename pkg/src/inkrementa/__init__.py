"""Class-incremental learning with exemplars, distillation, and weight aligning."""

__version__ = "0.1.0"

from .continual import (
    ExemplarStore,
    StageContext,
    build_exemplar_store,
    ccs_stage_update,
    class_feature_center,
    herding_select,
    weight_align,
)
from .data import (
    LabeledDataset,
    StagePlan,
    SyntheticSpec,
    generate_synthetic,
    load_csv,
    save_csv,
    split_stages,
)
from .errors import (
    ConfigError,
    ConflictError,
    DegenerateHeadError,
    EmptyInputError,
    InkrementaError,
    MappingError,
    ParseError,
    PlanError,
    ShapeError,
    VersionError,
)
from .harness import (
    CcsSettings,
    RunReport,
    ScenarioConfig,
    StageReport,
    accn,
    evaluate,
    load_config,
    parse_config,
    run_ablation,
    run_scenario,
)
from .model import IncModel, ModelConfig, TeacherSnapshot, train_epochs

__all__ = [
    "__version__",
    "CcsSettings",
    "ConfigError",
    "ConflictError",
    "DegenerateHeadError",
    "EmptyInputError",
    "ExemplarStore",
    "IncModel",
    "InkrementaError",
    "LabeledDataset",
    "MappingError",
    "ModelConfig",
    "ParseError",
    "PlanError",
    "RunReport",
    "ScenarioConfig",
    "ShapeError",
    "StageContext",
    "StagePlan",
    "StageReport",
    "SyntheticSpec",
    "TeacherSnapshot",
    "VersionError",
    "accn",
    "build_exemplar_store",
    "ccs_stage_update",
    "class_feature_center",
    "evaluate",
    "generate_synthetic",
    "herding_select",
    "load_config",
    "load_csv",
    "parse_config",
    "run_ablation",
    "run_scenario",
    "save_csv",
    "split_stages",
    "train_epochs",
    "weight_align",
]
