"""
Hyperparameter definitions, validation and experiment configuration files.

A configuration file is a JSON object:

    {
      "experiment": "exp2",
      "seed": 42,
      "output_dir": "runs/exp2",
      "data": {"countries": "data/countries.json"},
      "train": {"learning_rate": 0.005, "epochs": 500},
      "run": {"seeds": [42, 43, 44]}
    }

Every section is optional. Unknown keys are rejected, omitted values take the
defaults below and every path that is given must exist.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

from .closure import DEFAULT_MAX_ITERS, ENGINES
from .embed import TrainConfig
from .exceptions import ConfigError, ParameterConversionError, ParameterValidationError
from .superposition import SuperTrainConfig

EXPERIMENTS = ("exp1", "exp2", "exp3a", "exp3b")
SECTIONS = ("data", "train", "run")
TOP_LEVEL = ("experiment", "seed", "output_dir") + SECTIONS


@dataclass
class Hyperparameter:
    """Definition of one configurable value"""
    name: str
    param_type: str  # 'decimal', 'integer', 'boolean', 'text', 'path', 'list'
    min_value: Optional[Union[int, float]] = None
    max_value: Optional[Union[int, float]] = None
    default_value: Any = None
    description: str = ""
    exclusive_min: bool = False
    choices: Optional[Sequence[str]] = None


class ParameterValidator:
    """Converts raw values (JSON or command-line strings) to checked Python values"""

    @staticmethod
    def validate_parameter(param_def: Hyperparameter, value: Any) -> Any:
        if value is None:
            return param_def.default_value

        if param_def.param_type == "decimal":
            return ParameterValidator._validate_decimal(param_def, value)
        elif param_def.param_type == "integer":
            return ParameterValidator._validate_integer(param_def, value)
        elif param_def.param_type == "boolean":
            return ParameterValidator._validate_boolean(param_def, value)
        elif param_def.param_type == "text":
            return ParameterValidator._validate_text(param_def, value)
        elif param_def.param_type == "path":
            return ParameterValidator._validate_path(param_def, value)
        elif param_def.param_type == "list":
            return ParameterValidator._validate_list(param_def, value)
        else:
            raise ParameterValidationError(f"Unknown parameter type: {param_def.param_type}")

    @staticmethod
    def _check_range(param_def: Hyperparameter, value: Union[int, float]) -> None:
        if param_def.min_value is not None:
            if param_def.exclusive_min and value <= param_def.min_value:
                raise ParameterValidationError(f"Parameter '{param_def.name}' value {value} must be greater than {param_def.min_value}")
            if value < param_def.min_value:
                raise ParameterValidationError(f"Parameter '{param_def.name}' value {value} is below minimum {param_def.min_value}")

        if param_def.max_value is not None and value > param_def.max_value:
            raise ParameterValidationError(f"Parameter '{param_def.name}' value {value} is above maximum {param_def.max_value}")

    @staticmethod
    def _validate_decimal(param_def: Hyperparameter, value: Any) -> float:
        if isinstance(value, bool):
            raise ParameterConversionError(f"Cannot convert '{value}' to decimal for parameter '{param_def.name}'")
        try:
            float_value = float(value)
        except (ValueError, TypeError):
            raise ParameterConversionError(f"Cannot convert '{value}' to decimal for parameter '{param_def.name}'")
        ParameterValidator._check_range(param_def, float_value)
        return float_value

    @staticmethod
    def _validate_integer(param_def: Hyperparameter, value: Any) -> int:
        if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
            raise ParameterConversionError(f"Cannot convert '{value}' to integer for parameter '{param_def.name}'")
        try:
            int_value = int(value)
        except (ValueError, TypeError):
            raise ParameterConversionError(f"Cannot convert '{value}' to integer for parameter '{param_def.name}'")
        ParameterValidator._check_range(param_def, int_value)
        return int_value

    @staticmethod
    def _validate_boolean(param_def: Hyperparameter, value: Any) -> bool:
        if isinstance(value, bool):
            return value

        if isinstance(value, str):
            if value.lower() in ('true', '1', 'yes', 'on'):
                return True
            elif value.lower() in ('false', '0', 'no', 'off'):
                return False
            else:
                raise ParameterConversionError(f"Cannot convert '{value}' to boolean for parameter '{param_def.name}'")

        if isinstance(value, int):
            return bool(value)

        raise ParameterConversionError(f"Cannot convert '{value}' to boolean for parameter '{param_def.name}'")

    @staticmethod
    def _validate_text(param_def: Hyperparameter, value: Any) -> str:
        if not isinstance(value, str):
            raise ParameterConversionError(f"Parameter '{param_def.name}' expects text, got {value!r}")
        if param_def.choices is not None and value not in param_def.choices:
            raise ParameterValidationError(
                f"Parameter '{param_def.name}' value '{value}' is not one of {', '.join(param_def.choices)}")
        return value

    @staticmethod
    def _validate_path(param_def: Hyperparameter, value: Any) -> Path:
        if not isinstance(value, (str, Path)) or str(value) == "":
            raise ParameterConversionError(f"Parameter '{param_def.name}' expects a path, got {value!r}")
        path = Path(value)
        if not path.exists():
            raise ParameterValidationError(f"Parameter '{param_def.name}': path '{path}' does not exist")
        return path

    @staticmethod
    def _validate_list(param_def: Hyperparameter, value: Any) -> List[Any]:
        if isinstance(value, str):
            value = [item.strip() for item in value.split(",") if item.strip()]
        if not isinstance(value, list):
            raise ParameterConversionError(f"Parameter '{param_def.name}' expects a list, got {value!r}")
        return list(value)


def _params(*definitions: Hyperparameter) -> Dict[str, Hyperparameter]:
    return {definition.name: definition for definition in definitions}


def _path(name: str, description: str) -> Hyperparameter:
    return Hyperparameter(name, "path", description=description)


SEED = Hyperparameter("seed", "integer", 0, 2 ** 63 - 1, 42, "Base seed for every random stream")

EMBED_TRAIN = _params(
    Hyperparameter("learning_rate", "decimal", 0.0, None, 0.005, "Adam learning rate", exclusive_min=True),
    Hyperparameter("epochs", "integer", 1, None, 500, "Full-batch epochs"),
    Hyperparameter("dim", "integer", 1, None, 64, "Embedding dimension"),
    Hyperparameter("normalize_embeddings", "boolean", default_value=True,
                   description="Project entity embeddings to unit length after every step"),
)

SUPERPOSITION_TRAIN = _params(
    Hyperparameter("learning_rate", "decimal", 0.0, None, 5e-4, "AdamW learning rate", exclusive_min=True),
    Hyperparameter("weight_decay", "decimal", 0.0, None, 1e-5, "Decoupled weight decay"),
    Hyperparameter("batch_size", "integer", 1, None, 1024, "Triples per mini-batch"),
    Hyperparameter("temperature", "decimal", 0.0, None, 0.1, "Softmax temperature", exclusive_min=True),
    Hyperparameter("clip_norm", "decimal", 0.0, None, 1.0, "Global gradient-norm clip", exclusive_min=True),
    Hyperparameter("epochs", "integer", 1, None, 50, "Training epochs"),
    Hyperparameter("validate_every", "integer", 1, None, 10, "Epochs between validations"),
    Hyperparameter("dim", "integer", 1, None, 256, "Embedding dimension"),
    Hyperparameter("valid_sample", "integer", 1, None, None, "Validate on a seeded subsample of this size"),
)

SCHEMAS: Dict[str, Dict[str, Dict[str, Hyperparameter]]] = {
    "exp1": {
        "data": _params(_path("person_csv", "Person table"), _path("relationship_csv", "Relationship table")),
        "train": {},
        "run": _params(
            Hyperparameter("engine", "text", default_value="seminaive", choices=tuple(ENGINES)),
            Hyperparameter("max_iters", "integer", 1, None, DEFAULT_MAX_ITERS, "Fixpoint iteration cap"),
            Hyperparameter("program", "text", description="Closure program (defaults to the ancestor program)"),
            Hyperparameter("lineage", "list", default_value=["Adam", "Abram"], description="People to report"),
        ),
    },
    "exp2": {
        "data": _params(_path("countries", "Countries JSON file")),
        "train": EMBED_TRAIN,
        "run": _params(
            Hyperparameter("seeds", "list", description="Train once per seed (defaults to the top-level seed)"),
            Hyperparameter("topk", "integer", 1, None, 5, "Entities listed per zero-shot query"),
        ),
    },
    "exp3a": {
        "data": _params(_path("train", "Training triples"), _path("valid", "Validation triples"),
                        _path("test", "Test triples")),
        "train": SUPERPOSITION_TRAIN,
        "run": _params(Hyperparameter("save_model", "boolean", default_value=True)),
    },
    "exp3b": {
        "data": _params(_path("train", "Training triples"), _path("valid", "Validation triples"),
                        _path("test", "Test triples"), _path("bench", "Reuse a saved composition benchmark")),
        "train": SUPERPOSITION_TRAIN,
        "run": _params(
            Hyperparameter("n_valid", "integer", 1, None, 1000, "Validation paths"),
            Hyperparameter("n_test", "integer", 1, None, 1000, "Test paths"),
            Hyperparameter("save_model", "boolean", default_value=True),
        ),
    },
}

REQUIRED_DATA = {
    "exp1": ("person_csv", "relationship_csv"),
    "exp2": ("countries",),
    "exp3a": ("train", "valid", "test"),
    "exp3b": ("train", "valid", "test"),
}


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int = 42
    output_dir: Optional[Path] = None
    data: Dict[str, Any] = field(default_factory=dict)
    train: Dict[str, Any] = field(default_factory=dict)
    run: Dict[str, Any] = field(default_factory=dict)
    source: Optional[Path] = None

    def to_dict(self) -> Dict[str, Any]:
        def plain(values: Mapping[str, Any]) -> Dict[str, Any]:
            return {key: str(value) if isinstance(value, Path) else value for key, value in values.items()}

        return {
            "experiment": self.experiment,
            "seed": self.seed,
            "output_dir": str(self.output_dir) if self.output_dir else None,
            "data": plain(self.data),
            "train": plain(self.train),
            "run": plain(self.run),
        }

    def require_data(self) -> None:
        missing = [name for name in REQUIRED_DATA[self.experiment] if self.data.get(name) is None]
        if missing:
            raise ConfigError(f"Experiment {self.experiment} needs data.{', data.'.join(missing)}")

    def embed_config(self, seed: Optional[int] = None) -> TrainConfig:
        return TrainConfig(seed=self.seed if seed is None else seed, **self.train)

    def superposition_config(self) -> SuperTrainConfig:
        return SuperTrainConfig(seed=self.seed, **self.train)


def _reject_unknown(values: Mapping[str, Any], allowed: Sequence[str], where: str) -> None:
    for key in values:
        if key not in allowed:
            raise ConfigError(f"Unknown key '{key}' in {where} (allowed: {', '.join(allowed) or 'none'})")


def build_config(raw: Mapping[str, Any], source: Optional[Path] = None) -> ExperimentConfig:
    """Validate a parsed configuration object and fill in defaults"""
    if not isinstance(raw, Mapping):
        raise ConfigError("Configuration must be a JSON object")
    _reject_unknown(raw, TOP_LEVEL, "configuration")
    experiment = raw.get("experiment")
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"'experiment' must be one of {', '.join(EXPERIMENTS)}, got {experiment!r}")
    schema = SCHEMAS[experiment]

    sections: Dict[str, Dict[str, Any]] = {}
    for section in SECTIONS:
        values = raw.get(section) or {}
        if not isinstance(values, Mapping):
            raise ConfigError(f"Section '{section}' must be an object")
        _reject_unknown(values, tuple(schema[section]), f"section '{section}' of {experiment}")
        sections[section] = {name: ParameterValidator.validate_parameter(definition, values.get(name))
                             for name, definition in schema[section].items()}

    output_dir = raw.get("output_dir")
    return ExperimentConfig(
        experiment=experiment,
        seed=ParameterValidator.validate_parameter(SEED, raw.get("seed")),
        output_dir=Path(output_dir) if output_dir else None,
        data=sections["data"],
        train=sections["train"],
        run=sections["run"],
        source=source,
    )


def load_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Configuration file '{path}' does not exist")
    try:
        raw = json.loads(path.read_text(encoding="utf-8") or "{}")
    except json.JSONDecodeError as error:
        raise ConfigError(f"{path}:{error.lineno}:{error.colno}: invalid JSON ({error.msg})") from error
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: configuration must be a JSON object")
    return raw


def validate_config(path: Union[str, Path]) -> ExperimentConfig:
    """Parse, default and path-check a configuration file"""
    return build_config(load_config_file(path), source=Path(path))


def parse_assignments(assignments: Sequence[str]) -> Dict[str, str]:
    """``section.key=value`` (or ``key=value`` for top-level keys) pairs from the command line"""
    parsed: Dict[str, str] = {}
    for assignment in assignments:
        key, separator, value = assignment.partition("=")
        if not separator or not key.strip():
            raise ConfigError(f"Expected section.key=value, got '{assignment}'")
        parsed[key.strip()] = value
    return parsed


def apply_overrides(raw: Mapping[str, Any], overrides: Mapping[str, Any]) -> Dict[str, Any]:
    """Layer dotted-key overrides on a raw configuration; later layers win"""
    merged: Dict[str, Any] = {key: dict(value) if isinstance(value, Mapping) else value for key, value in raw.items()}
    for key, value in overrides.items():
        if value is None:
            continue
        section, dot, name = key.partition(".")
        if not dot:
            merged[section] = value
            continue
        if section not in SECTIONS:
            raise ConfigError(f"Unknown section '{section}' in override '{key}'")
        merged.setdefault(section, {})
        if not isinstance(merged[section], dict):
            raise ConfigError(f"Section '{section}' must be an object")
        merged[section][name] = value
    return merged
