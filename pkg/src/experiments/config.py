"""
SOUP Experiment Configuration Module
Per-command experiment settings, config-file loading and flag overrides
"""
from pathlib import Path
from typing import Any, ClassVar, Dict, List, Literal, Mapping, Optional, Type

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from core.learning import DictionaryInit
from core.recon import default_nu, geometric_schedule, linear_schedule


class ConfigError(ValueError):
    """The experiment configuration cannot be resolved (bad file, unknown keys)"""


def _split_paths(value: Any) -> Any:
    if isinstance(value, str):
        return [part.strip() for part in value.split(",") if part.strip()]
    return value


class ExperimentConfig(BaseModel):
    """Settings shared by every command"""

    model_config = ConfigDict(frozen=True, populate_by_name=True, extra="forbid")

    command: ClassVar[str] = ""

    seed: int = Field(default=0, ge=0)
    output_dir: Path = Path("results")

    @classmethod
    def keys(cls) -> List[str]:
        """Config-file keys accepted in this command's section"""
        names = []
        for name, info in cls.model_fields.items():
            names.append(name)
            if info.alias:
                names.append(info.alias)
        return names


class LearnExperiment(ExperimentConfig):
    command: ClassVar[str] = "learn"

    images: List[Path] = Field(default_factory=list)
    patches: Optional[Path] = None
    patch_side: int = Field(default=8, ge=1)
    num_patches: int = Field(default=30000, ge=1)
    num_atoms: int = Field(default=256, ge=1)
    penalty: Literal["l0", "l1"] = "l0"
    lam: float = Field(default=69.0, alias="lambda", gt=0)
    mu: Optional[float] = Field(default=None, gt=0)
    cap: float = Field(default=1e8, gt=0)
    iterations: int = Field(default=30, ge=1)
    atom_order: Literal["cyclic", "random"] = "cyclic"
    init: DictionaryInit = "dct"
    record_steps: bool = False

    @field_validator("images", mode="before")
    @classmethod
    def _split_images(cls, v):
        return _split_paths(v)

    @model_validator(mode="after")
    def _one_data_source(self):
        if bool(self.images) == (self.patches is not None):
            raise ValueError("give either images or a patches file")
        if self.penalty == "l1" and self.mu is None:
            raise ValueError("the l1 penalty needs mu")
        return self


class ReconExperiment(ExperimentConfig):
    command: ClassVar[str] = "recon"

    kspace: Path
    mask: Path
    reference: Optional[Path] = None
    penalty: Literal["l0", "l1"] = "l0"
    nu: Optional[float] = Field(default=None, gt=0)
    lambda_start: float = Field(default=0.35, gt=0)
    lambda_stop: float = Field(default=0.01, gt=0)
    mu_start: Optional[float] = Field(default=None, gt=0)
    mu_stop: Optional[float] = Field(default=None, gt=0)
    schedule: Literal["linear", "geometric"] = "linear"
    inner_iters: Optional[int] = Field(default=None, ge=1)
    outer_iters: int = Field(default=45, ge=0)
    patch_side: int = Field(default=6, ge=1)
    stride: int = Field(default=1, ge=1)
    wrap: bool = True
    num_atoms: int = Field(default=144, ge=1)
    cap: float = Field(default=1e8, gt=0)
    solver: Literal["fourier", "cg"] = "fourier"
    cg_tol: float = Field(default=1e-10, gt=0)
    cg_max_iters: int = Field(default=500, ge=1)
    atom_order: Literal["cyclic", "random"] = "cyclic"
    init: DictionaryInit = "dct"
    track_fixed_objective: bool = False

    # mu = lambda / 1.4 unless given explicitly
    L1_RATIO: ClassVar[float] = 1.4

    def inner(self) -> int:
        """K: 5 inner SOUP-DILLO iterations or 1 inner OS-DL iteration by default"""
        if self.inner_iters is not None:
            return self.inner_iters
        return 5 if self.penalty == "l0" else 1

    def data_weight(self, num_pixels: int) -> float:
        return self.nu if self.nu is not None else default_nu(num_pixels)

    def weights(self) -> List[float]:
        if self.penalty == "l0":
            start, stop = self.lambda_start, self.lambda_stop
        else:
            start = self.mu_start if self.mu_start is not None else self.lambda_start / self.L1_RATIO
            stop = self.mu_stop if self.mu_stop is not None else self.lambda_stop / self.L1_RATIO
        ramp = linear_schedule if self.schedule == "linear" else geometric_schedule
        return ramp(start, stop, self.outer_iters)


class SimulateExperiment(ExperimentConfig):
    command: ClassVar[str] = "simulate"

    image: Optional[Path] = None
    phantom: Optional[int] = Field(default=None, ge=8)
    scheme: Literal["cartesian", "random2d"] = "cartesian"
    factor: float = 2.5
    sigma: float = Field(default=0.0, ge=0)

    @model_validator(mode="after")
    def _one_source(self):
        if (self.image is None) == (self.phantom is None):
            raise ValueError("give either an image or a phantom size")
        return self


class CodeExperiment(ExperimentConfig):
    command: ClassVar[str] = "code"

    dictionary: Path
    patches: Path
    method: Literal["omp", "l0"] = "omp"
    sparsity: int = Field(default=5, ge=1)
    err_tol: float = Field(default=1e-6, ge=0)
    lam: float = Field(default=69.0, alias="lambda", gt=0)
    cap: float = Field(default=1e8, gt=0)
    sweeps: int = Field(default=60, ge=1)
    debias: bool = False


class BenchExperiment(ExperimentConfig):
    command: ClassVar[str] = "bench"

    patch_side: int = Field(default=6, ge=1)
    base_signals: int = Field(default=5000, ge=1)
    base_atoms: int = Field(default=72, ge=1)
    lam: float = Field(default=1.5, alias="lambda", gt=0)
    iterations: int = Field(default=1, ge=1)
    repeats: int = Field(default=3, ge=1)


class MetricsExperiment(ExperimentConfig):
    command: ClassVar[str] = "metrics"

    image: Optional[Path] = None
    reference: Optional[Path] = None
    patches: Optional[Path] = None
    dictionary: Optional[Path] = None
    coefs: Optional[Path] = None
    lam: Optional[float] = Field(default=None, alias="lambda", gt=0)

    @model_validator(mode="after")
    def _something_to_measure(self):
        image_pair = (self.image is None) == (self.reference is None)
        learned = [self.patches, self.dictionary, self.coefs]
        triple = all(p is None for p in learned) or all(p is not None for p in learned)
        if not image_pair:
            raise ValueError("image and reference go together")
        if not triple:
            raise ValueError("patches, dictionary and coefs go together")
        if self.image is None and self.patches is None:
            raise ValueError("nothing to measure: give image+reference and/or patches+dictionary+coefs")
        return self


EXPERIMENTS: Dict[str, Type[ExperimentConfig]] = {
    cls.command: cls
    for cls in (LearnExperiment, ReconExperiment, SimulateExperiment,
                CodeExperiment, BenchExperiment, MetricsExperiment)
}


def read_config_file(path: Path, command: str) -> Dict[str, str]:
    """Keys of the `command.` section of a flat key=value file, prefix stripped"""
    if not Path(path).is_file():
        raise ConfigError(f"config file not found: {path}")
    prefix = f"{command}."
    section = {}
    for key, value in dotenv_values(path).items():
        if key.startswith(prefix) and value is not None:
            section[key[len(prefix):]] = value
    return section


def load_experiment(command: str, config_file: Optional[Path] = None,
                    overrides: Optional[Mapping[str, Any]] = None) -> ExperimentConfig:
    """File values first, then every non-None flag value on top"""
    if command not in EXPERIMENTS:
        raise ConfigError(f"unknown command {command!r}")
    model = EXPERIMENTS[command]
    values: Dict[str, Any] = {}
    if config_file is not None:
        values.update(read_config_file(config_file, command))
        unknown = sorted(set(values) - set(model.keys()))
        if unknown:
            raise ConfigError(f"unknown keys in section '{command}': {', '.join(unknown)}")
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        # a flag overrides whichever spelling the file used
        field = model.model_fields.get(key)
        if field is not None and field.alias:
            values.pop(field.alias, None)
        values[key] = value
    return model.model_validate(values)
