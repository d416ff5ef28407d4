"""
Pydantic models for experiment configs and reports
Defines the JSON schema accepted by `main.py run` and the report envelope
"""

from typing import Any, Dict, List, Literal, Optional, Tuple, Union
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from sde.driving import OUSpec, grid_steps
from sde.integrator import LinearModel, SemilinearModel, StepScheme
from utils.parsing.json import load_config_file

ExperimentName = Literal[
    "oracle-validate",
    "evo-pullback",
    "flow-check",
    "krylov-bogoliubov",
    "asf",
    "lyapunov",
    "mixing",
    "ns-energy",
    "small-ball",
]

class ConfigError(Exception):
    """Raised when an experiment config is invalid; `field` is the dotted path"""

    def __init__(self, field: str, message: str):
        self.field = field
        self.message = message
        super().__init__(f"{field}: {message}")


# Core Models
class ModelConfig(BaseModel):
    """Model family and its parameters; unused parameters are ignored"""

    model_config = ConfigDict(extra="forbid")

    kind: Literal["example1d", "ns2d"] = "example1d"
    # example1d
    a: float = Field(default=-1.0, le=0)
    gain: float = 1.0
    sigma: float = Field(default=1.0, ge=0)
    # driving OU process
    ou_drift: float = Field(default=-1.0, lt=0)
    ou_scale: float = Field(default=1.0, ge=0)
    # ns2d
    n: int = Field(default=16, ge=4)
    viscosity: float = Field(default=0.5, gt=0)
    alpha: float = Field(default=3.0, gt=2)
    trace_c: float = Field(default=1.0, gt=0)
    coupling_gain: float = 1.0
    driving_modes: int = Field(default=4, ge=0)
    linearized: bool = False

    def build(self) -> Tuple[SemilinearModel, OUSpec]:
        """Instantiate the model and the OU driver of matching dimension"""
        if self.kind == "example1d":
            model = LinearModel.scalar(self.a, self.gain, self.sigma)
        else:
            from sde.navier_stokes import NSModelSpec, SpectralGrid, as_semilinear

            spec = NSModelSpec(
                viscosity=self.viscosity,
                alpha=self.alpha,
                trace_c=self.trace_c,
                coupling_gain=self.coupling_gain,
                driving_modes=self.driving_modes,
                linearized=self.linearized,
            )
            model = as_semilinear(spec, SpectralGrid(self.n))
        driving_dim = max(1, model.driving_dim)
        return model, OUSpec.uniform(driving_dim, self.ou_drift, self.ou_scale)

    @property
    def is_unit_example(self) -> bool:
        """The closed-form scalar example with the unit OU driver"""
        return (
            self.kind == "example1d"
            and (self.a, self.gain, self.sigma, self.ou_drift, self.ou_scale) == (-1.0, 1.0, 1.0, -1.0, 1.0)
        )


class NumericsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dt: float = Field(default=0.01, gt=0)
    scheme: Literal["exponential-euler", "euler-maruyama"] = "exponential-euler"
    t_hist: Optional[float] = Field(default=None, gt=0)
    N: int = Field(default=2000, ge=2)
    M: int = Field(default=256, ge=2)
    P: int = Field(default=200, ge=1)
    n_drivings: int = Field(default=8, ge=1)
    horizons: Dict[str, Union[float, List[float]]] = Field(default_factory=dict)

    def step_scheme(self) -> StepScheme:
        return StepScheme(dt=self.dt, kind=self.scheme)

    def horizon(self, name: str, default: float) -> float:
        return float(self.horizons.get(name, default))

    def horizon_list(self, name: str, default: List[float]) -> List[float]:
        value = self.horizons.get(name, default)
        return [float(v) for v in (value if isinstance(value, list) else [value])]


class SeedConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    master: int = Field(default=1, ge=0)
    driving: int = Field(default=2, ge=0)
    wiener: int = Field(default=3, ge=0)

    @model_validator(mode="after")
    def _distinct_domains(self) -> "SeedConfig":
        if self.driving == self.wiener:
            raise ValueError("driving and wiener seeds must be distinct")
        return self

    @classmethod
    def from_override(cls, k: int) -> "SeedConfig":
        return cls(master=k, driving=k + 1, wiener=k + 2)


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    experiment: ExperimentName
    model: ModelConfig = Field(default_factory=ModelConfig)
    numerics: NumericsConfig = Field(default_factory=NumericsConfig)
    seeds: SeedConfig = Field(default_factory=SeedConfig)
    output_dir: Optional[str] = None
    params: Dict[str, Any] = Field(default_factory=dict)

    def param(self, name: str, default: Any) -> Any:
        return self.params.get(name, default)


# Report Models
class ExperimentReport(BaseModel):
    experiment: str
    model: str
    passed: bool
    summary: Dict[str, Any]
    warnings: List[str] = Field(default_factory=list)


def check_grid(config: ExperimentConfig) -> None:
    """
    Every time horizon must be an integer multiple of numerics.dt.

    Raises:
        ConfigError: naming numerics.dt and the offending horizon
    """
    num = config.numerics
    times = [("numerics.t_hist", num.t_hist)] if num.t_hist is not None else []
    for name, value in num.horizons.items():
        values = value if isinstance(value, list) else [value]
        times.extend((f"numerics.horizons.{name}", v) for v in values)
    for name, t in times:
        try:
            grid_steps(float(t), num.dt, name)
        except ValueError:
            raise ConfigError("numerics.dt", f"dt={num.dt:g} does not divide {name}={t:g}")


def _field_path(err: ValidationError) -> str:
    first = err.errors()[0]
    return ".".join(str(part) for part in first["loc"]) or "<root>"


def parse_experiment_config(data: dict, seed_override: Optional[int] = None) -> ExperimentConfig:
    """Validate a config dict (or a manifest holding one under "config")"""
    if "config" in data and "versions" in data:
        data = data["config"]
    if seed_override is not None:
        data = {**data, "seeds": SeedConfig.from_override(seed_override).model_dump()}
    try:
        config = ExperimentConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        raise ConfigError(_field_path(e), first["msg"]) from e
    check_grid(config)
    return config


def load_experiment_config(path: str, seed_override: Optional[int] = None) -> ExperimentConfig:
    """Load, validate and grid-check an experiment config or manifest file"""
    return parse_experiment_config(load_config_file(path), seed_override)
