"""
Configuration settings for the pulse engine.
"""

import math
import re
import sys
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from grape_engine.errors import ProblemFileError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


# Machine epsilon of 64-bit floats.
EPS_MACHINE = 2.22e-16


class DerivativeMethod(str, Enum):
    """Propagator derivative routes available to the gradient."""

    FIRST_ORDER = "first_order"
    SERIES_EXACT = "series_exact"
    SERIES_TRUNCATED = "series_truncated"
    EIGEN_EXACT = "eigen_exact"
    FD_FORWARD = "fd_forward"
    FD_CENTRAL = "fd_central"
    FD_CENTRAL4 = "fd_central4"


class Algorithm(str, Enum):
    """Search-direction strategies for the optimizer."""

    STEEPEST = "steepest"
    DFP = "dfp"
    BFGS = "bfgs"
    LBFGS = "lbfgs"


class ExpmOptions(BaseModel):
    """Options for the Taylor exponential and the commutator series."""

    model_config = ConfigDict(frozen=True)

    taylor_tol: float = Field(
        default=1e-14, gt=0.0, le=1e-6, description="Relative series truncation tolerance"
    )
    scaling_threshold: float = Field(
        default=2.0, gt=0.0, le=30.0, description="1-norm bound below which no scaling is applied"
    )
    max_terms: int = Field(default=64, ge=2, description="Series length cap")


class FdStepPolicy(BaseModel):
    """Round-off bounded finite-difference step selection."""

    model_config = ConfigDict(frozen=True)

    eps_a: float = Field(default=1e-13, description="Absolute exponential-evaluation error")
    eps_m: float = Field(default=EPS_MACHINE, description="Machine epsilon")
    error_threshold: float = Field(
        default=1e-8, gt=0.0, description="Target bound on the finite-difference error"
    )
    fprime_estimate: float = Field(
        default=1.0, ge=0.0, description="Order-of-magnitude estimate of |f'(x)|"
    )

    @model_validator(mode="after")
    def _check_epsilons(self) -> "FdStepPolicy":
        if not self.eps_m > 0.0:
            raise ValueError("eps_m must be positive")
        if self.eps_a < self.eps_m:
            raise ValueError("eps_a must be >= eps_m")
        return self


class GradientMethod(BaseModel):
    """Gradient method selection plus its parameters."""

    model_config = ConfigDict(frozen=True)

    name: DerivativeMethod = Field(default=DerivativeMethod.SERIES_EXACT)
    taylor_tol: float = Field(default=1e-14, gt=0.0, le=1e-6)
    scaling_threshold: float = Field(default=2.0, gt=0.0, le=30.0)
    max_terms: int = Field(default=64, ge=2)
    series_order: Optional[int] = Field(
        default=None, ge=1, description="Commutator terms kept by series_truncated"
    )
    fd_eps_a: float = Field(default=1e-13, gt=0.0)
    fd_error_threshold: float = Field(default=1e-8, gt=0.0)
    fd_fprime_estimate: float = Field(default=1.0, ge=0.0)

    @model_validator(mode="after")
    def _check_order(self) -> "GradientMethod":
        if self.name is DerivativeMethod.SERIES_TRUNCATED and self.series_order is None:
            raise ValueError("series_truncated requires series_order")
        return self

    @property
    def expm_options(self) -> ExpmOptions:
        return ExpmOptions(
            taylor_tol=self.taylor_tol,
            scaling_threshold=self.scaling_threshold,
            max_terms=self.max_terms,
        )

    @property
    def fd_policy(self) -> FdStepPolicy:
        return FdStepPolicy(
            eps_a=self.fd_eps_a,
            error_threshold=self.fd_error_threshold,
            fprime_estimate=self.fd_fprime_estimate,
        )


class OptimizerConfig(BaseModel):
    """Optimizer loop and line-search configuration."""

    model_config = ConfigDict(frozen=True)

    algorithm: Algorithm = Field(default=Algorithm.LBFGS)
    max_iters: int = Field(default=200, ge=0, description="Iteration budget")
    grad_tol: float = Field(default=1e-10, ge=0.0, description="Projected-gradient max-norm")
    fidelity_target: float = Field(default=0.99999, description="Early-stop fidelity")
    lbfgs_memory: int = Field(default=20, ge=1)
    lbfgs_scaling: Literal["newest_pair", "first_pair"] = Field(
        default="newest_pair", description="Initial L-BFGS matrix scaling rule"
    )
    wolfe_c1: float = Field(default=1e-4)
    wolfe_c2: float = Field(default=0.9)
    steepest_c2: float = Field(default=0.01, description="Curvature parameter for steepest descent")
    max_line_evals: int = Field(default=20, ge=1)
    initial_step_hz: Optional[float] = Field(
        default=None, gt=0.0, description="Largest amplitude change of the first trial step"
    )
    seed: int = Field(default=0, description="Initial-pulse randomization seed")

    @model_validator(mode="after")
    def _check_wolfe(self) -> "OptimizerConfig":
        if not 0.0 < self.wolfe_c1 < self.wolfe_c2 < 1.0:
            raise ValueError("need 0 < wolfe_c1 < wolfe_c2 < 1")
        if not self.wolfe_c1 < self.steepest_c2 < 1.0:
            raise ValueError("need wolfe_c1 < steepest_c2 < 1")
        return self


class SpinChainSpec(BaseModel):
    """Linear spin-1/2 chain with nearest-neighbour isotropic couplings."""

    model_config = ConfigDict(frozen=True)

    n_spins: int = Field(..., ge=1, description="Number of spins")
    offsets_hz: Optional[List[float]] = Field(default=None, description="Offsets in Hz")
    offsets_ppm: Optional[List[float]] = Field(default=None, description="Offsets in ppm")
    span_ppm: Optional[float] = Field(
        default=None, ge=0.0, description="Spread offsets evenly over this many ppm"
    )
    center_ppm: float = Field(default=0.0, description="Centre of the span_ppm spread")
    j_hz: float = Field(default=0.0, description="Nearest-neighbour J coupling (Hz)")
    b1_max_hz: Optional[float] = Field(
        default=None, ge=0.0, description="Control amplitude cap (Hz), None = unbounded"
    )

    @model_validator(mode="after")
    def _check_offsets(self) -> "SpinChainSpec":
        given = [
            o for o in (self.offsets_hz, self.offsets_ppm, self.span_ppm) if o is not None
        ]
        if len(given) != 1:
            raise ValueError("exactly one of offsets_hz / offsets_ppm / span_ppm is required")
        if self.span_ppm is not None:
            offsets = [self.span_ppm, self.center_ppm]
        else:
            offsets = given[0]
            if len(offsets) != self.n_spins:
                raise ValueError(
                    f"{len(offsets)} offsets given for {self.n_spins} spins"
                )
        values = list(offsets) + [self.j_hz]
        if self.b1_max_hz is not None:
            values.append(self.b1_max_hz)
        if not all(math.isfinite(v) for v in values):
            raise ValueError("offsets, j_hz and b1_max_hz must be finite")
        return self

    def offsets_in_hz(self, spectrometer_mhz: float) -> List[float]:
        """Offsets in Hz; ppm values are scaled by the spectrometer frequency."""
        if self.offsets_hz is not None:
            return list(self.offsets_hz)
        ppm_values = self.offsets_ppm
        if ppm_values is None:
            # spinsys imports this module
            from grape_engine.core.spinsys import chain_offsets

            ppm_values = chain_offsets(self.n_spins, self.span_ppm, self.center_ppm)
        return [ppm * spectrometer_mhz for ppm in ppm_values]


class SystemSettings(SpinChainSpec):
    """``[system]`` section: the chain plus spectrometer and relaxation."""

    spectrometer_mhz: float = Field(default=600.0, gt=0.0, description="Proton frequency")
    relaxation_rate: float = Field(
        default=0.0, ge=0.0, description="Uniform damping rate (1/s)"
    )


class PulseSettings(BaseModel):
    """``[pulse]`` section: the time grid and initial-pulse seed."""

    model_config = ConfigDict(frozen=True)

    n_steps: int = Field(..., ge=1, description="Number of piecewise-constant steps")
    dt: float = Field(..., gt=0.0, description="Step duration in seconds")
    seed: int = Field(default=0, description="Initial-pulse randomization seed")


StateSpec = Union[str, List[Tuple[float, float]]]


class TransferSettings(BaseModel):
    """``[transfer]`` section: initial and target state specifications."""

    model_config = ConfigDict(frozen=True)

    initial: StateSpec = Field(default="sum_sz")
    target: StateSpec = Field(default="minus_sum_sz")


class SweepSettings(BaseModel):
    """``[sweep]`` section: offset grid for the inversion profile."""

    model_config = ConfigDict(frozen=True)

    offsets_hz: Optional[List[float]] = None
    start_hz: float = -2000.0
    stop_hz: float = 2000.0
    points: int = Field(default=81, ge=0)

    def grid(self) -> List[float]:
        if self.offsets_hz is not None:
            return list(self.offsets_hz)
        if self.points == 0:
            return []
        if self.points == 1:
            return [self.start_hz]
        step = (self.stop_hz - self.start_hz) / (self.points - 1)
        return [self.start_hz + i * step for i in range(self.points)]


class EngineSettings(BaseModel):
    """Process-level settings: parallelism and logging."""

    model_config = ConfigDict(frozen=True)

    threads: int = Field(default=1, ge=1, description="Worker threads")
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = Field(default="INFO")
    log_format: Literal["console", "json"] = Field(default="console")


class ProblemFile(BaseModel):
    """Complete optimization problem definition."""

    model_config = ConfigDict(frozen=True)

    system: SystemSettings
    pulse: PulseSettings
    transfer: TransferSettings = Field(default_factory=TransferSettings)
    method: GradientMethod = Field(default_factory=GradientMethod)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    sweep: Optional[SweepSettings] = None
    engine: EngineSettings = Field(default_factory=EngineSettings)

    @model_validator(mode="after")
    def _check_method(self) -> "ProblemFile":
        if self.method.name is DerivativeMethod.EIGEN_EXACT and self.system.relaxation_rate > 0:
            raise ValueError("eigen_exact requires zero relaxation")
        return self

    def with_overrides(
        self,
        algorithm: Optional[str] = None,
        gradient_method: Optional[str] = None,
        max_iters: Optional[int] = None,
        seed: Optional[int] = None,
        threads: Optional[int] = None,
    ) -> "ProblemFile":
        """
        Apply command-line overrides, which take precedence over file values.

        Returns:
            ProblemFile: Re-validated copy
        """
        data = self.model_dump()
        if algorithm is not None:
            data["optimizer"]["algorithm"] = algorithm
        if gradient_method is not None:
            data["method"]["name"] = gradient_method
        if max_iters is not None:
            data["optimizer"]["max_iters"] = max_iters
        if seed is not None:
            data["pulse"]["seed"] = seed
            data["optimizer"]["seed"] = seed
        if threads is not None:
            data["engine"]["threads"] = threads
        return ProblemFile.model_validate(data)


def _locate_field(text: str, loc: Tuple[Any, ...]) -> Optional[int]:
    """Best-effort line number of a dotted field path in TOML source."""
    keys = [str(part) for part in loc if isinstance(part, str)]
    if not keys:
        return None
    section, key = (keys[0], keys[1]) if len(keys) > 1 else (None, keys[0])
    current = None
    section_line = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            current = line.strip("[]").strip()
            if current == section:
                section_line = lineno
            continue
        if current == section and line.split("=", 1)[0].strip() == key:
            return lineno
    return section_line


def load_problem_file(path: Path) -> ProblemFile:
    """
    Load and validate a TOML problem file.

    Args:
        path: Problem file path

    Returns:
        ProblemFile: Validated problem definition

    Raises:
        ProblemFileError: On unreadable files, TOML syntax errors or field
            validation failures (the message names the offending field)
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ProblemFileError(f"Cannot read problem file {path}: {e}") from e

    try:
        raw: Dict[str, Any] = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        line = getattr(e, "lineno", None)
        if line is None:
            match = re.search(r"line (\d+)", str(e))
            line = int(match.group(1)) if match else None
        raise ProblemFileError(f"Malformed problem file {path}: {e}", line=line) from e

    # Pulse seed doubles as the optimizer seed unless given separately.
    optimizer = raw.setdefault("optimizer", {})
    if isinstance(optimizer, dict) and "seed" not in optimizer:
        pulse = raw.get("pulse", {})
        if isinstance(pulse, dict) and "seed" in pulse:
            optimizer["seed"] = pulse["seed"]

    try:
        return ProblemFile.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        loc = tuple(first.get("loc", ()))
        field = ".".join(str(part) for part in loc) or None
        raise ProblemFileError(
            f"Invalid problem file {path}: {first.get('msg')}",
            field=field,
            line=_locate_field(text, loc),
        ) from e
