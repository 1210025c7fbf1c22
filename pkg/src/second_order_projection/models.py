"""Data models for run configuration, study records and reports."""

import math
from typing import Annotated, Any, Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

NAMED_TARGETS = ("lambda_minus", "lambda_plus", "ground_state")

Target = float | Literal["lambda_minus", "lambda_plus", "ground_state"]


class StrictModel(BaseModel):
    """Configuration block that rejects unknown keys."""

    model_config = ConfigDict(extra="forbid")


class FourierB1Config(StrictModel):
    """Rank-one perturbed multiplication operator in the Fourier basis."""

    kind: Literal["fourier_b1"]


class DirectSumB2Config(StrictModel):
    """Same operator, split into two half-period copies."""

    kind: Literal["direct_sum_b2"]


class SchrodingerConfig(StrictModel):
    """-d^2/dx^2 + V on the line, V = -depth exp(-x^2/width^2) + amplitude cos x + harmonic x^2."""

    kind: Literal["schrodinger_hermite"]
    depth: float = Field(default=8.0, description="Depth of the Gaussian well")
    width: float = Field(default=1.0, gt=0, description="Width of the Gaussian well")
    amplitude: float = Field(default=1.0, description="Amplitude of the periodic part")
    harmonic: float = Field(default=0.0, ge=0, description="Coefficient of the confining x^2 term")
    quadrature_order: int | None = Field(
        default=None,
        ge=1,
        description="Initial Gauss-Hermite node count (default 4(n+1)+64)",
    )


class ShiftFixtureConfig(StrictModel):
    kind: Literal["shift_fixture"]


class HarmonicSanityConfig(StrictModel):
    kind: Literal["harmonic_sanity"]


OperatorConfig = Annotated[
    FourierB1Config
    | DirectSumB2Config
    | SchrodingerConfig
    | ShiftFixtureConfig
    | HarmonicSanityConfig,
    Field(discriminator="kind"),
]


class SweepConfig(StrictModel):
    """Inclusive sweep start:step:stop."""

    start: int = Field(ge=0)
    stop: int = Field(ge=0)
    step: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def check_order(self) -> "SweepConfig":
        if self.stop < self.start:
            raise ValueError(f"sweep stop {self.stop} is below start {self.start}")
        return self

    def values(self) -> list[int]:
        return list(range(self.start, self.stop + 1, self.step))


class GridConfig(StrictModel):
    """Rectangle, resolution and optional membership test for pseudospectrum sampling."""

    re_min: float
    re_max: float
    im_min: float
    im_max: float
    nx: int = Field(default=101, ge=2)
    ny: int = Field(default=101, ge=2)
    eps: float | None = Field(default=None, ge=0)
    weights: list[float] | None = None

    @model_validator(mode="after")
    def check_rect(self) -> "GridConfig":
        if not (self.re_max > self.re_min and self.im_max > self.im_min):
            raise ValueError("grid rectangle is degenerate")
        if self.weights is not None and any(w < 0 for w in self.weights):
            raise ValueError("weights must be nonnegative")
        if (self.eps is None) != (self.weights is None):
            raise ValueError("eps and weights must be given together")
        if self.eps and self.weights is not None and not any(self.weights):
            raise ValueError("weights must not all vanish when eps > 0")
        return self


class PerturbConfig(StrictModel):
    target: Target = "lambda_minus"
    delta: float = Field(gt=0, description="Radius of the disc around the target")
    w0: float = Field(default=1.0, ge=0)
    w1: float = Field(default=1.0, ge=0)
    relative: bool = Field(default=False, description="Use the relative weights derived from delta and mu")
    trials: int = Field(default=50, ge=1)
    eps_fraction: float = Field(
        default=0.9,
        ge=0,
        lt=1,
        description="Perturbation size as a fraction of the tolerance bound",
    )

    @model_validator(mode="after")
    def check_weights(self) -> "PerturbConfig":
        if not self.relative and self.w0 == 0 and self.w1 == 0:
            raise ValueError("w0 and w1 must not both vanish")
        return self


class FDConfig(StrictModel):
    halfwidth: float = Field(default=20.0, gt=0)
    grid_points: int = Field(default=4000, ge=100)
    count: int = Field(default=3, ge=1)
    extrapolate: bool = True


class RunConfig(StrictModel):
    """Versioned run configuration read from TOML or JSON."""

    schema_version: Literal[1] = 1
    operator: OperatorConfig
    n: int | None = Field(default=None, ge=0, description="Truncation index for single runs")
    sweep: SweepConfig | None = None
    targets: list[Target] = Field(default_factory=list)
    reference: Target | None = Field(default=None, description="Reference eigenvalue for convergence studies")
    imag_cut: float = Field(default=math.inf, ge=0)
    grid: GridConfig | None = None
    perturbation: PerturbConfig | None = None
    fd: FDConfig | None = None
    seed: int = Field(default=0, ge=0, lt=2**64)

    def truncations(self) -> list[int]:
        """The sweep values, or [n] for a single run."""
        if self.sweep is not None:
            return self.sweep.values()
        if self.n is not None:
            return [self.n]
        return []


class ConvergenceRecord(BaseModel):
    """One row of a convergence table: n, error of the nearest eigenvalue, logs and slope.

    The error |z_n - lambda| stands in for the projection defect of the exact
    eigenfunction, which is never computed.
    """

    model_config = ConfigDict(frozen=True)

    n: int = Field(ge=0)
    z_re: float
    z_im: float
    err: float = Field(ge=0)
    log_err: float
    log_n: float
    slope: float | None = None

    @property
    def z_n(self) -> complex:
        return complex(self.z_re, self.z_im)


class Enclosure(BaseModel):
    """Real interval [Re z - |Im z|, Re z + |Im z|] around a pencil eigenvalue z."""

    model_config = ConfigDict(frozen=True)

    lo: float
    hi: float
    witness_re: float
    witness_im: float

    @model_validator(mode="after")
    def check_interval(self) -> "Enclosure":
        if self.lo > self.hi:
            raise ValueError(f"lo={self.lo} exceeds hi={self.hi}")
        return self

    @classmethod
    def from_eigenvalue(cls, z: complex) -> "Enclosure":
        r = abs(z.imag)
        return cls(lo=z.real - r, hi=z.real + r, witness_re=z.real, witness_im=z.imag)

    @property
    def witness(self) -> complex:
        return complex(self.witness_re, self.witness_im)

    def intersects(
        self,
        bands: list[tuple[float, float]],
        points: list[float],
        fatten: float = 0.0,
    ) -> bool:
        """Whether the (fattened) interval meets a union of bands and points."""
        lo, hi = self.lo - fatten, self.hi + fatten
        if any(lo <= b and a <= hi for a, b in bands):
            return True
        return any(lo <= p <= hi for p in points)


class PerturbationReport(BaseModel):
    """Outcome of random coefficient perturbations around one eigenvalue."""

    model_config = ConfigDict(frozen=True)

    n: int
    lam: float
    delta: float = Field(gt=0)
    mu: float = Field(gt=0)
    w0: float
    w1: float
    eps_bound: float
    eps: float
    trials: int = Field(ge=1)
    seed: int
    baseline_count: int
    baseline_annulus_clear: bool
    counts: list[int]
    counts_match: list[bool]
    annulus_clear: list[bool]
    asymptotic_only: bool = Field(
        default=True,
        description="Count preservation is only guaranteed beyond an unknown truncation index",
    )

    @model_validator(mode="after")
    def check_radius(self) -> "PerturbationReport":
        if not self.delta < self.mu / 4:
            raise ValueError(f"delta={self.delta} must be below mu/4={self.mu / 4}")
        if not (len(self.counts) == len(self.counts_match) == len(self.annulus_clear) == self.trials):
            raise ValueError("per-trial lists must have one entry per trial")
        return self

    @property
    def all_pass(self) -> bool:
        return all(self.counts_match) and all(self.annulus_clear)


class SecularSolution(BaseModel):
    """The two discrete eigenvalues of the rank-one perturbed multiplication operator."""

    model_config = ConfigDict(frozen=True)

    lambda_minus: float
    lambda_plus: float
    residual_minus: float = Field(ge=0)
    residual_plus: float = Field(ge=0)
    bracket_minus: tuple[float, float]
    bracket_plus: tuple[float, float]
    signs_minus: tuple[float, float]
    signs_plus: tuple[float, float]

    @field_validator("lambda_minus")
    @classmethod
    def in_gap(cls, v: float) -> float:
        if not -1 < v < 1:
            raise ValueError(f"lambda_minus={v} is not in the gap (-1, 1)")
        return v

    @field_validator("lambda_plus")
    @classmethod
    def above_bands(cls, v: float) -> float:
        if not v > 3:
            raise ValueError(f"lambda_plus={v} is not above the bands")
        return v


class FDResult(BaseModel):
    """Finite-difference reference eigenvalues with their convergence gate."""

    model_config = ConfigDict(frozen=True)

    eigenvalues: list[float]
    raw_eigenvalues: list[float]
    halfwidth: float
    grid_points: int
    extrapolated: bool
    gate_change: float
    converged: bool
    stable: list[bool] = Field(default_factory=list, description="Per level: moved by less than the gate tolerance")


class ErrorResponse(BaseModel):
    """Error response model."""

    success: bool = False
    error: str = Field(description="Error message")
    error_code: str | None = Field(default=None, description="Error code")
    details: dict[str, Any] | None = Field(default=None, description="Additional error details")
