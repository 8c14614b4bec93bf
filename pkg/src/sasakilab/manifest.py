"""JSON manifests describing a verification run."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError
from .expr import ExpressionSyntaxError, UnknownIdentifierError, parse_expression
from .models import MODELS

SUITES = ("ambient", "structure", "derivative", "quclass", "theorem31", "theorem32")

DEFAULT_TOLERANCES = {
    "ambient": 1e-8,
    "structure": 1e-7,
    "derivative": 1e-6,
    "oracle": 1e-4,
    "gauge": 1e-7,
    "fit": 1e-8,
    "quclass": 1e-6,
    "theorem": 1e-6,
    "lambda_guard": 1e-6,
}

# grid points per parameter, chosen per model so default runs stay fast
DEFAULT_GRID_COUNTS = {"sasakian_r3": 17, "sasakian_r5": 5}
DEFAULT_RANGE = (-1.0, 1.0)
DEFAULT_RANDOM_COUNT = 64
DEFAULT_SEED = 42
AMBIENT_POINTS = 200
AMBIENT_BOX = 2.0


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ScaledPolicy(_Strict):
    scaled: str


class GridSpec(_Strict):
    counts: Optional[Union[int, list[int]]] = None
    ranges: Optional[Union[tuple[float, float], list[tuple[float, float]]]] = None

    @field_validator("counts")
    @classmethod
    def _positive_counts(cls, v):
        vals = [v] if isinstance(v, int) else (v or [])
        if any(c < 1 for c in vals):
            raise ValueError("grid counts must be >= 1")
        return v


class RandomSpec(_Strict):
    count: int = Field(DEFAULT_RANDOM_COUNT, ge=1)
    seed: int = Field(ge=0)
    ranges: Optional[Union[tuple[float, float], list[tuple[float, float]]]] = None


class Samples(_Strict):
    grid: Optional[GridSpec] = GridSpec()
    random: Optional[RandomSpec] = RandomSpec(seed=DEFAULT_SEED)

    @model_validator(mode="after")
    def _nonempty(self):
        if self.grid is None and self.random is None:
            raise ValueError("at least one of grid or random sampling is required")
        return self


class FaultHooks(_Strict):
    """Fault injection for exercising failure paths."""

    xi_scale: Optional[float] = None


class Manifest(_Strict):
    model: Literal["sasakian_r3", "sasakian_r5"]
    embedding: list[str]
    normal_policy: Union[Literal["unit"], ScaledPolicy] = "unit"
    orientation: Literal[1, -1] = 1
    samples: Samples = Samples()
    tolerances: dict[str, float] = {}
    suites: list[Literal[SUITES]] = list(SUITES)
    report_path: Optional[str] = None
    test_hooks: Optional[FaultHooks] = None

    @property
    def n(self) -> int:
        return MODELS[self.model]

    @property
    def nparams(self) -> int:
        return 2 * self.n

    @field_validator("tolerances")
    @classmethod
    def _known_tolerances(cls, v):
        for name, val in v.items():
            if name not in DEFAULT_TOLERANCES:
                raise ValueError(f"unknown tolerance {name!r}; known: {', '.join(DEFAULT_TOLERANCES)}")
            if not val > 0:
                raise ValueError(f"tolerance {name!r} must be positive")
        return v

    @field_validator("suites")
    @classmethod
    def _unique_suites(cls, v):
        if not v:
            raise ValueError("at least one suite is required")
        return [s for s in SUITES if s in v]

    @model_validator(mode="after")
    def _check_dimensions(self):
        dim = 2 * self.n + 1
        if len(self.embedding) != dim:
            raise ValueError(f"embedding: {self.model} needs {dim} expressions, got {len(self.embedding)}")
        for i, text in enumerate(self.embedding):
            _check_expression(text, self.nparams, f"embedding[{i}]")
        if isinstance(self.normal_policy, ScaledPolicy):
            _check_expression(self.normal_policy.scaled, self.nparams, "normal_policy.scaled")
        m = self.nparams
        for where, spec in (("samples.grid", self.samples.grid), ("samples.random", self.samples.random)):
            if spec is None:
                continue
            _ranges(spec.ranges, m, f"{where}.ranges")
            counts = getattr(spec, "counts", None)
            if isinstance(counts, list) and len(counts) != m:
                raise ValueError(f"{where}.counts: expected {m} entries, got {len(counts)}")
        return self

    # -- derived values ---------------------------------------------------
    def tolerance(self, name: str) -> float:
        return float(self.tolerances.get(name, DEFAULT_TOLERANCES[name]))

    def all_tolerances(self) -> dict[str, float]:
        return {k: self.tolerance(k) for k in DEFAULT_TOLERANCES}

    @property
    def seed(self) -> int:
        return self.samples.random.seed if self.samples.random is not None else DEFAULT_SEED

    def normal_policy_json(self):
        return self.normal_policy if isinstance(self.normal_policy, str) else self.normal_policy.model_dump()

    def sample_points(self) -> np.ndarray:
        """Grid points (row-major) followed by seeded uniform points."""
        m = self.nparams
        parts = []
        grid = self.samples.grid
        if grid is not None:
            counts = grid.counts if grid.counts is not None else DEFAULT_GRID_COUNTS[self.model]
            counts = [counts] * m if isinstance(counts, int) else counts
            ranges = _ranges(grid.ranges, m, "samples.grid.ranges")
            axes = [np.linspace(lo, hi, c) if c > 1 else np.array([0.5 * (lo + hi)])
                    for c, (lo, hi) in zip(counts, ranges)]
            mesh = np.meshgrid(*axes, indexing="ij")
            parts.append(np.stack([a.ravel() for a in mesh], -1))
        rnd = self.samples.random
        if rnd is not None:
            ranges = np.array(_ranges(rnd.ranges, m, "samples.random.ranges"))
            rng = np.random.default_rng(rnd.seed)
            u = rng.uniform(size=(rnd.count, m))
            parts.append(ranges[:, 0] + u * (ranges[:, 1] - ranges[:, 0]))
        return np.concatenate(parts, axis=0)

    def with_overrides(self, seed: int | None = None, tolerances: dict | None = None,
                       suites: list | None = None) -> "Manifest":
        data = self.model_dump()
        if seed is not None:
            rnd = data["samples"]["random"]
            if rnd is None:
                data["samples"]["random"] = {"count": DEFAULT_RANDOM_COUNT, "seed": seed}
            else:
                rnd["seed"] = seed
        if tolerances:
            data["tolerances"] = {**data["tolerances"], **tolerances}
        if suites:
            data["suites"] = list(suites)
        return load_manifest_data(data)


def _check_expression(text: str, m: int, where: str):
    try:
        parse_expression(text, m)
    except (ExpressionSyntaxError, UnknownIdentifierError) as exc:
        raise ValueError(f"{where}: {exc}") from None


def _ranges(spec, m: int, where: str) -> list[tuple[float, float]]:
    if spec is None:
        out = [DEFAULT_RANGE] * m
    elif isinstance(spec, tuple):
        out = [spec] * m
    else:
        if len(spec) != m:
            raise ValueError(f"{where}: expected {m} ranges, got {len(spec)}")
        out = list(spec)
    for lo, hi in out:
        if not lo < hi:
            raise ValueError(f"{where}: empty range [{lo}, {hi}]")
    return out


def _format_validation(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        msg = err["msg"].removeprefix("Value error, ")
        path = ".".join(str(p) for p in err["loc"])
        # whole-manifest checks already lead with the offending field
        lines.append(f"{path}: {msg}" if path else msg)
    return "invalid manifest:\n  " + "\n  ".join(lines)


def load_manifest_data(data) -> Manifest:
    try:
        return Manifest.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_validation(exc)) from None


def parse_manifest(path) -> Manifest:
    """Read and validate a manifest file (ConfigError on any problem)."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read manifest {path}: {exc.strerror or exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"manifest {path} is not valid JSON: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return load_manifest_data(data)
