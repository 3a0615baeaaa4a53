"""Experiment configuration: strict JSON schema and builders for the solver objects."""

from pathlib import Path
from typing import Literal

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    model_validator,
)

from rschwarz.core.context.context import SchwarzContext, build_context
from rschwarz.core.decomp import (
    DirichletData,
    Layout,
    affine_boundary,
    build_layout,
    load_boundary,
    sine_boundary,
)
from rschwarz.core.errors import ConfigError, ParseError
from rschwarz.core.grid import (
    GridSpec,
    MediaField,
    build_grid,
    builtin_media,
    constant_media,
    load_raster,
)
from rschwarz.core.lowrank import RSVDConfig

_STRICT = ConfigDict(frozen=True, extra="forbid")


class GridConfig(BaseModel):
    model_config = _STRICT

    lx: float = Field(default=10.0, gt=0, description="Domain width")
    ly: float = Field(default=1.0, gt=0, description="Domain height")
    h: float = Field(default=1.0 / 40.0, gt=0, description="Grid spacing")


class MediaConfig(BaseModel):
    model_config = _STRICT

    kind: Literal["builtin", "raster", "constant"] = "builtin"
    epsilon: float = Field(default=1.0 / 16.0, gt=0, description="Small scale of the builtin media")
    raster_path: Path | None = Field(default=None, description="RASTER file, relative to the config")
    value: float | None = Field(default=None, description="Value of a constant media")

    @model_validator(mode="after")
    def _kind_fields(self):
        if self.kind == "raster" and self.raster_path is None:
            raise ValueError("raster media needs raster_path")
        if self.kind == "constant" and self.value is None:
            raise ValueError("constant media needs value")
        return self


class LayoutConfig(BaseModel):
    model_config = _STRICT

    n_patches: int = Field(default=13, ge=1)
    patch_width: float = Field(default=1.0, gt=0)
    stride: float | None = Field(default=0.75, gt=0)


class BoundaryConfig(BaseModel):
    model_config = _STRICT

    kind: Literal["sine", "file", "affine"] = "sine"
    file: Path | None = Field(default=None, description="BND file, relative to the config")
    coefficients: tuple[float, float, float] = Field(
        default=(0.0, 0.0, 0.0), description="c0, cx, cy of b = c0 + cx x + cy y"
    )

    @model_validator(mode="after")
    def _kind_fields(self):
        if self.kind == "file" and self.file is None:
            raise ValueError("file boundary needs file")
        return self


class RunConfig(BaseModel):
    model_config = _STRICT

    method: Literal["vanilla", "reduced", "global"] = "reduced"
    T: int = Field(default=50, ge=0, description="Schwarz iterations")
    track_history: bool = Field(default=False, description="Record the error of every iteration")
    reference_T: int = Field(default=100, ge=0, description="Iterations of the vanilla reference")


class ExperimentConfig(BaseModel):
    """One experiment. Geometry is checked for conformity at validation time."""

    model_config = _STRICT

    grid: GridConfig = Field(default_factory=GridConfig)
    media: MediaConfig = Field(default_factory=MediaConfig)
    layout: LayoutConfig = Field(default_factory=LayoutConfig)
    boundary: BoundaryConfig = Field(default_factory=BoundaryConfig)
    rsvd: RSVDConfig = Field(default_factory=RSVDConfig)
    run: RunConfig = Field(default_factory=RunConfig)

    @model_validator(mode="after")
    def _conformity(self):
        grid = build_grid(self.grid.lx, self.grid.ly, self.grid.h)
        layout = build_layout(
            grid, self.layout.n_patches, self.layout.patch_width, self.layout.stride
        )
        n_boundary = 2 * (layout.width_cols + grid.ny - 1)
        if self.rsvd.samples > n_boundary:
            raise ValueError(
                f"rsvd.k + rsvd.p = {self.rsvd.samples} exceeds the {n_boundary} "
                "boundary nodes of a patch"
            )
        return self

    @classmethod
    def benchmark(cls) -> "ExperimentConfig":
        """Strip [0, 10] x [0, 1], h = 1/40, 13 unit patches with stride 3/4."""
        return cls()

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        """Parse a JSON config; relative file paths resolve against its directory.

        Raises:
            ConfigError: With one `dotted.path: message` line per problem.
        """
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as e:
            raise ParseError(f"cannot read config {path}: {e}") from e
        try:
            config = cls.model_validate_json(text)
        except ValidationError as e:
            raise ConfigError(describe_validation_error(e)) from e
        return config.resolve_paths(path.parent)

    def resolve_paths(self, base: Path) -> "ExperimentConfig":
        media, boundary = self.media, self.boundary
        if media.raster_path is not None and not media.raster_path.is_absolute():
            media = media.model_copy(update={"raster_path": base / media.raster_path})
        if boundary.file is not None and not boundary.file.is_absolute():
            boundary = boundary.model_copy(update={"file": base / boundary.file})
        return self.model_copy(update={"media": media, "boundary": boundary})

    def build_grid(self) -> GridSpec:
        return build_grid(self.grid.lx, self.grid.ly, self.grid.h)

    def build_media(self, grid: GridSpec) -> MediaField:
        if self.media.kind == "builtin":
            return builtin_media(grid, self.media.epsilon)
        if self.media.kind == "constant":
            return constant_media(self.media.value, grid)
        return load_raster(self.media.raster_path)

    def build_layout(self, grid: GridSpec) -> Layout:
        return build_layout(
            grid, self.layout.n_patches, self.layout.patch_width, self.layout.stride
        )

    def build_boundary(self, grid: GridSpec, override: Path | None = None) -> DirichletData:
        if override is not None:
            return load_boundary(override, grid)
        if self.boundary.kind == "sine":
            return sine_boundary(grid)
        if self.boundary.kind == "affine":
            return affine_boundary(grid, *self.boundary.coefficients)
        return load_boundary(self.boundary.file, grid)

    def build_context(
        self, boundary_override: Path | None = None, max_workers: int | None = None
    ) -> SchwarzContext:
        grid = self.build_grid()
        return build_context(
            grid,
            self.build_media(grid),
            self.build_layout(grid),
            self.build_boundary(grid, boundary_override),
            max_workers=max_workers,
        )


def describe_validation_error(error: ValidationError) -> str:
    """One `dotted.path: message` line per validation problem."""
    lines = []
    for item in error.errors():
        where = ".".join(str(part) for part in item["loc"]) or "config"
        lines.append(f"{where}: {item['msg']}")
    return "\n".join(lines)

