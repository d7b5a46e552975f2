"""Cell-centered grids on unit-measure intervals and rectangles.

The domain is an interval or an axis-aligned rectangle whose Lebesgue
measure is normalized to 1.  All fields live at cell centers
((i+1/2)h1, (j+1/2)h2); quadrature is the midpoint rule, which is exact
for cellwise-constant integrands.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EXTENT_PRODUCT_TOL = 1e-9
MIN_RESOLUTION = 8


class GridError(ValueError):
    pass


class FieldError(ValueError):
    pass


def _as_tuple(x, dim, cast):
    if np.isscalar(x):
        seq = (x,)
    else:
        seq = tuple(x)
    if len(seq) != dim:
        raise GridError(f"expected {dim} entries, got {len(seq)}")
    return tuple(cast(v) for v in seq)


@dataclass(frozen=True)
class DomainGrid:
    """Immutable cell-centered grid; safe to share across tasks."""

    dim: int
    extents: tuple
    resolution: tuple
    rescaled: bool = False

    @property
    def spacing(self):
        return tuple(L / n for L, n in zip(self.extents, self.resolution))

    @property
    def max_spacing(self):
        return max(self.spacing)

    @property
    def cell_volume(self):
        v = 1.0
        for h in self.spacing:
            v *= h
        return v

    @property
    def n_cells(self):
        n = 1
        for r in self.resolution:
            n *= r
        return n

    @property
    def shape(self):
        return tuple(self.resolution)

    def axes(self):
        """Cell-center coordinates, one 1D array per axis."""
        return tuple(
            (np.arange(n) + 0.5) * h for n, h in zip(self.resolution, self.spacing)
        )

    def meshgrid(self):
        return np.meshgrid(*self.axes(), indexing="ij")

    def field(self, values) -> "ScalarField":
        return ScalarField(self, np.asarray(values, dtype=float))

    def constant_field(self, value) -> "ScalarField":
        return ScalarField(self, np.full(self.shape, float(value)))

    def field_from_function(self, fn) -> "ScalarField":
        """Sample fn at cell centers; fn takes one array per axis."""
        return ScalarField(self, np.asarray(fn(*self.meshgrid()), dtype=float))


class ScalarField:
    """Dimensionless order parameter sampled at cell centers."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: DomainGrid, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape:
            raise FieldError(
                f"value shape {values.shape} does not match grid {grid.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise FieldError("field contains non-finite values")
        self.grid = grid
        self.values = values

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())

    def __add__(self, other):
        if isinstance(other, ScalarField):
            return ScalarField(self.grid, self.values + other.values)
        return ScalarField(self.grid, self.values + other)

    def __sub__(self, other):
        if isinstance(other, ScalarField):
            return ScalarField(self.grid, self.values - other.values)
        return ScalarField(self.grid, self.values - other)

    def __mul__(self, scalar):
        return ScalarField(self.grid, self.values * scalar)

    __rmul__ = __mul__


def make_grid(dim, extents, resolution) -> DomainGrid:
    """Build a unit-measure grid; off-unit extents are rescaled with a flag."""
    dim = int(dim)
    if dim not in (1, 2):
        raise GridError(f"dim must be 1 or 2, got {dim}")
    ext = _as_tuple(extents, dim, float)
    res = _as_tuple(resolution, dim, int)
    if any(L <= 0 for L in ext):
        raise GridError(f"extents must be positive, got {ext}")
    if any(n < MIN_RESOLUTION for n in res):
        raise GridError(f"resolution must be >= {MIN_RESOLUTION} per axis, got {res}")
    prod = float(np.prod(ext))
    rescaled = False
    if abs(prod - 1.0) > EXTENT_PRODUCT_TOL:
        ext = tuple(L / prod ** (1.0 / dim) for L in ext)
        rescaled = True
    return DomainGrid(dim=dim, extents=ext, resolution=res, rescaled=rescaled)


def integrate(field: ScalarField) -> float:
    """Midpoint-rule integral over the domain."""
    return float(field.values.sum() * field.grid.cell_volume)


def mean(field: ScalarField) -> float:
    """Domain average; equals integrate() on unit-measure domains."""
    return float(field.values.mean())
