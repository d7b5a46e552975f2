"""Measurable subsets of the domain and their geometric functionals.

Two perimeter estimators coexist: an edge-counting one (exact for the
anisotropic lattice functional, used inside discrete searches) and a
smoothed total-variation one (approximates the isotropic perimeter, used
for comparisons against analytic values).  Relative-perimeter semantics
throughout: faces on the domain boundary are free.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .grid import DomainGrid, ScalarField, integrate
from .energy import diffuse_energy, check_resolution
from .field_ops import _axis_derivative
from .potential import DoubleWell, interface_constant, optimal_profile

SMOOTH_SIGMA_CELLS = 2.0


class GeometryError(ValueError):
    pass


class IndicatorSet:
    """Boolean membership per cell with cached volume and edge perimeter."""

    __slots__ = ("grid", "membership", "_volume", "_perimeter_l1")

    def __init__(self, grid: DomainGrid, membership: np.ndarray):
        membership = np.asarray(membership, dtype=bool)
        if membership.shape != grid.shape:
            raise GeometryError("membership shape does not match grid")
        self.grid = grid
        self.membership = membership
        self._volume = None
        self._perimeter_l1 = None

    @property
    def volume(self) -> float:
        if self._volume is None:
            self._volume = float(self.membership.sum()) * self.grid.cell_volume
        return self._volume

    @property
    def perimeter_l1(self) -> float:
        if self._perimeter_l1 is None:
            self._perimeter_l1 = _edge_perimeter(self.membership, self.grid)
        return self._perimeter_l1

    def complement(self) -> "IndicatorSet":
        return IndicatorSet(self.grid, ~self.membership)


def _edge_perimeter(member: np.ndarray, grid: DomainGrid) -> float:
    if grid.dim == 1:
        return float(np.count_nonzero(member[1:] != member[:-1]))
    h1, h2 = grid.spacing
    px = np.count_nonzero(member[1:, :] != member[:-1, :]) * h2
    py = np.count_nonzero(member[:, 1:] != member[:, :-1]) * h1
    return float(px + py)


def alpha(E1: IndicatorSet, E2: IndicatorSet) -> float:
    """min of the two one-sided symmetric-difference volumes."""
    if E1.grid != E2.grid:
        raise GeometryError("alpha requires sets on the same grid")
    vol = E1.grid.cell_volume
    only1 = np.count_nonzero(E1.membership & ~E2.membership)
    only2 = np.count_nonzero(E2.membership & ~E1.membership)
    return min(only1, only2) * vol


def smoothed_indicator(E: IndicatorSet, sigma_cells: float = SMOOTH_SIGMA_CELLS):
    return ndimage.gaussian_filter(
        E.membership.astype(float), sigma=sigma_cells, mode="reflect"
    )


def total_variation(values: np.ndarray, grid: DomainGrid) -> float:
    gsq = np.zeros_like(values)
    for axis, h in enumerate(grid.spacing):
        gsq += _axis_derivative(values, axis, h) ** 2
    return float(np.sqrt(gsq).sum() * grid.cell_volume)


def perimeter(E: IndicatorSet, estimator: str = "smoothed",
              sigma_cells: float = SMOOTH_SIGMA_CELLS) -> float:
    """Relative perimeter of E in the domain."""
    if estimator == "l1":
        return E.perimeter_l1
    if estimator == "smoothed":
        if E.grid.dim == 1:
            return E.perimeter_l1  # the two estimators coincide in 1D
        return total_variation(smoothed_indicator(E, sigma_cells), E.grid)
    raise GeometryError(f"unknown perimeter estimator {estimator!r}")


# ---------------------------------------------------------------------------
# analytic shapes


@dataclass(frozen=True)
class AnalyticShape:
    """Closed-form set with exact volume, relative perimeter and curvature."""

    kind: str
    dim: int
    extents: tuple
    exact_volume: float
    exact_perimeter: float
    curvature: float
    params: tuple = ()

    def signed_distance(self, *coords):
        """Positive outside the set, negative inside."""
        raise NotImplementedError

    def rasterize(self, grid: DomainGrid) -> IndicatorSet:
        if tuple(grid.extents) != tuple(self.extents):
            raise GeometryError("shape extents do not match grid extents")
        sd = self.signed_distance(*grid.meshgrid())
        return IndicatorSet(grid, np.asarray(sd) < 0.0)

    def boundary_polyline(self, n_vertices: int):
        raise NotImplementedError(f"no boundary parametrization for {self.kind}")


@dataclass(frozen=True)
class Stripe(AnalyticShape):
    position: float = 0.5
    axis: int = 0

    def signed_distance(self, *coords):
        return coords[self.axis] - self.position

    def boundary_polyline(self, n_vertices: int):
        other = 1 - self.axis
        span = np.linspace(0.0, self.extents[other], n_vertices)
        pts = np.empty((n_vertices, 2))
        pts[:, self.axis] = self.position
        pts[:, other] = span
        return pts, False  # open polyline


@dataclass(frozen=True)
class Ball(AnalyticShape):
    center: tuple = (0.5, 0.5)
    radius: float = 0.25

    def signed_distance(self, *coords):
        r2 = sum((c - c0) ** 2 for c, c0 in zip(coords, self.center))
        return np.sqrt(r2) - self.radius

    def boundary_polyline(self, n_vertices: int):
        th = np.linspace(0.0, 2.0 * np.pi, n_vertices, endpoint=False)
        pts = np.column_stack(
            [self.center[0] + self.radius * np.cos(th),
             self.center[1] + self.radius * np.sin(th)]
        )
        return pts, True  # closed polygon

    def clearance(self) -> float:
        gaps = [min(c, L - c) for c, L in zip(self.center, self.extents)]
        return min(gaps) - self.radius


@dataclass(frozen=True)
class QuarterDisk(AnalyticShape):
    corner: tuple = (0.0, 0.0)
    radius: float = 0.25

    def signed_distance(self, *coords):
        r2 = sum((c - c0) ** 2 for c, c0 in zip(coords, self.corner))
        return np.sqrt(r2) - self.radius


@dataclass(frozen=True)
class CustomShape(AnalyticShape):
    """Set given by a user signed-distance function (positive outside)."""

    sdf: callable = None

    def signed_distance(self, *coords):
        return self.sdf(*coords)


def stripe(position: float, axis: int = 0, extents=(1.0, 1.0), dim: int = 2) -> Stripe:
    extents = tuple(float(e) for e in (extents if dim == 2 else (extents if not np.isscalar(extents) else (extents,))))
    if dim == 1:
        if not 0 < position < extents[0]:
            raise GeometryError("stripe position must be interior")
        return Stripe(kind="stripe", dim=1, extents=extents,
                      exact_volume=position, exact_perimeter=1.0, curvature=0.0,
                      position=position, axis=0)
    if not 0 < position < extents[axis]:
        raise GeometryError("stripe position must be interior")
    other = 1 - axis
    return Stripe(kind="stripe", dim=2, extents=extents,
                  exact_volume=position * extents[other],
                  exact_perimeter=extents[other], curvature=0.0,
                  position=position, axis=axis)


def ball(center, radius: float, extents=(1.0, 1.0)) -> Ball:
    center = tuple(float(c) for c in center)
    extents = tuple(float(e) for e in extents)
    gaps = [min(c, L - c) for c, L in zip(center, extents)]
    if min(gaps) <= radius:
        raise GeometryError("ball must be compactly contained in the domain")
    return Ball(kind="ball", dim=2, extents=extents,
                exact_volume=np.pi * radius ** 2,
                exact_perimeter=2.0 * np.pi * radius,
                curvature=1.0 / radius, center=center, radius=radius)


def quarter_disk(corner, radius: float, extents=(1.0, 1.0)) -> QuarterDisk:
    corner = tuple(float(c) for c in corner)
    extents = tuple(float(e) for e in extents)
    if radius >= min(extents):
        raise GeometryError("quarter disk radius exceeds the domain")
    return QuarterDisk(kind="quarter_disk", dim=2, extents=extents,
                       exact_volume=np.pi * radius ** 2 / 4.0,
                       exact_perimeter=np.pi * radius / 2.0,
                       curvature=1.0 / radius, corner=corner, radius=radius)


def custom_shape(sdf, volume: float, perimeter_value: float,
                 curvature: float = np.nan, extents=(1.0, 1.0),
                 dim: int = 2) -> CustomShape:
    """Wrap a signed-distance callable with its known measurements."""
    return CustomShape(kind="custom_signed_distance", dim=dim,
                       extents=tuple(float(e) for e in extents),
                       exact_volume=float(volume),
                       exact_perimeter=float(perimeter_value),
                       curvature=float(curvature), sdf=sdf)


def shape_from_mask(E: IndicatorSet) -> CustomShape:
    """Shape backed by the first-order signed distance of a raster set.

    Volume and perimeter come from the raster (smoothed estimator); the
    distance is nearest-cell interpolated, so downstream profiles are
    first-order accurate, which the eps-width preparation tolerates.
    """
    grid = E.grid
    sd = raster_signed_distance(E)
    axes = grid.axes()

    def sdf(*coords):
        idx = []
        for c, ax, h in zip(coords, axes, grid.spacing):
            j = np.clip(np.round((np.asarray(c) - ax[0]) / h).astype(int),
                        0, len(ax) - 1)
            idx.append(j)
        return sd[tuple(idx)]

    return CustomShape(kind="custom_signed_distance", dim=grid.dim,
                       extents=grid.extents, exact_volume=E.volume,
                       exact_perimeter=perimeter(E, "smoothed"),
                       curvature=np.nan, sdf=sdf)


def raster_signed_distance(E: IndicatorSet) -> np.ndarray:
    """First-order signed distance from cell membership (positive outside)."""
    sampling = E.grid.spacing
    inside = E.membership
    half = 0.5 * min(sampling)
    d_out = ndimage.distance_transform_edt(~inside, sampling=sampling)
    d_in = ndimage.distance_transform_edt(inside, sampling=sampling)
    return np.where(inside, -(d_in - half), d_out - half)


def sharp_interface_field(E, grid: DomainGrid = None) -> ScalarField:
    """-1 on the set, +1 off it; mass = 1 - 2*volume."""
    if isinstance(E, AnalyticShape):
        if grid is None:
            raise GeometryError("rasterizing an analytic shape needs a grid")
        E = E.rasterize(grid)
    return ScalarField(E.grid, np.where(E.membership, -1.0, 1.0))


# ---------------------------------------------------------------------------
# well-prepared diffuse data


@dataclass(frozen=True)
class PrepReport:
    eps: float
    theta: float
    mass_shift: float
    energy_total: float
    sharp_energy: float
    excess_constant: float  # achieved (G_eps - G_0)/eps
    tail_truncated: bool
    width_detune: float


def well_prepared_report(shape: AnalyticShape, eps: float, well: DoubleWell,
                         grid: DomainGrid, theta: float = 1.0,
                         excess_constant: float = None):
    """Diffuse data for a shape: optimal profile across the signed distance,
    mean-corrected by a uniform shift so the mass matches the sharp field
    exactly.

    With excess_constant = K the profile width is detuned so the prepared
    energy exceeds the sharp-interface value by ~K*eps, giving a data
    family with a controlled linear excess (the default K = None keeps the
    optimal width; a flat interface then has o(eps) excess).
    """
    check_resolution(grid, eps)
    tail_truncated = False
    if isinstance(shape, (Ball, QuarterDisk)):
        clear = shape.clearance() if isinstance(shape, Ball) else shape.radius
        if clear < 3.0 * eps:
            raise GeometryError(
                f"interface clearance {clear:.3f} below 3*eps = {3 * eps:.3f}"
            )
        if clear < 6.0 * eps:
            tail_truncated = True
    profile = optimal_profile(well, eps, theta)
    detune = 1.0
    if excess_constant is not None:
        cw = interface_constant(well)
        base = shape.exact_perimeter * np.sqrt(theta) * cw
        detune = 1.0 + np.sqrt(excess_constant * eps / base)
    sd = shape.signed_distance(*grid.meshgrid())
    raw = profile(np.asarray(sd) / detune)
    target_mass = 1.0 - 2.0 * shape.exact_volume
    u = ScalarField(grid, raw)
    shift = target_mass - integrate(u)
    u = ScalarField(grid, raw + shift)
    report_energy = diffuse_energy(u, eps, well, theta)
    sharp = 2.0 * np.sqrt(theta) * interface_constant(well) * shape.exact_perimeter
    return u, PrepReport(
        eps=eps,
        theta=theta,
        mass_shift=shift,
        energy_total=report_energy.total,
        sharp_energy=sharp,
        excess_constant=(report_energy.total - sharp) / eps,
        tail_truncated=tail_truncated,
        width_detune=detune,
    )


def well_prepared(shape, eps, well, grid, theta: float = 1.0,
                  excess_constant: float = None) -> ScalarField:
    u, _ = well_prepared_report(shape, eps, well, grid, theta, excess_constant)
    return u


# ---------------------------------------------------------------------------
# first and second variation of perimeter on polygonal boundaries


def _polyline_length(pts: np.ndarray, closed: bool) -> float:
    seg = np.diff(pts, axis=0)
    total = float(np.sqrt((seg ** 2).sum(axis=1)).sum())
    if closed:
        total += float(np.linalg.norm(pts[0] - pts[-1]))
    return total


def _segments(pts: np.ndarray, closed: bool):
    if closed:
        nxt = np.roll(pts, -1, axis=0)
    else:
        nxt = pts[1:]
        pts = pts[:-1]
    mids = 0.5 * (pts + nxt)
    tang = nxt - pts
    lengths = np.sqrt((tang ** 2).sum(axis=1))
    tang = tang / lengths[:, None]
    normals = np.column_stack([tang[:, 1], -tang[:, 0]])
    return mids, normals, lengths


@dataclass(frozen=True)
class VariationReport:
    t_values: tuple
    finite_difference: tuple
    boundary_integral: float
    discrepancy: tuple


def first_variation_check(shape: AnalyticShape, T, grad_T, t_values,
                          n_vertices: int = 1024) -> VariationReport:
    """Centered difference of perimeter under x -> x + t*T against the
    boundary-divergence quadrature sum of (div T - nu . (grad T) nu)."""
    if n_vertices < 512:
        raise GeometryError("boundary parametrization needs >= 512 vertices")
    pts, closed = shape.boundary_polyline(n_vertices)

    def deformed_length(t):
        disp = np.asarray([T(p) for p in pts], dtype=float)
        return _polyline_length(pts + t * disp, closed)

    mids, normals, lengths = _segments(pts, closed)
    target = 0.0
    for m, nu, ell in zip(mids, normals, lengths):
        J = np.asarray(grad_T(m), dtype=float)
        div_e = np.trace(J) - nu @ (J @ nu)
        target += div_e * ell
    fds = []
    for t in t_values:
        fds.append((deformed_length(t) - deformed_length(-t)) / (2.0 * t))
    return VariationReport(
        t_values=tuple(float(t) for t in t_values),
        finite_difference=tuple(fds),
        boundary_integral=float(target),
        discrepancy=tuple(fd - target for fd in fds),
    )


@dataclass(frozen=True)
class SecondVariationReport:
    t_values: tuple
    second_difference: tuple
    boundary_integral: float
    curvature_term: float
    discrepancy: tuple


def second_variation_check(shape: Ball, zeta, t_values,
                           n_vertices: int = 2048) -> SecondVariationReport:
    """Normal perturbation x -> x + t*zeta*N of a polygonal circle.

    In the plane the single principal curvature makes the curvature term
    kappa^2 - |A|^2 vanish, so the target is the tangential Dirichlet
    energy of zeta alone.
    """
    if not isinstance(shape, Ball):
        raise GeometryError("second variation check is implemented for balls")
    th = np.linspace(0.0, 2.0 * np.pi, n_vertices, endpoint=False)
    rho = shape.radius
    normals = np.column_stack([np.cos(th), np.sin(th)])
    base = np.asarray(shape.center)[None, :] + rho * normals
    z = np.asarray(zeta(th), dtype=float)

    def length(t):
        return _polyline_length(base + t * z[:, None] * normals, True)

    p0 = length(0.0)
    second = [(length(t) - 2.0 * p0 + length(-t)) / t ** 2 for t in t_values]
    dth = th[1] - th[0]
    dz_ds = (np.roll(z, -1) - np.roll(z, 1)) / (2.0 * dth * rho)
    dirichlet = float(np.sum(dz_ds ** 2) * rho * dth)
    curv_term = 0.0  # kappa^2 - |A|^2 = 0 for a plane curve
    target = dirichlet + curv_term
    return SecondVariationReport(
        t_values=tuple(float(t) for t in t_values),
        second_difference=tuple(second),
        boundary_integral=target,
        curvature_term=curv_term,
        discrepancy=tuple(s - target for s in second),
    )
