"""Discrete Neumann operators, zero-mean Poisson solves, and the X2 norm.

The Laplacian is the standard 3/5-point stencil with mirror (even) ghost
cells, so the discrete divergence theorem holds exactly and the operator
is self-adjoint.  The Poisson solver inverts -Lap g = f on the zero-mean
subspace; conjugate gradients is the reference semantics, and a cosine
transform path inverts the identical stencil spectrally.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft

from .grid import DomainGrid, ScalarField, integrate

MEAN_TOL = 1e-8


class SolvabilityError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


def _neumann_eigenvalues(grid: DomainGrid):
    """Eigenvalues of -Lap for the mirror-ghost stencil, per DCT-II mode."""
    mus = []
    for n, h in zip(grid.resolution, grid.spacing):
        k = np.arange(n)
        mus.append((2.0 - 2.0 * np.cos(np.pi * k / n)) / h ** 2)
    if grid.dim == 1:
        return mus[0]
    return mus[0][:, None] + mus[1][None, :]


@dataclass
class OperatorWorkspace:
    """Single-owner solver state; use one per concurrent task."""

    grid: DomainGrid
    poisson_tol: float = 1e-10
    max_iterations: int = 20000
    method: str = "cg"  # reference semantics; "dct" inverts the same stencil
    _eigs: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if not (0 < self.poisson_tol <= 1e-6):
            raise ValueError("poisson tolerance must lie in (0, 1e-6]")
        if self.max_iterations < 100:
            raise ValueError("max iterations must be >= 100")
        if self.method not in ("cg", "dct"):
            raise ValueError(f"unknown poisson method {self.method!r}")

    @property
    def eigenvalues(self):
        if self._eigs is None:
            self._eigs = _neumann_eigenvalues(self.grid)
        return self._eigs


def lap_values(values: np.ndarray, grid: DomainGrid) -> np.ndarray:
    """Neumann Laplacian on raw arrays (mirror ghost cells)."""
    out = np.zeros_like(values)
    for axis, h in enumerate(grid.spacing):
        padded = np.concatenate(
            [values.take([0], axis=axis), values, values.take([-1], axis=axis)],
            axis=axis,
        )
        n = values.shape[axis]
        lo = padded.take(range(0, n), axis=axis)
        hi = padded.take(range(2, n + 2), axis=axis)
        out += (lo + hi - 2.0 * values) / h ** 2
    return out


def laplacian_neumann(u: ScalarField) -> ScalarField:
    return ScalarField(u.grid, lap_values(u.values, u.grid))


def _axis_derivative(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Centered differences; second-order one-sided rows at the boundary."""
    d = np.empty_like(values)
    n = values.shape[axis]
    sl = [slice(None)] * values.ndim

    def take(idx):
        sl2 = list(sl)
        sl2[axis] = idx
        return values[tuple(sl2)]

    inner = [slice(None)] * values.ndim
    inner[axis] = slice(1, n - 1)
    d[tuple(inner)] = (take(slice(2, n)) - take(slice(0, n - 2))) / (2.0 * h)
    first = [slice(None)] * values.ndim
    first[axis] = 0
    d[tuple(first)] = (-3.0 * take(0) + 4.0 * take(1) - take(2)) / (2.0 * h)
    last = [slice(None)] * values.ndim
    last[axis] = n - 1
    d[tuple(last)] = (3.0 * take(n - 1) - 4.0 * take(n - 2) + take(n - 3)) / (2.0 * h)
    return d


def grad_sq_values(values: np.ndarray, grid: DomainGrid) -> np.ndarray:
    out = np.zeros_like(values)
    for axis, h in enumerate(grid.spacing):
        out += _axis_derivative(values, axis, h) ** 2
    return out


def grad_sq(u: ScalarField) -> ScalarField:
    """Cellwise |grad u|^2; nonnegative by construction."""
    return ScalarField(u.grid, grad_sq_values(u.values, u.grid))


def dirichlet_form(values: np.ndarray, grid: DomainGrid) -> float:
    """Face-based sum of squared differences; exactly <-Lap u, u>."""
    total = 0.0
    vol = grid.cell_volume
    for axis, h in enumerate(grid.spacing):
        n = values.shape[axis]
        a = values.take(range(0, n - 1), axis=axis)
        b = values.take(range(1, n), axis=axis)
        total += float(np.sum((b - a) ** 2)) * vol / h ** 2
    return total


def _poisson_dct(f_vals: np.ndarray, ws: OperatorWorkspace) -> np.ndarray:
    coeff = sfft.dctn(f_vals, type=2, norm="ortho")
    mus = ws.eigenvalues
    flat = coeff.reshape(-1).copy()
    muf = np.asarray(mus, dtype=float).reshape(-1)
    flat[0] = 0.0
    flat[1:] = flat[1:] / muf[1:]
    return sfft.idctn(flat.reshape(coeff.shape), type=2, norm="ortho")


def _poisson_cg(f_vals: np.ndarray, ws: OperatorWorkspace) -> np.ndarray:
    grid = ws.grid
    b = f_vals - f_vals.mean()
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rs = float(np.sum(r * r))
    bnorm = np.sqrt(float(np.sum(b * b)))
    if bnorm == 0.0:
        return x
    tol2 = (ws.poisson_tol * bnorm) ** 2
    for _ in range(ws.max_iterations):
        ap = -lap_values(p, grid)
        alpha = rs / float(np.sum(p * ap))
        x += alpha * p
        r -= alpha * ap
        r -= r.mean()  # deflate the constant mode
        rs_new = float(np.sum(r * r))
        if rs_new <= tol2:
            return x - x.mean()
        p = r + (rs_new / rs) * p
        rs = rs_new
    raise ConvergenceError(
        f"poisson CG stalled: residual {np.sqrt(rs) / bnorm:.2e} after "
        f"{ws.max_iterations} iterations"
    )


def poisson_neumann_zero_mean(f: ScalarField, ws: OperatorWorkspace = None) -> ScalarField:
    """Solve -Lap g = f with zero-mean g; f must have zero mean."""
    if ws is None:
        ws = OperatorWorkspace(f.grid)
    if f.grid is not ws.grid and f.grid != ws.grid:
        raise ValueError("workspace grid does not match field grid")
    if abs(integrate(f)) > MEAN_TOL:
        raise SolvabilityError(
            f"poisson right-hand side has mean {integrate(f):.3e} (|mean| > {MEAN_TOL})"
        )
    if ws.method == "dct":
        g = _poisson_dct(f.values, ws)
    else:
        g = _poisson_cg(f.values, ws)
    g = g - g.mean()
    return ScalarField(f.grid, g)


def x2_inner(f1: ScalarField, f2: ScalarField, ws: OperatorWorkspace = None) -> float:
    """<f1, f2>_{X2} = int grad(g1).grad(g2) with -Lap g_i = f_i."""
    g1 = poisson_neumann_zero_mean(f1, ws)
    # <f2, g1> equals the Dirichlet pairing by discrete self-adjointness
    return float(np.sum(f2.values * g1.values)) * f1.grid.cell_volume


def x2_norm(f: ScalarField, ws: OperatorWorkspace = None) -> float:
    """H^{-1}-type norm; self-checked against the face-based Dirichlet form."""
    if ws is None:
        ws = OperatorWorkspace(f.grid)
    g = poisson_neumann_zero_mean(f, ws)
    pairing = float(np.sum(f.values * g.values)) * f.grid.cell_volume
    dirich = dirichlet_form(g.values, f.grid)
    scale = max(abs(pairing), abs(dirich), 1e-30)
    if abs(pairing - dirich) > 1e4 * ws.poisson_tol * scale + 1e-14:
        raise ConvergenceError(
            f"x2 self-check failed: <f,g>={pairing:.6e} vs |grad g|^2={dirich:.6e}"
        )
    return float(np.sqrt(max(pairing, 0.0)))


def x2_norm_of_values(vals: np.ndarray, grid: DomainGrid, ws: OperatorWorkspace = None):
    return x2_norm(ScalarField(grid, vals), ws)
