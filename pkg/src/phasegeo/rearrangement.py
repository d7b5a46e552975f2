"""Dimension reduction by weighted monotone rearrangement.

A sampled isoperimetric profile is minorized by a C^1 function of the
form c * min(r, 1-r)^((n-1)/n), spliced to touch the profile at the
reference volume.  The minorant drives the weight ODE V' = I*(V),
V(0) = 1/2, whose solution maps the domain onto a finite interval
(-S1, S2) carrying the weight eta = I* o V.  The increasing
rearrangement of a field with respect to that weight turns n-dimensional
energy bounds into weighted 1D ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dfield

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator

from .field_ops import grad_sq
from .grid import ScalarField, integrate
from .isoperimetry import IsoProfile
from .potential import DoubleWell

LATTICE_POINTS = 1000


class MinorantError(ValueError):
    pass


def _min_form(r, n):
    r = np.asarray(r, dtype=float)
    p = (n - 1) / n
    return np.minimum(r, 1.0 - r) ** p


def _min_form_slope(r, n):
    p = (n - 1) / n
    if r <= 0.5:
        return p * r ** (p - 1.0)
    return -p * (1.0 - r) ** (p - 1.0)


def _hermite(x, x0, x1, y0, y1, d0, d1):
    h = x1 - x0
    t = (x - x0) / h
    h00 = (1 + 2 * t) * (1 - t) ** 2
    h10 = t * (1 - t) ** 2
    h01 = t * t * (3 - 2 * t)
    h11 = t * t * (t - 1)
    return h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1


@dataclass
class Minorant:
    """C^1 lower envelope of a profile, touching it at r0."""

    r0: float
    touch_value: float
    c_far: float
    n: int
    blend_halfwidth: float
    touch_slope: float
    lower_bound_c: float
    holder_tag: str = "C1"
    blended: bool = False

    def i_star(self, r):
        r = np.asarray(r, dtype=float)
        base = self.c_far * _min_form(r, self.n)
        if not self.blended:
            return np.where((r <= 0.0) | (r >= 1.0), 0.0, base)
        w = self.blend_halfwidth
        out = np.array(base, dtype=float, copy=True)
        left = (r >= self.r0 - w) & (r < self.r0)
        right = (r >= self.r0) & (r <= self.r0 + w)
        if np.any(left):
            x0 = self.r0 - w
            out[left] = _hermite(r[left], x0, self.r0,
                                 self.c_far * float(_min_form(x0, self.n)),
                                 self.touch_value,
                                 self.c_far * _min_form_slope(x0, self.n),
                                 self.touch_slope)
        if np.any(right):
            x1 = self.r0 + w
            out[right] = _hermite(r[right], self.r0, x1,
                                  self.touch_value,
                                  self.c_far * float(_min_form(x1, self.n)),
                                  self.touch_slope,
                                  self.c_far * _min_form_slope(x1, self.n))
        return np.where((r <= 0.0) | (r >= 1.0), 0.0, out)

    @classmethod
    def from_callable(cls, fn, n=2):
        """Wrap an arbitrary positive function as a weight source (tests)."""
        m = cls(r0=0.5, touch_value=float(fn(0.5)), c_far=1.0, n=n,
                blend_halfwidth=0.0, touch_slope=0.0, lower_bound_c=np.nan,
                holder_tag="custom")
        m.i_star = lambda r: np.where(
            (np.asarray(r, dtype=float) <= 0) | (np.asarray(r, dtype=float) >= 1),
            0.0, fn(np.asarray(r, dtype=float)))
        return m


def build_minorant(profile: IsoProfile, r0: float) -> Minorant:
    """Largest min-form below the profile, Hermite-spliced to touch at r0.

    The splice matches the profile's slope at r0 (a zero-slope bump would
    overshoot on the downhill side).  All three defining properties are
    re-verified on a fixed lattice, shrinking the splice window on failure.
    """
    n = profile.n
    lat = np.linspace(profile.r[0], profile.r[-1], LATTICE_POINTS)
    itp = profile.interpolator()
    prof_lat = itp(lat)
    if np.any(prof_lat <= 0):
        raise MinorantError("profile vanishes on the lattice")
    ratios = prof_lat / _min_form(lat, n)
    c_far = float(np.min(ratios))
    if c_far <= 0:
        raise MinorantError("no positive minorant constant exists")
    touch = profile.value_at(r0)
    gap = touch - c_far * float(_min_form(r0, n))
    if gap <= 1e-12:
        m = Minorant(r0=r0, touch_value=touch,
                     c_far=touch / float(_min_form(r0, n)), n=n,
                     blend_halfwidth=0.0, touch_slope=_min_form_slope(r0, n),
                     lower_bound_c=np.nan, blended=False)
        m.lower_bound_c = _verify(m, lat, prof_lat, r0, touch)
        return m
    if profile.derivative is not None:
        slope = float(profile.derivative(r0))
    else:
        h = (profile.r[-1] - profile.r[0]) / 50.0
        slope = float((itp(min(r0 + h, lat[-1])) - itp(max(r0 - h, lat[0])))
                      / (min(r0 + h, lat[-1]) - max(r0 - h, lat[0])))
    width = 0.01
    last_err = None
    for _ in range(7):
        m = Minorant(r0=r0, touch_value=touch, c_far=c_far, n=n,
                     blend_halfwidth=width, touch_slope=slope,
                     lower_bound_c=np.nan, blended=True)
        try:
            m.lower_bound_c = _verify(m, lat, prof_lat, r0, touch)
            return m
        except MinorantError as err:
            last_err = err
            width *= 0.5
    raise MinorantError(f"no admissible splice window: {last_err}")


def _verify(m: Minorant, lat, prof_lat, r0, touch):
    vals = m.i_star(lat)
    if abs(float(m.i_star(np.array([r0]))[0]) - touch) > 1e-8:
        raise MinorantError("minorant does not touch the profile at r0")
    if np.any(vals < 0):
        raise MinorantError("minorant goes negative")
    if np.any(vals > prof_lat + 1e-10):
        raise MinorantError("minorant exceeds the profile")
    lb = vals / _min_form(lat, m.n)
    c = float(np.min(lb))
    if c <= 0:
        raise MinorantError("minorant loses the sublinear lower bound")
    return c


# ---------------------------------------------------------------------------
# weight ODE


@dataclass
class WeightData:
    s: np.ndarray       # midpoint lattice on (-S1, S2)
    ds: float
    V: np.ndarray
    eta: np.ndarray
    S1: float
    S2: float
    minorant: Minorant

    def V_of(self, s):
        return np.interp(s, self.s, self.V, left=0.0, right=1.0)


def solve_weight(minorant: Minorant, n_s: int = 2048, n_table: int = 1200) -> WeightData:
    """Integrate V' = I*(V), V(0) = 1/2 to both exits.

    Implemented as adaptive quadrature of s(V) = int_{1/2}^{V} dv / I*(v)
    with square-root substitutions absorbing the integrable endpoint
    degeneracy, then inverted monotonically.
    """
    i_star = minorant.i_star

    def left_integrand(w):
        w = max(float(w), 1e-7)  # 0/0 at the exit; the limit is finite
        return 2.0 * w / i_star(np.array([w * w]))[0]

    def right_integrand(w):
        w = max(float(w), 1e-7)  # keep 1 - w^2 strictly below 1
        return 2.0 * w / i_star(np.array([1.0 - w * w]))[0]

    wmax = np.sqrt(0.5)
    S1, err1 = quad(left_integrand, 0.0, wmax, limit=200)
    S2, err2 = quad(right_integrand, 0.0, wmax, limit=200)
    if err1 > 1e-8 or err2 > 1e-8:
        raise MinorantError("weight ODE quadrature did not converge")
    # graded tables in w-space (smooth integrands), then invert s -> V
    w = np.linspace(0.0, wmax, n_table)
    v_left = w ** 2
    f = np.array([left_integrand(x) for x in w])
    s_left = _cumtrapz(f, w) - S1  # s(0) = -S1, s(1/2) = 0
    v_right = 1.0 - w ** 2
    g = np.array([right_integrand(x) for x in w])
    s_right = S2 - _cumtrapz(g, w)  # s(1) = S2 descending to s(1/2) = 0
    v_tab = np.concatenate([v_left, v_right[::-1][1:]])
    s_tab = np.concatenate([s_left, s_right[::-1][1:]])
    order = np.argsort(s_tab)
    s_tab, v_tab = s_tab[order], np.clip(v_tab[order], 0.0, 1.0)
    s_tab, keep = np.unique(s_tab, return_index=True)
    v_tab = v_tab[keep]
    v_interp = PchipInterpolator(s_tab, np.maximum.accumulate(v_tab))
    ds = (S1 + S2) / n_s
    s_mid = -S1 + (np.arange(n_s) + 0.5) * ds
    V = np.clip(v_interp(s_mid), 0.0, 1.0)
    eta = i_star(V)
    return WeightData(s=s_mid, ds=ds, V=V, eta=eta, S1=float(S1), S2=float(S2),
                      minorant=minorant)


def _cumtrapz(y, x):
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x))
    return out


# ---------------------------------------------------------------------------
# increasing rearrangement


@dataclass
class RearrangementData:
    s: np.ndarray
    ds: float
    V: np.ndarray
    eta: np.ndarray
    f: np.ndarray
    sorted_values: np.ndarray

    def rho(self, z):
        """Measure of the strict sublevel set {u < z}."""
        z = np.asarray(z, dtype=float)
        return np.searchsorted(self.sorted_values, z, side="left") \
            / self.sorted_values.size


def rearrange(u: ScalarField, weight: WeightData, interpolate: bool = True,
              jump_fraction: float = 0.1) -> RearrangementData:
    """Increasing rearrangement f_u(s) = sup{z : rho(z) < V(s)}.

    The default interpolates the quantile map through the midpoint rank of
    each run of equal values: a field constant along one grid axis
    otherwise yields a sub-lattice staircase whose one-sided derivative
    overestimates the weighted Dirichlet integral by the duplicity factor.
    Value gaps above jump_fraction of the total range are kept as genuine
    jumps (a two-valued field rearranges to the step at V = r0).
    interpolate=False gives the raw sup-definition lookup.
    """
    sorted_vals = np.sort(u.values.ravel(), kind="stable")
    n = sorted_vals.size
    if not interpolate:
        j = np.clip(np.ceil(weight.V * n).astype(int) - 1, 0, n - 1)
        f = sorted_vals[j]
        return RearrangementData(s=weight.s, ds=weight.ds, V=weight.V,
                                 eta=weight.eta, f=f, sorted_values=sorted_vals)
    distinct, start, counts = np.unique(sorted_vals, return_index=True,
                                        return_counts=True)
    mids = (start + 0.5 * counts) / n
    tol = jump_fraction * max(float(distinct[-1] - distinct[0]), 1e-300)
    xs = [mids[0]]
    ys = [distinct[0]]
    for k in range(len(distinct) - 1):
        if distinct[k + 1] - distinct[k] > tol:
            edge = (start[k + 1]) / n  # run boundary: keep the jump atomic
            xs.extend([edge - 0.5 / n, edge + 0.5 / n])
            ys.extend([distinct[k], distinct[k + 1]])
        xs.append(mids[k + 1])
        ys.append(distinct[k + 1])
    f = np.interp(weight.V, np.asarray(xs), np.asarray(ys))
    return RearrangementData(s=weight.s, ds=weight.ds, V=weight.V,
                             eta=weight.eta, f=f, sorted_values=sorted_vals)


def _forward_diff(f, ds):
    df = np.empty_like(f)
    df[:-1] = np.diff(f) / ds
    df[-1] = df[-2]
    return df


def _secant_diff(f, ds, span):
    """Centered secant slopes over +-span cells.

    Slope averaging contracts the discrete Dirichlet integral of a
    monotone profile, so widening the span can only lower the weighted
    1D gradient term: the safe direction for every inequality that term
    enters.  span 1 recovers plain centered differences.
    """
    n = f.size
    idx = np.arange(n)
    hi = np.minimum(idx + span, n - 1)
    lo = np.maximum(idx - span, 0)
    return (f[hi] - f[lo]) / ((hi - lo) * ds)


def _default_span(n_s):
    return max(1, n_s // 256)


@dataclass(frozen=True)
class RearrangementBoundsReport:
    equal_integral_residual: float = np.nan
    contraction_slack: float = np.nan
    polya_szego_slack: float = np.nan
    polya_szego_applicable: bool = True


def check_rearrangement_bounds(u: ScalarField, weight: WeightData, psi=None,
                  w_field: ScalarField = None, p: float = None,
                  closeness=None, deriv_span: int = None) -> RearrangementBoundsReport:
    """Equal-integral identity, contraction, and gradient-domination battery.

    closeness = (u_ref, delta) gates the gradient branch for local-profile
    weights; with a global-profile weight pass closeness=None.
    """
    data = rearrange(u, weight)
    eq_res = np.nan
    if psi is not None:
        lhs = float(np.mean(psi(u.values)))
        rhs = float(np.sum(psi(data.f) * data.eta) * data.ds)
        scale = float(np.mean(np.abs(psi(u.values)))) + 1e-12
        eq_res = abs(lhs - rhs) / scale
    contraction = np.nan
    if w_field is not None:
        dw = rearrange(w_field, weight)
        lhs = float(np.mean(np.abs(u.values - w_field.values)))
        rhs = float(np.sum(np.abs(data.f - dw.f) * data.eta) * data.ds)
        contraction = lhs - rhs
    ps_slack = np.nan
    applicable = True
    if p is not None:
        if closeness is not None:
            ref, delta = closeness
            l1 = float(np.mean(np.abs(u.values - ref.values)))
            applicable = l1 <= 2.0 * delta + 1e-12
        gs = grad_sq(u).values
        lhs = float(np.mean(gs ** (p / 2.0)))
        span = deriv_span if deriv_span is not None else _default_span(data.f.size)
        fp = np.abs(_secant_diff(data.f, data.ds, span)) ** p
        rhs = float(np.sum(fp * data.eta) * data.ds)
        ps_slack = lhs - rhs
    return RearrangementBoundsReport(
        equal_integral_residual=eq_res,
        contraction_slack=contraction,
        polya_szego_slack=ps_slack,
        polya_szego_applicable=applicable,
    )


@dataclass(frozen=True)
class ProfileEnergyReport:
    value: float
    feasible: bool
    mean_residual: float
    non_sobolev: bool


def weighted_profile_energy(f, eps: float, well: DoubleWell, weight: WeightData,
          f_reference=None, theta: float = 1.0,
          deriv_span: int = None) -> ProfileEnergyReport:
    """Weighted midpoint quadrature of eps^-1 W(f) + theta*eps*(f')^2.

    f may be values on weight.s or a callable.  The admissibility
    constraint int (f - f_ref) eta ds = 0 is checked when a reference is
    supplied; violations are flagged, not fatal.  A jump filling a quarter
    of the well separation within one lattice cell marks the input as
    outside the weighted Sobolev class (its discrete value diverges as the
    lattice refines).
    """
    fv = np.asarray(f(weight.s) if callable(f) else f, dtype=float)
    if fv.shape != weight.s.shape:
        raise ValueError("f values must live on the weight lattice")
    span = deriv_span if deriv_span is not None else _default_span(fv.size)
    df = _secant_diff(fv, weight.ds, span)
    value = float(np.sum((well.w(fv) / eps + theta * eps * df ** 2)
                         * weight.eta) * weight.ds)
    feasible = True
    mean_res = np.nan
    if f_reference is not None:
        ref = np.asarray(f_reference(weight.s) if callable(f_reference)
                         else f_reference, dtype=float)
        mean_res = float(np.sum((fv - ref) * weight.eta) * weight.ds)
        feasible = abs(mean_res) <= 1e-6
    gap = abs(well.b - well.a)
    non_sobolev = bool(np.max(np.abs(np.diff(fv))) >= 0.25 * gap)
    return ProfileEnergyReport(value=value, feasible=feasible, mean_residual=mean_res,
                      non_sobolev=non_sobolev)
