"""Double-well potentials, the interface cost constant, and transition profiles.

The canonical well is W(s) = (1/4)(s^2-1)^2 with wells at -1 and +1.
A well carries its first two derivatives and must pass a fixed battery of
shape checks (two nondegenerate zeros, a single interior maximum of W',
coercive growth) before the rest of the toolkit will accept it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.interpolate import PchipInterpolator

HYPOTHESIS_LATTICE = np.arange(-3.0, 3.0 + 1e-3, 1e-3)


class PotentialError(ValueError):
    pass


class NumericsError(RuntimeError):
    pass


@dataclass(frozen=True)
class DoubleWell:
    """Immutable potential; evaluators are pure and vectorized."""

    name: str
    a: float
    b: float
    c: float
    w: callable
    dw: callable
    d2w: callable

    def check_hypotheses(self):
        """Raise PotentialError unless the well has the required shape."""
        a, b, c = self.a, self.b, self.c
        s = HYPOTHESIS_LATTICE
        ws = self.w(s)
        if abs(self.w(a)) > 1e-12 or abs(self.w(b)) > 1e-12:
            raise PotentialError("W must vanish at both wells")
        interior = (np.abs(s - a) > 2e-3) & (np.abs(s - b) > 2e-3)
        if np.any(ws[interior] <= 0):
            raise PotentialError("W must be positive away from the wells")
        if not (self.d2w(a) > 0 and abs(self.d2w(a) - self.d2w(b)) <= 1e-10):
            raise PotentialError("W'' must be equal and positive at the wells")
        if not self.d2w(c) < 0:
            raise PotentialError("W'' must be negative at the interior critical point")
        dws = self.dw(s)
        signs = np.sign(dws)
        changes = np.count_nonzero(np.diff(signs[signs != 0]) != 0)
        if changes != 3:
            raise PotentialError(f"W' must change sign exactly 3 times, found {changes}")
        if not (abs(self.dw(10.0)) > abs(self.dw(2.0))
                and abs(self.dw(-10.0)) > abs(self.dw(-2.0))):
            raise PotentialError("W' must grow at infinity")
        return True


def _quartic_w(s):
    t = np.asarray(s, dtype=float)
    t = t * t - 1.0
    return 0.25 * t * t


def _quartic_dw(s):
    t = np.asarray(s, dtype=float)
    return t * (t * t - 1.0)


def _quartic_d2w(s):
    t = np.asarray(s, dtype=float)
    return 3.0 * t * t - 1.0


def quartic_well() -> DoubleWell:
    """W(s) = (1/4)(s^2-1)^2, W'(s) = s^3-s, W''(s) = 3s^2-1."""
    return DoubleWell(
        name="quartic", a=-1.0, b=1.0, c=0.0,
        w=_quartic_w, dw=_quartic_dw, d2w=_quartic_d2w,
    )


_REGISTRY = {"quartic": quartic_well}


def register_well(name, factory):
    _REGISTRY[name] = factory


def get_well(name: str) -> DoubleWell:
    try:
        well = _REGISTRY[name]()
    except KeyError:
        raise PotentialError(f"unknown potential {name!r}") from None
    well.check_hypotheses()
    return well


_CW_CACHE = {}


def interface_constant(well: DoubleWell) -> float:
    """c_W = int_a^b sqrt(W), by adaptive quadrature to 1e-8 absolute."""
    key = id(well.w), well.a, well.b
    if key in _CW_CACHE:
        return _CW_CACHE[key]
    val, abserr = quad(lambda s: np.sqrt(max(well.w(s), 0.0)), well.a, well.b,
                       epsabs=1e-10, limit=200)
    if abserr > 1e-8:
        raise NumericsError(f"interface constant quadrature error {abserr:.2e} > 1e-8")
    _CW_CACHE[key] = val
    return val


class OptimalProfile:
    """Monotone transition q with eps*theta^(1/2)*q' = sqrt(W(q)), q(0) = c.

    The per-interface cost of the profile under the theta-weighted energy
    is 2*sqrt(theta)*c_W.  For the quartic well the closed form
    q(t) = tanh(t / (2*sqrt(theta)*eps)) is used; other wells fall back to
    an adaptive ODE integration tabulated over the transition layer.
    """

    def __init__(self, well: DoubleWell, eps: float, theta: float = 1.0):
        if eps <= 0:
            raise PotentialError("eps must be positive")
        if theta <= 0:
            raise PotentialError("theta must be positive")
        self.well = well
        self.eps = float(eps)
        self.theta = float(theta)
        self.scale = 2.0 * np.sqrt(theta) * eps
        if well.name == "quartic":
            self.closed_form = True
            self._interp = None
        else:
            self.closed_form = False
            self._interp = self._tabulate()

    def _tabulate(self):
        well, eps, theta = self.well, self.eps, self.theta
        width = abs(well.b - well.a)

        def rhs(t, q):
            return np.sqrt(np.maximum(well.w(q), 0.0) / theta) / eps

        t_max = 40.0 * eps * max(np.sqrt(theta), 1.0)
        sols = []
        for sign in (1.0, -1.0):
            sol = solve_ivp(
                lambda t, q: sign * rhs(t, q),
                (0.0, t_max),
                [well.c],
                rtol=1e-10,
                atol=1e-12,
                dense_output=True,
                max_step=eps,
            )
            if not sol.success:
                raise NumericsError(f"profile ODE failed: {sol.message}")
            sols.append(sol)
        ts = np.linspace(-t_max, t_max, 4097)
        qs = np.where(ts >= 0, sols[0].sol(np.abs(ts))[0],
                      sols[1].sol(np.abs(ts))[0])
        qs = np.clip(qs, well.a, well.b)
        # enforce strict monotonicity for the interpolant
        qs = np.maximum.accumulate(qs)
        self._t_max = t_max
        return PchipInterpolator(ts, qs, extrapolate=False)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.closed_form:
            return np.tanh(t / self.scale)
        out = self._interp(np.clip(t, -self._t_max, self._t_max))
        return np.where(t >= 0, np.where(np.isnan(out), self.well.b, out),
                        np.where(np.isnan(out), self.well.a, out))

    def derivative(self, t):
        # exact along the profile: q' = sqrt(W(q)/theta)/eps
        q = self(t)
        return np.sqrt(np.maximum(self.well.w(q), 0.0) / self.theta) / self.eps


def optimal_profile(well: DoubleWell, eps: float, theta: float = 1.0) -> OptimalProfile:
    return OptimalProfile(well, eps, theta)
