"""Initial-data profiles: the mollifier ramp, the log-singular slope profile
chi, the initial domain test and the compact cutoffs around the blow-up point.
"""

import copy
import math

import numpy as np
from scipy.special import expit

from .params import DomainError, ModelParams

# Nodes of the cumulative table for chi over [0, 1/2].
CHI_TABLE_NODES = 2 ** 14
_GL_ORDER = 12
_GL_T, _GL_W = np.polynomial.legendre.leggauss(_GL_ORDER)


class Profile:
    """A scalar function of one variable with first and second derivatives.

    Subclasses implement ``_evaluate(x) -> (value, d1, d2)`` on arrays.
    ``support`` is the closed interval on which the profile may be evaluated.
    """

    support = (-math.inf, math.inf)

    def _evaluate(self, x):
        raise NotImplementedError

    def evaluate(self, x):
        out = self._evaluate(x)
        if np.ndim(x) == 0:
            return tuple(np.asarray(v).item() for v in out)
        return out

    def __call__(self, x):
        return self.evaluate(x)[0]

    def d1(self, x):
        return self.evaluate(x)[1]

    def d2(self, x):
        return self.evaluate(x)[2]

    def _check_domain(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.support
        if np.any(x < lo) or np.any(x > hi) or np.any(np.isnan(x)):
            raise DomainError(
                f"{type(self).__name__} evaluated outside its support [{lo}, {hi}]"
            )
        return x


def smoothstep(u):
    """Quintic smoothstep 6u^5 - 15u^4 + 10u^3 on [0, 1] and its derivatives.

    Constant 0 below 0 and 1 above 1; C^2 across both ends.
    """
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    s = u * u * u * (u * (6.0 * u - 15.0) + 10.0)
    ds = 30.0 * u * u * (u - 1.0) ** 2
    d2s = 60.0 * u * (2.0 * u - 1.0) * (u - 1.0)
    return s, ds, d2s


def smooth_transition(u):
    """C-infinity transition from 0 (u <= 0) to 1 (u >= 1) and its derivatives.

    s(u) = f(u) / (f(u) + f(1-u)) with f(u) = exp(-1/u), written through the
    logistic function of q(u) = 1/(1-u) - 1/u so that nothing overflows.
    """
    u = np.asarray(u, dtype=float)
    s = np.where(u >= 1.0, 1.0, 0.0)
    ds = np.zeros_like(u)
    d2s = np.zeros_like(u)
    inner = (u > 0.0) & (u < 1.0)
    if np.any(inner):
        x = u[inner]
        q = 1.0 / (1.0 - x) - 1.0 / x
        dq = 1.0 / (1.0 - x) ** 2 + 1.0 / x ** 2
        d2q = 2.0 / (1.0 - x) ** 3 - 2.0 / x ** 3
        si = expit(q)
        w = si * expit(-q)  # s(1-s)
        s[inner] = si
        ds[inner] = w * dq
        d2s[inner] = w * ((1.0 - 2.0 * si) * dq * dq + d2q)
    return s, ds, d2s


class MollifierProfile(Profile):
    """psi_eps: 0 below eps/2, 1 on [eps, inf), quintic smoothstep between."""

    def __init__(self, eps):
        self.eps = float(eps)
        self.max_slope = 3.75 / self.eps

    def _evaluate(self, x):
        x = self._check_domain(x)
        half = 0.5 * self.eps
        s, ds, d2s = smoothstep((x - half) / half)
        return s, ds / half, d2s / half ** 2


def build_psi(params: ModelParams) -> MollifierProfile:
    return MollifierProfile(params.eps)


def _gauss_legendre(func, a, b):
    """Fixed-order Gauss-Legendre integral of ``func`` over [a, b], elementwise."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    x = mid[..., None] + half[..., None] * _GL_T
    return half * (func(x) @ _GL_W)


class ChiProfile(Profile):
    """chi_eps(y) = -int_0^y psi_eps(s) |ln s|^alpha ds on [0, 1/2].

    Values come from a cumulative table of per-cell Gauss-Legendre integrals
    plus one partial-cell integral, with the ramp end points eps/2 and eps
    inserted as table nodes so no cell straddles a kink of the integrand.
    Derivatives are always the closed forms.
    """

    def __init__(self, params: ModelParams, n_nodes=CHI_TABLE_NODES):
        self.params = params
        self.alpha = params.alpha
        self.psi = MollifierProfile(params.eps)
        self.support = (0.0, 0.5)
        nodes = np.linspace(0.0, 0.5, n_nodes + 1)
        nodes = np.unique(np.concatenate([nodes, [0.5 * params.eps, params.eps]]))
        self._nodes = nodes
        cells = _gauss_legendre(self._slope_magnitude, nodes[:-1], nodes[1:])
        self._table = -np.concatenate([[0.0], np.cumsum(cells)])

    def _slope_magnitude(self, s):
        # psi(s) |ln s|^alpha, zero wherever psi vanishes (including s = 0)
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        pos = s >= 0.5 * self.psi.eps
        if np.any(pos):
            sp = s[pos]
            out[pos] = self.psi(sp) * (-np.log(sp)) ** self.alpha
        return out

    def value(self, y):
        y = self._check_domain(y)
        k = np.clip(np.searchsorted(self._nodes, y, side="right") - 1, 0, len(self._nodes) - 2)
        left = self._nodes[k]
        return self._table[k] - _gauss_legendre(self._slope_magnitude, left, y)

    def _evaluate(self, y):
        y = np.atleast_1d(self._check_domain(y))
        value = self.value(y)
        psi, dpsi, _ = self.psi.evaluate(y)
        d1 = np.zeros_like(y)
        d2 = np.zeros_like(y)
        pos = y >= 0.5 * self.psi.eps
        if np.any(pos):
            yp = y[pos]
            L = -np.log(yp)
            d1[pos] = -psi[pos] * L ** self.alpha
            d2[pos] = -dpsi[pos] * L ** self.alpha + psi[pos] * self.alpha * L ** (self.alpha - 1.0) / yp
        return value, d1, d2

    def extended_by_zero(self):
        """The same profile continued by 0 to [-1/2, 0), where the defining
        integrand vanishes."""
        ext = copy.copy(self)
        ext.support = (-0.5, 0.5)
        return ext


def build_chi(params: ModelParams) -> ChiProfile:
    return ChiProfile(params)


def omega0_halfwidth(x1, delta):
    """sqrt(x1)/|ln x1|^delta, the |x2| bound of the initial domain (0 at x1 = 0)."""
    x1 = np.asarray(x1, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.sqrt(x1) / np.abs(np.log(x1)) ** delta
    return np.where(x1 > 0.0, w, 0.0)


def in_omega0(x1, x2, params: ModelParams):
    """Membership in the initial domain {|x2| <= sqrt(x1)/|ln x1|^delta} within
    [0, 1/2] x [-1/2, 1/2].  At x1 = 0 only x2 = 0 belongs."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    inside = (x1 >= 0.0) & (x1 <= 0.5) & (np.abs(x2) <= 0.5)
    bound = omega0_halfwidth(np.clip(x1, 0.0, 0.5), params.delta)
    result = inside & (np.abs(x2) <= bound)
    return bool(result) if result.ndim == 0 else result


class CutoffProfile(Profile):
    """Equal to 1 on [center - d, center + d], 0 outside [center - 2d, center + 2d],
    with C-infinity transitions strictly inside (0, 1) between."""

    def __init__(self, center, delta_eps):
        if not delta_eps > 0.0:
            raise ValueError(f"cutoff half-width must be positive, got {delta_eps}")
        self.center = float(center)
        self.delta_eps = float(delta_eps)

    def _evaluate(self, x):
        x = np.asarray(x, dtype=float)
        d = self.delta_eps
        r = x - self.center
        s, ds, d2s = smooth_transition((2.0 * d - np.abs(r)) / d)
        return s, -np.sign(r) * ds / d, d2s / d ** 2


def build_cutoffs(center_x1, delta_eps):
    """(psi1, psi2): the x1 cutoff around ``center_x1`` and the same shape at 0."""
    return CutoffProfile(center_x1, delta_eps), CutoffProfile(0.0, delta_eps)
