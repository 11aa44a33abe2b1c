"""Closed-form characteristic maps for the model equation (c = 0) and the
linearly damped/amplified variant (c != 0), and blow-up detection from them.

Along a characteristic started at y the carried value is v = e^{ct} chi(y)
and the foot point moves with speed (1+v)/(1-v), which integrates to

    phi(t, y) = y + t + (2/c) ln((1 - chi(y)) / (1 - e^{ct} chi(y)))
    phi(t, y) = y + t + 2t chi(y) / (1 - chi(y))            (c = 0)
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.optimize import minimize_scalar

from .params import DomainError, ModelParams, NoBlowupError
from .profiles import ChiProfile, build_chi

# 1 - e^{ct} chi must stay above this on the evaluation domain.
REGIME_FLOOR = 0.8
BISECTION_TOL = 1e-10


@dataclass
class BlowupReport:
    """First degeneracy (t_eps, nu_eps) of the characteristic map.

    ``nu_eps`` is a float for the 1D closed forms and an (x1, x2) pair for
    numerically integrated fields.  ``min_phi_x_history`` holds (t, min over
    seeds of the Jacobian) samples; ``audits`` maps bound names to pass flags
    and ``values`` keeps the numbers behind them.
    """

    t_eps: float
    nu_eps: object
    min_phi_x_history: list
    audits: dict
    values: dict = field(default_factory=dict)

    @property
    def nu1(self):
        return self.nu_eps[0] if isinstance(self.nu_eps, tuple) else self.nu_eps

    @property
    def nu2(self):
        return self.nu_eps[1] if isinstance(self.nu_eps, tuple) else 0.0

    def to_dict(self):
        nu = list(self.nu_eps) if isinstance(self.nu_eps, tuple) else self.nu_eps
        return {
            "t_eps": self.t_eps,
            "nu_eps": nu,
            "audits": dict(self.audits),
            "values": dict(self.values),
            "min_phi_x_history": [list(p) for p in self.min_phi_x_history],
        }


def default_y_grid(eps, n=4001):
    """Geometric seed grid over [eps/4, 1/2], dense enough to resolve the ramp."""
    return np.geomspace(0.25 * eps, 0.5, n)


class ClosedFormCharacteristics:
    """phi and its derivatives for a fixed parameter tuple and profile chi."""

    def __init__(self, params: ModelParams, chi: ChiProfile = None):
        self.params = params
        self.c = float(params.c)
        self.chi = chi if chi is not None else build_chi(params)

    def _growth(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0.0):
            raise DomainError("characteristics are only defined for t >= 0")
        return np.exp(self.c * t), np.expm1(self.c * t)

    def _em1_over_c(self, t):
        # (e^{ct} - 1)/c, which tends to t when c t underflows
        ct = self.c * np.asarray(t, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(ct == 0.0, t, np.expm1(ct) / self.c)

    def _check_regime(self, denom):
        if np.any(denom < REGIME_FLOOR):
            raise DomainError(
                f"1 - e^(ct) chi(y) fell below {REGIME_FLOOR}; outside the analyticity regime"
            )

    def transported_value(self, t, y):
        """v(t, phi(t, y)) = e^{ct} chi(y)."""
        E, _ = self._growth(t)
        return E * self.chi(y)

    def phi(self, t, y, chi_values=None):
        chi = self.chi(y) if chi_values is None else chi_values[0]
        t = np.asarray(t, dtype=float)
        E, Em1 = self._growth(t)
        denom = 1.0 - E * chi
        self._check_regime(denom)
        if self.c == 0.0:
            return y + t + 2.0 * t * chi / (1.0 - chi)
        # (1 - chi)/(1 - E chi) = 1 + z with z = (E - 1) chi / (1 - E chi),
        # and (2/c) ln(1 + z) is written as 2 ((E - 1)/c)(chi/denom) ln(1 + z)/z
        z = Em1 * chi / denom
        with np.errstate(divide="ignore", invalid="ignore"):
            log_ratio = np.where(z == 0.0, 1.0, np.log1p(z) / z)
        return y + t + 2.0 * self._em1_over_c(t) * (chi / denom) * log_ratio

    def phi_t(self, t, y):
        v = self.transported_value(t, y)
        return (1.0 + v) / (1.0 - v)

    def phi_derivatives(self, t, y, chi_values=None):
        """(phi_y, phi_ty, phi_yy, phi_tyy) at (t, y).

        ``chi_values`` may pass a precomputed (chi, chi', chi'') triple for y.
        """
        chi, d1, d2 = self.chi.evaluate(y) if chi_values is None else chi_values
        t = np.asarray(t, dtype=float)
        E, Em1 = self._growth(t)
        b = 1.0 - E * chi
        self._check_regime(b)
        a = 1.0 - chi
        curv = d2 * a + 2.0 * d1 * d1  # appears in both second derivatives at c = 0
        if self.c == 0.0:
            phi_y = 1.0 + 2.0 * t * d1 / (a * a)
            phi_ty = 2.0 * d1 / (a * a) + 0.0 * t
            phi_yy = 2.0 * t * curv / a ** 3
            phi_tyy = 2.0 * curv / a ** 3 + 0.0 * t
            return phi_y, phi_ty, phi_yy, phi_tyy
        k = 2.0 * self._em1_over_c(t)
        phi_y = 1.0 + k * d1 / (a * b)
        phi_ty = 2.0 * d1 * E / (b * b)
        phi_yy = k * ((1.0 + E - 2.0 * E * chi) * d1 * d1 + a * b * d2) / (a * a * b * b)
        phi_tyy = 2.0 * E * (d2 * b + 2.0 * d1 * d1 * E) / b ** 3
        return phi_y, phi_ty, phi_yy, phi_tyy

    def crossing_time(self, y):
        """Time at which phi_y(., y) reaches 0, solved in closed form (inf if never).

        With E = e^{cT}: 2|chi'| (E - 1) = c (1 - chi)(1 - E chi).
        """
        chi, d1, _ = self.chi.evaluate(y)
        s = -np.asarray(d1, dtype=float)
        a = 1.0 - chi
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.c == 0.0:
                T = a * a / (2.0 * s)
            else:
                E = (2.0 * s + self.c * a) / (2.0 * s + self.c * chi * a)
                T = np.log(E) / self.c
        return np.where((s > 0.0) & (T > 0.0) & np.isfinite(T), T, np.inf)


def _refined_min(f, grid, values):
    """Golden-section minimum of ``f`` around the grid argmin of ``values``."""
    j = int(np.argmin(values))
    if j == 0 or j == len(grid) - 1:
        return float(grid[j]), float(values[j])
    res = minimize_scalar(
        f, bracket=(grid[j - 1], grid[j], grid[j + 1]), method="golden",
        options={"xtol": 1e-12},
    )
    if res.fun < values[j]:
        return float(res.x), float(res.fun)
    return float(grid[j]), float(values[j])


def detect_blowup_closed_form(cf: ClosedFormCharacteristics, y_grid=None) -> BlowupReport:
    """First time the closed-form Jacobian phi_y vanishes somewhere on ``y_grid``.

    The minimum over y is taken on the grid and polished by golden section;
    t_eps is found by bisection on the sign of that minimum.
    """
    p = cf.params
    if y_grid is None:
        y_grid = default_y_grid(p.eps)
    y_grid = np.asarray(y_grid, dtype=float)
    if y_grid.min() > 0.25 * p.eps * (1 + 1e-12) or y_grid.max() < 0.5 * (1 - 1e-12):
        raise ValueError("y_grid must cover [eps/4, 1/2]")
    chi_vals = cf.chi.evaluate(y_grid)

    def jac(t, y):
        return float(cf.phi_derivatives(t, y)[0])

    def min_jacobian(t):
        vals = cf.phi_derivatives(t, y_grid, chi_values=chi_vals)[0]
        return _refined_min(lambda y: jac(t, y), y_grid, vals)

    history = []
    t_hi = min(1.0, 10.0 / p.log_scale)
    _, m_hi = min_jacobian(t_hi)
    if m_hi > 0.0:
        raise NoBlowupError(f"phi_y stays positive on the grid up to t = {t_hi}")
    t_lo = 0.0
    while t_hi - t_lo > BISECTION_TOL:
        t_mid = 0.5 * (t_lo + t_hi)
        _, m = min_jacobian(t_mid)
        history.append((t_mid, m))
        if m > 0.0:
            t_lo = t_mid
        else:
            t_hi = t_mid
    t_eps = 0.5 * (t_lo + t_hi)
    nu, m_eps = min_jacobian(t_eps)
    # Newton polish in t at the located minimum; phi_y is flat in y there.
    for _ in range(2):
        phi_y, phi_ty, _, _ = cf.phi_derivatives(t_eps, nu)
        step = float(phi_y / phi_ty)
        if abs(step) > BISECTION_TOL:
            break
        t_eps -= step
        nu, m_eps = min_jacobian(t_eps)
    for t in np.linspace(0.0, t_eps, 41)[:-1]:
        history.append((float(t), min_jacobian(t)[1]))
    history.append((t_eps, m_eps))
    history.sort()

    _, _, phi_yy_grid, phi_tyy_grid = cf.phi_derivatives(t_eps, y_grid, chi_values=chi_vals)
    phi_y_nu, _, phi_yy_nu, phi_tyy_nu = (float(v) for v in cf.phi_derivatives(t_eps, nu))
    bound = 5.0 / p.log_scale
    yy_scale = float(np.max(np.abs(phi_yy_grid)))
    tyy_scale = float(np.max(np.abs(phi_tyy_grid)))
    audits = {
        "t_eps_le_5_over_logscale": t_eps <= bound,
        "nu_lt_eps": nu < p.eps,
        "phi_yy_vanishes_at_nu": abs(phi_yy_nu) <= 1e-6 * yy_scale,
    }
    if cf.c != 0.0:
        # at c = 0, phi_yy = t phi_tyy, so both vanish together
        audits["phi_tyy_nonzero_at_nu"] = abs(phi_tyy_nu) > 1e-6 * tyy_scale
    values = {
        "t_bound": bound,
        "phi_y_at_nu": phi_y_nu,
        "phi_yy_at_nu": phi_yy_nu,
        "phi_tyy_at_nu": phi_tyy_nu,
        "phi_at_nu": float(cf.phi(t_eps, nu)),
    }
    values["window_center"] = values["phi_at_nu"]
    return BlowupReport(t_eps=t_eps, nu_eps=nu, min_phi_x_history=history,
                        audits=audits, values=values)


def sandwich_estimates_audit(cf: ClosedFormCharacteristics, report: BlowupReport,
                             window: float, n: int = 41, exclude: float = 1e-8) -> dict:
    """Empirical constants in the two-sided estimates of phi_y and phi_yy near
    the degenerate point.

    Samples |y - nu| <= window and 0 <= t_eps - t <= window^2, reports the
    range of phi_y / ((y - nu)^2 + (t_eps - t)) and of phi_yy(t_eps, y)/(nu - y),
    dropping points with (y - nu)^2 + (t_eps - t) <= exclude^2.
    """
    nu, t_eps = report.nu1, report.t_eps
    dy = np.linspace(-window, window, n)
    dt = np.linspace(0.0, window * window, n)
    DY, DT = np.meshgrid(dy, dt, indexing="ij")
    keep = DY ** 2 + DT > exclude ** 2  # parabolic distance to (nu, t_eps)
    Y = nu + DY[keep]
    T = t_eps - DT[keep]
    phi_y = cf.phi_derivatives(T, Y)[0]
    r1 = phi_y / (DY[keep] ** 2 + DT[keep])

    dy1 = dy[np.abs(dy) > exclude]
    phi_yy = cf.phi_derivatives(t_eps, nu + dy1)[2]
    r2 = phi_yy / (-dy1)

    def stats(r):
        return float(np.min(r)), float(np.max(r))

    lo1, hi1 = stats(r1)
    lo2, hi2 = stats(r2)
    one_signed = (lo2 > 0.0) or (hi2 < 0.0)
    return {
        "window": window,
        "phi_y_ratio_min": lo1,
        "phi_y_ratio_max": hi1,
        "phi_yy_ratio_min": lo2,
        "phi_yy_ratio_max": hi2,
        "phi_yy_ratio_sign": 1 if lo2 > 0.0 else (-1 if hi2 < 0.0 else 0),
        "phi_y_ratio_positive_bounded": bool(lo1 > 0.0 and math.isfinite(hi1)),
        "phi_yy_ratio_bounded_one_signed": bool(one_signed and math.isfinite(lo2) and math.isfinite(hi2)),
    }
