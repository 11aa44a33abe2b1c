"""Divergence-rate fitting, the three-window decomposition of I(t), and
epsilon sweeps of the blow-up time over the four scenarios."""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import math

import numpy as np
from scipy.stats import linregress

from .characteristics import (ClosedFormCharacteristics, detect_blowup_closed_form,
                              default_y_grid)
from .norms import LAYER_MIN_NODES, closed_form_window, field_windows
from .params import FitWindowError, ModelParams
from .profiles import build_chi
from .transport import detect_blowup_numeric, integrate, make_perturbation, make_source

SCENARIOS = ("model", "c_variant", "source_term", "perturbed_data")
CLOSED_FORM = ("model", "c_variant")


@dataclass
class NormSeries:
    t: np.ndarray
    values: np.ndarray
    t_eps: float

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.t.shape != self.values.shape or self.t.ndim != 1:
            raise ValueError("times and values must be 1D arrays of equal length")
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("series times must be strictly increasing")
        if np.any(self.t >= self.t_eps):
            raise ValueError("series times must precede t_eps")
        if np.any(~(self.values > 0)):
            raise ValueError("series values must be positive")

    @property
    def tau(self):
        return self.t_eps - self.t


@dataclass
class RateFit:
    exponent: float
    intercept: float
    r_squared: float
    window: tuple

    def to_dict(self):
        return {"exponent": self.exponent, "intercept": self.intercept,
                "r_squared": self.r_squared, "window": list(self.window)}


def fit_rate(series: NormSeries, min_points=6, min_decades=1.5, fit_decades=1.0) -> RateFit:
    """OLS of ln I on ln(t_eps - t) over the last full decade of the series.

    The window is the shortest run of trailing points whose distances to
    t_eps span ``fit_decades``; the exponent is minus the slope.
    """
    tau = series.tau
    if tau.size < min_points:
        raise FitWindowError(f"need at least {min_points} points, got {tau.size}")
    span = math.log10(tau[0] / tau[-1])
    if span < min_decades - 1e-12:
        raise FitWindowError(f"series spans {span:.3f} decades of t_eps - t; need {min_decades}")
    start = 0
    for i in range(tau.size - 2, -1, -1):
        if math.log10(tau[i] / tau[-1]) >= fit_decades - 1e-12:
            start = i
            break
    x = np.log(tau[start:])
    y = np.log(series.values[start:])
    res = linregress(x, y)
    r2 = min(max(float(res.rvalue) ** 2, 0.0), 1.0)
    return RateFit(-float(res.slope), float(res.intercept), r2, (start, tau.size))


def dyadic_times(t_eps, ks):
    return [t_eps * (1.0 - 2.0 ** (-k)) for k in ks]


def window_series(source, report, t_list, delta, **kw):
    """Window samples at each time, from a closed form or a field."""
    if isinstance(source, ClosedFormCharacteristics):
        return [closed_form_window(source, report, t, delta, **kw) for t in t_list]
    return field_windows(source, report, t_list, delta, **kw)


def I_series(source, report, ks, delta, lam, cap=True, **kw):
    """I at t_k = t_eps (1 - 2^-k).

    With ``cap`` the series stops at the first time whose singular layer is
    covered by fewer than LAYER_MIN_NODES mesh nodes.  Returns
    (NormSeries, ks used, window samples).
    """
    ts = dyadic_times(report.t_eps, ks)
    wins = window_series(source, report, ts, delta, **kw)
    keep = len(ts)
    if cap:
        for i, w in enumerate(wins):
            if w.layer_nodes < LAYER_MIN_NODES:
                keep = i
                break
    vals = [w.value(lam) for w in wins[:keep]]
    return NormSeries(ts[:keep], vals, report.t_eps), list(ks)[:keep], wins[:keep]


def decomposition_audit(source, report, t_list, delta, lam, **kw) -> dict:
    """I1 (x < X - d), I2 (|x - X| <= d), I3 (x > X + d) of the outer integral
    at each time, the ratio (|I1| + |I3|)/I2 and whether it decreases."""
    t_list = [float(t) for t in t_list]
    wins = window_series(source, report, t_list, delta, **kw)
    rows = []
    for t, w in zip(t_list, wins):
        i1, i2, i3 = w.split(lam)
        total = w.value(lam)
        rows.append({"t": t, "I1": i1, "I2": i2, "I3": i3, "I": total,
                     "ratio": (abs(i1) + abs(i3)) / i2 if i2 > 0 else math.inf,
                     "layer_nodes": w.layer_nodes})
    ratios = [r["ratio"] for r in rows]
    return {
        "rows": rows,
        "all_finite": all(math.isfinite(r[k]) for r in rows for k in ("I1", "I2", "I3")),
        "ratio_decreasing": all(b < a for a, b in zip(ratios, ratios[1:])),
    }


# --------------------------------------------------------------------------
# Scenarios

@dataclass
class ScenarioSpec:
    """Everything needed to set up one detection run besides the parameters."""

    scenario: str = "c_variant"
    source: dict = field(default_factory=lambda: {"id": "sine"})
    perturbation: dict = field(default_factory=lambda: {"id": "gaussian"})
    seeds_x1: int = 100
    seeds_x2: int = 20
    x2_halfwidth: float = 0.05
    dt: float = 1e-4

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; known: {list(SCENARIOS)}")
        make_source(self.source)
        make_perturbation(self.perturbation)
        if self.seeds_x1 < 3 or self.seeds_x2 < 1:
            raise ValueError("need at least 3 seeds in x1 and 1 in x2")
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    def seeds(self, params):
        x1 = np.geomspace(0.25 * params.eps, 0.5, self.seeds_x1)
        if self.seeds_x2 == 1:
            return x1, np.array([0.0])
        return x1, np.linspace(-self.x2_halfwidth, self.x2_halfwidth, self.seeds_x2)


def scenario_params(params: ModelParams, scenario):
    return params.with_(c=0.0) if scenario == "model" else params


def build_closed_form(params, spec: ScenarioSpec):
    return ClosedFormCharacteristics(scenario_params(params, spec.scenario))


def build_field(params, spec: ScenarioSpec, t_end=None, stop_on_degenerate=True,
                record_times=None):
    chi = build_chi(params)
    source = make_source(spec.source)
    pert = make_perturbation(spec.perturbation) if spec.scenario == "perturbed_data" else None
    if t_end is None:
        t_end = min(1.0, 10.0 / params.log_scale)
    return integrate(chi, pert, source, spec.seeds(params), t_end, spec.dt,
                     record_times=record_times, stop_on_degenerate=stop_on_degenerate)


def closed_form_sign_ledger(cf, report, n_t=50):
    """Sign violations on the default y grid at n_t times before t_eps."""
    y = default_y_grid(cf.params.eps)
    chi, d1, d2 = cf.chi.evaluate(y)
    out = {"phi_x_nonpositive": 0, "v_above_half": 0, "w_positive": 0,
           "chi_positive": int(np.sum(chi > 0)), "chi_slope_positive": int(np.sum(d1 > 0))}
    for t in np.linspace(0.0, report.t_eps, n_t, endpoint=False):
        E = math.exp(cf.c * t)
        out["phi_x_nonpositive"] += int(np.sum(cf.phi_derivatives(t, y, (chi, d1, d2))[0] <= 0))
        out["v_above_half"] += int(np.sum(E * chi > 0.5))
        out["w_positive"] += int(np.sum(E * d1 > 0))
    return out


def detect(params: ModelParams, spec: ScenarioSpec):
    """Run detection for one scenario: (report, sign ledger, bound)."""
    if spec.scenario in CLOSED_FORM:
        cf = build_closed_form(params, spec)
        report = detect_blowup_closed_form(cf)
        return report, closed_form_sign_ledger(cf, report), 5.0 / params.log_scale
    fld = build_field(params, spec)
    report = detect_blowup_numeric(fld)
    return report, dict(fld.sign_violations), 4.0 / params.log_scale


def _sweep_row(args):
    eps, params, spec = args
    p = params.with_(eps=eps)
    report, ledger, bound = detect(p, spec)
    nu1, nu2 = report.nu1, report.nu2
    return {
        "scenario": spec.scenario,
        "eps": eps,
        "t_eps": report.t_eps,
        "nu1": float(nu1),
        "nu2": float(nu2),
        "bound": bound,
        "bound_ok": bool(report.t_eps <= bound),
        "sign_violations": int(sum(ledger.values())),
        "audits_ok": bool(all(report.audits.values())),
    }


def epsilon_sweep(eps_list, params: ModelParams, spec: ScenarioSpec, threads=1) -> list:
    """Detection per epsilon (descending list); rows come back in input order
    whatever the number of worker processes."""
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly descending")
    for e in eps_list:
        params.with_(eps=e)  # validates each row's parameters up front
    jobs = [(e, params, spec) for e in eps_list]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(_sweep_row, jobs))
    return [_sweep_row(j) for j in jobs]


def sweep_decreasing(rows):
    t = [r["t_eps"] for r in rows]
    return all(b < a for a, b in zip(t, t[1:]))

