"""Characteristic integration for the source-term and perturbed-data problems.

Each seed (x1, x2) carries the augmented state

    phi, v, phi_x, w = d(v o phi)/dx1, phi_xx, W = d2(v o phi)/dx1^2

with x2 a frozen parameter.  With F(v) = (1+v)/(1-v) and g = g(t, phi, x2, v):

    phi'    = F(v)                      v' = g
    phi_x'  = F'(v) w                   w' = phi_x g_1 + w g_3
    phi_xx' = F''(v) w^2 + F'(v) W
    W'      = phi_x^2 g_11 + 2 phi_x w g_13 + w^2 g_33 + phi_xx g_1 + W g_3

where g_1 is the partial in x1 and g_3 the partial in v.  The x1-derivatives
of v itself are recovered as v_x = w/phi_x and v_xx = A - B with
A = W/phi_x^2 and B = phi_xx w/phi_x^3.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .characteristics import BlowupReport
from .params import NoBlowupError, ResolutionError, SingularityError
from .profiles import ChiProfile

STATE_NAMES = ("phi", "v", "phi_x", "w", "phi_xx", "W")
PHI, V, PHI_X, W_, PHI_XX, WW = range(6)
DEGENERATE_FLOOR = 1e-12
SPEED_LIMIT = 1.0 - 1e-9


# --------------------------------------------------------------------------
# Source terms

class SourceTerm:
    """g(t, x1, x2, v) together with the partials the augmented system needs."""

    name = "source"

    def partials(self, t, x1, x2, v):
        """Return (g, g_1, g_3, g_11, g_13, g_33)."""
        raise NotImplementedError

    @property
    def bound(self):
        """Uniform bound C_g on |g| and the exposed partials for v in [-1, 1/2]."""
        raise NotImplementedError

    def to_dict(self):
        return {"id": self.name}


class ZeroSource(SourceTerm):
    name = "zero"

    def partials(self, t, x1, x2, v):
        z = np.zeros_like(v)
        return z, z, z, z, z, z

    @property
    def bound(self):
        return 0.0


@dataclass
class LinearSource(SourceTerm):
    """g = c v: along characteristics v grows like e^{ct}."""

    c: float = 0.2
    name = "linear"

    def partials(self, t, x1, x2, v):
        z = np.zeros_like(v)
        return self.c * v, z, self.c + z, z, z, z

    @property
    def bound(self):
        return abs(self.c)

    def to_dict(self):
        return {"id": self.name, "c": self.c}


@dataclass
class SineSource(SourceTerm):
    """g = A sin(k1 x1 + k2 x2 + omega t) / (1 + v^2)."""

    A: float = 0.5
    k1: float = 1.0
    k2: float = 40.0
    omega: float = 1.0
    name = "sine"

    def partials(self, t, x1, x2, v):
        theta = self.k1 * x1 + self.k2 * x2 + self.omega * t
        sn = self.A * np.sin(theta)
        cs = self.A * np.cos(theta)
        q = 1.0 + v * v
        r = 1.0 / q
        r1 = -2.0 * v * r * r
        r2 = (6.0 * v * v - 2.0) * r * r * r
        k1 = self.k1
        return sn * r, k1 * cs * r, sn * r1, -k1 * k1 * sn * r, k1 * cs * r1, sn * r2

    @property
    def bound(self):
        # |1/(1+v^2)| <= 1, |d/dv| <= 3 sqrt(3)/8, |d2/dv2| <= 2
        return abs(self.A) * max(1.0, abs(self.k1), self.k1 ** 2) * 2.0

    def to_dict(self):
        return {"id": self.name, "A": self.A, "k1": self.k1, "k2": self.k2, "omega": self.omega}


SOURCES = {"zero": ZeroSource, "linear": LinearSource, "sine": SineSource}


def make_source(spec):
    """Build a source from a registry spec such as {"id": "sine", "A": 0.5}."""
    spec = dict(spec or {"id": "zero"})
    key = spec.pop("id", "zero")
    if key not in SOURCES:
        raise ValueError(f"unknown source id {key!r}; known: {sorted(SOURCES)}")
    return SOURCES[key](**spec)


# --------------------------------------------------------------------------
# Initial-data perturbations

@dataclass
class GaussianBump:
    """v~(x1, x2) = a exp(-((x1-m1)^2 + (x2-m2)^2) / s^2)."""

    a: float = 0.01
    m1: float = 0.1
    m2: float = 0.0
    s: float = 0.1
    name = "gaussian"

    def partials(self, x1, x2):
        """Return (v~, d/dx1 v~, d2/dx1^2 v~)."""
        d1 = x1 - self.m1
        val = self.a * np.exp(-(d1 * d1 + (x2 - self.m2) ** 2) / self.s ** 2)
        s2 = self.s ** 2
        return val, -2.0 * d1 / s2 * val, (4.0 * d1 * d1 / s2 ** 2 - 2.0 / s2) * val

    def to_dict(self):
        return {"id": self.name, "a": self.a, "m1": self.m1, "m2": self.m2, "s": self.s}


PERTURBATIONS = {"gaussian": GaussianBump}


def make_perturbation(spec):
    if not spec:
        return None
    spec = dict(spec)
    key = spec.pop("id", "gaussian")
    if key not in PERTURBATIONS:
        raise ValueError(f"unknown perturbation id {key!r}; known: {sorted(PERTURBATIONS)}")
    return PERTURBATIONS[key](**spec)


# --------------------------------------------------------------------------
# Integration

@dataclass
class TransportProblem:
    chi: ChiProfile
    source: SourceTerm
    vtilde: object = None

    @property
    def params(self):
        return self.chi.params

    def initial_state(self, x1, x2):
        chi, d1, d2 = self.chi.evaluate(x1)
        y = np.zeros((6,) + np.shape(x1))
        y[PHI] = x1
        y[V] = chi
        y[PHI_X] = 1.0
        y[W_] = d1
        y[WW] = d2
        if self.vtilde is not None:
            p0, p1, p2 = self.vtilde.partials(x1, x2)
            y[V] += p0
            y[W_] += p1
            y[WW] += p2
        return y

    def rhs(self, t, y, x2):
        phi, v, px, w, pxx, W = y
        if np.any(v >= SPEED_LIMIT):
            raise SingularityError(f"carried value reached 1 at t = {t}: characteristic speed blows up")
        inv = 1.0 / (1.0 - v)
        F1 = 2.0 * inv * inv
        F2 = 2.0 * F1 * inv
        g, g1, g3, g11, g13, g33 = self.source.partials(t, phi, x2, v)
        out = np.empty_like(y)
        out[PHI] = (1.0 + v) * inv
        out[V] = g
        out[PHI_X] = F1 * w
        out[W_] = px * g1 + w * g3
        out[PHI_XX] = F2 * w * w + F1 * W
        out[WW] = px * px * g11 + 2.0 * px * w * g13 + w * w * g33 + pxx * g1 + W * g3
        return out

    def step(self, t, y, x2, h):
        k1 = self.rhs(t, y, x2)
        k2 = self.rhs(t + 0.5 * h, y + 0.5 * h * k1, x2)
        k3 = self.rhs(t + 0.5 * h, y + 0.5 * h * k2, x2)
        k4 = self.rhs(t + h, y + h * k3, x2)
        return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def jacobian_rate(self, y):
        """d/dt phi_x = F'(v) w."""
        return 2.0 * y[W_] / (1.0 - y[V]) ** 2


def _hermite_root(p0, p1, d0, d1, h):
    """Root in [0, h] of the cubic Hermite interpolant with values p0 > 0 >= p1
    and slopes d0, d1; found by bisection on the polynomial (vectorized)."""
    lo = np.zeros_like(p0)
    hi = np.ones_like(p0)

    def poly(s):
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s * s * (3 - 2 * s)
        h11 = s * s * (s - 1)
        return h00 * p0 + h10 * h * d0 + h01 * p1 + h11 * h * d1

    for _ in range(60):
        mid = 0.5 * (lo + hi)
        pos = poly(mid) > 0.0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
    return 0.5 * (lo + hi) * h


def _time_nodes(t_end, dt, extra=()):
    n = max(1, int(math.ceil(t_end / dt - 1e-9)))
    nodes = np.linspace(0.0, t_end, n + 1)
    if len(extra):
        extra = np.asarray([e for e in extra if 0.0 < e < t_end], dtype=float)
        nodes = np.unique(np.concatenate([nodes, extra]))
    return nodes


@dataclass
class CharacteristicField:
    """Trajectories of all seeds on shared time samples.

    ``states`` has shape (n_times, 6, n1, n2) in STATE_NAMES order; samples
    at or after a seed's degeneracy are NaN.  ``crossing_time`` is +inf for
    seeds that never degenerate.
    """

    problem: TransportProblem
    x1: np.ndarray
    x2: np.ndarray
    times: np.ndarray
    states: np.ndarray
    crossing_time: np.ndarray
    dt: float
    sign_violations: dict = field(default_factory=dict)

    @property
    def degenerate(self):
        return np.isfinite(self.crossing_time)

    def state(self, name):
        return self.states[:, STATE_NAMES.index(name)]

    def time_index(self, t):
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-12 * max(1.0, abs(t)):
            raise ResolutionError(
                f"t = {t} is not a recorded sample; integrate with record_times including it"
            )
        return k

    def min_phi_x_history(self):
        px = self.state("phi_x").reshape(len(self.times), -1)
        with np.errstate(all="ignore"):
            m = np.where(np.all(np.isnan(px), axis=1), np.nan, np.nanmin(np.where(np.isnan(px), np.inf, px), axis=1))
        return [(float(t), float(v)) for t, v in zip(self.times, m) if np.isfinite(v)]


def integrate(chi, vtilde, g, seeds, t_end, dt, record_times=None,
              stop_on_degenerate=False, sign_check=True):
    """Integrate the augmented characteristic system with classical RK4.

    ``seeds`` is a pair (x1 values, x2 values) forming a tensor grid.  Steps
    have size <= dt and land exactly on every time in ``record_times``; if
    ``record_times`` is None every step is recorded.  A seed whose phi_x
    drops to DEGENERATE_FLOOR is frozen from that step on and its crossing
    time located inside the step by cubic Hermite interpolation.
    """
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    problem = TransportProblem(chi, g, vtilde)
    x1 = np.asarray(seeds[0], dtype=float)
    x2 = np.asarray(seeds[1], dtype=float)
    if np.any(np.abs(x2) > 0.5):
        raise ValueError("x2 seeds must lie in [-1/2, 1/2]")
    X1, X2 = np.meshgrid(x1, x2, indexing="ij")
    shape = X1.shape
    fx1, fx2 = X1.ravel(), X2.ravel()

    nodes = _time_nodes(t_end, dt, () if record_times is None else record_times)
    if record_times is None:
        keep = np.ones(len(nodes), dtype=bool)
    else:
        wanted = np.asarray(list(record_times) + [0.0])
        keep = np.isin(nodes, wanted) | (np.min(np.abs(nodes[:, None] - wanted[None, :]), axis=1) <= 1e-14)

    y = problem.initial_state(fx1, fx2)
    n = fx1.size
    active = np.ones(n, dtype=bool)
    crossing = np.full(n, np.inf)
    recorded_t = []
    recorded = []
    # sign invariants are only expected where the mollifier is past 1/10
    ledger_w = chi.psi(fx1) >= 0.1
    violations = {"phi_x_nonpositive": 0, "v_above_half": 0, "w_positive": 0,
                  "chi_positive": int(np.sum(chi(fx1) > 0.0)),
                  "chi_slope_positive": int(np.sum(chi.d1(fx1) > 0.0))}

    def record(t, y):
        snap = np.where(active[None, :], y, np.nan)
        recorded_t.append(t)
        recorded.append(snap.reshape((6,) + shape))

    def ledger(y, mask):
        violations["v_above_half"] += int(np.sum(y[V, mask] > 0.5))
        violations["w_positive"] += int(np.sum(y[W_, mask & ledger_w] > 0.0))

    if keep[0]:
        record(0.0, y)
    if sign_check:
        ledger(y, active)
    for k in range(len(nodes) - 1):
        t0, t1 = nodes[k], nodes[k + 1]
        h = t1 - t0
        idx = np.flatnonzero(active)
        y_new = y.copy()
        y_new[:, idx] = problem.step(t0, y[:, idx], fx2[idx], h)
        newly = idx[y_new[PHI_X, idx] <= DEGENERATE_FLOOR]
        if newly.size:
            crossing[newly] = t0 + _hermite_root(
                y[PHI_X, newly], y_new[PHI_X, newly],
                problem.jacobian_rate(y[:, newly]), problem.jacobian_rate(y_new[:, newly]), h,
            )
            active[newly] = False
        y = y_new
        # the ledger covers the pre-blow-up interval only
        if sign_check and active.all():
            ledger(y, active)
        if keep[k + 1]:
            record(t1, y)
        if stop_on_degenerate and newly.size:
            break
        if not active.any():
            break

    return CharacteristicField(
        problem=problem, x1=x1, x2=x2, times=np.asarray(recorded_t),
        states=np.asarray(recorded), crossing_time=crossing.reshape(shape),
        dt=dt, sign_violations=violations,
    )


def crossing_times(problem: TransportProblem, x1, x2, dt, t_max, refine_from=None):
    """Degeneracy time of each seed (x1[i], x2[i]).

    When ``refine_from`` is given the integration switches to dt/10 from
    that time on.
    """
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    x2 = np.broadcast_to(np.asarray(x2, dtype=float), x1.shape).copy()
    y = problem.initial_state(x1, x2)
    crossing = np.full(x1.shape, np.inf)
    active = np.ones(x1.shape, dtype=bool)
    if refine_from is None:
        segments = [(0.0, t_max, dt)]
    else:
        segments = [(0.0, refine_from, dt), (refine_from, t_max, dt / 10.0)]
    for a, b, h_max in segments:
        if b <= a:
            continue
        nodes = a + _time_nodes(b - a, h_max)
        for t0, t1 in zip(nodes[:-1], nodes[1:]):
            idx = np.flatnonzero(active)
            if idx.size == 0:
                return crossing
            h = t1 - t0
            y_new = y.copy()
            y_new[:, idx] = problem.step(t0, y[:, idx], x2[idx], h)
            newly = idx[y_new[PHI_X, idx] <= DEGENERATE_FLOOR]
            if newly.size:
                crossing[newly] = t0 + _hermite_root(
                    y[PHI_X, newly], y_new[PHI_X, newly],
                    problem.jacobian_rate(y[:, newly]), problem.jacobian_rate(y_new[:, newly]), h,
                )
                active[newly] = False
            y = y_new
    return crossing


def _parabola_vertex(x, f):
    """Vertex of the parabola through three points (falls back to the middle)."""
    (x0, x1, x2), (f0, f1, f2) = x, f
    den = (x0 - x1) * (x0 - x2) * (x1 - x2)
    A = (x2 * (f1 - f0) + x1 * (f0 - f2) + x0 * (f2 - f1)) / den
    B = (x2 * x2 * (f0 - f1) + x1 * x1 * (f2 - f0) + x0 * x0 * (f1 - f2)) / den
    if not A > 0.0:
        return x1
    return min(max(-B / (2.0 * A), x0), x2)


def _zoom_minimum(func, lo, hi, n=11, passes=4):
    """Locate the minimum of a smooth function on [lo, hi] by repeated
    sampling and shrinking around the discrete argmin, finished with a
    parabola through the three best neighbours."""
    for _ in range(passes):
        xs = np.linspace(lo, hi, n)
        fs = func(xs)
        j = int(np.argmin(fs))
        j = min(max(j, 1), n - 2)
        span = xs[1] - xs[0]
        lo, hi = xs[j] - span, xs[j] + span
    xs = np.linspace(lo, hi, n)
    fs = func(xs)
    j = min(max(int(np.argmin(fs)), 1), n - 2)
    x_star = _parabola_vertex(xs[j - 1:j + 2], fs[j - 1:j + 2])
    return x_star, float(func(np.array([x_star]))[0])


def _zoom_minimum_2d(func, box1, box2, n=9, passes=4):
    """Minimum of func(x1s, x2s) (vectorized over paired arrays) on a box,
    by tensor-grid sampling and shrinking; a degenerate box2 fixes x2.
    The last pass is finished with a parabola through the argmin along each
    axis and one extra evaluation there."""
    (a1, b1), (a2, b2) = box1, box2
    fixed2 = a2 == b2
    for k in range(passes + 1):
        g1 = np.linspace(a1, b1, n)
        g2 = np.array([a2]) if fixed2 else np.linspace(a2, b2, n)
        G1, G2 = np.meshgrid(g1, g2, indexing="ij")
        F = func(G1.ravel(), G2.ravel()).reshape(G1.shape)
        i, j = np.unravel_index(int(np.argmin(F)), F.shape)
        i = min(max(i, 1), n - 2)
        if not fixed2:
            j = min(max(j, 1), n - 2)
        if k < passes:
            d1 = g1[1] - g1[0]
            a1, b1 = g1[i] - d1, g1[i] + d1
            if not fixed2:
                d2 = g2[1] - g2[0]
                a2, b2 = g2[j] - d2, g2[j] + d2
    x1 = _parabola_vertex(g1[i - 1:i + 2], F[i - 1:i + 2, j])
    x2 = g2[j] if fixed2 else _parabola_vertex(g2[j - 1:j + 2], F[i, j - 1:j + 2])
    best = float(func(np.array([x1]), np.array([x2]))[0])
    if best > F[i, j]:
        return (float(g1[i]), float(g2[j])), float(F[i, j])
    return (float(x1), float(x2)), best


def detect_blowup_numeric(fld: CharacteristicField) -> BlowupReport:
    """Earliest degeneracy of phi_x over the seeds, refined in time and space.

    Crossing times are recomputed with dt/10 over the last 2% of the
    earliest seed's interval, and the location is polished by zooming on the
    crossing-time function around that seed (in x2 too when the seed is
    interior in x2).
    """
    if not fld.degenerate.any():
        raise NoBlowupError("no trajectory of the field degenerates")
    prob = fld.problem
    p = prob.params
    T = fld.crossing_time
    i, j = np.unravel_index(int(np.argmin(T)), T.shape)
    t_guess = float(T[i, j])
    t_max = 1.05 * t_guess + 2 * fld.dt

    def times_at(x1s, x2):
        return crossing_times(prob, x1s, x2, fld.dt, t_max, refine_from=0.98 * t_guess)

    lo1 = fld.x1[max(i - 1, 0)]
    hi1 = fld.x1[min(i + 1, len(fld.x1) - 1)]
    if 0 < j < len(fld.x2) - 1:
        box2 = (fld.x2[j - 1], fld.x2[j + 1])
    else:
        box2 = (fld.x2[j], fld.x2[j])
    (nu1, nu2), t_eps = _zoom_minimum_2d(times_at, (lo1, hi1), box2)
    nu1, nu2 = float(nu1), float(nu2)

    history = [(t, m) for t, m in fld.min_phi_x_history() if t < t_eps]
    mins = np.array([m for _, m in history])
    bound = 4.0 / p.log_scale
    audits = {
        "t_eps_le_4_over_logscale": t_eps <= bound,
        "psi_at_nu_gt_1_9": float(prob.chi.psi(nu1)) > 1.0 / 9.0,
        "min_phi_x_nonincreasing": bool(np.all(np.diff(mins) <= 1e-12)),
    }
    values = {
        "t_bound": bound,
        "t_eps_seed": t_guess,
        "seed_index": [int(i), int(j)],
        "source_bound": prob.source.bound,
        "phi_x2x1x1": _phi_x2x1x1(fld, i, j),
        "window_center": _position_at(prob, nu1, nu2, t_eps, fld.dt),
    }
    return BlowupReport(t_eps=float(t_eps), nu_eps=(nu1, nu2), min_phi_x_history=history,
                        audits=audits, values=values)


def _position_at(problem, x1, x2, t, dt):
    """phi(t, x1, x2) for one seed; phi stays continuous through degeneracy."""
    y = problem.initial_state(np.array([x1]), np.array([x2]))
    nodes = _time_nodes(t, dt)
    for t0, t1 in zip(nodes[:-1], nodes[1:]):
        y = problem.step(t0, y, np.array([x2]), t1 - t0)
    return float(y[PHI, 0])


def _phi_x2x1x1(fld, i, j):
    """d/dx2 of phi_x1x1 at the last sample where seed (i, j) is regular,
    by differencing across neighbouring x2 seeds (NaN when unavailable)."""
    if len(fld.x2) < 3:
        return float("nan")
    pxx = fld.state("phi_xx")[:, i, :]
    ok = np.flatnonzero(np.all(np.isfinite(pxx[:, max(j - 1, 0):j + 2]), axis=1))
    if ok.size == 0:
        return float("nan")
    k = ok[-1]
    jl, jr = max(j - 1, 0), min(j + 1, len(fld.x2) - 1)
    return float((pxx[k, jr] - pxx[k, jl]) / (fld.x2[jr] - fld.x2[jl]))


def vx_split(states):
    """(v_x, A, B, v_xx) from stacked states with phi_x > 0."""
    px, w, pxx, W = states[PHI_X], states[W_], states[PHI_XX], states[WW]
    vx = w / px
    A = W / px ** 2
    B = pxx * w / px ** 3
    return vx, A, B, A - B


def derivative_bound_audit(fld: CharacteristicField, report: BlowupReport, frac=0.999) -> dict:
    """Suprema along trajectories of the quantities the Gronwall-type bounds
    control, over recorded samples with t <= frac * t_eps."""
    p = fld.problem.params
    sel = fld.times <= frac * report.t_eps
    st = fld.states[sel]
    t = fld.times[sel][:, None, None]
    with np.errstate(all="ignore"):
        vx, A, B, vxx = vx_split(np.moveaxis(st, 1, 0))
        px = st[:, PHI_X]
        logt = np.abs(np.log(report.t_eps - t))
        w_sup = float(np.nanmax(np.abs(st[:, W_])))
        vxx_sup = float(np.nanmax(np.abs(vxx) * px ** 3))
        A_sup = float(np.nanmax(np.abs(A) * px ** 2 / logt))
    gronwall = 2.0 * p.log_scale
    return {
        "sup_abs_w": w_sup,
        "w_gronwall_bound": gronwall,
        "w_within_bound": w_sup <= gronwall,
        "sup_abs_vxx_phi_x3": vxx_sup,
        "sup_abs_A_phi_x2_over_log": A_sup,
        "finite": bool(np.isfinite(w_sup) and np.isfinite(vxx_sup) and np.isfinite(A_sup)),
    }
