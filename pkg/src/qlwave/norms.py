"""Norm engines: the spectral logarithmic Sobolev norm and the singular-kernel
bilinear form, plus the windowed quantity I(t) built from a characteristic
field or from the closed-form characteristics.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy.signal import fftconvolve

from .params import DomainError, ParameterError, ResolutionError
from .profiles import CutoffProfile


@dataclass(frozen=True)
class NormSpec:
    s: float
    beta: float = 0.0
    lam: float = 0.0
    mode: str = "spectral"

    def __post_init__(self):
        if self.s < 0:
            raise ParameterError(f"Sobolev index must satisfy s >= 0, got s={self.s}")
        if not 0.0 <= self.lam < 0.125:
            raise ParameterError(f"lambda must satisfy 0 <= lambda < 1/8, got {self.lam}")
        if self.mode not in ("spectral", "kernel"):
            raise ParameterError(f"mode must be 'spectral' or 'kernel', got {self.mode!r}")


@dataclass
class GridFunction:
    """Samples on a uniform 1D or 2D grid.

    ``h`` is the spacing (a float, or one value per axis), ``origin`` the
    coordinate of the first node and ``support`` an optional box
    ((lo, hi) per axis) that must sit strictly inside the grid.
    """

    values: np.ndarray
    h: object
    origin: object = 0.0
    support: tuple = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.size == 0:
            raise ValueError("grid function has no samples")
        if self.values.ndim not in (1, 2):
            raise ValueError("grid functions are 1D or 2D")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid function values must be finite")
        if np.any(np.asarray(self.spacing) <= 0):
            raise ValueError("grid spacing must be positive")
        if self.support is not None:
            box = np.atleast_2d(np.asarray(self.support, dtype=float))
            for ax, (lo, hi) in enumerate(box):
                a = self.axis(ax)
                if not (a[0] < lo <= hi < a[-1]):
                    raise ValueError("declared support must lie strictly inside the grid")

    @property
    def spacing(self):
        h = np.broadcast_to(np.asarray(self.h, dtype=float), (self.values.ndim,))
        return tuple(float(v) for v in h)

    def axis(self, k=0):
        o = np.broadcast_to(np.asarray(self.origin, dtype=float), (self.values.ndim,))
        return o[k] + self.spacing[k] * np.arange(self.values.shape[k])

    @classmethod
    def sample(cls, func, lo, hi, n, support=None):
        """Sample ``func`` at n nodes of [lo, hi] (1D)."""
        x = np.linspace(lo, hi, n)
        return cls(func(x), (hi - lo) / (n - 1), lo, support)


# --------------------------------------------------------------------------
# Spectral engine

def log_sobolev_multiplier(xi, s, beta):
    """|xi|^s (1 + |ln|xi||)^(-beta), with the value at xi = 0 taken as the
    limit (1 when s = beta = 0, else 0)."""
    a = np.abs(np.asarray(xi, dtype=float))
    out = np.zeros_like(a)
    nz = a > 0
    out[nz] = a[nz] ** s * (1.0 + np.abs(np.log(a[nz]))) ** (-beta)
    if s == 0 and beta == 0:
        out[~nz] = 1.0
    return out


def spectral_norm(f: GridFunction, spec: NormSpec) -> float:
    """Discrete homogeneous log-Sobolev norm via the unitary FFT, xi in cycles."""
    u = f.values
    U = np.fft.fftn(u, norm="ortho")
    freqs = [np.fft.fftfreq(n, d=h) for n, h in zip(u.shape, f.spacing)]
    grids = np.meshgrid(*freqs, indexing="ij")
    xi = np.sqrt(sum(g * g for g in grids))
    m = log_sobolev_multiplier(xi, spec.s, spec.beta)
    cell = float(np.prod(f.spacing))
    return float(math.sqrt(cell * np.sum(np.abs(U) ** 2 * m * m)))


def multiplier_embedding_check(s, beta, lam, xi_range=(1e-6, 1e6), n=20001) -> dict:
    """Numerical shadow of the embedding Hdot^s(ln H)^-beta -> Hdot^(s-lam).

    On |xi| >= 1 the ratio |xi|^(s-lam) / (|xi|^s (1+ln|xi|)^-beta)
    = (1+u)^beta e^(-lam u), u = ln|xi|, is evaluated in the log variable.
    Its maximizer is u* = beta/lam - 1, reported with the sup over the range.
    Growth of the sup under range extension (checked up to the 4th power of
    the upper end) is flagged as divergence.  On |xi| <= 1 the ratio of the
    log weight to |xi|^s, (1+|ln|xi||)^-beta, is reported.
    """
    lo, hi = xi_range
    if not (0 < lo < 1 < hi):
        raise ValueError("xi_range must satisfy 0 < lo < 1 < hi")

    def log_ratio(u):
        return beta * np.log1p(u) - lam * u

    def sup_upto(umax):
        u = np.linspace(0.0, umax, n)
        r = log_ratio(u)
        j = int(np.argmax(r))
        return float(np.exp(r[j])), float(u[j])

    U = math.log(hi)
    sups = [sup_upto(k * U) for k in (1, 2, 4)]
    range_sup, u_at = sups[0]
    growing = all(b[0] > a[0] * (1 + 1e-12) for a, b in zip(sups, sups[1:]))
    if lam > 0:
        u_star = max(beta / lam - 1.0, 0.0)
        global_sup = float(math.exp(log_ratio(u_star)))
        xi_star = float(math.exp(u_star))
    else:
        u_star, xi_star = math.inf, math.inf
        global_sup = math.inf if beta > 0 else 1.0
    low = np.linspace(math.log(lo), 0.0, n)
    low_ratio = (1.0 + np.abs(low)) ** (-beta)
    return {
        "range": [lo, hi],
        "high_sup": range_sup,
        "high_argmax": float(math.exp(u_at)),
        "maximizer": xi_star,
        "maximizer_in_range": bool(xi_star <= hi),
        "global_sup": global_sup,
        "diverges": bool(growing and not math.isfinite(global_sup)),
        "bounded": bool(math.isfinite(global_sup)),
        "low_sup": float(np.max(low_ratio)),
    }


# --------------------------------------------------------------------------
# Kernel engine

def kernel_exponent(lam):
    if not 0.0 <= lam < 0.125:
        raise ParameterError(f"lambda must satisfy 0 <= lambda < 1/8, got {lam}")
    return 0.5 - 2.0 * lam


def riesz_constant(gamma):
    """Fourier transform constant of |x|^-gamma (cycles convention):
    FT[|x|^-gamma](xi) = c |xi|^(gamma-1)."""
    return math.pi ** (gamma - 0.5) * math.gamma((1.0 - gamma) / 2.0) / math.gamma(gamma / 2.0)


def kernel_weights(n, h, gamma):
    """Toeplitz weights c_m, m = -(n-1)..(n-1), of product integration of
    |x - y|^-gamma against piecewise-linear data on spacing h."""
    m = np.arange(-(n - 1), n, dtype=float)
    k = (1.0 - gamma) * (2.0 - gamma)

    def F(u):
        return np.abs(u) ** (2.0 - gamma) / k

    return h ** (1.0 - gamma) * (F(m + 1.0) - 2.0 * F(m) + F(m - 1.0))


def _cell_weights(a, b, gamma):
    """Weights of the two end values of a linear function on [a, b] in
    int_a^b |u|^-gamma f(u) du (a < b, arrays)."""
    p0, p1 = 1.0 - gamma, 2.0 - gamma

    def q0(u):
        return np.sign(u) * np.abs(u) ** p0 / p0

    def q1(u):
        return np.abs(u) ** p1 / p1

    d0 = q0(b) - q0(a)
    d1 = q1(b) - q1(a)
    h = b - a
    return (b * d0 - d1) / h, (d1 - a * d0) / h


def kernel_apply(g, h, gamma):
    """(T g)_i = int_{x_0}^{x_{n-1}} |x_i - y|^-gamma g(y) dy, exact for
    piecewise-linear g."""
    n = g.size
    c = kernel_weights(n, h, gamma)
    out = fftconvolve(g, c, mode="full")[n - 1:2 * n - 1]
    # the Toeplitz weights use full hats; drop the half cells past both ends
    m = np.arange(n, dtype=float)
    outer_first = _cell_weights(-m - 1.0, -m, gamma)[1]
    outer_last = _cell_weights(n - 1.0 - m, n - m, gamma)[0]
    return out - h ** (1.0 - gamma) * (outer_first * g[0] + outer_last * g[-1])


def _trapezoid_weights(n, h):
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def kernel_terms(g1, g2, h, gamma):
    """Per-node contributions whose sum is the symmetrized kernel form."""
    w = _trapezoid_weights(g1.size, h)
    return 0.5 * w * (g1 * kernel_apply(g2, h, gamma) + g2 * kernel_apply(g1, h, gamma))


def kernel_form(g1: GridFunction, g2: GridFunction, lam: float) -> float:
    """int int g1(x) |x - y|^-(1/2 - 2 lam) g2(y) dx dy on a shared 1D grid."""
    gamma = kernel_exponent(lam)
    if g1.values.ndim != 1 or g1.values.shape != g2.values.shape:
        raise ValueError("kernel_form needs two 1D grid functions on the same grid")
    if not np.isclose(g1.spacing[0], g2.spacing[0], rtol=1e-12, atol=0):
        raise ValueError("kernel_form needs two 1D grid functions on the same grid")
    return float(np.sum(kernel_terms(g1.values, g2.values, g1.spacing[0], gamma)))


def kernel_apply_nonuniform(x, g, gamma, chunk=256):
    """(T g)(x_i) = int |x_i - y|^-gamma g(y) dy for g piecewise linear on the
    increasing nodes x, integrated exactly cell by cell."""
    x = np.asarray(x, dtype=float)
    g = np.asarray(g, dtype=float)
    out = np.empty(x.size)
    for s in range(0, x.size, chunk):
        u = x[None, :] - x[s:s + chunk, None]
        left, right = _cell_weights(u[:, :-1], u[:, 1:], gamma)
        out[s:s + chunk] = left @ g[:-1] + right @ g[1:]
    return out


def trapezoid_weights_nonuniform(x):
    dx = np.diff(x)
    w = np.zeros(x.size)
    w[:-1] += 0.5 * dx
    w[1:] += 0.5 * dx
    return w


def kernel_form_nonuniform(x, g1, g2, lam) -> float:
    """kernel_form on an arbitrary increasing node set (same quadrature rule)."""
    gamma = kernel_exponent(lam)
    w = trapezoid_weights_nonuniform(np.asarray(x, dtype=float))
    t12 = g1 * kernel_apply_nonuniform(x, g2, gamma)
    t21 = g2 * kernel_apply_nonuniform(x, g1, gamma)
    return float(np.sum(0.5 * w * (t12 + t21)))


# --------------------------------------------------------------------------
# Windowed I(t)
#
# The physical mesh at time t is the image x_j = phi(t, y_j) of a uniform seed
# grid, so nodes crowd exactly where characteristics compress.  Seeds left of
# the profile domain carry the zero continuation of chi.

DEFAULT_WINDOW_SEEDS = 3001
DEFAULT_WINDOW_X2 = 5
LAYER_MIN_NODES = 8


@dataclass
class WindowSlices:
    """(psi1 v)_xx on the blow-up window, one physical mesh per x2 node.

    ``profiles[j]`` is (x, g) for x2 node j; the full h_xx is psi2 * g with
    ``psi2_values[j]`` the x2 cutoff value.  ``layer_nodes`` counts the mesh
    nodes where phi_x is within twice its window minimum.
    """

    profiles: list
    x2: np.ndarray
    x2_weights: np.ndarray
    psi2_values: np.ndarray
    center: float
    delta: float
    min_phi_x: float
    layer_nodes: int
    seeds: np.ndarray = None

    def node_terms(self, lam):
        """Per slice: (x, per-node contributions to the slice's kernel form)."""
        gamma = kernel_exponent(lam)
        cache = {}
        out = []
        for x, g in self.profiles:
            key = id(g)
            if key not in cache:
                w = trapezoid_weights_nonuniform(x)
                cache[key] = (x, w * g * kernel_apply_nonuniform(x, g, gamma))
            out.append(cache[key])
        return out

    def _slice_factors(self):
        return self.x2_weights * self.psi2_values ** 2

    def value(self, lam):
        terms = self.node_terms(lam)
        return float(sum(f * np.sum(c) for f, (_, c) in zip(self._slice_factors(), terms)))

    def split(self, lam):
        """(I1, I2, I3): outer sum restricted to x < X - d, |x - X| <= d, x > X + d."""
        parts = np.zeros(3)
        for f, (x, c) in zip(self._slice_factors(), self.node_terms(lam)):
            left = x < self.center - self.delta
            right = x > self.center + self.delta
            mid = ~(left | right)
            parts += f * np.array([np.sum(c[left]), np.sum(c[mid]), np.sum(c[right])])
        return tuple(float(p) for p in parts)


def window_x2_nodes(nu2, delta, n):
    x2 = np.linspace(nu2 - 2.0 * delta, nu2 + 2.0 * delta, n)
    return x2, _trapezoid_weights(n, x2[1] - x2[0])


def _window_profile(center, delta, x, v, vx, vxx, phi_x):
    """Trim to the cutoff support (plus one node each side) and form
    (psi1 v)_xx = psi1'' v + 2 psi1' v_x + psi1 v_xx."""
    inside = np.flatnonzero(np.abs(x - center) <= 2.0 * delta)
    if inside.size < 2:
        raise ResolutionError("fewer than two mesh nodes fall inside the window")
    lo, hi = max(inside[0] - 1, 0), min(inside[-1] + 2, x.size)
    sl = slice(lo, hi)
    psi1 = CutoffProfile(center, delta)
    p0, p1, p2 = psi1.evaluate(x[sl])
    g = p2 * v[sl] + 2.0 * p1 * vx[sl] + p0 * vxx[sl]
    px = phi_x[inside]
    return x[sl], g, float(np.min(px)), int(np.sum(px <= 2.0 * np.min(px)))


def _check_before(t_list, report):
    for t in t_list:
        if not t < report.t_eps:
            raise DomainError(f"t = {t} is not before the blow-up time {report.t_eps}")


def _preimage(phi_vals, seeds, center, delta):
    a = np.searchsorted(phi_vals, center - 2 * delta) - 1
    b = np.searchsorted(phi_vals, center + 2 * delta)
    if a < 0 or b >= seeds.size:
        raise ResolutionError("window preimage leaves the seed domain")
    return seeds[a], seeds[b]


def closed_form_window(cf, report, t, delta, n_seed=DEFAULT_WINDOW_SEEDS,
                       n_x2=DEFAULT_WINDOW_X2, seeds=None):
    """Window samples for the 1D closed-form solution v = e^{ct} chi(y).

    The seed grid is uniform over the window preimage unless ``seeds`` is
    given (e.g. the grid a field reconstruction used).
    """
    from .characteristics import ClosedFormCharacteristics

    _check_before([t], report)
    cfe = ClosedFormCharacteristics(cf.params, cf.chi.extended_by_zero())
    center = report.values["window_center"]
    if seeds is None:
        probe = np.linspace(-0.5, 0.5, 20001)
        a, b = _preimage(cfe.phi(t, probe), probe, center, delta)
        y = np.linspace(a, b, n_seed)
    else:
        y = np.asarray(seeds, dtype=float)
    chi, d1, d2 = cfe.chi.evaluate(y)
    E = math.exp(cf.c * t)
    py, _, pyy, _ = cfe.phi_derivatives(t, y, chi_values=(chi, d1, d2))
    x = cfe.phi(t, y, chi_values=(chi, d1, d2))
    w, W = E * d1, E * d2
    vx = w / py
    vxx = (W - pyy * w / py) / py ** 2
    prof = _window_profile(center, delta, x, E * chi, vx, vxx, py)
    x2, wx2 = window_x2_nodes(0.0, delta, n_x2)
    psi2 = CutoffProfile(0.0, delta)(x2)
    return WindowSlices([prof[:2]] * n_x2, x2, wx2, psi2, center, delta, prof[2], prof[3], y)


def windowed_I_closed_form(cf, report, t, delta, lam, **kw) -> float:
    return closed_form_window(cf, report, t, delta, **kw).value(lam)


def x2_dependent(problem):
    src = problem.source
    return problem.vtilde is not None or (src.name == "sine" and src.k2 != 0.0)


def field_windows(fld, report, t_list, delta, n_seed=DEFAULT_WINDOW_SEEDS,
                  n_x2=DEFAULT_WINDOW_X2):
    """Window samples at each t in ``t_list`` reconstructed from trajectories.

    A uniform grid of window seeds covering the preimage of the window at
    every requested time is integrated with the field's problem and step;
    nodes are the seeds' positions and v_x = w/phi_x,
    v_xx = (W - phi_xx w/phi_x)/phi_x^2 come straight from the states.
    """
    from .transport import integrate

    t_list = [float(t) for t in t_list]
    _check_before(t_list, report)
    prob = fld.problem
    chi = prob.chi.extended_by_zero()
    nu2 = report.nu2
    center = report.values["window_center"]
    x2_nodes, wx2 = window_x2_nodes(nu2, delta, n_x2)
    if np.any(np.abs(x2_nodes) > 0.5):
        raise ResolutionError("x2 window leaves [-1/2, 1/2]")
    x2_int = x2_nodes if x2_dependent(prob) else np.array([nu2])

    probe = np.linspace(-0.5, 0.5, 2001)
    pf = integrate(chi, prob.vtilde, prob.source, (probe, x2_int), max(t_list), fld.dt,
                   record_times=t_list, sign_check=False)
    lo, hi = math.inf, -math.inf
    for t in t_list:
        ph = pf.state("phi")[pf.time_index(t)]
        for j in range(x2_int.size):
            col = ph[:, j]
            ok = np.isfinite(col)
            a, b = _preimage(np.where(ok, col, np.inf), probe, center, delta)
            if not np.all(ok[(probe >= a) & (probe <= b)]):
                raise ResolutionError(f"a trajectory in the window preimage degenerated before t = {t}")
            lo, hi = min(lo, a), max(hi, b)
    seeds = np.linspace(lo, hi, n_seed)
    sub = integrate(chi, prob.vtilde, prob.source, (seeds, x2_int), max(t_list), fld.dt,
                    record_times=t_list, sign_check=False)
    psi2 = CutoffProfile(nu2, delta)(x2_nodes)
    out = []
    for t in t_list:
        st = sub.states[sub.time_index(t)]
        profiles, mins, layers = [], [], []
        for j in range(x2_int.size):
            phi, v, px, w, pxx, W = st[:, :, j]
            if np.any(np.isnan(px)):
                raise ResolutionError(f"a window trajectory degenerated before t = {t}")
            vx = w / px
            vxx = (W - pxx * vx) / px ** 2
            x, g, m, n_layer = _window_profile(center, delta, phi, v, vx, vxx, px)
            profiles.append((x, g))
            mins.append(m)
            layers.append(n_layer)
        if x2_int.size == 1:
            profiles = profiles * n_x2
        out.append(WindowSlices(profiles, x2_nodes, wx2, psi2, center, delta,
                                min(mins), min(layers), seeds))
    return out


def windowed_I(fld, report, t, delta_eps, lam, **kw) -> float:
    """I(t) = int_x2 int int h_xx(x) |x - y|^-(1/2 - 2 lam) h_xx(y) dx dy dx2
    for h = psi1(x1) psi2(x2) v(t, x1, x2) around phi(t_eps, nu)."""
    return field_windows(fld, report, [t], delta_eps, **kw)[0].value(lam)
