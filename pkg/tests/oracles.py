"""Independent reference computations shared by the unit and acceptance tests."""

import numpy as np

_W1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_W2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
_S = np.arange(-2, 3)


def phi_fd_derivatives(cf, T, Y, h1=3e-4, h2=3e-3, ht=2e-3):
    """(phi_y, phi_ty, phi_yy, phi_tyy) from 4th-order central differences of
    phi.  Steps scale with max(y, eps); the linear part y + t is subtracted
    before differencing to keep roundoff out of the mixed stencils."""
    scale = np.maximum(Y, cf.params.eps)

    def r(dt, dy):
        return cf.phi(T + dt, Y + dy) - (T + dt) - (Y + dy)

    def stencil(wt, wy, hy, htt):
        out = 0.0
        for a, ca in zip(_S, wt):
            for b, cb in zip(_S, wy):
                if ca and cb:
                    out = out + ca * cb * r(a * htt, b * hy)
        return out

    delta = (_S == 0).astype(float)
    hy1, hy2 = h1 * scale, h2 * scale
    phi_y = 1.0 + stencil(delta, _W1, hy1, ht) / hy1
    phi_ty = stencil(_W1, _W1, hy1, ht) / (ht * hy1)
    phi_yy = stencil(delta, _W2, hy2, ht) / hy2 ** 2
    phi_tyy = stencil(_W1, _W2, hy2, ht) / (ht * hy2 ** 2)
    return phi_y, phi_ty, phi_yy, phi_tyy


def smooth_y_grid(eps, n=200, lo=None, hi=0.49, margin=4 * 3e-3):
    """n geometric nodes in [lo, hi] whose difference stencils do not straddle
    the ramp ends eps/2 and eps, where psi is only C^2."""
    lo = 0.5 * eps if lo is None else lo
    y = np.geomspace(lo, hi, int(1.4 * n))
    gap = margin * np.maximum(y, eps)
    y = y[(np.abs(y - 0.5 * eps) > gap) & (np.abs(y - eps) > gap)]
    return y[np.round(np.linspace(0, len(y) - 1, n)).astype(int)]


def floored_rel_error(approx, exact, floor=1e-3):
    """|approx - exact| / max(|exact|, floor * sup|exact|)."""
    scale = floor * np.max(np.abs(exact))
    return np.abs(approx - exact) / np.maximum(np.abs(exact), scale)


def gaussian_hdot_sq(a, s, beta=0.0):
    """Squared log-Sobolev seminorm of exp(-x^2/(2 a^2)) by quadrature of its
    Fourier transform (xi in cycles): sqrt(2 pi) a exp(-2 pi^2 a^2 xi^2)."""
    from scipy.integrate import quad

    def integrand(xi):
        fhat = np.sqrt(2 * np.pi) * a * np.exp(-2 * np.pi ** 2 * a ** 2 * xi ** 2)
        m = xi ** s * (1 + abs(np.log(xi))) ** (-beta) if xi > 0 else 0.0
        return 2 * (fhat * m) ** 2

    cut = 10.0 / a
    pts = [1.0] if cut > 1 else None
    return quad(integrand, 0, cut, points=pts, limit=400, epsabs=0, epsrel=1e-12)[0]
