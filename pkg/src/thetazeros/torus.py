"""Flat complex torus C/(Z + tau Z): theta functions, prime form, Green's function."""
from __future__ import annotations

import warnings
from functools import cached_property

import numpy as np

LOG_EPS = np.log(np.finfo(float).eps)


def _check_finite(z):
    z = np.asarray(z, dtype=complex)
    if not np.all(np.isfinite(z)):
        raise ValueError("non-finite input")
    return z


def theta_char_sum(u, tau, a, shift=0.0, deriv=False, precision=1e-16):
    """sum_n exp(i pi tau (n+a)^2 + 2 pi i (n+a) u - shift).

    ``a`` broadcasts against ``u`` (typically a trailing axis of characteristics).
    ``shift`` is a real log-scale removed inside the exponent so that large
    values never overflow. With ``deriv`` the u-derivative is returned as well.
    """
    u = np.asarray(u, dtype=complex)
    a = np.asarray(a, dtype=float)
    T = tau.imag
    K = max(4, int(np.ceil(np.sqrt(-np.log(precision) / (np.pi * T)))) + 1)
    # centre the window on the dominant term
    n0 = np.round(-u.imag / T - a)
    k = np.arange(-K, K + 1)
    m = (n0 + a)[..., None] + k
    expo = 1j * np.pi * tau * m**2 + 2j * np.pi * m * u[..., None]
    expo = expo - np.asarray(shift)[..., None]
    terms = np.exp(expo)
    val = terms.sum(axis=-1)
    if not deriv:
        return val
    dval = (2j * np.pi * m * terms).sum(axis=-1)
    return val, dval


class Torus:
    """Lattice Z + tau Z with the flat form omega = dx dy / Im(tau).

    The metric potential is phi(z) = (2 pi / T) (Im z)^2, so dd^c phi = omega
    and |theta1(z)^N|^2 exp(-N phi) is lattice periodic.
    """

    def __init__(self, tau=1j, precision=1e-15):
        tau = complex(tau)
        if not np.isfinite(tau):
            raise ValueError("tau must be finite")
        if tau.imag <= 0:
            raise ValueError("Im(tau) must be positive")
        if not precision > 0:
            raise ValueError("precision must be positive")
        self.tau = tau
        self.T = tau.imag
        self.precision = float(precision)
        self.q = np.exp(1j * np.pi * tau)

    def __repr__(self):
        return f"Torus(tau={self.tau!r}, precision={self.precision!r})"

    # ------------------------------------------------------------------ lattice
    def lattice_coords(self, z):
        z = np.asarray(z, dtype=complex)
        b = z.imag / self.T
        a = z.real - b * self.tau.real
        return a, b

    def from_lattice(self, a, b):
        return np.asarray(a) + np.asarray(b) * self.tau

    def reduce(self, z):
        """Representative in {a + b tau : a, b in [0, 1)}."""
        scalar = np.ndim(z) == 0
        z = _check_finite(z)
        a, b = self.lattice_coords(z)
        inside = (a >= 0) & (a < 1) & (b >= 0) & (b < 1)
        a = np.mod(a, 1.0)
        b = np.mod(b, 1.0)
        a = np.where(a >= 1.0, 0.0, a)
        b = np.where(b >= 1.0, 0.0, b)
        out = self.from_lattice(a, b)
        # a second pass pins values that rounding pushed onto the far edge
        a2, b2 = self.lattice_coords(out)
        bad = (a2 < 0) | (a2 >= 1) | (b2 < 0) | (b2 >= 1)
        if np.any(bad):
            a = np.where(bad, np.clip(np.mod(a2, 1.0), 0, np.nextafter(1, 0)), a)
            b = np.where(bad, np.clip(np.mod(b2, 1.0), 0, np.nextafter(1, 0)), b)
            out = self.from_lattice(a, b)
        # points already in the domain are returned untouched
        out = np.where(inside, z, out)
        return complex(out) if scalar else out

    def center(self, z):
        """Lattice translate of z with both lattice coordinates in [-1/2, 1/2]."""
        a, b = self.lattice_coords(np.asarray(z, dtype=complex))
        return self.from_lattice(a - np.round(a), b - np.round(b))

    def dist(self, z, w):
        """Quotient distance, minimum over the 9 neighbouring translates."""
        u = self.center(np.asarray(z, dtype=complex) - np.asarray(w, dtype=complex))
        shifts = np.array([m + n * self.tau for m in (-1, 0, 1) for n in (-1, 0, 1)])
        d = np.abs(np.asarray(u)[..., None] + shifts).min(axis=-1)
        return float(d) if np.ndim(d) == 0 else d

    def grid(self, M):
        """Midpoint nodes of an M x M lattice-coordinate grid, shape (M, M)."""
        s = (np.arange(M) + 0.5) / M
        A, B = np.meshgrid(s, s, indexing="ij")
        return self.from_lattice(A, B)

    # ------------------------------------------------------------------ metric
    def phi(self, z):
        return 2 * np.pi / self.T * np.asarray(z).imag ** 2

    # ------------------------------------------------------------------ theta
    def _nterms(self, ymax):
        n = np.arange(0, 64)
        e = -np.pi * self.T * (n + 0.5) ** 2 + np.pi * (2 * n + 1) * ymax
        peak = int(np.argmax(e))
        keep = (e >= e[peak] + np.log(self.precision)) | (n <= peak)
        return max(8, int(np.nonzero(keep)[0].max()) + 2)

    def _theta1_series(self, z, deriv):
        ymax = float(np.max(np.abs(z.imag))) if z.size else 0.0
        n = np.arange(self._nterms(ymax))
        k = 2 * n + 1
        coef = 2 * (-1.0) ** n * np.exp(1j * np.pi * self.tau * (n + 0.5) ** 2)
        arg = np.pi * z[..., None] * k
        if deriv:
            return (coef * np.pi * k * np.cos(arg)).sum(axis=-1)
        return (coef * np.sin(arg)).sum(axis=-1)

    def theta1(self, z, deriv=False):
        """Odd Jacobi theta function with nome exp(i pi tau); ``deriv`` gives d/dz."""
        z = _check_finite(z)
        if deriv:
            return self._theta1_series(z, True)[()]
        a, b = self.lattice_coords(z)
        # points far off the real axis are pulled back by quasi-periodicity
        nb = np.where(np.abs(b) > 2.0, np.round(b), 0.0)
        ma = np.round(a)
        z0 = z - ma - nb * self.tau
        val = self._theta1_series(z0, False)
        if np.any(nb != 0) or np.any(ma != 0):
            sign = np.where((ma + nb) % 2 == 0, 1.0, -1.0)
            val = val * sign * np.exp(-1j * np.pi * nb**2 * self.tau - 2j * np.pi * nb * z0)
        return val[()]

    @cached_property
    def theta1_prime0(self):
        return complex(self.theta1(0.0, deriv=True))

    @cached_property
    def log_abs_eta(self):
        # theta1'(0) = 2 pi eta^3
        return np.log(abs(self.theta1_prime0) / (2 * np.pi)) / 3

    @cached_property
    def c0(self):
        """Offset c0 with G = log|E|^2 - (2 pi/T)(Im(z-w))^2 - c0 of omega-mean zero."""
        return -2 * (np.log(2 * np.pi) + 2 * self.log_abs_eta)

    def prime_form(self, z, w):
        z = np.asarray(z, dtype=complex)
        w = np.asarray(w, dtype=complex)
        d = z - w
        out = self.theta1(d) / self.theta1_prime0
        return np.where(d == 0, 0, out)[()]

    # ------------------------------------------------------------------ Green
    def log_point_norm(self, z, w):
        """log ||1_w(z)||^2 = log|E(z,w)|^2 - (2 pi/T)(Im(z-w))^2; lattice periodic."""
        return self.green(z, w) + self.c0

    def green(self, z, w):
        """Green's function of dd^c relative to omega, with -inf on the diagonal."""
        u = self.center(_check_finite(z) - _check_finite(w))
        u = np.asarray(u)
        th = self._theta1_series(u, False)
        with np.errstate(divide="ignore"):
            g = 2 * np.log(np.abs(th)) - 2 * self.log_abs_eta - 2 * np.pi / self.T * u.imag**2
        g = np.where(u == 0, -np.inf, g)
        return g[()]

    def rho_omega(self, w, n=40, check=True):
        """omega-mean of log ||1_w||^2 by a polar rule centred at w."""
        val = self._polar_mean_point_norm(w, n)
        if check:
            ref = self._polar_mean_point_norm(w, n // 2 + 8)
            if abs(ref - val) > 1e-9:
                warnings.warn(f"rho_omega quadrature unsettled: {abs(ref - val):.2e}")
        return val

    def _polar_mean_point_norm(self, w, n):
        smooth = lambda p: self.log_point_norm(p, w) - 2 * np.log(np.abs(p - w))
        return polar_mean(self, w, smooth, n)


def polar_mean(torus, center, smooth, n=40, scale=1.0):
    """Average of 2 log|z - center| + smooth(z) over the period parallelogram
    centred at ``center`` and shrunk by ``scale`` (1 gives the omega-mean).

    The parallelogram is cut into the four triangles joining ``center`` to its
    edges; the log part is integrated radially in closed form and ``smooth``
    by Gauss-Legendre in (r, angle).
    """
    tau = torus.tau
    verts = scale * np.array([0.5 + tau / 2, -0.5 + tau / 2, -0.5 - tau / 2, 0.5 - tau / 2])
    x, wx = np.polynomial.legendre.leggauss(n)
    total = 0.0
    for k in range(4):
        p, q = verts[k], verts[(k + 1) % 4]
        normal = -1j * (q - p) / abs(q - p)
        d = (p.conjugate() * normal).real
        if d < 0:
            normal, d = -normal, -d
        t0, t1 = np.angle(p), np.angle(q)
        if t1 < t0:
            t1 += 2 * np.pi
        th = 0.5 * (t1 - t0) * (x + 1) + t0
        wth = 0.5 * (t1 - t0) * wx
        e = np.exp(1j * th)
        R = d / (e.conjugate() * normal).real
        total += np.sum(wth * (R**2 * np.log(R) - R**2 / 2))
        r = 0.5 * R[:, None] * (x + 1)
        wr = 0.5 * R[:, None] * wx
        total += np.sum(wth[:, None] * wr * r * smooth(center + r * e[:, None]))
    return float(total / (torus.T * scale**2))
