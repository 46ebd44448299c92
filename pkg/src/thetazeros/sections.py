"""Holomorphic sections of degree-N line bundles on the torus and their ensembles.

Sections of the degree-N bundle with translate t are holomorphic functions with
the automorphy of theta1(z - t/N)^N, spanned by

    f_j(z) = theta[1/2 + j/N, N/2](N z - t, N tau),    j = 0..N-1.

Their zeros sum to t modulo the lattice. Every evaluation here returns values
already multiplied by exp(-N phi(z - t/N) / 2), so |value|^2 is the pointwise
metric norm and nothing overflows for large N.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import cholesky, solve_triangular

from .measures import BaseMeasure
from .torus import Torus, theta_char_sum

_CHUNK = 4096


class ThetaBasis:
    """Level-N theta basis of the bundle (N, t) with base point 0."""

    def __init__(self, torus: Torus, N: int, t: complex = 0.0):
        if int(N) != N or N < 1:
            raise ValueError("degree N must be a positive integer")
        self.torus = torus
        self.N = int(N)
        self.t = complex(t)
        self.chars = 0.5 + np.arange(self.N) / self.N

    def __repr__(self):
        return f"ThetaBasis(N={self.N}, t={self.t!r}, tau={self.torus.tau!r})"

    @property
    def abel_invariant(self):
        return self.torus.reduce(self.t)

    def log_scale(self, z):
        """-(N/2) phi(z - t/N): log of the metric factor folded into values."""
        return -0.5 * self.N * self.torus.phi(np.asarray(z) - self.t / self.N)

    def values(self, z, deriv=False):
        """Scaled basis values, shape z.shape + (N,); with ``deriv`` also d/dz."""
        z = np.asarray(z, dtype=complex)
        flat = z.ravel()
        out = np.empty((flat.size, self.N), complex)
        dout = np.empty_like(out) if deriv else None
        step = max(1, _CHUNK * 16 // self.N)
        tauN = self.N * self.torus.tau
        for s in range(0, flat.size, step):
            zz = flat[s:s + step]
            u = self.N * zz - self.t
            shift = np.pi / (self.N * self.torus.T) * u.imag**2
            res = theta_char_sum(
                (u + self.N / 2)[:, None], tauN, self.chars[None, :],
                shift=shift[:, None], deriv=deriv, precision=self.torus.precision * 1e-1,
            )
            if deriv:
                val, dval = res
                # the scale factor is not holomorphic; only the holomorphic part is differentiated
                out[s:s + step] = val
                dout[s:s + step] = self.N * dval
            else:
                out[s:s + step] = res
        out = out.reshape(z.shape + (self.N,))
        if deriv:
            return out, dout.reshape(z.shape + (self.N,))
        return out

    def laurent(self, a, band=(0.0, 1.0), tail=40.0):
        """Coefficients p_k with s(z) = exp(i pi N z) * sum_k p_k w^k, w = exp(2 pi i z).

        ``band`` is the range of Im z / T on which the truncation must be
        accurate; ``tail`` is the dropped log-magnitude. Returns (kmin, p).
        """
        N, T = self.N, self.torus.T
        y0, y1 = band[0] * T, band[1] * T
        width = np.sqrt(tail * N / (np.pi * T))
        mlo = (self.t.imag - N * y1) / T - width - 1
        mhi = (self.t.imag - N * y0) / T + width + 1
        k = np.arange(int(np.floor(mlo - N / 2)), int(np.ceil(mhi - N / 2)) + 1)
        m = k + N / 2
        j = np.mod(k, N)
        logc = 1j * np.pi * self.torus.tau * m**2 / N + 2j * np.pi * m / N * (N / 2 - self.t)
        a = np.asarray(a)
        return k[0], a[..., j] * np.exp(logc)


def gram_matrix(basis: ThetaBasis, nu: BaseMeasure, log_weight=None):
    """G_jk = sum_q w_q f_j(z_q) conj f_k(z_q) exp(-N phi) [* extra weight]."""
    F = basis.values(nu.nodes)
    w = nu.weights.copy()
    if log_weight is not None:
        lw = log_weight(nu.nodes)
        w = w * np.exp(lw - lw.max())
    G = (F.T * w) @ F.conj()
    return 0.5 * (G + G.conj().T)


class SectionSpace:
    """H^0 of a bundle with the inner product from (phi, nu).

    ``weight='embedded'`` multiplies the weight by ||1_{P1}(z)||^2 with
    P1 = -t, the inner product inherited from the degree-(N+1) space through
    s -> s * E(., P1).
    """

    def __init__(self, basis: ThetaBasis, nu: BaseMeasure, weight="admissible", cond_max=1e12):
        if weight not in ("admissible", "embedded"):
            raise ValueError("weight must be 'admissible' or 'embedded'")
        self.basis = basis
        self.nu = nu
        self.weight = weight
        self.torus = basis.torus
        self.N = basis.N
        self.partner = -basis.t
        G = gram_matrix(basis, nu, self._log_weight if weight == "embedded" else None)
        try:
            L = cholesky(G, lower=True)
        except np.linalg.LinAlgError:
            raise np.linalg.LinAlgError(
                "Gram matrix not positive definite; increase the quadrature resolution M"
            ) from None
        d = np.abs(np.diag(L))
        if (d.max() / d.min()) ** 2 > cond_max:
            raise np.linalg.LinAlgError(
                f"Gram matrix numerically singular (cond ~ {(d.max() / d.min()) ** 2:.1e}); "
                "the support is too thin for this resolution"
            )
        self.gram = G
        self.chol = L

    @classmethod
    def build(cls, torus, N, t=0.0, nu=None, weight="admissible", M=128):
        nu = nu if nu is not None else BaseMeasure.uniform_torus(torus, M)
        return cls(ThetaBasis(torus, N, t), nu, weight)

    def _log_weight(self, z):
        return self.torus.log_point_norm(z, self.partner)

    def log_weight(self, z):
        """Extra log weight beyond the admissible metric (zero unless embedded)."""
        if self.weight == "embedded":
            return self._log_weight(z)
        return np.zeros(np.shape(z))

    @property
    def dim(self):
        return self.N

    def orthonormal(self, z):
        F = self.basis.values(z)
        flat = F.reshape(-1, self.N)
        psi = solve_triangular(self.chol, flat.T, lower=True).T
        return psi.reshape(F.shape)

    @cached_property
    def _weight_ref(self):
        if self.weight == "embedded":
            return self._log_weight(self.nu.nodes).max()
        return 0.0

    def density_factor(self, z):
        """Pointwise factor turning |value|^2 into the metric density of nu's weight."""
        return np.exp(self.log_weight(z) - self._weight_ref)

    def raw_coeffs(self, c):
        """Raw-basis coefficients of sum_k c_k psi_k."""
        c = np.asarray(c)
        return solve_triangular(self.chol, c.T, lower=True, trans="T").T

    def onb_coeffs(self, a):
        return (self.chol.T @ np.asarray(a).T).T

    def section(self, c, seed=None):
        return Section(self.basis, self.raw_coeffs(c), space=self, coeffs=np.asarray(c), seed=seed)

    def bergman(self, z, w):
        """B(z, w) = sum_j psi_j(z) conj psi_j(w), metric-scaled at both points."""
        return self.orthonormal(z) @ self.orthonormal(w).conj().T

    def bergman_diag(self, z):
        """Metric Bergman density; integrates to N against nu."""
        return np.sum(np.abs(self.orthonormal(z)) ** 2, axis=-1) * self.density_factor(z)

    def coherent_state(self, P):
        """Coefficients of Phi^P = B(., P); <s, Phi^P> = s(P) in the same scaling."""
        return self.orthonormal(np.asarray([P]))[0].conj()

    def inner(self, s1, s2):
        """Quadrature inner product of two sections of this space."""
        v1, v2 = s1(self.nu.nodes), s2(self.nu.nodes)
        w = self.nu.weights * self.density_factor(self.nu.nodes)
        return np.sum(w * v1 * v2.conj())


@dataclass
class Section:
    """Holomorphic section given by raw coefficients in a theta basis."""

    basis: ThetaBasis
    a: np.ndarray
    space: SectionSpace | None = None
    coeffs: np.ndarray | None = None
    seed: object = None

    @property
    def N(self):
        return self.basis.N

    @property
    def torus(self):
        return self.basis.torus

    def __call__(self, z):
        return self.basis.values(z) @ self.a

    def with_derivative(self, z):
        F, dF = self.basis.values(z, deriv=True)
        return F @ self.a, dF @ self.a

    def norm2(self):
        if self.coeffs is not None:
            return float(np.sum(np.abs(self.coeffs) ** 2))
        raise ValueError("section has no orthonormal coefficients")


# ---------------------------------------------------------------- sampling
def complex_normal(rng, size):
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / np.sqrt(2)


def sample_gaussian(space: SectionSpace, rng):
    return space.section(complex_normal(rng, space.dim))


def sample_fs(space: SectionSpace, rng):
    while True:
        c = complex_normal(rng, space.dim)
        n = np.linalg.norm(c)
        if n > 0:
            return space.section(c / n)


def divide_out(section: Section, P1, npts=None):
    """Section f of the degree-N bundle with s = E(., P1) f, from a degree-(N+1)
    section s vanishing at P1 with zero Abel sum; found by least squares."""
    tor = section.torus
    N = section.N - 1
    fib = ThetaBasis(tor, N, -complex(P1))
    npts = npts or max(4 * N, 8)
    m = int(np.ceil(np.sqrt(npts)))
    g = (np.arange(m) + 0.5) / m - 0.5
    A, B = np.meshgrid(g, g, indexing="ij")
    off = tor.from_lattice(A, B).ravel()
    off = off[np.abs(off) > 0.2 / m]
    z = complex(P1) + off
    u = z - P1
    denom = tor.theta1(u) * np.exp(-np.pi / tor.T * u.imag**2)
    target = section(z) / denom
    F = fib.values(z)
    a, *_ = np.linalg.lstsq(F, target, rcond=None)
    resid = np.linalg.norm(F @ a - target) / max(np.linalg.norm(target), 1e-300)
    if resid > 1e-8:
        raise ValueError(f"section does not vanish at P1 (residual {resid:.1e})")
    return Section(fib, a, seed=section.seed)


class FSHEnsemble:
    """Haar-random bundle in Pic^N, then Fubini-Study in its fibre.

    The fibre over t with the embedded inner product is the hyperplane
    {s : s(P1) = 0}, P1 = -t, of the degree-(N+1) space, so a draw is a
    standard Gaussian in that space projected off the coherent state at P1.
    """

    def __init__(self, torus, N, nu=None, M=128):
        self.torus = torus
        self.N = N
        self.large = SectionSpace.build(torus, N + 1, 0.0, nu, M=M)

    def sample(self, rng, fiber=True):
        tor = self.torus
        ab = rng.uniform(0.0, 1.0, 2)
        t = complex(tor.from_lattice(ab[0], ab[1]))
        P1 = -t
        c = complex_normal(rng, self.N + 1)
        phi = self.large.coherent_state(P1)
        c = c - (c @ phi.conj()) / (phi @ phi.conj()) * phi
        c = c / np.linalg.norm(c)
        big = self.large.section(c)
        draw = FSHDraw(t=t, P1=P1, large=big)
        if fiber:
            draw.fiber = divide_out(big, P1)
        return draw


@dataclass
class FSHDraw:
    t: complex
    P1: complex
    large: Section
    fiber: Section | None = None


class PLEnsemble:
    """Fubini-Study on the degree-(N+1) space; one of the N+1 zeros is P1."""

    def __init__(self, torus, N, nu=None, M=128):
        self.torus = torus
        self.N = N
        self.large = SectionSpace.build(torus, N + 1, 0.0, nu, M=M)

    def sample(self, rng):
        return sample_fs(self.large, rng)


def sample_fsh(N, nu, rng, torus=None):
    torus = torus or nu.torus
    return FSHEnsemble(torus, N, nu).sample(rng)


# ---------------------------------------------------------------- genus zero
class PolynomialSpace:
    """Polynomials of degree <= N with the inner product int |p|^2 e^{-N phi} d nu."""

    def __init__(self, N, nu: BaseMeasure, phi=None):
        self.N = N
        self.nu = nu
        self.phi = phi
        V = np.vander(nu.nodes, N + 1, increasing=True)
        w = nu.weights * np.exp(-N * phi(nu.nodes)) if phi is not None else nu.weights
        G = (V.T * w) @ V.conj()
        self.gram = 0.5 * (G + G.conj().T)
        self.chol = cholesky(self.gram, lower=True)

    def monomial_coeffs(self, c):
        """Monomial coefficients (increasing degree) of sum_k c_k psi_k."""
        return solve_triangular(self.chol, np.asarray(c).T, lower=True, trans="T").T

    def sample_coeffs(self, rng, size):
        return self.monomial_coeffs(complex_normal(rng, (size, self.N + 1)))
