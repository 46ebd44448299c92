"""Green's potentials and energies, and the rate functionals built from them.

Grid measures live on the M x M midpoint grid of the period cell (lattice
coordinates). Each weight is read as mass spread uniformly over its cell, so
the energy kernel between nodes is the double cell average of G. That kernel
is translation invariant on the grid and is assembled from the Fourier series
of G; its circulant eigenvalues are nonpositive and vanish only on constants.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .measures import BaseMeasure
from .torus import Torus, polar_mean
from .zeros import CanonicalCoordinates, Configuration, abel_partner

_KERNELS: dict = {}


def green_fourier_coeff(torus: Torus, k1, k2):
    """Coefficient of exp(2 pi i (k1 a + k2 b)) in G, (a, b) lattice coordinates."""
    k1 = np.asarray(k1, float)
    k2 = np.asarray(k2, float)
    kk = k1**2 + ((k2 - k1 * torus.tau.real) / torus.T) ** 2
    with np.errstate(divide="ignore"):
        g = -1.0 / (np.pi * torus.T * kk)
    return np.where(kk == 0, 0.0, g)


class GridKernel:
    """Double cell average of G on the M x M grid, as a circulant operator."""

    def __init__(self, torus: Torus, M: int, L: int = 32):
        self.torus = torus
        self.M = M
        kap = np.fft.fftfreq(M, 1.0 / M)
        K1, K2 = np.meshgrid(kap, kap, indexing="ij")
        m = np.arange(-L, L + 1)
        lam = np.zeros((M, M))
        for m1 in m:
            k1 = K1 + M * m1
            s1 = np.sinc(k1 / M) ** 2
            k2 = K2[None] + M * m[:, None, None]
            s2 = np.sinc(k2 / M) ** 2
            lam += np.sum(green_fourier_coeff(torus, k1[None], k2) * s1 * s2, axis=0)
        # lam[kappa] = sum over the alias class of g_k * sinc^2 * sinc^2
        self.eig = lam * M * M
        self.kbar = np.real(np.fft.ifft2(lam)) * M * M

    @classmethod
    def get(cls, torus, M):
        key = (torus.tau, M)
        if key not in _KERNELS:
            _KERNELS[key] = cls(torus, M)
        return _KERNELS[key]

    def apply(self, w):
        """Cell-averaged potentials at all nodes of a weight array (M, M)."""
        return np.real(np.fft.ifft2(np.fft.fft2(w) * self.eig))

    def column(self, i, j):
        return np.roll(np.roll(self.kbar, i, axis=0), j, axis=1)

    def submatrix(self, idx):
        """Dense kernel block between flat node indices ``idx``."""
        i, j = np.divmod(np.asarray(idx), self.M)
        return self.kbar[(i[:, None] - i[None, :]) % self.M, (j[:, None] - j[None, :]) % self.M]


@dataclass
class GridMeasure:
    """Probability weights on the M x M grid; ``mask`` marks the support set K."""

    torus: Torus
    weights: np.ndarray
    mask: np.ndarray | None = None

    def __post_init__(self):
        w = np.asarray(self.weights, float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError("weights must be an M x M array")
        if np.any(w < -1e-15) or not np.isclose(w.sum(), 1.0, rtol=0, atol=1e-10):
            raise ValueError("weights must be nonnegative and sum to 1")
        self.weights = np.clip(w, 0, None)
        if self.mask is None:
            self.mask = np.ones(w.shape, bool)

    @property
    def M(self):
        return self.weights.shape[0]

    @property
    def nodes(self):
        return self.torus.grid(self.M)

    @property
    def kernel(self):
        return GridKernel.get(self.torus, self.M)

    @classmethod
    def uniform(cls, torus, M, mask=None):
        mask = np.ones((M, M), bool) if mask is None else mask
        return cls(torus, mask / mask.sum(), mask)

    @classmethod
    def from_base(cls, nu: BaseMeasure):
        if nu.mask is None:
            raise ValueError("base measure is not grid based")
        w = np.zeros(nu.mask.shape)
        w[nu.mask] = nu.weights
        return cls(nu.torus, w, nu.mask.copy())

    def to_rows(self):
        """(node index, weight) rows for the nonzero weights."""
        flat = self.weights.ravel()
        idx = np.nonzero(flat)[0]
        return np.column_stack([idx, flat[idx]])


def as_weights(mu):
    return mu.weights if isinstance(mu, GridMeasure) else np.asarray(mu)


# ---------------------------------------------------------------- potentials
def grid_potential(mu: GridMeasure):
    """U at every node, each cell's mass smeared over the cell (node cell averages)."""
    return mu.kernel.apply(mu.weights)


def cell_self_average(torus: Torus, M: int, n=24):
    """Mean of G(x, .) over the grid cell centred at x."""
    smooth = lambda p: torus.green(p, 0.0) - 2 * np.log(np.abs(p))
    return polar_mean(torus, 0.0, smooth, n=n, scale=1.0 / M)


def potential(mu, z):
    """Green's potential U^mu(z) = sum_i w_i G(z, x_i).

    ``mu`` is a GridMeasure, a Configuration (atoms of mass 1/N, or the given
    multiplicities) or an (atoms, masses) pair. Atoms at z are skipped; the
    second return value flags the points where that happened. For grid
    measures a node coinciding with z contributes its cell average instead.
    """
    z = np.atleast_1d(np.asarray(z, complex))
    if isinstance(mu, GridMeasure):
        tor = mu.torus
        nodes = mu.nodes.ravel()
        w = mu.weights.ravel()
        keep = w > 0
        nodes, w = nodes[keep], w[keep]
        G = tor.green(z[:, None], nodes[None, :])
        hit = ~np.isfinite(G)
        G = np.where(hit, cell_self_average(tor, mu.M), G)
        return G @ w, hit.any(axis=1)
    if isinstance(mu, Configuration):
        tor = mu.torus
        atoms, mass = mu.empirical()
    else:
        atoms, mass, tor = mu
    G = tor.green(z[:, None], np.asarray(atoms)[None, :])
    hit = ~np.isfinite(G)
    G = np.where(hit, 0.0, G)
    return G @ np.asarray(mass), hit.any(axis=1)


def potential_U(mu):
    """z -> U^mu(z), atoms at z excluded."""
    return lambda z: potential(mu, z)[0]


def energy(mu, nu=None):
    """Green's energy sum_ij w_i w_j Kbar_ij; with ``nu`` the mixed energy."""
    w = as_weights(mu)
    other = w if nu is None else as_weights(nu)
    kern = GridKernel.get(mu.torus, w.shape[0])
    return float(np.sum(other * kern.apply(w)))


def discrete_energy_EN(cfg: Configuration):
    """(1/N^2) sum_{i != j} G(zeta_i, zeta_j)."""
    z = cfg.expanded()
    G = cfg.torus.green(z[:, None], z[None, :])
    off = ~np.eye(z.size, dtype=bool)
    return float(G[off].sum() / z.size**2)


def discrete_JN(cfg: Configuration, nu: BaseMeasure, N=None, literal=False):
    """J_N = (1/N) log int exp(N U^{mu_zeta} + G(., P1)) d nu.

    P1 is the Abel partner of the configuration. ``literal`` puts N G(., P1)
    in the exponent instead, i.e. the partner potential unscaled by 1/N.
    """
    N = cfg.N if N is None else N
    tor = cfg.torus
    P1 = abel_partner(cfg, N)
    z = nu.nodes
    zeta = cfg.expanded()
    expo = tor.green(z[:, None], zeta[None, :]).sum(axis=1)
    expo = expo + (N if literal else 1) * tor.green(z, P1)
    keep = nu.weights > 0
    e, w = expo[keep], nu.weights[keep]
    top = e.max()
    return float((top + np.log(np.sum(w * np.exp(e - top)))) / N)


# ---------------------------------------------------------------- rate functions
def sup_on(U, mask):
    return float(U[mask].max())


def rate_I(mu: GridMeasure, mask=None):
    """I(mu) = -E(mu)/2 + sup over the nodes of K of U^mu."""
    mask = mu.mask if mask is None else mask
    U = grid_potential(mu)
    E = float(np.sum(mu.weights * U))
    return -0.5 * E + sup_on(U, mask)


def rate_I_tilde(mu: GridMeasure, E0, mask=None):
    return rate_I(mu, mask) - E0


def rate_IN(cfg: Configuration, nu: BaseMeasure, N=None, literal=False):
    """I_N = -E_N / 2 + (N + 1)/N J_N."""
    N = cfg.N if N is None else N
    return -0.5 * discrete_energy_EN(cfg) + (N + 1) / N * discrete_JN(cfg, nu, N, literal)


# ---------------------------------------------------------------- identity check
def log_norm_mean(torus: Torus, log_norm, zeros, M=64):
    """omega-mean of a log-norm whose only singularities are log|z - a|^2 at ``zeros``.

    The point-norm logs log||1_a||^2 are subtracted (their means come from the
    polar rule) and the smooth periodic remainder is averaged on a grid.
    """
    g = torus.grid(M).ravel()
    sing = sum(torus.log_point_norm(g, a) for a in zeros)
    rest = np.mean(log_norm(g) - sing)
    return float(rest + sum(torus.rho_omega(a) for a in zeros))


def norm_potential_identity_check(cfg: Configuration, large, npts=20, rng=None):
    """Max relative error of (1/N)(log||S||^2 - mean) = U^{mu_zeta} + (1/N) G(., P1).

    S is the canonical section of ``cfg`` rebuilt from its coefficients in the
    degree-(N+1) space ``large`` (built at translate 0), not from the product.
    """
    tor = cfg.torus
    N = cfg.N
    zeta = cfg.expanded()
    P1 = abel_partner(cfg, N)
    coords = CanonicalCoordinates(large)
    c = coords.onb(zeta)
    log_norm = lambda z: np.log(np.abs(large.orthonormal(z) @ c) ** 2)
    pts = np.append(zeta, P1)
    mean = log_norm_mean(tor, log_norm, pts)
    rng = rng or np.random.default_rng(0)
    z = tor.from_lattice(*rng.uniform(0, 1, (2, npts)))
    lhs = (log_norm(z) - mean) / N
    rhs = potential(cfg, z)[0] + tor.green(z, P1) / N
    return float(np.max(np.abs(lhs - rhs)) / np.max(np.abs(rhs)))
