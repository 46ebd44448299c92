"""Unnormalized zero densities of the section ensembles and the determinant
identities behind them.

All densities are logs, defined up to a configuration-independent constant,
and are meant for ratio tests. Genus-one densities use the Abel partner
P1 = -sum(zeta) (base point 0).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .measures import BaseMeasure
from .sections import SectionSpace, ThetaBasis, complex_normal
from .torus import Torus
from .zeros import Configuration, polynomial_roots, vandermonde, zeros_laurent


def _points(cfg):
    if isinstance(cfg, Configuration):
        return cfg.expanded()
    return np.asarray(cfg, complex)


def _pairs_sum(f, zeta):
    """sum_{i<j} f(zeta_i, zeta_j) over the last axis."""
    n = zeta.shape[-1]
    i, j = np.triu_indices(n, 1)
    return f(zeta[..., i], zeta[..., j]).sum(axis=-1)


# ---------------------------------------------------------------- genus zero
def jpc_density_g0(zeta, nu: BaseMeasure, phi=None, N=None):
    """2 log|Delta(zeta)| - (N+1) log int prod|z - zeta_j|^2 e^{-N phi} d nu.

    ``zeta`` has shape (..., N). Coincident points give -inf.
    """
    zeta = _points(zeta)
    N = zeta.shape[-1] if N is None else N
    with np.errstate(divide="ignore"):
        logdelta = _pairs_sum(lambda a, b: np.log(np.abs(a - b) ** 2), zeta)
        z = nu.nodes
        lp = np.log(np.abs(z - zeta[..., None]) ** 2).sum(axis=-2)
    if phi is not None:
        lp = lp - N * phi(z)
    logint = logsumexp(lp, b=nu.weights, axis=-1)
    return logdelta - (N + 1) * logint


# ---------------------------------------------------------------- genus one
def _log_norm_integral(torus: Torus, pts, nu: BaseMeasure, partner_weight=1.0):
    """log int exp(sum_{a in zeta} G(z, a) + partner_weight G(z, P1)) d nu.

    ``pts`` has shape (..., N + 1) with P1 last.
    """
    z = nu.nodes
    G = torus.green(z, pts[..., None])
    G[..., -1, :] *= partner_weight
    return logsumexp(G.sum(axis=-2), b=nu.weights, axis=-1)


def with_partner(zeta, P0=0.0):
    """Append the Abel partner (N + 1) P0 - sum(zeta) along the last axis."""
    zeta = _points(zeta)
    P1 = (zeta.shape[-1] + 1) * P0 - zeta.sum(axis=-1, keepdims=True)
    return np.concatenate([zeta, P1], axis=-1)


def jpc_density_g1_pl(zeta, nu: BaseMeasure, torus: Torus = None, N=None, P0=0.0):
    """Projective linear ensemble: sum over all pairs among zeta and P1 of G,
    minus (N+1) log int exp(N U^{mu_zeta} + G(., P1)) d nu."""
    torus = torus or nu.torus
    pts = with_partner(zeta, P0)
    N = pts.shape[-1] - 1 if N is None else N
    core = _pairs_sum(torus.green, pts)
    return core - (N + 1) * _log_norm_integral(torus, pts, nu) + f_tilde_g1(torus, pts[..., -1], N, P0)


def jpc_density_g1_fsh(zeta, nu: BaseMeasure, torus: Torus = None, N=None, large=None, printed=False):
    """Fubini-Study-fibre ensemble: sum_{i<j} G(zeta_i, zeta_j)
    - N log int exp(N U^{mu_zeta} + G(., P1)) d nu + log B_W(P1),

    B_W the metric Bergman density of the degree-(N+1) space. ``printed``
    switches to exponent N + 1 without the Bergman factor (for comparison).
    """
    torus = torus or nu.torus
    pts = with_partner(zeta)
    N = pts.shape[-1] - 1 if N is None else N
    core = _pairs_sum(torus.green, pts[..., :-1])
    logint = _log_norm_integral(torus, pts, nu)
    if printed:
        return core - (N + 1) * logint + f_tilde_g1(torus, pts[..., -1], N)
    if large is None:
        large = SectionSpace(ThetaBasis(torus, N + 1, 0.0), nu)
    P1 = pts[..., -1]
    logB = np.log(large.bergman_diag(P1.ravel())).reshape(P1.shape)
    return core - N * logint + logB


def fsh_pl_log_ratio(zeta, nu, torus=None, large=None):
    """log K_FSH - log K_PL from the factor formula (algebraic cross-check)."""
    torus = torus or nu.torus
    pts = with_partner(zeta)
    N = pts.shape[-1] - 1
    if large is None:
        large = SectionSpace(ThetaBasis(torus, N + 1, 0.0), nu)
    P1 = pts[..., -1]
    cross = torus.green(pts[..., :-1], P1[..., None]).sum(axis=-1)
    logB = np.log(large.bergman_diag(P1.ravel())).reshape(P1.shape)
    return logB - cross + _log_norm_integral(torus, pts, nu) - f_tilde_g1(torus, P1, N)


def f_tilde_g1(torus: Torus, P1, N, P0=0.0):
    """P1-dependent factor: log||E(P1, P0)||^2 - log||theta(P1 - P0 - Delta)||^2
    - (N + 1) rho(P1), Delta = (1 + tau)/2.

    On the flat torus each piece is constant in P1; kept explicit so that the
    constancy is checked rather than assumed.
    """
    P1 = np.asarray(P1, complex)
    u = P1 - P0
    delta = (1 + torus.tau) / 2
    v = torus.center(u - delta)
    lognE = torus.log_point_norm(u, 0.0)
    lognT = 2 * np.log(np.abs(_theta3(torus, v))) - 2 * np.pi / torus.T * v.imag**2
    rho = torus.rho_omega(0.0, check=False)  # constant on the flat torus
    return lognE - lognT - (N + 1) * rho


def _theta3(torus: Torus, v):
    n = np.arange(-12, 13)
    return np.exp(1j * np.pi * torus.tau * n**2 + 2j * np.pi * n * np.asarray(v)[..., None]).sum(axis=-1)


# ---------------------------------------------------------------- identities
def slater_bergman_check(zeta, space: SectionSpace):
    """|det f_j(zeta_k)|^2 / det Gram against det B(zeta_j, zeta_k)."""
    zeta = _points(zeta)
    F = space.basis.values(zeta)
    lhs = abs(np.linalg.det(F)) ** 2 / np.linalg.det(space.gram).real
    B = space.bergman(zeta, zeta)
    rhs = np.linalg.det(B).real
    return abs(lhs - rhs) / abs(rhs)


def slater_orthonormal_check(zeta, space: SectionSpace):
    zeta = _points(zeta)
    lhs = abs(np.linalg.det(space.orthonormal(zeta))) ** 2
    rhs = np.linalg.det(space.bergman(zeta, zeta)).real
    return abs(lhs - rhs) / abs(rhs)


def bosonization_ratio(zeta, space: SectionSpace):
    """Slater side over the prime-form and theta side, both in metric norms.

    Right side: prod_{i<j} ||E(zeta_i, zeta_j)||^2 ||theta1(sum zeta - t)||^2.
    """
    tor = space.torus
    zeta = _points(zeta)
    F = space.basis.values(zeta)
    log_lhs = 2 * np.log(abs(np.linalg.det(F))) - np.log(np.linalg.det(space.gram).real)
    log_rhs = _pairs_sum(tor.log_point_norm, zeta)
    u = zeta.sum() - space.basis.t
    log_rhs += tor.log_point_norm(u, 0.0)
    return log_lhs - log_rhs


def bosonization_ratio_check(cfg_pair, space: SectionSpace):
    r1, r2 = (bosonization_ratio(c, space) for c in cfg_pair)
    return abs(np.expm1(r1 - r2))


def g0_bosonization_check(zeta):
    """det(zeta_j^k) against the Vandermonde product."""
    zeta = _points(zeta)
    V = np.vander(zeta, increasing=True)
    d = np.linalg.det(V)
    ref = vandermonde(zeta[::-1])
    return abs(d - ref) / abs(ref)


# ---------------------------------------------------------------- Monte Carlo cells
@dataclass
class CellTest:
    """Observed vs predicted cell probability ratios (relative to cell 0)."""

    observed: np.ndarray
    predicted: np.ndarray
    sigma: np.ndarray
    counts: np.ndarray
    n: int

    @property
    def z(self):
        return (self.observed - self.predicted) / self.sigma

    @property
    def ok(self):
        return bool(np.all(np.abs(self.z[1:]) < 3))

    def rows(self):
        return [
            {"cell": i, "count": int(self.counts[i]), "observed_ratio": float(self.observed[i]),
             "predicted_ratio": float(self.predicted[i]), "sigma": float(self.sigma[i]), "z": float(self.z[i])}
            for i in range(self.observed.size)
        ]


class PairCells:
    """Cells A_i x B_i for unordered pairs; rectangles are (x0, x1, y0, y1).

    Rectangles are in the coordinates handed to ``coords`` (plane coordinates
    for genus zero, lattice coordinates for the torus).
    """

    def __init__(self, cells, coords):
        self.cells = cells
        self.coords = coords

    @staticmethod
    def _inside(xy, r):
        x, y = xy
        return (x >= r[0]) & (x < r[1]) & (y >= r[2]) & (y < r[3])

    def scores(self, pairs, weights=None):
        """pairs: (S, k, 2) candidate pairs per sample; weights: (k,) per candidate."""
        a = self.coords(pairs[..., 0])
        b = self.coords(pairs[..., 1])
        out = np.empty((pairs.shape[0], len(self.cells)))
        w = np.full(pairs.shape[1], 1.0 / pairs.shape[1]) if weights is None else weights
        for c, (A, B) in enumerate(self.cells):
            hit = (self._inside(a, A) & self._inside(b, B)) | (self._inside(a, B) & self._inside(b, A))
            out[:, c] = hit @ w
        return out

    def integrate(self, log_density, to_complex, n=5):
        """int over A x B of exp(log_density) by tensor Gauss-Legendre, per cell
        (the constant Jacobian of the coordinates cancels in ratios)."""
        x, w = np.polynomial.legendre.leggauss(n)
        out = []
        for A, B in self.cells:
            nodes, wts = [], []
            for r in (A, B):
                xs = 0.5 * (r[1] - r[0]) * (x + 1) + r[0]
                ys = 0.5 * (r[3] - r[2]) * (x + 1) + r[2]
                X, Y = np.meshgrid(xs, ys, indexing="ij")
                nodes.append(to_complex(X.ravel(), Y.ravel()))
                wts.append(np.outer(w, w).ravel() * 0.25 * (r[1] - r[0]) * (r[3] - r[2]))
            Z1, Z2 = np.meshgrid(nodes[0], nodes[1], indexing="ij")
            W = np.outer(wts[0], wts[1])
            ld = log_density(np.stack([Z1.ravel(), Z2.ravel()], axis=-1))
            out.append(np.log(np.sum(W.ravel() * np.exp(ld - ld.max()))) + ld.max())
        return np.array(out)


def cell_test(scores, log_pred):
    """Ratio test of mean scores against predicted log cell masses (cell 0 = reference)."""
    n = scores.shape[0]
    p = scores.mean(axis=0)
    C = np.cov(scores, rowvar=False, bias=True)
    r_obs = p / p[0]
    r_pred = np.exp(log_pred - log_pred[0])
    var = r_obs**2 * (np.diag(C) / p**2 + C[0, 0] / p[0] ** 2 - 2 * C[:, 0] / (p * p[0])) / n
    sigma = np.sqrt(np.maximum(var, 1e-300))
    sigma[0] = np.inf
    return CellTest(r_obs, r_pred, sigma, (scores > 0).sum(axis=0), n)


# ---------------------------------------------------------------- samplers for N = 2 checks
def sample_g0_zeros(space, rng, size, chunk=200_000):
    out = []
    for s in range(0, size, chunk):
        C = space.sample_coeffs(rng, min(chunk, size - s))
        out.append(polynomial_roots(C))
    return np.concatenate(out)


def sample_pl_zeros(large: SectionSpace, rng, size, chunk=20_000, on_fail="raise"):
    """Zeros (size, N + 1) of Fubini-Study sections of the large space."""
    out = []
    for s in range(0, size, chunk):
        c = complex_normal(rng, (min(chunk, size - s), large.dim))
        out.append(zeros_laurent(large.basis, large.raw_coeffs(c), on_fail=on_fail))
    return np.concatenate(out)


def sample_fsh_zeros(large: SectionSpace, rng, size, chunk=20_000, on_fail="raise"):
    """Fibre zeros (size, N): P1 uniform, Gaussian in the large space projected
    off the coherent state at P1, the zero at P1 removed. Failed rows are NaN
    when ``on_fail="nan"``."""
    tor = large.torus
    out = []
    for s in range(0, size, chunk):
        k = min(chunk, size - s)
        ab = rng.uniform(0, 1, (k, 2))
        P1 = tor.from_lattice(ab[:, 0], ab[:, 1])
        c = complex_normal(rng, (k, large.dim))
        phi = large.orthonormal(P1).conj()
        c = c - (np.sum(c * phi.conj(), axis=1) / np.sum(np.abs(phi) ** 2, axis=1))[:, None] * phi
        Z = zeros_laurent(large.basis, large.raw_coeffs(c), on_fail=on_fail)
        d = tor.dist(Z, P1[:, None])
        drop = np.argmin(d, axis=1)
        keep = np.ones(Z.shape, bool)
        keep[np.arange(k), drop] = False
        out.append(Z[keep].reshape(k, -1))
    return np.concatenate(out)


# ---------------------------------------------------------------- N = 2 validation
_Q = np.pi / 4


def _sector(k, l0=-0.5, l1=0.5):
    return (k * _Q, (k + 1) * _Q, l0, l1)


# genus zero: (argument, log modulus) sectors; genus one: lattice-coordinate squares
G0_CELLS = [
    (_sector(0), _sector(4)), (_sector(0), _sector(2)), (_sector(0), _sector(1)), (_sector(0), _sector(3)),
    (_sector(1), _sector(5)), (_sector(0, -1, 0), _sector(4, 0, 1)), (_sector(0, -1, 0), _sector(4, -1, 0)),
]
_C = 0.25
G1_CELLS = [
    ((0, _C, 0, _C), (2 * _C, 3 * _C, 2 * _C, 3 * _C)),
    ((0, _C, 0, _C), (_C, 2 * _C, 0, _C)),
    ((0, _C, 0, _C), (_C, 2 * _C, _C, 2 * _C)),
    ((0, _C, 0, _C), (2 * _C, 3 * _C, 0, _C)),
    ((0, _C, _C, 2 * _C), (2 * _C, 3 * _C, 2 * _C, 3 * _C)),
    ((_C, 2 * _C, 2 * _C, 3 * _C), (3 * _C, 4 * _C, 3 * _C, 4 * _C)),
    ((0, _C, 2 * _C, 3 * _C), (_C, 2 * _C, 3 * _C, 4 * _C)),
]


def mc_cell_validation(kind, samples, rng, tau=1j, nu=None, quad_n=5, printed=False, cells=None):
    """Cell-ratio test of the N = 2 closed-form density against sampled zeros.

    kind "g0": Gaussian quadratics orthonormal for ``nu`` (default: uniform on
    the unit circle). "pl"/"fsh": genus-one ensembles on C/(Z + tau Z), nu
    default uniform on the half torus Im z < T/2 (non-uniform, so that the
    Bergman factor varies). Returns a CellTest.
    """
    if kind == "g0":
        from .sections import PolynomialSpace

        nu = nu or BaseMeasure.uniform_circle(0.0, 1.0, n=256)
        Z = sample_g0_zeros(PolynomialSpace(2, nu), rng, samples)
        pc = PairCells(cells or G0_CELLS, lambda z: (np.mod(np.angle(z), 2 * np.pi), np.log(np.abs(z))))
        # the polar-log chart has Jacobian |z|^2 per point
        logd = lambda W: jpc_density_g0(W, nu) + np.log(np.abs(W) ** 2).sum(axis=-1)
        pred = pc.integrate(logd, lambda x, y: np.exp(y + 1j * x), n=quad_n + 1)
        return cell_test(pc.scores(Z[:, None, :]), pred)
    tor = nu.torus if nu is not None else Torus(tau)
    nu = nu or BaseMeasure.uniform_rect(tor, 0.0, 1.0, 0.0, 0.5, 64)
    large = SectionSpace(ThetaBasis(tor, 3, 0.0), nu)
    pc = PairCells(cells or G1_CELLS, lambda z: tor.lattice_coords(tor.reduce(z)))
    if kind == "pl":
        Z = sample_pl_zeros(large, rng, samples)
        # each of the three zeros is P1 with equal probability
        S = pc.scores(np.stack([Z[:, [1, 2]], Z[:, [0, 2]], Z[:, [0, 1]]], axis=1))
        logd = lambda W: jpc_density_g1_pl(W, nu, tor)
    elif kind == "fsh":
        S = pc.scores(sample_fsh_zeros(large, rng, samples)[:, None, :])
        logd = lambda W: jpc_density_g1_fsh(W, nu, tor, large=large, printed=printed)
    else:
        raise ValueError(f"unknown ensemble {kind!r}")
    return cell_test(S, pc.integrate(logd, tor.from_lattice, n=quad_n))
