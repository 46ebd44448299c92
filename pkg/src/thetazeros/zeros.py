"""Zeros of theta-basis sections, Abel sums, and the zeros -> coefficients map."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sections import Section, SectionSpace, ThetaBasis
from .torus import Torus


class ZeroFinderError(RuntimeError):
    pass


@dataclass
class Configuration:
    """Multiset of torus points, stored reduced to the fundamental domain."""

    points: np.ndarray
    torus: Torus
    multiplicity: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.atleast_1d(self.torus.reduce(np.asarray(self.points, complex)))
        if self.multiplicity is None:
            self.multiplicity = np.ones(self.points.size, int)

    @property
    def N(self):
        return int(self.multiplicity.sum())

    def expanded(self):
        return np.repeat(self.points, self.multiplicity)

    def empirical(self):
        """Atoms and masses of the empirical measure (1/N) sum delta."""
        return self.points, self.multiplicity / self.N

    def __len__(self):
        return self.N


def abel_sum(cfg: Configuration, P0=0.0):
    return cfg.torus.reduce(np.sum(cfg.expanded() - P0))


def abel_partner(cfg: Configuration, N=None, P0=0.0):
    """The point P1 with zeta_1 + ... + zeta_N + P1 = (N+1) P0 modulo the lattice."""
    N = cfg.N if N is None else N
    return cfg.torus.reduce((N + 1) * P0 - np.sum(cfg.expanded()))


# ---------------------------------------------------------------- subdivision
def _newton(section: Section, z0, maxit=60):
    z = complex(z0)
    for _ in range(maxit):
        v, d = section.with_derivative(np.array([z]))
        v, d = v[0], d[0]
        if d == 0:
            break
        step = v / d
        z -= step
        if abs(step) < 1e-15 * (1 + abs(z)):
            break
    return z


def _local_scale(section: Section, z):
    F = section.basis.values(np.atleast_1d(z))
    return np.linalg.norm(F, axis=-1) * np.linalg.norm(section.a)


class _Subdivider:
    def __init__(self, section, origin, max_depth, max_pts):
        self.s = section
        self.tor = section.torus
        self.origin = origin
        self.max_depth = max_depth
        self.max_pts = max_pts
        self.cluster_depth = 14
        self.scale = np.linalg.norm(section.a) * np.sqrt(section.N)

    def z(self, a, b):
        return self.origin + self.tor.from_lattice(a, b)

    def edge_winding(self, p, q):
        """Total change of arg s along the segment p -> q (lattice coords).

        Sub-intervals where the argument jumps by more than pi/4 are bisected
        until resolved; a zero sitting on the edge raises _OnEdge.
        """
        # phase turns at most ~N times per unit length; sample well above that
        length = max(abs(q[0] - p[0]), abs(q[1] - p[1]))
        t = np.linspace(0.0, 1.0, max(17, int(np.ceil(12 * self.s.N * length)) + 1))
        v = self.s(self.z(p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
        for _ in range(60):
            if np.min(np.abs(v)) < 1e-13 * self.scale:
                raise _OnEdge
            d = np.angle(v[1:] / v[:-1])
            bad = np.abs(d) >= np.pi / 4
            if not bad.any():
                return d.sum()
            if t.size > self.max_pts or np.min(np.diff(t)[bad]) < 1e-12:
                raise _OnEdge
            tm = 0.5 * (t[:-1] + t[1:])[bad]
            vm = self.s(self.z(p[0] + tm * (q[0] - p[0]), p[1] + tm * (q[1] - p[1])))
            t = np.concatenate([t, tm])
            v = np.concatenate([v, vm])
            order = np.argsort(t)
            t, v = t[order], v[order]
        raise ZeroFinderError("argument sampling did not resolve along an edge")

    def winding(self, a0, a1, b0, b1):
        c = [(a0, b0), (a1, b0), (a1, b1), (a0, b1)]
        tot = sum(self.edge_winding(c[k], c[(k + 1) % 4]) for k in range(4))
        w = tot / (2 * np.pi)
        if abs(w - round(w)) > 1e-3:
            raise ZeroFinderError("non-integer winding number")
        return int(round(w))

    def run(self, n0):
        N = self.s.N
        total = self.winding(0.0, 1.0, 0.0, 1.0)
        if total != N:
            raise ZeroFinderError(f"argument principle count {total} != {N}")
        edges = np.linspace(0.0, 1.0, n0 + 1)
        cells = []
        for i in range(n0):
            for j in range(n0):
                box = (edges[i], edges[i + 1], edges[j], edges[j + 1])
                w = self.winding(*box)
                if w:
                    cells.append((box, w, 0))
        if sum(w for _, w, _ in cells) != N:
            raise ZeroFinderError("cell windings do not add up to the degree")
        zeros, mult = [], []
        while cells:
            box, w, depth = cells.pop()
            a0, a1, b0, b1 = box
            if w == 1:
                zc = _newton(self.s, self.z(0.5 * (a0 + a1), 0.5 * (b0 + b1)))
                a, b = self.tor.lattice_coords(zc - self.origin)
                # half-open containment keeps each zero in exactly one cell
                if a0 <= a < a1 and b0 <= b < b1:
                    zeros.append(zc)
                    mult.append(1)
                    continue
            if w > 1 and depth >= self.cluster_depth:
                # cell side below ~1e-5: report a multiple zero instead of resolving noise
                zeros.append(self.z(0.5 * (a0 + a1), 0.5 * (b0 + b1)))
                mult.append(w)
                continue
            if depth >= self.max_depth:
                if w == 1:
                    raise ZeroFinderError("Newton failed inside an isolating cell")
                zeros.append(self.z(0.5 * (a0 + a1), 0.5 * (b0 + b1)))
                mult.append(w)
                continue
            am, bm = 0.5 * (a0 + a1), 0.5 * (b0 + b1)
            subs = []
            for sub in ((a0, am, b0, bm), (am, a1, b0, bm), (a0, am, bm, b1), (am, a1, bm, b1)):
                ws = self.winding(*sub)
                if ws:
                    subs.append((sub, ws, depth + 1))
            if sum(ws for _, ws, _ in subs) != w:
                raise ZeroFinderError("sub-cell windings inconsistent")
            cells.extend(subs)
        return np.array(zeros), np.array(mult)


class _OnEdge(Exception):
    pass


def find_zeros(section: Section, method="subdivision", max_depth=24, tries=6):
    """All N zeros of a section on the torus, as a Configuration.

    ``subdivision``: argument-principle quadtree over a period cell, then
    Newton. ``laurent``: roots of the section's Laurent polynomial in
    exp(2 pi i z), Newton-polished, checked against the degree.
    """
    if not np.any(section.a):
        raise ValueError("section is identically zero")
    if method == "laurent":
        z = zeros_laurent(section.basis, section.a[None, :])[0]
        return Configuration(z, section.torus, meta={"method": "laurent"})
    N = section.N
    n0 = max(4, int(np.ceil(2 * np.sqrt(N))))
    rng = np.random.default_rng(12345)
    origin = 0.0
    for _ in range(tries):
        try:
            z, m = _Subdivider(section, origin, max_depth, 4096).run(n0)
            break
        except _OnEdge:
            origin = section.torus.from_lattice(*rng.uniform(-0.1, 0.1, 2))
    else:
        raise ZeroFinderError("could not place a cell grid away from the zeros")
    cfg = Configuration(z, section.torus, multiplicity=m, meta={"method": "subdivision"})
    if cfg.N != N:
        raise ZeroFinderError(f"found {cfg.N} zeros, expected {N}")
    return cfg


# ---------------------------------------------------------------- Laurent route
def _companion_roots(P):
    """Roots of polynomials sum_k P[:, k] w^k (rows), via batched companion eigenvalues."""
    S, L = P.shape
    deg = L - 1
    lead = P[:, -1]
    C = np.zeros((S, deg, deg), complex)
    C[:, 0, :] = -P[:, -2::-1] / lead[:, None]
    idx = np.arange(deg - 1)
    C[:, idx + 1, idx] = 1.0
    return np.linalg.eigvals(C)


def _batch_newton(basis, A, z, iters=8):
    for _ in range(iters):
        F, dF = basis.values(z, deriv=True)
        v = np.einsum("srj,sj->sr", F, A)
        d = np.einsum("srj,sj->sr", dF, A)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(d != 0, v / d, 0)
        step = np.where(np.abs(step) < 0.1, step, 0.1 * step / np.maximum(np.abs(step), 1e-300))
        z = z - step
    return z


def zeros_laurent(basis: ThetaBasis, A, chunk=2000, fallback=True, on_fail="raise"):
    """Zeros of many sections sharing one basis; A has shape (S, N). Returns (S, N).

    Rows whose root count is off (near band edges, clustered roots) are redone
    by subdivision when ``fallback`` is set. If that fails too, ``on_fail``
    decides: "raise" or "nan" (the row is filled with NaN and left to the caller).
    """
    A = np.atleast_2d(np.asarray(A, complex))
    S, N = A.shape
    tor = basis.torus
    out = np.empty((S, N), complex)
    for s0 in range(0, S, chunk):
        blk = A[s0:s0 + chunk]
        out[s0:s0 + chunk] = _laurent_block(basis, blk, fallback, on_fail)
    return out


def _band_roots(basis, A, y0, y1):
    """Candidate zeros with y0 <= Im z < y1 (absolute), from the Laurent
    polynomial recentred on the band so the companion matrix stays balanced."""
    T = basis.torus.T
    pad = 0.15
    k0, P = basis.laurent(A, band=(y0 / T - pad, y1 / T + pad))
    yc = 0.5 * (y0 + y1)
    k = k0 + np.arange(P.shape[1])
    # w = exp(-2 pi yc) w'; factor |P_k| exp(-2 pi yc k) peaks inside the window
    logmag = np.log(np.abs(P) + 1e-300) - 2 * np.pi * yc * k
    P = np.exp(logmag - logmag.max(axis=1, keepdims=True)) * np.exp(1j * np.angle(P))
    wp = _companion_roots(P)
    with np.errstate(divide="ignore"):
        y = yc - np.log(np.abs(wp)) / (2 * np.pi)
    x = np.angle(wp) / (2 * np.pi)
    inside = (y >= y0) & (y < y1) & np.isfinite(y)
    return np.where(inside, x + 1j * y, np.nan)


def _laurent_block(basis, A, fallback, on_fail="raise"):
    tor = basis.torus
    S, N = A.shape
    T = tor.T
    nb = max(1, int(np.ceil(N / 8)))
    edges = np.linspace(-0.02 * T, 1.02 * T, nb + 1)
    cands = [_band_roots(basis, A, edges[i], edges[i + 1]) for i in range(nb)]
    z_all = np.concatenate(cands, axis=1)
    keep = ~np.isnan(z_all)
    order = np.argsort(~keep, axis=1, kind="stable")
    z_sorted = np.take_along_axis(z_all, order, axis=1)
    rmax = int(keep.sum(axis=1).max())
    cand = z_sorted[:, :rmax]
    valid = ~np.isnan(cand)
    cand = np.where(valid, cand, 0.25 + 0.5j * T)
    cand = _batch_newton(basis, A, cand, iters=3)
    F = basis.values(cand)
    resid = np.abs(np.einsum("srj,sj->sr", F, A))
    scale = np.linalg.norm(F, axis=-1) * np.linalg.norm(A, axis=1)[:, None]
    good = valid & (resid < 1e-10 * scale)
    out = np.empty((S, N), complex)
    red = tor.reduce(np.where(good, cand, 0.0))
    for s in range(S):
        uniq = _dedupe(tor, red[s][good[s]])
        try:
            if uniq.size == N:
                out[s] = uniq
            elif fallback:
                out[s] = find_zeros(Section(basis, A[s]), "subdivision").expanded()
            else:
                raise ZeroFinderError(f"Laurent route found {uniq.size} zeros, expected {N}")
        except ZeroFinderError:
            if on_fail != "nan":
                raise
            out[s] = np.nan
    return out


def _dedupe(tor, pts, tol=1e-7):
    keep = []
    for p in pts:
        if all(tor.dist(p, q) > tol for q in keep):
            keep.append(p)
    return np.array(keep, complex)


# ---------------------------------------------------------------- zeros -> coefficients
def canonical_product(torus: Torus, zeta, z):
    """S(z) = prod_k E(z - zeta_k) * E(z - P1), P1 = -sum zeta exactly,
    times the degree-(N+1) metric factor exp(-(N+1) phi(z) / 2)."""
    zeta = np.asarray(zeta, complex)
    P1 = -zeta.sum()
    pts = np.append(zeta, P1)
    z = np.asarray(z, complex)
    d = z[..., None] - pts
    logscale = -0.5 * pts.size * torus.phi(z)
    E = torus.theta1(d) / torus.theta1_prime0
    # spread the metric factor over the factors so no partial product overflows
    return np.prod(E * np.exp(logscale / pts.size)[..., None], axis=-1)


class CanonicalCoordinates:
    """Affine coordinates of canonical sections in the degree-(N+1) space.

    The orthonormal frame is psi_0 = Phi^{P0} / ||Phi^{P0}|| followed by an
    orthonormal basis psi_1..psi_N of the sections vanishing at P0 = 0.
    Coordinates are E_j = Z_j / Z_0, so E_0 = 1 and E_1..E_N are free.
    """

    def __init__(self, large: SectionSpace, npts=None):
        self.space = large
        self.torus = large.torus
        self.N = large.N - 1
        phi = large.coherent_state(0.0)
        Q, _ = np.linalg.qr(np.column_stack([phi, np.eye(large.N, dtype=complex)]))
        Q = Q[:, : large.N]
        Q[:, 0] *= (phi @ Q[:, 0].conj()) / abs(phi @ Q[:, 0].conj())
        self.U = Q
        npts = npts or 4 * large.N
        m = int(np.ceil(np.sqrt(npts)))
        self.sample = self.torus.grid(m).ravel()
        F = large.basis.values(self.sample)
        self._F = F
        self._pinv = np.linalg.pinv(F)
        self.cond = np.linalg.cond(F)

    def onb(self, zeta):
        """Orthonormal-frame coefficients c of the canonical section."""
        target = canonical_product(self.torus, zeta, self.sample)
        a = self._pinv @ target
        resid = np.linalg.norm(self._F @ a - target) / np.linalg.norm(target)
        if resid > 1e-8:
            raise ValueError(f"configuration violates the Abel constraint (residual {resid:.1e})")
        return self.space.onb_coeffs(a)

    def frame_coeffs(self, zeta):
        return self.U.conj().T @ self.onb(zeta)

    def ecal(self, zeta):
        Z = self.frame_coeffs(zeta)
        return Z / Z[0]

    def frame_values(self, z):
        """Values of psi_0..psi_N (metric-scaled) at z."""
        return self.space.orthonormal(z) @ self.U


def canonical_section_coeffs(cfg, large: SectionSpace):
    """Coefficients (E_0 = 1, E_1, ..., E_N) of the canonical section of cfg."""
    zeta = cfg.expanded() if isinstance(cfg, Configuration) else np.asarray(cfg, complex)
    return CanonicalCoordinates(large).ecal(zeta)


def jacobian_closed_form(coords: CanonicalCoordinates, zeta):
    """det(d E_n / d zeta_k) from prime-form products over the Slater determinant."""
    tor = coords.torus
    zeta = np.asarray(zeta, complex)
    N = zeta.size
    P1 = -zeta.sum()
    Z0 = coords.frame_coeffs(zeta)[0]
    R = np.empty(N, complex)
    for m in range(N):
        others = np.append(np.delete(zeta, m), P1)
        R[m] = np.prod(tor.prime_form(zeta[m], others))
    Psi = coords.frame_values(zeta)[:, 1:]  # rows: points, cols: psi_1..psi_N
    # frame values carry exp(-(N+1) phi / 2); undo it to stay holomorphic
    unscale = np.exp(0.5 * (N + 1) * tor.phi(zeta))
    det_psi = np.linalg.det(Psi * unscale[:, None])
    return (-1) ** N * np.prod(R) / (Z0**N * det_psi)


def jacobian_fd(coords: CanonicalCoordinates, zeta, h=1e-5):
    zeta = np.asarray(zeta, complex)
    N = zeta.size
    J = np.empty((N, N), complex)
    for k in range(N):
        e = np.zeros(N)
        e[k] = h
        J[k] = (coords.ecal(zeta + e)[1:] - coords.ecal(zeta - e)[1:]) / (2 * h)
    return np.linalg.det(J)


def coefficient_jacobian_check(cfg_pair, large: SectionSpace, h=1e-5, min_sep=0.05):
    """|r1 / r2 - 1| with r = |det FD Jacobian|^2 / |closed form|^2 at two configurations."""
    coords = CanonicalCoordinates(large)
    ratios = []
    for cfg in cfg_pair:
        zeta = cfg.expanded() if isinstance(cfg, Configuration) else np.asarray(cfg, complex)
        pts = np.append(zeta, -zeta.sum())
        dmin = min(coords.torus.dist(p, q) for i, p in enumerate(pts) for q in pts[i + 1:])
        if dmin < min_sep:
            raise ValueError("configuration too close to the diagonal for a finite-difference Jacobian")
        ratios.append(abs(jacobian_fd(coords, zeta, h)) ** 2 / abs(jacobian_closed_form(coords, zeta)) ** 2)
    return abs(ratios[0] / ratios[1] - 1), ratios


# ---------------------------------------------------------------- genus zero
def vieta_coeffs(zeta):
    """Monic coefficients (highest degree first): signed elementary symmetric functions."""
    zeta = np.asarray(zeta, complex)
    c = np.array([1.0 + 0j])
    for r in zeta:
        c = np.append(c, 0) - r * np.append(0, c)
    return c


def vandermonde(zeta):
    zeta = np.asarray(zeta, complex)
    i, j = np.triu_indices(zeta.size, 1)
    return np.prod(zeta[i] - zeta[j])


def g0_jacobian_check(zeta, h=1e-6):
    """Relative error between |det d(vieta)/d zeta| and |Vandermonde|."""
    zeta = np.asarray(zeta, complex)
    N = zeta.size
    J = np.empty((N, N), complex)
    for k in range(N):
        e = np.zeros(N)
        e[k] = h
        J[k] = (vieta_coeffs(zeta + e)[1:] - vieta_coeffs(zeta - e)[1:]) / (2 * h)
    det = np.linalg.det(J)
    return abs(abs(det) - abs(vandermonde(zeta))) / abs(vandermonde(zeta))


def polynomial_roots(C):
    """Roots of polynomials with monomial coefficients C (increasing degree), row-wise."""
    C = np.atleast_2d(np.asarray(C, complex))
    if C.shape[1] == 3:
        a, b, c = C[:, 2], C[:, 1], C[:, 0]
        disc = np.sqrt(b * b - 4 * a * c)
        # pick the sign avoiding cancellation
        sgn = np.where((b.conj() * disc).real >= 0, 1.0, -1.0)
        q = -0.5 * (b + sgn * disc)
        return np.column_stack([q / a, c / q])
    return _companion_roots(C)


# ---------------------------------------------------------------- CSV rows
def config_row(cfg: Configuration, translate=0.0, seed=None, sample=None):
    """Flat row: N, re/im per zero, bundle translate, seed."""
    row = {"sample": sample, "N": cfg.N}
    for k, z in enumerate(cfg.expanded()):
        row[f"re{k}"] = float(z.real)
        row[f"im{k}"] = float(z.imag)
    t = complex(translate)
    row.update({"translate_re": t.real, "translate_im": t.imag, "seed": seed})
    return row


def config_from_row(row, torus: Torus):
    N = int(float(row["N"]))
    z = np.array([float(row[f"re{k}"]) + 1j * float(row[f"im{k}"]) for k in range(N)])
    return Configuration(z, torus)
