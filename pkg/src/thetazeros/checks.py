"""Property and identity checks that report numerical errors as dicts.

Shared by the CLI (``identity-check``, ``jpc-check``) and the test suite.
"""
from __future__ import annotations

import numpy as np

from .jpc import (
    bosonization_ratio_check,
    g0_bosonization_check,
    slater_bergman_check,
    slater_orthonormal_check,
)
from .measures import BaseMeasure
from .potential import norm_potential_identity_check
from .sections import Section, SectionSpace, ThetaBasis, sample_gaussian
from .torus import Torus, polar_mean
from .zeros import (
    Configuration,
    _Subdivider,
    abel_sum,
    coefficient_jacobian_check,
    find_zeros,
    g0_jacobian_check,
)


def random_points(torus: Torus, rng, n):
    return torus.from_lattice(*rng.uniform(0, 1, (2, n)))


def separated_points(torus: Torus, rng, n, min_sep=0.05, with_partner=True):
    """n uniform points, redrawn until all (and their Abel partner) are min_sep apart."""
    for _ in range(1000):
        z = random_points(torus, rng, n)
        pts = np.append(z, -z.sum()) if with_partner else z
        d = torus.dist(pts[:, None], pts[None, :])
        if np.all(d[np.triu_indices(pts.size, 1)] > min_sep):
            return z
    raise RuntimeError("could not draw a separated configuration")


# ---------------------------------------------------------------- theta and Green
def theta_suite(torus: Torus, rng, n=100):
    z = random_points(torus, rng, n)
    w = random_points(torus, rng, n)
    th = torus.theta1(z)
    qp1 = np.abs(torus.theta1(z + 1) + th) / np.abs(th)
    factor = -np.exp(-1j * np.pi * torus.tau - 2j * np.pi * z)
    qp2 = np.abs(torus.theta1(z + torus.tau) - factor * th) / np.abs(factor * th)
    E = torus.prime_form(z, w)
    anti = np.abs(E + torus.prime_form(w, z)) / np.abs(E)
    # powers of two keep z + h - z exact, so only the O(h^2) term remains
    diag = {}
    for k in (18, 24, 30):
        h = 2.0**-k
        diag[h] = float(np.max(np.abs(torus.prime_form(z + h, z) / h - 1)))
    return {
        "quasi_periodicity": float(max(qp1.max(), qp2.max())),
        "antisymmetry": float(anti.max()),
        "diagonal": diag,
        "diagonal_scaled": max(e / h for h, e in diag.items()),
    }


def green_suite(torus: Torus, rng, n=200, M=256, exclusion=0.15, box=0.125):
    z = random_points(torus, rng, n) + rng.integers(-2, 3, n)
    w = random_points(torus, rng, n)
    sym = np.max(np.abs(torus.green(z, w) - torus.green(w, z)))
    means = []
    for c in random_points(torus, rng, 3):
        smooth = lambda p, c=c: torus.green(p, c) - 2 * np.log(np.abs(p - c))
        means.append(abs(polar_mean(torus, c, smooth, n=48)))
    # 5-point Laplacian on a grid offset half a cell from the pole
    c = complex(random_points(torus, rng, 1)[0])
    h = 1.0 / M
    idx = (np.arange(-M // 2, M // 2) + 0.5) * h
    X, Y = np.meshgrid(idx, idx, indexing="ij")
    P = c + X + 1j * Y
    G = torus.green(P, c)
    lap = sum(torus.green(P + s, c) for s in (h, -h, 1j * h, -1j * h)) - 4 * G
    ddc = lap / (4 * np.pi * h * h)
    far = np.abs(X + 1j * Y) > exclusion
    inside = (np.abs(X) < box) & (np.abs(Y) < box)
    flux = np.sum(ddc[inside]) * h * h + inside.sum() * h * h / torus.T
    return {
        "symmetry": float(sym),
        "mean_zero": float(max(means)),
        "laplacian_far": float(np.max(np.abs(ddc[far] * torus.T + 1))),
        "flux": float(flux),
    }


# ---------------------------------------------------------------- zeros
def planted_section(torus: Torus, zeta, npts=None):
    """Section of the bundle with translate sum(zeta) vanishing exactly at zeta."""
    zeta = np.asarray(zeta, complex)
    N = zeta.size
    t = zeta.sum()
    basis = ThetaBasis(torus, N, t)
    m = int(np.ceil(np.sqrt(npts or 4 * N)))
    g = torus.grid(m).ravel()
    target = np.prod(torus.theta1(g[:, None] - zeta), axis=1) * np.exp(basis.log_scale(g))
    a, *_ = np.linalg.lstsq(basis.values(g), target, rcond=None)
    resid = np.linalg.norm(basis.values(g) @ a - target) / np.linalg.norm(target)
    if resid > 1e-10:
        raise RuntimeError(f"planted section fit residual {resid:.1e}")
    return Section(basis, a)


def recovery_error(torus: Torus, zeta, found):
    d = torus.dist(np.asarray(zeta)[:, None], np.asarray(found)[None, :])
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def zero_finder_suite(torus: Torus, rng, N=10, count=200, planted=20, t=0.3 + 0.2j, M=64):
    space = SectionSpace.build(torus, N, t, M=M)
    counts, arg_totals, abel = [], [], []
    for _ in range(count):
        s = sample_gaussian(space, rng)
        cfg = find_zeros(s)
        counts.append(cfg.N)
        arg_totals.append(_Subdivider(s, 0.1 + 0.1j, 1, 4096).winding(0.0, 1.0, 0.0, 1.0))
        abel.append(abel_sum(cfg))
    abel = np.array(abel)
    spread = float(np.max(torus.dist(abel, torus.reduce(t))))
    rec = []
    for _ in range(planted):
        zeta = separated_points(torus, rng, N, 1e-3, with_partner=False)
        rec.append(recovery_error(torus, zeta, find_zeros(planted_section(torus, zeta)).expanded()))
    return {
        "sections": count,
        "all_counts_exact": bool(np.all(np.array(counts) == N)),
        "all_argument_totals_exact": bool(np.all(np.array(arg_totals) == N)),
        "abel_spread": spread,
        "plant_recover": float(max(rec)),
    }


# ---------------------------------------------------------------- determinant identities
def slater_suite(torus: Torus, rng, Ns=(2, 3, 4, 5, 6), count=50, M=64, t=0.0):
    out = {}
    nu = BaseMeasure.uniform_torus(torus, M)
    for N in Ns:
        space = SectionSpace(ThetaBasis(torus, N, t), nu)
        errs = [
            max(slater_bergman_check(z, space), slater_orthonormal_check(z, space))
            for z in (random_points(torus, rng, N) for _ in range(count))
        ]
        out[N] = float(max(errs))
    return out


def bosonization_suite(torus: Torus, rng, N=4, pairs=20, M=64, t=0.0):
    space = SectionSpace(ThetaBasis(torus, N, t), BaseMeasure.uniform_torus(torus, M))
    errs = []
    for _ in range(pairs):
        a, b = random_points(torus, rng, N), random_points(torus, rng, N)
        errs.append(bosonization_ratio_check((a, b), space))
    perm = random_points(torus, rng, N)
    g0 = max(g0_bosonization_check(rng.standard_normal(N) + 1j * rng.standard_normal(N)) for _ in range(pairs))
    return {
        "pairs": float(max(errs)),
        "permutation": float(bosonization_ratio_check((perm, perm[::-1]), space)),
        "genus0": float(g0),
    }


def norm_identity_suite(torus: Torus, rng, N=5, configs=3, npts=20, M=128):
    large = SectionSpace.build(torus, N + 1, 0.0, M=M)
    errs = []
    for _ in range(configs):
        cfg = Configuration(separated_points(torus, rng, N), torus)
        errs.append(norm_potential_identity_check(cfg, large, npts, rng))
    return float(max(errs))


def jacobian_suite(torus: Torus, rng, N=2, pairs=5, M=64):
    large = SectionSpace.build(torus, N + 1, 0.0, M=M)
    errs = []
    for _ in range(pairs):
        a, b = (separated_points(torus, rng, N, 0.1) for _ in range(2))
        errs.append(coefficient_jacobian_check((a, b), large)[0])
    g0 = max(g0_jacobian_check(rng.standard_normal(3) + 1j * rng.standard_normal(3)) for _ in range(pairs))
    return {"genus1": float(max(errs)), "genus0": float(g0)}
