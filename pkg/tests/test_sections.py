import numpy as np
import pytest
from scipy import stats

from thetazeros.checks import planted_section, random_points
from thetazeros.jpc import sample_fsh_zeros
from thetazeros.measures import BaseMeasure
from thetazeros.sections import (
    FSHEnsemble,
    PolynomialSpace,
    Section,
    SectionSpace,
    ThetaBasis,
    complex_normal,
    divide_out,
    gram_matrix,
    sample_fs,
    sample_gaussian,
)
from thetazeros.torus import Torus
from thetazeros.zeros import abel_sum, find_zeros


@pytest.fixture(scope="module")
def tor():
    return Torus(1j)


@pytest.fixture(scope="module")
def skew():
    return Torus(0.3 + 1.1j)


def test_basis_norms_are_lattice_periodic(skew):
    b = ThetaBasis(skew, 4, 0.2 + 0.1j)
    z = random_points(skew, np.random.default_rng(0), 20)
    v = np.abs(b.values(z))
    assert np.allclose(np.abs(b.values(z + 1)), v, rtol=1e-10)
    assert np.allclose(np.abs(b.values(z + skew.tau)), v, rtol=1e-10)


def test_single_basis_function_zero_at_translate(skew):
    t = 0.37 + 0.52j
    cfg = find_zeros(Section(ThetaBasis(skew, 1, t), np.array([1.0 + 0j])))
    assert cfg.N == 1
    assert skew.dist(cfg.points[0], t) < 1e-8


def test_gram_n3_positive_definite_and_well_conditioned(tor):
    G = gram_matrix(ThetaBasis(tor, 3, 0.0), BaseMeasure.uniform_torus(tor, 64))
    ev = np.linalg.eigvalsh(G)
    assert ev.min() > 0
    assert ev.max() / ev.min() < 1e3


def test_gram_diagonal_on_full_torus(skew):
    G = gram_matrix(ThetaBasis(skew, 5, 0.1), BaseMeasure.uniform_torus(skew, 64))
    off = G - np.diag(np.diag(G))
    assert np.abs(off).max() < 1e-12 * np.abs(np.diag(G)).max()


def test_gram_quadrature_converged(tor):
    b = ThetaBasis(tor, 4, 0.3)
    F1 = gram_matrix(b, BaseMeasure.uniform_torus(tor, 64))
    F2 = gram_matrix(b, BaseMeasure.uniform_torus(tor, 128))
    assert np.abs(F1 - F2).max() < 1e-8


def test_subdisk_gram_full_and_positive(tor):
    G = gram_matrix(ThetaBasis(tor, 4, 0.0), BaseMeasure.uniform_disk(tor, 0.5 + 0.5j, 0.3, 128))
    off = G - np.diag(np.diag(G))
    assert np.abs(off).max() > 1e-3
    assert np.linalg.eigvalsh(G).min() > 0


def test_translate_by_period_same_norms(skew):
    nu = BaseMeasure.uniform_disk(skew, 0.4 + 0.4j, 0.35, 64)
    z = random_points(skew, np.random.default_rng(1), 15)
    for shift in (1.0, skew.tau):
        a = SectionSpace(ThetaBasis(skew, 3, 0.2), nu).bergman_diag(z)
        b = SectionSpace(ThetaBasis(skew, 3, 0.2 + shift), nu).bergman_diag(z)
        assert np.allclose(a, b, rtol=1e-9)


def test_gaussian_mean_norm_is_dimension(tor):
    sp = SectionSpace.build(tor, 4, 0.0, M=32)
    rng = np.random.default_rng(2)
    c = complex_normal(rng, (10_000, 4))
    vals = sp.orthonormal(sp.nu.nodes) @ c.T
    norms = sp.nu.weights @ np.abs(vals) ** 2
    assert abs(norms.mean() - 4) < 3 * norms.std() / np.sqrt(norms.size)
    C = c.T @ c.conj() / c.shape[0]
    assert np.abs(C - np.eye(4)).max() < 0.05


def test_gaussian_seed_deterministic(tor):
    sp = SectionSpace.build(tor, 3, 0.0, M=32)
    a = sample_gaussian(sp, np.random.default_rng(9))
    b = sample_gaussian(sp, np.random.default_rng(9))
    assert np.array_equal(a.a, b.a)


def test_fs_unit_norm_and_same_zeros(tor):
    sp = SectionSpace.build(tor, 4, 0.2j, M=32)
    g = sample_gaussian(sp, np.random.default_rng(4))
    f = sample_fs(sp, np.random.default_rng(4))
    assert abs(np.linalg.norm(f.coeffs) - 1) < 1e-14
    zg = np.sort_complex(find_zeros(g).points)
    zf = np.sort_complex(find_zeros(f).points)
    assert np.abs(zg - zf).max() < 1e-10


def test_fs_and_gaussian_zero_histograms_agree(tor):
    sp = SectionSpace.build(tor, 2, 0.0, M=32)
    rng = np.random.default_rng(5)
    from thetazeros.zeros import zeros_laurent

    za = zeros_laurent(sp.basis, sp.raw_coeffs(complex_normal(rng, (4000, 2))))
    c = complex_normal(rng, (4000, 2))
    zb = zeros_laurent(sp.basis, sp.raw_coeffs(c / np.linalg.norm(c, axis=1, keepdims=True)))
    # the zeros of one draw are unordered; bin the gap between them
    bins = np.linspace(0, 0.75, 9)
    ha = np.histogram(tor.dist(za[:, 0], za[:, 1]), bins)[0]
    hb = np.histogram(tor.dist(zb[:, 0], zb[:, 1]), bins)[0]
    assert stats.chi2_contingency(np.array([ha, hb]))[1] > 1e-3


def test_bergman_reproducing(skew):
    sp = SectionSpace.build(skew, 4, 0.1, nu=BaseMeasure.uniform_disk(skew, 0.5 + 0.5j, 0.4, 96))
    rng = np.random.default_rng(6)
    for w in random_points(skew, rng, 20):
        s = sample_gaussian(sp, rng)
        phi = sp.section(sp.coherent_state(w))
        lhs = sp.inner(s, phi)
        assert abs(lhs - s(np.array([w]))[0]) < 1e-6 * abs(s(np.array([w]))[0]) + 1e-12


def test_bergman_diag_trace(skew):
    sp = SectionSpace.build(skew, 5, 0.0, nu=BaseMeasure.uniform_rect(skew, 0, 1, 0, 0.6, 64))
    d = sp.bergman_diag(sp.nu.nodes)
    assert np.all(d >= 0)
    assert abs(sp.nu.integrate(d) - 5) < 1e-10


def test_coherent_state_norm_and_orthogonality(tor):
    N, t = 4, 0.3 + 0.1j
    sp = SectionSpace.build(tor, N, t, M=64)
    rng = np.random.default_rng(7)
    P = complex(random_points(tor, rng, 1)[0])
    phi = sp.coherent_state(P)
    assert abs(np.sum(np.abs(phi) ** 2) - sp.bergman_diag(np.array([P]))[0]) < 1e-12
    # a section of the same bundle with a planted zero at P
    others = random_points(tor, rng, N - 2)
    zeta = np.concatenate([[P], others, [t - P - others.sum()]])
    s = planted_section(tor, zeta)
    s = Section(sp.basis, s.a)
    ip = sp.inner(s, sp.section(phi))
    norm = np.sqrt(sp.inner(s, s).real * np.sum(np.abs(phi) ** 2))
    assert abs(ip) < 1e-8 * norm


def test_fsh_translate_uniform(tor):
    ens = FSHEnsemble(tor, 3, M=32)
    rng = np.random.default_rng(8)
    t = np.array([ens.sample(rng, fiber=False).t for _ in range(2000)])
    a, b = tor.lattice_coords(tor.reduce(t))
    assert stats.kstest(a, "uniform").pvalue > 1e-3
    assert stats.kstest(b, "uniform").pvalue > 1e-3


def test_fsh_fiber_times_prime_form_is_large_section(tor):
    ens = FSHEnsemble(tor, 3, M=32)
    d = ens.sample(np.random.default_rng(10))
    z = random_points(tor, np.random.default_rng(11), 10)
    u = z - d.P1
    factor = tor.theta1(u) * np.exp(-np.pi / tor.T * u.imag**2)
    assert np.allclose(d.fiber(z) * factor, d.large(z), rtol=1e-8, atol=1e-12)
    assert tor.dist(abel_sum(find_zeros(d.fiber)), d.t) < 1e-8


def test_divide_out_rejects_nonvanishing(tor):
    sp = SectionSpace.build(tor, 3, 0.0, M=32)
    s = sample_gaussian(sp, np.random.default_rng(12))
    with pytest.raises(ValueError):
        divide_out(s, 0.3 + 0.3j)


def test_fsh_single_zero_uniform(tor):
    large = SectionSpace.build(tor, 2, 0.0, M=32)
    Z = sample_fsh_zeros(large, np.random.default_rng(13), 4000)
    a, b = tor.lattice_coords(tor.reduce(Z[:, 0]))
    assert stats.kstest(a, "uniform").pvalue > 1e-3
    assert stats.kstest(b, "uniform").pvalue > 1e-3


def test_fsh_conditional_matches_fixed_bundle(tor):
    # conditional on the bundle, the fibre law is Fubini-Study for the embedded inner product
    N = 2
    ens = FSHEnsemble(tor, N, M=32)
    rng = np.random.default_rng(14)
    draws = [ens.sample(rng) for _ in range(600)]
    # flat setup: the gap between the two zeros has the same law in every bundle
    off = [find_zeros(d.fiber).points for d in draws]
    gap_fsh = np.array([tor.dist(p[0], p[1]) for p in off])
    emb = SectionSpace(ThetaBasis(tor, N, 0.0), BaseMeasure.uniform_torus(tor, 32), weight="embedded")
    ref = [find_zeros(sample_gaussian(emb, rng)).points for _ in range(600)]
    gap_ref = np.array([tor.dist(p[0], p[1]) for p in ref])
    assert stats.ks_2samp(gap_fsh, gap_ref).pvalue > 1e-3


def test_polynomial_space_circle_is_orthonormal():
    nu = BaseMeasure.uniform_circle(0.0, 1.0, n=64)
    sp = PolynomialSpace(4, nu)
    assert np.abs(sp.gram - np.eye(5)).max() < 1e-13


def test_space_rejects_thin_support(tor):
    nu = BaseMeasure.uniform_disk(tor, 0.5 + 0.5j, 0.02, 128)
    with pytest.raises(np.linalg.LinAlgError):
        SectionSpace(ThetaBasis(tor, 30, 0.0), nu)


def test_invalid_degree(tor):
    with pytest.raises(ValueError):
        ThetaBasis(tor, 0)
