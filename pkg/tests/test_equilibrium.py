import numpy as np
import pytest

from thetazeros.equilibrium import capacity, frostman_certificate, solve_equilibrium, total_variation
from thetazeros.measures import BaseMeasure
from thetazeros.potential import GridMeasure, rate_I_tilde
from thetazeros.torus import Torus


@pytest.fixture(scope="module")
def tor():
    return Torus(1j)


def disk_mask(torus, r, M, c=0.5 + 0.5j):
    return GridMeasure.from_base(BaseMeasure.uniform_disk(torus, c, r, M)).mask


def rect_mask(torus, M, lo=0.25, hi=0.75):
    return GridMeasure.from_base(BaseMeasure.uniform_rect(torus, lo, hi, lo, hi, M)).mask


@pytest.fixture(scope="module")
def disk_eq(tor):
    return solve_equilibrium(tor, disk_mask(tor, 0.3, 32))


@pytest.mark.parametrize("tau", [1j, 0.3 + 1.1j])
def test_full_torus_is_uniform(tau):
    t = Torus(tau)
    res = solve_equilibrium(t, np.ones((32, 32), bool))
    assert total_variation(res.measure, GridMeasure.uniform(t, 32)) <= 1e-4
    assert abs(res.E0) <= 1e-6
    assert abs(res.capacity - 1) <= 2e-6


def test_disk_frostman_certificate(disk_eq):
    c = disk_eq.certificate
    assert disk_eq.converged
    assert c["support_residual"] <= 1e-4
    assert c["off_support_excess"] <= 1e-4
    assert disk_eq.E0 < 0
    assert abs(rate_I_tilde(disk_eq.measure, disk_eq.E0)) < 1e-6


def test_certificate_recomputed_from_weights(disk_eq):
    again = frostman_certificate(GridMeasure(disk_eq.measure.torus, disk_eq.measure.weights, disk_eq.measure.mask))
    assert again["support_residual"] == pytest.approx(disk_eq.certificate["support_residual"], abs=1e-14)


def test_two_initialisations_agree(tor, disk_eq):
    other = solve_equilibrium(tor, disk_mask(tor, 0.3, 32), init="random", rng=np.random.default_rng(0))
    assert total_variation(disk_eq.measure, other.measure) <= 1e-3
    assert abs(disk_eq.E0 - other.E0) < 1e-10


def test_frank_wolfe_alone_approaches_optimum(tor, disk_eq):
    fw = solve_equilibrium(tor, disk_mask(tor, 0.3, 32), polish=False, max_iter=2000)
    assert fw.E0 <= disk_eq.E0 + 1e-12
    assert disk_eq.E0 - fw.E0 < 1e-3


def test_mass_concentrates_on_boundary(tor):
    res = solve_equilibrium(tor, rect_mask(tor, 32))
    w = res.measure.weights
    i = np.nonzero(res.measure.mask.any(axis=1))[0]
    assert w[i[0], i].sum() > w[i[len(i) // 2], i].sum()


def test_capacity_monotone_in_set(tor):
    caps = [capacity(tor, disk_mask(tor, r, 32)) for r in (0.15, 0.25, 0.35, 0.45)]
    assert all(a < b for a, b in zip(caps, caps[1:]))
    assert caps[-1] < 1


def test_grid_refinement_converges(tor):
    E = [solve_equilibrium(tor, rect_mask(tor, M)).E0 for M in (16, 32, 64)]
    d1, d2 = abs(E[1] - E[0]), abs(E[2] - E[1])
    assert d2 < 0.6 * d1


def test_perturbations_raise_rate(tor, disk_eq):
    rng = np.random.default_rng(1)
    mu = disk_eq.measure
    for _ in range(20):
        bump = rng.random(mu.weights.shape) * mu.mask
        w = 0.9 * mu.weights + 0.1 * bump / bump.sum()
        assert rate_I_tilde(GridMeasure(tor, w, mu.mask), disk_eq.E0) > 0


def test_rejects_tiny_set(tor):
    mask = np.zeros((16, 16), bool)
    mask[3, 3] = True
    with pytest.raises(ValueError):
        solve_equilibrium(tor, mask)
    with pytest.raises(ValueError):
        solve_equilibrium(tor, np.ones((8, 8), bool), init="bogus")


def test_summary_keys(disk_eq):
    s = disk_eq.summary()
    assert s["capacity"] == pytest.approx(np.exp(2 * s["E0"]))
    assert {"support_residual", "off_support_excess", "converged"} <= set(s)
