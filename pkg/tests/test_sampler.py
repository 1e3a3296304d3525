import math

import numpy as np
import pytest

from catgrow import fock as F
from catgrow.errors import DomainError
from catgrow.sampler import SampleSet, empirical_moments, q_moments, q_value, q_values, sample_q

from oracles import chi2_against, q_density, random_density

VAC = F.density_from_pure(F.basis(0, 10))


def test_q_value_examples():
    assert q_value(VAC, 0) == pytest.approx(1 / math.pi)
    assert q_value(F.density_from_pure(F.basis(1, 5)), 0) == 0
    assert q_value(VAC, 2.0) == pytest.approx(math.exp(-4) / math.pi, rel=1e-12)
    assert q_value(VAC, 2.0) == pytest.approx(0.00583, abs=1e-5)


def test_q_value_matches_coherent_overlap():
    # independent route: |<beta|alpha>|^2 = exp(-|alpha - beta|^2)
    alpha, beta = 0.7 - 0.4j, -0.2 + 1.1j
    rho = F.density_from_pure(F.coherent_state(alpha, 40))
    assert q_value(rho, beta) == pytest.approx(math.exp(-abs(alpha - beta) ** 2) / math.pi, rel=1e-9)


STATES = {
    "vacuum": VAC,
    "odd_cat": F.density_from_pure(F.odd_cat(1.1, 30)),
    "lossy_cat": F.apply_loss(F.density_from_pure(F.odd_cat(1.5, 30)), 0.7),
    "subtracted_sv": F.density_from_pure(F.subtract_photon(F.squeezed_vacuum(0.6, 40))),
    "coherent": F.density_from_pure(F.coherent_state(1.5 + 0.5j, 30)),
    "random": F.embed(random_density(6, seed=1), 30),
}


@pytest.mark.parametrize("name", sorted(STATES))
def test_q_normalization_and_positivity(name):
    rho = STATES[name]
    assert F.mean_photon_number(rho) <= 6
    mean, cov = q_moments(rho)
    sd = math.sqrt(max(cov[0, 0], cov[1, 1]))
    h = 6 * sd + abs(mean)
    xs = np.linspace(-h, h, 128)
    X, Y = np.meshgrid(xs, xs)
    vals = q_values(rho, X + 1j * Y)
    assert vals.min() >= 0
    total = vals.sum() * (xs[1] - xs[0]) ** 2
    assert 0.99 <= total <= 1.001


@pytest.mark.parametrize("name", sorted(STATES))
def test_acceptance_rate_reasonable(name):
    stats = {}
    sample_q(STATES[name], 20000, 5, stats=stats)
    assert stats["acceptance_rate"] >= 0.1


def test_q_moments_against_grid():
    rho = STATES["lossy_cat"]
    mean, cov = q_moments(rho)
    xs = np.linspace(-8, 8, 401)
    X, Y = np.meshgrid(xs, xs)
    w = q_values(rho, X + 1j * Y)
    w /= w.sum()
    mx, my = (w * X).sum(), (w * Y).sum()
    assert mean == pytest.approx(mx + 1j * my, abs=1e-9)
    assert cov[0, 0] == pytest.approx((w * (X - mx) ** 2).sum(), abs=1e-8)
    assert cov[1, 1] == pytest.approx((w * (Y - my) ** 2).sum(), abs=1e-8)


def test_vacuum_sample_variance():
    s = sample_q(VAC, 10**6, 11)
    cov = empirical_moments(s)["covariance"]
    assert cov[0, 0] == pytest.approx(0.5, abs=0.005)
    assert cov[1, 1] == pytest.approx(0.5, abs=0.005)


def test_coherent_sample_mean():
    rho = F.density_from_pure(F.coherent_state(2.0, 30))
    n = 10**5
    s = sample_q(rho, n, 3)
    m = empirical_moments(s)["mean"]
    se = math.sqrt(0.5 / n)
    assert abs(m.real - 2) < 3 * se
    assert abs(m.imag) < 3 * se


def test_odd_cat_chi2():
    rho = F.density_from_pure(F.odd_cat(1.1, 25))
    s = sample_q(rho, 10**6, 2024)
    _, _, p = chi2_against(s.points, q_density(rho), -4, 4, 32)
    assert p > 1e-3


def test_determinism_and_workers():
    rho = STATES["odd_cat"]
    a = sample_q(rho, 5000, 9)
    b = sample_q(rho, 5000, 9)
    assert a.points.tobytes() == b.points.tobytes()
    c = sample_q(rho, 5000, 9, workers=3)
    d = sample_q(rho, 5000, 9, workers=3)
    assert c.points.tobytes() == d.points.tobytes()
    assert c.count == 5000 and c.workers == 3
    assert sample_q(rho, 5000, 10).points.tobytes() != a.points.tobytes()


def test_sample_count_domain():
    with pytest.raises(DomainError):
        sample_q(VAC, 0, 1)


def test_empirical_moments_examples():
    s = SampleSet(np.array([0, 2 + 0j]))
    assert empirical_moments(s)["mean"] == 1
    same = SampleSet(np.full(10, 0.3 - 0.2j))
    assert np.all(empirical_moments(same)["covariance"] == 0)
    with pytest.raises(DomainError):
        empirical_moments(SampleSet(np.array([1j])))


def test_vacuum_moments_from_samples():
    cov = empirical_moments(sample_q(VAC, 2 * 10**5, 4))["covariance"]
    assert np.allclose(cov, np.diag([0.5, 0.5]), atol=0.01)


def test_sampleset_meta():
    s = SampleSet(np.zeros(4), seed=3, source="x", generation=2)
    assert s.meta == {"seed": 3, "source": "x", "generation": 2, "count": 4, "workers": 1}
    with pytest.raises(DomainError):
        SampleSet(np.zeros(1), generation=-1)
