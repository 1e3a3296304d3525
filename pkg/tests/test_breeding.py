import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.linalg import expm

from catgrow import fock as F
from catgrow.breeding import (
    BreedingConfig,
    breed_iterate,
    breed_oracle,
    breed_oracle_chain,
    breed_step,
    bs_block,
    bs_two_mode,
    bs_unitary,
    herald_povm_weights,
    partial_trace_second,
    virtual_bs,
)
from catgrow.errors import DegenerateHeraldingError, DomainError
from catgrow.sampler import SampleSet, sample_q

from oracles import chi2_against, q_density, random_density

R2 = math.sqrt(2)


def test_virtual_bs_examples():
    p, m = virtual_bs(1 + 0j, 1 + 0j)
    assert p == pytest.approx(R2) and m == 0
    p, m = virtual_bs(1 + 0j, -1 + 0j)
    assert p == 0 and m == pytest.approx(R2)
    a, b = 0.3 - 0.7j, 1.2 + 0.4j
    p, m = virtual_bs(a, b)
    assert abs(p) ** 2 + abs(m) ** 2 == pytest.approx(abs(a) ** 2 + abs(b) ** 2, abs=1e-12)


@given(st.complex_numbers(max_magnitude=1e3), st.complex_numbers(max_magnitude=1e3))
def test_virtual_bs_energy(a, b):
    p, m = virtual_bs(a, b)
    scale = max(1.0, abs(a) ** 2 + abs(b) ** 2)
    assert abs(abs(p) ** 2 + abs(m) ** 2 - abs(a) ** 2 - abs(b) ** 2) <= 1e-12 * scale


def test_breed_step_hand_example():
    s = SampleSet(np.array([1, 1, 1, -1], dtype=complex), generation=0)
    out, stats = breed_step(s, 0.5)
    assert out.points == pytest.approx([R2])
    assert stats.acceptance_fraction == 0.5
    assert (stats.input_count, stats.pair_count, stats.accepted_count) == (4, 2, 1)
    assert out.generation == 1


def test_breed_step_thresholds():
    rng = np.random.default_rng(0)
    s = SampleSet(rng.normal(size=1001) + 1j * rng.normal(size=1001))
    with pytest.warns(RuntimeWarning):
        out, stats = breed_step(s, 0.0)
    assert stats.accepted_count == 0 and stats.empty and out.count == 0
    out, stats = breed_step(s, np.inf)
    assert stats.accepted_count == stats.pair_count == 500
    with pytest.raises(DomainError):
        breed_step(SampleSet(np.array([1j])), 1.0)


def test_breed_step_keep_minus():
    s = SampleSet(np.array([1, 1, 1, -1], dtype=complex))
    out, _ = breed_step(s, 0.5, keep_minus=True)
    assert out.extra["minus"] == pytest.approx([0])


def test_breed_step_order_sensitive_and_deterministic():
    rng = np.random.default_rng(1)
    s = SampleSet(rng.normal(size=2000) + 1j * rng.normal(size=2000))
    a, _ = breed_step(s, 1.0)
    b, _ = breed_step(s, 1.0)
    assert a.points.tobytes() == b.points.tobytes()
    perm = SampleSet(s.points[rng.permutation(s.count)])
    c, _ = breed_step(perm, 1.0)
    assert c.points.tobytes() != a.points.tobytes()


def test_acceptance_monotone_in_nbar():
    rho = F.density_from_pure(F.odd_cat(1.1, 16))
    s = sample_q(rho, 40000, 8)
    fr = [breed_step(s, nb)[1].acceptance_fraction for nb in (0.5, 1.0, 1.3, 2.0)]
    assert fr == sorted(fr)


def test_breed_iterate_bookkeeping():
    rng = np.random.default_rng(2)
    s = SampleSet(rng.normal(size=4000) + 1j * rng.normal(size=4000))
    one = breed_iterate(s, BreedingConfig(1.3, 1))
    out, stats = breed_step(s, 1.3)
    assert len(one) == 1 and one[0][0].points.tobytes() == out.points.tobytes()
    res = breed_iterate(s, BreedingConfig(1.3, 3))
    assert [r[0].generation for r in res] == [1, 2, 3]
    for prev, cur in zip(res, res[1:]):
        assert cur[1].input_count == prev[1].accepted_count


def test_breed_iterate_halving():
    rng = np.random.default_rng(3)
    s = SampleSet(rng.normal(size=1003) + 1j * rng.normal(size=1003))
    res = breed_iterate(s, BreedingConfig(1e9, 4))
    assert [r[0].count for r in res] == [501, 250, 125, 62]


def test_breed_iterate_stops_early():
    s = SampleSet(np.array([0, 0, 0, 0], dtype=complex))
    with pytest.warns(RuntimeWarning):
        res = breed_iterate(s, BreedingConfig(1.0, 5))
    assert len(res) == 2


def test_per_step_thresholds():
    cfg = BreedingConfig(1.3, 2, thresholds=[0.5, 2.0])
    assert cfg.threshold(0) == 0.5 and cfg.threshold(1) == 2.0
    with pytest.raises(DomainError):
        BreedingConfig(1.3, 3, thresholds=[1.0])
    with pytest.raises(DomainError):
        BreedingConfig(-1.0)
    with pytest.raises(DomainError):
        BreedingConfig(1.0, 0)


def test_herald_weights_closed_forms():
    g = herald_povm_weights(1.3, 10)
    assert g[0] == pytest.approx(1 - math.exp(-1.3), abs=1e-14)
    assert g[0] == pytest.approx(0.7275, abs=1e-4)
    assert g[1] == pytest.approx(1 - math.exp(-1.3) * 2.3, abs=1e-14)
    assert g[1] == pytest.approx(0.3732, abs=1e-4)
    assert np.all(np.diff(g) < 0)
    assert np.allclose(herald_povm_weights(1e4, 30), 1)
    assert np.all(herald_povm_weights(np.inf, 5) == 1)


@pytest.mark.parametrize("n", [0, 1, 3, 7])
def test_herald_weights_by_disc_quadrature(n):
    # int_{|a|^2 < nbar} |<n|a>|^2 d^2a / pi in polar coordinates
    nbar = 1.3
    f = lambda r: 2 * r * math.exp(-r * r) * r ** (2 * n) / math.factorial(n)
    val, _ = quad(f, 0, math.sqrt(nbar), epsabs=1e-14)
    assert herald_povm_weights(nbar, n + 1)[n] == pytest.approx(val, abs=1e-12)


def _bs_by_generator(N):
    """Block of exp(pi/4 (a^dag b - a b^dag)) followed by a parity flip on b.

    U a^dag U^dag = (a^dag + b^dag)/sqrt2 and U b^dag U^dag = (a^dag - b^dag)/sqrt2
    equals the rotation by -pi/4 composed with b -> -b.
    """
    dim = N + 1
    a = np.diag(np.sqrt(np.arange(1, dim)), 1)
    A = np.kron(a, np.eye(dim))
    B = np.kron(np.eye(dim), a)
    G = A.T @ B - A @ B.T
    V = expm(-math.pi / 4 * G)
    flip = np.kron(np.eye(dim), np.diag((-1.0) ** np.arange(dim)))
    U = V @ flip
    idx = [m * dim + (N - m) for m in range(N + 1)]
    return U[np.ix_(idx, idx)]


@pytest.mark.parametrize("N", [0, 1, 2, 5, 9])
def test_bs_block_matches_generator(N):
    blk = bs_block(N)
    ref = _bs_by_generator(N)
    if not np.allclose(blk, ref, atol=1e-10):
        # the generator's sign convention may differ by an overall output parity
        flip = np.diag((-1.0) ** np.arange(N + 1))
        assert np.allclose(blk, ref @ flip, atol=1e-10) or np.allclose(blk, flip @ ref, atol=1e-10)


@pytest.mark.parametrize("N", [10, 40, 80])
def test_bs_block_orthogonal(N):
    B = bs_block(N)
    assert np.max(np.abs(B @ B.T - np.eye(N + 1))) < 1e-12


def test_bs_two_mode_vacuum_and_blocks():
    d = 6
    vac = F.density_from_pure(F.basis(0, d))
    out = bs_two_mode(vac, vac)
    assert out[0, 0] == pytest.approx(1) and np.count_nonzero(np.abs(out) > 1e-15) == 1
    tot = np.add.outer(np.arange(d), np.arange(d)).ravel()
    mixed = tot[:, None] != tot[None, :]
    U = bs_unitary(d, 2 * d - 1)
    tot_out = np.add.outer(np.arange(2 * d - 1), np.arange(2 * d - 1)).ravel()
    assert np.all(U[tot_out[:, None] != tot[None, :]] == 0)
    # number-diagonal inputs stay number-diagonal in total photon number
    rho = np.diag(np.real(np.diagonal(random_density(d, seed=4)))).astype(complex)
    out = bs_two_mode(rho, rho)
    assert np.all(out[mixed] == 0)
    rho = random_density(d, seed=4)
    with pytest.raises(DomainError):
        bs_two_mode(rho, random_density(d + 1))


@pytest.mark.parametrize("beta", [0.6, 0.5 - 0.8j])
def test_bs_two_mode_coherent_interference(beta):
    d = 20
    rho = F.density_from_pure(F.coherent_state(beta, d))
    out = bs_two_mode(rho, rho)
    target = np.kron(F.coherent_state(R2 * beta, d), F.basis(0, d))
    assert np.vdot(target, out @ target).real >= 1 - 1e-6


def test_bs_two_mode_distinct_coherent():
    d = 12
    a, b = 0.5 - 0.2j, -0.3 + 0.9j
    D = 2 * d - 1
    out = bs_two_mode(
        F.density_from_pure(F.coherent_state(a, d)), F.density_from_pure(F.coherent_state(b, d)), D
    )
    target = np.kron(F.coherent_state((a + b) / R2, D), F.coherent_state((a - b) / R2, D))
    assert np.vdot(target, out @ target).real == pytest.approx(1, abs=1e-8)


def test_breed_oracle_vacuum():
    rho, p = breed_oracle(F.density_from_pure(F.basis(0, 6)), 1.3)
    assert p == pytest.approx(1 - math.exp(-1.3), abs=1e-12)
    assert rho[0, 0] == pytest.approx(1) and np.abs(rho).sum() == pytest.approx(1)


@pytest.mark.parametrize("nbar", [0.4, 1.3])
def test_breed_oracle_coherent(nbar):
    beta = 0.7 + 0.3j
    rho, p = breed_oracle(F.density_from_pure(F.coherent_state(beta, 14)), nbar)
    assert p == pytest.approx(1 - math.exp(-nbar), abs=1e-9)
    target = F.coherent_state(R2 * beta, rho.shape[0])
    assert F.fidelity(rho, target) == pytest.approx(1, abs=1e-9)


@pytest.mark.parametrize("seed", [0, 1])
def test_breed_oracle_matches_two_mode_route(seed):
    d, nbar = 6, 1.1
    rho = random_density(d, seed=seed)
    D = 2 * d - 1
    sigma = bs_two_mode(rho, rho, D)
    E = np.kron(np.eye(D), np.diag(herald_povm_weights(nbar, D)))
    red = partial_trace_second(sigma @ E, D)
    p = np.trace(red).real
    out, succ = breed_oracle(rho, nbar)
    assert succ == pytest.approx(p, abs=1e-12)
    assert np.allclose(out, red / p, atol=1e-12)


def test_breed_oracle_valid_density():
    rho = F.apply_loss(F.density_from_pure(F.odd_cat(1.1, 14)), 0.8)
    out, p = breed_oracle(rho, 1.3)
    assert 0 < p < 1
    F.check_density(out)


def test_breed_oracle_degenerate():
    with pytest.raises(DegenerateHeraldingError):
        breed_oracle(F.density_from_pure(F.basis(0, 4)), 0.0)


def test_breed_oracle_cat_amplitude_bracket():
    from catgrow.quasiprob import fit_cat_amplitude

    out, _ = breed_oracle(F.density_from_pure(F.odd_cat(1.1, 16)), 1.3)
    fit = fit_cat_amplitude(out)
    assert 1.4 <= fit["alpha"] <= 1.8


def test_oracle_chain_trims():
    res = breed_oracle_chain(F.density_from_pure(F.odd_cat(1.1, 16)), BreedingConfig(1.3, 2))
    assert len(res) == 2
    for rho, p in res:
        F.check_density(rho, trace_tol=1e-9)
        assert rho.shape[0] < 60


def test_sample_breeding_matches_oracle_small():
    """Distributional equivalence on a small random state (the large run is in acceptance)."""
    rho = F.embed(random_density(4, seed=7), 8)
    nbar = 1.0
    s = sample_q(rho, 4 * 10**5, 77)
    out, stats = breed_step(s, nbar)
    rho1, p = breed_oracle(rho, nbar)
    se = math.sqrt(p * (1 - p) / stats.pair_count)
    assert abs(stats.acceptance_fraction - p) < 3 * se
    _, _, pval = chi2_against(out.points, q_density(rho1), -4, 4, 24)
    assert pval > 1e-3
