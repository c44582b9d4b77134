import numpy as np
import pytest
from hypothesis import given, strategies as st

from exclusim.errors import GeometryError, NormalizationViolation, RangeViolation, SymmetryViolation
from exclusim.lattice import (
    Configuration,
    Torus,
    build_kernel,
    conductance,
    drift_field,
    exchange,
    kernel_from_text,
    sample_bernoulli,
    sites,
    support,
    uniform_kernel,
)


def configurations(L, d=1):
    return st.lists(st.integers(0, 1), min_size=L ** d, max_size=L ** d).map(
        lambda bits: Configuration(np.array(bits).reshape((L,) * d)))


# kernels

def test_nearest_neighbour_kernel():
    k = build_kernel(1, 1, {1: 0.5, -1: 0.5})
    assert k.size == 2
    assert k.p(1) == k.p(-1) == 0.5
    assert k.p(0) == 0.0


def test_asymmetric_kernel_names_displacement():
    with pytest.raises(SymmetryViolation) as err:
        build_kernel(1, 1, {1: 0.6, -1: 0.4})
    assert err.value.displacement in {(1,), (-1,)}


def test_range_two_uniform_kernel():
    k = build_kernel(1, 2, {1: 0.25, -1: 0.25, 2: 0.25, -2: 0.25})
    assert k.rates.sum() == pytest.approx(1.0, abs=1e-12)
    assert k.second_moment([1.0]) == 10.0


def test_kernel_rejects_bad_mass_and_support():
    with pytest.raises(NormalizationViolation):
        build_kernel(1, 1, {1: 0.4, -1: 0.4})
    with pytest.raises(RangeViolation) as err:
        build_kernel(1, 2, {1: 0.5, -1: 0.5})
    assert err.value.displacement in {(2,), (-2,)}
    with pytest.raises(RangeViolation):
        build_kernel(1, 1, {1: 0.5, -1: 0.5, 0: 0.0})
    with pytest.raises(RangeViolation):
        build_kernel(2, 1, {(1, 0): 0.5, (-1, 0): 0.5, (0, 1): 0.0, (0, -1): 0.0})


def test_support_counts():
    assert len(support(1, 3)) == 6
    assert len(support(2, 1)) == 4
    assert len(support(2, 2)) == 12
    assert (0, 0) not in support(2, 2)


@given(st.integers(1, 3), st.integers(1, 3))
def test_uniform_kernel_is_valid_and_text_round_trips(d, R):
    k = uniform_kernel(d, R)
    assert abs(k.rates.sum() - 1.0) <= 1e-12
    assert kernel_from_text(k.to_text()) == k
    assert np.array_equal(k.displacements[k.negation], -k.displacements)


# torus

def test_torus_must_exceed_twice_the_range():
    with pytest.raises(GeometryError):
        Torus(2, 1).check_kernel(uniform_kernel(1, 1))
    Torus(3, 1).check_kernel(uniform_kernel(1, 1))


@given(st.integers(3, 7), st.integers(1, 3))
def test_site_indexing_is_bijective(L, d):
    torus = Torus(L, d)
    indices = [torus.index(x) for x in sites(torus)]
    assert sorted(indices) == list(range(torus.n_sites))
    assert all(torus.coords(torus.index(x)) == x for x in sites(torus))


def test_neighbor_table_wraps():
    torus = Torus(5, 1)
    table = torus.neighbor_table(uniform_kernel(1, 1))
    assert table[0].tolist() == [4, 1]
    assert table[4].tolist() == [3, 0]


# configurations

def test_exchange_examples():
    xi = Configuration([1, 0, 0])
    assert exchange(xi, 0, 1) == Configuration([0, 1, 0])
    same = Configuration([1, 1, 0])
    assert exchange(same, 0, 1) == same


@given(configurations(6), st.integers(0, 5), st.integers(0, 5))
def test_exchange_is_a_count_preserving_involution(xi, y, z):
    once = exchange(xi, y, z)
    assert once.count == xi.count == int(once.occupancy.sum())
    assert exchange(once, y, z) == xi


def test_exchange_preserves_count_exhaustively():
    torus = Torus(3, 2)
    for bits in range(1 << torus.n_sites):
        xi = Configuration(np.array([(bits >> i) & 1 for i in range(9)]).reshape(3, 3))
        for x in sites(torus):
            assert exchange(xi, x, (x[0] + 1, x[1])).count == xi.count


def test_configuration_is_immutable():
    xi = Configuration([1, 0, 1])
    with pytest.raises(ValueError):
        xi.occupancy[0] = 0
    with pytest.raises(AttributeError):
        xi.count = 5
    with pytest.raises(ValueError):
        Configuration([0, 2, 1])


@given(configurations(4, 2))
def test_configuration_text_round_trip(xi):
    assert Configuration.from_text(xi.to_text(), d=2) == xi


@given(configurations(5), st.integers(-6, 6))
def test_shift_convention(xi, y):
    assert all(xi.shifted(y)[z] == xi[z + y] for z in range(5))


# conductance and drift

def test_conductance_examples():
    k = uniform_kernel(1, 1)
    xi = Configuration([1, 1, 0, 1, 1, 0])
    assert conductance(xi, 0, 1, k) == 1
    assert conductance(xi, 1, 2, k) == 0
    assert conductance(xi, 0, 5, k) == 0
    assert conductance(xi, 3, 4, k) == 1
    assert conductance(xi, 1, 3, k) == 0       # distance R + 1
    assert conductance(xi, 0, 0, k) == 0
    assert conductance(Configuration([1, 0, 0, 0, 0, 1]), 0, 5, k) == 1  # wrapped neighbours


@given(configurations(7), st.integers(0, 6), st.integers(0, 6), st.integers(1, 3))
def test_conductance_is_symmetric(xi, x, y, R):
    k = uniform_kernel(1, R)
    assert conductance(xi, x, y, k) == conductance(xi, y, x, k)


def test_drift_examples():
    k = uniform_kernel(1, 1)
    assert drift_field(Configuration([1, 1, 1, 1]), k).tolist() == [0.0]
    assert drift_field(Configuration([1, 1, 0, 0]), k).tolist() == [1.0]


@given(configurations(5, 2))
def test_drift_vanishes_on_empty_origin_and_is_odd(eta):
    k = uniform_kernel(2, 2)
    if eta[(0, 0)] == 0:
        assert not drift_field(eta, k).any()
    assert np.array_equal(drift_field(eta.reflected(), k), -drift_field(eta, k))


def test_drift_depends_only_on_range_window():
    k = uniform_kernel(1, 1)
    base = np.array([1, 1, 0, 0, 0, 0, 1])
    far = base.copy()
    far[3:6] = 1
    assert np.array_equal(drift_field(Configuration(base), k), drift_field(Configuration(far), k))


def test_mean_drift_vanishes_under_bernoulli():
    # E[phi] = rho^2 sum_y y = 0
    k = uniform_kernel(1, 1)
    torus = Torus(5, 1)
    rng = np.random.default_rng(11)
    draws = np.array([drift_field(sample_bernoulli(torus, 0.5, rng), k)[0] for _ in range(100_000)])
    assert abs(draws.mean()) <= 3 * draws.std(ddof=1) / np.sqrt(draws.size)


# Bernoulli sampling

def test_bernoulli_extremes_and_determinism():
    torus = Torus(16, 2)
    assert sample_bernoulli(torus, 0.0, 1).count == 0
    assert sample_bernoulli(torus, 1.0, 1).count == torus.n_sites
    assert sample_bernoulli(torus, 0.3, 42) == sample_bernoulli(torus, 0.3, 42)
    with pytest.raises(ValueError):
        sample_bernoulli(torus, 1.5, 0)


def test_bernoulli_density_concentrates():
    torus = Torus(512, 1)
    hits = sum(abs(sample_bernoulli(torus, 0.5, seed).density - 0.5) <= 4 / np.sqrt(512) for seed in range(1000))
    assert hits >= 990


@given(configurations(4, 2))
def test_configuration_pickles(xi):
    import pickle
    back = pickle.loads(pickle.dumps(xi))
    assert back == xi and back.count == xi.count
