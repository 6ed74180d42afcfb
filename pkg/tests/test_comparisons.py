import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from starmean.comparisons import (add_aux_noise,
                                  compute_constants, constants_for_preset,
                                  discriminants, g_entropy, huber_location,
                                  hybrid_test, median_test,
                                  practical_constants, symmetric_test,
                                  symmetrize_known, trimmed_mean,
                                  verify_constants)
from starmean.comparisons import TestConstants as Consts


# ---------------------------------------------------------------------------
# trimmed mean, oracle first


def trimmed_mean_oracle(values, delta0, epsilon):
    """Brute-force restatement: sort the first half, read the two clamping
    order statistics, clamp and average the second half."""
    values = np.asarray(values, dtype=float)
    N = len(values) // 2
    eps_tilde = 8 * epsilon + 12 * math.log(4 / delta0) / N
    first = sorted(values[:N])
    lo = first[max(0, math.ceil(eps_tilde * N) - 1)]
    hi = first[max(0, math.ceil((1 - eps_tilde) * N) - 1)]
    clamped = [min(max(v, lo), hi) for v in values[N:]]
    return sum(clamped) / N


@given(st.integers(0, 10_000))
@settings(max_examples=100, deadline=None)
def test_trimmed_mean_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    # small N always trips the quantile-level check; large N exercises the
    # value branch
    N = int(rng.integers(2, 120))
    values = rng.normal(0, 3, size=2 * N)
    delta0 = float(rng.uniform(0.05, 0.9))
    epsilon = float(rng.uniform(0.0, 0.02))
    eps_tilde = 8 * epsilon + 12 * math.log(4 / delta0) / N
    if not 0 < eps_tilde <= 0.5:
        with pytest.raises(ValueError):
            trimmed_mean(values, delta0, epsilon)
        return
    assert trimmed_mean(values, delta0, epsilon) == pytest.approx(
        trimmed_mean_oracle(values, delta0, epsilon), abs=1e-12)


def test_trimmed_mean_validation():
    with pytest.raises(ValueError):
        trimmed_mean(np.arange(5.0), 0.5, 0.0)   # odd length
    with pytest.raises(ValueError):
        trimmed_mean(np.arange(8.0), 1.5, 0.0)   # delta0 out of range
    with pytest.raises(ValueError):
        trimmed_mean(np.arange(8.0), 1e-9, 0.0)  # quantile level > 1/2


def test_trimmed_mean_ignores_extreme_outliers():
    rng = np.random.default_rng(1)
    base = rng.normal(0, 1, size=400)
    spoiled = base.copy()
    spoiled[200:210] = 1e6
    clean = trimmed_mean(base, 0.5, 0.01)
    robust = trimmed_mean(spoiled, 0.5, 0.01)
    assert abs(robust - clean) < 0.5


# ---------------------------------------------------------------------------
# discriminants


def test_discriminant_identity_against_distance_form():
    rng = np.random.default_rng(7)
    Z = rng.normal(size=(30, 3))
    nu1, nu2 = np.array([0.5, 0, 0]), np.array([-1.0, 2.0, 0.5])
    disc = discriminants(Z, nu1, nu2)
    sep = np.linalg.norm(nu2 - nu1)
    direct = (np.linalg.norm(Z - nu1, axis=1) ** 2
              - np.linalg.norm(Z - nu2, axis=1) ** 2) / sep
    assert np.allclose(disc.values, direct)
    assert disc.separation == pytest.approx(sep)


def test_discriminants_reject_zero_separation():
    with pytest.raises(ValueError):
        discriminants(np.zeros((4, 2)), [1.0, 1.0], [1.0, 1.0])


# ---------------------------------------------------------------------------
# median and hybrid tests


def test_median_test_majority_and_tie():
    nu1, nu2 = np.array([0.0]), np.array([2.0])
    near1 = np.full((6, 1), 0.1)
    assert median_test(near1, nu1, nu2).psi == 0
    near2 = np.full((6, 1), 1.9)
    assert median_test(near2, nu1, nu2).psi == 1
    # exact split: ties favor the second candidate
    split = np.array([[0.1]] * 3 + [[1.9]] * 3)
    assert median_test(split, nu1, nu2).psi == 1


def test_median_test_needs_even_size():
    with pytest.raises(ValueError):
        median_test(np.zeros((5, 1)), [0.0], [1.0])


def test_hybrid_branch_selection():
    k = practical_constants()
    rng = np.random.default_rng(0)
    data = rng.normal(0, 1, size=(200, 2))
    nu1, nu2 = np.zeros(2), np.array([3.0, 0.0])
    # small separation-to-noise ratio -> trimmed mean branch
    v = hybrid_test(data, nu1, nu2, 0.4, k, sigma=1.0, epsilon=0.01)
    assert v.branch_used == "trimmed_mean"
    # ratio beyond the switch -> median branch
    v = hybrid_test(data, nu1, nu2, 0.7, k, sigma=1.0, epsilon=0.01)
    assert v.branch_used == "median"
    # the boundary itself stays on the trimmed-mean side
    delta_boundary = math.sqrt(k.switch_threshold)
    v = hybrid_test(data, nu1, nu2, delta_boundary, k, sigma=1.0,
                    epsilon=0.01)
    assert v.branch_used == "trimmed_mean"


def test_hybrid_warns_below_separation_floor():
    k = practical_constants()
    data = np.zeros((200, 2))
    data[:, 0] = np.linspace(-1, 1, 200)
    with pytest.warns(UserWarning):
        hybrid_test(data, np.zeros(2), np.array([0.5, 0.0]), 0.4, k, 1.0, 0.0)


def test_hybrid_decides_correctly_at_good_separation():
    k = practical_constants()
    rng = np.random.default_rng(5)
    mu = np.array([0.0, 0.0])
    data = mu + rng.normal(0, 1, size=(400, 2))
    nu2 = np.array([2.0, 0.0])
    assert hybrid_test(data, mu, nu2, 0.4, k, 1.0, 0.0).psi == 0
    assert hybrid_test(data, nu2, mu, 0.4, k, 1.0, 0.0).psi == 1


# ---------------------------------------------------------------------------
# symmetric test


def test_huber_location_basic():
    rng = np.random.default_rng(2)
    x = rng.normal(1.5, 1.0, size=4000)
    assert huber_location(x, 1.35) == pytest.approx(1.5, abs=0.1)


def test_huber_location_resists_outliers():
    x = np.concatenate([np.random.default_rng(3).normal(0, 1, 1000),
                        np.full(30, 1e5)])
    assert abs(huber_location(x, 1.35)) < 0.3


def test_symmetric_test_sign_flip_antisymmetry():
    rng = np.random.default_rng(11)
    data = rng.normal(0, 1, size=(300, 2))
    nu1, nu2 = np.array([0.3, 0.0]), np.array([2.3, 0.0])
    v = symmetric_test(data, nu1, nu2, 0.4, 1.0)
    w = symmetric_test(data, nu2, nu1, 0.4, 1.0)
    # swapping the candidates negates every discriminant; the location
    # estimate is odd under negation
    assert v.statistic == pytest.approx(-w.statistic, abs=1e-6)


def test_symmetrize_known_centers_the_sample():
    rng_free = np.random.default_rng(0)
    mu = np.array([1.0, -2.0])
    data = mu + rng_free.normal(0, 1, size=(20000, 2))
    sym = symmetrize_known(data, lambda rng, n, d: rng.normal(0, 1, (n, d)),
                           seed=9)
    assert np.allclose(sym.mean(axis=0), mu, atol=0.05)


# ---------------------------------------------------------------------------
# auxiliary noise


def test_add_aux_noise_permutation_invariant_as_multiset():
    rng = np.random.default_rng(4)
    data = rng.normal(size=(40, 3))
    perm = rng.permutation(40)
    a = add_aux_noise(data, 1.0, seed=8)
    b = add_aux_noise(data[perm], 1.0, seed=8)
    key = lambda arr: sorted(map(tuple, np.round(arr, 10)))
    assert key(a) == key(b)


def test_add_aux_noise_requires_positive_sigma():
    with pytest.raises(ValueError):
        add_aux_noise(np.zeros((4, 2)), 0.0, seed=1)


# ---------------------------------------------------------------------------
# constants


def test_g_entropy_values_and_domain():
    assert g_entropy(0.0) == pytest.approx(0.5 * math.log(0.5))
    assert g_entropy(0.25) < 0.0
    with pytest.raises(ValueError):
        g_entropy(0.5)
    with pytest.raises(ValueError):
        g_entropy(-0.1)


def test_compute_constants_properties_hold():
    k = compute_constants(0.02)
    assert verify_constants(k, 0.02) == []
    assert k.C > 2.0
    assert 0 < k.C3 < 1
    assert k.C4 == pytest.approx((0.5 - k.alpha) * k.C3)
    assert k.C5 == pytest.approx(min(k.C2, k.C4))


def test_compute_constants_rejects_bad_epsilon():
    with pytest.raises(ValueError):
        compute_constants(0.5)
    with pytest.raises(ValueError):
        compute_constants(0.0)


def test_practical_preset_shape():
    k = practical_constants()
    assert k.C == 4.0 and k.c == 10.0
    assert k.switch_threshold == pytest.approx(1 / (96 * 0.05))
    assert constants_for_preset("practical").C == 4.0
    with pytest.raises(ValueError):
        constants_for_preset("nope")


def test_constants_d1_property():
    k = Consts(alpha=0.1, C0=2.0, C1=3.0, C2=0.1, C3=0.5, C4=0.2,
                      C5=0.1, C=5.0)
    assert k.D1 == pytest.approx(4 * math.sqrt(2)
                                 * math.sqrt(0.1 + math.log(4) / 2.0))
