import math

import numpy as np
import pytest

from starmean.comparisons import practical_constants
from starmean.contamination import NoiseModel, generate_clean
from starmean.estimator import (EstimatorConfig, PairTester, compute_J_star,
                                estimate_bounded, estimate_unbounded,
                                localization_gamma, membership_radius,
                                mix_seed, r_zero_bound, run_chain,
                                tournament_winner)
from starmean.geometry import (EntropyProfile, euclidean_ball, lex_argsort,
                               single_point)
from starmean.tree import build_tree


def make_config(**kw):
    base = dict(sigma=1.0, epsilon=0.0, constants=practical_constants(),
                seed=0)
    base.update(kw)
    return EstimatorConfig(**base)


# ---------------------------------------------------------------------------
# tournament, oracle first


def brute_tournament(delta, candidates, psi, C):
    """Direct restatement: T(nu) is the distance to the farthest challenger
    at separation >= C*delta whose ordered test favors the challenger."""
    k = len(candidates)
    T = np.zeros(k)
    for i in range(k):
        best = 0.0
        for j in range(k):
            if i == j:
                continue
            dist = np.linalg.norm(candidates[i] - candidates[j])
            if dist >= C * delta and psi(j, i) == 0:
                best = max(best, dist)
        T[i] = best
    order = lex_argsort(candidates)
    winner = min((i for i in range(k)),
                 key=lambda i: (T[i], list(order).index(i)))
    return winner, T


def test_tournament_single_candidate():
    cfg = make_config()
    cand = np.array([[0.5, 0.5]])
    win, _ = tournament_winner(0.1, cand, np.zeros((4, 2)), cfg)
    assert win == 0


def test_tournament_all_close_returns_lex_smallest():
    cfg = make_config()
    # pairwise distances all below C*delta -> every T = 0
    cand = np.array([[0.2, 0.0], [0.0, 0.1], [0.1, 0.2]])
    win, _ = tournament_winner(1.0, cand, np.zeros((10, 2)), cfg)
    assert np.allclose(cand[win], [0.0, 0.1])


def test_tournament_three_collinear_hand_enumeration():
    # candidates 0, C*delta, 2*C*delta on a line; the data sits at 0, so
    # every ordered test favors the candidate closer to 0
    cfg = make_config()
    C, delta = cfg.constants.C, 0.1
    cand = np.array([[0.0, 0.0], [C * delta, 0.0], [2 * C * delta, 0.0]])
    rng = np.random.default_rng(0)
    data = rng.normal(0, 0.01, size=(100, 2))
    win, tester = tournament_winner(delta, cand, data, cfg)
    assert win == 0
    # cross-check with the brute-force oracle on the same pair verdicts
    full = PairTester(data, cand, delta, cfg)
    oracle_win, T = brute_tournament(delta, cand, full.psi, C)
    assert oracle_win == 0
    assert T[0] == 0.0
    assert T[1] == pytest.approx(C * delta)
    assert T[2] == pytest.approx(2 * C * delta)


def test_tournament_matches_brute_force_on_random_instances():
    cfg = make_config()
    rng = np.random.default_rng(42)
    for trial in range(10):
        k = int(rng.integers(2, 8))
        cand = rng.uniform(-1, 1, size=(k, 2))
        mu = rng.uniform(-0.5, 0.5, size=2)
        data = mu + rng.normal(0, 0.5, size=(200, 2))
        delta = float(rng.uniform(0.02, 0.2))
        win, _ = tournament_winner(delta, cand, data, cfg)
        oracle = PairTester(data, cand, delta, cfg)
        owin, _ = brute_tournament(delta, cand, oracle.psi, cfg.constants.C)
        assert win == owin


def test_tournament_deterministic():
    cfg = make_config()
    rng = np.random.default_rng(1)
    cand = rng.uniform(-1, 1, size=(6, 2))
    data = rng.normal(0, 1, size=(200, 2))
    a, _ = tournament_winner(0.05, cand, data, cfg)
    b, _ = tournament_winner(0.05, cand, data, cfg)
    assert a == b


def test_pair_tester_values_match_direct_formula():
    rng = np.random.default_rng(5)
    Z = rng.normal(size=(20, 3))
    cand = rng.normal(size=(4, 3))
    t = PairTester(Z, cand, 0.1, make_config())
    for a, b in ((0, 1), (2, 3), (1, 2)):
        sep = np.linalg.norm(cand[b] - cand[a])
        direct = (np.linalg.norm(Z - cand[a], axis=1) ** 2
                  - np.linalg.norm(Z - cand[b], axis=1) ** 2) / sep
        assert np.allclose(t.values(a, b), direct)


# ---------------------------------------------------------------------------
# layer budget


def test_j_star_single_point_closed_form():
    # zero entropy: the condition is C5*N*log(1+delta_J^2/sigma^2) >= log 2
    cfg = make_config()
    profile = EntropyProfile(single_point([0.0, 0.0]), c=cfg.constants.c)
    d, N, sigma = 2.0, 100, 1.0
    k = cfg.constants
    J = compute_J_star(profile, cfg, d, N)
    # closed-form largest feasible J
    best = 1
    for j in range(1, 40):
        dj = d / (2 ** (j - 1) * (k.C + 1))
        if k.C5 * N * math.log1p(dj * dj / sigma ** 2) >= math.log(2):
            best = j
    assert J == best
    assert J >= 1


def test_j_star_never_satisfied_returns_one():
    cfg = make_config(sigma=100.0)
    profile = EntropyProfile(euclidean_ball([0.0, 0.0], 1.0),
                             c=cfg.constants.c)
    assert compute_J_star(profile, cfg, 2.0, 4) == 1


def test_j_star_prefix_scan_and_bisect_agree():
    cfg = make_config()
    profile = EntropyProfile(euclidean_ball([0.0] * 3, 1.0),
                             c=cfg.constants.c)
    for N in (50, 500, 5000, 50000):
        J = compute_J_star(profile, cfg, 2.0, N)

        def feasible(j):
            k = cfg.constants
            dj = 2.0 / (2 ** (j - 1) * (k.C + 1))
            H = profile.local_entropy(k.c * dj / 2.0, k.c)
            return k.C5 * N * math.log1p(dj * dj) >= max(4 * H, math.log(2))

        # binary search over the prefix property
        lo, hi = 1, 40
        if not feasible(1):
            assert J == 1
            continue
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if feasible(mid):
                lo = mid
            else:
                hi = mid - 1
        assert J == lo


# ---------------------------------------------------------------------------
# bounded driver


def test_single_point_set_returns_center():
    cfg = make_config()
    pt = single_point([0.7, -0.1])
    data = np.random.default_rng(0).normal(5, 1, size=(20, 2))
    res = estimate_bounded(data, pt, cfg)
    assert np.allclose(res.estimate, [0.7, -0.1])


def test_estimate_requires_matching_dimension_and_data():
    cfg = make_config()
    ball = euclidean_ball([0.0, 0.0], 1.0)
    with pytest.raises(ValueError):
        estimate_bounded(np.empty((0, 2)), ball, cfg)
    with pytest.raises(ValueError):
        estimate_bounded(np.zeros((10, 3)), ball, cfg)


def test_estimate_rejects_unbounded_set():
    from starmean.geometry import full_space
    cfg = make_config()
    with pytest.raises(ValueError, match="unbounded"):
        estimate_bounded(np.zeros((10, 2)), full_space(2), cfg)


def test_estimate_stays_in_set_and_is_deterministic():
    cfg = make_config(seed=11)
    ball = euclidean_ball([0.0, 0.0], 1.0)
    rng = np.random.default_rng(2)
    data = rng.normal(0.2, 1.0, size=(300, 2))
    r1 = estimate_bounded(data, ball, cfg)
    r2 = estimate_bounded(data, ball, make_config(seed=11))
    assert np.allclose(r1.estimate, r2.estimate)
    assert ball.contains(r1.estimate, tol=1e-6)
    for p in r1.chain.points:
        assert ball.contains(p, tol=1e-6)


def test_estimate_permutation_invariant():
    cfg = make_config(seed=7)
    ball = euclidean_ball([0.0, 0.0], 1.0)
    rng = np.random.default_rng(3)
    data = rng.normal(0.1, 1.0, size=(200, 2))
    perm = rng.permutation(len(data))
    r1 = estimate_bounded(data, ball, cfg)
    r2 = estimate_bounded(data[perm], ball, make_config(seed=7))
    assert np.allclose(r1.estimate, r2.estimate)


def test_estimate_odd_sample_padded():
    cfg = make_config()
    ball = euclidean_ball([0.0, 0.0], 1.0)
    data = np.random.default_rng(4).normal(0, 1, size=(201, 2))
    res = estimate_bounded(data, ball, cfg)
    assert res.padded


def test_estimate_accuracy_small_noise():
    # near-noiseless data concentrated at an interior mean
    cfg = make_config(sigma=0.01, seed=5)
    ball = euclidean_ball([0.0, 0.0], 1.0)
    mu = np.array([0.3, 0.0])
    hits = 0
    for t in range(10):
        data = generate_clean(mu, NoiseModel("Gaussian", 0.01), 400,
                              seed=100 + t)
        res = estimate_bounded(data, ball, make_config(sigma=0.01,
                                                       seed=200 + t))
        if np.linalg.norm(res.estimate - mu) <= 0.1:
            hits += 1
    assert hits >= 9


def test_run_chain_on_prebuilt_tree_obeys_chain_bound():
    cfg = make_config(seed=1)
    ball = euclidean_ball([0.0, 0.0], 1.0)
    d, c = 2.0, cfg.constants.c
    tree = build_tree(ball, [0.0, 0.0], d, c, 4, seed=1, universe_size=800)
    data = np.random.default_rng(6).normal(0.2, 1.0, size=(200, 2))
    chain = run_chain(tree, data, cfg, 4)
    assert chain.depth == 4
    bound_const = d * (2 + 4 * c) / c
    for jp in range(chain.depth):
        for j in range(jp, chain.depth):
            dist = np.linalg.norm(chain.points[jp] - chain.points[j])
            assert dist <= bound_const / 2 ** (jp + 1) + 1e-9


# ---------------------------------------------------------------------------
# membership radius and unbounded driver


def test_membership_radius_enumeration():
    nu = np.zeros(1)
    data = np.array([[1.0], [-2.0], [3.0], [-4.0]])
    # distances {1,2,3,4}: the third smallest is the answer
    assert membership_radius(nu, data) == pytest.approx(3.0)


def test_membership_radius_all_equal():
    data = np.tile([1.0, 2.0], (6, 1))
    assert membership_radius([1.0, 2.0], data) == 0.0


def test_membership_radius_monotone_under_far_point():
    rng = np.random.default_rng(8)
    data = rng.normal(size=(11, 2))
    base = membership_radius(np.zeros(2), data)
    grown = membership_radius(np.zeros(2),
                              np.concatenate([data, [[50.0, 50.0]]]))
    assert grown >= base - 1e-12


def test_estimate_unbounded_recovers_cluster():
    from starmean.geometry import full_space
    cfg = make_config(mode="unbounded", R=3.0, seed=3)
    mu = np.array([1.5, -0.5])
    data = generate_clean(mu, NoiseModel("Gaussian", 0.5), 200, seed=9)
    res = estimate_unbounded(data, full_space(2), cfg)
    assert res.S_status == "nonempty"
    assert np.linalg.norm(res.estimate - mu) < 1.0


def test_estimate_unbounded_zero_radius_falls_back():
    from starmean.geometry import full_space
    cfg = make_config(mode="unbounded", R=1e-9, seed=3)
    data = np.random.default_rng(10).normal(0, 1, size=(40, 2))
    res = estimate_unbounded(data, full_space(2), cfg)
    assert res.S_status == "empty_fallback"


def test_estimate_unbounded_mode_validation():
    from starmean.geometry import full_space
    with pytest.raises(ValueError):
        estimate_unbounded(np.zeros((10, 2)), full_space(2), make_config())


# ---------------------------------------------------------------------------
# localization radius diagnostics


def test_localization_gamma_respects_three_bounds():
    k = practical_constants()
    g = localization_gamma(k)
    assert g >= 1 - k.C5 / (6 * math.log(2)) - 1e-12
    assert g >= 1 - 4 * math.log(5) / ((k.C + 1) ** 2 * k.C0) - 1e-12
    assert g >= 1 - 8 * math.log(5) / ((k.C + 1) ** 2 * k.C1 ** 2) - 1e-12
    assert 0 < g < 1


def test_r_zero_bound_monotone_in_dimension():
    k = practical_constants()
    vals = [r_zero_bound(n, 1.0, 0.01, k) for n in (1, 2, 4, 8)]
    assert all(a <= b + 1e-9 for a, b in zip(vals, vals[1:]))


def test_r_zero_bound_third_component():
    from starmean.comparisons import g_entropy
    k = practical_constants()
    eps, sigma = 0.01, 1.0
    R0 = r_zero_bound(2, sigma, eps, k)
    gamma = localization_gamma(k)
    assert math.log1p(R0 ** 2 / sigma ** 2) >= \
        16 * math.log(2) / (gamma * (0.5 - eps)) - 1e-6


def test_mix_seed_is_stable_and_spread():
    assert mix_seed(1, 2, 3) == mix_seed(1, 2, 3)
    seen = {mix_seed(0, i) for i in range(1000)}
    assert len(seen) == 1000
