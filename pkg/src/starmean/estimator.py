"""Tournament, winner chain, layer-budget selection and the estimation drivers.

The driver descends the layered tree: at each layer the current winner's
offspring fight a tournament at radius d/(2^J(C+1)), and the last winner at
layer J**+1 is the estimate.  Two tree strategies exist: ``full`` walks a
prebuilt tree; ``lazy`` (the default) materializes one offspring packing per
visited node, with pool seeds derived from (seed, layer, node coordinates),
so the chain is still deterministic and independent of the data.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

import numpy as np

from .comparisons import (TestConstants, add_aux_noise, g_entropy,
                          hybrid_verdict, median_verdict, symmetric_verdict)
from .geometry import (ConstraintSet, EntropyProfile, LEX_TOL, PACKING_TOL,
                       _dedupe, default_pool_size, greedy_packing, lex_argsort)
from .tree import Forest, PrunedTree, build_forest, layer_geometry

MODES = ("bounded", "unbounded", "symmetric")


def mix_seed(*parts: int) -> int:
    """Deterministic 64-bit seed from integer parts (splitmix64 finalizer)."""
    acc = 0x9E3779B97F4A7C15
    for p in parts:
        acc = (acc ^ (int(p) & 0xFFFFFFFFFFFFFFFF)) * 0xBF58476D1CE4E5B9
        acc &= 0xFFFFFFFFFFFFFFFF
        acc ^= acc >> 27
        acc = (acc * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
        acc ^= acc >> 31
    return acc


def _coords_token(p: np.ndarray) -> int:
    q = np.round(np.asarray(p, dtype=float) / LEX_TOL).astype(np.int64)
    return zlib.crc32(q.tobytes())


@dataclass
class EstimatorConfig:
    sigma: float
    epsilon: float
    constants: TestConstants
    mode: str = "bounded"
    R: float = 0.0
    extra_steps: int = 2
    seed: int = 0
    tree_strategy: str = "lazy"      # or "full"
    pool_size: int | None = None
    universe_size: int = 4000
    max_layers: int = 40
    # cap on per-node tournament size; the greedy farthest-point prefix is
    # kept, so truncation preserves the packing property and stays a cover
    # at a coarser resolution
    max_candidates: int = 256
    # lazy-chain search-ball inflation: the winner of layer J sits up to
    # ~C*delta_J from the target, which is ~0.8x the next nominal ball radius
    # d/2^J; searching a slack*radius ball keeps the target well interior
    ball_slack: float = 2.0
    # optional data-derived candidate points appended to every layer pool
    # (after set projection); the tournament vets them like any other node
    extra_pool: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if not 0.0 <= self.epsilon < 1.0 / 32.0:
            raise ValueError("epsilon must lie in [0, 1/32)")
        if self.extra_steps < 0:
            raise ValueError("extra_steps must be nonnegative")
        if self.ball_slack < 1.0:
            raise ValueError("ball_slack must be >= 1")


@dataclass
class LayerRecord:
    layer: int
    delta: float
    winner_index: int
    n_candidates: int
    n_tests: int
    branch_used: str


@dataclass
class WinnerChain:
    points: list
    records: list
    truncated: bool = False

    def node(self, J: int) -> np.ndarray:
        return self.points[J - 1]

    @property
    def depth(self) -> int:
        return len(self.points)


@dataclass
class EstimateResult:
    estimate: np.ndarray
    chain: WinnerChain | None
    J_star: int
    J_double_star: int
    branch_trace: list
    S_status: str = "n/a"
    padded: bool = False

    def to_dict(self) -> dict:
        return {
            "estimate": np.round(self.estimate, 12).tolist(),
            "chain": [np.round(p, 12).tolist() for p in self.chain.points]
            if self.chain else [],
            "J_star": self.J_star,
            "J_double_star": self.J_double_star,
            "S_status": self.S_status,
            "branch_trace": [
                {"layer": r.layer, "delta": r.delta, "winner": r.winner_index,
                 "candidates": r.n_candidates, "tests": r.n_tests,
                 "branch": r.branch_used}
                for r in self.branch_trace
            ],
        }


# ---------------------------------------------------------------------------
# tournament


class PairTester:
    """Caches data/candidate projections so each ordered pair costs O(N).

    For candidates a, b the discriminant values are
    (2*(Z@b - Z@a) + |a|^2 - |b|^2) / |b - a|; verdict 1 favors b.
    """

    def __init__(self, data: np.ndarray, candidates: np.ndarray, delta: float,
                 config: EstimatorConfig):
        self.Z = np.atleast_2d(data)
        self.cand = np.atleast_2d(candidates)
        self.delta = float(delta)
        self.config = config
        self.G = self.Z @ self.cand.T
        self.sq = np.einsum("ij,ij->i", self.cand, self.cand)
        diff = self.cand[:, None, :] - self.cand[None, :, :]
        self.dist = np.linalg.norm(diff, axis=2)
        self._memo: dict[tuple[int, int], int] = {}
        self.n_tests = 0
        self.branch_used = "median" if config.mode != "symmetric" else "symmetric"

    def values(self, a: int, b: int) -> np.ndarray:
        d = self.dist[a, b]
        return (2.0 * (self.G[:, b] - self.G[:, a]) + self.sq[a] - self.sq[b]) / d

    def psi(self, a: int, b: int) -> int:
        """Verdict of the ordered pair (cand[a], cand[b]): 1 favors b."""
        key = (a, b)
        if key in self._memo:
            return self._memo[key]
        self.n_tests += 1
        v = self.values(a, b)
        cfg = self.config
        if cfg.mode == "symmetric":
            verdict = symmetric_verdict(v, cfg.sigma)
        else:
            verdict = hybrid_verdict(v, self.delta, cfg.constants, cfg.sigma,
                                     cfg.epsilon)
        self.branch_used = verdict.branch_used
        self._memo[key] = verdict.psi
        return verdict.psi

    def beats(self, challenger: int, incumbent: int) -> bool:
        return self.psi(challenger, incumbent) == 0


def tournament_winner(delta: float, candidates: np.ndarray, data: np.ndarray,
                      config: EstimatorConfig,
                      tester: PairTester | None = None) -> tuple[int, PairTester]:
    """Index of the tournament winner among the candidates.

    T(nu) is the distance to the farthest challenger at separation >= C*delta
    that defeats nu, or 0 if none does; the winner minimizes T, ties broken
    lexicographically.  Challengers are scanned by decreasing distance, so the
    first defeat observed equals T(nu) exactly and the scan can stop; once
    some candidate reaches T = 0 no later candidate can win the tie.
    """
    candidates = np.atleast_2d(candidates)
    k = len(candidates)
    if k == 0:
        raise ValueError("need at least one candidate")
    if tester is None:
        tester = PairTester(data, candidates, delta, config)
    if k == 1:
        return 0, tester
    C = config.constants.C
    order = lex_argsort(candidates)
    best_idx, best_T = -1, math.inf
    for i in order:
        row = tester.dist[i]
        far = np.nonzero(row >= C * delta - PACKING_TOL)[0]
        far = far[far != i]
        far = far[np.argsort(-row[far], kind="stable")]
        T = 0.0
        for j in far:
            if tester.beats(int(j), int(i)):
                T = float(row[j])
                break
        if T < best_T:
            best_idx, best_T = int(i), T
        if best_T == 0.0:
            break
    return best_idx, tester


# ---------------------------------------------------------------------------
# winner chains


def run_chain(tree: PrunedTree, data: np.ndarray, config: EstimatorConfig,
              depth: int) -> WinnerChain:
    """Descend a prebuilt tree: layer J+1 candidates are the offspring of the
    layer-J winner, fought at radius d/(2^J(C+1))."""
    chain = WinnerChain([tree.root.copy()], [])
    idx = 0
    truncated = depth > tree.depth
    depth = min(depth, tree.depth)
    Cp1 = config.constants.C + 1.0
    for J in range(1, depth):
        off = tree.offspring_of(J, idx)
        if len(off) == 0:
            truncated = True
            break
        cands = tree.layer(J + 1)[off]
        delta = tree.d / (2.0 ** J * Cp1)
        win, tester = tournament_winner(delta, cands, data, config)
        idx = int(off[win])
        chain.points.append(tree.layer(J + 1)[idx].copy())
        chain.records.append(LayerRecord(J + 1, delta, idx, len(off),
                                         tester.n_tests, tester.branch_used))
    chain.truncated = truncated
    return chain


def run_chain_lazy(cset: ConstraintSet, root: np.ndarray, d: float,
                   data: np.ndarray, config: EstimatorConfig,
                   depth: int) -> WinnerChain:
    """Winner chain with per-node offspring packings built on demand."""
    y = np.asarray(root, dtype=float)
    chain = WinnerChain([y.copy()], [])
    Cp1 = config.constants.C + 1.0
    c = config.constants.c
    for J in range(1, depth):
        radius, spacing = layer_geometry(d, c, J + 1)
        radius *= config.ball_slack
        pool_size = config.pool_size or default_pool_size(
            cset.dimension, radius, spacing)
        seed = mix_seed(config.seed, J + 1, _coords_token(y))
        pool = cset.candidate_pool(y, radius, pool_size, seed)
        if len(pool) == 0:
            pool = y.reshape(1, -1)
        cands = greedy_packing(pool, spacing, start=y)
        if len(cands) > config.max_candidates:
            cands = cands[: config.max_candidates]
        if config.extra_pool is not None and len(config.extra_pool):
            extra = np.atleast_2d(config.extra_pool)
            keep = np.linalg.norm(extra - y, axis=1) <= radius + 1e-9
            if keep.any():
                cands = _dedupe(np.concatenate([cands, extra[keep]]))
        delta = d / (2.0 ** J * Cp1)
        win, tester = tournament_winner(delta, cands, data, config)
        y = cands[win]
        chain.points.append(y.copy())
        chain.records.append(LayerRecord(J + 1, delta, win, len(cands),
                                         tester.n_tests, tester.branch_used))
    return chain


# ---------------------------------------------------------------------------
# layer budget


def compute_J_star(profile: EntropyProfile, config: EstimatorConfig,
                   d_working: float, N: int) -> int:
    """Largest J whose layer resolution the sample size can still certify.

    Condition: C5 * N * log(1 + delta_J^2/sigma^2) >= kappa * H vee log 2
    with delta_J = d/(2^{J-1}(C+1)), kappa = 4 (bounded) or 6 (unbounded).
    The feasible J form a prefix, so a linear scan suffices.
    """
    if N < 1 or d_working <= 0:
        return 1
    k = config.constants
    kappa = 6.0 if config.mode == "unbounded" else 4.0
    c = k.c
    best = 1
    for J in range(1, config.max_layers + 1):
        delta_J = d_working / (2.0 ** (J - 1) * (k.C + 1.0))
        lhs = k.C5 * N * math.log1p(delta_J ** 2 / config.sigma ** 2)
        if profile.analytic:
            H = profile.local_entropy(c * delta_J / 2.0, c)
        else:
            H = profile.local_entropy(c * delta_J, 2.0 * c)
        if lhs >= max(kappa * H, math.log(2.0)):
            best = J
        elif J > 1:
            break
        else:
            return 1
    return best


# ---------------------------------------------------------------------------
# drivers


def _prepare_data(data: np.ndarray, cset: ConstraintSet,
                  config: EstimatorConfig) -> tuple[np.ndarray, bool]:
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if data.size == 0:
        raise ValueError("empty data")
    if data.shape[1] != cset.dimension:
        raise ValueError("data dimension does not match the set")
    padded = False
    if len(data) % 2:
        # pad to an even size with the star center; excluded from reporting
        data = np.concatenate([data, cset.star_center().reshape(1, -1)])
        padded = True
    # canonicalize the row order (lex sort, then a seeded shuffle) so the
    # estimate is invariant under permutations of the input while the
    # split-sample halves stay an unbiased random split
    data = data[lex_argsort(data)]
    rng = np.random.default_rng(mix_seed(config.seed, 0xB1))
    data = data[rng.permutation(len(data))]
    if config.mode != "symmetric":
        data = add_aux_noise(data, config.sigma, mix_seed(config.seed, 0xA0))
    return data, padded


def estimate_bounded(data: np.ndarray, cset: ConstraintSet,
                     config: EstimatorConfig,
                     profile: EntropyProfile | None = None,
                     tree: PrunedTree | None = None,
                     J_star: int | None = None) -> EstimateResult:
    """Estimate the mean over a bounded star-shaped set."""
    if not cset.is_bounded():
        raise ValueError("set is unbounded; use estimate_unbounded")
    if config.mode == "unbounded":
        raise ValueError("mode 'unbounded' requires estimate_unbounded")
    Z, padded = _prepare_data(data, cset, config)
    root = cset.star_center()
    d = cset.diameter()
    if d == 0.0:
        return EstimateResult(root, WinnerChain([root], []), 1, 1, [],
                              padded=padded)
    if profile is None:
        profile = EntropyProfile(cset, c=config.constants.c,
                                 seed=mix_seed(config.seed, 0xE0))
    N = len(Z) // 2
    if J_star is None:
        J_star = compute_J_star(profile, config, d, N)
    J_ss = J_star + config.extra_steps
    depth = J_ss + 1
    if tree is not None:
        chain = run_chain(tree, Z, config, depth)
    elif config.tree_strategy == "full":
        from .tree import build_tree
        tree = build_tree(cset, root, d, config.constants.c, depth,
                          seed=config.seed, universe_size=config.universe_size)
        chain = run_chain(tree, Z, config, depth)
    else:
        chain = run_chain_lazy(cset, root, d, Z, config, depth)
    return EstimateResult(chain.points[-1], chain, J_star, J_ss,
                          chain.records, padded=padded)


def membership_radius(nu: np.ndarray, data: np.ndarray) -> float:
    """Smallest R leaving at most N/2 - 1 data points outside B(nu, R)."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    N = len(data)
    if N < 2:
        raise ValueError("need at least two data points")
    dist = np.sort(np.linalg.norm(data - np.asarray(nu, float), axis=1))
    return float(dist[N // 2])


def _localization_pool(data: np.ndarray, cset: ConstraintSet,
                       forest: Forest) -> np.ndarray:
    projected = cset.nearest_batch(data)
    lo = data.min(axis=0) - forest.m
    hi = data.max(axis=0) + forest.m
    roots = forest.roots
    inside = np.all((roots >= lo) & (roots <= hi), axis=1)
    return np.concatenate([projected, roots[inside]])


def estimate_unbounded(data: np.ndarray, cset: ConstraintSet,
                       config: EstimatorConfig,
                       profile: EntropyProfile | None = None,
                       forest: Forest | None = None) -> EstimateResult:
    """Two-stage driver for unbounded sets: localize via the majority-ball
    rule, then run the bounded machinery on a tree of width d_m."""
    if config.mode != "unbounded":
        raise ValueError("config.mode must be 'unbounded'")
    if config.R <= 0:
        raise ValueError("config.R must be positive")
    Z, padded = _prepare_data(data, cset, config)
    raw = np.atleast_2d(np.asarray(data, dtype=float))
    if forest is None:
        hint = cset.nearest(np.median(raw, axis=0))
        forest = build_forest(cset, config.R, config.constants.c, hint,
                              seed=mix_seed(config.seed, 0xF0))
    pool = _localization_pool(raw, cset, forest)
    radii = np.array([membership_radius(p, raw) for p in pool])
    rmin = float(radii.min())
    minimizers = pool[np.abs(radii - rmin) <= 1e-12]
    witness = minimizers[lex_argsort(minimizers)[0]]

    if rmin > config.R:
        # no point of the pool captures a majority within R: fall back to the
        # smallest-radius witness
        return EstimateResult(witness, None, 1, 1, [],
                              S_status="empty_fallback", padded=padded)

    # root = forest root closest to the witness, ties lexicographic
    dists = np.linalg.norm(forest.roots - witness, axis=1)
    close = forest.roots[np.abs(dists - dists.min()) <= 1e-12]
    s = close[lex_argsort(close)[0]]

    if profile is None:
        profile = EntropyProfile(cset, c=config.constants.c,
                                 seed=mix_seed(config.seed, 0xE1))
    N = len(Z) // 2
    J_star = compute_J_star(profile, config, forest.d_m, N)
    J_ss = J_star + config.extra_steps
    chain = run_chain_lazy(cset, s, forest.d_m, Z, config, J_ss + 1)
    return EstimateResult(chain.points[-1], chain, J_star, J_ss,
                          chain.records, S_status="nonempty", padded=padded)


def estimate(data: np.ndarray, cset: ConstraintSet,
             config: EstimatorConfig, **kw) -> EstimateResult:
    if config.mode == "unbounded" or not cset.is_bounded():
        return estimate_unbounded(data, cset, config, **kw)
    return estimate_bounded(data, cset, config, **kw)


# ---------------------------------------------------------------------------
# localization radius diagnostics


def localization_gamma(constants: TestConstants) -> float:
    """Largest of the three lower bounds on the localization exponent."""
    k = constants
    log5 = math.log(5.0)
    return max(1.0 - k.C5 / (6.0 * math.log(2.0)),
               1.0 - 4.0 * log5 / ((k.C + 1.0) ** 2 * k.C0),
               1.0 - 8.0 * log5 / ((k.C + 1.0) ** 2 * k.C1 ** 2))


def r_zero_bound(n: int, sigma: float, epsilon: float,
                 constants: TestConstants) -> float:
    """Theoretical localization radius; diagnostic only, not enforced."""
    k = constants
    gamma = localization_gamma(k)
    if not 0.0 < gamma < 1.0:
        raise ValueError("localization exponent outside (0, 1)")
    if not 0.0 <= epsilon < 0.5:
        raise ValueError("epsilon must lie in [0, 1/2)")
    log5 = math.log(5.0)
    terms = [
        max(4.0 * log5, ((2.0 * k.C + 1.0) / 4.0) ** 2) * n / (1.0 - gamma),
        -16.0 * g_entropy(epsilon) / (gamma * (0.5 - epsilon)),
        16.0 * math.log(2.0) / (gamma * (0.5 - epsilon)),
        math.log1p((2.0 * k.C + 1.0) ** 2 / sigma ** 2),
    ]
    L = max(terms)
    try:
        return sigma * math.sqrt(math.expm1(L))
    except OverflowError:
        # the bound is astronomically large at realistic constants
        return math.inf
