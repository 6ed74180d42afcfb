"""Star-shaped constraint sets, packings, local metric entropy and the critical radius.

Every operation here is pure given (inputs, seed).  Points are plain 1-D numpy
arrays; sets are immutable descriptors.  Packings are greedy farthest-point
constructions over finite candidate pools, so "maximal" always means maximal
with respect to that construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

# coordinate comparisons for lexicographic ordering
LEX_TOL = 1e-12
# strict-inequality slack for packing distances
PACKING_TOL = 1e-9
# membership checks at unit scale
MEMBERSHIP_TOL = 1e-9


# ---------------------------------------------------------------------------
# lexicographic ordering helpers


def _lex_quantize(points: np.ndarray) -> np.ndarray:
    return np.round(np.asarray(points, dtype=float) / LEX_TOL) * LEX_TOL


def lex_argsort(points: np.ndarray) -> np.ndarray:
    """Indices sorting rows lexicographically (coordinate-wise, tol LEX_TOL)."""
    pts = np.atleast_2d(_lex_quantize(points))
    return np.lexsort(pts.T[::-1])


def lex_min_index(points: np.ndarray) -> int:
    return int(lex_argsort(points)[0])


def lex_less(a: np.ndarray, b: np.ndarray) -> bool:
    qa, qb = _lex_quantize(a), _lex_quantize(b)
    for x, y in zip(qa, qb):
        if x < y:
            return True
        if x > y:
            return False
    return False


# ---------------------------------------------------------------------------
# constraint sets

_KINDS = (
    "SinglePoint",
    "EuclideanBall",
    "L0Ball",
    "L1Ball",
    "Segment",
    "FullSpace",
    "FiniteUnionOfSegments",
)


@dataclass(frozen=True)
class ConstraintSet:
    """A closed star-shaped subset of R^n with a designated center."""

    kind: str
    dimension: int
    center: np.ndarray
    radius: float = 0.0          # EuclideanBall / L1Ball / bounded L0Ball
    sparsity: int = 0            # L0Ball
    endpoints: tuple = ()        # Segment: (a, b); union: ((c, e1), (c, e2), ...)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown set kind {self.kind!r}")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))

    # -- basic predicates ---------------------------------------------------

    def is_bounded(self) -> bool:
        if self.kind in ("SinglePoint", "EuclideanBall", "L1Ball", "Segment",
                         "FiniteUnionOfSegments"):
            return True
        if self.kind == "L0Ball":
            return math.isfinite(self.radius) and self.radius > 0
        return False

    def diameter(self) -> float:
        if self.kind == "SinglePoint":
            return 0.0
        if self.kind in ("EuclideanBall", "L1Ball"):
            return 2.0 * self.radius
        if self.kind == "L0Ball":
            return 2.0 * self.radius if self.is_bounded() else math.inf
        if self.kind == "Segment":
            a, b = self.endpoints
            return float(np.linalg.norm(np.asarray(b) - np.asarray(a)))
        if self.kind == "FiniteUnionOfSegments":
            ends = np.array([e for _, e in self.endpoints])
            d = 0.0
            for i in range(len(ends)):
                for j in range(len(ends)):
                    d = max(d, float(np.linalg.norm(ends[i] - ends[j])))
                d = max(d, float(np.linalg.norm(ends[i] - self.center)))
            return d
        return math.inf

    def star_center(self) -> np.ndarray:
        return self.center.copy()

    # -- membership ---------------------------------------------------------

    def contains(self, p: np.ndarray, tol: float = MEMBERSHIP_TOL) -> bool:
        p = np.asarray(p, dtype=float)
        if p.shape != (self.dimension,):
            raise ValueError(
                f"dimension mismatch: point has shape {p.shape}, set dimension "
                f"{self.dimension}")
        if self.kind == "SinglePoint":
            return bool(np.linalg.norm(p - self.center) <= tol)
        if self.kind == "EuclideanBall":
            return bool(np.linalg.norm(p - self.center) <= self.radius + tol)
        if self.kind == "L1Ball":
            return bool(np.abs(p - self.center).sum() <= self.radius + tol)
        if self.kind == "L0Ball":
            small = np.abs(p) <= tol
            if (~small).sum() > self.sparsity:
                return False
            if self.is_bounded():
                return bool(np.linalg.norm(p) <= self.radius + tol)
            return True
        if self.kind == "Segment":
            return self._segment_contains(np.asarray(self.endpoints[0], float),
                                          np.asarray(self.endpoints[1], float),
                                          p, tol)
        if self.kind == "FiniteUnionOfSegments":
            return any(self._segment_contains(self.center, np.asarray(e, float), p, tol)
                       for _, e in self.endpoints)
        return True  # FullSpace

    @staticmethod
    def _segment_contains(a, b, p, tol):
        ab = b - a
        L2 = float(ab @ ab)
        if L2 == 0.0:
            return bool(np.linalg.norm(p - a) <= tol)
        t = float(np.clip((p - a) @ ab / L2, 0.0, 1.0))
        return bool(np.linalg.norm(a + t * ab - p) <= tol)

    # -- nearest member (internal helper, used for candidate pools) ---------

    def nearest(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if self.kind == "SinglePoint":
            return self.center.copy()
        if self.kind == "FullSpace":
            return p.copy()
        if self.kind == "EuclideanBall":
            v = p - self.center
            r = np.linalg.norm(v)
            if r <= self.radius:
                return p.copy()
            return self.center + v * (self.radius / r)
        if self.kind == "L1Ball":
            return self.center + _project_l1(p - self.center, self.radius)
        if self.kind == "L0Ball":
            q = np.zeros_like(p)
            keep = np.argsort(np.abs(p))[-self.sparsity:]
            q[keep] = p[keep]
            if self.is_bounded():
                r = np.linalg.norm(q)
                if r > self.radius:
                    q *= self.radius / r
            return q
        if self.kind == "Segment":
            return _nearest_on_segment(np.asarray(self.endpoints[0], float),
                                       np.asarray(self.endpoints[1], float), p)
        # union of segments sharing the center
        best, best_d = None, math.inf
        for _, e in self.endpoints:
            q = _nearest_on_segment(self.center, np.asarray(e, float), p)
            dq = float(np.linalg.norm(q - p))
            if dq < best_d:
                best, best_d = q, dq
        return best

    def nearest_batch(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.kind == "FullSpace":
            return pts.copy()
        if self.kind == "SinglePoint":
            return np.broadcast_to(self.center, pts.shape).copy()
        if self.kind == "EuclideanBall":
            v = pts - self.center
            r = np.linalg.norm(v, axis=1, keepdims=True)
            scale = np.where(r > self.radius, self.radius / np.maximum(r, 1e-300), 1.0)
            return self.center + v * scale
        if self.kind == "L0Ball":
            out = np.zeros_like(pts)
            order = np.argsort(np.abs(pts), axis=1)[:, -self.sparsity:]
            rows = np.arange(len(pts))[:, None]
            out[rows, order] = pts[rows, order]
            if self.is_bounded():
                r = np.linalg.norm(out, axis=1, keepdims=True)
                scale = np.where(r > self.radius,
                                 self.radius / np.maximum(r, 1e-300), 1.0)
                out = out * scale
            return out
        if self.kind == "L1Ball":
            return self.center + _project_l1_batch(pts - self.center, self.radius)
        return np.array([self.nearest(p) for p in pts])

    # -- candidate pools ----------------------------------------------------

    def candidate_pool(self, center: np.ndarray, radius: float, size: int,
                       seed: int) -> np.ndarray:
        """Sample candidate members of set ∩ B(center, radius).

        Structured lattices are used for the one-dimensional kinds; for the
        others, seeded samples of the euclidean ball are mapped to their
        nearest member and filtered back into the ball.
        """
        center = np.asarray(center, dtype=float)
        n = self.dimension
        if self.kind == "SinglePoint":
            if np.linalg.norm(self.center - center) <= radius + MEMBERSHIP_TOL:
                return self.center.reshape(1, n)
            return np.empty((0, n))
        if self.kind == "Segment":
            a, b = (np.asarray(e, float) for e in self.endpoints)
            return _segment_lattice(a, b, center, radius, size)
        if self.kind == "FiniteUnionOfSegments":
            pieces = []
            per = max(2, size // max(1, len(self.endpoints)))
            for _, e in self.endpoints:
                pieces.append(_segment_lattice(self.center, np.asarray(e, float),
                                               center, radius, per))
            pts = np.concatenate([p for p in pieces if len(p)] or
                                 [np.empty((0, n))])
            return _dedupe(pts)

        rng = np.random.default_rng(seed)
        raw = _ball_samples(rng, center, radius, n, size)
        if self.kind != "FullSpace":
            raw = self.nearest_batch(raw)
        keep = np.linalg.norm(raw - center, axis=1) <= radius + MEMBERSHIP_TOL
        pts = raw[keep]
        # anchor with the ball center's nearest member when it falls inside
        anchor = self.nearest(center)
        if np.linalg.norm(anchor - center) <= radius + MEMBERSHIP_TOL:
            pts = np.concatenate([anchor.reshape(1, n), pts])
        return _dedupe(pts)


def _nearest_on_segment(a, b, p):
    ab = b - a
    L2 = float(ab @ ab)
    if L2 == 0.0:
        return a.copy()
    t = float(np.clip((p - a) @ ab / L2, 0.0, 1.0))
    return a + t * ab


def _segment_lattice(a, b, center, radius, size):
    """Evenly spaced points on the part of segment [a, b] inside B(center, radius)."""
    ab = b - a
    L2 = float(ab @ ab)
    if L2 == 0.0:
        if np.linalg.norm(a - center) <= radius + MEMBERSHIP_TOL:
            return a.reshape(1, -1)
        return np.empty((0, len(a)))
    # solve |a + t ab - center|^2 = radius^2 for the feasible t-interval
    ac = a - center
    A, B, Cq = L2, 2.0 * float(ac @ ab), float(ac @ ac) - radius * radius
    disc = B * B - 4 * A * Cq
    if disc < 0:
        return np.empty((0, len(a)))
    root = math.sqrt(disc)
    t0 = max(0.0, (-B - root) / (2 * A))
    t1 = min(1.0, (-B + root) / (2 * A))
    if t1 < t0:
        return np.empty((0, len(a)))
    ts = np.linspace(t0, t1, max(2, size))
    return a[None, :] + ts[:, None] * ab[None, :]


def _ball_samples(rng, center, radius, n, size):
    """Seeded uniform samples of the euclidean ball B(center, radius)."""
    g = rng.standard_normal((size, n))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    r = radius * rng.random((size, 1)) ** (1.0 / n)
    return center + g / norms * r


def _dedupe(points: np.ndarray) -> np.ndarray:
    if len(points) == 0:
        return points
    q = _lex_quantize(points)
    _, idx = np.unique(q, axis=0, return_index=True)
    return points[np.sort(idx)]


def _project_l1_batch(V: np.ndarray, radius: float) -> np.ndarray:
    inside = np.abs(V).sum(axis=1) <= radius
    out = V.copy()
    if not inside.all():
        A = np.abs(V[~inside])
        u = -np.sort(-A, axis=1)
        css = np.cumsum(u, axis=1)
        ks = np.arange(1, V.shape[1] + 1)
        cond = u * ks > css - radius
        k = V.shape[1] - 1 - np.argmax(cond[:, ::-1], axis=1)
        tau = (css[np.arange(len(A)), k] - radius) / (k + 1)
        out[~inside] = np.sign(V[~inside]) * np.maximum(A - tau[:, None], 0.0)
    return out


def _project_l1(v: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection onto the l1 ball of the given radius."""
    if np.abs(v).sum() <= radius:
        return v.copy()
    u = np.sort(np.abs(v))[::-1]
    css = np.cumsum(u)
    k = np.nonzero(u * np.arange(1, len(v) + 1) > css - radius)[0][-1]
    tau = (css[k] - radius) / (k + 1)
    return np.sign(v) * np.maximum(np.abs(v) - tau, 0.0)


# -- constructors -----------------------------------------------------------


def single_point(p) -> ConstraintSet:
    p = np.asarray(p, dtype=float)
    return ConstraintSet("SinglePoint", len(p), p)


def euclidean_ball(center, r: float) -> ConstraintSet:
    center = np.asarray(center, dtype=float)
    return ConstraintSet("EuclideanBall", len(center), center, radius=float(r))


def l0_ball(s: int, n: int, radius: float = math.inf) -> ConstraintSet:
    return ConstraintSet("L0Ball", n, np.zeros(n), radius=float(radius),
                         sparsity=int(s))


def l1_ball(r: float, n: int) -> ConstraintSet:
    return ConstraintSet("L1Ball", n, np.zeros(n), radius=float(r))


def segment(a, b) -> ConstraintSet:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    mid = 0.5 * (a + b)
    return ConstraintSet("Segment", len(a), mid,
                         endpoints=(tuple(a), tuple(b)))


def full_space(n: int) -> ConstraintSet:
    return ConstraintSet("FullSpace", n, np.zeros(n))


def segment_union(center, endpoints) -> ConstraintSet:
    """Union of segments from a shared center to each endpoint (star-shaped)."""
    center = np.asarray(center, dtype=float)
    eps = tuple((tuple(center), tuple(np.asarray(e, float))) for e in endpoints)
    return ConstraintSet("FiniteUnionOfSegments", len(center), center,
                         endpoints=eps)


# ---------------------------------------------------------------------------
# packings


@dataclass
class PackingResult:
    points: np.ndarray
    spacing: float
    center: np.ndarray
    radius: float
    empty: bool = False


def greedy_packing(pool: np.ndarray, spacing: float,
                   start: np.ndarray | None = None) -> np.ndarray:
    """Greedy farthest-point packing of a finite pool.

    Selected points are pairwise more than ``spacing`` apart (slack
    PACKING_TOL), and on exhaustion every pool point is within
    spacing + PACKING_TOL of a selected point.
    """
    pool = np.atleast_2d(pool)
    if len(pool) == 0:
        return pool
    pool = pool[lex_argsort(pool)]
    if start is not None:
        first = np.asarray(start, dtype=float)
    else:
        first = pool[0]
    chosen = [first]
    mind = np.linalg.norm(pool - first, axis=1)
    while True:
        i = int(np.argmax(mind))
        if mind[i] <= spacing + PACKING_TOL:
            break
        chosen.append(pool[i])
        mind = np.minimum(mind, np.linalg.norm(pool - pool[i], axis=1))
    return np.array(chosen)


def maximal_packing(cset: ConstraintSet, center, radius: float, spacing: float,
                    seed: int = 0, pool: np.ndarray | None = None,
                    pool_size: int | None = None) -> PackingResult:
    if radius <= 0 or spacing <= 0:
        raise ValueError("radius and spacing must be positive")
    center = np.asarray(center, dtype=float)
    if pool is None:
        if pool_size is None:
            pool_size = default_pool_size(cset.dimension, radius, spacing)
        pool = cset.candidate_pool(center, radius, pool_size, seed)
    if len(pool) == 0:
        return PackingResult(np.empty((0, cset.dimension)), spacing, center,
                             radius, empty=True)
    pts = greedy_packing(pool, spacing)
    return PackingResult(pts, spacing, center, radius)


def default_pool_size(n: int, radius: float, spacing: float,
                      factor: int = 20, cap: int = 8192) -> int:
    """Pool size heuristic: factor times the expected packing count, capped."""
    ratio = max(1.0, 2.0 * radius / spacing)
    expected = min(float(cap), ratio ** min(n, 12))
    return int(min(cap, max(64, factor * expected)))


# ---------------------------------------------------------------------------
# local metric entropy


@dataclass
class EntropyProfile:
    """Evaluator of the local metric entropy delta -> log M^loc(delta, c).

    mode 'analytic' uses the closed forms (L0/L1 balls, euclidean balls and
    full space up to the configurable kappa); 'empirical' counts greedy
    packings over a finite pool of centers, which under-estimates the
    supremum over all centers.
    """

    cset: ConstraintSet
    c: float
    mode: str = "auto"
    kappa: float = 1.0
    seed: int = 0
    n_centers: int = 6
    pool_size: int | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.mode == "auto":
            if self.cset.kind in ("SinglePoint", "EuclideanBall", "L0Ball",
                                  "L1Ball", "FullSpace"):
                self.mode = "analytic"
            else:
                self.mode = "empirical"

    @property
    def analytic(self) -> bool:
        return self.mode == "analytic"

    def entropy_sup(self) -> float:
        """Upper bound on sup_delta of the entropy (volume bound)."""
        n = self.cset.dimension
        if self.cset.kind == "SinglePoint":
            return 0.0
        if self.mode == "analytic":
            vals = [self(d) for d in
                    np.geomspace(1e-4, max(1.0, _scan_cap(self.cset)), 48)]
            return max(vals) if vals else 0.0
        return n * math.log(1.0 + 2.0 * self.c)

    def __call__(self, delta: float, c: float | None = None) -> float:
        return self.local_entropy(delta, c)

    def local_entropy(self, delta: float, c: float | None = None) -> float:
        if delta <= 0:
            raise ValueError("delta must be positive")
        c = self.c if c is None else c
        d = self.cset.diameter()
        if self.cset.is_bounded() and delta > d:
            return 0.0
        if self.mode == "analytic":
            return self._analytic(delta)
        key = (round(delta, 12), round(c, 12))
        if key not in self._cache:
            self._cache[key] = self._empirical(delta, c)
        return self._cache[key]

    def _analytic(self, delta: float) -> float:
        n = self.cset.dimension
        kind = self.cset.kind
        if kind == "SinglePoint":
            return 0.0
        if kind in ("EuclideanBall", "FullSpace"):
            return self.kappa * n
        if kind == "L0Ball":
            s = self.cset.sparsity
            return self.kappa * s * math.log(1.0 + n / (2.0 * s))
        if kind == "L1Ball":
            t = n * (delta / self.cset.radius) ** 2
            if t <= math.e:
                return self.kappa * n
            return self.kappa * n * math.e * math.log(t) / t
        raise ValueError(f"no analytic entropy for kind {kind!r}")

    def _empirical(self, delta: float, c: float) -> float:
        cset = self.cset
        centers = [cset.star_center()]
        scan = _scan_cap(cset)
        extra = cset.candidate_pool(cset.star_center(), scan,
                                    4 * self.n_centers, self.seed)
        if len(extra):
            step = max(1, len(extra) // self.n_centers)
            centers.extend(list(extra[::step][: self.n_centers]))
        best = 1
        spacing = delta / c
        for k, nu in enumerate(centers):
            res = maximal_packing(cset, nu, delta, spacing,
                                  seed=self.seed + 7919 * (k + 1),
                                  pool_size=self.pool_size)
            best = max(best, len(res.points))
        return math.log(best)


def _scan_cap(cset: ConstraintSet) -> float:
    return cset.diameter() if cset.is_bounded() else 16.0


def local_entropy(profile: EntropyProfile, delta: float) -> float:
    return profile.local_entropy(delta)


def delta_star(profile: EntropyProfile, N: int, sigma: float,
               tol: float = 1e-9, margin: float = 4.0) -> float:
    """Critical radius: sup of delta with N*delta^2/sigma^2 <= entropy(delta).

    The left side is strictly increasing and the entropy non-increasing, so
    the feasibility predicate is monotone and bisection applies.
    """
    if N < 1 or sigma <= 0:
        raise ValueError("need N >= 1 and sigma > 0")
    cset = profile.cset
    if cset.is_bounded():
        hi = cset.diameter()
    else:
        sup = max(profile.entropy_sup(), 1.0)
        hi = sigma * math.sqrt(sup * margin / N) * 10.0
    if hi <= 0:
        return 0.0

    def feasible(d: float) -> bool:
        return N * d * d / (sigma * sigma) <= profile.local_entropy(d)

    if feasible(hi):
        return hi
    lo = 0.0
    span = hi
    while span > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if mid > 0 and feasible(mid):
            lo = mid
        else:
            hi = mid
        span = hi - lo
    return lo


def longest_segment_witness(cset: ConstraintSet):
    """Endpoints of a contained segment of length at least a third of the diameter."""
    if not cset.is_bounded():
        raise ValueError("diameter infinite")
    d = cset.diameter()
    if d <= 0:
        raise ValueError("diameter must be positive")
    if cset.kind == "EuclideanBall":
        e = np.zeros(cset.dimension)
        e[0] = cset.radius
        return cset.center - e, cset.center + e
    if cset.kind in ("L1Ball", "L0Ball"):
        e = np.zeros(cset.dimension)
        e[0] = cset.radius
        return cset.center - e, cset.center + e
    if cset.kind == "Segment":
        return (np.asarray(cset.endpoints[0], float),
                np.asarray(cset.endpoints[1], float))
    if cset.kind == "FiniteUnionOfSegments":
        best, best_len = None, -1.0
        for _, e in cset.endpoints:
            e = np.asarray(e, float)
            L = float(np.linalg.norm(e - cset.center))
            if L > best_len:
                best, best_len = (cset.center.copy(), e), L
        return best
    raise ValueError(f"no segment witness for kind {cset.kind!r}")
