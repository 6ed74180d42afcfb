"""Layered pruned search trees and the forest for unbounded sets.

The builder refines a root ball layer by layer: offspring of a node at layer
J-1 form a greedy maximal packing of the node ball intersected with the set,
and a lexicographic sweep then merges same-layer nodes that sit closer than
the layer spacing, re-pointing the absorbed nodes' parents.  The result is a
layered DAG: offspring lists carry every (re-pointed) edge, while ``parents``
records one designated parent per node.

Construction never sees data; it depends on (set, root, d, c, seed) only.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (ConstraintSet, MEMBERSHIP_TOL, PACKING_TOL,
                       default_pool_size, greedy_packing, lex_argsort)


def layer_geometry(d: float, c: float, layer: int) -> tuple[float, float]:
    """(ball radius, packing spacing) used to build the given layer (>= 2)."""
    if layer == 2:
        return d, d / c
    return d / 2 ** (layer - 1), d / (2 ** (layer - 1) * c)


@dataclass
class PrunedTree:
    cset: ConstraintSet
    root: np.ndarray
    d: float
    c: float
    seed: int
    # layer_points[j] holds coordinates of layer j+1 (0-based list, 1-based layers)
    layer_points: list = field(default_factory=list)
    # offspring[j][i] = indices into layer_points[j+1] reachable from node i of layer j+1
    offspring: list = field(default_factory=list)
    # parents[j][i] = designated parent index in the previous layer (-1 for the root)
    parents: list = field(default_factory=list)

    @property
    def depth(self) -> int:
        return len(self.layer_points)

    def layer(self, J: int) -> np.ndarray:
        return self.layer_points[J - 1]

    def offspring_of(self, J: int, i: int) -> np.ndarray:
        return self.offspring[J - 1][i]

    def node_count(self) -> int:
        return sum(len(L) for L in self.layer_points)

    def to_json(self) -> str:
        doc = {
            "kind": self.cset.kind,
            "d": self.d,
            "c": self.c,
            "seed": self.seed,
            "root": [round(x, 12) for x in self.root.tolist()],
            "layers": [
                {
                    "layer": j + 1,
                    "points": np.round(L, 12).tolist(),
                    "parent": self.parents[j].tolist(),
                    "offspring": [o.tolist() for o in self.offspring[j]]
                    if j < len(self.offspring) else [],
                }
                for j, L in enumerate(self.layer_points)
            ],
        }
        return json.dumps(doc, indent=2, sort_keys=True)


def _prune_layer(cands: np.ndarray, cand_parents: list[list[int]],
                 spacing: float):
    """Lexicographic absorption sweep over one raw layer.

    Returns kept coordinates, per-kept designated parent, and per-kept sorted
    parent-edge sets (the re-pointed edges of absorbed nodes included).
    """
    order = lex_argsort(cands)
    cands = cands[order]
    cand_parents = [cand_parents[i] for i in order]
    m = len(cands)
    alive = np.ones(m, dtype=bool)
    kept_idx: list[int] = []
    edges: list[set[int]] = []
    for i in range(m):
        if not alive[i]:
            continue
        alive[i] = False
        rest = np.nonzero(alive)[0]
        grabbed = set(cand_parents[i])
        if len(rest):
            dist = np.linalg.norm(cands[rest] - cands[i], axis=1)
            absorb = rest[dist <= spacing + PACKING_TOL]
            for k in absorb:
                grabbed.update(cand_parents[k])
            alive[absorb] = False
        kept_idx.append(i)
        edges.append(grabbed)
    kept = cands[kept_idx]
    designated = np.array([min(e) for e in edges], dtype=int)
    return kept, designated, edges


def build_tree(cset: ConstraintSet, root, d: float, c: float, max_depth: int,
               seed: int = 0, universe: np.ndarray | None = None,
               universe_size: int = 4000) -> PrunedTree:
    """Build the full pruned tree over a global candidate universe."""
    root = np.asarray(root, dtype=float)
    if not cset.contains(root):
        raise ValueError("root must belong to the set")
    if d <= 0 or c < 2 or max_depth < 2:
        raise ValueError("need d > 0, c >= 2, max_depth >= 2")
    tree = PrunedTree(cset, root, float(d), float(c), int(seed))
    tree.layer_points.append(root.reshape(1, -1))
    tree.parents.append(np.array([-1]))

    if universe is None:
        universe = cset.candidate_pool(root, d, universe_size, seed)
    if len(universe) == 0:
        universe = root.reshape(1, -1)

    for J in range(2, max_depth + 1):
        radius, spacing = layer_geometry(d, c, J)
        prev = tree.layer_points[-1]
        raw_pts: list[np.ndarray] = []
        raw_parents: list[list[int]] = []
        for i, u in enumerate(prev):
            near = universe[np.linalg.norm(universe - u, axis=1)
                            <= radius + MEMBERSHIP_TOL]
            pool = np.concatenate([u.reshape(1, -1), near]) if len(near) else \
                u.reshape(1, -1)
            off = greedy_packing(pool, spacing, start=u)
            raw_pts.append(off)
            raw_parents.extend([[i]] * len(off))
        cands = np.concatenate(raw_pts)
        kept, designated, edges = _prune_layer(cands, raw_parents, spacing)
        tree.layer_points.append(kept)
        tree.parents.append(designated)
        offs = [[] for _ in range(len(prev))]
        for child, parent_set in enumerate(edges):
            for p in parent_set:
                offs[p].append(child)
        tree.offspring.append([np.array(sorted(o), dtype=int) for o in offs])
    return tree


# ---------------------------------------------------------------------------
# verification


@dataclass
class TreeReport:
    violations: list = field(default_factory=list)
    checks: int = 0

    def ok(self) -> bool:
        return not self.violations

    def add(self, msg: str):
        self.violations.append(msg)


def verify_tree(tree: PrunedTree, cset: ConstraintSet,
                probe_points: np.ndarray | None = None,
                chain_samples: int = 512) -> TreeReport:
    """Check packing spacing, probe covering, offspring cardinality and the
    chain distance bound on the built tree."""
    rep = TreeReport()
    d, c = tree.d, tree.c

    # (a) per-layer packing spacing
    for J in range(2, tree.depth + 1):
        spacing = d / (2 ** (J - 1) * c)
        L = tree.layer(J)
        for i in range(len(L)):
            dist = np.linalg.norm(L[i + 1:] - L[i], axis=1)
            rep.checks += len(dist)
            bad = dist <= spacing - PACKING_TOL
            if bad.any():
                rep.add(f"layer {J}: packing violation at node {i} "
                        f"(min dist {dist.min():.3e} <= {spacing:.3e})")

    # (b) covering of probe points
    if probe_points is not None and len(probe_points):
        probes = np.atleast_2d(probe_points)
        inside = np.linalg.norm(probes - tree.root, axis=1) <= d + MEMBERSHIP_TOL
        probes = probes[inside]
        for J in range(3, tree.depth + 1):
            cover = d / (2 ** (J - 2) * c)
            L = tree.layer(J)
            for k, p in enumerate(probes):
                dmin = float(np.linalg.norm(L - p, axis=1).min())
                rep.checks += 1
                if dmin > cover + 1e-6:
                    rep.add(f"layer {J}: probe {k} uncovered "
                            f"({dmin:.3e} > {cover:.3e})")

    # (c) offspring cardinality against the empirical local packing count.
    # The layer nodes inside the doubled parent ball are themselves a
    # witnessed packing at the layer spacing, and every offspring node sits in
    # that ball (selection radius plus at most one absorption displacement),
    # so their count bounds card(O(u)) from above; the volume cap is the
    # dimension-based ceiling on the same packing count.
    for J in range(2, tree.depth + 1):
        radius_bound = d / 2 ** (J - 2)
        spacing = d / (2 ** (J - 1) * c)
        parent_layer = tree.layer(J - 1)
        child_layer = tree.layer(J)
        cap = _volume_cap(cset.dimension, radius_bound, spacing)
        for i, off in enumerate(tree.offspring[J - 2]):
            rep.checks += 1
            u = parent_layer[i]
            near = (np.linalg.norm(child_layer - u, axis=1)
                    <= radius_bound + spacing + MEMBERSHIP_TOL).sum()
            if len(off) > min(int(near), cap):
                rep.add(f"layer {J}: offspring of node {i} too large "
                        f"({len(off)} > {min(int(near), cap)})")

    # (d) chain distance bound
    bound_const = d * (2 + 4 * c) / c
    rng = np.random.default_rng(tree.seed + 99)
    chains = _designated_chains(tree) + _random_chains(tree, rng, chain_samples)
    for chain in chains:
        pts = [tree.layer(J)[i] for J, i in enumerate(chain, start=1)]
        for jp in range(len(pts)):
            for j in range(jp, len(pts)):
                rep.checks += 1
                dist = float(np.linalg.norm(pts[jp] - pts[j]))
                if dist > bound_const / 2 ** (jp + 1) + 1e-9:
                    rep.add(f"chain bound violated between layers {jp + 1} "
                            f"and {j + 1}: {dist:.3e}")
    return rep


def _volume_cap(n: int, radius: float, spacing: float) -> int:
    return int(math.floor((1.0 + 2.0 * radius / spacing) ** n))


def _designated_chains(tree: PrunedTree) -> list[list[int]]:
    if tree.depth < 2:
        return [[0]]
    chains = []
    deepest = tree.depth
    for leaf in range(len(tree.layer(deepest))):
        chain = [leaf]
        for J in range(deepest, 1, -1):
            chain.append(int(tree.parents[J - 1][chain[-1]]))
        chains.append(chain[::-1])
    return chains


def _random_chains(tree: PrunedTree, rng, count: int) -> list[list[int]]:
    chains = []
    for _ in range(count):
        chain = [0]
        for J in range(1, tree.depth):
            off = tree.offspring[J - 1][chain[-1]]
            if len(off) == 0:
                break
            chain.append(int(off[rng.integers(len(off))]))
        chains.append(chain)
    return chains


# ---------------------------------------------------------------------------
# forest for unbounded sets


@dataclass
class Forest:
    cset: ConstraintSet
    R: float
    c: float
    m: float
    d_m: float
    roots: np.ndarray
    seed: int
    _trees: dict = field(default_factory=dict, repr=False)

    def tree_at(self, root_index: int, max_depth: int,
                universe_size: int = 4000) -> PrunedTree:
        key = (root_index, max_depth)
        if key not in self._trees:
            root = self.roots[root_index]
            self._trees[key] = build_tree(
                self.cset, root, self.d_m, self.c, max_depth,
                seed=self.seed + root_index, universe_size=universe_size)
        return self._trees[key]


def build_forest(cset: ConstraintSet, R: float, c: float, region_hint,
                 seed: int = 0, region_radius: float | None = None,
                 pool_size: int | None = None) -> Forest:
    """m-packing root set around the hinted region; trees are built lazily."""
    if R <= 0:
        raise ValueError("R must be positive")
    if c <= 1:
        raise ValueError("need c > 1")
    hint = np.asarray(region_hint, dtype=float)
    m = R / (c - 1.0)
    d_m = 2.0 * m + 2.0 * R
    if region_radius is None:
        region_radius = 2.0 * d_m
    if cset.is_bounded():
        region_radius = min(region_radius, cset.diameter() + m)
    anchor = cset.nearest(hint)
    if pool_size is None:
        pool_size = default_pool_size(cset.dimension, region_radius, m)
    pool = cset.candidate_pool(anchor, region_radius, pool_size, seed)
    if len(pool) == 0:
        pool = anchor.reshape(1, -1)
    roots = greedy_packing(pool, m, start=anchor)
    return Forest(cset, float(R), float(c), m, d_m, roots, int(seed))
