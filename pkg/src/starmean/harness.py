"""Monte-Carlo experiment runner, rate-law checks and report emission.

A run is a grid over (dimension, sample size, contamination level); each cell
executes seeded trials of generate -> corrupt -> estimate, for every
configured adversary, and reports the worst adversary's error statistics.
Per-trial seeds mix (master seed, cell index, adversary index, trial index)
through a 64-bit finalizer, so results are reproducible under any thread
count.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
try:
    import tomllib
except ModuleNotFoundError:        # Python < 3.11
    import tomli as tomllib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .comparisons import TestConstants, constants_for_preset
from .contamination import (ContaminatedSample, NoiseModel, adversary_none,
                            adversary_mean_shift, adversary_oracle_cluster,
                            generate_clean)
from .estimator import (EstimatorConfig, compute_J_star, estimate_bounded,
                        mix_seed)
from .geometry import (ConstraintSet, EntropyProfile, delta_star,
                       euclidean_ball, l0_ball, l1_ball, segment,
                       single_point)

CSV_COLUMNS = ("n", "N", "epsilon", "mse", "q10", "q50", "q90",
               "delta_star_sq", "theory_bound", "j_star", "wall_ms")


# ---------------------------------------------------------------------------
# configuration


def parse_set_descriptor(desc, n: int | None = None) -> ConstraintSet:
    """Build a constraint set from a config table or a compact CLI string
    like "ball:n=2,r=1" or "l0:n=64,s=2,r=1"."""
    if isinstance(desc, str):
        kind, _, rest = desc.partition(":")
        params: dict = {}
        if rest:
            for item in rest.split(","):
                key, _, val = item.partition("=")
                params[key.strip()] = val.strip()
        desc = {"kind": kind.strip(), **params}
    kind = str(desc.get("kind", "ball")).lower()
    dim = int(desc.get("n", n or 2))
    radius = float(desc.get("r", desc.get("radius", 1.0)))
    if kind in ("ball", "euclideanball"):
        center = np.asarray(desc.get("center", np.zeros(dim)), dtype=float)
        return euclidean_ball(center, radius)
    if kind in ("l0", "l0ball"):
        s = int(desc.get("s", desc.get("sparsity", 1)))
        return l0_ball(s, dim, radius=radius)
    if kind in ("l1", "l1ball"):
        return l1_ball(radius, dim)
    if kind == "segment":
        a = np.asarray(desc["a"], dtype=float)
        b = np.asarray(desc["b"], dtype=float)
        return segment(a, b)
    if kind in ("point", "singlepoint"):
        p = np.asarray(desc.get("p", np.zeros(dim)), dtype=float)
        return single_point(p)
    raise ValueError(f"unknown set descriptor kind {kind!r}")


@dataclass
class ExperimentSpec:
    name: str = "experiment"
    mode: str = "bounded"
    preset: str = "practical"
    seed: int = 0
    trials: int = 100
    timings: bool = False
    set_desc: dict = field(default_factory=lambda: {"kind": "ball", "r": 1.0})
    noise: dict = field(default_factory=lambda: {"kind": "Gaussian",
                                                 "sigma": 1.0})
    mu: dict = field(default_factory=lambda: {"kind": "random", "scale": 0.5})
    adversaries: list = field(default_factory=lambda: [{"kind": "none"}])
    n_grid: list = field(default_factory=lambda: [2])
    N_grid: list = field(default_factory=lambda: [1000])
    epsilon_grid: list = field(default_factory=lambda: [0.0])
    estimator: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not (self.n_grid and self.N_grid and self.epsilon_grid):
            raise ValueError("grids must be non-empty")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentSpec":
        grid = doc.get("grid", {})
        return cls(
            name=doc.get("name", "experiment"),
            mode=doc.get("mode", "bounded"),
            preset=doc.get("preset", "practical"),
            seed=int(doc.get("seed", 0)),
            trials=int(doc.get("trials", 100)),
            timings=bool(doc.get("timings", False)),
            set_desc=doc.get("set", {"kind": "ball", "r": 1.0}),
            noise=doc.get("noise", {"kind": "Gaussian", "sigma": 1.0}),
            mu=doc.get("mu", {"kind": "random", "scale": 0.5}),
            adversaries=doc.get("adversary", [{"kind": "none"}]),
            n_grid=list(grid.get("n", [2])),
            N_grid=list(grid.get("N", [1000])),
            epsilon_grid=list(grid.get("epsilon", [0.0])),
            estimator=doc.get("estimator", {}),
        )

    @classmethod
    def from_toml(cls, path: str) -> "ExperimentSpec":
        with open(path, "rb") as fh:
            return cls.from_dict(tomllib.load(fh))

    def noise_model(self) -> NoiseModel:
        nd = self.noise
        return NoiseModel(kind=nd.get("kind", "Gaussian"),
                          sigma=float(nd.get("sigma", 1.0)),
                          df=float(nd.get("df", 2.5)),
                          epsilon=float(nd.get("epsilon", 0.0)),
                          delta=float(nd.get("delta", 0.0)))

    def constants(self) -> TestConstants:
        eps = max(min(self.epsilon_grid), 1e-6) if any(
            e > 0 for e in self.epsilon_grid) else 0.02
        return constants_for_preset(self.preset, eps)


@dataclass
class CellResult:
    n: int
    N: int
    epsilon: float
    mse: float
    q10: float
    q50: float
    q90: float
    delta_star_sq: float
    theory_bound: float
    j_star: int
    wall_ms: float
    worst_adversary: str = ""
    n_errors: int = 0
    flagged: bool = False

    def row(self) -> list:
        return [self.n, self.N, self.epsilon, self.mse, self.q10, self.q50,
                self.q90, self.delta_star_sq, self.theory_bound, self.j_star,
                self.wall_ms]


# ---------------------------------------------------------------------------
# trial machinery


def _draw_mu(cset: ConstraintSet, mu_spec: dict, rng) -> np.ndarray:
    kind = mu_spec.get("kind", "random")
    center = cset.star_center()
    if kind == "center":
        return center
    if kind == "fixed":
        return np.asarray(mu_spec["coords"], dtype=float)
    scale = float(mu_spec.get("scale", 0.5))
    reach = scale * (cset.diameter() / 2.0 if cset.is_bounded() else 1.0)
    if reach <= 0:
        return center
    pool = cset.candidate_pool(center, reach, 32,
                               int(rng.integers(0, 2 ** 31)))
    if len(pool) == 0:
        return center
    return pool[int(rng.integers(0, len(pool)))]


def _unit(rng, n: int) -> np.ndarray:
    v = rng.standard_normal(n)
    return v / max(np.linalg.norm(v), 1e-300)


def _apply_adversary(adv: dict, clean: np.ndarray, mu: np.ndarray,
                     epsilon: float, sigma: float, rng) -> ContaminatedSample:
    kind = adv.get("kind", "none")
    if kind == "none" or epsilon <= 0.0:
        return adversary_none(clean)
    n = clean.shape[1]
    seed = int(rng.integers(0, 2 ** 31))
    if kind == "mean_shift":
        direction = adv.get("direction")
        u = (np.asarray(direction, float) if direction is not None
             else _unit(rng, n))
        mag = adv.get("magnitude", "auto")
        mag = sigma / math.sqrt(epsilon) if mag == "auto" else float(mag)
        return adversary_mean_shift(clean, epsilon, u, mag, seed)
    if kind == "oracle_cluster":
        off = adv.get("offset", "auto")
        off = sigma / math.sqrt(epsilon) if off == "auto" else float(off)
        target = mu + off * _unit(rng, n)
        return adversary_oracle_cluster(clean, epsilon, target, sigma, seed)
    if kind == "two_point":
        # the indistinguishability construction's placement: a tight clump at
        # the far-atom location, one radius sigma*sqrt(2/eps) away
        target = mu + sigma * math.sqrt(2.0 / epsilon) * _unit(rng, n)
        return adversary_oracle_cluster(clean, epsilon, target, sigma, seed)
    raise ValueError(f"unknown adversary kind {kind!r}")


def _extra_candidates(observed: np.ndarray, cset: ConstraintSet) -> np.ndarray:
    """Data-derived candidate points: the set projections of the sample mean
    and the coordinate-wise median, plus their central rays (valid members by
    star-shapedness)."""
    center = cset.star_center()
    anchors = [observed.mean(axis=0), np.median(observed, axis=0)]
    pts = []
    for a in anchors:
        p = cset.nearest(a)
        for t in (1.0, 0.75, 0.5, 0.25, 0.125, 0.0625):
            pts.append(center + t * (p - center))
    return np.array(pts)


def _estimator_config(spec: ExperimentSpec, consts: TestConstants,
                      trial_seed: int, extra: np.ndarray | None):
    est = spec.estimator
    return EstimatorConfig(
        sigma=float(spec.noise.get("sigma", 1.0)),
        epsilon=0.0,
        constants=consts,
        mode="symmetric" if spec.mode == "symmetric" else "bounded",
        extra_steps=int(est.get("extra_steps", 2)),
        seed=trial_seed,
        pool_size=int(est["pool_size"]) if est.get("pool_size") else None,
        max_candidates=int(est.get("max_candidates", 256)),
        extra_pool=extra,
    )


def run_trial(spec: ExperimentSpec, cset: ConstraintSet, noise: NoiseModel,
              consts: TestConstants, adv: dict, N_total: int, epsilon: float,
              trial_seed: int) -> float:
    """One generate -> corrupt -> estimate round; returns squared error."""
    rng = np.random.default_rng(trial_seed)
    mu = _draw_mu(cset, spec.mu, rng)
    clean = generate_clean(mu, noise, N_total, mix_seed(trial_seed, 0x11))
    contaminated = _apply_adversary(adv, clean, mu, epsilon, noise.sigma, rng)
    observed = contaminated.observed
    extra = None
    if spec.estimator.get("extra_candidates", True):
        extra = _extra_candidates(observed, cset)
    config = _estimator_config(spec, consts, mix_seed(trial_seed, 0x22), extra)
    config = _clamp_epsilon(config, epsilon)
    result = estimate_bounded(observed, cset, config)
    return float(np.sum((result.estimate - mu) ** 2))


def _clamp_epsilon(config: EstimatorConfig, epsilon: float) -> EstimatorConfig:
    # the comparison tests consume the contamination level; keep it inside
    # the hybrid test's admissible range
    config.epsilon = min(max(epsilon, 0.0), 1.0 / 32.0 - 1e-9)
    return config


def theory_bound_value(delta_star_sq: float, epsilon: float, sigma: float,
                       diam: float, mode: str) -> float:
    if mode == "symmetric":
        bound = max(delta_star_sq, (epsilon * sigma) ** 2)
    else:
        bound = max(delta_star_sq, epsilon * sigma * sigma)
    if math.isfinite(diam):
        bound = min(bound, diam * diam)
    return bound


def run_experiment(spec: ExperimentSpec, threads: int = 1) -> list[CellResult]:
    consts = spec.constants()
    noise = spec.noise_model()
    sigma = noise.sigma
    results = []
    cell_index = 0
    for n in spec.n_grid:
        cset = parse_set_descriptor(dict(spec.set_desc), n)
        profile = EntropyProfile(cset, c=consts.c,
                                 kappa=float(spec.estimator.get("kappa", 1.0)),
                                 seed=mix_seed(spec.seed, 0x77))
        for N_total in spec.N_grid:
            N_half = max(1, int(N_total) // 2)
            dsq = delta_star(profile, N_half, sigma) ** 2
            probe_cfg = _estimator_config(spec, consts, 0, None)
            j_star = compute_J_star(profile, probe_cfg, cset.diameter(),
                                    N_half)
            for epsilon in spec.epsilon_grid:
                t0 = time.perf_counter()
                cell = _run_cell(spec, cset, noise, consts, N_total,
                                 float(epsilon), cell_index, threads)
                wall = (time.perf_counter() - t0) * 1e3 if spec.timings else 0.0
                errors_sq, worst_name, n_err = cell
                q10, q50, q90 = np.quantile(errors_sq, (0.1, 0.5, 0.9))
                results.append(CellResult(
                    n=int(n), N=int(N_total), epsilon=float(epsilon),
                    mse=float(np.mean(errors_sq)), q10=float(q10),
                    q50=float(q50), q90=float(q90), delta_star_sq=float(dsq),
                    theory_bound=theory_bound_value(dsq, float(epsilon), sigma,
                                                    cset.diameter(), spec.mode),
                    j_star=int(j_star), wall_ms=float(wall),
                    worst_adversary=worst_name, n_errors=n_err,
                    flagged=n_err > 0.05 * spec.trials))
                cell_index += 1
    return results


def _run_cell(spec, cset, noise, consts, N_total, epsilon, cell_index,
              threads):
    worst = None
    for a_idx, adv in enumerate(spec.adversaries):
        seeds = [mix_seed(spec.seed, cell_index, a_idx, t)
                 for t in range(spec.trials)]

        def one(seed, _adv=adv):
            try:
                return run_trial(spec, cset, noise, consts, _adv, N_total,
                                 epsilon, seed)
            except Exception:
                return math.nan

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                errs = np.array(list(pool.map(one, seeds)))
        else:
            errs = np.array([one(s) for s in seeds])
        n_err = int(np.isnan(errs).sum())
        valid = errs[~np.isnan(errs)]
        if len(valid) == 0:
            valid = np.array([math.inf])
        mse = float(np.mean(valid))
        name = adv.get("kind", "none")
        if worst is None or mse > worst[0]:
            worst = (mse, valid, name, n_err)
    return worst[1], worst[2], worst[3]


# ---------------------------------------------------------------------------
# rate checks


@dataclass
class RateCheck:
    slope: float
    passed: bool
    inconclusive: bool
    n_points: int
    detail: str = ""


def rate_check_epsilon(results: list[CellResult], mode: str = "hybrid",
                       regime_factor: float = 1.0) -> RateCheck:
    """OLS slope of log MSE on log epsilon over cells where the
    contamination term dominates the statistical term."""
    band = (1.5, 2.5) if mode == "symmetric" else (0.65, 1.35)
    usable = []
    for r in results:
        if r.epsilon <= 0 or r.mse <= 0:
            continue
        # the contamination term dominates exactly when the theory bound
        # exceeds delta*^2 (it is the max of the two, capped by diam^2)
        if r.theory_bound >= regime_factor * r.delta_star_sq and \
                r.theory_bound > r.delta_star_sq:
            usable.append(r)
    if len(usable) < 4:
        return RateCheck(math.nan, False, True, len(usable),
                         "fewer than 4 cells in the contamination regime")
    x = np.log([r.epsilon for r in usable])
    y = np.log([r.mse for r in usable])
    slope = float(np.polyfit(x, y, 1)[0])
    return RateCheck(slope, band[0] <= slope <= band[1], False, len(usable),
                     f"band {band}")


def rate_check_N(results: list[CellResult],
                 band_factor: float = 8.0) -> RateCheck:
    """Constant MSE/delta*^2 ratio across the N grid within a factor band."""
    ratios = [r.mse / r.delta_star_sq for r in results
              if r.delta_star_sq > 0 and r.mse > 0]
    if len(ratios) < 2:
        return RateCheck(math.nan, False, True, len(ratios), "too few cells")
    spread = max(ratios) / min(ratios)
    return RateCheck(spread, spread <= band_factor, False, len(ratios),
                     f"ratio spread {spread:.3f} vs factor {band_factor}")


# ---------------------------------------------------------------------------
# reports


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)


def report_csv(results: list[CellResult]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in results:
        writer.writerow([_fmt(v) for v in r.row()])
    return buf.getvalue()


def report_json(results: list[CellResult]) -> str:
    doc = [dict(zip(CSV_COLUMNS, r.row())) for r in results]
    return json.dumps(doc, indent=2, sort_keys=True)


def report(results: list[CellResult], fmt: str = "csv",
           path: str | None = None) -> str:
    text = report_csv(results) if fmt == "csv" else report_json(results)
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def load_results_csv(path: str) -> list[CellResult]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(CellResult(
                n=int(row["n"]), N=int(row["N"]),
                epsilon=float(row["epsilon"]), mse=float(row["mse"]),
                q10=float(row["q10"]), q50=float(row["q50"]),
                q90=float(row["q90"]),
                delta_star_sq=float(row["delta_star_sq"]),
                theory_bound=float(row["theory_bound"]),
                j_star=int(row["j_star"]), wall_ms=float(row["wall_ms"])))
    return out
