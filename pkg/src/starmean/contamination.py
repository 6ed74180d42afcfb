"""Noise families and adversarial corruption procedures.

Every noise model is centered with per-direction variance sigma^2; the
adversaries see the clean sample and the true mean but never the estimator's
internal randomness, and each replaces at most floor(eps*N) points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

NOISE_KINDS = ("Gaussian", "StudentT", "ScaledLognormal", "TwoPointMixture")


@dataclass(frozen=True)
class NoiseModel:
    kind: str
    sigma: float
    df: float = 2.5              # StudentT
    epsilon: float = 0.0         # TwoPointMixture
    delta: float = 0.0           # TwoPointMixture offset scale

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.kind == "StudentT" and self.df <= 2:
            raise ValueError("StudentT needs df > 2 for finite variance")
        if self.kind == "TwoPointMixture" and not 0.0 < self.epsilon < 1.0:
            raise ValueError("TwoPointMixture needs epsilon in (0, 1)")

    @property
    def far_atom_offset(self) -> float:
        """Per-coordinate placement of the rare atom (before centering)."""
        q = self.epsilon / 2.0
        return self.delta / math.sqrt(q * (1.0 - q))

    @property
    def mixture_mean_shift(self) -> float:
        q = self.epsilon / 2.0
        return self.delta * math.sqrt(q) / math.sqrt(1.0 - q)

    def sample(self, rng: np.random.Generator, N: int, n: int) -> np.ndarray:
        """N centered draws in dimension n."""
        if self.kind == "Gaussian":
            return rng.normal(0.0, self.sigma, size=(N, n))
        if self.kind == "StudentT":
            scale = self.sigma / math.sqrt(self.df / (self.df - 2.0))
            return scale * rng.standard_t(self.df, size=(N, n))
        if self.kind == "ScaledLognormal":
            # unit log-scale lognormal, centered and rescaled to variance sigma^2
            raw = rng.lognormal(0.0, 1.0, size=(N, n))
            mean = math.exp(0.5)
            std = math.sqrt((math.e - 1.0) * math.e)
            return self.sigma * (raw - mean) / std
        # two-atom mixture: atom 0 w.p. 1 - eps/2, far atom w.p. eps/2,
        # then centered at its own mean
        far = rng.random((N, n)) < self.epsilon / 2.0
        vals = np.where(far, self.far_atom_offset, 0.0)
        return vals - self.mixture_mean_shift


def generate_clean(mu: np.ndarray, noise: NoiseModel, N: int,
                   seed: int) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    if not np.all(np.isfinite(mu)):
        raise ValueError("mu must be finite")
    rng = np.random.default_rng(seed)
    return mu + noise.sample(rng, N, len(mu))


@dataclass
class ContaminatedSample:
    observed: np.ndarray
    clean: np.ndarray
    corrupted_mask: np.ndarray
    epsilon_actual: float

    def __post_init__(self):
        self.clean.setflags(write=False)


def _package(clean: np.ndarray, observed: np.ndarray,
             mask: np.ndarray) -> ContaminatedSample:
    return ContaminatedSample(observed, clean.copy(), mask,
                              float(mask.sum()) / max(1, len(clean)))


def adversary_mean_shift(sample: np.ndarray, epsilon: float, direction,
                         magnitude: float, seed: int = 0) -> ContaminatedSample:
    """Shift the floor(eps*N) points already farthest along the direction."""
    if not 0.0 <= epsilon < 0.5:
        raise ValueError("epsilon must lie in [0, 1/2)")
    clean = np.atleast_2d(np.asarray(sample, dtype=float))
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    N = len(clean)
    k = int(epsilon * N)
    mask = np.zeros(N, dtype=bool)
    observed = clean.copy()
    if k:
        proj = clean @ u
        idx = np.argsort(-proj, kind="stable")[:k]
        mask[idx] = True
        observed[idx] += magnitude * u
    return _package(clean, observed, mask)


def adversary_two_point(sample: np.ndarray, epsilon: float,
                        k_star: np.ndarray, noise: NoiseModel,
                        atol: float = 1e-9) -> ContaminatedSample:
    """Mixture-collapsing adversary: if the rare atom occurred at most
    floor(eps*N) times, rewrite every occurrence as the common atom."""
    if noise.kind != "TwoPointMixture":
        raise ValueError("sample must come from the two-atom mixture")
    clean = np.atleast_2d(np.asarray(sample, dtype=float))
    k_star = np.asarray(k_star, dtype=float)
    shift = noise.mixture_mean_shift
    near_atom = k_star - shift
    far_atom = near_atom + noise.far_atom_offset
    d_near = np.abs(clean - near_atom)
    d_far = np.abs(clean - far_atom)
    coord_ok = (d_near <= atol) | (d_far <= atol)
    if not coord_ok.all():
        raise ValueError("sample coordinates do not match the mixture atoms")
    is_far = d_far <= atol
    W = int(is_far.any(axis=1).sum())
    N = len(clean)
    observed = clean.copy()
    mask = np.zeros(N, dtype=bool)
    if W <= int(epsilon * N):
        rows = is_far.any(axis=1)
        observed[rows] = near_atom
        mask[:] = rows
    return _package(clean, observed, mask)


def adversary_oracle_cluster(sample: np.ndarray, epsilon: float, target,
                             sigma: float, seed: int = 0) -> ContaminatedSample:
    """Replace floor(eps*N) points by a tight cluster inside B(target, sigma/10)."""
    if not 0.0 <= epsilon < 0.5:
        raise ValueError("epsilon must lie in [0, 1/2)")
    clean = np.atleast_2d(np.asarray(sample, dtype=float))
    target = np.asarray(target, dtype=float)
    N, n = clean.shape
    k = int(epsilon * N)
    mask = np.zeros(N, dtype=bool)
    observed = clean.copy()
    if k:
        rng = np.random.default_rng(seed)
        idx = rng.choice(N, size=k, replace=False)
        g = rng.standard_normal((k, n))
        g /= np.maximum(np.linalg.norm(g, axis=1, keepdims=True), 1e-300)
        r = (sigma / 10.0) * rng.random((k, 1)) ** (1.0 / n)
        observed[idx] = target + g * r
        mask[idx] = True
    return _package(clean, observed, mask)


def adversary_none(sample: np.ndarray) -> ContaminatedSample:
    clean = np.atleast_2d(np.asarray(sample, dtype=float))
    return _package(clean, clean.copy(), np.zeros(len(clean), dtype=bool))
