"""Command-line front end.

Set descriptors on the command line use the compact form
``kind:key=value,...`` — e.g. ``ball:n=2,r=1`` or ``l0:n=64,s=2,r=1``.
Experiment configs are TOML files; see the README for the schema.
"""

from __future__ import annotations

import json
import sys

import click
import numpy as np

from .comparisons import constants_for_preset
from .contamination import generate_clean
from .estimator import EstimatorConfig, estimate_bounded, mix_seed
from .geometry import EntropyProfile, delta_star as delta_star_fn
from .harness import (ExperimentSpec, load_results_csv, parse_set_descriptor,
                      rate_check_N, rate_check_epsilon, report, run_experiment,
                      run_trial)
from .tree import build_tree


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=not text.endswith("\n"))


def _load_spec(config_path: str, seed: int | None,
               preset: str | None) -> ExperimentSpec:
    spec = ExperimentSpec.from_toml(config_path)
    if seed is not None:
        spec.seed = seed
    if preset is not None:
        spec.preset = preset
    return spec


@click.group()
def main():
    """Robust mean estimation under star-shaped constraints."""


@main.command()
@click.argument("config", type=click.Path(exists=True))
@click.option("--seed", type=int, default=None)
@click.option("--preset", type=click.Choice(["paper-faithful", "practical"]),
              default=None)
@click.option("--out", type=click.Path(), default=None)
def estimate(config, seed, preset, out):
    """Run one generate -> corrupt -> estimate round and print the result."""
    spec = _load_spec(config, seed, preset)
    consts = spec.constants()
    cset = parse_set_descriptor(dict(spec.set_desc), spec.n_grid[0])
    noise = spec.noise_model()
    rng = np.random.default_rng(mix_seed(spec.seed, 0x51))
    from .harness import _apply_adversary, _draw_mu, _estimator_config, \
        _extra_candidates
    mu = _draw_mu(cset, spec.mu, rng)
    clean = generate_clean(mu, noise, int(spec.N_grid[0]),
                           mix_seed(spec.seed, 0x52))
    adv = spec.adversaries[0] if spec.adversaries else {"kind": "none"}
    sample = _apply_adversary(adv, clean, mu, float(spec.epsilon_grid[0]),
                              noise.sigma, rng)
    extra = None
    if spec.estimator.get("extra_candidates", True):
        extra = _extra_candidates(sample.observed, cset)
    cfg = _estimator_config(spec, consts, mix_seed(spec.seed, 0x53), extra)
    result = estimate_bounded(sample.observed, cset, cfg)
    doc = result.to_dict()
    doc["true_mean"] = np.round(mu, 12).tolist()
    doc["squared_error"] = round(float(np.sum((result.estimate - mu) ** 2)), 12)
    _emit(json.dumps(doc, indent=2, sort_keys=True), out)


@main.command()
@click.argument("config", type=click.Path(exists=True))
@click.option("--seed", type=int, default=None)
@click.option("--threads", type=int, default=1)
@click.option("--preset", type=click.Choice(["paper-faithful", "practical"]),
              default=None)
@click.option("--timings", is_flag=True, default=False,
              help="Record real wall times (breaks byte-stability).")
@click.option("--out", type=click.Path(), default=None)
def simulate(config, seed, threads, preset, timings, out):
    """Run the full Monte-Carlo grid and emit the CSV report."""
    spec = _load_spec(config, seed, preset)
    if timings:
        spec.timings = True
    results = run_experiment(spec, threads=threads)
    _emit(report(results, "csv"), out)


@main.command()
@click.argument("set_desc")
@click.option("--c", "c_param", type=float, default=10.0)
@click.option("--deltas", default="0.05,0.1,0.2,0.5,1.0",
              help="Comma-separated radii to tabulate.")
@click.option("--kappa", type=float, default=1.0)
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path(), default=None)
def entropy(set_desc, c_param, deltas, kappa, seed, out):
    """Tabulate the local metric entropy of a set."""
    cset = parse_set_descriptor(set_desc)
    profile = EntropyProfile(cset, c=c_param, kappa=kappa, seed=seed)
    lines = ["delta,log_mloc"]
    for tok in deltas.split(","):
        d = float(tok)
        lines.append(f"{d:.12g},{profile.local_entropy(d):.12g}")
    _emit("\n".join(lines) + "\n", out)


@main.command("delta-star")
@click.argument("set_desc")
@click.option("--n-samples", "-N", "n_samples", type=int, required=True)
@click.option("--sigma", type=float, default=1.0)
@click.option("--c", "c_param", type=float, default=10.0)
@click.option("--kappa", type=float, default=1.0)
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path(), default=None)
def delta_star(set_desc, n_samples, sigma, c_param, kappa, seed, out):
    """Print the critical radius for a set / sample size / noise level."""
    cset = parse_set_descriptor(set_desc)
    profile = EntropyProfile(cset, c=c_param, kappa=kappa, seed=seed)
    value = delta_star_fn(profile, n_samples, sigma)
    doc = {"delta_star": round(value, 12),
           "delta_star_sq": round(value * value, 12),
           "N": n_samples, "sigma": sigma, "c": c_param}
    _emit(json.dumps(doc, indent=2, sort_keys=True), out)


@main.group()
def tree():
    """Pruned-tree utilities."""


@tree.command("dump")
@click.argument("config", type=click.Path(exists=True))
@click.option("--depth", type=int, default=4)
@click.option("--seed", type=int, default=None)
@click.option("--preset", type=click.Choice(["paper-faithful", "practical"]),
              default=None)
@click.option("--universe-size", type=int, default=2000)
@click.option("--out", type=click.Path(), default=None)
def tree_dump(config, depth, seed, preset, universe_size, out):
    """Build the full pruned tree for the configured set and print it."""
    spec = _load_spec(config, seed, preset)
    consts = spec.constants()
    cset = parse_set_descriptor(dict(spec.set_desc), spec.n_grid[0])
    t = build_tree(cset, cset.star_center(), cset.diameter(), consts.c,
                   depth, seed=spec.seed, universe_size=universe_size)
    _emit(t.to_json(), out)


@main.command("rate-check")
@click.argument("results_csv", type=click.Path(exists=True))
@click.option("--mode", type=click.Choice(["hybrid", "symmetric", "N"]),
              default="hybrid")
@click.option("--out", type=click.Path(), default=None)
def rate_check(results_csv, mode, out):
    """Check a results CSV against the expected scaling law."""
    results = load_results_csv(results_csv)
    if mode == "N":
        check = rate_check_N(results)
    else:
        check = rate_check_epsilon(results, mode)
    doc = {"mode": mode, "slope": None if check.slope != check.slope
           else round(check.slope, 6),
           "passed": check.passed, "inconclusive": check.inconclusive,
           "n_points": check.n_points, "detail": check.detail}
    _emit(json.dumps(doc, indent=2, sort_keys=True), out)
    if not check.passed and not check.inconclusive:
        sys.exit(1)


if __name__ == "__main__":
    main()
