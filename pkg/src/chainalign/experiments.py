"""Config-driven experiments.  Each runner returns CSV rows plus a summary dict."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .alignment import (
    PplConfig,
    exact_recover,
    imitation_loss_bound_check,
    ppl,
    threshold_set,
)
from .counterexample import lower_bound_experiment
from .errors import AlignError, ConfigError
from .generators import KINDS, GeneratorSpec, Instance, generate
from .io import load_mdp
from .mdp import PermutationMap, StochasticPolicy, TabularMDP, imitation_loss, induced_chain, stationary_distribution
from .sampling import RngSeed, rate_diagnostics, sample_trajectory

EXPERIMENTS = ("exact-recovery", "ppl-sweep", "rate-diagnostics", "theorem2-check", "lower-bound")

# stream offsets keep the per-seed random draws of different purposes apart
PERM_STREAM = 1 << 20
TRAJ_STREAM = 1 << 21
INSTANCE_STREAM = 1 << 22

DEFAULTS: dict[str, dict] = {
    "exact-recovery": {
        "instance": {"generator": {"kind": "random-friendly-chain"}},
        "seeds": 100,
        "n_range": [4, 12],
    },
    "ppl-sweep": {
        "instance": {"generator": {"kind": "random-friendly-chain", "n_states": 6}},
        "seeds": 20,
        "m_grid": [1000, 10000, 100000],
        "t": "auto",
    },
    "rate-diagnostics": {
        "instance": {"generator": {"kind": "random-friendly-chain", "n_states": 6}},
        "seeds": 20,
        "m_grid": [1000, 10000, 100000, 1000000],
    },
    "theorem2-check": {
        "instance": {"generator": {"kind": "random-friendly-chain", "n_states": 6}},
        "seeds": 100,
        "t_grid": ["auto"],
    },
    "lower-bound": {
        "seeds": 200,
        "eps_grid": [0.02, 0.04, 0.08, 0.16],
        "delta": 0.05,
        "gamma": 0.9,
        "epsilon_known": True,
    },
}
COMMON_KEYS = {"experiment", "seeds", "base_seed", "output_dir"}
ALLOWED = {
    "exact-recovery": {"instance", "n_range"},
    "ppl-sweep": {"instance", "m_grid", "t"},
    "rate-diagnostics": {"instance", "m_grid"},
    "theorem2-check": {"instance", "t_grid"},
    "lower-bound": {"eps_grid", "delta", "gamma", "epsilon_known"},
}
GENERATOR_KEYS = {"kind", "n_states", "n_actions", "gamma", "retry_cap", "tol_alpha", "tol_beta", "epsilon"}


@dataclass
class ExperimentConfig:
    experiment: str
    params: dict
    seeds: list[int]
    base_seed: int = 0
    output_dir: str | None = None

    def echo(self) -> dict:
        d = {"experiment": self.experiment, "seeds": self.seeds, "base_seed": self.base_seed}
        d.update(self.params)
        return d


def _grid(params: dict, key: str, cast) -> list:
    value = params[key]
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{key} must be a nonempty list", key)
    try:
        return [cast(v) if v != "auto" else v for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"{key} has a malformed entry", key) from None


def parse_config(raw: dict, experiment: str | None = None) -> ExperimentConfig:
    """Merge ``raw`` over the experiment defaults and validate every key."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping", None)
    name = raw.get("experiment", experiment)
    if experiment is not None and name != experiment:
        raise ConfigError(f"config is for {name!r}, not {experiment!r}", "experiment")
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}", "experiment")
    for key in raw:
        if key not in COMMON_KEYS and key not in ALLOWED[name]:
            raise ConfigError(f"unknown key {key!r} for {name}", key)

    params = copy.deepcopy(DEFAULTS[name])
    params.update({k: copy.deepcopy(v) for k, v in raw.items() if k not in COMMON_KEYS})

    seeds = raw.get("seeds", params.pop("seeds"))
    params.pop("seeds", None)
    if isinstance(seeds, bool) or not isinstance(seeds, (int, list)):
        raise ConfigError("seeds must be a count or a list of integers", "seeds")
    if isinstance(seeds, int):
        if seeds < 1:
            raise ConfigError("seeds must be positive", "seeds")
        seeds = list(range(seeds))
    elif not seeds or not all(isinstance(s, int) and not isinstance(s, bool) for s in seeds):
        raise ConfigError("seeds must be a nonempty list of integers", "seeds")

    base_seed = raw.get("base_seed", 0)
    if isinstance(base_seed, bool) or not isinstance(base_seed, int) or base_seed < 0:
        raise ConfigError("base_seed must be a nonnegative integer", "base_seed")

    if "instance" in params:
        _check_instance(params["instance"])
    if "m_grid" in params:
        grid = _grid(params, "m_grid", int)
        if any(m < 2 for m in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("m_grid must be increasing with entries >= 2", "m_grid")
        params["m_grid"] = grid
    if "t_grid" in params:
        params["t_grid"] = _grid(params, "t_grid", float)
    if "eps_grid" in params:
        grid = _grid(params, "eps_grid", float)
        if any(not 0 < e < 0.5 for e in grid):
            raise ConfigError("eps_grid entries must lie in (0, 1/2)", "eps_grid")
        params["eps_grid"] = grid
    if "n_range" in params:
        r = params["n_range"]
        if not (isinstance(r, list) and len(r) == 2 and all(isinstance(v, int) for v in r) and 1 <= r[0] <= r[1]):
            raise ConfigError("n_range must be [low, high] with 1 <= low <= high", "n_range")
    if "t" in params and params["t"] != "auto":
        if not isinstance(params["t"], (int, float)) or params["t"] <= 0:
            raise ConfigError("t must be positive or 'auto'", "t")
    if "delta" in params and not 0 < params["delta"] < 1:
        raise ConfigError("delta must lie in (0, 1)", "delta")
    if "gamma" in params and not 0 < params["gamma"] < 1:
        raise ConfigError("gamma must lie in (0, 1)", "gamma")
    return ExperimentConfig(name, params, seeds, base_seed, raw.get("output_dir"))


def _check_instance(inst) -> None:
    if not isinstance(inst, dict) or len(inst) != 1 or not ({"file", "generator"} & inst.keys()):
        raise ConfigError("instance must be {'file': path} or {'generator': {...}}", "instance")
    if "file" in inst:
        if not Path(inst["file"]).is_file():
            raise ConfigError(f"instance file {inst['file']!r} does not exist", "instance.file")
        return
    gen = inst["generator"]
    if not isinstance(gen, dict):
        raise ConfigError("generator must be a mapping", "instance.generator")
    for key in gen:
        if key not in GENERATOR_KEYS:
            raise ConfigError(f"unknown generator key {key!r}", f"instance.generator.{key}")
    if gen.get("kind", "random-friendly-chain") not in KINDS:
        raise ConfigError(f"unknown generator kind {gen.get('kind')!r}", "instance.generator.kind")


def _generator_spec(params: dict, **overrides) -> GeneratorSpec:
    gen = dict(params["instance"]["generator"])
    gen.update(overrides)
    try:
        return GeneratorSpec(**gen)
    except AlignError as exc:
        raise ConfigError(str(exc), "instance.generator") from exc


def _load_instance(params: dict, base_seed: int, stream: int = 0, **overrides) -> Instance:
    inst = params["instance"]
    if "file" in inst:
        mdp, policy = load_mdp(inst["file"])
        if policy is None:
            raise ConfigError("instance file has no policy", "instance.file")
        return Instance(mdp, policy, None, 1)
    return generate(_generator_spec(params, **overrides), RngSeed(base_seed, INSTANCE_STREAM + stream))


def _permutation(n: int, base_seed: int, seed: int) -> PermutationMap:
    return PermutationMap.random(n, RngSeed(base_seed, PERM_STREAM + seed).generator())


def auto_threshold(mu: np.ndarray) -> float:
    """Midpoint between the two smallest stationary masses: clips exactly one state."""
    s = np.sort(mu)
    return float((s[0] + s[1]) / 2.0)


def _stationary(mdp: TabularMDP, policy: StochasticPolicy) -> np.ndarray:
    return stationary_distribution(induced_chain(mdp, policy), mdp.p0, gamma=mdp.gamma)


@dataclass
class ExperimentOutput:
    columns: list[str]
    rows: list[dict]
    summary: dict = field(default_factory=dict)

    def summary_line(self) -> str:
        return " ".join(f"{k}={v}" for k, v in self.summary.items() if not isinstance(v, (list, dict)))


def run_exact_recovery(cfg: ExperimentConfig) -> ExperimentOutput:
    lo, hi = cfg.params["n_range"]
    file_based = "file" in cfg.params["instance"]
    rows = []
    for s in cfg.seeds:
        if file_based:
            inst = _load_instance(cfg.params, cfg.base_seed)
        else:
            n = lo + s % (hi - lo + 1)
            inst = _load_instance(cfg.params, cfg.base_seed, s, n_states=n)
        M = induced_chain(inst.mdp, inst.policy)
        pi_star = _permutation(inst.mdp.n_states, cfg.base_seed, s)
        status = "ok"
        try:
            pi_hat = exact_recover(M, pi_star.conjugate(M), inst.mdp.p0, inst.mdp.p0[pi_star.forward])
            success = pi_hat == pi_star
        except AlignError as exc:
            success, status = False, type(exc).__name__
        cert = inst.certificate
        rows.append(
            {
                "seed": s,
                "n_states": inst.mdp.n_states,
                "success": int(success),
                "alpha": cert.alpha if cert else float("nan"),
                "beta": cert.beta if cert else float("nan"),
                "status": status,
            }
        )
    wins = sum(r["success"] for r in rows)
    return ExperimentOutput(
        ["seed", "n_states", "success", "alpha", "beta", "status"],
        rows,
        {"success": f"{wins}/{len(rows)}"},
    )


def run_ppl_sweep(cfg: ExperimentConfig) -> ExperimentOutput:
    inst = _load_instance(cfg.params, cfg.base_seed)
    mdp, policy = inst.mdp, inst.policy
    mu = _stationary(mdp, policy)
    t = cfg.params["t"]
    t = auto_threshold(mu) if t == "auto" else float(t)
    I_t = threshold_set(mu, t)
    rows = []
    medians = []
    for m in cfg.params["m_grid"]:
        losses = []
        for s in cfg.seeds:
            pi_star = _permutation(mdp.n_states, cfg.base_seed, s)
            traj = sample_trajectory(mdp, policy, pi_star, m, RngSeed(cfg.base_seed, TRAJ_STREAM + s))
            try:
                res = ppl(mdp, policy, PplConfig(t=t), traj)
            except AlignError as exc:
                rows.append({"m": m, "seed": s, "t": t, "loss": float("nan"), "aligned": 0, "status": type(exc).__name__})
                continue
            inv_hat, inv_star = res.pi_hat.inverse().forward, pi_star.inverse().forward
            aligned = bool(np.array_equal(inv_hat[I_t], inv_star[I_t]))
            loss = imitation_loss(mdp, policy, pi_star, res.policy_hat)
            losses.append(loss)
            rows.append({"m": m, "seed": s, "t": t, "loss": loss, "aligned": int(aligned), "status": "ok"})
        medians.append(float(np.median(losses)) if losses else float("nan"))
    return ExperimentOutput(
        ["m", "seed", "t", "loss", "aligned", "status"],
        rows,
        {"t": t, "median_loss": medians, "m_grid": cfg.params["m_grid"]},
    )


def run_rate_diagnostics(cfg: ExperimentConfig) -> ExperimentOutput:
    inst = _load_instance(cfg.params, cfg.base_seed)
    pi_star = _permutation(inst.mdp.n_states, cfg.base_seed, 0)
    table = rate_diagnostics(
        inst.mdp, inst.policy, pi_star, cfg.params["m_grid"], cfg.seeds, base_seed=cfg.base_seed
    )
    rows = [{"m": m, "seed": s, "chain_error": ce, "stationary_error": se} for m, s, ce, se in table.rows]
    return ExperimentOutput(
        ["m", "seed", "chain_error", "stationary_error"],
        rows,
        {"slope_chain": table.slope_chain, "slope_stationary": table.slope_stationary},
    )


def agreeing_permutation(pi_star: PermutationMap, mu: np.ndarray, t: float, rng: np.random.Generator) -> PermutationMap:
    """A permutation equal to ``pi_star`` on the preimage of every state with ``mu >= t``
    and shuffled at random elsewhere."""
    inv = pi_star.inverse().forward
    low = np.flatnonzero(mu < t)
    forward = pi_star.forward.copy()
    positions = inv[low]
    forward[positions] = forward[positions][rng.permutation(low.size)]
    return PermutationMap(forward)


def run_theorem2_check(cfg: ExperimentConfig) -> ExperimentOutput:
    rows = []
    for s in cfg.seeds:
        inst = _load_instance(cfg.params, cfg.base_seed, s)
        mdp, policy = inst.mdp, inst.policy
        mu = _stationary(mdp, policy)
        pi_star = _permutation(mdp.n_states, cfg.base_seed, s)
        rng = RngSeed(cfg.base_seed, TRAJ_STREAM + s).generator()
        for t in cfg.params["t_grid"]:
            t = auto_threshold(mu) if t == "auto" else float(t)
            pi_hat = agreeing_permutation(pi_star, mu, t, rng)
            chk = imitation_loss_bound_check(mdp, policy, pi_star, pi_hat, t)
            rows.append(
                {
                    "seed": s,
                    "t": t,
                    "n_clipped": int(np.sum(mu < t)),
                    "loss": chk.loss,
                    "bound": chk.bound,
                    "holds": int(chk.holds),
                    "hypothesis_met": int(chk.hypothesis_met),
                }
            )
    ok = sum(r["holds"] for r in rows)
    return ExperimentOutput(
        ["seed", "t", "n_clipped", "loss", "bound", "holds", "hypothesis_met"],
        rows,
        {"holds": f"{ok}/{len(rows)}"},
    )


def run_lower_bound(cfg: ExperimentConfig) -> ExperimentOutput:
    p = cfg.params
    res = lower_bound_experiment(
        p["eps_grid"], p["delta"], cfg.seeds, gamma=p["gamma"], base_seed=cfg.base_seed,
        epsilon_known=bool(p["epsilon_known"]),
    )
    return ExperimentOutput(
        ["epsilon", "seed", "T", "final_loss", "selected_hypothesis", "true_hypothesis"],
        res.rows,
        {"slope": res.slope, "cells": res.summary},
    )


RUNNERS = {
    "exact-recovery": run_exact_recovery,
    "ppl-sweep": run_ppl_sweep,
    "rate-diagnostics": run_rate_diagnostics,
    "theorem2-check": run_theorem2_check,
    "lower-bound": run_lower_bound,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentOutput:
    return RUNNERS[cfg.experiment](cfg)


def manifest(cfg: ExperimentConfig) -> dict:
    return {
        "config": cfg.echo(),
        "library_version": __version__,
        "numpy_version": np.__version__,
        "seeds": cfg.seeds,
        "base_seed": cfg.base_seed,
    }
