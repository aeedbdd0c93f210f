"""MDP file format (JSON) and result serialisation."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .mdp import StochasticPolicy, TabularMDP


def mdp_to_dict(mdp: TabularMDP, policy: StochasticPolicy | None = None) -> dict:
    d = {
        "n_states": mdp.n_states,
        "n_actions": mdp.n_actions,
        "gamma": mdp.gamma,
        "p0": mdp.p0.tolist(),
        "P": mdp.dynamics.tolist(),
    }
    if policy is not None:
        d["policy"] = policy.probs.tolist()
    return d


def mdp_from_dict(d: dict) -> tuple[TabularMDP, StochasticPolicy | None]:
    for key in ("n_states", "n_actions", "gamma", "p0", "P"):
        if key not in d:
            raise ValidationError(f"MDP file is missing key {key!r}")
    P = np.asarray(d["P"], dtype=float)
    if P.shape != (d["n_actions"], d["n_states"], d["n_states"]):
        raise ValidationError(
            f"P has shape {P.shape}, expected ({d['n_actions']}, {d['n_states']}, {d['n_states']})"
        )
    mdp = TabularMDP(P, np.asarray(d["p0"], dtype=float), float(d["gamma"]))
    policy = None
    if d.get("policy") is not None:
        policy = StochasticPolicy(np.asarray(d["policy"], dtype=float))
        if policy.probs.shape != (mdp.n_states, mdp.n_actions):
            raise ValidationError("policy shape does not match the MDP")
    return mdp, policy


def save_mdp(path, mdp: TabularMDP, policy: StochasticPolicy | None = None) -> None:
    Path(path).write_text(json.dumps(mdp_to_dict(mdp, policy), indent=2) + "\n")


def load_mdp(path) -> tuple[TabularMDP, StochasticPolicy | None]:
    return mdp_from_dict(json.loads(Path(path).read_text()))


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_csv(path, columns: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])
