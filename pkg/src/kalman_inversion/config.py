"""Run configuration: JSON schema, dotted overrides and object construction.

A configuration is a JSON object::

    {
      "problem": {"id": "exponential", "sigma_eta": 0.01, "theta_ref": 2.0,
                  "noise": "none", "y": null},
      "algorithm": "uki",              # or "exki"
      "omega_policy": "adaptive",      # or "fixed"
      "nu_factor": 2.0,
      "max_iterations": 20,
      "initial": {"mean": [1.0], "cov": [[0.25]]},
      "oracle": null,                  # or {"kind": "mcmc" | "pullback" | "quadrature", ...}
      "seed": 0,
      "output_dir": "runs/exponential",
      "n_workers": 1,
      "divergence_threshold": 1e8
    }

Missing keys are filled with per-problem defaults by :func:`resolve_config`;
the resolved dictionary is what gets written to ``config_resolved.json``.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from . import forward_models as fm
from .engine import InverseProblem, InversionPolicy
from .errors import ConfigError
from .gaussian import GaussianBelief
from .reference import McmcConfig

SCALAR_IDS = tuple(k.value for k in fm.ScalarProblemKind)
PROBLEM_IDS = SCALAR_IDS + ("elliptic2", "darcy", "linear")

QUADRATURE_INTERVALS = {
    "exponential": (-10.0, 16.0),
    "quadratic": (-6.0, 6.0),
    "cubic": (1.0, 3.0),
    "sign_cubic": (1.0, 3.0),
    "hyperbola": (-80.0, 80.0),
}

TOP_LEVEL_KEYS = {"problem", "algorithm", "omega_policy", "nu_factor", "max_iterations", "initial",
                  "oracle", "seed", "output_dir", "n_workers", "divergence_threshold"}


def _default_initial(pid: str, n_theta: int) -> dict:
    if pid in SCALAR_IDS:
        return {"mean": [1.0], "cov": [[0.25]]}
    if pid == "elliptic2":
        return {"mean": [0.0, 0.0], "cov": [[1.0, 0.0], [0.0, 100.0]]}
    return {"mean": [0.0] * n_theta, "cov": np.eye(n_theta).tolist()}


def _default_prior(pid: str, n_theta: int) -> dict:
    if pid in SCALAR_IDS:
        return {"mean": [1.0], "cov": [[100.0]]}
    if pid == "elliptic2":
        return {"mean": [0.0, 0.0], "cov": [[1.0, 0.0], [0.0, 100.0]]}
    return {"mean": [0.0] * n_theta, "cov": (100.0 * np.eye(n_theta)).tolist()}


def _n_theta(problem: dict) -> int:
    pid = problem["id"]
    if pid in SCALAR_IDS:
        return 1
    if pid == "elliptic2":
        return 2
    if pid == "darcy":
        return int(problem.get("n_kl", fm.DarcyConfig.n_kl))
    G = problem.get("G")
    if G is None:
        raise ConfigError("problem.G is required for the linear problem")
    return int(np.atleast_2d(G).shape[1])


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: dict, overrides) -> dict:
    """Apply ``a.b.c=value`` overrides; values are parsed as JSON when possible."""
    out = copy.deepcopy(raw)
    for item in overrides or ():
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        parts = key.split(".")
        node = out
        for part in parts[:-1]:
            if node.get(part) is None:
                node[part] = {}
            node = node[part]
            if not isinstance(node, dict):
                raise ConfigError(f"override key {key!r}: {part!r} is not an object")
        node[parts[-1]] = _parse_value(value)
    return out


def resolve_config(raw: dict) -> dict:
    """Validate ``raw`` and fill every default explicitly."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = set(raw) - TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(f"unknown configuration key(s): {', '.join(sorted(unknown))}")
    problem = raw.get("problem")
    if isinstance(problem, str):
        problem = {"id": problem}
    if not isinstance(problem, dict) or "id" not in problem:
        raise ConfigError("problem.id is required")
    problem = dict(problem)
    pid = problem["id"]
    if pid not in PROBLEM_IDS:
        raise ConfigError(f"problem.id: unknown problem {pid!r}; choose from {', '.join(PROBLEM_IDS)}")
    problem.setdefault("sigma_eta", fm.SIGMA_ETA)
    problem.setdefault("noise", "none")
    problem.setdefault("y", None)
    if problem["noise"] not in ("none", "gaussian"):
        raise ConfigError("problem.noise must be 'none' or 'gaussian'")
    if pid in SCALAR_IDS:
        problem.setdefault("theta_ref", fm.THETA_REF_SCALAR)
    n_theta = _n_theta(problem)

    out = {
        "problem": problem,
        "algorithm": raw.get("algorithm", "uki"),
        "omega_policy": raw.get("omega_policy", "adaptive"),
        "nu_factor": float(raw.get("nu_factor", 2.0)),
        "max_iterations": raw.get("max_iterations", 20),
        "initial": {**_default_initial(pid, n_theta), **(raw.get("initial") or {})},
        "oracle": raw.get("oracle"),
        "seed": raw.get("seed", 0),
        "output_dir": raw.get("output_dir", f"runs/{pid}"),
        "n_workers": raw.get("n_workers", 1),
        "divergence_threshold": float(raw.get("divergence_threshold", 1e8)),
    }
    if out["algorithm"] not in ("uki", "exki"):
        raise ConfigError("algorithm must be 'uki' or 'exki'")
    if out["omega_policy"] not in ("adaptive", "fixed"):
        raise ConfigError("omega_policy must be 'adaptive' or 'fixed'")
    if not isinstance(out["max_iterations"], int) or out["max_iterations"] < 1:
        raise ConfigError("max_iterations must be a positive integer")
    if not isinstance(out["seed"], int):
        raise ConfigError("seed must be an integer")
    if not out["nu_factor"] > 0:
        raise ConfigError("nu_factor must be positive")
    init = out["initial"]
    if np.shape(init.get("mean")) != (n_theta,) or np.shape(init.get("cov")) != (n_theta, n_theta):
        raise ConfigError(f"initial: mean/cov must have dimension {n_theta} for problem {pid!r}")

    oracle = out["oracle"]
    if oracle is not None:
        oracle = dict(oracle)
        kind = oracle.get("kind")
        if kind not in ("mcmc", "pullback", "quadrature"):
            raise ConfigError("oracle.kind must be 'mcmc', 'pullback' or 'quadrature'")
        oracle.setdefault("seed", out["seed"])
        if kind == "mcmc":
            oracle.setdefault("step_size", 1.0)
            oracle.setdefault("n_samples", 10000)
            oracle.setdefault("burn_in", oracle["n_samples"] // 5)
            oracle.setdefault("n_chains", 100)
            oracle.setdefault("init", None)
            oracle.setdefault("init_spread", 0.0)
            oracle.setdefault("prior", _default_prior(pid, n_theta))
        elif kind == "pullback":
            if pid not in ("exponential", "cubic", "hyperbola", "linear"):
                raise ConfigError(f"oracle.kind: pull-back needs an invertible map, {pid!r} has none")
            oracle.setdefault("n_samples", 100000)
        else:
            if n_theta != 1:
                raise ConfigError("oracle.kind: quadrature supports one-parameter problems only")
            oracle.setdefault("interval", list(QUADRATURE_INTERVALS.get(pid, (-10.0, 10.0))))
            oracle.setdefault("n_nodes", 200001)
            oracle.setdefault("prior", _default_prior(pid, n_theta))
        out["oracle"] = oracle
    return out


@dataclass
class RunConfig:
    """Resolved run configuration plus the objects it describes."""

    resolved: dict
    problem: InverseProblem
    policy: InversionPolicy

    @property
    def problem_id(self) -> str:
        return self.resolved["problem"]["id"]

    @property
    def oracle(self) -> Optional[dict]:
        return self.resolved["oracle"]

    def mcmc_config(self) -> McmcConfig:
        o = self.oracle
        init = None if o["init"] is None else tuple(np.atleast_1d(o["init"]).tolist())
        return McmcConfig(step_size=float(o["step_size"]), n_samples=int(o["n_samples"]),
                          burn_in=int(o["burn_in"]), seed=int(o["seed"]), init=init,
                          n_chains=int(o["n_chains"]), init_spread=float(o["init_spread"]))


def build_problem(problem: dict, seed: int = 0) -> InverseProblem:
    pid = problem["id"]
    sigma = problem["sigma_eta"]
    y = problem.get("y")
    noise = problem.get("noise", "none")
    if pid in SCALAR_IDS:
        if y is None:
            y = fm.make_reference_observation(pid, problem["theta_ref"], seed, noise, sigma)
        return fm.scalar_problem(pid, sigma_eta=sigma, y=y)
    if pid == "elliptic2":
        if y is None:
            y = fm.make_reference_observation(pid, problem["theta_ref"], seed, noise, sigma) \
                if "theta_ref" in problem else fm.ELLIPTIC2_Y
        return fm.elliptic2_problem(y=y, sigma_eta=sigma)
    if pid == "darcy":
        kw = {k: problem[k] for k in ("n_cells", "n_kl", "n_obs") if k in problem}
        config = fm.DarcyConfig(**kw)
        if y is None and noise == "gaussian":
            theta_ref = problem.get("theta_ref", fm.darcy_theta_ref().tolist())
            y = fm.make_reference_observation("darcy", theta_ref, seed, noise, sigma)
        elif y is None and "theta_ref" in problem:
            y = fm.darcy_solve(np.asarray(problem["theta_ref"]), config)
        return fm.darcy_problem(config, y=y, sigma_eta=sigma)
    G = np.atleast_2d(np.asarray(problem["G"], dtype=float))
    if y is None:
        if "theta_ref" not in problem:
            raise ConfigError("problem.y or problem.theta_ref is required for the linear problem")
        y = G @ np.asarray(problem["theta_ref"], dtype=float)
        if noise == "gaussian":
            s = np.asarray(sigma, dtype=float)
            s = s * np.eye(len(y)) if s.ndim == 0 else s
            y = y + np.linalg.cholesky(s) @ np.random.default_rng(seed).standard_normal(len(y))
    return fm.linear_problem(G, sigma, y)


def load_run_config(raw: dict) -> RunConfig:
    resolved = resolve_config(raw)
    try:
        problem = build_problem(resolved["problem"], resolved["seed"])
        init = resolved["initial"]
        policy = InversionPolicy(
            initial=GaussianBelief(init["mean"], init["cov"]),
            algorithm=resolved["algorithm"],
            omega_policy=resolved["omega_policy"],
            nu_factor=resolved["nu_factor"],
            max_iterations=resolved["max_iterations"],
            divergence_threshold=resolved["divergence_threshold"],
            n_workers=resolved["n_workers"],
        )
    except ConfigError:
        raise
    except (ValueError, KeyError, np.linalg.LinAlgError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
    return RunConfig(resolved=resolved, problem=problem, policy=policy)
