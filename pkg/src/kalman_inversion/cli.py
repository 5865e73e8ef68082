"""Command-line front end.

    invert run --config run.json [--set key=value ...] [--out DIR] [--seed N]
    invert compare a/summary.json b/summary.json ...
    invert list-problems
"""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import forward_models as fm
from .config import RunConfig, apply_overrides, load_run_config
from .engine import check_stationarity, run_inversion
from .errors import ConfigError, DivergenceDetected, InversionError, MismatchedProblems
from .gaussian import GaussianBelief, gaussian_kl
from .reference import (
    posterior_moments_quadrature,
    pullback_moments,
    rwm_sample,
)

log = logging.getLogger("kalman_inversion")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


# -- serialization ---------------------------------------------------------------

def _fmt(x) -> str:
    return repr(float(x))


def history_columns(n_theta: int) -> list[str]:
    return (["iter"] + [f"m_{i}" for i in range(1, n_theta + 1)]
            + ["cov_frobenius", "optimization_error", "forward_evals"])


def write_history(path, records) -> None:
    n_theta = records[0].belief.dim
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(history_columns(n_theta))
        for r in records:
            writer.writerow([r.iteration, *map(_fmt, r.mean), _fmt(r.cov_frobenius),
                             _fmt(r.optimization_error), r.forward_evaluations])


def read_history(path) -> list[dict]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            means = [float(v) for k, v in row.items() if k.startswith("m_")]
            rows.append({
                "iter": int(row["iter"]),
                "mean": np.array(means),
                "cov_frobenius": float(row["cov_frobenius"]),
                "optimization_error": float(row["optimization_error"]),
                "forward_evals": int(row["forward_evals"]),
            })
    return rows


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


# -- oracle --------------------------------------------------------------------

def _pullback_inverse(run: RunConfig):
    pid = run.problem_id
    if pid == "linear":
        G = np.atleast_2d(np.asarray(run.resolved["problem"]["G"], dtype=float))
        if G.shape[0] != G.shape[1]:
            raise ConfigError("oracle.kind: pull-back needs a square linear map")
        return lambda z: np.linalg.solve(G, np.asarray(z).T).T
    return lambda z: fm.scalar_inverse(pid, z)


def run_oracle(run: RunConfig):
    o = run.oracle
    prior = o.get("prior")
    prior = None if prior is None else GaussianBelief(prior["mean"], prior["cov"])
    if o["kind"] == "mcmc":
        return rwm_sample(run.problem, prior, run.mcmc_config())
    if o["kind"] == "pullback":
        return pullback_moments(run.problem, _pullback_inverse(run), int(o["n_samples"]), int(o["seed"]))
    return posterior_moments_quadrature(run.problem, o["interval"], int(o["n_nodes"]), prior)


def oracle_block(kind: str, summary, belief: GaussianBelief) -> dict:
    m, C = summary.mean, summary.covariance
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.abs(belief.cov - C) / np.abs(C)
    block = {
        "kind": kind,
        "mean": m.tolist(),
        "covariance": C.tolist(),
        "std": summary.std.tolist(),
        "count": int(summary.count),
        "mean_abs_diff": np.abs(belief.mean - m).tolist(),
        "std_rel_diff": (np.abs(belief.std - summary.std) / summary.std).tolist(),
        "cov_rel_diff": [[v if np.isfinite(v) else None for v in row] for row in rel.tolist()],
        "cov_frobenius_gap": float(np.linalg.norm(belief.cov - C)),
    }
    if summary.mean_se is not None:
        block["mean_se"] = np.asarray(summary.mean_se).tolist()
    if summary.std_se is not None:
        block["std_se"] = np.asarray(summary.std_se).tolist()
    if summary.acceptance_rate is not None:
        block["acceptance_rate"] = summary.acceptance_rate
    try:
        block["kl_uki_oracle"] = gaussian_kl(belief, summary.as_belief())
    except InversionError:
        block["kl_uki_oracle"] = None
    return block


# -- commands ----------------------------------------------------------------

def run_command(config_path, overrides=(), out=None, seed=None) -> int:
    try:
        raw = json.loads(Path(config_path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        log.error("cannot read config %s: %s", config_path, exc)
        return EXIT_CONFIG
    overrides = list(overrides or [])
    if out is not None:
        overrides.append(f"output_dir={json.dumps(str(out))}")
    if seed is not None:
        overrides.append(f"seed={int(seed)}")
    try:
        run = load_run_config(apply_overrides(raw, overrides))
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG

    out_dir = Path(run.resolved["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "config_resolved.json", run.resolved)

    diverged = False
    try:
        records = run_inversion(run.problem, run.policy)
    except DivergenceDetected as exc:
        log.warning("%s", exc)
        records, diverged = exc.records, True
    except InversionError as exc:
        log.error("%s: %s (iteration %s)", type(exc).__name__, exc, getattr(exc, "iteration", "?"))
        records = getattr(exc, "records", None)
        if records:
            write_history(out_dir / "history.csv", records)
        return EXIT_ERROR
    write_history(out_dir / "history.csv", records)

    final = records[-1].belief
    summary = {
        "problem": run.problem_id,
        "algorithm": run.resolved["algorithm"],
        "omega_policy": run.resolved["omega_policy"],
        "n_theta": final.dim,
        "iterations": records[-1].iteration,
        "diverged": diverged,
        "final_mean": final.mean.tolist(),
        "final_cov": final.cov.tolist(),
        "final_std": final.std.tolist(),
        "optimization_error": records[-1].optimization_error,
        "forward_evaluations": int(sum(r.forward_evaluations for r in records)),
        "stationarity": None,
    }
    try:
        if run.problem.jacobian is not None and not diverged:
            mean_res, prec_res = check_stationarity(final, run.problem)
            summary["stationarity"] = {"mean_residual": mean_res, "precision_residual": prec_res}
        if run.oracle is not None and not diverged:
            summary["oracle"] = oracle_block(run.oracle["kind"], run_oracle(run), final)
    except InversionError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        _write_json(out_dir / "summary.json", summary)
        return EXIT_ERROR
    _write_json(out_dir / "summary.json", summary)
    log.info("wrote %s", out_dir)
    return EXIT_DIVERGED if diverged else EXIT_OK


def compare_summaries(summaries: list[dict], labels: list[str]) -> str:
    if len(summaries) < 2:
        raise MismatchedProblems("compare needs at least two summaries")
    ids = {s["problem"] for s in summaries}
    if len(ids) != 1:
        raise MismatchedProblems(f"summaries come from different problems: {sorted(ids)}")
    beliefs = [GaussianBelief(s["final_mean"], s["final_cov"]) for s in summaries]
    lines = [f"problem: {ids.pop()}", ""]
    header = f"{'run':<32} {'algorithm':<10} {'omega':<9} {'mean':<36} {'std':<36} {'oracle cov gap':>14}"
    lines += [header, "-" * len(header)]
    for label, s, b in zip(labels, summaries, beliefs):
        gap = s.get("oracle", {}).get("cov_frobenius_gap")
        gap_txt = f"{gap:14.6g}" if gap is not None else f"{'-':>14}"
        mean_txt = " ".join(f"{v:.6g}" for v in b.mean[:4]) + (" ..." if b.dim > 4 else "")
        std_txt = " ".join(f"{v:.6g}" for v in b.std[:4]) + (" ..." if b.dim > 4 else "")
        lines.append(f"{label:<32} {s['algorithm']:<10} {s['omega_policy']:<9} "
                     f"{mean_txt:<36} {std_txt:<36} {gap_txt}")
    lines += ["", f"{'pair':<66} {'KL(a||b)':>12} {'cov gap':>12} {'mean gap':>12}"]
    for (i, a), (j, b) in itertools.combinations(enumerate(beliefs), 2):
        kl = gaussian_kl(a, b)
        gap = float(np.linalg.norm(a.cov - b.cov))
        mgap = float(np.linalg.norm(a.mean - b.mean))
        lines.append(f"{labels[i] + ' vs ' + labels[j]:<66} {kl:12.6g} {gap:12.6g} {mgap:12.6g}")
    return "\n".join(lines)


def _label(path) -> str:
    p = Path(path)
    return p.parent.name if p.name == "summary.json" and p.parent.name else str(p)


def compare_command(paths) -> int:
    try:
        summaries = [json.loads(Path(p).read_text(encoding="utf-8")) for p in paths]
    except (OSError, json.JSONDecodeError) as exc:
        log.error("cannot read summary: %s", exc)
        return EXIT_CONFIG
    try:
        print(compare_summaries(summaries, [_label(p) for p in paths]))
    except MismatchedProblems as exc:
        log.error("%s", exc)
        return EXIT_ERROR
    return EXIT_OK


def list_problems_command() -> int:
    for pid, desc in fm.PROBLEM_DESCRIPTIONS.items():
        print(f"{pid:<12} {desc}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="invert", description="Kalman inversion experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one inversion from a JSON config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    p_run.add_argument("--out")
    p_run.add_argument("--seed", type=int)
    p_cmp = sub.add_parser("compare", help="tabulate two or more summary.json files")
    p_cmp.add_argument("summaries", nargs="+")
    sub.add_parser("list-problems", help="list the available forward models")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    if args.command == "run":
        return run_command(args.config, args.overrides, args.out, args.seed)
    if args.command == "compare":
        return compare_command(args.summaries)
    return list_problems_command()


if __name__ == "__main__":
    sys.exit(main())
