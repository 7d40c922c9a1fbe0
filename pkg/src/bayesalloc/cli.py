"""Command-line entry points: solve, evaluate, reproduce, oracle.

``reproduce`` runs the full benchmark for one case: the Bayesian-learning
solver across the prior-mass grid plus both parametric baselines, all
scored on one shared set of out-of-sample paths, emitting four tidy CSV
files ready for plotting.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from . import io, oracle
from .baselines import solve_adaptive, solve_strong_robust
from .config import (
    CASE_IDS,
    ExperimentConfig,
    case_preset,
    derive_seeds,
    dump_config,
    load_config,
    resolve_initial_estimates,
)
from .evaluate import EvalReport, simulate_out_of_sample
from .measures import sample_mixture
from .solver_ab import backward_induction, generate_mesh

__all__ = ["main", "run_solve", "run_reproduce", "run_oracle", "evaluate_policy"]


def _c0_tag(c0: float) -> str:
    return str(int(c0)) if float(c0).is_integer() else repr(float(c0))


def _method_label(method: str, c0) -> str:
    return f"ab:c0={_c0_tag(c0)}" if method == "ab" else method


def _solve_one(config: ExperimentConfig, method: str, c0, threads: int):
    rng = np.random.default_rng(config.seeds.design)
    if method == "ab":
        mesh = generate_mesh(config, rng, float(c0))
        return backward_induction(config, mesh, threads=threads)
    if method == "sr":
        return solve_strong_robust(config, rng, threads=threads)
    if method == "ad":
        return solve_adaptive(config, rng, threads=threads)
    raise ValueError(f"unknown method {method!r}")


def run_solve(config: ExperimentConfig, method: str, c0, out_dir, threads: int = 1):
    """Solve one method and persist the policy plus a provenance manifest."""
    if method == "ab" and c0 is None:
        raise ValueError("method 'ab' requires a prior mass c0")
    if method != "ab" and c0 is not None:
        raise ValueError(f"method {method!r} does not take a prior mass")
    config = resolve_initial_estimates(config)
    os.makedirs(out_dir, exist_ok=True)
    policy = _solve_one(config, method, c0, threads)

    config_sha = io.sha256_text(dump_config(config))
    suffix = f"_c0{_c0_tag(c0)}" if method == "ab" else ""
    policy_path = os.path.join(out_dir, f"policy_{method}{suffix}.json")
    io.save_policy(policy, policy_path, config_sha)
    manifest_path = os.path.join(out_dir, f"policy_{method}{suffix}.manifest")
    io.write_manifest(
        manifest_path,
        [
            ("method", method),
            ("c0", "" if c0 is None else _c0_tag(c0)),
            ("config_sha256", config_sha),
            ("seed_design", config.seeds.design),
            ("seed_inner", config.seeds.inner),
            ("seed_evaluation", config.seeds.evaluation),
            ("seed_history", config.seeds.history),
            ("policy_file", os.path.basename(policy_path)),
            ("policy_sha256", io.sha256_file(policy_path)),
        ],
    )
    return policy, policy_path, manifest_path


def _draw_eval_noise(config: ExperimentConfig) -> np.ndarray:
    rng = np.random.default_rng(config.seeds.evaluation)
    return sample_mixture(config.sampling_measure, (config.N_prime, config.T), rng)


def evaluate_policy(policy, config: ExperimentConfig, out_dir) -> EvalReport:
    """Score a saved policy out-of-sample and emit its CSV reports."""
    config = resolve_initial_estimates(config)
    os.makedirs(out_dir, exist_ok=True)
    report = simulate_out_of_sample(policy, config, _draw_eval_noise(config))
    _write_reports([report], config, out_dir)
    return report


def _write_reports(reports: list[EvalReport], config: ExperimentConfig, out_dir) -> None:
    summary_rows = []
    strategy_rows = []
    utility_rows = []
    mu_rows = []
    for rep in reports:
        label = _method_label(rep.method, rep.c0)
        s = rep.stats
        summary_rows.append(
            (
                rep.method,
                "" if rep.c0 is None else _c0_tag(rep.c0),
                s.mean,
                s.var,
                s.q30,
                s.q90,
                s.max,
                s.min,
            )
        )
        n_paths, horizon = rep.strategy_paths.shape
        for i in range(n_paths):
            for t in range(horizon):
                strategy_rows.append((label, i, t, rep.strategy_paths[i, t]))
            utility_rows.append((label, i, rep.terminal_utilities[i]))
        if rep.mean_paths is not None:
            for i in range(n_paths):
                for t in range(horizon + 1):
                    mu_rows.append((i, t, rep.mean_paths[i, t]))
    io.write_csv(
        os.path.join(out_dir, "summary_stats.csv"),
        ("method", "c0", "mean", "var", "q30", "q90", "max", "min"),
        summary_rows,
    )
    io.write_csv(
        os.path.join(out_dir, "strategy_paths.csv"),
        ("method", "path", "t", "control"),
        strategy_rows,
    )
    io.write_csv(
        os.path.join(out_dir, "utility_dist.csv"),
        ("method", "path", "utility"),
        utility_rows,
    )
    io.write_csv(
        os.path.join(out_dir, "mu_paths.csv"),
        ("path", "t", "mu_hat"),
        mu_rows,
    )


def run_reproduce(
    case_id: str,
    out_dir,
    scale: str = "full",
    seed: int | None = None,
    threads: int = 1,
    config: ExperimentConfig | None = None,
):
    """Run one benchmark case end to end and emit the four CSV reports.

    Solves the Bayesian method for every prior mass in the config grid plus
    the strong-robust and adaptive baselines, evaluates all of them on one
    shared out-of-sample noise array, and writes ``summary_stats.csv``,
    ``strategy_paths.csv``, ``utility_dist.csv``, and ``mu_paths.csv``.
    """
    if config is None:
        config = case_preset(case_id, scale)
    if seed is not None:
        config = replace(config, seeds=derive_seeds(seed))
    config = resolve_initial_estimates(config)
    os.makedirs(out_dir, exist_ok=True)

    noise = _draw_eval_noise(config)
    reports = []
    for c0 in config.c0_list:
        policy = _solve_one(config, "ab", c0, threads)
        reports.append(simulate_out_of_sample(policy, config, noise))
    for method in ("sr", "ad"):
        policy = _solve_one(config, method, None, threads)
        reports.append(simulate_out_of_sample(policy, config, noise))
    _write_reports(reports, config, out_dir)
    return {
        name: os.path.join(out_dir, name)
        for name in ("summary_stats.csv", "strategy_paths.csv", "utility_dist.csv", "mu_paths.csv")
    }


def run_oracle(instance_path, out_path=None) -> oracle.OracleReport:
    """Solve a small discrete instance by exhaustive grid DP."""
    inst = oracle.load_instance(instance_path)
    report = oracle.solve_instance(inst)
    text = (
        f"u_star = {report.u_star!r}\n"
        f"value = {report.value!r}\n"
        f"control_step = {report.control_step!r}\n"
    )
    if out_path is not None:
        io.atomic_write_text(out_path, text)
    sys.stdout.write(text)
    return report


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bayesalloc")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="solve one method and save the policy")
    solve.add_argument("--config", required=True)
    solve.add_argument("--method", required=True, choices=("ab", "sr", "ad"))
    solve.add_argument("--c0", type=float, default=None)
    solve.add_argument("--seed", type=int, default=None)
    solve.add_argument("--out", required=True)
    solve.add_argument("--threads", type=int, default=1)

    ev = sub.add_parser("evaluate", help="score a saved policy out-of-sample")
    ev.add_argument("policy")
    ev.add_argument("--config", required=True)
    ev.add_argument("--seed", type=int, default=None)
    ev.add_argument("--out", required=True)

    rep = sub.add_parser("reproduce", help="run one benchmark case end to end")
    rep.add_argument("--case", required=True, choices=CASE_IDS)
    rep.add_argument("--scale", default="full", choices=("full", "ci"))
    rep.add_argument("--seed", type=int, default=None)
    rep.add_argument("--out", required=True)
    rep.add_argument("--threads", type=int, default=1)

    orc = sub.add_parser("oracle", help="exhaustive DP on a small discrete instance")
    orc.add_argument("instance")
    orc.add_argument("--out", default=None)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "solve":
        config = load_config(args.config)
        if args.seed is not None:
            config = replace(config, seeds=derive_seeds(args.seed))
        _, policy_path, manifest_path = run_solve(
            config, args.method, args.c0, args.out, threads=args.threads
        )
        sys.stdout.write(f"{policy_path}\n{manifest_path}\n")
    elif args.command == "evaluate":
        config = load_config(args.config)
        if args.seed is not None:
            config = replace(config, seeds=derive_seeds(args.seed))
        policy = io.load_policy(args.policy)
        report = evaluate_policy(policy, config, args.out)
        sys.stdout.write(f"mean = {report.stats.mean!r}\n")
    elif args.command == "reproduce":
        paths = run_reproduce(
            args.case, args.out, scale=args.scale, seed=args.seed, threads=args.threads
        )
        sys.stdout.write("".join(f"{p}\n" for p in paths.values()))
    elif args.command == "oracle":
        run_oracle(args.instance, args.out)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
