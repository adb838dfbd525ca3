"""Command line entry point.

    sparse-marl train config.json [--out DIR] [--quiet]
    sparse-marl ablate config.json [--out DIR] [--quiet]
    sparse-marl inspect-attention run/0/checkpoint.npz --seed 0 --steps 200

Exit codes: 0 success, 1 config error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..config import RunConfig, load_config
from ..env import TEAM_NAMES, FocusFire
from ..errors import ConfigError
from ..trainer import MetricsRow, collect_episode, load_checkpoint, save_checkpoint, train

log = logging.getLogger("sparse_marl")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

# metrics.csv must be byte-identical across reruns, so wall time lives in timing.csv
METRICS_COLUMNS = (
    "episode", "env_steps", "epsilon", "loss_td", "loss_aux", "loss_total",
    "train_return_mean", "test_win_rate", "test_return_mean",
    "mean_sparse_support", "mean_dense_support",
)
TIMING_COLUMNS = ("episode", "env_steps", "wall_ms")
ABLATION_COLUMNS = (
    "condition", "mixer", "ablation", "seed", "episode", "env_steps",
    "final_test_win_rate", "best_test_win_rate", "test_return_mean",
    "loss_td", "loss_aux", "loss_total", "mean_sparse_support", "mean_dense_support",
)
ATTENTION_COLUMNS = (
    "episode", "t", "agent", "entity", "visible", "dense_weight", "sparse_weight",
    "entity_team", "entity_distance",
)
ABLATION_MODES = ("dense_only", "s2rl", "sparse_only")
ABLATION_MIXERS = ("vdn", "qmix")


def fmt(value) -> str:
    """CSV cell: ints verbatim, floats with 9 significant digits."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.9g}"
    return str(value)


def write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([fmt(row[c]) for c in columns])


def parse_config(path) -> RunConfig:
    return load_config(path)


def _quantiles(values) -> dict:
    v = np.asarray(values, dtype=np.float64)
    q25, med, q75 = np.percentile(v, [25, 50, 75])
    return {"median": float(med), "q25": float(q25), "q75": float(q75),
            "per_seed": [float(x) for x in v]}


def run_seed(config: RunConfig, seed: int, run_dir: Path) -> list[MetricsRow]:
    """Train one seed and write its metrics, timing, config and checkpoint."""
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(json.dumps({**config.to_dict(), "seeds": [seed]},
                                                    indent=2, sort_keys=True) + "\n")
    result = train(config, seed)
    rows = [vars(r) for r in result.rows]
    write_csv(run_dir / "metrics.csv", METRICS_COLUMNS, rows)
    write_csv(run_dir / "timing.csv", TIMING_COLUMNS, rows)
    save_checkpoint(run_dir / "checkpoint.npz", result.learner, seed)
    return result.rows


def summarize(per_seed: dict[int, list[MetricsRow]]) -> dict:
    final = [rows[-1].test_win_rate for rows in per_seed.values()]
    best = [max(r.test_win_rate for r in rows) for rows in per_seed.values()]
    return {
        "seeds": list(per_seed),
        "final_test_win_rate": _quantiles(final),
        "best_test_win_rate": _quantiles(best),
    }


def cmd_train(config: RunConfig, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
    per_seed = {}
    for seed in config.seeds:
        log.info("training seed %d -> %s", seed, out / str(seed))
        per_seed[seed] = run_seed(config, seed, out / str(seed))
    summary = summarize(per_seed)
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary


def cmd_ablate(config: RunConfig, out: Path) -> list[dict]:
    """Every (mixer, mode) pair over the configured seeds; one ablation.csv row per run."""
    out.mkdir(parents=True, exist_ok=True)
    table = []
    for mixer in ABLATION_MIXERS:
        for mode in ABLATION_MODES:
            cond = f"{mixer}_{mode}"
            cfg = config.replace(mixer=mixer, ablation=mode)
            per_seed = {}
            for seed in cfg.seeds:
                log.info("ablation %s seed %d", cond, seed)
                rows = run_seed(cfg, seed, out / cond / str(seed))
                per_seed[seed] = rows
                last = rows[-1]
                table.append({
                    "condition": cond, "mixer": mixer, "ablation": mode, "seed": seed,
                    "episode": last.episode, "env_steps": last.env_steps,
                    "final_test_win_rate": last.test_win_rate,
                    "best_test_win_rate": max(r.test_win_rate for r in rows),
                    "test_return_mean": last.test_return_mean,
                    "loss_td": last.loss_td, "loss_aux": last.loss_aux, "loss_total": last.loss_total,
                    "mean_sparse_support": last.mean_sparse_support,
                    "mean_dense_support": last.mean_dense_support,
                })
            (out / cond / "summary.json").write_text(json.dumps(summarize(per_seed), indent=2) + "\n")
    write_csv(out / "ablation.csv", ABLATION_COLUMNS, table)
    return table


def cmd_inspect_attention(checkpoint, seed: int, steps: int, out: Path) -> Path:
    """Greedy rollouts from a checkpoint, dumping self-row attention of live agents.

    One row per (step, agent, entity).  Episodes restart until ``steps``
    environment steps have been taken.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    learner, _ = load_checkpoint(checkpoint)
    env = FocusFire(learner.config.env, seed=seed)
    rng = np.random.default_rng(seed)
    n = env.config.n_allies
    rows = []
    episode = 0
    taken = 0

    def record(t, env, weights):
        nonlocal taken
        if taken >= steps:
            return
        taken += 1
        obs = env.observations()
        for agent in range(n):
            if not env.state.alive[agent]:
                continue
            teams = env.entity_teams(agent)
            dists = env.entity_distances(agent)
            visible = obs[agent].alive_mask
            dense = weights["dense"].data[agent, 0]
            sparse = weights["sparse"].data[agent, 0]
            for j in range(len(teams)):
                rows.append({
                    "episode": episode, "t": t, "agent": agent, "entity": j,
                    "visible": bool(visible[j] or j == 0),
                    "dense_weight": float(dense[j]), "sparse_weight": float(sparse[j]),
                    "entity_team": TEAM_NAMES[teams[j]], "entity_distance": float(dists[j]),
                })

    while taken < steps:
        collect_episode(env, learner, 0.0, rng, on_step=record)
        episode += 1
    out.mkdir(parents=True, exist_ok=True)
    path = out / "attention.csv"
    write_csv(path, ATTENTION_COLUMNS, rows)
    return path


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # SUPPRESS so a subcommand does not reset options given before it
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory (overrides out_dir)")
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS,
                        help="only log warnings and errors")

    parser = argparse.ArgumentParser(prog="sparse-marl", description=__doc__.splitlines()[0],
                                     parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("train", parents=[common], help="train every seed of a config")
    p.add_argument("config")
    p = sub.add_parser("ablate", parents=[common], help="dense_only/s2rl/sparse_only x vdn/qmix grid")
    p.add_argument("config")
    p = sub.add_parser("inspect-attention", parents=[common], help="dump attention weights from a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=100)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.out = getattr(args, "out", None)
    args.quiet = getattr(args, "quiet", False)
    logging.basicConfig(format="%(asctime)s %(message)s", stream=sys.stderr)
    log.setLevel(logging.WARNING if args.quiet else logging.INFO)
    try:
        if args.command == "inspect-attention":
            out = Path(args.out) if args.out else Path(args.checkpoint).parent
            path = cmd_inspect_attention(args.checkpoint, args.seed, args.steps, out)
            log.info("wrote %s", path)
            return EXIT_OK
        config = parse_config(args.config)
        out = Path(args.out or config.out_dir)
        if args.command == "train":
            summary = cmd_train(config, out)
            med = summary["final_test_win_rate"]
            log.info("final win rate median %.3f (%.3f-%.3f)", med["median"], med["q25"], med["q75"])
        else:
            cmd_ablate(config, out)
            log.info("wrote %s", out / "ablation.csv")
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        code = EXIT_CONFIG if args.command != "inspect-attention" else EXIT_RUNTIME
        print(f"not found: {exc.filename or exc}", file=sys.stderr)
        return code
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
