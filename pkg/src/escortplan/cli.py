"""Command line entry point: ``escortplan run | batch | replay``.

Settings are resolved as defaults < ``--config`` file < flags.  Every run
writes ``manifest.json`` (resolved configuration as INI text plus seeds) next
to its outputs so it can be repeated exactly.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, parse_config, to_ini
from .rewards import VARIANTS
from .simulator import CSV_COLUMNS, EpisodeLog, batch_evaluate, episode_seed, logged_paths, replay, run_episode

log = logging.getLogger("escortplan")

OUT_ENV = "ESCORTPLAN_OUT"

# flag -> (section.key, type)
SETTING_FLAGS = {
    "--dt": ("scenario.dt", float),
    "--horizon": ("planner.horizon", int),
    "--n-objects": ("scenario.n_objects", int),
    "--prior-variance": ("scenario.prior_variance", float),
    "--v-pa": ("scenario.v_pa", float),
    "--v-ea": ("scenario.v_ea", float),
    "--u-max": ("scenario.u_max", float),
    "--n-samples": ("cem.n_samples", int),
    "--n-elite": ("cem.n_elite", int),
    "--n-inner-iters": ("cem.n_inner_iters", int),
    "--var-floor": ("cem.var_floor", float),
    "--var-terminate": ("cem.var_terminate", float),
    "--sigma0-sq": ("cem.sigma0_sq", float),
    "--rounds": ("planner.n_rounds", int),
    "--execution": ("planner.execution", str),
    "--n-traj": ("planner.n_traj", int),
    "--n-mc": ("planner.n_mc", int),
    "--log-floor": ("planner.log_floor", float),
    "--sensor-range": ("sensor.range", float),
    "--noise-var": ("sensor.noise_var", float),
    "--reach-radius": ("task.reach_radius", float),
    "--avoid-radius": ("task.avoid_radius", float),
    "--peak-collision": ("task.peak_collision", float),
    "--collision-radius": ("sim.collision_radius", float),
    "--arrival-radius": ("sim.arrival_radius", float),
    "--max-ticks": ("sim.max_ticks", int),
    "--drop": ("sim.drop_probability", float),
    "--scheduler": ("sim.scheduler", str),
    "--latency": ("sim.latency", float),
}


def _int_list(text: str) -> list[int]:
    return [int(p) for p in text.split(",") if p.strip()]


def _str_list(text: str) -> list[str]:
    return [p.strip() for p in text.split(",") if p.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI configuration file")
    common.add_argument("--seed", type=int, help="base random seed")
    common.add_argument("--out", type=Path, help=f"output directory (default ${OUT_ENV} or ./runs)")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override any configuration value; repeatable")
    common.add_argument("-v", "--verbose", action="count", default=0)
    for flag, (dotted, typ) in SETTING_FLAGS.items():
        common.add_argument(flag, type=typ, default=None, help=f"sets {dotted}")

    parser = argparse.ArgumentParser(prog="escortplan", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="simulate one episode")
    run.add_argument("--variant", choices=VARIANTS)
    run.add_argument("--escorts", type=int, help="number of escorts")

    batch = sub.add_parser("batch", parents=[common], help="failure rates over paired environments")
    batch.add_argument("--variants", type=_str_list, default=list(VARIANTS))
    batch.add_argument("--variant", dest="variants", type=_str_list, help="alias of --variants")
    batch.add_argument("--escorts", type=_int_list, default=[1, 2, 3])
    batch.add_argument("--envs", type=int, default=10)
    batch.add_argument("--workers", type=int, default=1)
    batch.add_argument("--no-logs", action="store_true", help="skip per-episode logs")

    rep = sub.add_parser("replay", help="re-execute a logged episode and compare trajectories")
    rep.add_argument("log", type=Path)
    rep.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def _overrides(args) -> dict:
    out = {}
    for flag, (dotted, _) in SETTING_FLAGS.items():
        value = getattr(args, flag.lstrip("-").replace("-", "_"), None)
        if value is not None:
            out[dotted] = value
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        out[key.strip()] = value.strip()
    if args.seed is not None:
        out["scenario.seed"] = args.seed
    return out


def _resolve(args, extra=None):
    text = args.config.read_text() if args.config else ""
    overrides = _overrides(args)
    overrides.update(extra or {})
    return parse_config(text, overrides)


def _out_dir(args) -> Path:
    out = args.out or Path(os.environ.get(OUT_ENV, "runs"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, cfg, **extra):
    manifest = {"version": __version__, "config_ini": to_ini(cfg), "config": cfg.to_dict(), **extra}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def cmd_run(args) -> int:
    extra = {}
    if args.variant is not None:
        extra["scenario.variant"] = args.variant
        if args.escorts is None:
            extra["scenario.n_escorts"] = 0 if args.variant == "blind" else 2
    if args.escorts is not None:
        extra["scenario.n_escorts"] = args.escorts
    cfg = _resolve(args, extra)
    out = _out_dir(args)
    _write_manifest(out, cfg, command="run", seed=cfg.scenario.seed)
    episode = run_episode(cfg)
    (out / "episode.jsonl").write_text(episode.to_jsonl())
    print(f"{cfg.scenario.variant} escorts={cfg.scenario.n_escorts} seed={cfg.scenario.seed}: "
          f"{episode.verdict} after {episode.n_ticks} ticks -> {out / 'episode.jsonl'}")
    return 0


def cmd_batch(args) -> int:
    bad = [v for v in args.variants if v not in VARIANTS]
    if bad:
        raise ConfigError(f"unknown variants {bad}; expected a subset of {VARIANTS}")
    if args.envs < 1 or args.workers < 1 or not args.escorts or min(args.escorts) < 1:
        raise ConfigError("--envs and --workers must be >= 1 and --escorts a list of positive counts")
    cfg = _resolve(args)
    base_seed = cfg.scenario.seed
    out = _out_dir(args)
    _write_manifest(out, cfg, command="batch", seed=base_seed, variants=args.variants,
                    escorts=args.escorts, envs=args.envs,
                    env_seeds=[list(episode_seed(base_seed, k).entropy) for k in range(args.envs)])
    logs = out / "logs"
    if not args.no_logs:
        logs.mkdir(exist_ok=True)
    summary = (out / "episodes.jsonl").open("a")

    def record(variant, n, k, verdict, ticks, text):
        summary.write(json.dumps({"variant": variant, "n_escorts": n, "env": k,
                                  "verdict": verdict, "ticks": ticks}, sort_keys=True) + "\n")
        summary.flush()
        if text is not None:
            (logs / f"{variant}_e{n}_env{k:03d}.jsonl").write_text(text)
        log.info("%s escorts=%d env=%d: %s after %d ticks", variant, n, k, verdict, ticks)

    try:
        rows = batch_evaluate(cfg, args.variants, args.envs, args.escorts, seed=base_seed,
                              workers=args.workers, on_episode=record if not args.no_logs else None)
    finally:
        summary.close()
    with (out / "results.csv").open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    for row in rows:
        print(f"{row['variant']:>7} escorts={row['n_escorts']} failure={row['failure_rate']:.3f} "
              f"timeout={row['timeout_rate']:.3f} ticks={row['mean_ticks_to_goal']:.1f}")
    return 0


def cmd_replay(args) -> int:
    episode = EpisodeLog.from_jsonl(args.log.read_text())
    replayed = replay(episode)
    recorded = logged_paths(episode)
    worst = max(float(np.max(np.abs(replayed[r] - recorded[r]))) for r in recorded)
    exact = all(np.array_equal(replayed[r], recorded[r]) for r in recorded)
    print(f"{len(episode.ticks)} ticks, {len(recorded)} robots, verdict {episode.verdict}; "
          f"max deviation {worst:.3g} ({'exact' if exact else 'MISMATCH'})")
    return 0 if exact else 2


COMMANDS = {"run": cmd_run, "batch": cmd_batch, "replay": cmd_replay}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
