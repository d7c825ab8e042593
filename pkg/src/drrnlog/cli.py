"""Command-line entry point: train, eval, play, report and verify.

Exit codes: 0 success, 1 configuration error, 2 runtime failure,
3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .agent import (
    FLAG_NAMES,
    ConfigError,
    TrainConfig,
    Trainer,
    TrainingDiverged,
    Variant,
    evaluate,
)
from .engine import GameDef, GameError, TextGameEnv, bundled_game, load_game_file
from .locgraph import location_key

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_VERIFY = 0, 1, 2, 3
OUTPUT_ROOT_ENV = "DRRNLOG_OUTPUT_ROOT"

TRAIN_OPTIONS = {
    # flag -> (TrainConfig field, type)
    "episodes": ("episodes", int),
    "lr": ("lr", float),
    "gamma": ("gamma", float),
    "tau": ("tau", float),
    "batch_size": ("batch_size", int),
    "buffer_capacity": ("buffer_capacity", int),
    "max_steps": ("max_steps", int),
    "n_envs": ("n_envs", int),
    "invdy_weight": ("invdy_weight", float),
    "depth": ("depth", int),
    "emb_dim": ("emb_dim", int),
    "hidden_dim": ("hidden_dim", int),
    "mlp_hidden": ("mlp_hidden", int),
    "hash_dim": ("hash_dim", int),
}


def resolve_game(ref: str) -> GameDef:
    """A path to a .game file, or the name of a bundled game."""
    p = Path(ref)
    if p.exists():
        return load_game_file(p)
    try:
        return bundled_game(ref)
    except FileNotFoundError:
        raise ConfigError(f"no game file or bundled game named {ref!r}") from None


@dataclass
class RunSpec:
    game: str
    variant: str = "LOG"
    flags: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    seeds: list = field(default_factory=lambda: [0])
    out: str | None = None
    dump_trajectory: bool = False

    def variant_obj(self) -> Variant:
        return Variant.make(self.variant, **self.flags)

    def train_config(self) -> TrainConfig:
        return TrainConfig.from_dict(self.train)

    def validate(self) -> None:
        self.variant_obj()
        self.train_config()
        if not self.seeds:
            raise ConfigError("at least one seed is required")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "RunSpec":
        known = {"game", "variant", "flags", "train", "seeds", "out", "dump_trajectory"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        if "game" not in d:
            raise ConfigError("config needs a game")
        return cls(**d)


def _parse_seeds(s: str) -> list[int]:
    try:
        return [int(x) for x in s.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"bad seed list {s!r}") from None


def _load_config(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from None


def runspec_from_args(args) -> RunSpec:
    """Defaults, then the config file, then command-line flags."""
    base = _load_config(args.config) if args.config else {}
    if args.game:
        base["game"] = args.game
    if args.variant:
        base["variant"] = args.variant
    flags = dict(base.get("flags", {}))
    for name in FLAG_NAMES:
        val = getattr(args, name)
        if val is not None:
            flags[name] = val
    base["flags"] = flags
    train = dict(base.get("train", {}))
    for opt, (fname, _) in TRAIN_OPTIONS.items():
        val = getattr(args, opt)
        if val is not None:
            train[fname] = val
    base["train"] = train
    if args.seeds:
        base["seeds"] = _parse_seeds(args.seeds)
    if args.out:
        base["out"] = args.out
    if args.dump_trajectory:
        base["dump_trajectory"] = True
    spec = RunSpec.from_json(base)
    spec.validate()
    return spec


def _default_out(spec: RunSpec, game: GameDef) -> Path:
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
    return root / f"{game.name}_{spec.variant_obj().label()}"


def cmd_train(spec: RunSpec, echo=print) -> Path:
    """Train one run per seed; returns the run directory."""
    from .neural.model import save_checkpoint

    variant = spec.variant_obj()
    cfg = spec.train_config()
    game = resolve_game(spec.game)
    out = Path(spec.out) if spec.out else _default_out(spec, game)
    out.mkdir(parents=True, exist_ok=True)
    record = spec.to_json() | {
        "game_name": game.name,
        "max_score": game.max_score,
        "variant_label": variant.label(),
        "variant_flags": variant.to_json(),
        "train": asdict(cfg),
    }
    (out / "runspec.json").write_text(json.dumps(record, indent=2, sort_keys=True), encoding="utf-8")
    for seed in spec.seeds:
        seed_dir = out / f"seed_{seed}"
        seed_dir.mkdir(exist_ok=True)
        dump = seed_dir / "trajectory.jsonl" if spec.dump_trajectory else None
        trainer = Trainer(game, variant, cfg, seed, dump_path=dump)
        log = trainer.run()
        log.write(seed_dir / "runlog.jsonl")
        save_checkpoint(seed_dir / "checkpoint.npz", trainer.model.params, trainer.vocab,
                        {"variant": variant.to_json(), "seed": seed})
        summary = {"seed": seed, "wall_clock_s": round(log.wall_clock, 3), "episodes": len(log.records),
                   "final_avg": log.avg_score(cfg.score_window), "max_score": log.max_score()}
        (seed_dir / "summary.json").write_text(json.dumps(summary, indent=2), encoding="utf-8")
        echo(f"seed {seed}\tfinal_avg {summary['final_avg']:.2f}\tmax {summary['max_score']}"
             f"\t{summary['wall_clock_s']:.1f}s")
    return out


def cmd_eval(run_dir, episodes: int = 10, greedy: bool = False, tau: float | None = None, seed: int = 0,
             echo=print) -> dict:
    from .hashrep import HashConfig
    from .neural.model import QNetwork, load_checkpoint

    run_dir = Path(run_dir)
    spec = json.loads((run_dir / "runspec.json").read_text(encoding="utf-8"))
    game = resolve_game(spec["game"])
    variant = Variant.make(spec["variant"], **spec["flags"])
    cfg = TrainConfig.from_dict(spec["train"])
    results = {}
    for s in spec["seeds"]:
        params, vocab, _ = load_checkpoint(run_dir / f"seed_{s}" / "checkpoint.npz")
        model = QNetwork(params, vocab, HashConfig(params.dims.hash_dim))
        scores = evaluate(model, game, variant, episodes, tau=tau or cfg.tau, greedy=greedy, seed=seed,
                          max_steps=cfg.max_steps, depth=cfg.depth)
        results[s] = scores
        echo(f"seed {s}\tmean {sum(scores) / len(scores):.2f}\tscores {scores}")
    return results


def cmd_play(game: GameDef, show_state: bool = False, stdin=None, echo=print) -> int:
    """Interactive loop on stdin; returns the final score."""
    stdin = stdin or sys.stdin
    env = TextGameEnv(game)
    obs = env.reset()
    echo(obs.response)

    def status():
        if show_state:
            key = location_key(env) if not env.done else "-"
            echo(f"[room {env.gt_room_id()}] [key {key}] [state {env.gt_state_hash():#018x}]")
            if not env.done:
                echo(f"[valid {', '.join(env.valid_actions())}]")

    status()
    for line in stdin:
        action = line.strip()
        if not action:
            continue
        if action.lower() in ("quit", "q", "exit"):
            break
        res = env.step(action)
        echo(res.observation.response)
        echo(f"[inventory] {res.observation.inventory_text}")
        echo(f"[score {env.state.score}/{game.max_score}] reward {res.reward}")
        status()
        if res.done:
            echo("The episode is over.")
            break
    echo(f"Final score: {env.state.score}")
    return env.state.score


def cmd_report(sources, out=None, window: int = 100, figures: bool = True, echo=print):
    from .report import build_table, write_report

    table = build_table(sources, window)
    echo(table.to_tsv().rstrip("\n"))
    if out:
        for p in write_report(table, out, figures):
            echo(f"# wrote {p}")
    return table


def cmd_verify(golden=None, grad_instances: int = 20, echo=print) -> bool:
    from .checks import run_all
    from .hashrep import GOLDEN_PATH

    results = run_all(golden or GOLDEN_PATH, grad_instances)
    for r in results:
        echo(f"{'PASS' if r.ok else 'FAIL'}\t{r.name}\t{r.detail}")
    return all(r.ok for r in results)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="drrnlog", description="Text-game agents with location-aware state hashing.")
    sub = ap.add_subparsers(dest="command", required=True)

    tr = sub.add_parser("train", help="train one run per seed")
    tr.add_argument("--game", help="path to a .game file or a bundled game name")
    tr.add_argument("--variant", help="DRRN, OBS_HASH, DRRN_INVDY, LOG, GT_STATE or GT_ROOM")
    for name in FLAG_NAMES:
        opt = name.replace("use_", "").replace("_", "-")
        tr.add_argument(f"--{opt}", dest=name, action="store_true", default=None)
        tr.add_argument(f"--no-{opt}", dest=name, action="store_false")
    for opt, (_, typ) in TRAIN_OPTIONS.items():
        tr.add_argument("--" + opt.replace("_", "-"), dest=opt, type=typ)
    tr.add_argument("--seeds", help="comma separated, e.g. 0,1,2")
    tr.add_argument("--out", help=f"run directory (default ${OUTPUT_ROOT_ENV}/<game>_<variant>)")
    tr.add_argument("--config", help="JSON run config; flags override it")
    tr.add_argument("--dump-trajectory", action="store_true", help="write per-step location records for env 0")

    ev = sub.add_parser("eval", help="roll out saved checkpoints")
    ev.add_argument("run_dir")
    ev.add_argument("--episodes", type=int, default=10)
    ev.add_argument("--greedy", action="store_true")
    ev.add_argument("--tau", type=float)
    ev.add_argument("--seed", type=int, default=0)

    pl = sub.add_parser("play", help="play a game on the terminal")
    pl.add_argument("--game", required=True)
    pl.add_argument("--show-state", action="store_true")

    rp = sub.add_parser("report", help="score table from run directories or score files")
    rp.add_argument("sources", nargs="+")
    rp.add_argument("--out", help="write table.tsv, table.json and figures here")
    rp.add_argument("--window", type=int, default=100)
    rp.add_argument("--no-figures", action="store_true")

    ve = sub.add_parser("verify", help="golden hashes, gradient checks, engine oracles")
    ve.add_argument("--golden", help="golden hash file to check")
    ve.add_argument("--grad-instances", type=int, default=20)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train":
            spec = runspec_from_args(args)
            out = cmd_train(spec)
            print(f"# run directory {out}")
        elif args.command == "eval":
            cmd_eval(args.run_dir, args.episodes, args.greedy, args.tau, args.seed)
        elif args.command == "play":
            cmd_play(resolve_game(args.game), args.show_state)
        elif args.command == "report":
            cmd_report(args.sources, args.out, args.window, not args.no_figures)
        elif args.command == "verify":
            if not cmd_verify(args.golden, args.grad_instances):
                return EXIT_VERIFY
        return EXIT_OK
    except (ConfigError, GameError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrainingDiverged, FileNotFoundError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
