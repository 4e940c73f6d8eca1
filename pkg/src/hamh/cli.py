"""Command-line entry point: ``hamh <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import kernels
from .algo import collect_episode, evaluate, train
from .baselines import (
    CONTROLLERS,
    FIXED_TIME_NOTE,
    K_SWEEP,
    MAX_PRESSURE_NOTE,
    VARIANTS,
    controller_actions,
    make_variant,
    run_baseline,
)
from .checks import run_suite
from .nn import CheckpointError, load_checkpoint, save_checkpoint
from .rng import substream
from .runio import RunManifest, emit_metrics, output_root
from .scenario import ScenarioError, parse_scenario, scenario_from_dict
from .sim.engine import TrafficEnv, apply_actions, observe_all, step_second


class UsageError(Exception):
    pass


def _parse_overrides(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def _variant_for(args, scenario):
    overrides = _parse_overrides(getattr(args, "set", None))
    if getattr(args, "episodes", None) is not None:
        overrides["episodes"] = args.episodes
    try:
        base = scenario.make_config(**overrides)
    except (KeyError, TypeError, ValueError) as e:
        raise UsageError(f"bad config override: {e}") from e
    k = getattr(args, "k", None)
    if k is not None and args.variant not in ("hamh", "no-entropy"):
        raise UsageError(f"--k cannot be combined with --variant {args.variant} (it fixes k = 1)")
    if k is not None:
        base = base.replace(k=k)
    return make_variant(args.variant, base)


def _meta(variant, scenario, seed, episode) -> dict:
    return {
        "variant": variant.name,
        "kind": variant.kind,
        "config": variant.config.to_dict(),
        "scenario": scenario.name,
        "scenario_hash": scenario.digest(),
        "scenario_doc": scenario.to_dict(),
        "seed": seed,
        "episode": episode,
    }


# ---------------------------------------------------------------- train


def cmd_train(args) -> int:
    scenario = parse_scenario(args.scenario)
    variant = _variant_for(args, scenario)
    seed = args.seed if args.seed is not None else scenario.seeds[0]
    out = Path(args.out) if args.out else output_root() / f"{scenario.name}-{variant.name}-s{seed}"
    metrics_path, eval_path = out / "metrics.csv", out / "eval.csv"
    if metrics_path.exists() or eval_path.exists():
        if not args.overwrite:
            raise UsageError(f"{out} already holds a run; pass --overwrite or choose --out")
        metrics_path.unlink(missing_ok=True)
        eval_path.unlink(missing_ok=True)
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)

    env = TrafficEnv(scenario, seed)
    eval_env = TrafficEnv(scenario, seed)
    ctl = variant.controller(env.n_agents, env.G, seed)
    cfg = variant.config

    manifest = RunManifest(
        scenario=scenario.name,
        scenario_hash=scenario.digest(),
        config=cfg.to_dict(),
        seed=seed,
        variant=variant.name,
        outputs={"metrics": str(metrics_path), "eval": str(eval_path), "checkpoints": str(ckpt_dir)},
        notes={"train_actions": "sampled", "eval_actions": "greedy", "kernel_backend": kernels.BACKEND},
    )
    manifest.write(out / "manifest.json")

    def on_episode(rec, controller):
        emit_metrics([rec], metrics_path)
        n = rec.episode + 1
        if args.eval_every and n % args.eval_every == 0:
            vals = evaluate(eval_env, controller, args.eval_episodes, greedy=True, seed=seed)
            emit_metrics(
                [{"episode": rec.episode, "eval_m_tt_mean": float(np.mean(vals)), "eval_m_tt_std": float(np.std(vals))}],
                eval_path,
                fields=("episode", "eval_m_tt_mean", "eval_m_tt_std"),
            )
        if args.checkpoint_every and n % args.checkpoint_every == 0:
            save_checkpoint(ckpt_dir / f"ep{n:05d}.json", controller.parameters(), _meta(variant, scenario, seed, n))
        if not args.quiet:
            print(f"episode {rec.episode:4d}  m_tt {rec.m_tt:8.2f}  reward {rec.mean_reward:9.3f}  {rec.wallclock_s:7.1f}s", flush=True)

    train(env, cfg, ctl, seed=seed, on_episode=on_episode)
    final = out / "final.json"
    save_checkpoint(final, ctl.parameters(), _meta(variant, scenario, seed, cfg.episodes))
    print(f"wrote {metrics_path} and {final}")
    return 0


# ---------------------------------------------------------------- eval


def _controller_from_checkpoint(path, scenario=None):
    path = Path(path)
    if not path.exists():
        raise UsageError(f"checkpoint not found: {path}")
    meta = json.loads(path.read_text()).get("meta", {})
    if "variant" not in meta:
        raise CheckpointError(f"{path}: metadata lacks the variant needed to rebuild the controller")
    from .config import Config

    cfg = Config(**meta["config"])
    name = meta["variant"]
    base = "hamh" if name.startswith("hamh") else name
    variant = make_variant(base, cfg)
    if scenario is None:
        # files outside the bundle are embedded, so the checkpoint stands alone
        doc = meta.get("scenario_doc")
        scenario = scenario_from_dict(doc, str(path)) if doc else parse_scenario(meta["scenario"])
    env = TrafficEnv(scenario, int(meta.get("seed", 0)))
    ctl = variant.controller(env.n_agents, env.G, int(meta.get("seed", 0)))
    load_checkpoint(path, ctl.parameters())
    return ctl, scenario, meta


def cmd_eval(args) -> int:
    scenario = parse_scenario(args.scenario) if args.scenario else None
    ctl, scenario, meta = _controller_from_checkpoint(args.checkpoint, scenario)
    seed = args.seed if args.seed is not None else int(meta.get("seed", 0))
    env = TrafficEnv(scenario, seed)
    vals = evaluate(env, ctl, args.episodes, greedy=not args.sampled, seed=seed)
    mode = "sampled" if args.sampled else "greedy"
    for i, v in enumerate(vals):
        print(f"episode {i}  m_tt {v!r}")
    print(f"m_tt ({mode}, {len(vals)} episodes): {np.mean(vals):.3f} ± {np.std(vals):.3f}")
    return 0


# ---------------------------------------------------------------- baseline


def cmd_baseline(args) -> int:
    scenario = parse_scenario(args.scenario)
    kinds = CONTROLLERS if args.controller == "all" else (args.controller,)
    out = Path(args.out) if args.out else output_root() / f"{scenario.name}-baseline.csv"
    rows = []
    for kind in kinds:
        vals = []
        for seed in range(args.seeds):
            v = run_baseline(TrafficEnv(scenario, seed), kind)
            vals.append(v)
            rows.append({"controller": kind, "seed": seed, "m_tt": v})
            print(f"{kind:12s} seed {seed}  m_tt {v!r}")
        print(
            f"{kind:12s} summary  median {np.median(vals):.3f}  mean {np.mean(vals):.3f}  "
            f"std {np.std(vals):.3f}  (n={len(vals)})"
        )
    emit_metrics(rows, out, fields=("controller", "seed", "m_tt"))
    notes = {"fixedtime": FIXED_TIME_NOTE, "maxpressure": MAX_PRESSURE_NOTE}
    Path(str(out) + ".meta.json").write_text(
        json.dumps({"scenario": scenario.name, "scenario_hash": scenario.digest(), "controllers": {k: notes[k] for k in kinds}}, indent=2)
    )
    return 0


# ---------------------------------------------------------------- gradcheck


def cmd_gradcheck(args) -> int:
    results = run_suite(seed=args.seed)
    for r in results:
        print(f"{r.name:22s} max rel error {r.error:.3e}  {'ok' if r.ok else 'FAIL'}")
    worst = max(results, key=lambda r: r.error)
    print(f"worst: {worst.name} {worst.error:.3e}")
    return 0 if all(r.ok for r in results) else 1


# ---------------------------------------------------------------- sweep


def cmd_sweep(args) -> int:
    scenario = parse_scenario(args.scenario)
    if args.values:
        values = [int(v) for v in args.values.split(",")]
    else:
        values = list(K_SWEEP) if args.param == "k" else [32, 64, 128]
    out = Path(args.out) if args.out else output_root() / f"{scenario.name}-sweep-{args.param}.csv"
    rows = []
    for value in values:
        cfg = scenario.make_config(episodes=args.episodes, **{args.param: value})
        variant = make_variant("hamh", cfg)
        for seed in range(args.seeds):
            env = TrafficEnv(scenario, seed)
            res = train(env, cfg, variant.controller(env.n_agents, env.G, seed), seed=seed)
            ev = evaluate(env, res.controller, args.eval_episodes, greedy=True, seed=seed)
            row = {
                "param": args.param,
                "value": value,
                "seed": seed,
                "final_train_m_tt": res.records[-1].m_tt if res.records else float("nan"),
                "eval_m_tt": float(np.mean(ev)),
            }
            rows.append(row)
            print(f"{args.param}={value} seed {seed}  eval m_tt {row['eval_m_tt']:.3f}", flush=True)
    emit_metrics(rows, out, fields=("param", "value", "seed", "final_train_m_tt", "eval_m_tt"))
    return 0


# ---------------------------------------------------------------- export-obs


OBS_FIELDS = ("t", "intersection") + tuple(f"lane{j}" for j in range(12))


def write_observations(trace, path) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(OBS_FIELDS)
        for clock, obs in trace:
            for i, row in enumerate(obs):
                w.writerow([clock, i] + [int(v) for v in row])
                n += 1
    return n


def cmd_export_obs(args) -> int:
    if args.checkpoint:
        scenario = parse_scenario(args.scenario) if args.scenario else None
        ctl, scenario, _ = _controller_from_checkpoint(args.checkpoint, scenario)
        env = TrafficEnv(scenario, args.seed)
        trace = []
        collect_episode(env, ctl, substream(args.seed, "export"), greedy=True, stream="eval", trace=trace)
        label = "checkpoint"
    else:
        if not args.scenario:
            raise UsageError("export-obs needs --scenario (or --checkpoint)")
        scenario = parse_scenario(args.scenario)
        env = TrafficEnv(scenario, args.seed)
        plan = [tuple(p) for p in scenario.fixed_time_plan]
        env.reset(0, "eval")
        trace = [(env.state.clock, observe_all(env.state))]
        for _ in range(env.steps_per_episode):
            apply_actions(env.state, controller_actions(args.controller, env.state, plan))
            step_second(env.state, scenario.decision_interval)
            trace.append((env.state.clock, observe_all(env.state)))
        label = args.controller
    out = Path(args.out) if args.out else output_root() / f"{scenario.name}-obs-{label}-s{args.seed}.csv"
    n = write_observations(trace, out)
    print(f"wrote {n} rows to {out}")
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hamh", description="Hyper-action multi-head PPO for traffic signal control")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a controller and write metrics and checkpoints")
    t.add_argument("--scenario", required=True, help="bundled scenario name or YAML path")
    t.add_argument("--seed", type=int)
    t.add_argument("--episodes", type=int)
    t.add_argument("--variant", choices=VARIANTS, default="hamh")
    t.add_argument("--k", type=int, help="hyper-action dimension (hamh and no-entropy only)")
    t.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override, repeatable")
    t.add_argument("--out", help="run directory (default: $HAMH_OUTPUT_DIR or ./runs)")
    t.add_argument("--checkpoint-every", type=int, default=50)
    t.add_argument("--eval-every", type=int, default=25)
    t.add_argument("--eval-episodes", type=int, default=1)
    t.add_argument("--overwrite", action="store_true")
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="greedy evaluation of a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--scenario")
    e.add_argument("--episodes", type=int, default=5)
    e.add_argument("--seed", type=int)
    e.add_argument("--sampled", action="store_true", help="sample actions instead of argmax")
    e.set_defaults(fn=cmd_eval)

    b = sub.add_parser("baseline", help="run FixedTime / MaxPressure")
    b.add_argument("--controller", choices=CONTROLLERS + ("all",), default="all")
    b.add_argument("--scenario", required=True)
    b.add_argument("--seeds", type=int, default=5)
    b.add_argument("--out")
    b.set_defaults(fn=cmd_baseline)

    g = sub.add_parser("gradcheck", help="finite-difference check of every gradient")
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(fn=cmd_gradcheck)

    s = sub.add_parser("sweep", help="sweep k or the hidden size")
    s.add_argument("--scenario", required=True)
    s.add_argument("--param", choices=("k", "hidden"), default="k")
    s.add_argument("--values", help="comma-separated values (default: 1,2,8,16,32,64 for k)")
    s.add_argument("--seeds", type=int, default=3)
    s.add_argument("--episodes", type=int, default=50)
    s.add_argument("--eval-episodes", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_sweep)

    x = sub.add_parser("export-obs", help="per-step observation CSV")
    x.add_argument("--scenario")
    x.add_argument("--seed", type=int, default=0)
    x.add_argument("--controller", choices=CONTROLLERS, default="maxpressure")
    x.add_argument("--checkpoint")
    x.add_argument("--out")
    x.set_defaults(fn=cmd_export_obs)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name in ("episodes", "seeds", "checkpoint_every", "eval_every", "eval_episodes", "k"):
        v = getattr(args, name, None)
        if v is not None and v < (1 if name in ("seeds", "k", "eval_episodes") else 0):
            parser.error(f"--{name.replace('_', '-')} must be {'positive' if name in ('seeds', 'k', 'eval_episodes') else 'non-negative'}")
    try:
        return args.fn(args)
    except UsageError as e:
        print(f"hamh {args.command}: error: {e}", file=sys.stderr)
        return 2
    except (ScenarioError, CheckpointError, FileNotFoundError) as e:
        print(f"hamh {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
