"""Drivers for the longer comparison runs used by the acceptance suite.

Each returns plain numbers so a caller can print, assert, or dump them.
"""

from __future__ import annotations

import itertools
import time

import numpy as np

from .algo import collect_episode, train
from .baselines import make_variant, run_baseline
from .rng import substream
from .scenario import parse_scenario
from .sim import TrafficEnv

# per-seed "final" performance is the mean over this many closing episodes,
# since one stochastic episode is too noisy to rank methods on
FINAL_WINDOW = 10


def iqr(x) -> float:
    q75, q25 = np.percentile(np.asarray(x, dtype=float), [75, 25])
    return float(q75 - q25)


def train_variant(scenario, name: str, seed: int, episodes: int, **overrides):
    cfg = scenario.make_config(episodes=episodes, **overrides)
    variant = make_variant(name, cfg)
    env = TrafficEnv(scenario, seed)
    ctl = variant.controller(env.n_agents, env.G, seed)
    t = time.perf_counter()
    result = train(env, variant.config, ctl, seed=seed)
    return result, time.perf_counter() - t, env


def final_mtt(records, window: int = FINAL_WINDOW) -> float:
    return float(np.mean([r.m_tt for r in records[-window:]]))


def fig1_analogue(seeds=range(5), episodes: int = 200, scenario="corridor_1x3", log=None) -> dict:
    """Sharing vs non-sharing vs the hyper-action method on a heterogeneous
    corridor. Returns per-variant lists of wallclock and final m_tt."""
    sc = parse_scenario(scenario)
    out = {}
    for name in ("hamh", "ppo-share", "ppo-nonshare"):
        wall, final = [], []
        for seed in seeds:
            res, dt, _ = train_variant(sc, name, seed, episodes)
            wall.append(dt)
            final.append(final_mtt(res.records))
            if log:
                log(f"{name} seed {seed}: {dt:.0f} s, final m_tt {final[-1]:.1f}")
        out[name] = {"wallclock": wall, "final_mtt": final}
    return out


def mean_hyper_action(env, controller, seed: int = 0) -> np.ndarray:
    """Time-averaged w per intersection over one greedy evaluation episode."""
    buf = collect_episode(env, controller, substream(seed, "probe"), greedy=True, stream="eval")
    return buf.w[:-1].mean(axis=0)


def max_pairwise_l1(w: np.ndarray) -> float:
    return max(float(np.abs(w[i] - w[j]).sum()) for i, j in itertools.combinations(range(len(w)), 2))


def hyper_differentiation(seeds=range(3), episodes: int = 50, k: int = 2, scenario="corridor_1x3", log=None) -> dict:
    """Spread of the learned hyper-actions across intersections, and how far
    the no-entropy, no-TD ablation moves away from its initial average."""
    sc = parse_scenario(scenario)
    out = {"spread": [], "ablation_drift": []}
    ablation = dict(entropy_coef=0.0, hyper_grad_from_td=False)
    for seed in seeds:
        for label, over in (("full", {}), ("ablation", ablation)):
            cfg = sc.make_config(episodes=episodes, k=k, **over)
            env = TrafficEnv(sc, seed)
            ctl = make_variant("hamh", cfg).controller(env.n_agents, env.G, seed)
            w0 = mean_hyper_action(env, ctl)
            train(env, cfg, ctl, seed=seed)
            w1 = mean_hyper_action(env, ctl)
            if label == "full":
                out["spread"].append(max_pairwise_l1(w1))
            else:
                out["ablation_drift"].append(float(np.abs(w1 - w0).sum(axis=-1).max()))
            if log:
                log(f"{label} seed {seed}: spread {max_pairwise_l1(w1):.4f}, drift {np.abs(w1 - w0).sum(-1).max():.4f}")
    return out


def k_sweep(ks=(1, 8), seeds=range(3), episodes: int = 30, scenario="grid_2x2", log=None) -> dict:
    sc = parse_scenario(scenario)
    out = {}
    for k in ks:
        out[k] = []
        for seed in seeds:
            res, _, _ = train_variant(sc, "hamh", seed, episodes, k=k)
            out[k].append(final_mtt(res.records))
            if log:
                log(f"k={k} seed {seed}: final m_tt {out[k][-1]:.1f}")
    return out


def baseline_ordering(seeds=range(5), scenario="grid_2x2") -> dict:
    sc = parse_scenario(scenario)
    return {kind: [run_baseline(TrafficEnv(sc, s), kind) for s in seeds] for kind in ("fixedtime", "maxpressure")}
