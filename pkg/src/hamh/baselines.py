"""Non-learning controllers and the PPO comparison variants."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algo import Controller, Learner, make_controller, normalize, synthetic_buffer
from .config import Config
from .rng import substream
from .scenario import DEFAULT_FIXED_PLAN
from .sim.engine import SimState, TrafficEnv, apply_actions, pressure, step_second
from .sim.network import N_PHASES

K_SWEEP = (1, 2, 8, 16, 32, 64)
VARIANTS = ("hamh", "ppo-share", "ppo-nonshare", "no-entropy")
CONTROLLERS = ("fixedtime", "maxpressure")

# labels written into run metadata, since neither choice comes from the method
FIXED_TIME_NOTE = "4 dual phases (E/W-T, N/S-T, E/W-L, N/S-L), 30 s green each"
MAX_PRESSURE_NOTE = "argmax phase pressure at each 10 s decision boundary, ties to lowest index"


def fixed_time_action(clock: int, plan=DEFAULT_FIXED_PLAN) -> int:
    """Phase scheduled at ``clock`` for a cyclic plan of (phase, green seconds)."""
    plan = list(plan)
    if not plan:
        raise ValueError("fixed-time plan is empty")
    cycle = 0
    for phase, dur in plan:
        if dur <= 0:
            raise ValueError(f"plan durations must be positive, got {dur}")
        if not 0 <= phase < N_PHASES:
            raise ValueError(f"phase {phase} out of range")
        cycle += dur
    t = int(clock) % cycle
    for phase, dur in plan:
        if t < dur:
            return int(phase)
        t -= dur
    raise AssertionError("unreachable")


def max_pressure_action(state: SimState, i: int) -> int:
    scores = [pressure(state, i, p) for p in range(N_PHASES)]
    # np.argmax returns the first maximum, which is the lowest phase index
    return int(np.argmax(scores))


def controller_actions(kind: str, state: SimState, plan=DEFAULT_FIXED_PLAN) -> np.ndarray:
    n = state.arrays.phase.shape[0]
    if kind == "fixedtime":
        return np.full(n, fixed_time_action(state.clock, plan), dtype=np.int64)
    if kind == "maxpressure":
        return np.array([max_pressure_action(state, i) for i in range(n)], dtype=np.int64)
    raise ValueError(f"unknown controller {kind!r}; expected one of {CONTROLLERS}")


def run_baseline(env: TrafficEnv, kind: str, episode: int = 0, stream: str = "eval") -> float:
    """Play one episode with a rule-based controller at the decision interval
    and return its m_tt."""
    if kind not in CONTROLLERS:
        raise ValueError(f"unknown controller {kind!r}; expected one of {CONTROLLERS}")
    plan = [tuple(p) for p in env.scenario.fixed_time_plan]
    env.reset(episode, stream)
    for _ in range(env.steps_per_episode):
        apply_actions(env.state, controller_actions(kind, env.state, plan))
        step_second(env.state, env.scenario.decision_interval)
    return env.travel_time()


@dataclass
class Variant:
    name: str
    kind: str  # "shared" or "independent"
    config: Config

    def controller(self, n_agents: int, G, seed: int = 0) -> Controller:
        return make_controller(self.kind, n_agents, G, self.config, seed)


def make_variant(name: str, config: Config | None = None, k: int | None = None) -> Variant:
    """Training setup for a named comparison variant.

    ``k`` overrides the hyper-action dimension of the full method (k sweep).
    """
    config = config or Config()
    if name == "hamh":
        cfg = config if k is None else config.replace(k=k)
        return Variant(name if k is None else f"hamh-k{k}", "shared", cfg)
    if name == "ppo-share":
        return Variant(name, "shared", config.replace(k=1, entropy_coef=0.0, use_hyper=False))
    if name == "ppo-nonshare":
        return Variant(name, "independent", config.replace(k=1, entropy_coef=0.0, use_hyper=False))
    if name == "no-entropy":
        return Variant(name, "shared", config.replace(entropy_coef=0.0))
    raise ValueError(f"unknown variant {name!r}; expected one of {VARIANTS}")


def collapse_equivalence(
    seed: int = 0, n_agents: int = 3, T: int = 20, epochs: int = 15, hidden: int = 16, config: Config | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Per-epoch (actor objective, critic loss) of the full method at k = 1
    and of PPO-share, trained side by side on one synthetic batch.

    Both start from the same seed; the hyper head draws from its own
    substream so every other parameter is initialized identically.
    """
    base = (config or Config()).replace(hidden=hidden)
    buf = synthetic_buffer(n_agents, T, 1, seed)
    G = np.ones((n_agents, n_agents)) - np.eye(n_agents)
    adv = normalize(substream(seed, "collapse", "adv").normal(size=(T, n_agents)))
    out = []
    for variant in (make_variant("hamh", base, k=1), make_variant("ppo-share", base)):
        learner = Learner(np.arange(n_agents), n_agents, G, variant.config, seed)
        rows = []
        for _ in range(epochs):
            terms = learner.update(buf, adv)
            rows.append((float(terms.objective.data), float(terms.critic.data)))
        out.append(np.array(rows))
    return out[0], out[1]
