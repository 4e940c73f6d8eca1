"""Queue-and-pipeline traffic simulator at one-second resolution.

Each lane holds a free-flow *pipeline* (vehicles driving down the road, each
with the second it reaches the stop line) and a FIFO *waiting queue*. A tick
runs, in order: arrivals, pipeline -> queue transfer, discharge of at most one
vehicle per green-permitted lane, signal timer updates, clock advance.
The tick itself lives in :mod:`hamh.kernels`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..rng import substream
from .network import (
    LANES_PER_INTERSECTION,
    N_PHASES,
    PHASES,
    RoadNetwork,
    Vehicles,
    build_network,
    generate_vehicles,
    permission_table,
)

GREEN, YELLOW, ALL_RED = 0, 1, 2


@dataclass
class SimArrays:
    """Flat integer state consumed by the tick kernel.

    FIFOs are singly linked lists threaded through ``nxt`` (a vehicle is in
    at most one pipeline or queue at a time).
    """

    counters: np.ndarray  # [clock, spawned, exited, next vehicle to spawn]
    spawn_time: np.ndarray
    entry_group: np.ndarray
    route_off: np.ndarray
    route_moves: np.ndarray
    route_pos: np.ndarray
    ready: np.ndarray
    nxt: np.ndarray
    t_out: np.ndarray
    q_head: np.ndarray
    q_tail: np.ndarray
    q_len: np.ndarray
    p_head: np.ndarray
    p_tail: np.ndarray
    p_len: np.ndarray
    travel: np.ndarray
    down: np.ndarray
    phase: np.ndarray
    next_phase: np.ndarray
    mode: np.ndarray
    remaining: np.ndarray
    perm: np.ndarray
    all_red: int


class SimState:
    def __init__(self, net: RoadNetwork, vehicles: Vehicles, yellow: int = 3, all_red: int = 2):
        n, nl, nv = net.n, net.n_lanes, len(vehicles)
        i64 = np.int64
        self.net = net
        self.vehicles = vehicles
        self.yellow = yellow
        self.arrays = SimArrays(
            counters=np.zeros(4, dtype=i64),
            spawn_time=vehicles.spawn_time,
            entry_group=vehicles.entry_group,
            route_off=vehicles.route_off,
            route_moves=vehicles.route_moves,
            route_pos=np.zeros(nv, dtype=i64),
            ready=np.zeros(nv, dtype=i64),
            nxt=np.full(nv, -1, dtype=i64),
            t_out=np.full(nv, -1, dtype=i64),
            q_head=np.full(nl, -1, dtype=i64),
            q_tail=np.full(nl, -1, dtype=i64),
            q_len=np.zeros(nl, dtype=i64),
            p_head=np.full(nl, -1, dtype=i64),
            p_tail=np.full(nl, -1, dtype=i64),
            p_len=np.zeros(nl, dtype=i64),
            travel=net.travel,
            down=net.down,
            phase=np.zeros(n, dtype=i64),
            next_phase=np.zeros(n, dtype=i64),
            mode=np.zeros(n, dtype=i64),
            remaining=np.zeros(n, dtype=i64),
            perm=permission_table(),
            all_red=int(all_red),
        )

    # ------------------------------------------------------------ counters

    @property
    def clock(self) -> int:
        return int(self.arrays.counters[0])

    @property
    def spawned(self) -> int:
        return int(self.arrays.counters[1])

    @property
    def exited(self) -> int:
        return int(self.arrays.counters[2])

    @property
    def in_queues(self) -> int:
        return int(self.arrays.q_len.sum())

    @property
    def in_pipelines(self) -> int:
        return int(self.arrays.p_len.sum())

    def lane_queue(self, lane: int) -> list[int]:
        """Vehicle ids waiting in ``lane``, head first."""
        a = self.arrays
        out, v = [], a.q_head[lane]
        for _ in range(a.q_len[lane]):
            out.append(int(v))
            v = a.nxt[v]
        return out

    def lane_pipeline(self, lane: int) -> list[int]:
        a = self.arrays
        out, v = [], a.p_head[lane]
        for _ in range(a.p_len[lane]):
            out.append(int(v))
            v = a.nxt[v]
        return out


def step_second(state: SimState, n_seconds: int = 1) -> SimState:
    """Advance ``state`` in place by whole seconds."""
    kernels.sim_advance(state.arrays, int(n_seconds))
    return state


def apply_actions(state: SimState, actions) -> SimState:
    """Set each intersection's requested phase at a decision boundary.

    Keeping the current phase extends green; a change starts yellow, then
    all-red, then the new phase's green.
    """
    a = state.arrays
    actions = np.asarray(actions, dtype=np.int64).reshape(-1)
    if actions.shape[0] != a.phase.shape[0]:
        raise ValueError(f"expected {a.phase.shape[0]} actions, got {actions.shape[0]}")
    if np.any(actions < 0) or np.any(actions >= N_PHASES):
        raise ValueError(f"phase index out of range [0, {N_PHASES}): {actions}")
    for i, p in enumerate(actions):
        if a.mode[i] == GREEN:
            if p != a.phase[i]:
                a.mode[i] = YELLOW
                a.remaining[i] = state.yellow
                a.next_phase[i] = p
        else:
            a.next_phase[i] = p
    return state


def observe(state: SimState, i: int) -> np.ndarray:
    """Waiting-queue length of each of the 12 incoming lanes of ``i``."""
    lo = i * LANES_PER_INTERSECTION
    return state.arrays.q_len[lo : lo + LANES_PER_INTERSECTION].astype(np.float64)


def observe_all(state: SimState) -> np.ndarray:
    return state.arrays.q_len.reshape(-1, LANES_PER_INTERSECTION).astype(np.float64)


def reward(state: SimState, i: int) -> float:
    return -float(observe(state, i).sum())


def pressure(state: SimState, i: int, phase: int) -> float:
    """Sum over the phase's movements of upstream queue minus the mean queue
    of the receiving approach (zero when the movement leaves the network).

    Right turns run in every phase and shift all phases equally, so they are
    left out.
    """
    a = state.arrays
    q = a.q_len
    total = 0.0
    for side, m in PHASES[phase]:
        g = 4 * i + side
        g2 = a.down[3 * g + m]
        downstream = q[3 * g2 : 3 * g2 + 3].mean() if g2 >= 0 else 0.0
        for slot in ((0,) if m == 0 else (1, 2)):
            total += q[3 * g + slot] - downstream
    return float(total)


def travel_time_metric(t_in, t_out, t_end: int) -> float:
    """Average travel time; vehicles still inside at ``t_end`` count until then."""
    t_in = np.asarray(t_in, dtype=np.float64)
    t_out = np.asarray(t_out, dtype=np.float64)
    if t_in.size == 0:
        raise ValueError("no vehicle entered the network; average travel time is undefined")
    out = np.where(t_out < 0, float(t_end), t_out)
    return float(np.mean(out - t_in))


class TrafficEnv:
    """Multi-intersection environment with 10-second decision steps."""

    def __init__(self, scenario, seed: int = 0):
        self.scenario = scenario
        self.seed = int(seed)
        self.net = build_network(scenario)
        self.state: SimState | None = None
        self.t = 0

    @property
    def n_agents(self) -> int:
        return self.net.n

    @property
    def G(self) -> np.ndarray:
        return self.net.G

    @property
    def steps_per_episode(self) -> int:
        return self.scenario.episode_length // self.scenario.decision_interval

    def reset(self, episode: int = 0, stream: str = "train") -> np.ndarray:
        rng = substream(self.seed, "arrivals", stream, episode)
        vehicles = generate_vehicles(self.net, self.scenario, rng)
        self.state = SimState(self.net, vehicles, self.scenario.yellow, self.scenario.all_red)
        self.t = 0
        return observe_all(self.state)

    def step(self, actions) -> tuple[np.ndarray, np.ndarray, bool]:
        apply_actions(self.state, actions)
        step_second(self.state, self.scenario.decision_interval)
        self.t += 1
        obs = observe_all(self.state)
        return obs, -obs.sum(axis=1), self.t >= self.steps_per_episode

    def travel_time(self) -> float:
        s = self.state
        k = int(s.arrays.counters[3])
        return travel_time_metric(s.vehicles.spawn_time[:k], s.arrays.t_out[:k], s.clock)
