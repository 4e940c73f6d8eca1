"""Grid road networks, phase tables and vehicle route generation.

Conventions
-----------
Sides are numbered N=0, E=1, S=2, W=3. An *approach* ``(i, side)`` is the
incoming road attached to that side of intersection ``i``; e.g. the W
approach carries eastbound traffic. Each approach is a *group* with id
``g = 4 * i + side`` and three lanes ``3 * g + slot``: slot 0 is the left-turn
lane, slots 1 and 2 are through lanes, and right turns use slot 2. The
12 incoming lanes of intersection ``i`` are therefore ordered
(N, E, S, W) x (L, T, T).

Movements are L=0, T=1, R=2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SIDES = "NESW"
N, E, S, W = range(4)
LEFT, THROUGH, RIGHT = range(3)
MOVES = "LTR"

# the eight phases as sets of (approach side, movement); right turns always run
PHASES = (
    ((E, THROUGH), (W, THROUGH)),
    ((N, THROUGH), (S, THROUGH)),
    ((E, LEFT), (W, LEFT)),
    ((N, LEFT), (S, LEFT)),
    ((E, THROUGH), (E, LEFT)),
    ((W, THROUGH), (W, LEFT)),
    ((N, THROUGH), (N, LEFT)),
    ((S, THROUGH), (S, LEFT)),
)
PHASE_NAMES = tuple("+".join(f"{SIDES[s]}-{MOVES[m]}" for s, m in p) for p in PHASES)
N_PHASES = len(PHASES)
LANES_PER_INTERSECTION = 12


def permission_table() -> np.ndarray:
    """perm[phase, side, move] = 1 if the movement has green in that phase."""
    perm = np.zeros((N_PHASES, 4, 3), dtype=np.int64)
    perm[:, :, RIGHT] = 1
    for p, moves in enumerate(PHASES):
        for side, m in moves:
            perm[p, side, m] = 1
    return perm


def exit_side(approach_side: int, move: int) -> int:
    """Side of the intersection a vehicle leaves through.

    Arriving from the north (southbound), a left turn heads east.
    """
    return (approach_side + (1, 2, 3)[move]) % 4


@dataclass
class RoadNetwork:
    rows: int
    cols: int
    G: np.ndarray  # (n, n) adjacency with self-loops
    travel: np.ndarray  # (4n,) free-flow seconds of the road feeding each approach
    down: np.ndarray  # (4n * 3,) downstream group per (group, move); -1 = leaves network
    entries: dict  # boundary entry name -> group id

    @property
    def n(self) -> int:
        return self.rows * self.cols

    @property
    def n_lanes(self) -> int:
        return self.n * LANES_PER_INTERSECTION

    def index(self, r: int, c: int) -> int:
        return r * self.cols + c

    def neighbor(self, i: int, side: int) -> int:
        r, c = divmod(i, self.cols)
        dr, dc = ((-1, 0), (0, 1), (1, 0), (0, -1))[side]
        r2, c2 = r + dr, c + dc
        if 0 <= r2 < self.rows and 0 <= c2 < self.cols:
            return self.index(r2, c2)
        return -1

    def internal_links(self) -> int:
        """Undirected links between neighbouring intersections."""
        return int((self.G.sum() - self.n) // 2)


def entry_name(r: int, c: int, side: int) -> str:
    return f"r{r}c{c}:{SIDES[side]}"


def build_network(scenario) -> RoadNetwork:
    """Build the grid described by ``scenario`` (rows, cols, lengths, speed)."""
    rows, cols = scenario.rows, scenario.cols
    if rows < 1 or cols < 1:
        raise ValueError(f"grid must be at least 1x1, got {rows}x{cols}")
    if scenario.length_ew <= 0 or scenario.length_ns <= 0 or scenario.speed <= 0:
        raise ValueError("link lengths and speed must be positive")
    n = rows * cols
    net = RoadNetwork(
        rows=rows,
        cols=cols,
        G=np.eye(n, dtype=np.int64),
        travel=np.zeros(4 * n, dtype=np.int64),
        down=np.full(4 * n * 3, -1, dtype=np.int64),
        entries={},
    )
    t_ew = max(1, int(round(scenario.length_ew / scenario.speed)))
    t_ns = max(1, int(round(scenario.length_ns / scenario.speed)))
    for i in range(n):
        r, c = divmod(i, cols)
        for side in range(4):
            g = 4 * i + side
            net.travel[g] = t_ns if side in (N, S) else t_ew
            nb = net.neighbor(i, side)
            if nb >= 0:
                net.G[i, nb] = 1
            else:
                net.entries[entry_name(r, c, side)] = g
            for m in range(3):
                out = exit_side(side, m)
                nb_out = net.neighbor(i, out)
                if nb_out >= 0:
                    net.down[3 * g + m] = 4 * nb_out + (out + 2) % 4
    return net


@dataclass
class Vehicles:
    """Vehicles of one episode, sorted by spawn second."""

    spawn_time: np.ndarray  # (V,)
    entry_group: np.ndarray  # (V,)
    route_off: np.ndarray  # (V + 1,) offsets into route_moves
    route_moves: np.ndarray  # movement at each intersection passed

    def __len__(self) -> int:
        return self.spawn_time.shape[0]

    def route(self, net: RoadNetwork, v: int) -> list[tuple[int, int]]:
        """(intersection, movement) pairs in order."""
        g = int(self.entry_group[v])
        out = []
        for m in self.route_moves[self.route_off[v] : self.route_off[v + 1]]:
            out.append((g // 4, int(m)))
            g = int(net.down[3 * g + m])
        return out


def arrival_times(windows, process: str, horizon: int, rng: np.random.Generator) -> list[int]:
    """Integer spawn seconds from piecewise-constant rates (veh/hour)."""
    times = []
    for start, end, rate in windows:
        start, end = float(start), min(float(end), float(horizon))
        if rate <= 0 or end <= start:
            continue
        headway = 3600.0 / rate
        if process == "deterministic":
            t = start + 0.5 * headway
            while t < end:
                times.append(int(t))
                t += headway
        else:
            t = start + rng.exponential(headway)
            while t < end:
                times.append(int(t))
                t += rng.exponential(headway)
    return times


def generate_vehicles(net: RoadNetwork, scenario, rng: np.random.Generator) -> Vehicles:
    horizon = scenario.episode_length
    cap = 2 * (net.rows + net.cols)
    spawn, groups, routes = [], [], []
    for spec in scenario.arrivals:
        g = net.entries[spec.entry]
        cum = np.cumsum(spec.turn_ratios if spec.turn_ratios is not None else scenario.turn_ratios)
        for t in arrival_times(spec.windows, spec.process, horizon, rng):
            i, side = divmod(g, 4)
            moves = []
            while True:
                m = THROUGH if len(moves) >= cap else int(np.searchsorted(cum, rng.random(), side="right"))
                m = min(m, 2)
                moves.append(m)
                out = exit_side(side, m)
                nb = net.neighbor(i, out)
                if nb < 0:
                    break
                i, side = nb, (out + 2) % 4
            spawn.append(t)
            groups.append(g)
            routes.append(moves)
    return vehicles_from_routes(spawn, groups, routes)


def vehicles_from_routes(spawn, groups, routes) -> Vehicles:
    """Pack (spawn second, entry group, movement list) triples, sorted stably by spawn."""
    order = np.argsort(np.asarray(spawn, dtype=np.int64), kind="stable")
    lengths = np.array([len(routes[j]) for j in order], dtype=np.int64)
    off = np.zeros(len(order) + 1, dtype=np.int64)
    off[1:] = np.cumsum(lengths)
    moves = np.array([m for j in order for m in routes[j]], dtype=np.int64)
    return Vehicles(
        spawn_time=np.asarray(spawn, dtype=np.int64)[order] if len(spawn) else np.zeros(0, dtype=np.int64),
        entry_group=np.asarray(groups, dtype=np.int64)[order] if len(groups) else np.zeros(0, dtype=np.int64),
        route_off=off,
        route_moves=moves if moves.size else np.zeros(0, dtype=np.int64),
    )
