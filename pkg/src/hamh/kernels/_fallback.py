"""Pure-Python/numpy implementations of the hot kernels.

Every function here has an identically named, identically behaving twin in
the compiled ``_ext`` module. The compiled one is preferred at import time;
this module is the reference and the fallback.
"""

import numpy as np

GREEN, YELLOW, ALL_RED = 0, 1, 2


def _sigmoid(a):
    return 0.5 * (np.tanh(0.5 * a) + 1.0)


def gru_forward(xproj, U, h0):
    """Unroll a GRU over a whole sequence.

    xproj: (T, B, 3H) input projections (x @ W + b), gate order [z | r | h].
    U: (H, 3H) recurrent weights. h0: (B, H).

    Returns (hs, gates) with hs: (T + 1, B, H) including h0 and
    gates: (T, B, 3H) holding [z | r | candidate] for the backward pass.
    """
    T, B, H3 = xproj.shape
    H = H3 // 3
    hs = np.empty((T + 1, B, H))
    gates = np.empty((T, B, H3))
    hs[0] = h0
    Uzr = U[:, : 2 * H]
    Uh = U[:, 2 * H :]
    for t in range(T):
        h = hs[t]
        x = xproj[t]
        zr = _sigmoid(x[:, : 2 * H] + h @ Uzr)
        z = zr[:, :H]
        r = zr[:, H:]
        c = np.tanh(x[:, 2 * H :] + (r * h) @ Uh)
        hs[t + 1] = h + z * (c - h)
        gates[t, :, : 2 * H] = zr
        gates[t, :, 2 * H :] = c
    return hs, gates


def gru_backward(dhs, hs, gates, U):
    """Reverse pass of :func:`gru_forward`.

    dhs: (T, B, H) upstream gradient on hs[1:].
    Returns (dxproj, dU, dh0).
    """
    T, B, H = dhs.shape
    dx = np.empty((T, B, 3 * H))
    dU = np.zeros_like(U)
    Uzr = U[:, : 2 * H]
    Uh = U[:, 2 * H :]
    dh = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        h = hs[t]
        z = gates[t, :, :H]
        r = gates[t, :, H : 2 * H]
        c = gates[t, :, 2 * H :]
        g = dhs[t] + dh
        dah = g * z * (1.0 - c * c)
        daz = g * (c - h) * z * (1.0 - z)
        dq = dah @ Uh.T
        dar = dq * h * r * (1.0 - r)
        dx[t, :, :H] = daz
        dx[t, :, H : 2 * H] = dar
        dx[t, :, 2 * H :] = dah
        dU[:, 2 * H :] += (r * h).T @ dah
        dzr = dx[t, :, : 2 * H]
        dU[:, : 2 * H] += h.T @ dzr
        dh = g * (1.0 - z) + dq * r + dzr @ Uzr.T
    return dx, dU, dh


def gae(rewards, values, gamma, lam):
    """Backward-recursive generalized advantage estimates.

    rewards: (T, N); values: (T + 1, N) with the bootstrap row last.
    """
    T = rewards.shape[0]
    adv = np.empty_like(rewards)
    running = np.zeros(rewards.shape[1:])
    for t in range(T - 1, -1, -1):
        delta = rewards[t] + gamma * values[t + 1] - values[t]
        running = delta + gamma * lam * running
        adv[t] = running
    return adv


def sim_advance(s, n_seconds):
    """Advance the queue simulator ``n_seconds`` one-second ticks in place.

    ``s`` is a :class:`hamh.sim.engine.SimArrays`; see there for the layout.
    """
    counters = s.counters  # [clock, spawned, exited, next_spawn]
    spawn_time = s.spawn_time
    entry_group = s.entry_group
    route_off = s.route_off
    route_moves = s.route_moves
    route_pos = s.route_pos
    ready = s.ready
    nxt = s.nxt
    t_out = s.t_out
    q_head, q_tail, q_len = s.q_head, s.q_tail, s.q_len
    p_head, p_tail, p_len = s.p_head, s.p_tail, s.p_len
    travel = s.travel
    down = s.down
    phase, next_phase, mode, remaining = s.phase, s.next_phase, s.mode, s.remaining
    perm = s.perm
    n_vehicles = spawn_time.shape[0]
    n_lanes = q_len.shape[0]
    n_inter = phase.shape[0]

    def enter(v, g, now):
        m = route_moves[route_off[v] + route_pos[v]]
        base = g * 3
        if m == 0:
            lane = base
        elif m == 2:
            lane = base + 2
        elif q_len[base + 1] + p_len[base + 1] <= q_len[base + 2] + p_len[base + 2]:
            lane = base + 1
        else:
            lane = base + 2
        ready[v] = now + travel[g]
        nxt[v] = -1
        if p_len[lane] == 0:
            p_head[lane] = v
        else:
            nxt[p_tail[lane]] = v
        p_tail[lane] = v
        p_len[lane] += 1

    for _ in range(n_seconds):
        now = counters[0]
        # (1) arrivals
        k = counters[3]
        while k < n_vehicles and spawn_time[k] <= now:
            enter(k, entry_group[k], now)
            counters[1] += 1
            k += 1
        counters[3] = k
        # (2) free-flow pipelines feed the waiting queues
        for lane in range(n_lanes):
            while p_len[lane] > 0 and ready[p_head[lane]] <= now:
                v = p_head[lane]
                p_head[lane] = nxt[v]
                p_len[lane] -= 1
                nxt[v] = -1
                if q_len[lane] == 0:
                    q_head[lane] = v
                else:
                    nxt[q_tail[lane]] = v
                q_tail[lane] = v
                q_len[lane] += 1
        # (3) saturation-flow discharge, one vehicle per permitted lane
        for i in range(n_inter):
            if mode[i] != GREEN:
                continue
            ph = phase[i]
            for lane in range(i * 12, i * 12 + 12):
                if q_len[lane] == 0:
                    continue
                v = q_head[lane]
                g = lane // 3
                m = route_moves[route_off[v] + route_pos[v]]
                if not perm[ph, g % 4, m]:
                    continue
                q_head[lane] = nxt[v]
                q_len[lane] -= 1
                nxt[v] = -1
                g2 = down[g * 3 + m]
                route_pos[v] += 1
                if g2 < 0:
                    t_out[v] = now + 1
                    counters[2] += 1
                else:
                    enter(v, g2, now)
        # (4) signal transitions
        for i in range(n_inter):
            if mode[i] == GREEN:
                continue
            remaining[i] -= 1
            if remaining[i] <= 0:
                if mode[i] == YELLOW:
                    mode[i] = ALL_RED
                    remaining[i] = s.all_red
                else:
                    mode[i] = GREEN
                    phase[i] = next_phase[i]
                    remaining[i] = 0
        # (5) clock
        counters[0] = now + 1
