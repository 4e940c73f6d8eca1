# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: GRU sequence forward/backward, GAE and the simulator tick.

Mirrors ``_fallback`` exactly; the test suite checks the two against each other.
Matrices are row-major; BLAS is column-major, so every product C = A @ B is
issued as C^T = B^T A^T.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport tanh
from scipy.linalg.cython_blas cimport dgemm

cdef extern from "gate_math.h" nogil:
    void hamh_sigmoid(double* x, long n)
    void hamh_tanh(double* x, long n)

cnp.import_array()

ctypedef long long i64

cdef enum:
    GREEN = 0
    YELLOW = 1
    ALL_RED = 2


cdef inline void _gemm(char ta, char tb, int n, int m, int k, double alpha,
                       double* b, int ldb, double* a, int lda,
                       double beta, double* c, int ldc) noexcept nogil:
    # column-major call computing C^T(n x m) = op(B^T)(n x k) op(A^T)(k x m)
    dgemm(&ta, &tb, &n, &m, &k, &alpha, b, &ldb, a, &lda, &beta, c, &ldc)


def gru_forward(xproj, U, h0):
    cdef double[:, :, ::1] x = np.ascontiguousarray(xproj, dtype=np.float64)
    cdef double[:, ::1] u = np.ascontiguousarray(U, dtype=np.float64)
    cdef Py_ssize_t T = x.shape[0], B = x.shape[1], H3 = x.shape[2]
    cdef Py_ssize_t H = H3 // 3
    hs_arr = np.empty((T + 1, B, H))
    gates_arr = np.empty((T, B, H3))
    cdef double[:, :, ::1] hs = hs_arr
    cdef double[:, :, ::1] gates = gates_arr
    cdef double[:, ::1] q = np.empty((B, H))
    hs_arr[0] = h0
    cdef Py_ssize_t t, b, j
    cdef double z, r, c, hv
    if T == 0:
        return hs_arr, gates_arr
    with nogil:
        for t in range(T):
            for b in range(B):
                for j in range(2 * H):
                    gates[t, b, j] = x[t, b, j]
            # zr += h @ U[:, :2H]
            _gemm(b'N', b'N', <int>(2 * H), <int>B, <int>H, 1.0,
                  &u[0, 0], <int>H3, &hs[t, 0, 0], <int>H, 1.0, &gates[t, 0, 0], <int>H3)
            for b in range(B):
                hamh_sigmoid(&gates[t, b, 0], 2 * H)
                for j in range(H):
                    q[b, j] = gates[t, b, H + j] * hs[t, b, j]
                    gates[t, b, 2 * H + j] = x[t, b, 2 * H + j]
            # candidate += (r * h) @ U[:, 2H:]
            _gemm(b'N', b'N', <int>H, <int>B, <int>H, 1.0,
                  &u[0, 2 * H], <int>H3, &q[0, 0], <int>H, 1.0, &gates[t, 0, 2 * H], <int>H3)
            for b in range(B):
                hamh_tanh(&gates[t, b, 2 * H], H)
                for j in range(H):
                    c = gates[t, b, 2 * H + j]
                    z = gates[t, b, j]
                    hv = hs[t, b, j]
                    hs[t + 1, b, j] = hv + z * (c - hv)
    return hs_arr, gates_arr


def gru_backward(dhs_in, hs_in, gates_in, U):
    cdef double[:, :, ::1] dhs = np.ascontiguousarray(dhs_in, dtype=np.float64)
    cdef double[:, :, ::1] hs = np.ascontiguousarray(hs_in, dtype=np.float64)
    cdef double[:, :, ::1] gates = np.ascontiguousarray(gates_in, dtype=np.float64)
    cdef double[:, ::1] u = np.ascontiguousarray(U, dtype=np.float64)
    cdef Py_ssize_t T = dhs.shape[0], B = dhs.shape[1], H = dhs.shape[2]
    cdef Py_ssize_t H3 = 3 * H
    dx_arr = np.empty((T, B, H3))
    dU_arr = np.zeros((H, H3))
    dh_arr = np.zeros((B, H))
    q_arr = np.empty((T, B, H))
    cdef double[:, :, ::1] dx = dx_arr
    cdef double[:, ::1] dU = dU_arr
    cdef double[:, ::1] dh = dh_arr
    cdef double[:, :, ::1] q = q_arr
    cdef double[:, ::1] g = np.empty((B, H))
    cdef double[:, ::1] dq = np.empty((B, H))
    cdef Py_ssize_t t, b, j
    cdef int TB = <int>(T * B)
    cdef double z, r, c, hv, gv
    if T == 0:
        return dx_arr, dU_arr, dh_arr
    with nogil:
        for t in range(T - 1, -1, -1):
            for b in range(B):
                for j in range(H):
                    gv = dhs[t, b, j] + dh[b, j]
                    g[b, j] = gv
                    z = gates[t, b, j]
                    c = gates[t, b, 2 * H + j]
                    hv = hs[t, b, j]
                    dx[t, b, 2 * H + j] = gv * z * (1.0 - c * c)
                    dx[t, b, j] = gv * (c - hv) * z * (1.0 - z)
                    q[t, b, j] = gates[t, b, H + j] * hv
            # dq = dah @ Uh^T
            _gemm(b'T', b'N', <int>H, <int>B, <int>H, 1.0,
                  &u[0, 2 * H], <int>H3, &dx[t, 0, 2 * H], <int>H3, 0.0, &dq[0, 0], <int>H)
            for b in range(B):
                for j in range(H):
                    r = gates[t, b, H + j]
                    dx[t, b, H + j] = dq[b, j] * hs[t, b, j] * r * (1.0 - r)
                    dh[b, j] = g[b, j] * (1.0 - gates[t, b, j]) + dq[b, j] * r
            # dh += dzr @ Uzr^T
            _gemm(b'T', b'N', <int>H, <int>B, <int>(2 * H), 1.0,
                  &u[0, 0], <int>H3, &dx[t, 0, 0], <int>H3, 1.0, &dh[0, 0], <int>H)
        # weight gradients once over the whole sequence
        # dU[:, 2H:] = sum_t (r*h)^T @ dah
        _gemm(b'N', b'T', <int>H, <int>H, TB, 1.0,
              &dx[0, 0, 2 * H], <int>H3, &q[0, 0, 0], <int>H, 0.0, &dU[0, 2 * H], <int>H3)
        # dU[:, :2H] = sum_t h^T @ dzr
        _gemm(b'N', b'T', <int>(2 * H), <int>H, TB, 1.0,
              &dx[0, 0, 0], <int>H3, &hs[0, 0, 0], <int>H, 0.0, &dU[0, 0], <int>H3)
    return dx_arr, dU_arr, dh_arr


def gae(rewards, values, double gamma, double lam):
    cdef double[:, ::1] r = np.ascontiguousarray(rewards, dtype=np.float64)
    cdef double[:, ::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef Py_ssize_t T = r.shape[0], N = r.shape[1], t, i
    adv_arr = np.empty((T, N))
    cdef double[:, ::1] adv = adv_arr
    cdef double running, delta
    with nogil:
        for i in range(N):
            running = 0.0
            for t in range(T - 1, -1, -1):
                delta = r[t, i] + gamma * v[t + 1, i] - v[t, i]
                running = delta + gamma * lam * running
                adv[t, i] = running
    return adv_arr


cdef inline void _enter(i64 v, i64 g, i64 now, i64[::1] route_off, i64[::1] route_moves,
                        i64[::1] route_pos, i64[::1] ready, i64[::1] nxt,
                        i64[::1] q_len, i64[::1] p_head, i64[::1] p_tail, i64[::1] p_len,
                        i64[::1] travel) noexcept nogil:
    cdef i64 m = route_moves[route_off[v] + route_pos[v]]
    cdef i64 base = g * 3
    cdef i64 lane
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


def sim_advance(s, int n_seconds):
    cdef i64[::1] counters = s.counters
    cdef i64[::1] spawn_time = s.spawn_time
    cdef i64[::1] entry_group = s.entry_group
    cdef i64[::1] route_off = s.route_off
    cdef i64[::1] route_moves = s.route_moves
    cdef i64[::1] route_pos = s.route_pos
    cdef i64[::1] ready = s.ready
    cdef i64[::1] nxt = s.nxt
    cdef i64[::1] t_out = s.t_out
    cdef i64[::1] q_head = s.q_head
    cdef i64[::1] q_tail = s.q_tail
    cdef i64[::1] q_len = s.q_len
    cdef i64[::1] p_head = s.p_head
    cdef i64[::1] p_tail = s.p_tail
    cdef i64[::1] p_len = s.p_len
    cdef i64[::1] travel = s.travel
    cdef i64[::1] down = s.down
    cdef i64[::1] phase = s.phase
    cdef i64[::1] next_phase = s.next_phase
    cdef i64[::1] mode = s.mode
    cdef i64[::1] remaining = s.remaining
    cdef i64[:, :, ::1] perm = s.perm
    cdef i64 all_red = s.all_red
    cdef i64 n_vehicles = spawn_time.shape[0]
    cdef i64 n_lanes = q_len.shape[0]
    cdef i64 n_inter = phase.shape[0]
    cdef i64 now, k, lane, v, g, g2, m, i, ph
    cdef int step
    with nogil:
        for step in range(n_seconds):
            now = counters[0]
            k = counters[3]
            while k < n_vehicles and spawn_time[k] <= now:
                _enter(k, entry_group[k], now, route_off, route_moves, route_pos, ready,
                       nxt, q_len, p_head, p_tail, p_len, travel)
                counters[1] += 1
                k += 1
            counters[3] = k
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
                        _enter(v, g2, now, route_off, route_moves, route_pos, ready,
                               nxt, q_len, p_head, p_tail, p_len, travel)
            for i in range(n_inter):
                if mode[i] == GREEN:
                    continue
                remaining[i] -= 1
                if remaining[i] <= 0:
                    if mode[i] == YELLOW:
                        mode[i] = ALL_RED
                        remaining[i] = all_red
                    else:
                        mode[i] = GREEN
                        phase[i] = next_phase[i]
                        remaining[i] = 0
            counters[0] = now + 1
