"""Finite-difference gradient checks for every primitive, the recurrent and
graph layers, and both training losses.

Networks are instantiated at a small width so that every parameter can be
perturbed within seconds; the code paths are the same as at full width.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .algo import Learner, bootstrap_values, normalize, synthetic_buffer
from .config import Config
from .nets import Actor, Critic, Embedding, gat_layer
from .nn import F, Tensor, grad_check
from .rng import substream

TOLERANCE = 1e-4


@dataclass
class CheckResult:
    name: str
    error: float
    seconds: float

    @property
    def ok(self) -> bool:
        return self.error < TOLERANCE


def _param(rng, shape, lo=-1.0, hi=1.0, away=0.0):
    x = rng.uniform(lo, hi, size=shape)
    if away:
        # keep samples clear of a kink at zero
        x = np.where(np.abs(x) < away, np.sign(x + 1e-12) * away + x, x)
    return Tensor(x, requires_grad=True)


def _weighted(out: Tensor, R: np.ndarray) -> Tensor:
    return F.sum(out * Tensor(R))


def primitive_cases(rng: np.random.Generator):
    """Yield (name, closure, params) for every differentiable primitive."""

    def shape(nd=None):
        nd = nd or int(rng.integers(1, 4))
        return tuple(int(s) for s in rng.integers(1, 5, size=nd))

    def unary(name, fn, lo=-2.0, hi=2.0, away=0.0):
        s = shape()
        x = _param(rng, s, lo, hi, away)
        R = rng.normal(size=s)
        return name, (lambda: _weighted(fn(x), R)), [x]

    s = shape(3)
    a, b = _param(rng, s), _param(rng, s[1:])
    R = rng.normal(size=s)
    yield "add", (lambda: _weighted(F.add(a, b), R)), [a, b]
    a2, b2 = _param(rng, s), _param(rng, s)
    yield "sub", (lambda: _weighted(F.sub(a2, b2), R)), [a2, b2]
    a3, b3 = _param(rng, s), _param(rng, s[-1:])
    yield "mul", (lambda: _weighted(F.mul(a3, b3), R)), [a3, b3]

    n, m, p = (int(v) for v in rng.integers(1, 5, size=3))
    A, B = _param(rng, (2, n, m)), _param(rng, (m, p))
    Rm = rng.normal(size=(2, n, p))
    yield "matmul", (lambda: _weighted(F.matmul(A, B), Rm)), [A, B]
    Ab, Bb = _param(rng, (3, n, m)), _param(rng, (3, m, p))
    Rb = rng.normal(size=(3, n, p))
    yield "matmul_batched", (lambda: _weighted(F.matmul(Ab, Bb), Rb)), [Ab, Bb]

    c1, c2 = _param(rng, (2, 3)), _param(rng, (2, 2))
    Rc = rng.normal(size=(2, 5))
    yield "concat", (lambda: _weighted(F.concat([c1, c2], axis=-1), Rc)), [c1, c2]
    s1, s2 = _param(rng, (3, 2)), _param(rng, (3, 2))
    Rs = rng.normal(size=(3, 2, 2))
    yield "stack", (lambda: _weighted(F.stack([s1, s2], axis=1), Rs)), [s1, s2]

    yield unary("relu", F.relu, away=0.05)
    yield unary("leaky_relu", lambda x: F.leaky_relu(x, 0.2), away=0.05)
    yield unary("elu", F.elu, away=0.05)
    yield unary("tanh", F.tanh)
    yield unary("sigmoid", F.sigmoid)
    yield unary("exp", F.exp)
    yield unary("log", F.log, lo=0.2, hi=3.0)
    yield unary("square", F.square)
    yield unary("softmax_lastdim", F.softmax_lastdim, lo=-3.0, hi=3.0)
    yield unary("log_softmax_lastdim", F.log_softmax_lastdim, lo=-3.0, hi=3.0)
    yield unary("clip", lambda x: F.clip(x, -0.5, 0.5), away=0.0)

    x = _param(rng, (3, 4))
    Rsum = rng.normal(size=(4,))
    yield "sum", (lambda: F.sum(F.sum(x, axis=0) * Tensor(Rsum))), [x]
    yield "mean", (lambda: F.mean(F.mean(x, axis=1) * Tensor(rng_fixed(3)))), [x]
    Rr = rng.normal(size=(4, 3))
    yield "reshape", (lambda: _weighted(F.reshape(x, (4, 3)), Rr)), [x]
    Rt = rng.normal(size=(4, 3))
    yield "swapaxes", (lambda: _weighted(F.swapaxes(x, 0, 1), Rt)), [x]
    idx = (np.array([0, 2, 2]), np.array([1, 1, 3]))
    Rg = rng.normal(size=(3,))
    yield "getitem", (lambda: _weighted(F.getitem(x, idx), Rg)), [x]
    ti = rng.integers(0, 4, size=(3,))
    yield "take_last", (lambda: _weighted(F.take_last(x, ti), Rg)), [x]

    u, v = _param(rng, (2, 3)), _param(rng, (2, 3))
    # separate the two inputs so no pair sits on the min kink
    v.data += np.where(v.data >= u.data, 0.1, -0.1)
    Ru = rng.normal(size=(2, 3))
    yield "minimum", (lambda: _weighted(F.minimum(u, v), Ru)), [u, v]
    Ro = rng.normal(size=(2, 3, 3))
    yield "outer_sum", (lambda: _weighted(F.outer_sum(u, v), Ro)), [u, v]

    T, Bn, H = 4, 2, 3
    xp, U, h0 = _param(rng, (T, Bn, 3 * H)), _param(rng, (H, 3 * H)), _param(rng, (Bn, H))
    Rh = rng.normal(size=(T, Bn, H))
    yield "gru_sequence", (lambda: _weighted(F.gru_sequence(xp, U, h0), Rh)), [xp, U, h0]


def rng_fixed(n: int) -> np.ndarray:
    return np.linspace(-1.0, 1.0, n)


def network_cases(seed: int = 0, hidden: int = 8, k: int = 3):
    rng = substream(seed, "gradcheck", "nets")
    actor = Actor(n_agents=2, k=k, seed=seed, hidden=hidden)
    x = Tensor(rng.normal(size=(2, hidden)))
    h = Tensor(rng.normal(size=(2, hidden)))
    gru_params = [actor.gru_W, actor.gru_U, actor.gru_b]
    R = rng.normal(size=(2, hidden))
    yield "gru_step", (lambda: _weighted(actor.gru_step(x, h), R)), gru_params

    xs = Tensor(rng.normal(size=(3, 2, hidden)))
    Rs = rng.normal(size=(3, 2, hidden))
    yield "gru_unroll", (lambda: _weighted(actor.gru_sequence(xs, h), Rs)), gru_params

    emb = Embedding(12, hidden, rng)
    critic = Critic(emb, k=k, seed=seed, hidden=hidden, heads=4)
    X = Tensor(rng.normal(size=(2, 3, hidden)))
    G = np.array([[1, 1, 0], [1, 1, 1], [0, 1, 1]])
    heads = critic.gat[0]
    gat_params = [p for pair in heads for p in pair]
    Rg = rng.normal(size=(2, 3, hidden))
    yield "gat_layer", (lambda: _weighted(gat_layer(X, G, heads, "concat"), Rg)), gat_params
    obs = rng.poisson(3.0, size=(2, 3, 12)).astype(np.float64)
    Rz = rng.normal(size=(2, 3, k))
    yield "critic_values", (lambda: _weighted(critic.values(obs, G), Rz)), list(critic.parameters().values()) + [
        emb.W_d,
        emb.b_d,
        emb.W_c,
        emb.b_c,
    ]


def loss_cases(seed: int = 0, hidden: int = 8, k: int = 3):
    """Full actor objective and critic loss on a 2-agent, 3-step batch."""
    cfg = Config(hidden=hidden, k=k)
    G = np.ones((2, 2))
    learner = Learner(np.arange(2), 2, G, cfg, seed)
    buf = synthetic_buffer(2, 3, k, seed)
    adv = normalize(substream(seed, "gradcheck", "adv").normal(size=(3, 2)))
    params = list(learner.parameters().values())
    yield "actor_objective", (lambda: learner.losses(buf, adv).objective), params
    # the bootstrap is under stop-gradient, so it is frozen for the oracle too
    boot = bootstrap_values(buf, learner)
    yield "critic_loss", (lambda: learner.losses(buf, adv, boot).critic), params


def run_suite(seed: int = 0, h: float = 1e-5) -> list[CheckResult]:
    rng = substream(seed, "gradcheck", "primitives")
    cases = list(primitive_cases(rng)) + list(network_cases(seed)) + list(loss_cases(seed))
    out = []
    for name, fn, params in cases:
        t = time.perf_counter()
        err = grad_check(fn, params, h=h)
        out.append(CheckResult(name, err, time.perf_counter() - t))
    return out
