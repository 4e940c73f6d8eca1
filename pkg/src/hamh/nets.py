"""Shared actor (embedding, GRU, action head, hyper-action head) and the
multi-head GAT critic.

Row-vector convention throughout: a layer is ``x @ W + b`` with W shaped
(fan_in, fan_out). All batch dimensions lead; the agent/node axis is the
second-to-last axis of per-agent features.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .nn import F, ShapeError, Tensor, no_grad
from .rng import substream

N_PHASES = 8
OBS_DIM = 12
MASK_NEG = -1e30


def _uniform(rng, shape, fan_in, name):
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True, name=name)


def _zeros(shape, name):
    return Tensor(np.zeros(shape), requires_grad=True, name=name)


def _normal(rng, shape, std, name):
    return Tensor(rng.normal(0.0, std, size=shape), requires_grad=True, name=name)


class Embedding:
    """x = ReLU(W_c · ReLU(W_d · o + b_d) + b_c)."""

    def __init__(self, obs_dim: int, hidden: int, rng: np.random.Generator):
        self.obs_dim = obs_dim
        self.W_d = _uniform(rng, (obs_dim, hidden), obs_dim, "W_d")
        self.b_d = _zeros(hidden, "b_d")
        self.W_c = _uniform(rng, (hidden, hidden), hidden, "W_c")
        self.b_c = _zeros(hidden, "b_c")

    def parameters(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.{n}": getattr(self, n) for n in ("W_d", "b_d", "W_c", "b_c")}

    def __call__(self, o) -> Tensor:
        o = F.as_tensor(o)
        if o.shape[-1] != self.obs_dim:
            raise ShapeError(f"embed_obs: expected {self.obs_dim} observation entries, got shape {o.shape}")
        if o.ndim == 1:
            return F.reshape(self(F.reshape(o, (1, -1))), (-1,))
        return F.relu(F.relu(o @ self.W_d + self.b_d) @ self.W_c + self.b_c)


def embed_obs(o, embedding: Embedding) -> Tensor:
    return embedding(o)


def joint_value(z, w) -> Tensor:
    """V = sum_j w_j z_j over the last axis."""
    z, w = F.as_tensor(z), F.as_tensor(w)
    if z.shape != w.shape:
        raise ShapeError(f"joint_value: value heads {z.shape} and hyper-action {w.shape} differ")
    return F.sum(z * w, axis=-1)


def entropy(w: Tensor, log_w: Tensor) -> Tensor:
    """H(w) = -sum_j w_j ln w_j over the last axis, given both w and ln w."""
    return -F.sum(w * log_w, axis=-1)


def one_hot(index, n: int) -> np.ndarray:
    index = np.asarray(index, dtype=np.int64)
    if np.any(index < 0) or np.any(index >= n):
        raise IndexError(f"agent index out of range [0, {n}): {index}")
    return np.eye(n)[index]


class Actor:
    """Shared actor: embedding -> GRU -> (action head, hyper-action head).

    With ``use_hyper=False`` there is no hyper head and the hyper-action is
    the constant [1] (k must be 1), i.e. a plain shared PPO actor.
    """

    def __init__(
        self,
        n_agents: int,
        k: int,
        seed: int = 0,
        hidden: int = 128,
        obs_dim: int = OBS_DIM,
        use_hyper: bool = True,
        embedding: Embedding | None = None,
        head_gain: float = 0.01,
        stream: str = "actor",
    ):
        if k < 1:
            raise ValueError("k must be >= 1")
        if not use_hyper and k != 1:
            raise ValueError("an actor without a hyper head has k = 1")
        self.n_agents = n_agents
        self.k = k
        self.hidden = hidden
        self.use_hyper = use_hyper
        rng = substream(seed, "init", stream)
        self.embed = embedding if embedding is not None else Embedding(obs_dim, hidden, rng)
        H = hidden
        self.gru_W = _uniform(rng, (H, 3 * H), H, "gru.W")
        self.gru_U = _uniform(rng, (H, 3 * H), H, "gru.U")
        self.gru_b = _zeros(3 * H, "gru.b")
        # output heads start near uniform: per-entry std gain / sqrt(fan_in)
        self.head_W = _normal(rng, (H, N_PHASES), head_gain / np.sqrt(H), "head.W")
        self.head_b = _zeros(N_PHASES, "head.b")
        if use_hyper:
            hrng = substream(seed, "init", stream, "hyper")
            fan_in = H + n_agents
            self.W_e = _normal(hrng, (fan_in, k), head_gain / np.sqrt(fan_in), "hyper.W_e")
            self.b_e = _zeros(k, "hyper.b_e")

    # ------------------------------------------------------------ parameters

    def core_parameters(self, prefix: str = "actor") -> dict[str, Tensor]:
        """GRU and action head (no embedding, no hyper head)."""
        return {
            f"{prefix}.gru.W": self.gru_W,
            f"{prefix}.gru.U": self.gru_U,
            f"{prefix}.gru.b": self.gru_b,
            f"{prefix}.head.W": self.head_W,
            f"{prefix}.head.b": self.head_b,
        }

    def hyper_parameters(self, prefix: str = "actor") -> dict[str, Tensor]:
        if not self.use_hyper:
            return {}
        return {f"{prefix}.hyper.W_e": self.W_e, f"{prefix}.hyper.b_e": self.b_e}

    def parameters(self, prefix: str = "actor") -> dict[str, Tensor]:
        out = self.embed.parameters(f"{prefix}.embed")
        out.update(self.core_parameters(prefix))
        out.update(self.hyper_parameters(prefix))
        return out

    # ------------------------------------------------------------ pieces

    def gru_step(self, x, h) -> Tensor:
        """One GRU step from primitives (reference path for the fused kernel)."""
        x, h = F.as_tensor(x), F.as_tensor(h)
        H = self.hidden
        if x.shape[-1] != H or h.shape[-1] != H:
            raise ShapeError(f"gru_step: expected width {H}, got {x.shape} and {h.shape}")
        xp = x @ self.gru_W + self.gru_b
        U = self.gru_U
        z = F.sigmoid(xp[..., :H] + h @ U[:, :H])
        r = F.sigmoid(xp[..., H : 2 * H] + h @ U[:, H : 2 * H])
        c = F.tanh(xp[..., 2 * H :] + (r * h) @ U[:, 2 * H :])
        return (1.0 - z) * h + z * c

    def gru_sequence(self, x: Tensor, h0=None) -> Tensor:
        """Fused unroll over x: (T, B, H) -> hidden states (T, B, H)."""
        T, B, _ = x.shape
        h0 = Tensor(np.zeros((B, self.hidden))) if h0 is None else F.as_tensor(h0)
        xp = x @ self.gru_W + self.gru_b
        return F.gru_sequence(xp, self.gru_U, h0)

    def action_logits(self, h) -> Tensor:
        return F.as_tensor(h) @ self.head_W + self.head_b

    def action_policy(self, h) -> Tensor:
        return F.softmax_lastdim(self.action_logits(h))

    def hyper_logits(self, h, agent_index) -> Tensor:
        h = F.as_tensor(h)
        onehot = np.broadcast_to(one_hot(agent_index, self.n_agents), h.shape[:-1] + (self.n_agents,))
        return F.concat([h, Tensor(onehot)], axis=-1) @ self.W_e + self.b_e

    def hyper_action(self, h, agent_index) -> Tensor:
        h = F.as_tensor(h)
        if not self.use_hyper:
            one_hot(agent_index, self.n_agents)
            return Tensor(np.ones(h.shape[:-1] + (1,)))
        return F.softmax_lastdim(self.hyper_logits(h, agent_index))

    def hyper_log_action(self, h, agent_index) -> Tensor:
        h = F.as_tensor(h)
        if not self.use_hyper:
            return Tensor(np.zeros(h.shape[:-1] + (1,)))
        return F.log_softmax_lastdim(self.hyper_logits(h, agent_index))

    # ------------------------------------------------------------ rollout

    def step(self, obs: np.ndarray, h: np.ndarray, agent_index) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Gradient-free decision step for a batch of agents.

        Returns (new hidden states, action probabilities, hyper-actions).
        Plain arrays throughout: the same arithmetic as the differentiable
        path without the tape bookkeeping, which dominates at batch size 3.
        """
        o = np.asarray(obs, dtype=np.float64)
        if o.shape[-1] != self.embed.obs_dim:
            raise ShapeError(f"embed_obs: expected {self.embed.obs_dim} observation entries, got shape {o.shape}")
        e = self.embed
        x = np.maximum(np.maximum(o @ e.W_d.data + e.b_d.data, 0.0) @ e.W_c.data + e.b_c.data, 0.0)
        xp = x @ self.gru_W.data + self.gru_b.data
        h_new = kernels.gru_forward(xp[None], self.gru_U.data, np.asarray(h, dtype=np.float64))[0][1]
        probs = _softmax(h_new @ self.head_W.data + self.head_b.data)
        if self.use_hyper:
            onehot = one_hot(agent_index, self.n_agents)
            w = _softmax(np.concatenate([h_new, onehot], axis=-1) @ self.W_e.data + self.b_e.data)
        else:
            one_hot(agent_index, self.n_agents)
            w = np.ones(h_new.shape[:-1] + (1,))
        return h_new, probs, w


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def graph_mask(G: np.ndarray) -> np.ndarray:
    """Additive attention mask: 0 on edges (self-loops forced), -1e30 elsewhere."""
    G = np.asarray(G)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ShapeError(f"graph must be square, got {G.shape}")
    A = (G != 0) | np.eye(G.shape[0], dtype=bool)
    return np.where(A, 0.0, MASK_NEG)


def gat_layer(X, G, heads, combine: str = "concat", slope: float = 0.2) -> Tensor:
    """Multi-head graph attention over the node axis (second-to-last) of X.

    ``heads`` is a list of (W, a) with W: (d_in, d) and a: (2d,) split into
    source and neighbour halves. Heads are concatenated or averaged.

    Scores use (X W) a = X (W a), so every head's scores come from one
    narrow GEMM and the projections from one wide GEMM.
    """
    X = F.as_tensor(X)
    mask = graph_mask(G)
    n = X.shape[-2]
    if mask.shape[0] != n:
        raise ShapeError(f"gat_layer: graph {mask.shape} does not match {n} nodes")
    nh, d = len(heads), heads[0][0].shape[1]
    lead = X.shape[:-1]
    W = F.concat([w for w, _ in heads], axis=-1) if nh > 1 else heads[0][0]
    cols = [w @ F.reshape(F.getitem(a, slice(0, d)), (d, 1)) for w, a in heads]
    cols += [w @ F.reshape(F.getitem(a, slice(d, 2 * d)), (d, 1)) for w, a in heads]
    S = F.swapaxes(X @ F.concat(cols, axis=-1), -1, -2)  # (..., 2 heads, N)
    s_self = F.getitem(S, (Ellipsis, slice(0, nh), slice(None)))
    s_nbr = F.getitem(S, (Ellipsis, slice(nh, 2 * nh), slice(None)))
    e = F.leaky_relu(F.outer_sum(s_self, s_nbr), slope) + Tensor(mask)  # (..., heads, N, N)
    alpha = F.softmax_lastdim(e)
    Wx = F.swapaxes(F.reshape(X @ W, lead + (nh, d)), -2, -3)  # (..., heads, N, d)
    out = F.elu(alpha @ Wx)
    if combine == "concat":
        return F.reshape(F.swapaxes(out, -2, -3), lead + (nh * d,))
    return F.mean(out, axis=-3)


def gat_attention(X, G, W, a, slope: float = 0.2) -> np.ndarray:
    """Attention coefficients of one head, for inspection."""
    X = np.asarray(F.as_tensor(X).data)
    d = W.shape[1]
    Wx = X @ W.data
    e = (Wx @ a.data[:d])[..., :, None] + (Wx @ a.data[d:])[..., None, :]
    e = np.where(e > 0, e, slope * e) + graph_mask(G)
    e = e - e.max(axis=-1, keepdims=True)
    p = np.exp(e)
    return p / p.sum(axis=-1, keepdims=True)


class Critic:
    """Shared embedding -> stacked multi-head GAT -> per-node MLP with k outputs."""

    def __init__(
        self,
        embedding: Embedding,
        k: int,
        seed: int = 0,
        hidden: int = 128,
        heads: int = 4,
        layers: int = 2,
        slope: float = 0.2,
        stream: str = "critic",
        readout: str = "concat",
    ):
        if hidden % heads:
            raise ValueError("hidden size must be divisible by the head count")
        if readout not in ("concat", "mean"):
            raise ValueError(f"readout must be 'concat' or 'mean', got {readout!r}")
        self.embed = embedding
        self.k = k
        self.hidden = hidden
        self.slope = slope
        # last layer: heads of width hidden / heads concatenated, or heads of
        # full width averaged; both give a hidden-wide node feature
        self.readout = readout
        rng = substream(seed, "init", stream)
        self.gat: list[list[tuple[Tensor, Tensor]]] = []
        for layer in range(layers):
            last = layer == layers - 1
            d = hidden if last and readout == "mean" else hidden // heads
            self.gat.append(
                [
                    (
                        _uniform(rng, (hidden, d), hidden, f"gat.{layer}.head.{h}.W"),
                        _uniform(rng, (2 * d,), 2 * d, f"gat.{layer}.head.{h}.a"),
                    )
                    for h in range(heads)
                ]
            )
        self.W1 = _uniform(rng, (hidden, hidden), hidden, "value.W1")
        self.b1 = _zeros(hidden, "value.b1")
        self.W2 = _uniform(rng, (hidden, k), hidden, "value.W2")
        self.b2 = _zeros(k, "value.b2")

    def parameters(self, prefix: str = "critic") -> dict[str, Tensor]:
        """Critic-only parameters (the shared embedding is listed by the actor)."""
        out = {}
        for li, layer in enumerate(self.gat):
            for hi, (W, a) in enumerate(layer):
                out[f"{prefix}.gat.{li}.head.{hi}.W"] = W
                out[f"{prefix}.gat.{li}.head.{hi}.a"] = a
        out[f"{prefix}.value.W1"] = self.W1
        out[f"{prefix}.value.b1"] = self.b1
        out[f"{prefix}.value.W2"] = self.W2
        out[f"{prefix}.value.b2"] = self.b2
        return out

    def values(self, observations, G) -> Tensor:
        """Z with shape (..., N, k) from observations (..., N, obs_dim)."""
        return self.values_from_embedding(self.embed(observations), G)

    def values_from_embedding(self, X, G) -> Tensor:
        n_layers = len(self.gat)
        for li, layer in enumerate(self.gat):
            combine = self.readout if li == n_layers - 1 else "concat"
            X = gat_layer(X, G, layer, combine, self.slope)
        return F.relu(X @ self.W1 + self.b1) @ self.W2 + self.b2


def critic_values(observations, G, critic: Critic) -> Tensor:
    return critic.values(observations, G)
