from __future__ import annotations

from dataclasses import asdict, dataclass, fields


@dataclass
class Config:
    """Training hyperparameters. Defaults follow the method's published table
    where it gives a value (gamma, clip, epochs, entropy weight, k, learning
    rates, hidden sizes); the rest are conventional choices."""

    gamma: float = 0.98
    clip_eps: float = 0.2
    epochs: int = 15
    entropy_coef: float = 0.01
    k: int = 32
    actor_lr: float = 5e-4
    critic_lr: float = 5e-4
    gae_lambda: float = 0.95
    episodes: int = 200
    hidden: int = 128
    gat_heads: int = 4
    gat_layers: int = 2
    gat_readout: str = "concat"
    max_grad_norm: float = 10.0
    reward_scale: float = 0.01
    hyper_grad_from_td: bool = True
    normalize_advantages: bool = True
    use_hyper: bool = True

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.clip_eps <= 0:
            raise ValueError("clip_eps must be positive")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.actor_lr <= 0 or self.critic_lr <= 0:
            raise ValueError("learning rates must be positive")
        if self.epochs < 1 or self.episodes < 0:
            raise ValueError("epochs must be >= 1 and episodes >= 0")
        if not self.use_hyper and self.k != 1:
            raise ValueError("use_hyper=False requires k = 1")

    @classmethod
    def keys(cls) -> set[str]:
        return {f.name for f in fields(cls)}

    def replace(self, **overrides) -> "Config":
        unknown = set(overrides) - self.keys()
        if unknown:
            raise KeyError(f"unknown config keys: {sorted(unknown)}")
        d = asdict(self)
        d.update(overrides)
        return Config(**d)

    def to_dict(self) -> dict:
        return asdict(self)
