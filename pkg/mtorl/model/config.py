from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import List, Mapping

from mtorl.utils.errors import ConfigError

REWARD_HEADS = ("sigmoid", "bounded", "softmax")


@dataclass(frozen=True)
class ModelConfig:
    """
    Sizes, head choice and ablation switches of the network.

    d: hidden size; fused_size: F; n: sequence length; m: channels;
    state_layers/attention_layers/reward_layers: L1, L2, L3.
    """

    d: int
    fused_size: int
    n: int
    m: int
    state_layers: int = 2
    attention_layers: int = 2
    reward_layers: int = 3
    kernel_size: int = 3
    dilations: tuple = (1, 2)
    heads: int = 1
    dropout: float = 0.1
    leaky_slope: float = 0.01
    reward_head: str = "sigmoid"
    reward_classes: int = 1
    causal_state: bool = True
    causal_attention: bool = True
    add_norm: bool = True
    weight_norm: bool = True
    per_position_bias: bool = True
    init_std: float = 0.02
    layer_norm_eps: float = 1e-5

    def __post_init__(self):
        object.__setattr__(self, "dilations", tuple(int(x) for x in self.dilations))
        errors: List[str] = []
        for name in ("d", "fused_size", "m", "kernel_size", "heads"):
            if getattr(self, name) < 1:
                errors.append(f"model.{name} must be >= 1")
        if self.n < 2:
            errors.append("model.n must be >= 2")
        for name in ("state_layers", "attention_layers", "reward_layers"):
            if getattr(self, name) < 1:
                errors.append(f"model.{name} must be >= 1")
        if len(self.dilations) != self.state_layers:
            errors.append(
                f"model.dilations has {len(self.dilations)} entries but state_layers is {self.state_layers}"
            )
        if any(x < 1 for x in self.dilations):
            errors.append("model.dilations must be positive")
        if self.heads >= 1 and self.d % self.heads:
            errors.append(f"model.d ({self.d}) must be divisible by model.heads ({self.heads})")
        if not 0.0 <= self.dropout < 1.0:
            errors.append("model.dropout must be in [0, 1)")
        if not 0.0 < self.leaky_slope < 1.0:
            errors.append("model.leaky_slope must be in (0, 1)")
        if self.reward_head not in REWARD_HEADS:
            errors.append(f"model.reward_head must be one of {', '.join(REWARD_HEADS)}")
        elif self.reward_head == "softmax" and self.reward_classes < 2:
            errors.append("model.reward_classes must be >= 2 for a softmax reward head")
        elif self.reward_head != "softmax" and self.reward_classes != 1:
            errors.append("model.reward_classes must be 1 for sigmoid/bounded reward heads")
        if self.init_std <= 0:
            errors.append("model.init_std must be > 0")
        if self.layer_norm_eps <= 0:
            errors.append("model.layer_norm_eps must be > 0")
        if errors:
            raise ConfigError("\n  • " + "\n  • ".join(errors))

    @property
    def head_dim(self) -> int:
        return self.d // self.heads

    @property
    def bias_width(self) -> int:
        """Positions covered by a bias tensor: n when per-position, else 1."""
        return self.n if self.per_position_bias else 1

    def to_dict(self) -> dict:
        payload = asdict(self)
        payload["dilations"] = list(self.dilations)
        return payload

    @classmethod
    def from_dict(cls, payload: Mapping) -> "ModelConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = sorted(set(payload) - known)
        if unknown:
            raise ConfigError(f"unknown model config fields: {unknown}")
        return cls(**dict(payload))
