"""Per-exit compute cost and savings bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .errors import ContractError


@dataclass(frozen=True)
class CostModel:
    """Cumulative MACs needed to reach each exit, shallowest first."""

    cumulative_macs: tuple

    def __post_init__(self):
        macs = tuple(float(m) for m in self.cumulative_macs)
        object.__setattr__(self, "cumulative_macs", macs)
        if len(macs) < 1 or any(m <= 0 for m in macs):
            raise ContractError("exit costs must be positive")
        if any(b <= a for a, b in zip(macs, macs[1:])):
            raise ContractError("exit costs must be strictly increasing")

    @property
    def num_exits(self) -> int:
        return len(self.cumulative_macs)

    @classmethod
    def from_backbone(cls, config) -> "CostModel":
        """MACs of the toy backbone: affine blocks up to the exit, plus that exit's projection and head."""
        widths = [config.input_dim, *config.hidden_dims]
        block_macs = [widths[i] * widths[i + 1] for i in range(len(config.hidden_dims))]
        n, C = config.latent_dim, config.num_classes
        out = []
        for b in config.exit_after:
            backbone = sum(block_macs[: b + 1])
            head = widths[b + 1] * n + n * C
            out.append(backbone + head)
        return cls(tuple(out))


def _check_exit(cost: CostModel, exit_index: int) -> int:
    if not 0 <= exit_index < cost.num_exits:
        raise ContractError(f"exit index {exit_index} out of range for {cost.num_exits} exits")
    return exit_index


def macs_at_exit(cost: CostModel, exit_index: int) -> float:
    return cost.cumulative_macs[_check_exit(cost, exit_index)]


def macs_saved_fraction(cost: CostModel, exit_index: int) -> float:
    """``1 - macs(exit) / macs(final)``."""
    _check_exit(cost, exit_index)
    return 1.0 - cost.cumulative_macs[exit_index] / cost.cumulative_macs[-1]


def mixture_macs_saved(fractions: Sequence[float], saved_per_exit: Sequence[float]) -> float:
    """Expected saving when ``fractions[i]`` of the queries leave at exit ``i``."""
    if len(fractions) != len(saved_per_exit):
        raise ContractError("need one saving per exit fraction")
    return float(sum(f * s for f, s in zip(fractions, saved_per_exit)))
