"""Parameter accounting against the 2.5M reference size."""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

from .config import ModelConfig
from .network import init_params
from .params import param_breakdown, param_count

REFERENCE_TOTAL = 2_500_000
ACCEPT_RANGE = (1_500_000, 3_500_000)

# Architecture details fixed by reconstruction, with their parameter impact.
AMBIGUITIES = (
    "attention width d: key/value/query project the flattened C*F frame to d=64 "
    "(each unit of d costs about 4 * C * F parameters per branch)",
    "attention output: a d -> C*F projection restores the frame before the residual add",
    "mask conv block: two C -> C convs (kernel 3x7) with a ReLU between them",
    "decoder blocks: pointwise gate and fuse convs on the skip path, each with batch norm + PReLU",
    "skip wiring: decoder stage i takes encoder stage (1, 0, 0)[i] as its skip input",
    "case 5 substitute: two unmasked attention blocks in series replace the module",
    "selection GRUs: hidden size 1 so each GRU yields one scalar weight per frame",
)


@dataclass
class ParamReport:
    config: ModelConfig
    breakdown: "OrderedDict[str, int]"
    total: int

    @property
    def ratio(self) -> float:
        return self.total / REFERENCE_TOTAL

    @property
    def in_range(self) -> bool:
        return ACCEPT_RANGE[0] <= self.total <= ACCEPT_RANGE[1]

    def to_text(self) -> str:
        width = max(len(k) for k in self.breakdown)
        lines = [f"# case {self.config.case}  fingerprint {self.config.fingerprint()}"]
        lines += [f"{k:<{width}}  {v:>10,d}" for k, v in self.breakdown.items()]
        lines.append(f"{'total':<{width}}  {self.total:>10,d}")
        lines.append(f"reference {REFERENCE_TOTAL:,d}  ratio {self.ratio:.3f}  "
                     f"range [{ACCEPT_RANGE[0]:,d}, {ACCEPT_RANGE[1]:,d}]  {'ok' if self.in_range else 'OUT OF RANGE'}")
        lines.append("reconstruction ambiguities:")
        lines += [f"  - {a}" for a in AMBIGUITIES]
        return "\n".join(lines) + "\n"


def parameter_report(cfg: ModelConfig | None = None) -> ParamReport:
    cfg = cfg if cfg is not None else ModelConfig()
    params = init_params(cfg)
    return ParamReport(cfg, param_breakdown(params), param_count(params))
