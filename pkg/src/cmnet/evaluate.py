"""Scenario evaluation with per-kind metric routing, and the Case 1-5 ablation harness."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .data import KINDS, Mixture, ScenarioSpec, mix_scenario, scenario_set
from .model.config import CASES, ConfigError, ModelConfig
from .model.network import init_params
from .model.params import ParameterStore, load_checkpoint, param_count
from .pipeline import enhance, oracle_mask
from .signal import erle, gcc_phat_align, read_wav, si_snr
from .train import TrainConfig, default_sampler, train

SILENCE = 1e-8  # energy below which a target counts as absent


@dataclass
class EvalItem:
    """One utterance to enhance: microphone, far-end reference and (for DT/ST_NE) the clean target."""

    kind: str
    mic: np.ndarray
    far: np.ndarray
    target: np.ndarray | None
    label: str = ""
    ser_db: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"scenario kind must be one of {KINDS}")
        has_target = self.target is not None and float(np.sum(np.square(self.target))) > SILENCE
        if self.kind == "ST_FE" and has_target:
            raise ConfigError(f"{self.label}: far-end single-talk has no near-end speech; SI-SNR is undefined")
        if self.kind != "ST_FE" and not has_target:
            raise ConfigError(f"{self.label}: {self.kind} needs a non-silent near-end target for SI-SNR")

    @classmethod
    def from_mixture(cls, m: Mixture) -> "EvalItem":
        s = m.s if m.spec.kind != "ST_FE" else None
        return cls(m.spec.kind, m.y, m.x, s, f"seed{m.spec.seed}", m.spec.ser_db)

    @classmethod
    def from_wavs(cls, kind: str, mic, far, target=None) -> "EvalItem":
        """Real recordings: mono 16 kHz mic / far-end (/ clean near-end) WAV files."""
        y, x = read_wav(mic), read_wav(far)
        s = read_wav(target) if target is not None else None
        n = min(len(y), len(x), len(s) if s is not None else len(y))
        return cls(kind, y[:n], x[:n], s[:n] if s is not None else None, Path(mic).stem)


@dataclass
class ScenarioResult:
    kind: str
    label: str
    ser_db: float | None
    si_snr_in: float | None = None
    si_snr_out: float | None = None
    erle: float | None = None
    delay: int = 0

    @property
    def improvement(self) -> float | None:
        if self.si_snr_out is None:
            return None
        return self.si_snr_out - self.si_snr_in


def _stats(values: Sequence[float]) -> tuple[float, float]:
    a = np.asarray(values, dtype=np.float64)
    return float(a.mean()), float(a.std())


@dataclass
class EvalReport:
    results: list[ScenarioResult]
    param_count: int
    fingerprint: str
    name: str = "eval"

    def kinds(self) -> list[str]:
        return [k for k in KINDS if any(r.kind == k for r in self.results)]

    def aggregate(self) -> dict[str, dict[str, tuple[float, float]]]:
        """Per-kind mean and std of every applicable metric."""
        out: dict[str, dict[str, tuple[float, float]]] = {}
        for kind in self.kinds():
            rs = [r for r in self.results if r.kind == kind]
            if kind == "ST_FE":
                out[kind] = {"erle": _stats([r.erle for r in rs])}
            else:
                out[kind] = {
                    "si_snr_in": _stats([r.si_snr_in for r in rs]),
                    "si_snr_out": _stats([r.si_snr_out for r in rs]),
                    "si_snr_improvement": _stats([r.improvement for r in rs]),
                }
        return out

    def to_text(self) -> str:
        head = ["kind", "n", "metric", "mean", "std"]
        rows = []
        agg = self.aggregate()
        for kind, metrics in agg.items():
            n = sum(r.kind == kind for r in self.results)
            for metric, (mu, sd) in metrics.items():
                rows.append([kind, str(n), metric, f"{mu:.3f}", f"{sd:.3f}"])
        widths = [max(len(r[i]) for r in rows + [head]) for i in range(len(head))]
        fmt = "  ".join(f"{{:<{w}}}" if i < 3 else f"{{:>{w}}}" for i, w in enumerate(widths))
        lines = [f"# {self.name}: params={self.param_count} config={self.fingerprint}", fmt.format(*head)]
        lines += [fmt.format(*r) for r in rows]
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kind", "label", "ser_db", "si_snr_in", "si_snr_out", "si_snr_improvement", "erle", "delay"])
        for r in self.results:
            w.writerow([r.kind, r.label, _fmt(r.ser_db), _fmt(r.si_snr_in), _fmt(r.si_snr_out),
                        _fmt(r.improvement), _fmt(r.erle), r.delay])
        return buf.getvalue()


def _fmt(v) -> str:
    return "" if v is None else f"{v:.6f}"


MaskProvider = Callable[[EvalItem], Callable | None]


def oracle_provider(item: EvalItem):
    """Ideal-mask upper bound; for ST_FE the ideal target is silence."""
    target = item.target if item.target is not None else np.zeros_like(item.mic)
    return oracle_mask(target)


def evaluate_item(item: EvalItem, params: ParameterStore | None, cfg: ModelConfig | None,
                  mask_provider: MaskProvider | None = None) -> ScenarioResult:
    mask_fn = mask_provider(item) if mask_provider is not None else None
    res = enhance(item.mic, item.far, params, cfg, alignment=gcc_phat_align(item.mic, item.far), mask_fn=mask_fn)
    out = ScenarioResult(item.kind, item.label, item.ser_db, delay=res.alignment.delay)
    if item.kind == "ST_FE":
        out.erle = erle(item.mic, res.estimate)
    else:
        out.si_snr_in = si_snr(item.mic, item.target)
        out.si_snr_out = si_snr(res.estimate, item.target)
    return out


def evaluate(params: ParameterStore | str | Path | None, cfg: ModelConfig | None,
             scenarios: Iterable[ScenarioSpec | EvalItem], mask_provider: MaskProvider | None = None,
             name: str = "eval") -> EvalReport:
    """Enhance every scenario and route metrics by kind: SI-SNR for DT/ST_NE, ERLE for ST_FE."""
    if isinstance(params, (str, Path)):
        params, cfg, _ = load_checkpoint(params, expected=cfg)
    if params is None and mask_provider is None:
        raise ConfigError("evaluation needs model parameters or a mask provider")
    results = []
    for sc in scenarios:
        item = EvalItem.from_mixture(mix_scenario(sc)) if isinstance(sc, ScenarioSpec) else sc
        results.append(evaluate_item(item, params, cfg, mask_provider))
    count = param_count(params) if params is not None else 0
    fp = cfg.fingerprint() if cfg is not None else "-"
    return EvalReport(results, count, fp, name)


# ---------------------------------------------------------------------------
# ablation


@dataclass
class AblationRow:
    case: int
    toggles: tuple[bool, bool, bool]
    params: int
    params_reference: int | None
    metrics: dict[str, dict[str, tuple[float, float]]]
    final_loss: float


@dataclass
class AblationReport:
    rows: list[AblationRow] = field(default_factory=list)
    seed: int = 0
    steps: int = 0

    COLUMNS = ("case", "tpb", "tnb", "ib", "DT si-snr", "DT impr", "ST_NE si-snr", "ST_FE erle", "params",
               "params (full)", "final loss")

    def _cells(self, row: AblationRow) -> list[str]:
        def m(kind, metric):
            v = row.metrics.get(kind, {}).get(metric)
            return "-" if v is None else f"{v[0]:.3f}"

        mark = lambda b: "x" if b else "-"  # noqa: E731
        return [str(row.case), *(mark(b) for b in row.toggles), m("DT", "si_snr_out"),
                m("DT", "si_snr_improvement"), m("ST_NE", "si_snr_out"), m("ST_FE", "erle"), str(row.params),
                "-" if row.params_reference is None else str(row.params_reference), f"{row.final_loss:.4f}"]

    def to_text(self) -> str:
        cells = [list(self.COLUMNS)] + [self._cells(r) for r in self.rows]
        widths = [max(len(c[i]) for c in cells) for i in range(len(self.COLUMNS))]
        lines = [f"# ablation seed={self.seed} steps={self.steps}"]
        lines += ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells]
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for r in self.rows:
            w.writerow(self._cells(r))
        return buf.getvalue()


def ablation_run(base: ModelConfig, tcfg: TrainConfig, cases: Sequence[int] = (1, 2, 3, 4, 5),
                 eval_scenarios: Sequence[ScenarioSpec] | None = None, reference: ModelConfig | None = None,
                 on_case: Callable[[int], None] | None = None) -> AblationReport:
    """Train each case of ``base`` under the same budget, data order and init seed, then evaluate.

    ``reference`` (e.g. the full-size config) only contributes a parameter-count column.
    """
    if eval_scenarios is None:
        eval_scenarios = scenario_set(2, tcfg.chunk_seconds, tcfg.seed + 10_000)
    report = AblationReport(seed=tcfg.seed, steps=tcfg.steps)
    for case in cases:
        if case not in CASES:
            raise ConfigError(f"unknown case {case}")
        cfg = base.with_case(case)
        if on_case is not None:
            on_case(case)
        result = train(cfg, tcfg, default_sampler(tcfg.chunk_seconds, tcfg.seed))
        ev = evaluate(result.params, cfg, eval_scenarios, name=f"case{case}")
        ref = param_count(init_params(reference.with_case(case))) if reference is not None else None
        report.rows.append(AblationRow(case, CASES[case], param_count(result.params), ref, ev.aggregate(),
                                       result.losses[-1]))
    return report
