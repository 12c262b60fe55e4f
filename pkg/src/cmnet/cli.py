"""``cmnet`` command line: synth, train, enhance, eval, ablate, gradcheck, inspect.

Exit codes: 0 success, 1 internal failure (or failed gradient check),
2 input-format error, 3 config/checkpoint mismatch.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .configfile import EvalSettings, RunConfig, load_config
from .data import mix_scenario, sample_scenario, scenario_set
from .model.config import ConfigError, ModelConfig
from .model.accounting import parameter_report
from .model.network import init_params
from .model.params import CheckpointError, load_checkpoint, param_breakdown, param_count
from .signal import SAMPLE_RATE, WavFormatError, read_wav, write_wav

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT, EXIT_MISMATCH = 0, 1, 2, 3
OUT_ENV = "CMNET_OUT_DIR"
DEFAULT_OUT = "cmnet-runs"

log = logging.getLogger("cmnet")


class InputFormatError(Exception):
    """Bad user-supplied input file."""


# -- helpers ----------------------------------------------------------------------
def _out_dir(args, sub: str) -> Path:
    base = Path(args.out) if args.out else Path(os.environ.get(OUT_ENV, DEFAULT_OUT)) / sub
    base.mkdir(parents=True, exist_ok=True)
    return base


def _run_config(args, default_model: ModelConfig | None = None) -> RunConfig:
    rc = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    if not getattr(args, "config", None) and default_model is not None:
        rc.model = default_model
    if getattr(args, "case", None) and not isinstance(args.case, list):
        rc.model = rc.model.with_case(args.case)
    return rc


def write_manifest(path: Path, command: str, seed, cfg: ModelConfig | None, extra: dict | None = None) -> Path:
    """Everything needed to rerun: command, seed, config hash and package versions."""
    data = {
        "command": command,
        "seed": seed,
        "config_fingerprint": cfg.fingerprint() if cfg is not None else None,
        "model_config": cfg.to_dict() if cfg is not None else None,
        "versions": {"cmnet": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
    }
    data.update(extra or {})
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=list) + "\n")
    return path


def _load_params(args, rc: RunConfig):
    if args.checkpoint:
        params, cfg, _ = load_checkpoint(args.checkpoint)
        if args.config and cfg.to_dict() != rc.model.to_dict():
            raise CheckpointError(f"{args.checkpoint}: checkpoint config differs from {args.config}")
        return params, cfg
    return init_params(rc.model, dtype=np.float32), rc.model


def _read_input_wav(path) -> np.ndarray:
    try:
        return read_wav(path)
    except FileNotFoundError as exc:
        raise InputFormatError(f"{path}: no such file") from exc
    except WavFormatError as exc:
        raise InputFormatError(str(exc)) from exc
    except ValueError as exc:
        raise InputFormatError(f"{path}: {exc}") from exc


# -- subcommands ------------------------------------------------------------------
def cmd_synth(args) -> int:
    rc = _run_config(args)
    spec = rc.scenario_spec(args.seed) or sample_scenario(args.seed, 2.0)
    m = mix_scenario(spec)
    out = _out_dir(args, "synth")
    parts = {"mic": m.y, "farend": m.x, "nearend": m.s, "echo": m.d, "noise": m.v}
    peak = max(float(np.max(np.abs(v))) for v in parts.values())
    gain = 0.99 / peak if peak > 0.99 else 1.0  # one gain for all parts keeps y = d + s + v
    for name, sig in parts.items():
        write_wav(out / f"{name}.wav", sig * gain)
    meta = {"spec": spec.to_dict(), "gain": gain, "true_delay": spec.echo.delay_samples,
            "estimated_delay": m.alignment.delay}
    (out / "scenario.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    write_manifest(out / "manifest.json", "synth", args.seed, None, {"scenario": spec.to_dict()})
    print(f"{spec.kind} scenario seed={args.seed} -> {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    from dataclasses import replace

    from .train import TrainConfig, default_sampler, fixed_sampler, train, write_loss_curve

    rc = _run_config(args)
    tcfg = rc.train
    if args.seed is not None:
        tcfg = replace(tcfg, seed=args.seed)
    if args.steps is not None:
        tcfg = replace(tcfg, steps=args.steps)
    params = None
    cfg = rc.model
    if args.checkpoint:
        params, cfg = _load_params(args, rc)
    spec = rc.scenario_spec()
    sampler = fixed_sampler(spec) if spec is not None else default_sampler(tcfg.chunk_seconds, tcfg.seed)
    out = _out_dir(args, "train")
    write_manifest(out / "manifest.json", "train", tcfg.seed, cfg, {"train_config": tcfg.to_dict()})

    losses = []

    def on_step(step, loss):
        losses.append(loss)
        print(f"step {step:5d}  loss {loss:.4f}", flush=True)

    try:
        result = train(cfg, tcfg, sampler, out_dir=out, params=params, on_step=on_step)
    except Exception:
        write_loss_curve(out / "loss.csv", losses)
        raise
    print(f"final checkpoint: {result.checkpoints[-1]}")
    return EXIT_OK


def cmd_enhance(args) -> int:
    from .pipeline import enhance

    rc = _run_config(args)
    mic = _read_input_wav(args.mic)
    far = _read_input_wav(args.farend)
    if len(far) < len(mic):
        far = np.pad(far, (0, len(mic) - len(far)))
    far = far[:len(mic)]
    params, cfg = _load_params(args, rc)
    t0 = time.perf_counter()
    res = enhance(mic, far, params, cfg)
    elapsed = time.perf_counter() - t0
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_wav(out, res.estimate)
    a = res.alignment
    delay = "no-signal" if a.no_signal else f"{a.delay} samples ({1000.0 * a.delay / SAMPLE_RATE:.1f} ms)"
    flag = " [low confidence]" if a.low_confidence and not a.no_signal else ""
    rtf = elapsed / (len(mic) / SAMPLE_RATE)
    print(f"delay: {delay}{flag}")
    print(f"real-time factor: {rtf:.3f}")
    write_manifest(out.with_name(out.name + ".manifest.json"), "enhance", None, cfg,
                   {"mic": str(args.mic), "farend": str(args.farend),
                    "checkpoint": str(args.checkpoint) if args.checkpoint else None,
                    "delay": None if a.no_signal else a.delay})
    return EXIT_OK


def _read_triplets(path) -> list:
    import csv

    from .evaluate import EvalItem

    items = []
    base = Path(path).parent
    try:
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                target = row.get("target") or None
                items.append(EvalItem.from_wavs(row["kind"], base / row["mic"], base / row["farend"],
                                                base / target if target else None))
    except KeyError as exc:
        raise InputFormatError(f"{path}: missing column {exc}") from exc
    except (WavFormatError, FileNotFoundError) as exc:
        raise InputFormatError(str(exc)) from exc
    return items


def cmd_eval(args) -> int:
    from .evaluate import evaluate, oracle_provider

    rc = _run_config(args)
    settings = rc.eval
    seed = settings.seed if args.seed is None else args.seed
    if args.triplets:
        scenarios = _read_triplets(args.triplets)
    else:
        scenarios = scenario_set(settings.n_per_kind, settings.duration, seed)
    if args.oracle:
        params, cfg = None, None
        report = evaluate(None, None, scenarios, mask_provider=oracle_provider, name="oracle-mask")
    else:
        params, cfg = _load_params(args, rc)
        report = evaluate(params, cfg, scenarios, name=str(args.checkpoint or "untrained"))
    out = _out_dir(args, "eval")
    (out / "report.txt").write_text(report.to_text())
    (out / "report.csv").write_text(report.to_csv())
    write_manifest(out / "manifest.json", "eval", seed, cfg,
                   {"checkpoint": str(args.checkpoint) if args.checkpoint else None, "oracle": args.oracle})
    print(report.to_text(), end="")
    return EXIT_OK


def cmd_ablate(args) -> int:
    from dataclasses import replace

    from .evaluate import ablation_run
    from .train import TrainConfig

    if args.config:
        rc = load_config(args.config)
        base, tcfg, settings = rc.model, rc.train, rc.eval
    else:
        base = ModelConfig.toy()
        tcfg = TrainConfig(chunk_seconds=2.0, steps=100)
        settings = EvalSettings(n_per_kind=2, duration=2.0)
    if args.seed is not None:
        tcfg = replace(tcfg, seed=args.seed)
    if args.steps is not None:
        tcfg = replace(tcfg, steps=args.steps)
    cases = args.case or [1, 2, 3, 4, 5]
    scenarios = scenario_set(settings.n_per_kind, settings.duration, tcfg.seed + 10_000)
    report = ablation_run(base, tcfg, cases, scenarios, reference=ModelConfig(),
                          on_case=lambda c: print(f"training case {c}", flush=True))
    out = _out_dir(args, "ablate")
    (out / "ablation.txt").write_text(report.to_text())
    (out / "ablation.csv").write_text(report.to_csv())
    write_manifest(out / "manifest.json", "ablate", tcfg.seed, base,
                   {"train_config": tcfg.to_dict(), "cases": cases})
    print(report.to_text(), end="")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradsuite import format_report, layer_blocks, network_blocks, run_suite

    seed = args.seed or 0
    precisions = ["float64", "float32"] if args.precision == "both" else [args.precision]
    blocks = layer_blocks(seed) + network_blocks(seed)
    text, ok = [], True
    for prec in precisions:
        results = run_suite(prec, tol=args.tol, count=args.count, seed=seed, blocks=blocks)
        ok &= all(r.passed for r in results)
        text.append(f"# {prec}\n" + format_report(results))
    report = "\n".join(text)
    print(report, end="")
    out = _out_dir(args, "gradcheck")
    (out / "gradcheck.txt").write_text(report)
    write_manifest(out / "manifest.json", "gradcheck", seed, None, {"tol": args.tol, "passed": bool(ok)})
    return EXIT_OK if ok else EXIT_INTERNAL


def cmd_inspect(args) -> int:
    from .collab import dump_attention_maps
    from .pipeline import enhance
    from .trace import Trace

    rc = _run_config(args)
    params, cfg = _load_params(args, rc)
    seed = args.seed or 0
    spec = rc.scenario_spec(seed) or sample_scenario(seed, 2.0, kinds=("DT",))
    m = mix_scenario(spec)
    trace = Trace()
    enhance(m.y, m.x, params, cfg, alignment=m.alignment, trace=trace)
    out = _out_dir(args, "inspect")
    shapes = "\n".join(f"{label}: {','.join(str(s) for s in shape)}" for label, shape in trace.shapes)
    (out / "shapes.txt").write_text(shapes + "\n")
    written = ["shapes.txt"]
    if cfg.case != 5:
        dump_attention_maps(trace.tensors["cm.in"], params, cfg, out)
        written += ["m_tp.csv", "m_tn.csv"]
    if "w_tp" in trace.tensors:
        w = trace.tensors["w_tp"][0]
        lines = ["frame,w_tp"] + [f"{t},{v:.9g}" for t, v in enumerate(w)]
        (out / "w_tp.csv").write_text("\n".join(lines) + "\n")
        written.append("w_tp.csv")
    breakdown = param_breakdown(params)
    lines = [f"{k},{v}" for k, v in breakdown.items()] + [f"total,{param_count(params)}"]
    (out / "params.csv").write_text("block,params\n" + "\n".join(lines) + "\n")
    (out / "params.txt").write_text(parameter_report(cfg).to_text())
    written += ["params.csv", "params.txt"]
    write_manifest(out / "manifest.json", "inspect", seed, cfg, {"scenario": spec.to_dict()})
    print(shapes)
    print(f"wrote {', '.join(written)} to {out}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cmnet", description="Collaborative echo cancellation toolkit.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    p.add_argument("--version", action="version", version=f"cmnet {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True, config=True):
        if config:
            sp.add_argument("--config", metavar="PATH", help="INI run configuration")
        if seed:
            sp.add_argument("--seed", type=int, default=None, metavar="N")
        sp.add_argument("--out", metavar="DIR", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
        return sp

    sp = common(sub.add_parser("synth", help="write a synthetic scenario as WAV files"))
    sp.set_defaults(func=cmd_synth, seed=0)

    sp = common(sub.add_parser("train", help="train a model"))
    sp.add_argument("--case", type=int, choices=range(1, 6), metavar="{1..5}")
    sp.add_argument("--steps", type=int, metavar="N")
    sp.add_argument("--checkpoint", metavar="PATH", help="initialise from this checkpoint")
    sp.set_defaults(func=cmd_train)

    sp = common(sub.add_parser("enhance", help="remove echo from a microphone recording"), seed=False)
    sp.add_argument("mic")
    sp.add_argument("farend")
    sp.add_argument("output")
    sp.add_argument("--checkpoint", metavar="PATH", required=True)
    sp.set_defaults(func=cmd_enhance)

    sp = common(sub.add_parser("eval", help="evaluate a checkpoint on a scenario set"))
    sp.add_argument("--checkpoint", metavar="PATH")
    sp.add_argument("--oracle", action="store_true", help="use the ideal ratio mask instead of a model")
    sp.add_argument("--triplets", metavar="CSV", help="real recordings: columns kind,mic,farend,target")
    sp.set_defaults(func=cmd_eval)

    sp = common(sub.add_parser("ablate", help="train and compare ablation cases 1-5"))
    sp.add_argument("--case", type=int, choices=range(1, 6), action="append", metavar="{1..5}")
    sp.add_argument("--steps", type=int, metavar="N")
    sp.set_defaults(func=cmd_ablate)

    sp = common(sub.add_parser("gradcheck", help="finite-difference check of every block"), config=False)
    sp.add_argument("--tol", type=float, default=None, metavar="X",
                    help="relative tolerance (default 1e-6 for float64, 1e-4 for float32)")
    sp.add_argument("--precision", choices=("float64", "float32", "both"), default="both")
    sp.add_argument("--count", type=int, default=6, metavar="N", help="entries sampled per tensor")
    sp.set_defaults(func=cmd_gradcheck)

    sp = common(sub.add_parser("inspect", help="dump attention maps, shapes and selection weights"))
    sp.add_argument("--checkpoint", metavar="PATH")
    sp.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InputFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (CheckpointError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except Exception as exc:  # noqa: BLE001
        log.debug("internal failure", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
