"""Named parameter store, initialisation and the manifest + blob checkpoint format."""
from __future__ import annotations

import json
from collections import OrderedDict
from pathlib import Path

import numpy as np

from ..autodiff import Tensor
from .config import ConfigError, ModelConfig

MANIFEST = "manifest.txt"
BLOB = "weights.bin"
FORMAT = "cmnet-checkpoint-1"


class CheckpointError(ValueError):
    """Checkpoint missing, corrupt or inconsistent with the model configuration."""


class ParameterStore:
    """Trainable tensors plus non-trainable buffers (batch-norm running statistics)."""

    def __init__(self, dtype=np.float64):
        self.dtype = np.dtype(dtype)
        self.params: "OrderedDict[str, Tensor]" = OrderedDict()
        self.buffers: "OrderedDict[str, np.ndarray]" = OrderedDict()

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self.params or name in self.buffers:
            raise KeyError(f"duplicate parameter {name}")
        t = Tensor(np.asarray(value, dtype=self.dtype), requires_grad=True)
        self.params[name] = t
        return t

    def add_buffer(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self.params or name in self.buffers:
            raise KeyError(f"duplicate buffer {name}")
        arr = np.array(value, dtype=self.dtype)
        self.buffers[name] = arr
        return arr

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __len__(self) -> int:
        return len(self.params)

    def buffer(self, name: str) -> np.ndarray:
        return self.buffers[name]

    def named(self, prefix: str = "") -> "OrderedDict[str, Tensor]":
        return OrderedDict((k, v) for k, v in self.params.items() if k.startswith(prefix))

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def astype(self, dtype) -> "ParameterStore":
        out = ParameterStore(dtype)
        for k, v in self.params.items():
            out.add(k, v.data)
        for k, v in self.buffers.items():
            out.add_buffer(k, v)
        return out

    def copy(self) -> "ParameterStore":
        return self.astype(self.dtype)

    def state(self) -> "OrderedDict[str, np.ndarray]":
        st = OrderedDict((k, v.data) for k, v in self.params.items())
        st.update(self.buffers)
        return st


def param_count(params: ParameterStore) -> int:
    return int(sum(p.size for p in params.params.values()))


def param_breakdown(params: ParameterStore, depth: int = 2) -> "OrderedDict[str, int]":
    """Trainable scalars grouped by the first ``depth`` dotted name components."""
    out: "OrderedDict[str, int]" = OrderedDict()
    for name, p in params.params.items():
        block = ".".join(name.split(".")[:depth])
        out[block] = out.get(block, 0) + p.size
    return out


# -- initialisation -------------------------------------------------------------
def kaiming_uniform(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def add_conv(store: ParameterStore, rng, name: str, c_out: int, c_in: int, kernel: tuple) -> None:
    store.add(f"{name}.weight", kaiming_uniform(rng, (c_out, c_in) + tuple(kernel), c_in * kernel[0] * kernel[1]))
    store.add(f"{name}.bias", np.zeros(c_out))


def add_deconv(store: ParameterStore, rng, name: str, c_in: int, c_out: int, kernel: tuple) -> None:
    store.add(f"{name}.weight", kaiming_uniform(rng, (c_in, c_out) + tuple(kernel), c_in * kernel[0] * kernel[1]))
    store.add(f"{name}.bias", np.zeros(c_out))


def add_linear(store: ParameterStore, rng, name: str, d_in: int, d_out: int) -> None:
    store.add(f"{name}.weight", kaiming_uniform(rng, (d_in, d_out), d_in))
    store.add(f"{name}.bias", np.zeros(d_out))


def add_norm_act(store: ParameterStore, name: str, channels: int) -> None:
    store.add(f"{name}.bn.gamma", np.ones(channels))
    store.add(f"{name}.bn.beta", np.zeros(channels))
    store.add_buffer(f"{name}.bn.running_mean", np.zeros(channels))
    store.add_buffer(f"{name}.bn.running_var", np.ones(channels))
    store.add(f"{name}.prelu.alpha", np.full(channels, 0.25))


def add_gru(store: ParameterStore, rng, name: str, n_in: int, hidden: int) -> None:
    store.add(f"{name}.W", kaiming_uniform(rng, (3 * hidden, n_in), n_in))
    store.add(f"{name}.U", kaiming_uniform(rng, (3 * hidden, hidden), hidden))
    store.add(f"{name}.b", np.zeros(3 * hidden))


# -- checkpoint -----------------------------------------------------------------
def save_checkpoint(path, params: ParameterStore, config: ModelConfig, meta: dict | None = None) -> Path:
    """Write ``manifest.txt`` (key/value) and ``weights.bin`` (little-endian float32)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    lines = [f"format = {FORMAT}", f"config = {json.dumps(config.to_dict(), sort_keys=True)}"]
    for k, v in (meta or {}).items():
        lines.append(f"meta.{k} = {json.dumps(v)}")
    lines.append("")
    offset = 0
    chunks = []
    kinds = [("param", k, v.data) for k, v in params.params.items()] + [("buffer", k, v) for k, v in params.buffers.items()]
    for kind, name, arr in kinds:
        raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        shape = ",".join(str(s) for s in arr.shape) or "scalar"
        lines.append(f"tensor = {name} kind={kind} shape={shape} dtype=float32 offset={offset}")
        chunks.append(raw)
        offset += len(raw)
    (path / MANIFEST).write_text("\n".join(lines) + "\n")
    (path / BLOB).write_bytes(b"".join(chunks))
    return path


def read_manifest(path) -> tuple[dict, list[dict]]:
    path = Path(path)
    mf = path / MANIFEST
    if not mf.is_file() or not (path / BLOB).is_file():
        raise CheckpointError(f"{path}: missing {MANIFEST} or {BLOB}")
    header: dict = {}
    entries: list[dict] = []
    for line in mf.read_text().splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition(" = ")
        if key == "tensor":
            name, *fields = value.split()
            entry = dict(f.split("=", 1) for f in fields)
            entry["name"] = name
            entries.append(entry)
        else:
            header[key] = value
    if header.get("format") != FORMAT:
        raise CheckpointError(f"{path}: unknown checkpoint format {header.get('format')!r}")
    return header, entries


def load_checkpoint(path, expected: ModelConfig | None = None, dtype=np.float32):
    """Return ``(params, config, meta)``; shapes are validated against the config."""
    from .network import init_params

    header, entries = read_manifest(path)
    try:
        config = ModelConfig.from_dict(json.loads(header["config"]))
    except (KeyError, json.JSONDecodeError, ConfigError, TypeError) as exc:
        raise CheckpointError(f"{path}: bad config entry: {exc}") from exc
    if expected is not None and expected.to_dict() != config.to_dict():
        raise CheckpointError(f"{path}: checkpoint config does not match the requested model config")
    params = init_params(config, dtype=dtype)
    blob = (Path(path) / BLOB).read_bytes()
    seen = set()
    for e in entries:
        name = e["name"]
        shape = () if e["shape"] == "scalar" else tuple(int(s) for s in e["shape"].split(","))
        target = params.params[name].data if name in params.params else params.buffers.get(name)
        if target is None:
            raise CheckpointError(f"{path}: unexpected tensor {name}")
        if target.shape != shape:
            raise CheckpointError(f"{path}: {name} has shape {shape}, config expects {target.shape}")
        off = int(e["offset"])
        n = int(np.prod(shape)) if shape else 1
        raw = np.frombuffer(blob, dtype="<f4", count=n, offset=off)
        target[...] = raw.reshape(shape)
        seen.add(name)
    missing = (set(params.params) | set(params.buffers)) - seen
    if missing:
        raise CheckpointError(f"{path}: missing tensors {sorted(missing)[:5]}")
    meta = {k[5:]: json.loads(v) for k, v in header.items() if k.startswith("meta.")}
    return params, config, meta
