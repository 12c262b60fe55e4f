"""Recorder for intermediate activations and structural probes."""
from __future__ import annotations

import numpy as np

from .autodiff import Tensor


class Trace:
    """Optional recorder for intermediate activations and structural probes."""

    def __init__(self):
        self.shapes: list[tuple[str, tuple]] = []
        self.tensors: dict[str, np.ndarray] = {}
        self.fc_calls = 0

    def shape(self, label: str, t: Tensor) -> None:
        self.shapes.append((label, tuple(t.shape)))

    def keep(self, label: str, t: Tensor) -> None:
        self.tensors[label] = t.data.copy()
