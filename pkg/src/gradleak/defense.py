"""Gradient-compression transforms applied to a captured update before it
reaches an attacker: sign quantization and smallest-magnitude dropping."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import as_matrix

DEFENSE_KINDS = ("sign", "drop")


@dataclass(frozen=True)
class DefenseSpec:
    kind: str
    rate: float = 0.0

    def __post_init__(self):
        if self.kind not in DEFENSE_KINDS:
            raise ValueError(f"unknown defense {self.kind!r}, expected one of {DEFENSE_KINDS}")
        if self.kind == "drop" and not (0.0 <= self.rate < 1.0):
            raise ValueError("drop rate must lie in [0, 1)")


def sign_sgd(delta_w) -> np.ndarray:
    """Elementwise sign; zeros stay zero, so the output range is {-1, 0, +1}."""
    return np.sign(as_matrix(delta_w))


def grad_drop(delta_w, rate: float) -> np.ndarray:
    """Zero exactly floor(rate * size) entries of smallest absolute value.

    Ties break by row-major index (stable), and surviving entries are
    bit-identical to the input.
    """
    if not (0.0 <= rate < 1.0):
        raise ValueError("drop rate must lie in [0, 1)")
    out = as_matrix(delta_w).copy()
    flat = out.reshape(-1)
    k = math.floor(rate * flat.size)
    if k:
        order = np.argsort(np.abs(flat), kind="stable")
        flat[order[:k]] = 0.0
    return out


def apply_defense(delta_w, spec: DefenseSpec) -> np.ndarray:
    if spec.kind == "sign":
        return sign_sgd(delta_w)
    return grad_drop(delta_w, spec.rate)
