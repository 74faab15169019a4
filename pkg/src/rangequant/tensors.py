"""Value types shared by the quantizers, the search and the pipeline.

Everything here is immutable after construction. Arrays are stored as
read-only float64/int64 buffers so instances can be handed to worker
threads without copying.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

MIN_BITS = 2
MAX_BITS = 16

STRATEGIES = ("uniform-full", "uniform-clip", "reshape-full", "reshape-clip")


class InvalidInputError(ValueError):
    """A tensor, parameter set or code violates its contract."""


class DegenerateTensorError(InvalidInputError):
    """The tensor is all zeros, so no scale can be derived from it."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class BitWidth:
    """Signed integer bit-width with the derived clip bounds."""

    b: int

    def __post_init__(self):
        if isinstance(self.b, bool) or not isinstance(self.b, (int, np.integer)):
            raise InvalidInputError(f"bit-width must be an integer, got {self.b!r}")
        if not MIN_BITS <= self.b <= MAX_BITS:
            raise InvalidInputError(
                f"bit-width must be in [{MIN_BITS}, {MAX_BITS}], got {self.b}"
            )
        object.__setattr__(self, "b", int(self.b))

    @classmethod
    def of(cls, bits: "BitsLike") -> "BitWidth":
        return bits if isinstance(bits, BitWidth) else cls(bits)

    @property
    def low(self) -> int:
        return -(1 << (self.b - 1))

    @property
    def high(self) -> int:
        return (1 << (self.b - 1)) - 1

    @property
    def qmax(self) -> int:
        """Number of positive levels, 2^(b-1) - 1."""
        return self.high

    def __int__(self) -> int:
        return self.b


BitsLike = Union[int, BitWidth]


@dataclass(frozen=True, eq=False)
class WeightTensor:
    """A named weight (or captured activation) tensor of one layer."""

    name: str
    shape: tuple
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not isinstance(self.name, str) or not self.name:
            raise InvalidInputError("tensor name must be a non-empty string")
        shape = tuple(int(d) for d in self.shape)
        if not shape or any(d <= 0 for d in shape):
            raise InvalidInputError(f"{self.name}: shape must have positive dims, got {shape}")
        values = np.array(self.values, dtype=np.float64).ravel()
        if values.size != math.prod(shape):
            raise InvalidInputError(
                f"{self.name}: {values.size} values do not fill shape {list(shape)}"
            )
        if not np.isfinite(values).all():
            raise InvalidInputError(f"{self.name}: values contain NaN or Inf")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "values", _frozen(values))

    @classmethod
    def from_array(cls, name: str, array) -> "WeightTensor":
        array = np.asarray(array, dtype=np.float64)
        return cls(name, array.shape or (1,), array)

    @property
    def size(self) -> int:
        return self.values.size

    def to_array(self) -> np.ndarray:
        return self.values.reshape(self.shape)


@dataclass(frozen=True)
class QuantParams:
    """Everything needed to turn integer codes back into weights."""

    alpha: float
    scale: float
    bits: BitWidth
    strategy: str
    w_max: float
    loss: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "bits", BitWidth.of(self.bits))
        if not 0.0 < self.alpha <= 1.0:
            raise InvalidInputError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.strategy not in STRATEGIES:
            raise InvalidInputError(f"unknown strategy {self.strategy!r}")
        if not (self.w_max >= 0.0 and math.isfinite(self.w_max)):
            raise InvalidInputError(f"w_max must be finite and >= 0, got {self.w_max}")
        if not self.loss >= 0.0:
            raise InvalidInputError(f"loss must be >= 0, got {self.loss}")
        expected = self.alpha * self.w_max / self.bits.qmax if self.w_max > 0 else 0.0
        if not math.isclose(self.scale, expected, rel_tol=1e-12, abs_tol=0.0):
            raise InvalidInputError(
                f"scale {self.scale} inconsistent with alpha*w_max/qmax = {expected}"
            )

    @property
    def reshaped(self) -> bool:
        return self.strategy.startswith("reshape")

    @property
    def degenerate(self) -> bool:
        return self.w_max == 0.0


@dataclass(frozen=True, eq=False)
class QuantizedTensor:
    name: str
    shape: tuple
    codes: np.ndarray = field(repr=False)
    params: QuantParams

    def __post_init__(self):
        shape = tuple(int(d) for d in self.shape)
        codes = np.asarray(self.codes)
        if codes.dtype.kind not in "iu":
            raise InvalidInputError(f"{self.name}: codes must be integers, got {codes.dtype}")
        codes = codes.astype(np.int64).ravel()
        if codes.size != math.prod(shape):
            raise InvalidInputError(f"{self.name}: {codes.size} codes do not fill shape {list(shape)}")
        bits = self.params.bits
        if codes.size and (codes.min() < bits.low or codes.max() > bits.high):
            raise InvalidInputError(
                f"{self.name}: codes outside [{bits.low}, {bits.high}] for {bits.b} bits"
            )
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "codes", _frozen(codes))


@dataclass(frozen=True)
class LayerReport:
    """One row of a quantization report (one layer, one search method)."""

    layer: str
    method: str
    alpha: float
    loss: float
    wall_time_ms: float
    evals: int
    bits: int
    strategy: str
    degenerate: bool = False

    def __post_init__(self):
        if not self.loss >= 0.0:
            raise InvalidInputError(f"{self.layer}: loss must be >= 0, got {self.loss}")
        if self.wall_time_ms < 0 or self.evals < 0:
            raise InvalidInputError(f"{self.layer}: negative time or eval count")

    def as_row(self) -> dict:
        return {
            "layer": self.layer,
            "method": self.method,
            "alpha": float(self.alpha),
            "loss": float(self.loss),
            "time_ms": round(float(self.wall_time_ms), 2),
            "evals": int(self.evals),
            "bits": int(self.bits),
            "strategy": self.strategy,
        }


def max_abs(tensor: Union[WeightTensor, Sequence[float], np.ndarray]) -> float:
    """Largest absolute value of the tensor; 0 only for an all-zero tensor."""
    values = tensor.values if isinstance(tensor, WeightTensor) else np.asarray(tensor, dtype=np.float64)
    if values.size == 0:
        raise InvalidInputError("max_abs of an empty tensor")
    return float(np.max(np.abs(values)))
