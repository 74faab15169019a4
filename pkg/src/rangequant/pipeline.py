"""Per-layer quantization of a weight set under one of four strategies.

    uniform-full   alpha = 1, uniform levels
    uniform-clip   alpha searched on the uniform MSE
    reshape-full   alpha = 1, sqrt-reshaped levels
    reshape-clip   alpha searched on the reshaped MSE (clip + reshape)

Searched strategies fall back to alpha = 1 whenever the search lands on a
loss above the unclipped one, so clipping never increases the MSE.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import reshape, uniform
from .search import SearchSettings, bisection, golden_section, nelder_mead_1d, search
from .tensors import (
    STRATEGIES,
    BitsLike,
    BitWidth,
    InvalidInputError,
    LayerReport,
    QuantizedTensor,
    QuantParams,
    WeightTensor,
    max_abs,
)

STRATEGY_ALIASES = {
    "full": "uniform-full",
    "clip": "uniform-clip",
    "reshape": "reshape-full",
    "requant": "reshape-clip",
}

EMIT_CHOICES = frozenset({"codes", "fake", "report"})


def resolve_strategy(name: str) -> str:
    strategy = STRATEGY_ALIASES.get(name, name)
    if strategy not in STRATEGIES:
        raise InvalidInputError(
            f"unknown strategy {name!r}; expected one of {sorted(STRATEGY_ALIASES)} or {list(STRATEGIES)}"
        )
    return strategy


def is_searched(strategy: str) -> bool:
    return strategy.endswith("-clip")


def is_reshaped(strategy: str) -> bool:
    return strategy.startswith("reshape")


@dataclass(frozen=True)
class PipelineConfig:
    bits_weights: BitWidth
    strategy: str = "reshape-clip"
    search: SearchSettings = SearchSettings()
    first_last_bits: BitWidth = BitWidth(8)
    emit: frozenset = field(default=EMIT_CHOICES)
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "bits_weights", BitWidth.of(self.bits_weights))
        object.__setattr__(self, "first_last_bits", BitWidth.of(self.first_last_bits))
        object.__setattr__(self, "strategy", resolve_strategy(self.strategy))
        object.__setattr__(self, "emit", frozenset(self.emit))
        if self.first_last_bits.b < self.bits_weights.b:
            raise InvalidInputError("first_last_bits must be >= bits_weights")
        unknown = self.emit - EMIT_CHOICES
        if unknown:
            raise InvalidInputError(f"unknown emit items {sorted(unknown)}")
        if self.workers < 1:
            raise InvalidInputError("workers must be >= 1")


class LossObjective:
    """alpha -> MSE for one tensor, bits and quantizer family.

    ``many`` evaluates a whole ascending alpha grid at once (grid oracle).
    """

    def __init__(self, tensor: WeightTensor, bits: BitsLike, reshaped: bool = False):
        self.tensor = tensor
        self.bits = BitWidth.of(bits)
        self.reshaped = reshaped
        self.w_max = max_abs(tensor)
        self._kernel = reshape.reshaped_mse if reshaped else uniform.uniform_mse

    def __call__(self, alpha: float) -> float:
        if self.w_max == 0.0:
            return 0.0
        return self._kernel(self.tensor.values, float(alpha), self.w_max, self.bits)

    def many(self, alphas) -> np.ndarray:
        if self.reshaped:
            return reshape.loss_g_curve(self.tensor, alphas, self.bits)
        return uniform.loss_f_curve(self.tensor, alphas, self.bits)


def _encode(values: np.ndarray, alpha: float, w_max: float, bits: BitWidth, reshaped: bool) -> np.ndarray:
    if reshaped:
        return reshape.quantize_reshaped(values, alpha, w_max, bits)
    return uniform.quantize(values, alpha, w_max, bits)


def dequantize_tensor(quantized: QuantizedTensor) -> WeightTensor:
    """Fake-quantized weights reconstructed from codes and params alone."""
    params = quantized.params
    if params.reshaped:
        values = reshape.dequantize_reshaped(quantized.codes, params)
    else:
        values = uniform.dequantize(quantized.codes, params)
    return WeightTensor(quantized.name, quantized.shape, values)


def quantize_layer(
    tensor: WeightTensor, config: PipelineConfig, bits: BitsLike | None = None
) -> tuple[QuantizedTensor, LayerReport]:
    """Choose alpha for one tensor and encode it.

    ``bits`` overrides config.bits_weights (used for the first/last layers).
    Wall time covers the alpha selection only.
    """
    bits = BitWidth.of(bits) if bits is not None else config.bits_weights
    strategy = config.strategy
    reshaped = is_reshaped(strategy)
    objective = LossObjective(tensor, bits, reshaped)
    w_max = objective.w_max

    if w_max == 0.0:
        params = QuantParams(1.0, 0.0, bits, strategy, 0.0, 0.0)
        codes = np.zeros(tensor.size, dtype=np.int64)
        method = config.search.method if is_searched(strategy) else "fixed"
        report = LayerReport(tensor.name, method, 1.0, 0.0, 0.0, 0, bits.b, strategy, degenerate=True)
        return QuantizedTensor(tensor.name, tensor.shape, codes, params), report

    start = time.perf_counter()
    if is_searched(strategy):
        result = search(objective, config.search)
        alpha, loss = result.alpha, result.loss
        method, evals, wall_ms = result.method, result.evals, result.wall_time_ms
        full_loss = objective(1.0)
        if loss > full_loss:
            alpha, loss = 1.0, full_loss
    else:
        alpha, loss = 1.0, objective(1.0)
        method, evals = "fixed", 0
        wall_ms = (time.perf_counter() - start) * 1e3

    params = QuantParams(alpha, alpha * w_max / bits.qmax, bits, strategy, w_max, loss)
    codes = _encode(tensor.values, alpha, w_max, bits, reshaped)
    report = LayerReport(tensor.name, method, alpha, loss, wall_ms, evals, bits.b, strategy)
    return QuantizedTensor(tensor.name, tensor.shape, codes, params), report


def layer_bits(index: int, count: int, config: PipelineConfig) -> BitWidth:
    """First and last tensors (by position) keep first_last_bits."""
    if index == 0 or index == count - 1:
        return config.first_last_bits
    return config.bits_weights


def check_unique_names(tensors: Sequence[WeightTensor]) -> None:
    seen = set()
    for t in tensors:
        if t.name in seen:
            raise InvalidInputError(f"duplicate tensor name {t.name!r}")
        seen.add(t.name)


def quantize_model(
    tensors: Sequence[WeightTensor], config: PipelineConfig
) -> tuple[list[QuantizedTensor], list[LayerReport]]:
    tensors = list(tensors)
    if not tensors:
        raise InvalidInputError("model has no tensors")
    check_unique_names(tensors)
    n = len(tensors)

    def run(i):
        return quantize_layer(tensors[i], config, layer_bits(i, n, config))

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(run, range(n)))
    else:
        results = [run(i) for i in range(n)]
    return [q for q, _ in results], [r for _, r in results]


COMPARED_METHODS = (("golden", golden_section), ("bisection", bisection), ("nelder-mead", nelder_mead_1d))


def compare_searches(tensor: WeightTensor, bits: BitsLike, settings: SearchSettings = SearchSettings()) -> list[LayerReport]:
    """Run the three searchers on the uniform MSE of one tensor.

    No fallback guard here: the rows show what each method found.
    """
    bits = BitWidth.of(bits)
    objective = LossObjective(tensor, bits)
    rows = []
    for name, method in COMPARED_METHODS:
        if objective.w_max == 0.0:
            rows.append(LayerReport(tensor.name, name, 1.0, 0.0, 0.0, 0, bits.b, "uniform-clip", degenerate=True))
            continue
        result = method(objective, settings)
        rows.append(
            LayerReport(tensor.name, name, result.alpha, result.loss, result.wall_time_ms,
                        result.evals, bits.b, "uniform-clip")
        )
    return rows
