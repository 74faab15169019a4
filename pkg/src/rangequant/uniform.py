"""Uniform symmetric quantizer with a clipping fraction alpha.

    s   = alpha * w_max / (2^(b-1) - 1)
    w_q = clip(round(w * (2^(b-1) - 1) / (alpha * w_max)), -2^(b-1), 2^(b-1) - 1)

Rounding is half-away-from-zero. All arithmetic is float64.
"""
from __future__ import annotations

import math

import numpy as np

from ._curve import mse_curve
from .tensors import (
    BitsLike,
    BitWidth,
    DegenerateTensorError,
    InvalidInputError,
    QuantParams,
    WeightTensor,
    max_abs,
)


def round_half_away(x):
    """Nearest integer, ties away from zero. Exact for every float64."""
    x = np.asarray(x, dtype=np.float64)
    t = np.trunc(x)
    # x - trunc(x) is exact, unlike floor(|x| + 0.5)
    bump = np.abs(x - t) >= 0.5
    return t + np.copysign(bump.astype(np.float64), x)


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha <= 1.0:
        raise InvalidInputError(f"alpha must lie in (0, 1], got {alpha}")
    return alpha


def _check_w_max(w_max: float) -> float:
    w_max = float(w_max)
    if w_max == 0.0:
        raise DegenerateTensorError("w_max is 0: all-zero tensor has no scale")
    if not (w_max > 0.0 and math.isfinite(w_max)):
        raise InvalidInputError(f"w_max must be positive and finite, got {w_max}")
    return w_max


def _as_output(result: np.ndarray, like):
    return int(result) if np.ndim(like) == 0 else result


def scale_factor(alpha: float, w_max: float, bits: BitsLike) -> float:
    """Step size alpha * w_max / (2^(b-1) - 1).

    Raises DegenerateTensorError for w_max == 0; callers emit zero codes
    with scale 0 in that case.
    """
    bits = BitWidth.of(bits)
    return _check_alpha(alpha) * _check_w_max(w_max) / bits.qmax


def _codes(values: np.ndarray, alpha: float, w_max: float, bits: BitWidth) -> np.ndarray:
    x = values * bits.qmax / (alpha * w_max)
    return np.clip(round_half_away(x), bits.low, bits.high).astype(np.int64)


def quantize(w, alpha: float, w_max: float, bits: BitsLike):
    """Integer code(s) for weight(s) w. Scalars in, int out; arrays in, int64 array out."""
    bits = BitWidth.of(bits)
    alpha, w_max = _check_alpha(alpha), _check_w_max(w_max)
    values = np.asarray(w, dtype=np.float64)
    if not np.isfinite(values).all():
        raise InvalidInputError("cannot quantize NaN or Inf")
    return _as_output(_codes(values, alpha, w_max, bits), w)


def _check_codes(codes: np.ndarray, bits: BitWidth) -> None:
    if codes.size and (codes.min() < bits.low or codes.max() > bits.high):
        raise InvalidInputError(f"code outside [{bits.low}, {bits.high}] for {bits.b} bits")


def dequantize(code, params: QuantParams):
    codes = np.asarray(code)
    if codes.dtype.kind not in "iu":
        raise InvalidInputError(f"codes must be integers, got {codes.dtype}")
    _check_codes(codes, params.bits)
    out = codes.astype(np.float64) * params.scale
    return float(out) if np.ndim(code) == 0 else out


def uniform_mse(values: np.ndarray, alpha: float, w_max: float, bits: BitWidth) -> float:
    """Unchecked kernel behind loss_f; the search calls this directly."""
    s = alpha * w_max / bits.qmax
    err = values - _codes(values, alpha, w_max, bits) * s
    return float(np.dot(err, err) / values.size)


def fake_quantize(tensor: WeightTensor, alpha: float, bits: BitsLike) -> WeightTensor:
    bits = BitWidth.of(bits)
    alpha = _check_alpha(alpha)
    w_max = max_abs(tensor)
    if w_max == 0.0:
        return tensor
    s = alpha * w_max / bits.qmax
    return WeightTensor(tensor.name, tensor.shape, _codes(tensor.values, alpha, w_max, bits) * s)


def loss_f(tensor: WeightTensor, alpha: float, bits: BitsLike) -> float:
    """Mean squared error of the uniform quantizer at clipping fraction alpha."""
    bits = BitWidth.of(bits)
    alpha = _check_alpha(alpha)
    w_max = max_abs(tensor)
    if w_max == 0.0:
        return 0.0
    return uniform_mse(tensor.values, alpha, w_max, bits)


def loss_f_curve(tensor: WeightTensor, alphas, bits: BitsLike) -> np.ndarray:
    """loss_f at every alpha of an ascending grid, without one pass per point."""
    bits = BitWidth.of(bits)
    return mse_curve(tensor.values, max_abs(tensor), alphas, bits.qmax, reshaped=False)
