"""Square-root reshaped quantizer.

Magnitudes are quantized in sqrt space and squared on the way back, which
puts the reconstruction levels closer together near zero where most
weights live:

    w_q = clip(round(sign(w) * sqrt|w| * (2^(b-1) - 1) / sqrt(alpha * w_max)))
    w'  = sign(w_q) * (|w_q| * sqrt(alpha * w_max) / (2^(b-1) - 1))^2

The clip floor stays at -2^(b-1), so code -2^(b-1) reconstructs to a
magnitude slightly above alpha * w_max.
"""
from __future__ import annotations

import numpy as np

from ._curve import mse_curve
from .tensors import BitsLike, BitWidth, InvalidInputError, QuantParams, WeightTensor, max_abs
from .uniform import _as_output, _check_alpha, _check_codes, _check_w_max, round_half_away


def _codes(values: np.ndarray, alpha: float, w_max: float, bits: BitWidth) -> np.ndarray:
    x = np.sign(values) * np.sqrt(np.abs(values)) * bits.qmax / np.sqrt(alpha * w_max)
    return np.clip(round_half_away(x), bits.low, bits.high).astype(np.int64)


def _levels(codes: np.ndarray, alpha: float, w_max: float, bits: BitWidth) -> np.ndarray:
    step = np.sqrt(alpha * w_max) / bits.qmax
    return np.sign(codes) * (np.abs(codes) * step) ** 2


def quantize_reshaped(w, alpha: float, w_max: float, bits: BitsLike):
    bits = BitWidth.of(bits)
    alpha, w_max = _check_alpha(alpha), _check_w_max(w_max)
    values = np.asarray(w, dtype=np.float64)
    if not np.isfinite(values).all():
        raise InvalidInputError("cannot quantize NaN or Inf")
    return _as_output(_codes(values, alpha, w_max, bits), w)


def dequantize_reshaped(code, params: QuantParams):
    codes = np.asarray(code)
    if codes.dtype.kind not in "iu":
        raise InvalidInputError(f"codes must be integers, got {codes.dtype}")
    _check_codes(codes, params.bits)
    if params.w_max == 0.0:
        out = np.zeros(codes.shape)
    else:
        out = _levels(codes.astype(np.float64), params.alpha, params.w_max, params.bits)
    return float(out) if np.ndim(code) == 0 else out


def reshaped_mse(values: np.ndarray, alpha: float, w_max: float, bits: BitWidth) -> float:
    """Unchecked kernel behind loss_g."""
    err = values - _levels(_codes(values, alpha, w_max, bits), alpha, w_max, bits)
    return float(np.dot(err, err) / values.size)


def fake_quantize_reshaped(tensor: WeightTensor, alpha: float, bits: BitsLike) -> WeightTensor:
    bits = BitWidth.of(bits)
    alpha = _check_alpha(alpha)
    w_max = max_abs(tensor)
    if w_max == 0.0:
        return tensor
    codes = _codes(tensor.values, alpha, w_max, bits)
    return WeightTensor(tensor.name, tensor.shape, _levels(codes, alpha, w_max, bits))


def loss_g(tensor: WeightTensor, alpha: float, bits: BitsLike) -> float:
    bits = BitWidth.of(bits)
    alpha = _check_alpha(alpha)
    w_max = max_abs(tensor)
    if w_max == 0.0:
        return 0.0
    return reshaped_mse(tensor.values, alpha, w_max, bits)


def loss_g_curve(tensor: WeightTensor, alphas, bits: BitsLike) -> np.ndarray:
    bits = BitWidth.of(bits)
    return mse_curve(tensor.values, max_abs(tensor), alphas, bits.qmax, reshaped=True)
