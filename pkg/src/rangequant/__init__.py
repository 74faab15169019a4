"""Per-tensor clipping-range search for post-training weight quantization."""

__version__ = "0.1.0"

from .tensors import (  # noqa: E402
    BitWidth,
    DegenerateTensorError,
    InvalidInputError,
    LayerReport,
    QuantizedTensor,
    QuantParams,
    WeightTensor,
    max_abs,
)
from .uniform import dequantize, fake_quantize, loss_f, quantize, scale_factor  # noqa: E402
from .reshape import dequantize_reshaped, fake_quantize_reshaped, loss_g, quantize_reshaped  # noqa: E402
from .search import (  # noqa: E402
    SearchAbortedError,
    SearchResult,
    SearchSettings,
    bisection,
    golden_section,
    grid_oracle,
    nelder_mead_1d,
)
from .pipeline import (  # noqa: E402
    LossObjective,
    PipelineConfig,
    compare_searches,
    dequantize_tensor,
    quantize_layer,
    quantize_model,
)
