"""Sub-byte packed convolution on a simulated vector machine with a
fused multiply-shift-accumulate instruction."""

from .kernels import (
    ConvRun,
    ConvShape,
    RegionError,
    conv2d_int16,
    conv2d_oracle,
    conv2d_ulppack_native,
    conv2d_ulppack_vmacsr,
    overflow_monitor,
    run_conv,
)
from .packing import (
    PackedTensor,
    Precision,
    QuantTensor,
    pack_p1,
    packed_product_fields,
    region_map,
    safe_accum_budget,
    unpack_p1,
)

__version__ = "0.1.0"
