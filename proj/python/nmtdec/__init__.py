"""CPU beam-search decoder for attentional sequence-to-sequence models."""

from ._nmtdec import (
    Decoder,
    FormatError,
    InputError,
    Model,
    ShapeError,
    ValidationError,
    gemm_f32,
    gemm_i16,
    generate_model,
    load_model,
    lut,
    parse_opts,
    quantize_roundtrip,
    run_cli,
)

__all__ = [
    "Decoder",
    "FormatError",
    "InputError",
    "Model",
    "ShapeError",
    "ValidationError",
    "gemm_f32",
    "gemm_i16",
    "generate_model",
    "load_model",
    "lut",
    "parse_opts",
    "quantize_roundtrip",
    "run_cli",
]
