# Copyright 2026 the effcrn authors
# License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
"""Efficient convolutional recurrent networks for speech enhancement."""

from ._core import (
    Model,
    active_speech_level,
    analyze,
    bound_mask,
    compressed_loss,
    count_flops_per_frame,
    count_params,
    delta_snr,
    istft,
    layer_table_json,
    make_synthetic_corpus,
    mix_at_snr,
    selftest,
    stft,
    variants,
)

__all__ = [
    "Model",
    "active_speech_level",
    "analyze",
    "bound_mask",
    "compressed_loss",
    "count_flops_per_frame",
    "count_params",
    "delta_snr",
    "istft",
    "layer_table_json",
    "make_synthetic_corpus",
    "mix_at_snr",
    "selftest",
    "stft",
    "variants",
]
