"""Virtual telecommunications laboratory.

A pure-software re-creation of a flexible-radio training platform: signal
synthesis for every modulation scheme and pulse shape in the curriculum, RF
front-end and propagation emulation, a complete baseband receiver, OFDM,
analysis instrumentation, gamified challenges, and a live lab service.
"""

from .analysis import (
    CcdfCurve,
    EyeGrid,
    PsdEstimate,
    Spectrogram,
    evm_rms,
    eye_diagram,
    measure_ber,
    papr_ccdf,
    spectrogram,
    welch_psd,
)
from .core import IqSignal, Rng, db, load_iq, resample, save_iq, undb
from .modem import Scheme, SymbolStream, classify_modulation, constellation, demap_symbols, map_bits
from .shaping import PulseKind, PulseShape, design_filter, matched_filter, pulse_shape

__all__ = [
    "CcdfCurve", "EyeGrid", "IqSignal", "PsdEstimate", "PulseKind", "PulseShape",
    "Rng", "Scheme", "Spectrogram", "SymbolStream", "classify_modulation",
    "constellation", "db", "demap_symbols", "design_filter", "evm_rms",
    "eye_diagram", "load_iq", "map_bits", "matched_filter", "measure_ber",
    "papr_ccdf", "pulse_shape", "resample", "save_iq", "spectrogram", "undb",
    "welch_psd",
]

__version__ = "0.1.0"
