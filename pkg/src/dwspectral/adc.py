"""Apparent-diffusion-coefficient map computation and persistence."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core_image import FULL_SCALE, Band, SpectralStack, save_band
from .errors import ContractError, FormatError, ValidationError


@dataclass(frozen=True)
class AdcConfig:
    """C is the proportionality constant; epsilon floors signals before the
    log so background noise does not produce -inf."""

    c_const: float = 1.0
    normalize_by_terms: bool = True
    epsilon: float = 1.0

    def __post_init__(self):
        if self.c_const <= 0:
            raise ValidationError(f"C must be > 0, got {self.c_const}")
        if self.epsilon <= 0:
            raise ValidationError(f"epsilon must be > 0, got {self.epsilon}")


def adc_map_raw(stack: SpectralStack, cfg: AdcConfig = AdcConfig()) -> np.ndarray:
    """Unclamped per-pixel diffusion estimate, shape (height, width).

    Sums (C / b_i) * ln(f_1 / f_i) over all nonzero-b bands, with both
    signals floored at epsilon; optionally divided by the term count so a
    constant-D noiseless pixel yields exactly C * D.
    """
    n = len(stack.bands)
    if n < 2:
        raise ContractError(f"ADC needs at least 2 bands, got {n}")
    f1 = np.maximum(stack.bands[0].data, cfg.epsilon)
    out = np.zeros_like(f1)
    for i in range(1, n):
        fi = np.maximum(stack.bands[i].data, cfg.epsilon)
        out += (cfg.c_const / stack.b_values[i]) * np.log(f1 / fi)
    if cfg.normalize_by_terms:
        out /= n - 1
    return out


def adc_map(stack: SpectralStack, cfg: AdcConfig = AdcConfig()) -> Band:
    """ADC map as a Band; negative raw values are clamped to 0 for storage."""
    raw = adc_map_raw(stack, cfg)
    return Band(
        stack.width,
        stack.height,
        np.maximum(raw, 0.0),
        slice_index=stack.slice_index,
    )


# ---------------------------------------------------------------------------
# Persistence: exact float dump plus a rescaled 16-bit view for inspection.

_RAW_MAGIC = b"ADCF"


def save_adc_raw(adc: Band, path) -> None:
    """Raw little-endian float64 dump with a (magic, width, height) header."""
    header = _RAW_MAGIC + struct.pack("<II", adc.width, adc.height)
    Path(path).write_bytes(header + adc.data.astype("<f8").tobytes())


def load_adc_raw(path, slice_index: int = 0) -> Band:
    path = Path(path)
    data = path.read_bytes()
    if data[:4] != _RAW_MAGIC:
        raise FormatError(f"{path}: bad magic, not a raw ADC file")
    width, height = struct.unpack("<II", data[4:12])
    expected = width * height * 8
    payload = data[12 : 12 + expected]
    if len(payload) != expected:
        raise FormatError(
            f"{path}: truncated payload, {len(payload)} of {expected} bytes"
        )
    values = np.frombuffer(payload, dtype="<f8").reshape(height, width)
    return Band(width, height, values, slice_index)


def save_adc_pgm(adc: Band, path) -> float:
    """Affine-rescaled 16-bit PGM plus a JSON sidecar recording the scale.

    Returns the scale factor; a pixel value v in the PGM decodes back to
    approximately v / scale.
    """
    path = Path(path)
    peak = float(adc.data.max())
    scale = FULL_SCALE / peak if peak > 0 else 1.0
    scaled = Band(adc.width, adc.height, adc.data * scale, adc.slice_index)
    save_band(scaled, path)
    sidecar = {"scale": scale, "peak": peak, "slice_index": adc.slice_index}
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(sidecar, indent=2) + "\n"
    )
    return scale
