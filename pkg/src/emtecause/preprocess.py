"""Signal conditioning: modal transform, wavelet detail maps, images.

Raw three-phase windows become classifier inputs in three steps:

1. an orthonormal modal transform decouples the phases into two aerial
   modes and one ground mode,
2. an optional single-level Daubechies-4 wavelet split compresses each
   mode into half-length detail magnitudes that concentrate the
   high-band transient content,
3. per-row min-max scaling maps every sensor row into [0, 1].

Images stay floating point in [0, 1] end to end; the 0..255 byte range
appears only when writing PGM/PPM files.
"""

from __future__ import annotations

from enum import Enum
from pathlib import Path

import numpy as np

# Orthonormal modal transform. Rows produce (mode 1, mode 2, mode 0):
# two aerial difference modes and the common (ground) mode. Orthonormal,
# so the inverse is the transpose and signal energy is preserved.
_S23 = np.sqrt(2.0 / 3.0)
MODAL_MATRIX = _S23 * np.array(
    [
        [1.0, -0.5, -0.5],
        [0.0, np.sqrt(3.0) / 2.0, -np.sqrt(3.0) / 2.0],
        [1.0 / np.sqrt(2.0), 1.0 / np.sqrt(2.0), 1.0 / np.sqrt(2.0)],
    ]
)

# Daubechies-4 lowpass taps (8 taps, 4 vanishing moments), frozen to the
# precision the tests pin. The highpass is the alternating-sign reverse.
DB4_LO = np.array(
    [
        0.23037781330889650086,
        0.71484657055291564709,
        0.63088076792985890788,
        -0.027983769416859854211,
        -0.18703481171909308408,
        0.030841381835560763627,
        0.032883011666885199735,
        -0.010597401785069032105,
    ]
)
DB4_HI = np.array([(-1.0) ** k * DB4_LO[7 - k] for k in range(8)])


class InputCase(Enum):
    """The four classifier input layouts.

    TWO_D      one channel, mode-1 waveform rows
    TWO_D_W    one channel, mode-1 wavelet detail magnitude rows
    THREE_D    three channels, one per mode, waveform rows
    THREE_D_W  three channels, one per mode, detail magnitude rows
    """

    TWO_D = "2d"
    TWO_D_W = "2dw"
    THREE_D = "3d"
    THREE_D_W = "3dw"

    @property
    def display(self) -> str:
        return {"2d": "2D", "2dw": "2D+W", "3d": "3D", "3dw": "3D+W"}[self.value]

    @property
    def channels(self) -> int:
        return 3 if self in (InputCase.THREE_D, InputCase.THREE_D_W) else 1

    @property
    def wavelet(self) -> bool:
        return self in (InputCase.TWO_D_W, InputCase.THREE_D_W)


def modal_transform(phases: np.ndarray) -> np.ndarray:
    """Map phase signals [..., 3, S] to modes [..., 3, S] ordered
    (mode 1, mode 2, mode 0)."""
    phases = np.asarray(phases, dtype=np.float64)
    if phases.ndim < 2 or phases.shape[-2] != 3:
        raise ValueError(f"expected [..., 3, S], got {phases.shape}")
    return np.einsum("ij,...jk->...ik", MODAL_MATRIX, phases)


def inverse_modal_transform(modes: np.ndarray) -> np.ndarray:
    modes = np.asarray(modes, dtype=np.float64)
    if modes.ndim < 2 or modes.shape[-2] != 3:
        raise ValueError(f"expected [..., 3, S], got {modes.shape}")
    return np.einsum("ij,...jk->...ik", MODAL_MATRIX.T, modes)


def dwt_db4_level1(signal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One-level periodic Daubechies-4 split along the last axis.

    approx[n] = sum_k LO[k] * x[(2n + k) mod S], detail likewise with HI,
    for n = 0 .. ceil(S/2) - 1. For even S the pair is orthonormal and
    conserves energy exactly; odd S wraps one extra half-step.
    """
    x = np.asarray(signal, dtype=np.float64)
    length = x.shape[-1]
    if length < 2:
        raise ValueError("signal must have at least 2 samples")
    half = (length + 1) // 2
    idx = (2 * np.arange(half)[:, None] + np.arange(8)[None, :]) % length
    windows = x[..., idx]  # [..., half, 8]
    approx = windows @ DB4_LO
    detail = windows @ DB4_HI
    return approx, detail


def wavelet_detail_abs(signal: np.ndarray) -> np.ndarray:
    """Magnitude of the level-1 detail coefficients, [..., ceil(S/2)]."""
    _, detail = dwt_db4_level1(signal)
    return np.abs(detail)


def wavelet_energy(voltages: np.ndarray) -> float:
    """Sum of squared mode-1 detail coefficients over all sensors.

    A compact high-band activity score for one event window [L, 3, S].
    """
    v = np.asarray(voltages, dtype=np.float64)
    if v.ndim != 3 or v.shape[1] != 3:
        raise ValueError(f"expected [L, 3, S], got {v.shape}")
    mode1 = modal_transform(v)[:, 0, :]
    _, detail = dwt_db4_level1(mode1)
    return float(np.sum(detail**2))


def encode_grayscale(matrix: np.ndarray) -> np.ndarray:
    """Scale each row of [R, W] to [0, 1] by its own min and max.

    Constant rows carry no contrast and map to all zeros. Output is
    float64; multiply by 255 only when exporting image files.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {m.shape}")
    lo = m.min(axis=1, keepdims=True)
    hi = m.max(axis=1, keepdims=True)
    span = hi - lo
    flat = span == 0.0
    safe = np.where(flat, 1.0, span)
    out = (m - lo) / safe
    return np.where(flat, 0.0, out)


def build_input(voltages: np.ndarray, case: InputCase) -> np.ndarray:
    """Turn one event window [L, 3, S] into a [C, L, W] image stack.

    Rows are sensors. W is S for waveform cases and ceil(S/2) for the
    wavelet cases. Every row is min-max scaled independently, so each
    channel lies in [0, 1].
    """
    v = np.asarray(voltages, dtype=np.float64)
    if v.ndim != 3 or v.shape[1] != 3:
        raise ValueError(f"expected [L, 3, S], got {v.shape}")
    modes = modal_transform(v)  # [L, 3, S], mode axis 1
    picked = modes if case.channels == 3 else modes[:, :1, :]
    if case.wavelet:
        picked = wavelet_detail_abs(picked)
    channels = [encode_grayscale(picked[:, c, :]) for c in range(picked.shape[1])]
    return np.stack(channels, axis=0)


def input_width(window_samples: int, case: InputCase) -> int:
    return (window_samples + 1) // 2 if case.wavelet else window_samples


def export_pgm(image: np.ndarray, path: str | Path) -> None:
    """Write a [H, W] image in [0, 1] as a binary 8-bit PGM file."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected [H, W], got {img.shape}")
    data = _to_bytes(img)
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + data.tobytes())


def export_ppm(image: np.ndarray, path: str | Path) -> None:
    """Write a [3, H, W] image in [0, 1] as a binary 8-bit PPM file."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] != 3:
        raise ValueError(f"expected [3, H, W], got {img.shape}")
    data = _to_bytes(img)  # [3, H, W] uint8
    interleaved = np.ascontiguousarray(np.moveaxis(data, 0, -1))  # [H, W, 3]
    header = f"P6\n{img.shape[2]} {img.shape[1]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + interleaved.tobytes())


def _to_bytes(img01: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(img01 * 255.0), 0, 255).astype(np.uint8)
