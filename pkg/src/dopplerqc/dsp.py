"""Band-pass filtering and Morlet scalograms for 3.75 s windows.

Each window is filtered to the 25-600 Hz Doppler band and rendered as a
250 (time) x 40 (frequency) magnitude scalogram, min-max normalized to
[0, 1]. All operations are pure; the scale bank and its FFT kernels are
computed once and cached.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.fft import next_fast_len
from scipy.signal import butter, sosfilt

from .audio_io import ANALYSIS_RATE, WINDOW_SAMPLES
from .errors import DataError

BAND_LO_HZ = 25.0
BAND_HI_HZ = 600.0
N_SCALES = 40
TIME_FRAMES = 250
POOL_FACTOR = WINDOW_SAMPLES // TIME_FRAMES  # 60 CWT samples per frame
MORLET_OMEGA0 = 6.0


# ---------------------------------------------------------------------------
# Butterworth band-pass (order-2 prototype -> two biquads)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FilterCoefficients:
    """Cascade of second-order sections (b0, b1, b2, a1, a2), a0 = 1."""

    sections: tuple[tuple[float, float, float, float, float], ...]
    f_lo_hz: float
    f_hi_hz: float
    fs_hz: float

    def as_sos(self) -> np.ndarray:
        return np.array(
            [[b0, b1, b2, 1.0, a1, a2] for (b0, b1, b2, a1, a2) in self.sections]
        )

    def response_at(self, freq_hz: float) -> complex:
        """Evaluate H(e^{jw}) directly from the section polynomials."""
        z = np.exp(-2j * np.pi * freq_hz / self.fs_hz)
        h = 1.0 + 0j
        for b0, b1, b2, a1, a2 in self.sections:
            h *= (b0 + b1 * z + b2 * z * z) / (1.0 + a1 * z + a2 * z * z)
        return h


def design_bandpass(f_lo_hz: float = BAND_LO_HZ, f_hi_hz: float = BAND_HI_HZ,
                    fs_hz: float = ANALYSIS_RATE) -> FilterCoefficients:
    """Design the order-2 Butterworth band-pass via the bilinear transform.

    Pre-warped edges put the half-power (-3 dB) points at f_lo and f_hi;
    the order-2 low-pass prototype maps to a 4th-order band-pass realized
    as two second-order sections.
    """
    if not (0 < f_lo_hz < f_hi_hz < fs_hz / 2):
        raise DataError(
            f"band edges must satisfy 0 < f_lo < f_hi < fs/2, "
            f"got f_lo={f_lo_hz}, f_hi={f_hi_hz}, fs={fs_hz}"
        )
    sos = butter(2, [f_lo_hz, f_hi_hz], btype="bandpass", fs=fs_hz, output="sos")
    sections = tuple(
        (row[0] / row[3], row[1] / row[3], row[2] / row[3], row[4] / row[3], row[5] / row[3])
        for row in sos
    )
    coeffs = FilterCoefficients(sections, f_lo_hz, f_hi_hz, fs_hz)
    for b0, b1, b2, a1, a2 in coeffs.sections:
        poles = np.roots([1.0, a1, a2])
        if np.any(np.abs(poles) >= 1.0):
            raise DataError("unstable filter section (pole on/outside unit circle)")
    return coeffs


def apply_filter(coeffs: FilterCoefficients, x: np.ndarray) -> np.ndarray:
    """Run the biquad cascade (direct-form II transposed, zero state)."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        return x.copy()
    return sosfilt(coeffs.as_sos(), x)


@lru_cache(maxsize=1)
def default_bandpass() -> FilterCoefficients:
    return design_bandpass()


# ---------------------------------------------------------------------------
# Morlet scale bank and CWT scalogram
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScaleBank:
    """40 log-spaced center frequencies spanning the filter passband."""

    frequencies_hz: tuple[float, ...]
    omega0: float = MORLET_OMEGA0
    fs_hz: float = float(ANALYSIS_RATE)

    @property
    def scales(self) -> np.ndarray:
        f = np.asarray(self.frequencies_hz)
        return self.omega0 * self.fs_hz / (2.0 * np.pi * f)


def make_scale_bank(n: int = N_SCALES, f_lo: float = BAND_LO_HZ,
                    f_hi: float = BAND_HI_HZ) -> ScaleBank:
    freqs = np.geomspace(f_lo, f_hi, n)
    freqs[0], freqs[-1] = f_lo, f_hi  # pin endpoints against rounding
    return ScaleBank(tuple(freqs))


@lru_cache(maxsize=4)
def _fft_kernels(bank: ScaleBank, n_samples: int):
    """Frequency-domain Morlet kernels for zero-padded linear convolution.

    Kernel support is +/- 5 standard deviations of the Gaussian envelope;
    the FFT length covers signal + kernel so circular wrap never touches
    the window. The 1/sqrt(s) factor gives L2 (energy) normalization.
    """
    scales = bank.scales
    lmax = int(np.ceil(5.0 * scales.max()))
    nfft = next_fast_len(n_samples + 2 * lmax + 1)
    kernels = np.zeros((len(scales), nfft), dtype=np.complex128)
    for i, s in enumerate(scales):
        half = int(np.ceil(5.0 * s))
        d = np.arange(-half, half + 1)
        t = d / s
        psi = (np.pi ** -0.25) * np.exp(1j * bank.omega0 * t) * np.exp(-0.5 * t * t)
        kernels[i, d % nfft] = psi / np.sqrt(s)
    return np.fft.fft(kernels, axis=1), nfft


def cwt_magnitude(x: np.ndarray, bank: ScaleBank) -> np.ndarray:
    """|CWT| of a 1-D signal: shape (len(x), n_scales)."""
    x = np.asarray(x, dtype=np.float64)
    kf, nfft = _fft_kernels(bank, x.size)
    spec = np.fft.fft(x, nfft)
    coeff = np.fft.ifft(spec[None, :] * kf, axis=1)[:, :x.size]
    return np.abs(coeff).T


def morlet_scalogram(x: np.ndarray, bank: ScaleBank | None = None) -> np.ndarray:
    """Raw (pre-normalization) 250x40 scalogram of one 15000-sample window.

    CWT magnitude is mean-pooled over consecutive blocks of 60 samples
    along time; frequency bins follow the bank order (ascending).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size != WINDOW_SAMPLES:
        raise DataError(f"scalogram input must be {WINDOW_SAMPLES} samples, got {x.size}")
    bank = bank or default_scale_bank()
    mag = cwt_magnitude(x, bank)                       # (15000, 40)
    return mag.reshape(TIME_FRAMES, POOL_FACTOR, len(bank.frequencies_hz)).mean(axis=1)


def scalogram_batch(windows: np.ndarray, bank: ScaleBank | None = None) -> np.ndarray:
    """Vectorized scalograms for a (B, 15000) batch -> (B, 250, 40)."""
    windows = np.asarray(windows, dtype=np.float64)
    if windows.ndim != 2 or windows.shape[1] != WINDOW_SAMPLES:
        raise DataError(f"batch shape {windows.shape} != (B, {WINDOW_SAMPLES})")
    bank = bank or default_scale_bank()
    kf, nfft = _fft_kernels(bank, WINDOW_SAMPLES)
    out = np.empty((windows.shape[0], TIME_FRAMES, len(bank.frequencies_hz)))
    spec = np.fft.fft(windows, nfft, axis=1)           # (B, nfft)
    for i in range(kf.shape[0]):
        coeff = np.fft.ifft(spec * kf[i], axis=1)[:, :WINDOW_SAMPLES]
        mag = np.abs(coeff)
        out[:, :, i] = mag.reshape(-1, TIME_FRAMES, POOL_FACTOR).mean(axis=2)
    return out


@lru_cache(maxsize=1)
def default_scale_bank() -> ScaleBank:
    return make_scale_bank()


def normalize_minmax(s: np.ndarray) -> np.ndarray:
    """Map a scalogram onto [0, 1]; an all-constant input maps to zeros."""
    s = np.asarray(s, dtype=np.float64)
    if not np.all(np.isfinite(s)):
        raise DataError("scalogram contains NaN/Inf")
    lo, hi = s.min(), s.max()
    if hi == lo:
        return np.zeros_like(s)
    return (s - lo) / (hi - lo)


def window_to_scalogram(samples: np.ndarray) -> np.ndarray:
    """Full per-window pipeline: band-pass -> CWT -> pooling -> min-max."""
    filtered = apply_filter(default_bandpass(), samples)
    return normalize_minmax(morlet_scalogram(filtered))


def windows_to_scalograms(batch: np.ndarray) -> np.ndarray:
    """Batched window_to_scalogram over (B, 15000) -> (B, 250, 40)."""
    sos = default_bandpass().as_sos()
    filtered = sosfilt(sos, np.asarray(batch, dtype=np.float64), axis=1)
    raw = scalogram_batch(filtered)
    lo = raw.min(axis=(1, 2), keepdims=True)
    hi = raw.max(axis=(1, 2), keepdims=True)
    span = hi - lo
    span[span == 0] = 1.0  # constant rows normalize to all zeros
    return (raw - lo) / span


# ---------------------------------------------------------------------------
# Serialization (row-major f32 with an 8-byte dims header)
# ---------------------------------------------------------------------------

def scalogram_to_bytes(s: np.ndarray) -> bytes:
    rows, cols = s.shape
    return struct.pack("<II", rows, cols) + s.astype("<f4").tobytes()


def scalogram_from_bytes(data: bytes) -> np.ndarray:
    if len(data) < 8:
        raise DataError("scalogram blob: missing dims header")
    rows, cols = struct.unpack_from("<II", data, 0)
    need = 8 + rows * cols * 4
    if len(data) != need:
        raise DataError(f"scalogram blob: expected {need} bytes for {rows}x{cols}, got {len(data)}")
    return np.frombuffer(data, dtype="<f4", offset=8).reshape(rows, cols).astype(np.float64)
