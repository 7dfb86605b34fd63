"""WAV decoding, rate conversion and segment/window assembly.

The analysis chain runs at 4 kHz. Doppler recorders deliver 16-bit PCM
mono WAV at 44.1 kHz; anything else is rejected rather than coerced,
because silent down-mixing or width conversion could hide exactly the
cabling faults the classifier is supposed to expose.

Offline and streaming paths share the same arithmetic and produce
bit-identical windows (see StreamingAssembler).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import lru_cache
from typing import BinaryIO, Iterator, Optional

import numpy as np
from scipy.signal import firwin, kaiserord, resample_poly

from .annotations import QualityClass
from .errors import DataError

SOURCE_RATE = 44100
ANALYSIS_RATE = 4000
SEGMENT_SECONDS = 0.75
SEGMENT_SAMPLES = 3000          # 0.75 s at 4 kHz
WINDOW_SEGMENTS = 5
WINDOW_SAMPLES = SEGMENT_SAMPLES * WINDOW_SEGMENTS

# Rational rate conversion 44100 -> 4000.
_UP, _DOWN = 40, 441


@dataclass(frozen=True)
class Recording:
    """Mono audio with identity; the unit of fold stratification."""

    id: str
    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise DataError(f"recording {self.id!r}: samples must be a non-empty 1-D array")

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


@dataclass(frozen=True)
class Segment:
    """0.75 s annotation unit: exactly 3000 samples at 4 kHz."""

    recording_id: str
    index: int
    samples: np.ndarray

    def __post_init__(self):
        if self.samples.size != SEGMENT_SAMPLES:
            raise DataError(
                f"segment {self.recording_id!r}[{self.index}]: "
                f"expected {SEGMENT_SAMPLES} samples, got {self.samples.size}"
            )


@dataclass(frozen=True)
class Window:
    """3.75 s classification unit: five consecutive segments."""

    recording_id: str
    start_segment_index: int
    samples: np.ndarray
    label: Optional[QualityClass] = field(default=None)

    def __post_init__(self):
        if self.samples.size != WINDOW_SAMPLES:
            raise DataError(
                f"window {self.recording_id!r}@{self.start_segment_index}: "
                f"expected {WINDOW_SAMPLES} samples, got {self.samples.size}"
            )

    @property
    def t_start(self) -> float:
        return self.start_segment_index * SEGMENT_SECONDS


# ---------------------------------------------------------------------------
# WAV container
# ---------------------------------------------------------------------------

def decode_wav(data: bytes, recording_id: str = "") -> Recording:
    """Decode a RIFF/WAVE byte stream into a Recording.

    Accepts PCM, 16-bit, mono only. Samples are scaled by 1/32768 so the
    int16 range maps into [-1, 1). Rejections name the offending field.
    """
    if len(data) < 12:
        raise DataError("WAV: file shorter than RIFF header")
    if data[0:4] != b"RIFF":
        raise DataError(f"WAV: bad container magic {data[0:4]!r}, expected b'RIFF'")
    if data[8:12] != b"WAVE":
        raise DataError(f"WAV: bad form type {data[8:12]!r}, expected b'WAVE'")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8:pos + 8 + size]
        if cid == b"fmt ":
            if size < 16:
                raise DataError(f"WAV: fmt chunk truncated ({size} bytes)")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif cid == b"data":
            if len(body) < size:
                raise DataError(f"WAV: data chunk declares {size} bytes, {len(body)} present")
            payload = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned

    if fmt is None:
        raise DataError("WAV: missing fmt chunk")
    if payload is None:
        raise DataError("WAV: missing data chunk")

    audio_format, channels, rate, _byte_rate, _block_align, bits = fmt
    if audio_format != 1:
        raise DataError(f"WAV: fmt.audio_format={audio_format}, only PCM (1) supported")
    if channels != 1:
        raise DataError(f"WAV: fmt.num_channels={channels}, only mono supported")
    if bits != 16:
        raise DataError(f"WAV: fmt.bits_per_sample={bits}, only 16-bit supported")
    if len(payload) % 2:
        payload = payload[:-1]
    if not payload:
        raise DataError("WAV: data chunk is empty")

    raw = np.frombuffer(payload, dtype="<i2")
    samples = raw.astype(np.float64) / 32768.0
    return Recording(id=recording_id, samples=samples, sample_rate_hz=int(rate))


def encode_wav(samples: np.ndarray, sample_rate_hz: int) -> bytes:
    """Encode float samples in [-1, 1] as 16-bit PCM mono WAV bytes."""
    ints = np.clip(np.round(np.asarray(samples, dtype=np.float64) * 32768.0),
                   -32768, 32767).astype("<i2")
    payload = ints.tobytes()
    hdr = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, 1, 1, sample_rate_hz, sample_rate_hz * 2, 2, 16,
        b"data", len(payload),
    )
    return hdr + payload


# ---------------------------------------------------------------------------
# Rate conversion
# ---------------------------------------------------------------------------

@lru_cache(maxsize=1)
def _antialias_fir() -> np.ndarray:
    """Kaiser-windowed sinc for the 40/441 polyphase resampler.

    Designed at the upsampled rate (44.1 kHz x 40) with the half-amplitude
    point at 0.9 x 2000 Hz and a 400 Hz transition, so attenuation reaches
    ~70 dB at the 2 kHz output Nyquist and beyond.
    """
    hi_rate = SOURCE_RATE * _UP
    ntaps, beta = kaiserord(70.0, 400.0 / (hi_rate / 2.0))
    if ntaps % 2 == 0:
        ntaps += 1
    return firwin(ntaps, 0.9 * (ANALYSIS_RATE / 2.0), window=("kaiser", beta), fs=hi_rate)


def _context_blocks() -> int:
    # Input context needed before a resampled value is final: half the
    # filter, measured at the input rate, in whole blocks of 441 samples.
    half_in = (_antialias_fir().size - 1) / 2 / _UP
    return int(np.ceil(half_in / _DOWN))


def resample_to_4khz(rec: Recording) -> Recording:
    """Decimate a 44.1 kHz recording to the 4 kHz analysis rate.

    Pass-through when already at 4 kHz; any other rate is rejected.
    Output length is ceil(n * 40/441).
    """
    if rec.sample_rate_hz == ANALYSIS_RATE:
        return rec
    if rec.sample_rate_hz != SOURCE_RATE:
        raise DataError(
            f"recording {rec.id!r}: unsupported sample rate {rec.sample_rate_hz} "
            f"(expected {SOURCE_RATE} or {ANALYSIS_RATE})"
        )
    y = resample_poly(rec.samples, _UP, _DOWN, window=_antialias_fir())
    return Recording(id=rec.id, samples=y, sample_rate_hz=ANALYSIS_RATE)


def upsample_to_44khz(samples: np.ndarray) -> np.ndarray:
    """Inverse direction (4 kHz -> 44.1 kHz), used by the corpus generator."""
    return resample_poly(samples, _DOWN, _UP, window=_antialias_fir())


# ---------------------------------------------------------------------------
# Segmenting and windowing
# ---------------------------------------------------------------------------

def segment_stream(rec: Recording) -> list[Segment]:
    """Cut a 4 kHz recording into consecutive 0.75 s segments.

    The sub-segment tail is dropped: annotation granularity is the segment.
    """
    if rec.sample_rate_hz != ANALYSIS_RATE:
        raise DataError(f"recording {rec.id!r}: segment_stream needs {ANALYSIS_RATE} Hz input")
    n = rec.samples.size // SEGMENT_SAMPLES
    return [
        Segment(rec.id, i, rec.samples[i * SEGMENT_SAMPLES:(i + 1) * SEGMENT_SAMPLES])
        for i in range(n)
    ]


def window_assembler(segments: list[Segment]) -> list[Window]:
    """Slide a five-segment window over consecutive segments (stride one).

    N segments yield max(0, N-4) windows; adjacent windows overlap by four
    segments. Streaming mode leaves windows unlabeled.
    """
    out = []
    for k in range(max(0, len(segments) - (WINDOW_SEGMENTS - 1))):
        group = segments[k:k + WINDOW_SEGMENTS]
        samples = np.concatenate([s.samples for s in group])
        out.append(Window(group[0].recording_id, group[0].index, samples))
    return out


class StreamingAssembler:
    """Chunk-fed segment/window assembler, bit-identical to the offline path.

    At 44.1 kHz input the resampler is evaluated on aligned input blocks
    (multiples of 441 samples) with one block of honest context each side,
    which reproduces resample_poly's full-file output exactly; a segment is
    emitted once every input sample its filter support touches has arrived.
    flush() zero-pads the tail like the offline call does.

    Single-owner object: not thread-safe. Emitted windows are immutable.
    """

    def __init__(self, recording_id: str, sample_rate_hz: int):
        if sample_rate_hz not in (SOURCE_RATE, ANALYSIS_RATE):
            raise DataError(
                f"stream {recording_id!r}: unsupported sample rate {sample_rate_hz}"
            )
        self.recording_id = recording_id
        self.sample_rate_hz = sample_rate_hz
        self._buf = np.empty(0, dtype=np.float64)
        self._n_in = 0
        self._emitted_out = 0       # 4 kHz samples handed to the segmenter
        self._pending = np.empty(0, dtype=np.float64)
        self._segments: list[Segment] = []
        self._next_window_start = 0
        self._flushed = False

    def feed(self, chunk: np.ndarray) -> list[Window]:
        """Absorb raw input samples; return any windows completed by them."""
        if self._flushed:
            raise DataError("stream: feed() after flush()")
        chunk = np.asarray(chunk, dtype=np.float64).ravel()
        if self.sample_rate_hz == ANALYSIS_RATE:
            self._pending = np.concatenate([self._pending, chunk])
            return self._drain()
        if chunk.size:
            if self._n_in + chunk.size > self._buf.size:
                grown = np.empty(max(self._buf.size * 2, self._n_in + chunk.size, 65536))
                grown[:self._n_in] = self._buf[:self._n_in]
                self._buf = grown
            self._buf[self._n_in:self._n_in + chunk.size] = chunk
            self._n_in += chunk.size
        return self._advance_resampler(final=False)

    def flush(self) -> list[Window]:
        """Signal end of stream; emit the zero-padded tail windows."""
        if self._flushed:
            return []
        self._flushed = True
        if self.sample_rate_hz == ANALYSIS_RATE:
            return self._drain()
        return self._advance_resampler(final=True)

    # -- internals --

    def _advance_resampler(self, final: bool) -> list[Window]:
        fir = _antialias_fir()
        ctx = _context_blocks()  # input blocks of 441 needed around a value
        produced = []
        x = self._buf[:self._n_in]
        while True:
            k = self._emitted_out // SEGMENT_SAMPLES  # next segment ordinal
            # Segment k covers outputs [3000k, 3000k+3000) = input blocks
            # [75k, 75(k+1)); emit when one extra context block has arrived.
            need = _DOWN * (75 * (k + 1) + ctx)
            if self._n_in < need:
                break
            s_blk = 75 * k - ctx
            lo = max(0, s_blk * _DOWN)
            sl = x[lo:_DOWN * (75 * (k + 1) + ctx)]
            if s_blk < 0:
                sl = np.concatenate([np.zeros(-s_blk * _DOWN), sl])
            y = resample_poly(sl, _UP, _DOWN, window=fir)
            seg = y[ctx * _UP:ctx * _UP + SEGMENT_SAMPLES]
            produced.append(seg)
            self._emitted_out += SEGMENT_SAMPLES
        if final:
            # Tail: the offline call zero-pads the right edge; reproduce it by
            # resampling from the last aligned block boundary to the end.
            k = self._emitted_out // SEGMENT_SAMPLES
            total_out = int(np.ceil(self._n_in * _UP / _DOWN))
            if total_out > self._emitted_out:
                s_blk = 75 * k - ctx
                lo = max(0, s_blk * _DOWN)
                sl = x[lo:]
                if s_blk < 0:
                    sl = np.concatenate([np.zeros(-s_blk * _DOWN), sl])
                y = resample_poly(sl, _UP, _DOWN, window=fir)
                produced.append(y[ctx * _UP:ctx * _UP + (total_out - self._emitted_out)])
                self._emitted_out = total_out
        if produced:
            self._pending = np.concatenate([self._pending] + produced)
        return self._drain()

    def _drain(self) -> list[Window]:
        out = []
        while self._pending.size >= SEGMENT_SAMPLES:
            seg = Segment(self.recording_id, len(self._segments),
                          self._pending[:SEGMENT_SAMPLES].copy())
            self._pending = self._pending[SEGMENT_SAMPLES:]
            self._segments.append(seg)
            if len(self._segments) >= WINDOW_SEGMENTS:
                k = self._next_window_start
                group = self._segments[k:k + WINDOW_SEGMENTS]
                out.append(Window(self.recording_id, k,
                                  np.concatenate([s.samples for s in group])))
                self._next_window_start += 1
        return out


# ---------------------------------------------------------------------------
# Length-prefixed int16 frame protocol (live input on stdin or a socket)
# ---------------------------------------------------------------------------

def read_frames(stream: BinaryIO) -> Iterator[np.ndarray]:
    """Yield float sample chunks from length-prefixed int16le frames.

    Frame = u32 little-endian byte count, then that many bytes of int16
    little-endian samples. Ends cleanly at EOF on a frame boundary.
    """
    while True:
        hdr = stream.read(4)
        if not hdr:
            return
        if len(hdr) < 4:
            raise DataError("frame stream: truncated length prefix")
        (nbytes,) = struct.unpack("<I", hdr)
        if nbytes % 2:
            raise DataError(f"frame stream: odd frame length {nbytes}")
        body = stream.read(nbytes)
        if len(body) < nbytes:
            raise DataError("frame stream: truncated frame body")
        yield np.frombuffer(body, dtype="<i2").astype(np.float64) / 32768.0


def write_frame(stream: BinaryIO, samples: np.ndarray) -> None:
    """Write one frame of float samples as length-prefixed int16le."""
    ints = np.clip(np.round(np.asarray(samples) * 32768.0), -32768, 32767).astype("<i2")
    stream.write(struct.pack("<I", ints.size * 2))
    stream.write(ints.tobytes())
