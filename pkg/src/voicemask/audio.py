"""Audio container, WAV I/O, FFT/STFT helpers and silence-gap detection.

Everything downstream works on :class:`AudioClip` values: float64 samples in
[-1, 1] plus an integer sample rate. WAV support is deliberately narrow
(PCM 16-bit little-endian mono) so round trips are bit-exact up to the
16-bit quantization step.
"""
from __future__ import annotations

import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import get_window

SUPPORTED_RATES = (8000, 16000, 22050, 44100, 48000)
FLOOR_DB = -80.0
_PCM_SCALE = 32768.0


class WavFormatError(ValueError):
    """The file is not a readable RIFF/WAVE stream."""


class UnsupportedFormatError(WavFormatError):
    """A valid WAV file in a format we refuse (stereo, 8/24/32-bit, float...)."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class AudioClip:
    samples: np.ndarray
    sample_rate_hz: int = 16000

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1 or s.size == 0:
            raise ValueError("samples must be a nonempty 1-D sequence")
        if not np.all(np.isfinite(s)) or np.max(np.abs(s)) > 1.0:
            raise ValueError("samples must be finite and lie in [-1, 1]")
        if int(self.sample_rate_hz) not in SUPPORTED_RATES:
            raise ValueError(f"unsupported sample rate {self.sample_rate_hz}")
        object.__setattr__(self, "samples", _readonly(s))
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    @classmethod
    def clipped(cls, samples, sample_rate_hz: int = 16000) -> "AudioClip":
        """Build a clip, clamping out-of-range samples to [-1, 1]."""
        return cls(np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0), sample_rate_hz)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    def ms_to_samples(self, ms: float) -> int:
        return int(round(ms * self.sample_rate_hz / 1000.0))


# ---------------------------------------------------------------------------
# WAV I/O
# ---------------------------------------------------------------------------

def read_wav(path) -> AudioClip:
    """Read a PCM 16-bit mono WAV file.

    Samples are the raw integers divided by 32768.
    """
    try:
        with wave.open(str(path), "rb") as w:
            nch, width, rate = w.getnchannels(), w.getsampwidth(), w.getframerate()
            nframes = w.getnframes()
            raw = w.readframes(nframes)
    except wave.Error as exc:
        msg = str(exc)
        if "unknown format" in msg:
            raise UnsupportedFormatError(f"{path}: non-PCM WAV ({msg})") from exc
        raise WavFormatError(f"{path}: {msg}") from exc
    except EOFError as exc:
        raise WavFormatError(f"{path}: truncated header") from exc
    if nch != 1:
        raise UnsupportedFormatError(f"{path}: {nch} channels, only mono is supported")
    if width != 2:
        raise UnsupportedFormatError(f"{path}: {8 * width}-bit samples, only 16-bit PCM")
    if len(raw) != 2 * nframes or nframes == 0:
        raise WavFormatError(f"{path}: truncated or empty data chunk")
    ints = np.frombuffer(raw, dtype="<i2")
    return AudioClip(ints.astype(np.float64) / _PCM_SCALE, rate)


def to_pcm16(samples: np.ndarray) -> np.ndarray:
    ints = np.round(np.asarray(samples, dtype=np.float64) * _PCM_SCALE)
    return np.clip(ints, -32768, 32767).astype("<i2")


def write_wav(clip: AudioClip, path) -> None:
    """Write ``clip`` as PCM 16-bit mono; +1.0 is clamped to 32767."""
    data = to_pcm16(clip.samples).tobytes()
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(clip.sample_rate_hz)
        w.writeframes(data)


# ---------------------------------------------------------------------------
# Spectra
# ---------------------------------------------------------------------------

def is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def next_power_of_two(n: int) -> int:
    return 1 << max(0, int(n) - 1).bit_length()


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Half spectrum (``fft_size // 2 + 1`` bins) of one real frame."""

    bins: np.ndarray
    fft_size: int
    sample_rate_hz: int = 16000

    def __post_init__(self):
        if not is_power_of_two(self.fft_size) or self.fft_size < 64:
            raise ValueError(f"fft_size must be a power of two >= 64, got {self.fft_size}")
        b = np.array(self.bins, dtype=np.complex128, copy=True)
        if b.shape != (self.fft_size // 2 + 1,):
            raise ValueError("bins must have length fft_size/2 + 1")
        # DC and Nyquist of a real frame are real
        b[0] = b[0].real
        b[-1] = b[-1].real
        b.setflags(write=False)
        object.__setattr__(self, "bins", b)

    @property
    def frequencies_hz(self) -> np.ndarray:
        return np.arange(self.bins.size) * self.sample_rate_hz / self.fft_size

    @property
    def omegas(self) -> np.ndarray:
        """Normalized angular frequency of every bin, spanning [0, pi]."""
        return np.pi * np.arange(self.bins.size) / (self.bins.size - 1)


def fft_frame(frame, sample_rate_hz: int = 16000) -> Spectrum:
    x = np.asarray(frame, dtype=np.float64)
    if x.ndim != 1 or not is_power_of_two(x.size):
        raise ValueError(f"frame length must be a power of two, got {x.size}")
    return Spectrum(np.fft.rfft(x), x.size, sample_rate_hz)


def ifft_frame(spec: Spectrum) -> np.ndarray:
    return np.fft.irfft(spec.bins, n=spec.fft_size)


# ---------------------------------------------------------------------------
# STFT features
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Log-magnitude STFT, one row per analysis frame (dB re. full scale)."""

    rows: np.ndarray
    window_ms: float = 25.0
    hop_ms: float = 10.0
    sample_rate_hz: int = 16000
    floor_db: float = FLOOR_DB
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        r = np.array(self.rows, dtype=np.float64, copy=True)
        if r.ndim != 2 or r.shape[0] == 0 or r.shape[1] == 0:
            raise ValueError("feature matrix must be a nonempty 2-D array")
        r.setflags(write=False)
        object.__setattr__(self, "rows", r)

    def __len__(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    @property
    def window_samples(self) -> int:
        return int(round(self.window_ms * self.sample_rate_hz / 1000.0))

    @property
    def hop_samples(self) -> int:
        return int(round(self.hop_ms * self.sample_rate_hz / 1000.0))

    def with_rows(self, rows) -> "FeatureMatrix":
        return FeatureMatrix(rows, self.window_ms, self.hop_ms, self.sample_rate_hz,
                             self.floor_db)

    def frame_start_s(self, index: int) -> float:
        return index * self.hop_samples / self.sample_rate_hz

    def frame_end_s(self, index: int) -> float:
        """End time of frame ``index`` (start of the frame plus one window)."""
        return (index * self.hop_samples + self.window_samples) / self.sample_rate_hz


def frame_count(num_samples: int, window: int, hop: int) -> int:
    if num_samples < window:
        return 0
    return 1 + (num_samples - window) // hop


def stft(clip: AudioClip, window_ms: float = 25.0, hop_ms: float = 10.0,
         mean_normalize: bool = False) -> FeatureMatrix:
    """Hann-windowed log-magnitude STFT floored at -80 dB.

    The reference (0 dB) is a full-scale DC signal, i.e. a magnitude equal to
    the window sum. Frames are zero-padded to the next power of two.
    ``mean_normalize`` subtracts the per-bin mean over the utterance; the
    default keeps raw log magnitudes, which is what keyword spotting expects.
    """
    if not (window_ms >= hop_ms > 0):
        raise ValueError("need window_ms >= hop_ms > 0")
    sr = clip.sample_rate_hz
    win = int(round(window_ms * sr / 1000.0))
    hop = int(round(hop_ms * sr / 1000.0))
    n = frame_count(len(clip), win, hop)
    if n == 0:
        raise ValueError(f"clip of {len(clip)} samples is shorter than one {win}-sample window")
    nfft = next_power_of_two(win)
    window = get_window("hann", win, fftbins=True)
    frames = np.lib.stride_tricks.sliding_window_view(clip.samples, win)[::hop][:n]
    mag = np.abs(np.fft.rfft(frames * window, n=nfft, axis=1))
    ref = window.sum()
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(mag / ref)
    db = np.maximum(db, FLOOR_DB)
    if mean_normalize:
        db = db - db.mean(axis=0, keepdims=True)
    return FeatureMatrix(db, window_ms, hop_ms, sr, FLOOR_DB, {"fft_size": nfft})


# ---------------------------------------------------------------------------
# Silence gaps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SilenceGap:
    start_sample: int
    end_sample: int

    def __post_init__(self):
        if not self.start_sample < self.end_sample:
            raise ValueError("gap must have start < end")

    @property
    def midpoint(self) -> int:
        return (self.start_sample + self.end_sample) // 2

    def __len__(self) -> int:
        return self.end_sample - self.start_sample


def frame_rms_db(samples: np.ndarray, frame_len: int) -> np.ndarray:
    """RMS level (dBFS) of consecutive non-overlapping frames; last frame may be short."""
    n = samples.size
    starts = np.arange(0, n, frame_len)
    sq = np.concatenate(([0.0], np.cumsum(samples.astype(np.float64) ** 2)))
    ends = np.minimum(starts + frame_len, n)
    ms = (sq[ends] - sq[starts]) / (ends - starts)
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.maximum(ms, 0.0))


def detect_silence_gaps(clip: AudioClip, frame_ms: float = 10.0,
                        energy_threshold_db: float = -40.0,
                        min_gap_ms: float = 100.0) -> list[SilenceGap]:
    """Maximal runs of quiet frames lasting at least ``min_gap_ms``.

    ``energy_threshold_db`` is a frame RMS level in dBFS; frames strictly
    below it count as silent.
    """
    if frame_ms <= 0 or min_gap_ms < 0:
        raise ValueError("frame_ms must be positive and min_gap_ms nonnegative")
    flen = max(1, clip.ms_to_samples(frame_ms))
    quiet = frame_rms_db(clip.samples, flen) < energy_threshold_db
    n = len(clip)
    min_len = min_gap_ms * clip.sample_rate_hz / 1000.0
    gaps = []
    padded = np.concatenate(([False], quiet, [False])).astype(np.int8)
    edges = np.flatnonzero(np.diff(padded))
    for a, b in zip(edges[::2], edges[1::2]):
        start, end = a * flen, min(b * flen, n)
        if end - start >= min_len and end > start:
            gaps.append(SilenceGap(int(start), int(end)))
    return gaps
