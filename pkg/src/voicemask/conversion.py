"""VTLN voice conversion: per-frame spectral warping inside a PSOLA loop.

Pipeline for one clip: pitch marks -> pitch-synchronous frames -> FFT ->
frequency warp -> IFFT -> overlap-add. ``convert_voice_segmented`` cuts the
clip at silent gaps into randomly sized pieces and converts each piece with
its own random warp.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import warp as W
from .audio import (AudioClip, Spectrum, detect_silence_gaps, fft_frame,
                    ifft_frame, is_power_of_two, next_power_of_two, stft)
from .pitch import MIN_CLIP_MS, mark_pitch, psola_resynthesize, segment_frames

DEFAULT_FFT_SIZE = 512
CROSSFADE_MS = 5.0
GAP_FRAME_MS = 10.0
GAP_THRESHOLD_DB = -40.0
GAP_MIN_MS = 50.0


class SegmentationWarning(UserWarning):
    pass


# ---------------------------------------------------------------------------
# spectral warping
# ---------------------------------------------------------------------------

@lru_cache(maxsize=256)
def _source_positions(kind, nbins: int) -> np.ndarray:
    omegas = np.pi * np.arange(nbins) / (nbins - 1)
    src = np.asarray(kind.inverse(omegas)) * (nbins - 1) / np.pi
    return np.clip(src, 0.0, nbins - 1)


def warp_bins(bins: np.ndarray, kind) -> np.ndarray:
    if kind.is_identity:
        return np.array(bins, copy=True)
    nbins = bins.size
    src = _source_positions(kind, nbins)
    idx = np.arange(nbins)
    out = np.interp(src, idx, bins.real) + 1j * np.interp(src, idx, bins.imag)
    out[0] = bins[0]
    out[-1] = bins[-1]
    return out


def warp_spectrum(spec: Spectrum, kind) -> Spectrum:
    """Move spectral content along the frequency axis according to ``kind``.

    Output bin at frequency w' reads the input at ``kind.inverse(w')`` with
    linear interpolation of the real and imaginary parts. DC and Nyquist are
    copied unchanged.
    """
    return Spectrum(warp_bins(spec.bins, kind), spec.fft_size, spec.sample_rate_hz)


# ---------------------------------------------------------------------------
# single-warp conversion
# ---------------------------------------------------------------------------

def warp_frame(samples: np.ndarray, kind, fft_size: int, sr: int) -> np.ndarray:
    L = samples.size
    n = max(fft_size, next_power_of_two(L))
    half = L // 2
    # zero-phase layout: the pitch mark (frame centre) sits at index 0
    buf = np.zeros(n)
    buf[: L - half] = samples[half:]
    buf[n - half :] = samples[:half]
    y = ifft_frame(warp_spectrum(fft_frame(buf, sr), kind))
    return np.concatenate((y[n - half :], y[: L - half]))


def convert_voice(clip: AudioClip, kind, fft_size: int = DEFAULT_FFT_SIZE) -> AudioClip:
    """Convert ``clip`` with a single warp; the sample count is preserved.

    Frames longer than ``fft_size`` (pitch below ~31 Hz x fft_size/1000)
    are transformed at the next power of two instead.
    """
    if not is_power_of_two(fft_size):
        raise ValueError("fft_size must be a power of two")
    marks = mark_pitch(clip)
    frames = segment_frames(clip, marks)
    sr = clip.sample_rate_hz
    warped = [fr.with_samples(warp_frame(fr.samples, kind, fft_size, sr)) for fr in frames]
    return psola_resynthesize(warped, marks, len(clip), sr)


def attack_reverse(clip_converted: AudioClip, alpha: float,
                   fft_size: int = DEFAULT_FFT_SIZE) -> AudioClip:
    """Undo a known fixed bilinear conversion by converting with -alpha."""
    return convert_voice(clip_converted, W.Bilinear(-alpha), fft_size)


def spectral_log_distance(a: AudioClip, b: AudioClip, window_ms: float = 25.0,
                          hop_ms: float = 10.0, active_db: float = -50.0) -> float:
    """Mean per-frame RMS difference (dB) of log spectra.

    Only frames where ``a`` has some bin above ``active_db`` are scored, so
    silences don't dilute the measure.
    """
    fa = stft(a, window_ms, hop_ms).rows
    fb = stft(b, window_ms, hop_ms).rows
    n = min(len(fa), len(fb))
    fa, fb = fa[:n], fb[:n]
    active = fa.max(axis=1) > active_db
    if not np.any(active):
        active[:] = True
    d = np.sqrt(np.mean((fa[active] - fb[active]) ** 2, axis=1))
    return float(d.mean())


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class ConversionConfig:
    band: W.DistortionBand = field(default_factory=W.DistortionBand)
    kind_policy: W.KindPolicy = W.KindPolicy.COMPOUND_ONLY
    rng_seed: int = 0
    fft_size: int = DEFAULT_FFT_SIZE
    segment_randomization: bool = False
    segment_len_range_ms: tuple = (300.0, 1500.0)

    def __post_init__(self):
        self.kind_policy = W.KindPolicy(self.kind_policy)
        lo, hi = (float(v) for v in self.segment_len_range_ms)
        if not lo < hi:
            raise ValueError("segment_len_range_ms needs min < max")
        if lo < MIN_CLIP_MS:
            raise ValueError(f"segments shorter than {MIN_CLIP_MS:.0f} ms cannot be pitch-marked")
        self.segment_len_range_ms = (lo, hi)
        if not (is_power_of_two(self.fft_size) and self.fft_size >= 256):
            raise ValueError("fft_size must be a power of two >= 256")
        if not 0 <= int(self.rng_seed) < 2 ** 64:
            raise ValueError("rng_seed must fit in 64 bits")

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(int(self.rng_seed))

    def to_dict(self) -> dict:
        return {
            "band_lo": self.band.lo,
            "band_hi": self.band.hi,
            "direction": self.band.direction.value,
            "policy": self.kind_policy.value,
            "seed": int(self.rng_seed),
            "fft_size": self.fft_size,
            "segment_randomization": self.segment_randomization,
            "segment_len_range_ms": list(self.segment_len_range_ms),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "ConversionConfig":
        default = cls()
        return cls(
            band=W.DistortionBand(d.get("band_lo", 0.32), d.get("band_hi", 0.40),
                                  d.get("direction", "sharpen")),
            kind_policy=d.get("policy", default.kind_policy.value),
            rng_seed=int(d.get("seed", 0)),
            fft_size=int(d.get("fft_size", DEFAULT_FFT_SIZE)),
            segment_randomization=bool(d.get("segment_randomization", False)),
            segment_len_range_ms=tuple(d.get("segment_len_range_ms", default.segment_len_range_ms)),
        )

    @classmethod
    def from_json(cls, text: str) -> "ConversionConfig":
        return cls.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# segment-randomized conversion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Segment:
    start: int
    end: int
    kind: object

    def to_dict(self) -> dict:
        return {"start": self.start, "end": self.end, **W.kind_to_dict(self.kind)}


def plan_segments(clip: AudioClip, config: ConversionConfig,
                  rng: np.random.Generator | None = None) -> list[Segment]:
    """Choose cut points (midpoints of silent gaps) and one random warp per piece."""
    rng = config.rng() if rng is None else rng
    sr = clip.sample_rate_hz
    n = len(clip)
    min_tail = int(np.ceil(MIN_CLIP_MS * sr / 1000))
    gaps = detect_silence_gaps(clip, GAP_FRAME_MS, GAP_THRESHOLD_DB, GAP_MIN_MS)
    mids = np.array([g.midpoint for g in gaps if g.start_sample > 0 and g.end_sample < n],
                    dtype=np.int64)
    if mids.size == 0:
        warnings.warn("no silent gaps found; converting the clip as one segment",
                      SegmentationWarning, stacklevel=2)
    lo_ms, hi_ms = config.segment_len_range_ms
    lo = int(round(lo_ms * sr / 1000))
    cuts = []
    cur = 0
    while True:
        target = cur + rng.uniform(lo_ms, hi_ms) * sr / 1000
        ok = mids[(mids - cur >= lo) & (mids <= n - min_tail)]
        if ok.size == 0:
            break
        c = int(ok[np.argmin(np.abs(ok - target))])
        cuts.append(c)
        cur = c
    bounds = [0] + cuts + [n]
    return [Segment(a, b, W.sample_warp_params(config.band, config.kind_policy, rng))
            for a, b in zip(bounds[:-1], bounds[1:])]


def convert_voice_segmented(clip: AudioClip, config: ConversionConfig,
                            plan: list[Segment] | None = None) -> AudioClip:
    """Convert each planned segment independently and stitch with short crossfades."""
    if not config.segment_randomization:
        raise ValueError("config.segment_randomization is off")
    plan = plan_segments(clip, config) if plan is None else plan
    sr = clip.sample_rate_hz
    n = len(clip)
    x = clip.samples
    xf = max(2, int(round(CROSSFADE_MS * sr / 1000)))
    h = xf // 2
    out = np.zeros(n)
    for i, seg in enumerate(plan):
        a = max(0, seg.start - xf)
        b = min(n, seg.end + xf)
        y = convert_voice(AudioClip(x[a:b], sr), seg.kind, config.fft_size).samples
        w = np.zeros(b - a)
        lo, hi = seg.start - a, seg.end - a
        w[lo:hi] = 1.0
        if i > 0:  # fade in across [start - h, start + h)
            ramp = (np.arange(2 * h) + 0.5) / (2 * h)
            w[lo - h : lo + h] = ramp
        if i < len(plan) - 1:
            ramp = 1.0 - (np.arange(2 * h) + 0.5) / (2 * h)
            w[hi - h : hi + h] = ramp
        out[a:b] += w * y
    return AudioClip(np.clip(out, -1.0, 1.0), sr)


def sanitize_voice(clip: AudioClip, config: ConversionConfig,
                   rng: np.random.Generator | None = None) -> tuple[AudioClip, list[Segment]]:
    """Apply the configured randomized conversion; returns the clip and the parameter log."""
    rng = config.rng() if rng is None else rng
    if config.segment_randomization:
        plan = plan_segments(clip, config, rng)
        return convert_voice_segmented(clip, config, plan), plan
    kind = W.sample_warp_params(config.band, config.kind_policy, rng)
    return convert_voice(clip, kind, config.fft_size), [Segment(0, len(clip), kind)]
