"""Pitch marking, pitch-synchronous framing and PSOLA overlap-add.

F0 comes from a normalized cross-correlation (NCCF) over 40 ms windows every
10 ms. Voiced stretches get one mark per period, snapped to the waveform
maximum inside +/-20% of the predicted position; unvoiced stretches get a
mark every 10 ms. Frames are two local periods long (20 ms when unvoiced),
Hann-weighted and centred on their mark. Resynthesis is weighted overlap-add
at the original marks, so duration and pitch are unchanged.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.ndimage import median_filter

from .audio import AudioClip

F0_MIN_HZ = 60.0
F0_MAX_HZ = 400.0
ANALYSIS_WINDOW_MS = 40.0
ANALYSIS_HOP_MS = 10.0
VOICING_THRESHOLD = 0.3
UNVOICED_STEP_MS = 10.0
UNVOICED_FRAME_MS = 20.0
MIN_CLIP_MS = 50.0
SEARCH_TOLERANCE = 0.2
ENVELOPE_FLOOR = 1e-6
# frames quieter than this (RMS, linear) are never voiced
_SILENCE_RMS = 1e-4


@dataclass(frozen=True, eq=False)
class PitchMarks:
    positions: np.ndarray
    voiced: np.ndarray
    f0_track: np.ndarray
    num_samples: int
    sample_rate_hz: int = 16000

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.int64)
        voiced = np.asarray(self.voiced, dtype=bool)
        f0 = np.asarray(self.f0_track, dtype=np.float64)
        if not (pos.shape == voiced.shape == f0.shape) or pos.ndim != 1:
            raise ValueError("positions, voiced and f0_track must be equal-length 1-D")
        if pos.size and (pos[0] < 0 or pos[-1] >= self.num_samples or np.any(np.diff(pos) <= 0)):
            raise ValueError("mark positions must be strictly increasing and inside the clip")
        if np.any(f0[~voiced] != 0):
            raise ValueError("unvoiced marks must carry f0 = 0")
        v = f0[voiced]
        if np.any((v < F0_MIN_HZ - 1e-9) | (v > F0_MAX_HZ + 1e-9)):
            raise ValueError("voiced f0 outside [60, 400] Hz")
        for name, arr in (("positions", pos), ("voiced", voiced), ("f0_track", f0)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.positions.size

    def period(self, i: int) -> int:
        """Local period in samples for a voiced mark."""
        return int(round(self.sample_rate_hz / self.f0_track[i]))


@dataclass(frozen=True, eq=False)
class AnalysisFrame:
    center_mark_index: int
    center: int
    start: int
    samples: np.ndarray
    window: np.ndarray

    def __len__(self) -> int:
        return self.samples.size

    def with_samples(self, samples) -> "AnalysisFrame":
        s = np.asarray(samples, dtype=np.float64)
        if s.shape != self.window.shape:
            raise ValueError("replacement frame has the wrong length")
        return replace(self, samples=s)


def hann(n: int) -> np.ndarray:
    """Periodic Hann window; value 1 at index n/2, sums to 1 at hop n/2."""
    return 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)


# ---------------------------------------------------------------------------
# F0 estimation
# ---------------------------------------------------------------------------

def nccf_frames(x: np.ndarray, sr: int, win: int, hop: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Normalized cross-correlation of every analysis frame.

    Returns ``(centers, lags, r)`` with ``r[i, j]`` the NCCF of frame ``i``
    at lag ``lags[j]``.
    """
    lag_min = int(np.floor(sr / F0_MAX_HZ))
    lag_max = int(np.ceil(sr / F0_MIN_HZ))
    half = win // 2
    padded = np.pad(x, (half, half + hop))
    centers = np.arange(0, x.size, hop)
    frames = np.lib.stride_tricks.sliding_window_view(padded, win)[centers]
    nfft = 1 << (2 * win - 1).bit_length()
    spec = np.fft.rfft(frames, n=nfft, axis=1)
    acf = np.fft.irfft(spec * np.conj(spec), n=nfft, axis=1)[:, : win]
    cs = np.concatenate([np.zeros((frames.shape[0], 1)), np.cumsum(frames ** 2, axis=1)], axis=1)
    lags = np.arange(lag_min, lag_max + 1)
    e_head = cs[:, win - lags]
    e_tail = cs[:, [win]] - cs[:, lags]
    r = acf[:, lags] / np.sqrt(e_head * e_tail + 1e-20)
    return centers, lags, r


def estimate_f0(clip: AudioClip) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Frame-wise F0 track: ``(frame_centers, period_samples, voiced)``.

    Unvoiced frames carry period 0.
    """
    sr = clip.sample_rate_hz
    x = clip.samples
    win = int(round(ANALYSIS_WINDOW_MS * sr / 1000))
    hop = int(round(ANALYSIS_HOP_MS * sr / 1000))
    centers, lags, r = nccf_frames(x, sr, win, hop)
    nf = centers.size
    period = np.zeros(nf)
    strength = r.max(axis=1)

    # choose the shortest lag that is a local peak within 10% of the best
    # (keeps 2T, 3T from winning over T)
    interior = np.zeros_like(r, dtype=bool)
    interior[:, 1:-1] = (r[:, 1:-1] >= r[:, :-2]) & (r[:, 1:-1] >= r[:, 2:])
    good = interior & (r >= 0.9 * strength[:, None])
    for i in range(nf):
        idx = np.flatnonzero(good[i])
        j = idx[0] if idx.size else int(np.argmax(r[i]))
        tau = float(lags[j])
        if 0 < j < lags.size - 1:
            a, b, c = r[i, j - 1], r[i, j], r[i, j + 1]
            den = a - 2 * b + c
            if den < 0:
                tau += 0.5 * (a - c) / den
        period[i] = tau

    half = win // 2
    padded = np.pad(x, (half, half))
    rms = np.sqrt(np.lib.stride_tricks.sliding_window_view(padded ** 2, win)[centers].mean(axis=1))
    voiced = (strength >= VOICING_THRESHOLD) & (rms > _SILENCE_RMS)
    if nf >= 3:
        voiced = median_filter(voiced.astype(np.int8), size=3, mode="nearest").astype(bool)
        smoothed = median_filter(period, size=3, mode="nearest")
        period = np.where(voiced, smoothed, period)
    period = np.clip(period, sr / F0_MAX_HZ, sr / F0_MIN_HZ)
    period[~voiced] = 0.0
    return centers, period, voiced


def mark_pitch(clip: AudioClip) -> PitchMarks:
    """Place pitch marks over the whole clip."""
    sr = clip.sample_rate_hz
    n = len(clip)
    if n < MIN_CLIP_MS * sr / 1000:
        raise ValueError(f"clip shorter than {MIN_CLIP_MS:.0f} ms")
    x = clip.samples
    centers, period, voiced = estimate_f0(clip)
    hop = centers[1] - centers[0] if centers.size > 1 else n
    step = int(round(UNVOICED_STEP_MS * sr / 1000))

    vidx = np.flatnonzero(voiced)

    def frame_of(pos):
        return min(int(round(pos / hop)), centers.size - 1)

    def period_at(pos):
        # interpolate across voiced frames only
        return float(np.interp(pos, centers[vidx], period[vidx]))

    positions, flags, f0s = [], [], []
    last = -1
    last_voiced = False
    cand = 0
    while cand < n:
        if voiced[frame_of(cand)]:
            T = period_at(cand)
            if last_voiced:
                lo, hi = cand - SEARCH_TOLERANCE * T, cand + SEARCH_TOLERANCE * T
            else:
                lo, hi = cand, cand + T
            lo = max(int(np.ceil(lo)), last + 1)
            hi = min(int(np.floor(hi)), n - 1)
            if lo > hi:
                break
            m = lo + int(np.argmax(x[lo : hi + 1]))
            positions.append(m)
            flags.append(True)
            f0s.append(sr / T)
            last, last_voiced = m, True
            cand = m + int(round(period_at(m)))
        else:
            if cand <= last:
                cand = last + 1
            positions.append(cand)
            flags.append(False)
            f0s.append(0.0)
            last, last_voiced = cand, False
            cand += step
    return PitchMarks(np.array(positions, dtype=np.int64), np.array(flags, dtype=bool),
                      np.array(f0s), n, sr)


# ---------------------------------------------------------------------------
# Framing and overlap-add
# ---------------------------------------------------------------------------

def frame_length(marks: PitchMarks, i: int) -> int:
    if marks.voiced[i]:
        return 2 * marks.period(i)
    return 2 * int(round(UNVOICED_FRAME_MS * marks.sample_rate_hz / 2000))


def segment_frames(clip: AudioClip, marks: PitchMarks) -> list[AnalysisFrame]:
    """One Hann-weighted frame per mark, centred on the mark.

    Frame ``i`` spans ``[pos - L/2, pos + L/2)`` with ``L`` twice the local
    period (20 ms if unvoiced); parts outside the clip read as zeros.
    """
    if marks.num_samples != len(clip):
        raise ValueError("marks were computed for a clip of different length")
    x = clip.samples
    n = x.size
    frames = []
    for i, pos in enumerate(marks.positions):
        L = frame_length(marks, i)
        start = int(pos) - L // 2
        seg = np.zeros(L)
        a, b = max(start, 0), min(start + L, n)
        seg[a - start : b - start] = x[a:b]
        w = hann(L)
        frames.append(AnalysisFrame(i, int(pos), start, seg * w, w))
    return frames


def psola_resynthesize(frames: list[AnalysisFrame], marks: PitchMarks, out_len: int,
                       sample_rate_hz: int | None = None) -> AudioClip:
    """Weighted overlap-add of ``frames`` at their original mark positions.

    Each frame is multiplied by its window once more, summed, and the sum is
    divided by the accumulated squared-window envelope (floored at 1e-6).
    """
    if len(frames) != len(marks):
        raise ValueError(f"{len(frames)} frames for {len(marks)} marks")
    if out_len != marks.num_samples:
        raise ValueError("out_len must equal the source length")
    acc = np.zeros(out_len)
    env = np.zeros(out_len)
    for fr in frames:
        if fr.center != marks.positions[fr.center_mark_index]:
            raise ValueError("frame does not sit on its pitch mark")
        L = fr.samples.size
        a, b = max(fr.start, 0), min(fr.start + L, out_len)
        if a >= b:
            continue
        sl = slice(a - fr.start, b - fr.start)
        acc[a:b] += fr.samples[sl] * fr.window[sl]
        env[a:b] += fr.window[sl] ** 2
    y = acc / np.maximum(env, ENVELOPE_FLOOR)
    return AudioClip(np.clip(y, -1.0, 1.0), sample_rate_hz or marks.sample_rate_hz)


def psola_identity(clip: AudioClip) -> AudioClip:
    """Round trip through pitch marking and resynthesis with no spectral change."""
    marks = mark_pitch(clip)
    return psola_resynthesize(segment_frames(clip, marks), marks, len(clip), clip.sample_rate_hz)
