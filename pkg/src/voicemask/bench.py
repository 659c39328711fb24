"""Per-stage CPU cost of sanitization, as a realtime coefficient.

Stages follow the processing chain: pitch marking, the remaining conversion
steps (framing, FFT, warp, IFFT, overlap-add), keyword spotting (STFT plus
the template scan) and safeword substitution. Each stage is timed with
process CPU time; short stages are looped until a minimum measurable budget
is reached and the per-call time taken, and the median of several repeats is
reported.
"""
from __future__ import annotations

import json
import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from .audio import AudioClip, stft
from .conversion import ConversionConfig, warp_frame
from .keywords import SpotterConfig, spot_keywords, substitute_keywords
from .pitch import mark_pitch, psola_resynthesize, segment_frames
from .warp import sample_warp_params

STAGES = ("pitch_marking", "voice_conversion", "keyword_spotting", "substitution")
# published per-stage coefficients on a desktop machine, reported for comparison only
REFERENCE_COEFFICIENTS = {"pitch_marking": 0.35, "voice_conversion": 0.07, "keyword_spotting": 0.56,
                          "substitution": 0.04, "total": 1.02}
MIN_BUDGET_S = 0.05


@dataclass
class BenchReport:
    audio_duration_s: float
    cpu_time_s: dict = field(default_factory=dict)

    @property
    def realtime_coefficient(self) -> dict:
        rc = {k: v / self.audio_duration_s for k, v in self.cpu_time_s.items()}
        rc["total"] = sum(self.cpu_time_s.values()) / self.audio_duration_s
        return rc

    def to_dict(self) -> dict:
        cpu = dict(self.cpu_time_s)
        cpu["total"] = sum(self.cpu_time_s.values())
        return {"audio_duration_s": self.audio_duration_s, "cpu_time_s": cpu,
                "realtime_coefficient": self.realtime_coefficient,
                "reference_coefficients": REFERENCE_COEFFICIENTS}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def cpu_time(fn, repeats: int = 5, min_budget_s: float = MIN_BUDGET_S) -> float:
    """Median per-call CPU seconds of ``fn()``."""
    # calibrate the loop count so one repeat lasts at least min_budget_s
    number = 1
    while True:
        t0 = time.process_time()
        for _ in range(number):
            fn()
        dt = time.process_time() - t0
        if dt >= min_budget_s or number >= 1 << 16:
            break
        number *= 2
    samples = [dt / number]
    for _ in range(repeats - 1):
        t0 = time.process_time()
        for _ in range(number):
            fn()
        samples.append((time.process_time() - t0) / number)
    return statistics.median(samples)


def benchmark(clip: AudioClip, config: ConversionConfig | None = None, templates=(),
              keyword_categories: dict | None = None, bank=None,
              spotter: SpotterConfig = SpotterConfig(), repeats: int = 5,
              labels: dict | None = None, min_budget_s: float = MIN_BUDGET_S) -> BenchReport:
    """Time every stage on ``clip``.

    Substitution is timed on the detections the spotting stage produced; with
    no templates or no bank that stage costs zero.
    """
    config = config or ConversionConfig()
    rng = config.rng()
    kind = sample_warp_params(config.band, config.kind_policy, rng)
    sr = clip.sample_rate_hz
    marks = mark_pitch(clip)

    def vc_rest():
        frames = segment_frames(clip, marks)
        warped = [fr.with_samples(warp_frame(fr.samples, kind, config.fft_size, sr))
                  for fr in frames]
        psola_resynthesize(warped, marks, len(clip), sr)

    templates = list(templates)

    def spotting():
        return spot_keywords(stft(clip), templates, spotter) if templates else []

    dets = spotting()
    cats = keyword_categories or {}

    def substitution():
        if dets and bank is not None:
            substitute_keywords(clip, dets, cats, bank, np.random.default_rng(0), labels=labels)

    def timed(fn):
        return cpu_time(fn, repeats, min_budget_s)

    cpu = {
        "pitch_marking": timed(lambda: mark_pitch(clip)),
        "voice_conversion": timed(vc_rest),
        "keyword_spotting": timed(spotting) if templates else 0.0,
        "substitution": timed(substitution) if dets and bank is not None else 0.0,
    }
    return BenchReport(clip.duration_s, cpu)
