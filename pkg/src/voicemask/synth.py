"""Synthetic test signals: periodic sources, formant vowels and toy "words".

None of this is speech, but it has the properties the pipeline relies on:
a pitch period, a spectral envelope, silence between words and reproducible
randomness. Every generator returns peak-normalized float arrays or clips.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import resample_poly

from .audio import AudioClip

# (F1, F2, F3) in Hz, rough adult-male values
VOWEL_FORMANTS = {
    "a": (730.0, 1090.0, 2440.0),
    "i": (270.0, 2290.0, 3010.0),
    "u": (300.0, 870.0, 2240.0),
    "e": (530.0, 1840.0, 2480.0),
    "o": (570.0, 840.0, 2410.0),
}


def _normalize(x: np.ndarray, peak: float) -> np.ndarray:
    m = np.max(np.abs(x))
    return x if m == 0 else x * (peak / m)


def sine(freq_hz: float, duration_s: float, sr: int = 16000, amp: float = 0.5) -> np.ndarray:
    t = np.arange(int(round(duration_s * sr))) / sr
    return amp * np.sin(2 * np.pi * freq_hz * t)


def sawtooth(f0_hz: float, duration_s: float, sr: int = 16000, amp: float = 0.5) -> np.ndarray:
    t = np.arange(int(round(duration_s * sr))) / sr
    phase = (f0_hz * t) % 1.0
    return amp * (2.0 * phase - 1.0)


def chirp(f_start: float, f_end: float, duration_s: float, sr: int = 16000,
          amp: float = 0.5) -> np.ndarray:
    """Linear-frequency sine sweep."""
    t = np.arange(int(round(duration_s * sr))) / sr
    k = (f_end - f_start) / duration_s
    return amp * np.sin(2 * np.pi * (f_start * t + 0.5 * k * t * t))


def white_noise(duration_s: float, sr: int = 16000, amp: float = 0.3, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return _normalize(rng.standard_normal(int(round(duration_s * sr))), amp)


def formant_gain(freqs_hz, formants, bandwidth_hz: float = 90.0) -> np.ndarray:
    """Magnitude response of a cascade of second-order resonances."""
    f = np.asarray(freqs_hz, dtype=np.float64)
    g = np.ones_like(f)
    for fc in formants:
        g = g / np.sqrt(1.0 + ((f * f - fc * fc) / (f * bandwidth_hz + 1e-9)) ** 2)
    return g


def vowel(f0_hz: float = 120.0, duration_s: float = 0.5, formants=VOWEL_FORMANTS["a"],
          sr: int = 16000, amp: float = 0.5, f0_jitter: float = 0.0, seed: int = 0) -> np.ndarray:
    """Additive-synthesis vowel: harmonics of f0 shaped by a formant envelope.

    ``f0_jitter`` adds a slow random f0 drift (fraction of f0).
    """
    n = int(round(duration_s * sr))
    t = np.arange(n) / sr
    if f0_jitter:
        rng = np.random.default_rng(seed)
        knots = rng.uniform(-f0_jitter, f0_jitter, size=max(2, int(duration_s * 8) + 2))
        drift = np.interp(np.linspace(0, knots.size - 1, n), np.arange(knots.size), knots)
        f0 = f0_hz * (1.0 + drift)
    else:
        f0 = np.full(n, float(f0_hz))
    phase = 2 * np.pi * np.cumsum(f0) / sr
    nyq = sr / 2
    out = np.zeros(n)
    for h in range(1, int(nyq / f0_hz)):
        fh = h * f0_hz
        if fh >= 0.95 * nyq:
            break
        out += formant_gain(fh, formants) * np.sin(h * phase) / np.sqrt(h)
    return _normalize(out, amp)


def spectral_centroid(samples, sr: int = 16000, nfft: int = 1024) -> float:
    """Magnitude-weighted mean frequency (Hz) over Hann frames with 50% overlap."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size < nfft:
        x = np.pad(x, (0, nfft - x.size))
    frames = np.lib.stride_tricks.sliding_window_view(x, nfft)[:: nfft // 2]
    mag = np.abs(np.fft.rfft(frames * np.hanning(nfft), axis=1)).sum(axis=0)
    f = np.fft.rfftfreq(nfft, 1.0 / sr)
    return float((f * mag).sum() / mag.sum())


# ---------------------------------------------------------------------------
# Toy words and utterances for keyword spotting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Phone:
    formants: tuple
    voiced: bool = True
    duration_s: float = 0.12
    seed: int = 0  # excitation seed for unvoiced phones, so re-renders match


def random_phone(rng: np.random.Generator) -> Phone:
    f1 = rng.uniform(250, 900)
    f2 = rng.uniform(max(f1 + 300, 800), 2600)
    f3 = rng.uniform(max(f2 + 300, 2300), 3800)
    return Phone((f1, f2, f3), voiced=bool(rng.random() < 0.8), duration_s=rng.uniform(0.08, 0.16),
                 seed=int(rng.integers(2 ** 31)))


def random_word(rng: np.random.Generator, n_phones: tuple = (3, 5)) -> tuple:
    return tuple(random_phone(rng) for _ in range(rng.integers(n_phones[0], n_phones[1] + 1)))


def render_phone(ph: Phone, sr: int, f0_hz: float, stretch: float) -> np.ndarray:
    dur = ph.duration_s * stretch
    n = int(round(dur * sr))
    if ph.voiced:
        x = vowel(f0_hz, dur, ph.formants, sr, amp=1.0)
    else:
        # fricative-ish: noise through the formant envelope
        spec = np.fft.rfft(np.random.default_rng(ph.seed).standard_normal(n))
        spec *= formant_gain(np.fft.rfftfreq(n, 1.0 / sr), ph.formants, 400.0)
        x = np.fft.irfft(spec, n)
    x = _normalize(x[:n], 1.0)
    ramp = min(n // 4, int(0.01 * sr))
    if ramp:
        env = np.ones(n)
        env[:ramp] = np.linspace(0, 1, ramp)
        env[-ramp:] = np.linspace(1, 0, ramp)
        x = x * env
    return x


def render_word(word: tuple, sr: int = 16000, f0_hz: float = 120.0, warp: float = 0.0,
                rng: np.random.Generator | None = None, amp: float = 0.5,
                per_phone: bool = False) -> np.ndarray:
    """Render a phone sequence.

    ``warp`` > 0 stretches the word by one factor drawn uniformly from
    [1 - warp, 1 + warp]; with ``per_phone`` every phone gets its own factor
    (a crude nonuniform time warp).
    """
    rng = rng or np.random.default_rng(0)
    s = 1.0 + (rng.uniform(-warp, warp) if warp else 0.0)
    parts = []
    for ph in word:
        if per_phone and warp:
            s = 1.0 + rng.uniform(-warp, warp)
        parts.append(render_phone(ph, sr, f0_hz, s))
    return _normalize(np.concatenate(parts), amp)


def add_noise(x: np.ndarray, snr_db: float, rng: np.random.Generator) -> np.ndarray:
    """Add white noise at the given SNR relative to the mean power of nonzero samples."""
    active = x[np.abs(x) > 1e-6]
    p_sig = np.mean(active ** 2) if active.size else 0.0
    sigma = np.sqrt(p_sig / (10 ** (snr_db / 10)))
    return x + sigma * rng.standard_normal(x.size)


@dataclass
class Utterance:
    clip: AudioClip
    keyword_spans: list  # (keyword index, start_s, end_s)


def build_utterance(keywords: list, fillers: list, sr: int = 16000, n_words: int = 6,
                    keyword_slots: list | None = None, warp: float = 0.1,
                    snr_db: float | None = 20.0, gap_s: tuple = (0.12, 0.25),
                    rng: np.random.Generator | None = None) -> Utterance:
    """Concatenate words with silent gaps; ``keyword_slots`` maps slot -> keyword index."""
    rng = rng or np.random.default_rng(0)
    slots = dict(keyword_slots or {})
    pieces = [np.zeros(int(rng.uniform(*gap_s) * sr))]
    spans = []
    pos = pieces[0].size
    for k in range(n_words):
        if k in slots:
            kw = slots[k]
            w = render_word(keywords[kw], sr, warp=warp, rng=rng)
            spans.append((kw, pos / sr, (pos + w.size) / sr))
        else:
            w = render_word(fillers[rng.integers(len(fillers))], sr, warp=warp, rng=rng)
        gap = np.zeros(int(rng.uniform(*gap_s) * sr))
        pieces += [w, gap]
        pos += w.size + gap.size
    x = np.concatenate(pieces)
    if snr_db is not None:
        x = add_noise(x, snr_db, rng)
    return Utterance(AudioClip.clipped(_normalize(x, 0.9), sr), spans)


@dataclass
class KeywordCorpus:
    keywords: list          # phone tuples
    fillers: list
    enrollment: list        # one AudioClip per keyword
    utterances: list        # Utterance objects


def keyword_corpus(n_keywords: int = 3, n_fillers: int = 20, n_utterances: int = 30,
                   snr_db: float = 20.0, warp: float = 0.1, keywords_per_utt: int = 1,
                   rng: np.random.Generator | None = None, sr: int = 16000) -> KeywordCorpus:
    """Random keywords and fillers, noisy enrollment takes and test utterances.

    Enrollment takes are recorded at the same SNR as the utterances; each
    keyword occurrence is the enrolled word with a uniform time stretch in
    [1 - warp, 1 + warp].
    """
    rng = rng or np.random.default_rng(0)
    kws = [random_word(rng) for _ in range(n_keywords)]
    fillers = [random_word(rng) for _ in range(n_fillers)]
    enroll = []
    for w in kws:
        x = render_word(w, sr)
        if snr_db is not None:
            x = add_noise(x, snr_db, rng)
        enroll.append(AudioClip.clipped(x, sr))
    utts = [make_keyword_utterance(kws, fillers, keywords_per_utt, snr_db, warp, rng, sr)
            for _ in range(n_utterances)]
    return KeywordCorpus(kws, fillers, enroll, utts)


def make_keyword_utterance(keywords: list, fillers: list, n_keywords: int = 1,
                           snr_db: float | None = 20.0, warp: float = 0.1,
                           rng: np.random.Generator | None = None, sr: int = 16000,
                           n_words: int = 6) -> Utterance:
    rng = rng or np.random.default_rng(0)
    slots = rng.choice(n_words, size=n_keywords, replace=False)
    which = rng.integers(len(keywords), size=n_keywords)
    return build_utterance(keywords, fillers, sr, n_words,
                           {int(s): int(k) for s, k in zip(slots, which)},
                           warp=warp, snr_db=snr_db, rng=rng)


def resample(x: np.ndarray, sr_from: int, sr_to: int) -> np.ndarray:
    if sr_from == sr_to:
        return np.asarray(x, dtype=np.float64)
    g = np.gcd(sr_from, sr_to)
    return resample_poly(x, sr_to // g, sr_from // g)
