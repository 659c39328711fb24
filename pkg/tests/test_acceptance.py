"""Acceptance criteria for the primary components.

Every test prints one ``PASS``/``FAIL`` line with its measured numbers, then
asserts the criterion at its stated tolerance.
"""
import math
import time

import numpy as np
import pytest
from scipy import integrate
from scipy.stats import pearsonr, ttest_rel

from voicemask import keywords as K
from voicemask import praka, synth
from voicemask import warp as W
from voicemask.audio import AudioClip, stft
from voicemask.bench import REFERENCE_COEFFICIENTS, STAGES, benchmark
from voicemask.conversion import (ConversionConfig, attack_reverse, convert_voice,
                                  sanitize_voice, spectral_log_distance)
from voicemask.pitch import psola_identity


@pytest.fixture()
def verdict(capsys):
    def emit(name, ok, detail=""):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        return ok
    return emit


def bilinear_oracle(w, a):
    return w + 2.0 * np.arctan2(a * np.sin(w), 1.0 - a * np.cos(w))


def quad_distortion(fn):
    return integrate.quad(lambda w: abs(fn(w) - w), 0.0, math.pi, limit=200)[0]


def snr_db(ref, out, edge):
    r, o = ref[edge:-edge], out[edge:-edge]
    return 10 * np.log10(np.sum(r ** 2) / max(np.sum((r - o) ** 2), 1e-300))


def test_distortion_anchors(verdict):
    t0 = time.perf_counter()
    d08 = W.distortion_strength(W.Bilinear(0.08))
    d10 = W.distortion_strength(W.Bilinear(0.10))
    dt = time.perf_counter() - t0
    ok = abs(d08 - 0.32) <= 0.005 and abs(d10 - 0.40) <= 0.005 and dt < 1
    verdict("distortion anchors", ok, f"dist(0.08)={d08:.5f} dist(0.10)={d10:.5f} in {dt:.3f}s")
    assert ok


def test_quadratic_closed_form(verdict):
    t0 = time.perf_counter()
    errs = [abs(W.distortion_strength(W.Quadratic(b)) - abs(b) * math.pi / 6)
            for b in (0.05, 0.1, 0.3)]
    dt = time.perf_counter() - t0
    ok = max(errs) < 1e-6 and dt < 1
    verdict("quadratic closed form", ok, f"max error {max(errs):.2e} in {dt:.3f}s")
    assert ok


def test_warp_algebra(verdict):
    t0 = time.perf_counter()
    grid = np.linspace(0.0, math.pi, 1024)
    alphas = np.linspace(-0.3, 0.3, 25)
    worst_inv = worst_comp = worst_end = 0.0
    monotone = True
    for a in alphas:
        y = W.warp_bilinear(grid, a)
        worst_end = max(worst_end, abs(y[0]), abs(y[-1] - math.pi))
        monotone &= bool(np.all(np.diff(y) > 0))
        worst_inv = max(worst_inv, np.max(np.abs(W.inverse_warp(W.Bilinear(a), y) - grid)))
        for b in alphas[::4]:
            c = W.compose_bilinear(a, b)
            lhs = W.warp_bilinear(W.warp_bilinear(grid, a), b)
            worst_comp = max(worst_comp, np.max(np.abs(lhs - W.warp_bilinear(grid, c))))
    for k in (W.Quadratic(0.3), W.Quadratic(-0.2), W.Compound(0.08, 0.3), W.Compound(-0.1, -0.4)):
        y = k(grid)
        worst_end = max(worst_end, abs(y[0]), abs(y[-1] - math.pi))
        monotone &= bool(np.all(np.diff(y) > 0))
        worst_inv = max(worst_inv, np.max(np.abs(k.inverse(y) - grid)))
    dt = time.perf_counter() - t0
    ok = worst_end < 1e-12 and monotone and worst_inv < 1e-9 and worst_comp < 1e-9 and dt < 5
    verdict("warp algebra", ok, f"endpoints {worst_end:.1e}, monotone={monotone}, "
            f"inverse {worst_inv:.1e}, composition {worst_comp:.1e}, {dt:.2f}s")
    assert ok


@pytest.mark.parametrize("direction", ["sharpen", "deepen"])
def test_sampler_soundness(verdict, direction):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    band = W.DistortionBand(0.32, 0.40, direction)
    s = band.direction.sign
    lo = hi = None
    signs_ok = True
    for _ in range(1000):
        k = W.sample_warp_params(band, W.KindPolicy.COMPOUND_ONLY, rng)
        signs_ok &= np.sign(k.alpha) == s and np.sign(k.beta) == s

        def f(w, a=k.alpha, b=k.beta):
            u = bilinear_oracle(w, a)
            return u + b * u * (math.pi - u) / math.pi ** 2

        d = quad_distortion(f)
        lo = d if lo is None else min(lo, d)
        hi = d if hi is None else max(hi, d)
    dt = time.perf_counter() - t0
    ok = 0.32 <= lo and hi <= 0.40 and signs_ok and dt < 30
    verdict(f"sampler soundness ({direction})", ok,
            f"quad dist range [{lo:.4f}, {hi:.4f}], signs ok={signs_ok}, {dt:.1f}s")
    assert ok


def test_attack_demonstrations(verdict):
    t0 = time.perf_counter()
    clip = AudioClip(synth.vowel(120.0, 1.0, f0_jitter=0.02, seed=3))
    alpha = 0.09
    conv = convert_voice(clip, W.Bilinear(alpha))
    d_conv = spectral_log_distance(clip, conv)
    d_rev = spectral_log_distance(clip, attack_reverse(conv, alpha))
    grid = W.default_search_grid()
    r_comp = W.attack_reduce_residual(W.Compound(0.06, 0.25), grid)
    r_self = W.attack_reduce_residual(W.Bilinear(alpha), grid)
    # an off-grid alpha on a finer grid, so the bilinear side is not trivially zero
    fine = W.default_search_grid(1e-4)
    r_off = W.attack_reduce_residual(W.Bilinear(0.09053), fine)
    r_comp_fine = W.attack_reduce_residual(W.Compound(0.06, 0.25), fine)
    dt = time.perf_counter() - t0
    ok_a = d_rev <= 0.5 * d_conv
    ok_b = r_comp > 10 * r_self and r_comp_fine > 10 * r_off
    ok = ok_a and ok_b and dt < 60
    verdict("attack demonstrations", ok,
            f"reverse {d_conv:.2f} dB -> {d_rev:.2f} dB; reduce residual compound {r_comp:.5f} "
            f"vs bilinear self {r_self:.1e}; fine grid {r_comp_fine:.5f} vs off-grid bilinear "
            f"{r_off:.1e}, {dt:.1f}s")
    assert ok


def test_reconstruction_quality(verdict):
    t0 = time.perf_counter()
    worst_id = math.inf
    worst_gap = math.inf
    for f0 in (80, 120, 160, 200, 250, 300):
        for x in (synth.sawtooth(f0, 0.6), synth.vowel(f0, 0.6, f0_jitter=0.02, seed=f0)):
            clip = AudioClip(x)
            base = psola_identity(clip).samples
            worst_id = min(worst_id, snr_db(x, base, 400))
            worst_gap = min(worst_gap, snr_db(base, convert_voice(clip, W.IDENTITY).samples, 400))
    dt = time.perf_counter() - t0
    ok = worst_id >= 20 and worst_gap >= 40 and dt < 30
    verdict("reconstruction quality", ok, f"worst identity SNR {worst_id:.1f} dB, worst "
            f"identity-warp vs baseline {worst_gap:.1f} dB, {dt:.1f}s")
    assert ok


def test_directional_conversion(verdict):
    clip = AudioClip(synth.vowel(120.0, 0.8, f0_jitter=0.02, seed=5))
    alphas = [0.02, 0.04, 0.06, 0.08, 0.10]
    up = [synth.spectral_centroid(convert_voice(clip, W.Bilinear(a)).samples) for a in alphas]
    down = [synth.spectral_centroid(convert_voice(clip, W.Bilinear(-a)).samples)
            for a in alphas]
    c0 = synth.spectral_centroid(psola_identity(clip).samples)
    ok = bool(np.all(np.diff([c0] + up) > 0) and np.all(np.diff([c0] + down) < 0))
    verdict("directional conversion", ok, "centroids sharpen " +
            " ".join(f"{c:.0f}" for c in [c0] + up) + " Hz, deepen " +
            " ".join(f"{c:.0f}" for c in [c0] + down) + " Hz")
    assert ok


def _true_segment(u, feats):
    _, s, e = u.keyword_spans[0]
    a, b = int(round(s * 100)), int(round(e * 100))
    return feats.with_rows(feats.rows[a:b]), s, e, a, b - a


@pytest.mark.slow
def test_dtw_and_evolution(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(77)
    x = stft(AudioClip(synth.render_word(synth.random_word(rng))))
    zero = max(K.dtw_distance(x, x.with_rows(np.repeat(x.rows, r, axis=0)))[0] for r in (1, 2, 3))
    before, after = [], []
    for seed in range(20):
        c = synth.keyword_corpus(n_keywords=1, n_fillers=5, n_utterances=10,
                                 rng=np.random.default_rng(1000 + seed))
        t_init = K.enroll_keyword("kw0", c.enrollment[0])
        t = t_init
        for u in c.utterances[:5]:
            feats = stft(u.clip)
            _, s, e, a, m = _true_segment(u, feats)
            t = K.confirm_hit(t, feats, K.Detection("kw0", s, e, 0.0, a, m))
        held = [_true_segment(u, stft(u.clip))[0] for u in c.utterances[5:]]
        before.append(np.mean([K.dtw_distance(t_init.x, h)[0] for h in held]))
        after.append(np.mean([K.dtw_distance(t.x, h)[0] for h in held]))
    test = ttest_rel(after, before, alternative="less")
    dt = time.perf_counter() - t0
    ok = zero < 1e-12 and np.mean(after) < np.mean(before) and test.pvalue < 0.05 and dt < 120
    verdict("dtw and evolution", ok,
            f"stretched-copy distance {zero:.1e}; held-out {np.mean(before):.4f} -> "
            f"{np.mean(after):.4f} over 20 corpora, paired p={test.pvalue:.1e}, {dt:.1f}s")
    assert ok


def _spot_stats(corpus, templates, thetas):
    """hits, false alarms and total true occurrences at each theta, plus audio minutes."""
    hits = np.zeros(len(thetas), dtype=int)
    fas = np.zeros(len(thetas), dtype=int)
    total = 0
    minutes = 0.0
    for u in corpus:
        feats = stft(u.clip)
        scored = K.score_spans(feats, templates)
        truth = [(f"kw{k}", s, e) for k, s, e in u.keyword_spans]
        total += len(truth)
        minutes += u.clip.duration_s / 60
        for i, th in enumerate(thetas):
            h, f = K.match_detections(K.select_detections(feats, scored, th), truth)
            hits[i] += h
            fas[i] += f
    return hits / total, fas / minutes


@pytest.mark.slow
def test_spotting_surrogate(verdict):
    c = synth.keyword_corpus(n_keywords=3, n_fillers=20, n_utterances=80, snr_db=20, warp=0.1,
                             rng=np.random.default_rng(4242))
    templates = [K.enroll_keyword(f"kw{i}", clip) for i, clip in enumerate(c.enrollment)]
    thetas = np.round(np.arange(0.01, 0.0801, 0.0025), 4)
    rate_c, fa_c = _spot_stats(c.utterances[:40], templates, thetas)
    # tune on the calibration half: best detection rate with at most 1 false alarm per minute,
    # falling back to the lowest false-alarm setting if none qualifies
    allowed = np.flatnonzero(fa_c <= 1.0)
    i = allowed[np.argmax(rate_c[allowed])] if allowed.size else int(np.argmin(fa_c))
    theta = thetas[i]
    rate, fa = _spot_stats(c.utterances[40:], templates, [theta])
    ok = rate[0] >= 0.90 and fa[0] <= 1.0
    verdict("spotting surrogate", ok,
            f"tuned theta={theta:.3f} (calibration rate {rate_c[i]:.2f}, {fa_c[i]:.2f} FA/min); "
            f"held-out detection rate {rate[0]:.2f} at {fa[0]:.2f} FA/min "
            f"(target >= 0.90 at <= 1 FA/min; calibration rate never exceeds {rate_c.max():.2f} "
            "at any theta)")
    assert ok


@pytest.mark.slow
def test_praka(verdict):
    t0 = time.perf_counter()
    ps = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
    dp_err = max(abs(praka.verify_dp(p) - ((2 - p) / p) ** 2) / ((2 - p) / p) ** 2 for p in ps)
    eps_err = abs(praka.epsilon(0.5) - 2 * math.log(3))
    rng = np.random.default_rng(9)
    N, n0 = 1000, 300
    worst_se = 0.0
    for p in ps:
        q = p / 2
        n = rng.binomial(N - n0, q, 10_000) + rng.binomial(n0, 1 - q, 10_000)
        est = praka.estimate_count(n, N, p)
        worst_se = max(worst_se, abs(est.mean() - n0) / (est.std(ddof=1) / math.sqrt(est.size)))
    n = rng.binomial(N - n0, 0.25, 10 ** 6) + rng.binomial(n0, 0.75, 10 ** 6)
    mc = float(np.mean(np.abs(praka.estimate_count(n, N, 0.5) - n0) <= 30))
    exact = praka.error_bound(N, n0, 0.5, 30)
    pmf_err = max(abs(praka.count_pmf(m, m // 3, p).sum() - 1) for m in (10, 1000, 10 ** 6)
                  for p in (0.1, 0.5, 0.9))
    dt = time.perf_counter() - t0
    ok = (dp_err < 1e-12 and eps_err < 1e-12 and worst_se < 3 and abs(mc - exact) <= 0.005
          and pmf_err < 1e-9 and dt < 120)
    verdict("praka", ok, f"dp rel err {dp_err:.1e}, eps err {eps_err:.1e}, unbiased within "
            f"{worst_se:.2f} SE, error_bound {exact:.5f} vs MC {mc:.5f}, pmf sum err "
            f"{pmf_err:.1e}, {dt:.1f}s")
    assert ok


@pytest.mark.slow
def test_realtime_coefficient(verdict):
    c = synth.keyword_corpus(n_keywords=1, n_utterances=1, rng=np.random.default_rng(0))
    u = c.utterances[0]
    _, ks, _ = u.keyword_spans[0]
    a = max(0, int((ks - 0.3) * 16000))
    base = u.clip.samples[a : a + 32000]
    base = np.pad(base, (0, 32000 - base.size))
    # identical 2 s tiles, so content and keyword count scale with duration
    clips = [AudioClip(np.tile(base, k)) for k in range(1, 6)]
    templates = [K.enroll_keyword("kw0", c.enrollment[0])]
    bank = K.SafewordBank({"singular-noun": [("meeting", AudioClip(synth.vowel(160, 0.3)))]})
    runs = [[] for _ in clips]
    # interleave rounds across durations so slow drift hits all of them alike, and keep the
    # fastest round: on a shared machine interference only ever adds time
    for _ in range(7):
        for i, clip in enumerate(clips):
            rep = benchmark(clip, ConversionConfig(rng_seed=1), templates,
                            {"kw0": "singular-noun"}, bank, repeats=5, min_budget_s=0.05)
            runs[i].append(rep.cpu_time_s)
    durs = [clip.duration_s for clip in clips]
    rs = {}
    for stage in STAGES:
        rs[stage] = pearsonr(durs, [min(r[stage] for r in run) for run in runs])[0]
    longest = {s: min(r[s] for r in runs[-1]) / durs[-1] for s in STAGES}
    ok = min(rs.values()) >= 0.99
    verdict("realtime coefficient", ok,
            "pearson r " + ", ".join(f"{s}={v:.4f}" for s, v in rs.items()) +
            "; coefficients at 10 s " + ", ".join(f"{s}={v:.3f}" for s, v in longest.items()) +
            f" (reference hardware: {REFERENCE_COEFFICIENTS})")
    assert ok


def test_end_to_end(verdict):
    rng = np.random.default_rng(31)
    kw = synth.render_word(synth.random_word(rng, (5, 5)))
    filler = synth.render_word(synth.random_word(rng, (4, 4)), f0_hz=140)
    gap = np.zeros(3200)
    clip = AudioClip(np.concatenate([gap, filler, gap, kw, gap, filler, gap]))
    store = K.TemplateStore()
    store.enroll("group therapy", AudioClip(kw))
    bank = K.SafewordBank({"singular-noun": [("meeting", AudioClip(synth.vowel(160, 0.3)))]})
    original = "I have to attend a group therapy tomorrow"

    def run():
        cfg = ConversionConfig(rng_seed=11)
        r = cfg.rng()
        dets = K.spot_keywords(stft(clip), store.snapshot())
        subbed, recs = K.substitute_keywords(clip, dets, {"group therapy": "singular-noun"},
                                             bank, r)
        out, _ = sanitize_voice(subbed, cfg, r)
        return out, recs

    out1, recs1 = run()
    out2, recs2 = run()
    sent = K.apply_substitutions_to_text(original, recs1)
    restored = K.restore_transcript(sent, recs1)
    ok = (restored == original and sent == "I have to attend a meeting tomorrow"
          and np.array_equal(out1.samples, out2.samples) and recs1 == recs2)
    verdict("end-to-end", ok, f"sent {sent!r}, restored {restored!r}, "
            f"deterministic={np.array_equal(out1.samples, out2.samples)}")
    assert ok
