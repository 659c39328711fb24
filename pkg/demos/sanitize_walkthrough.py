"""Sanitize a toy utterance, then restore the transcript on the way back.

A synthetic "word" stands in for the sensitive phrase "group therapy". It is
enrolled once, spotted in a longer utterance, swapped for the safeword
"meeting", and the whole clip is voice-converted with a random compound warp.
The substitution log is all the client needs to put the phrase back into a
transcript returned by a recognizer.

Run: python demos/sanitize_walkthrough.py
"""
import numpy as np

from voicemask import keywords as K
from voicemask import synth
from voicemask.audio import AudioClip, stft
from voicemask.conversion import ConversionConfig, sanitize_voice

rng = np.random.default_rng(31)
phrase = synth.render_word(synth.random_word(rng, (5, 5)))
filler = synth.render_word(synth.random_word(rng, (4, 4)), f0_hz=140)
gap = np.zeros(3200)
clip = AudioClip(np.concatenate([gap, filler, gap, phrase, gap, filler, gap]))
print(f"utterance: {clip.duration_s:.2f} s")

store = K.TemplateStore()
store.enroll("group therapy", AudioClip(phrase))
dets = K.spot_keywords(stft(clip), store.snapshot())
for d in dets:
    print(f"spotted {d.keyword_id!r} at {d.start_s:.2f}-{d.end_s:.2f} s (distance {d.distance:.4f})")

bank = K.SafewordBank({"singular-noun": [("meeting", AudioClip(synth.vowel(160, 0.3)))]})
cfg = ConversionConfig(rng_seed=11)
r = cfg.rng()
subbed, records = K.substitute_keywords(clip, dets, {"group therapy": "singular-noun"}, bank, r)
out, segments = sanitize_voice(subbed, cfg, r)
print(f"sanitized: {out.duration_s:.2f} s, warp {segments[0].kind}")

# pretend a recognizer transcribed the sanitized audio
original = "I have to attend a group therapy tomorrow"
heard = K.apply_substitutions_to_text(original, records)
print(f"recognizer hears: {heard!r}")
print(f"client restores:  {K.restore_transcript(heard, records)!r}")
