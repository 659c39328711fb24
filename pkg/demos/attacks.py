"""What an attacker can and cannot undo.

A fixed bilinear conversion is reversed exactly once alpha is known. A
compound warp cannot be collapsed onto any single bilinear warp.

Run: python demos/attacks.py
"""
import numpy as np

from voicemask import synth
from voicemask import warp as W
from voicemask.audio import AudioClip
from voicemask.conversion import attack_reverse, convert_voice, spectral_log_distance

clip = AudioClip(synth.vowel(120.0, 1.0, f0_jitter=0.02, seed=3))
alpha = 0.09
converted = convert_voice(clip, W.Bilinear(alpha))
print(f"converted with alpha={alpha}: {spectral_log_distance(clip, converted):.2f} dB from the original")
for guess in (0.05, 0.08, 0.09):
    back = attack_reverse(converted, guess)
    print(f"  reversed with alpha={guess}: {spectral_log_distance(clip, back):.2f} dB")

grid = W.default_search_grid()
print("\nbest residual after composing with any bilinear warp on the grid:")
for kind in (W.Bilinear(0.09), W.Compound(0.06, 0.25)):
    r = W.attack_reduce_residual(kind, grid)
    q = W.attack_reduce_residual(kind, grid, "quadratic")
    print(f"  {kind}: bilinear family {r:.5f}, quadratic family {q:.5f}")
