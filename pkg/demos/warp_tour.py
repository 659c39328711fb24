"""A tour of the three frequency warps and how strongly each one distorts.

Run: python demos/warp_tour.py
"""
import numpy as np

from voicemask import warp as W

grid = np.linspace(0, np.pi, 9)

print("Bilinear warps bend the frequency axis but pin 0 and pi in place.")
for a in (-0.1, 0.0, 0.1):
    print(f"  alpha={a:+.2f}:", np.round(W.warp_bilinear(grid, a), 3))

print("\nDistortion strength is the area between the warp and the diagonal.")
for a in (0.04, 0.08, 0.10, 0.15):
    print(f"  Bilinear({a:.2f}) -> {W.distortion_strength(W.Bilinear(a)):.4f}")
for b in (0.1, 0.3):
    print(f"  Quadratic({b:.1f})  -> {W.distortion_strength(W.Quadratic(b)):.4f}"
          f"  (|beta| pi / 6 = {abs(b) * np.pi / 6:.4f})")

band = W.DistortionBand()
print(f"\nThe default band [{band.lo}, {band.hi}] maps to |alpha| in "
      f"{tuple(round(v, 4) for v in band.alpha_range())} for plain bilinear warps.")

rng = np.random.default_rng(0)
print("\nRandom compound warps drawn inside the band:")
for _ in range(5):
    k = W.sample_warp_params(band, "compound", rng)
    print(f"  alpha={k.alpha:+.4f} beta={k.beta:+.4f} dist={W.distortion_strength(k):.4f}")

print("\nTwo bilinear warps compose into a third one, which is why they are reducible:")
a1, a2 = 0.09, -0.05
c = W.compose_bilinear(a1, a2)
err = np.max(np.abs(W.warp_bilinear(W.warp_bilinear(grid, a1), a2) - W.warp_bilinear(grid, c)))
print(f"  f(f(w, {a1}), {a2}) == f(w, {c:.6f})  (max error {err:.1e})")
