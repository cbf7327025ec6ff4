"""Haar coefficients, the SL^inf and H^1 norms, and the pairing between them.

Run: python3 demos/norms_and_duality.py
"""
import numpy as np

from haarfactor.dyadic import DyadicInterval
from haarfactor.haar import h1_norm, pairing, sl_inf_norm, unit

depth = 4
root = unit(DyadicInterval(0, 1), depth)
print("h_[0,1):       SL^inf", sl_inf_norm(root), " H^1", h1_norm(root))

# The constant sign sum over one level: its square function is 1 everywhere.
level = np.zeros_like(root)
level[7:15] = 1.0
print("level-3 sum:   SL^inf", sl_inf_norm(level), " H^1", h1_norm(level))

# |<f, g>| never exceeds ||f||_SL * ||g||_H1.
rng = np.random.default_rng(1)
worst = 0.0
for _ in range(2000):
    f, g = rng.standard_normal((2, len(root)))
    worst = max(worst, abs(pairing(f, g)) / (sl_inf_norm(f) * h1_norm(g)))
print(f"largest |<f,g>| / (||f|| ||g||) over 2000 samples: {worst:.4f}")

# Exact rational evaluation agrees with the float path on dyadic data.
f = rng.integers(-3, 4, len(root)) / 8
print("exact == float:", sl_inf_norm(f, exact=True) == sl_inf_norm(f))
