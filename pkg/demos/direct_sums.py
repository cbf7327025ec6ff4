"""The direct sum of SL^inf_0, ..., SL^inf_M sits isometrically inside
SL^inf_(2M+1): each block is moved onto its own gap interval.

Run: python3 demos/direct_sums.py
"""
import math

import numpy as np

from haarfactor.directsum import DirectSumVector, dsum_norm, embed_E, embed_G, gap, project_P, retract_Q
from haarfactor.haar import sl_inf_norm

M = 3
for n in range(M + 1):
    print(f"block {n} lives on {gap(n)}")

rng = np.random.default_rng(0)
x = DirectSumVector(M, math.inf, [rng.standard_normal(2 ** (k + 1) - 1) for k in range(M + 1)])
f = embed_E(x)
print("||x|| =", dsum_norm(x), " ||E x|| =", sl_inf_norm(f))
print("P fixes E x:", np.array_equal(project_P(f), f))

h = rng.standard_normal(2 ** (M + 1) - 1)
print("Q G h == h:", np.array_equal(retract_Q(embed_G(h)), h))
