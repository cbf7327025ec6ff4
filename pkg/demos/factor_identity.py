"""Factor the identity through an operator with large diagonal, then through
one of T and Id - T, and re-check both certificates.

Run: python3 demos/factor_identity.py
"""
from haarfactor.factor import factor_large_diagonal, factor_primary, verify_certificate
from haarfactor.operators import identity, level_multiplier, random_operator

N, n, eta = 10, 2, 0.25

T = random_operator(N, "diag_dominant", seed=0, delta=0.5, noise=0.02)
cert = factor_large_diagonal(T, n, delta=0.5, eta=eta)
print("large diagonal:")
print(f"  residual |SR - Id|      {cert.residual:.2e}")
print(f"  ||R|| ||S|| <= {cert.analytic_bound:.4f}   target {cert.target:.4f}   met: {cert.target_met}")
print("  verified:", verify_certificate(cert, T)["passed"])

# A projection onto the even levels: the identity factors through T or through
# Id - T, and swapping the two swaps the choice.
E = level_multiplier(N, [1.0 if l % 2 == 0 else 0.0 for l in range(N + 1)])
for name, A in (("even levels", E), ("odd levels", identity(N) - E)):
    c = factor_primary(A, 1, eta)
    print(f"{name}: through {c.H_choice:5s} bound {c.analytic_bound:.4f} "
          f"(target {c.target:.2f}) verified {verify_certificate(c, A)['passed']}")
