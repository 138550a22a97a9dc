"""Lyapunov certificates and the V-weighted norm.

For a Hurwitz drift J the solution V of J^T V + V J + I = 0 defines a norm in
which one small step I + eps J is a strict contraction. This script solves for
V, reads off iota_V = 1/(4 lambda_max(V)), and checks the contraction on a few
step sizes.
"""

import numpy as np

from douglab import bounds, linalg

J = np.array([[-1.0, 3.0], [0.0, -1.5]])  # strongly non-normal
print("J =\n", J)
print("Hurwitz:", linalg.is_hurwitz(J))

V = linalg.solve_lyapunov(J, np.eye(2))
lo, hi = linalg.extreme_eigenvalues(V)
iota = 1.0 / (4.0 * hi)
print("V =\n", V)
print(f"residual {np.abs(J.T @ V + V @ J + np.eye(2)).max():.1e}, eig(V) in [{lo:.4f}, {hi:.4f}], iota_V = {iota:.4f}")

# ||J||_V is what limits the admissible step
jv = linalg.v_operator_norm(J, V)
cap = min(1.0, 2 * iota / jv ** 2)
print(f"||J||_V = {jv:.4f}; admissible eps up to {cap:.4f}")
for frac in (0.1, 0.5, 1.0):
    lhs, rhs, ok = bounds.contraction_check(J, V, frac * cap)
    print(f"  eps = {frac * cap:.4f}: ||I + eps J||_V^2 = {lhs:.5f} <= 1 - iota eps = {rhs:.5f}  {ok}")

# in the plain Euclidean norm a small step expands: sym(J) has a positive eigenvalue
eps = 0.1 * cap
print(f"Euclidean ||I + eps J||^2 at eps = {eps:.4f}:", round(linalg.spectral_norm(np.eye(2) + eps * J) ** 2, 5))
