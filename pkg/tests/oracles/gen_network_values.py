"""Brute-force incidence/Gram numbers used to freeze network test values.

No gridpei import: incidence matrices are typed out by hand from the
branch -> column entry rules, the Gram eigenproblems solved directly.

Run:  python3 tests/oracles/gen_network_values.py
"""

import numpy as np

# one line between nodes 1 and 2
C0 = np.array([[1.0], [-1.0]])
g = C0.T @ C0
print("single line Gram:", g.ravel(), "sigma(0.35):", 0.35 / g[0, 0])

# two identical parallel lines, same endpoints
C0 = np.array([[1.0, 1.0], [-1.0, -1.0]])
lam = np.linalg.eigvalsh(C0.T @ C0)
print("parallel Gram eigs:", lam, "sigma(r)/r:", 1.0 / lam.max())

# chain 1-2, 2-3 plus a load branch from node 1 to the neutral
C0 = np.array([
    [1.0, 0.0, 1.0],
    [-1.0, 1.0, 0.0],
    [0.0, -1.0, 0.0],
])
lam = np.linalg.eigvalsh(C0.T @ C0)
print("three-node Gram eigs:", lam, "lam_max:", repr(lam.max()))

# D/Q stacking doubles the block but not the spectrum
C2 = np.block([[C0, np.zeros_like(C0)], [np.zeros_like(C0), C0]])
lam2 = np.linalg.eigvalsh(C2.T @ C2)
print("stacked lam_max:", repr(lam2.max()))
