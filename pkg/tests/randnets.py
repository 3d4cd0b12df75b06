"""Shared test machinery: random topologies and closed-form LTI responses.

The response helper is the oracle side of the trajectory checks: it
evaluates x(t) for a sinusoid-driven linear system by eigendecomposition,
so the only error in a residual computed from it is the quadrature of the
residual integral itself.
"""

import numpy as np

from gridpei.network import Branch, KIND_LINE, KIND_SHUNT, NetworkTopology


def random_topology(rng, n_max=5, m_max=8) -> NetworkTopology:
    """Connected random branch network with 1..n_max nodes, 1..m_max lines."""
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    lines = []
    for _ in range(m):
        i = int(rng.integers(1, n + 1))
        if n > 1 and rng.random() < 0.7:
            j = int(rng.integers(1, n + 1))
            if j == i:
                j = 0           # fall back to a load-style branch
            elif j < i:
                i, j = j, i
        else:
            j = 0
        r = float(10 ** rng.uniform(-2, 1))
        L = float(10 ** rng.uniform(-4, -2))
        lines.append(Branch(i, j, KIND_LINE, r, L))
    shunts = [Branch(k, 0, KIND_SHUNT) for k in range(1, n + 1)]
    return NetworkTopology(n_nodes=n, branches=tuple(lines + shunts))


def band_limited_input(rng, n_channels, f_max=2000.0, n_tones=6):
    """Random multisine description: (omegas, amplitudes, phases)."""
    omegas = 2 * np.pi * rng.uniform(1.0, f_max, size=n_tones)
    amps = rng.uniform(0.2, 1.0, size=(n_tones, n_channels))
    phases = rng.uniform(0.0, 2 * np.pi, size=(n_tones, n_channels))
    return omegas, amps, phases


def multisine_response(A, B, C, omegas, amps, phases, t):
    """(u, y) sampled on t for the multisine drive, zero initial state."""
    A = np.asarray(A, float)
    B = np.asarray(B, float)
    C = np.asarray(C, float)
    n = A.shape[0]
    t = np.asarray(t, float)

    coef = amps * np.exp(1j * phases)            # tones x channels
    u = np.einsum("kc,kt->tc", coef, np.exp(1j * np.outer(omegas, t))).real

    x_part0 = np.zeros(n, dtype=complex)
    parts = []
    for w, c in zip(omegas, coef):
        Xk = np.linalg.solve(1j * w * np.eye(n) - A, B @ c)
        parts.append(Xk)
        x_part0 += Xk
    x0_h = -x_part0.real                          # cancels x(0) to zero

    lam, V = np.linalg.eig(A)
    wcoef = np.linalg.solve(V, x0_h.astype(complex))
    x_hom = V @ (np.exp(np.outer(lam, t)) * wcoef[:, None])

    x = x_hom.copy()
    for w, Xk in zip(omegas, parts):
        x += Xk[:, None] * np.exp(1j * w * t)[None, :]
    y = (C @ x.real).T
    return u, y
