"""L2 gain certification, interface gain checks, and passivity residuals.

The stabilization argument runs through three numbers: the L2 gain of each
device's fast deviation dynamics (a Hamiltonian-certified H-infinity norm),
the output-feedback index each wrapped device attains, and the network
index. This module computes the first two and the residual diagnostic used
to spot-check the underlying integral inequality on trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .devices import StateSpaceModel
from .errors import InfeasiblePolicy, LengthMismatch, NotHurwitz


@dataclass(frozen=True)
class L2GainResult:
    gamma: float
    omega_peak: float   # rad/s where the gain is attained
    method: str


@dataclass(frozen=True)
class PeiConfig:
    """Interface gains (alpha: shunt A/V, beta: series V/A, kappa: series
    voltage fraction), optionally tagged with the device gain they were
    designed against and the index they certify."""

    alpha: float
    beta: float
    kappa: float
    gamma_design: float | None = None
    sigma: float | None = None


@dataclass(frozen=True)
class PeiVerdict:
    satisfied: bool
    violated: tuple[str, ...]
    sigma: float | None     # only when satisfied


def _imaginary_eigs(H: np.ndarray) -> np.ndarray:
    """Eigenvalues of H lying on the imaginary axis, within scaled tolerance."""
    eigs = np.linalg.eigvals(H)
    scale = max(1.0, float(np.abs(eigs).max()))
    on_axis = np.abs(eigs.real) <= 1e-7 * scale
    return eigs[on_axis]


def _hamiltonian(A, B, C, gamma):
    # gamma-scaled form; imaginary eigenvalues iff the gain exceeds gamma
    return np.block([
        [A, (B @ B.T) / gamma],
        [-(C.T @ C) / gamma, -A.T],
    ])


def _sigma_max(A, B, C, omega: float) -> float:
    n = A.shape[0]
    G = C @ np.linalg.solve(1j * omega * np.eye(n) - A, B)
    return float(np.linalg.svd(G, compute_uv=False)[0])


def l2_gain(model: StateSpaceModel, tol: float = 1e-6) -> L2GainResult:
    """H-infinity norm of the strictly proper model by Hamiltonian bisection.

    Requires A Hurwitz (NotHurwitz otherwise). The returned gamma carries a
    two-sided certificate: the Hamiltonian pencil has imaginary-axis
    eigenvalues at gamma*(1 - tol) and none at gamma*(1 + tol).
    """
    A, B, C = model.A, model.B, model.C
    eigs_A = np.linalg.eigvals(A)
    if np.any(eigs_A.real >= 0.0):
        raise NotHurwitz(
            f"model is not asymptotically stable; max Re = "
            f"{eigs_A.real.max():.4g}", eigenvalues=eigs_A)

    # initial lower bound: response at dc, at the lightly-damped pole
    # frequencies, and at a coarse log sweep
    probe = {0.0}
    probe.update(abs(l.imag) for l in eigs_A if abs(l.imag) > 1e-12)
    probe.update(np.logspace(-2, 6, 25))
    best_lo, omega_peak = 0.0, 0.0
    for w in probe:
        s = _sigma_max(A, B, C, w)
        if s > best_lo:
            best_lo, omega_peak = s, w
    if best_lo <= 0.0:
        # zero transfer everywhere (e.g. C = 0)
        return L2GainResult(gamma=0.0, omega_peak=0.0,
                            method="hamiltonian-bisection")

    lo = best_lo
    hi = 2.0 * lo
    while _imaginary_eigs(_hamiltonian(A, B, C, hi)).size:
        lo = hi
        hi *= 2.0
        if hi > 1e12 * best_lo:
            raise NotHurwitz("bisection upper bound runaway; model is "
                             "marginally stable within tolerance")

    while (hi - lo) > tol * lo:
        mid = 0.5 * (lo + hi)
        cross = _imaginary_eigs(_hamiltonian(A, B, C, mid))
        if cross.size:
            lo = mid
            # crossing frequencies bracket the peak; keep the strongest
            for w in np.abs(cross.imag):
                if _sigma_max(A, B, C, w) > _sigma_max(A, B, C, omega_peak):
                    omega_peak = float(w)
        else:
            hi = mid

    gamma = 0.5 * (lo + hi)
    return L2GainResult(gamma=gamma, omega_peak=omega_peak,
                        method="hamiltonian-bisection")


_COND_BETA = "beta >= kappa * gamma"
_COND_POS = "kappa * gamma > 0"
_COND_KAPPA = "kappa > alpha * beta"
_COND_AB = "alpha * beta > 0"


def verify_pei(cfg: PeiConfig, gamma: float) -> PeiVerdict:
    """Check the interface gain inequalities against a device L2 gain.

    Total function over all float inputs; comparisons are exact (no epsilon
    slack), mirroring how the conditions are stated. When satisfied, the
    attained output-feedback index is 0.5 * (1/beta + alpha/kappa).
    """
    violated = []
    if not cfg.beta >= cfg.kappa * gamma:
        violated.append(_COND_BETA)
    if not cfg.kappa * gamma > 0.0:
        violated.append(_COND_POS)
    if not cfg.kappa > cfg.alpha * cfg.beta:
        violated.append(_COND_KAPPA)
    if not cfg.alpha * cfg.beta > 0.0:
        violated.append(_COND_AB)
    if violated:
        return PeiVerdict(satisfied=False, violated=tuple(violated), sigma=None)
    sigma = 0.5 * (1.0 / cfg.beta + cfg.alpha / cfg.kappa)
    return PeiVerdict(satisfied=True, violated=(), sigma=sigma)


def design_pei(gamma: float, kappa: float = 1.0,
               margin: float = 1e-3) -> PeiConfig:
    """Interface gains guaranteed to pass verify_pei for a device of gain
    gamma.

    kappa is the free series-voltage fraction in (0, 1]; beta is set to
    kappa*gamma*(1 + margin) and alpha to kappa/(beta*(1 + margin)), which
    satisfies both inequalities with strict room margin > 0.
    """
    if not np.isfinite(gamma) or gamma <= 0.0:
        raise InfeasiblePolicy(f"need a positive finite device gain, got {gamma}")
    if not 0.0 < kappa <= 1.0:
        raise InfeasiblePolicy(f"kappa must lie in (0, 1], got {kappa}")
    if margin <= 0.0:
        raise InfeasiblePolicy(f"margin must be > 0, got {margin}")
    beta = kappa * gamma * (1.0 + margin)
    alpha = kappa / (beta * (1.0 + margin))
    cfg = PeiConfig(alpha=alpha, beta=beta, kappa=kappa, gamma_design=gamma)
    verdict = verify_pei(cfg, gamma)
    if not verdict.satisfied:   # pragma: no cover - construction guarantees
        raise InfeasiblePolicy(f"designed gains fail {verdict.violated}")
    return PeiConfig(alpha=alpha, beta=beta, kappa=kappa,
                     gamma_design=gamma, sigma=verdict.sigma)


def ofp_residual(u, y, sigma: float, dt: float) -> np.ndarray:
    """Cumulative trapezoid residual of the output-feedback inequality.

    r(t_k) = int u.y dtau - sigma * int y.y dtau up to sample k; a map that
    is OFP with index sigma keeps r >= 0 (up to quadrature error) on
    trajectories from zero initial state. u and y are (T,) or (T, m).
    """
    u = np.atleast_2d(np.asarray(u, dtype=float).T).T
    y = np.atleast_2d(np.asarray(y, dtype=float).T).T
    if u.shape != y.shape:
        raise LengthMismatch(f"u {u.shape} vs y {y.shape}")
    if not dt > 0.0:
        raise ValueError("dt must be > 0")
    s = np.sum(u * y, axis=1) - sigma * np.sum(y * y, axis=1)
    r = np.empty(s.shape[0])
    r[0] = 0.0
    np.cumsum(0.5 * dt * (s[1:] + s[:-1]), out=r[1:])
    return r
