"""Reduced branch network: incidence algebra, RL state space, passivity index.

The retained nodes are the IBR terminals. Branches are either dynamic RL
lines between nodes (or from a node to the neutral, e.g. an absorbed
constant-impedance load) or the static per-node device connections, one per
node, listed last so the full incidence matrix takes the form [C0 -I].

Axis stacking everywhere is [all D components; all Q components].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyNetwork, TopologyError

KIND_LINE = "rl-line"
KIND_SHUNT = "ibr-shunt"
NEUTRAL = 0     # to-node value meaning the neutral rail


@dataclass(frozen=True)
class Branch:
    i: int          # from node, 1-based
    j: int          # to node, 1-based; 0 is the neutral
    kind: str
    r: float = 0.0  # ohm
    L: float = 0.0  # H

    def __post_init__(self):
        if self.kind not in (KIND_LINE, KIND_SHUNT):
            raise ValueError(f"unknown branch kind {self.kind!r}")


@dataclass(frozen=True)
class NetworkTopology:
    """Branch list over N retained nodes plus the neutral.

    Positive line direction is from the lower-numbered node to the higher
    (or from the node into the neutral). Device connections must be the
    last N branches, one per node in node order.
    """

    n_nodes: int
    branches: tuple[Branch, ...]
    omega_0: float = 2.0 * np.pi * 50.0

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(self.branches))
        if self.n_nodes < 1:
            raise ValueError("need at least one node")
        if not self.omega_0 > 0.0:
            raise ValueError("omega_0 must be > 0")
        for b in self.branches:
            if not 1 <= b.i <= self.n_nodes:
                raise ValueError(f"branch from-node {b.i} out of range")
            if b.j != NEUTRAL and not 1 <= b.j <= self.n_nodes:
                raise ValueError(f"branch to-node {b.j} out of range")
            if b.j != NEUTRAL and b.i >= b.j:
                raise ValueError(
                    f"branch ({b.i},{b.j}) violates the i < j direction rule")
            if b.kind == KIND_LINE and not (b.r > 0.0 and b.L > 0.0):
                raise ValueError(
                    f"line ({b.i},{b.j}) needs r > 0 and L > 0, got "
                    f"r={b.r}, L={b.L}")

    @property
    def lines(self) -> tuple[Branch, ...]:
        return tuple(b for b in self.branches if b.kind == KIND_LINE)

    @property
    def m_lines(self) -> int:
        return len(self.lines)


def lines_between(topology: NetworkTopology) -> list[tuple[int, int]]:
    """(from, to) pairs of the dynamic lines, neutral as 0."""
    return [(b.i, b.j) for b in topology.lines]


def build_incidence(topology: NetworkTopology) -> tuple[np.ndarray, np.ndarray]:
    """Reduced incidence C0 (N x M lines) and the full C = [C0 -I].

    Raises TopologyError unless the device connections are exactly the last
    N branches in node order (reorder the branch list if not).
    """
    N = topology.n_nodes
    branches = topology.branches
    shunts = [b for b in branches if b.kind == KIND_SHUNT]
    if len(shunts) != N:
        raise TopologyError(
            f"expected one device connection per node ({N}), got {len(shunts)}")
    tail = branches[len(branches) - N:]
    for node, b in enumerate(tail, start=1):
        if b.kind != KIND_SHUNT or b.i != node or b.j != NEUTRAL:
            raise TopologyError(
                "device connections must be the last branches, one per node "
                "in node order; reorder the branch list")

    lines = branches[:len(branches) - N]
    C0 = np.zeros((N, len(lines)))
    for m, b in enumerate(lines):
        C0[b.i - 1, m] = 1.0
        if b.j != NEUTRAL:
            C0[b.j - 1, m] = -1.0

    # connectivity to the neutral (every device connection provides it, but
    # keep the walk so a future relaxation of the one-per-node rule fails loud)
    seen = {NEUTRAL}
    frontier = [NEUTRAL]
    adj: dict[int, set[int]] = {}
    for b in branches:
        adj.setdefault(b.i, set()).add(b.j)
        adj.setdefault(b.j, set()).add(b.i)
    while frontier:
        for nb in adj.get(frontier.pop(), ()):
            if nb not in seen:
                seen.add(nb)
                frontier.append(nb)
    missing = set(range(1, N + 1)) - seen
    if missing:
        raise TopologyError(f"nodes {sorted(missing)} have no path to the neutral")

    C_full = np.hstack([C0, -np.eye(N)])
    return C0, C_full


@dataclass(frozen=True)
class NetworkStateSpace:
    """L d(i_b)/dt = (-R + W) i_b + C_outᵀ v_o,  i_s = C_out i_b.

    All four matrices are over the stacked [D; Q] branch coordinates, so
    they are 2M x 2M (C_out is 2N x 2M).
    """

    L_mat: np.ndarray
    R_mat: np.ndarray
    W_mat: np.ndarray
    C_out: np.ndarray

    @property
    def n_states(self) -> int:
        return self.L_mat.shape[0]

    def a_matrix(self) -> np.ndarray:
        Linv = 1.0 / np.diag(self.L_mat)
        return Linv[:, None] * (-self.R_mat + self.W_mat)

    def b_matrix(self) -> np.ndarray:
        Linv = 1.0 / np.diag(self.L_mat)
        return Linv[:, None] * self.C_out.T


def network_state_space(topology: NetworkTopology) -> NetworkStateSpace:
    """Stacked D/Q state space of all dynamic lines."""
    C0, _ = build_incidence(topology)
    lines = topology.lines
    M = len(lines)
    if M == 0:
        raise EmptyNetwork("no dynamic lines; single-device systems skip "
                           "network dynamics")
    r = np.array([b.r for b in lines])
    L = np.array([b.L for b in lines])
    w0 = topology.omega_0

    Lp = np.diag(L)
    zero = np.zeros((M, M))
    L_mat = np.block([[Lp, zero], [zero, Lp]])
    R_mat = np.diag(np.concatenate([r, r]))
    # rotational coupling scales with each branch inductance
    W_mat = np.block([[zero, w0 * Lp], [-w0 * Lp, zero]])
    C_out = np.block([[C0, np.zeros_like(C0)], [np.zeros_like(C0), C0]])
    return NetworkStateSpace(L_mat=L_mat, R_mat=R_mat, W_mat=W_mat, C_out=C_out)


@dataclass(frozen=True)
class NetworkPassivityCertificate:
    lambda_r_min: float     # ohm
    lambda_c_max: float     # dimensionless
    sigma_net: float        # output-feedback index, ohm scaled

    def __post_init__(self):
        if not self.sigma_net > 0.0:
            raise ValueError("a valid certificate has sigma_net > 0")


def network_passivity_index(topology: NetworkTopology) -> NetworkPassivityCertificate:
    """Output-feedback passivity index of the branch network.

    The map from injected node voltages to injected node currents is OFP
    with index lambda_Rmin / lambda_Cmax; both factors come from the
    network's own matrices, independent of the devices.
    """
    ss = network_state_space(topology)    # raises EmptyNetwork when M = 0
    lam_r = float(np.min(np.diag(ss.R_mat)))
    gram = ss.C_out.T @ ss.C_out
    lam_c = float(np.max(np.linalg.eigvalsh(gram)))
    if lam_c <= 0.0:
        raise TopologyError("no line couples into any node; index undefined")
    return NetworkPassivityCertificate(
        lambda_r_min=lam_r, lambda_c_max=lam_c, sigma_net=lam_r / lam_c)
