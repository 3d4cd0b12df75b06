"""Incidence rules, branch state space, and the network passivity index.

Frozen Gram eigenvalues come from tests/oracles/gen_network_values.py.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridpei.errors import EmptyNetwork, TopologyError
from gridpei.network import (
    Branch,
    KIND_LINE,
    KIND_SHUNT,
    NetworkTopology,
    build_incidence,
    network_passivity_index,
    network_state_space,
)
from gridpei.passivity import ofp_residual

from randnets import band_limited_input, multisine_response, random_topology


def two_node_one_line(r=0.35, L=0.58e-3):
    return NetworkTopology(n_nodes=2, branches=(
        Branch(1, 2, KIND_LINE, r, L),
        Branch(1, 0, KIND_SHUNT),
        Branch(2, 0, KIND_SHUNT),
    ))


def three_node_chain():
    return NetworkTopology(n_nodes=3, branches=(
        Branch(1, 2, KIND_LINE, 0.23, 0.35e-3),
        Branch(2, 3, KIND_LINE, 0.35, 0.58e-3),
        Branch(1, 0, KIND_LINE, 25.0, 1e-4),
        Branch(1, 0, KIND_SHUNT),
        Branch(2, 0, KIND_SHUNT),
        Branch(3, 0, KIND_SHUNT),
    ))


def test_two_node_incidence_column():
    C0, C_full = build_incidence(two_node_one_line())
    assert C0.shape == (2, 1)
    assert np.array_equal(C0, [[1.0], [-1.0]])
    assert np.array_equal(C_full, [[1.0, -1.0, 0.0], [-1.0, 0.0, -1.0]])


def test_single_node_degenerate_incidence():
    topo = NetworkTopology(n_nodes=1, branches=(Branch(1, 0, KIND_SHUNT),))
    C0, C_full = build_incidence(topo)
    assert C0.shape == (1, 0)
    assert np.array_equal(C_full, [[-1.0]])


def test_three_node_incidence_entry_rules():
    C0, _ = build_incidence(three_node_chain())
    assert C0.shape == (3, 3)
    assert set(np.unique(C0)) <= {-1.0, 0.0, 1.0}
    # node-to-node columns sum to zero, neutral-incident columns to +-1
    assert list(C0.sum(axis=0)) == [0.0, 0.0, 1.0]
    assert np.array_equal(C0[:, 0], [1.0, -1.0, 0.0])
    assert np.array_equal(C0[:, 1], [0.0, 1.0, -1.0])
    assert np.array_equal(C0[:, 2], [1.0, 0.0, 0.0])


def test_shunt_ordering_enforced():
    topo = NetworkTopology(n_nodes=2, branches=(
        Branch(1, 0, KIND_SHUNT),
        Branch(1, 2, KIND_LINE, 0.35, 0.58e-3),
        Branch(2, 0, KIND_SHUNT),
    ))
    with pytest.raises(TopologyError, match="reorder"):
        build_incidence(topo)


def test_missing_shunt_rejected():
    topo = NetworkTopology(n_nodes=2, branches=(
        Branch(1, 2, KIND_LINE, 0.35, 0.58e-3),
        Branch(1, 0, KIND_SHUNT),
    ))
    with pytest.raises(TopologyError):
        build_incidence(topo)


def test_branch_validation():
    with pytest.raises(ValueError):
        Branch(1, 2, "coupling")
    with pytest.raises(ValueError):
        NetworkTopology(n_nodes=2, branches=(
            Branch(2, 0, KIND_LINE, 0.1, 1e-3),      # r, L fine
            Branch(1, 2, KIND_LINE, -0.1, 1e-3),     # bad r
            Branch(1, 0, KIND_SHUNT), Branch(2, 0, KIND_SHUNT)))
    with pytest.raises(ValueError):
        NetworkTopology(n_nodes=2, branches=(
            Branch(2, 1, KIND_LINE, 0.1, 1e-3),      # i >= j
            Branch(1, 0, KIND_SHUNT), Branch(2, 0, KIND_SHUNT)))
    with pytest.raises(ValueError):
        NetworkTopology(n_nodes=2, branches=(
            Branch(1, 3, KIND_LINE, 0.1, 1e-3),      # node out of range
            Branch(1, 0, KIND_SHUNT), Branch(2, 0, KIND_SHUNT)))


def test_state_space_single_branch_entries():
    r, L = 0.35, 0.58e-3
    ss = network_state_space(two_node_one_line(r, L))
    w0 = 2 * math.pi * 50.0
    assert ss.n_states == 2
    assert np.allclose(ss.L_mat, [[L, 0], [0, L]])
    assert np.allclose(ss.R_mat, [[r, 0], [0, r]])
    assert np.allclose(ss.W_mat, [[0, w0 * L], [-w0 * L, 0]])
    assert np.array_equal(ss.C_out, [[1, 0], [-1, 0], [0, 1], [0, -1]])
    A = ss.a_matrix()
    assert np.allclose(A, [[-r / L, w0], [-w0, -r / L]])


def test_empty_network_raises():
    topo = NetworkTopology(n_nodes=1, branches=(Branch(1, 0, KIND_SHUNT),))
    with pytest.raises(EmptyNetwork):
        network_state_space(topo)
    with pytest.raises(EmptyNetwork):
        network_passivity_index(topo)


@given(st.integers(0, 2 ** 32 - 1))
@settings(max_examples=30, deadline=None)
def test_w_is_skew(seed):
    rng = np.random.default_rng(seed)
    topo = random_topology(rng)
    ss = network_state_space(topo)
    assert np.array_equal(ss.W_mat, -ss.W_mat.T)
    x = rng.normal(size=ss.n_states)
    assert abs(x @ ss.W_mat @ x) <= 1e-9 * (1 + np.abs(ss.W_mat).max()) * (x @ x)


def test_single_branch_step_matches_rotating_rl_solution():
    # D-axis unit step; closed form is the decaying rotation around the
    # phasor steady state
    r, L = 0.35, 0.58e-3
    w0 = 2 * math.pi * 50.0
    ss = network_state_space(two_node_one_line(r, L))
    A, B = ss.a_matrix(), ss.b_matrix()
    v_nodes = np.array([1.0, 0.0, 0.0, 0.0])     # v_D at node 1
    u = B @ v_nodes

    a = r / L
    den = a * a + w0 * w0
    x_ss = np.array([a, -w0]) / den / L          # solves A x + u = 0
    assert np.allclose(A @ x_ss + u, 0.0, atol=1e-12)

    x = np.zeros(2)
    dt = 1e-7
    steps = 20000
    for _ in range(steps):
        k1 = A @ x + u
        k2 = A @ (x + 0.5 * dt * k1) + u
        k3 = A @ (x + 0.5 * dt * k2) + u
        k4 = A @ (x + dt * k3) + u
        x = x + (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
    t = steps * dt
    rot = np.array([[math.cos(w0 * t), math.sin(w0 * t)],
                    [-math.sin(w0 * t), math.cos(w0 * t)]])
    x_exact = x_ss + math.exp(-a * t) * rot @ (-x_ss)
    assert np.allclose(x, x_exact, atol=1e-10)


def test_index_single_line_hand_value():
    cert = network_passivity_index(two_node_one_line(r=0.35))
    assert cert.lambda_r_min == pytest.approx(0.35)
    assert cert.lambda_c_max == pytest.approx(2.0)
    assert cert.sigma_net == pytest.approx(0.175)


def test_index_parallel_lines():
    r = 0.8
    topo = NetworkTopology(n_nodes=2, branches=(
        Branch(1, 2, KIND_LINE, r, 0.58e-3),
        Branch(1, 2, KIND_LINE, r, 0.58e-3),
        Branch(1, 0, KIND_SHUNT),
        Branch(2, 0, KIND_SHUNT),
    ))
    cert = network_passivity_index(topo)
    assert cert.lambda_c_max == pytest.approx(4.0)
    assert cert.sigma_net == pytest.approx(r / 4.0)


def test_index_three_node_frozen_gram():
    cert = network_passivity_index(three_node_chain())
    assert cert.lambda_c_max == pytest.approx(3.246979603717466, rel=1e-12)
    assert cert.lambda_r_min == pytest.approx(0.23)


def test_index_scales_linearly_in_resistance():
    base = three_node_chain()
    scaled = NetworkTopology(n_nodes=3, branches=tuple(
        Branch(b.i, b.j, b.kind, 10.0 * b.r, b.L) if b.kind == KIND_LINE else b
        for b in base.branches))
    assert network_passivity_index(scaled).sigma_net == pytest.approx(
        10.0 * network_passivity_index(base).sigma_net, rel=1e-12)


@given(st.integers(0, 2 ** 32 - 1))
@settings(max_examples=30, deadline=None)
def test_gram_bound(seed):
    rng = np.random.default_rng(seed)
    topo = random_topology(rng)
    ss = network_state_space(topo)
    cert = network_passivity_index(topo)
    x = rng.normal(size=ss.n_states)
    lhs = np.sum((ss.C_out @ x) ** 2)
    assert lhs <= cert.lambda_c_max * np.sum(x * x) * (1 + 1e-12)


@given(st.integers(0, 2 ** 32 - 1))
@settings(max_examples=15, deadline=None)
def test_ofp_residual_nonnegative_on_trajectories(seed):
    # the certified index must make the cumulative residual stay above the
    # quadrature floor for any zero-state trajectory
    rng = np.random.default_rng(seed)
    topo = random_topology(rng)
    ss = network_state_space(topo)
    cert = network_passivity_index(topo)
    A, B, C = ss.a_matrix(), ss.b_matrix(), ss.C_out

    omegas, amps, phases = band_limited_input(rng, n_channels=B.shape[1])
    dt = 1e-6
    t = np.arange(0.0, 0.05, dt)
    u, y = multisine_response(A, B, C, omegas, amps, phases, t)
    r = ofp_residual(u, y, cert.sigma_net, dt)
    assert r.min() >= -1e-6
