"""Reference-frame transforms and the raw interface law."""

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridpei.passivity import PeiConfig
from gridpei.pei import (
    FrameAngle,
    PeiCommand,
    PeiReferences,
    ReferenceTracker,
    dq0common_to_dq,
    dq_to_dq0common,
    inv_park,
    park,
    pei_step,
    rotation,
)

finite = st.floats(min_value=-1e4, max_value=1e4, allow_nan=False)
angles = st.floats(min_value=-50.0, max_value=50.0, allow_nan=False)


def test_balanced_set_maps_to_d_axis():
    V, theta = 311.0, 0.73
    abc = [V * math.sin(theta + k * 2 * math.pi / 3) for k in (0, -1, 1)]
    dq0 = park(abc, theta)
    assert dq0 == pytest.approx([V, 0.0, 0.0], abs=1e-12)


def test_zero_sequence_passes_through():
    dq0 = park((1.0, 1.0, 1.0), 0.4)
    assert dq0 == pytest.approx([0.0, 0.0, 1.0], abs=1e-12)


def test_quarter_turn_swaps_axes():
    d, q = 3.0, -2.0
    D, Q = dq_to_dq0common((d, q), math.pi / 2)
    assert (D, Q) == pytest.approx((-q, d), abs=1e-12)


@given(d=finite, q=finite, z=finite, theta=angles)
@settings(max_examples=200)
def test_park_round_trip(d, q, z, theta):
    out = park(inv_park((d, q, z), theta), theta)
    assert np.allclose(out, [d, q, z], atol=1e-12 * (1 + abs(d) + abs(q) + abs(z)))


@given(a=finite, b=finite, c=finite, theta=angles)
@settings(max_examples=200)
def test_abc_round_trip(a, b, c, theta):
    out = inv_park(park((a, b, c), theta), theta)
    assert np.allclose(out, [a, b, c], atol=1e-12 * (1 + abs(a) + abs(b) + abs(c)))


@given(d=finite, q=finite, delta=angles)
def test_frame_rotation_preserves_norm_and_inverts(d, q, delta):
    DQ = dq_to_dq0common((d, q), delta)
    assert np.hypot(*DQ) == pytest.approx(np.hypot(d, q), rel=1e-12, abs=1e-12)
    back = dq0common_to_dq(DQ, delta)
    assert np.allclose(back, [d, q], atol=1e-9 * (1 + abs(d) + abs(q)))


@given(delta=angles)
def test_rotation_matrix_is_orthogonal(delta):
    R = rotation(delta)
    assert np.allclose(R.T @ R, np.eye(2), atol=1e-14)
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-14)


def test_frame_angle_wraps():
    fa = FrameAngle(7.0 * math.pi, delta=0.3).wrapped()
    assert 0.0 <= fa.theta < 2.0 * math.pi
    assert fa.theta == pytest.approx(math.pi)
    assert fa.delta == 0.3


def test_interface_law_hand_values():
    # (1 - 0.36)*1 = 0.64 series volts, -0.00045*1 shunt amps
    cfg = PeiConfig(alpha=0.00045, beta=1.67, kappa=0.36)
    refs = PeiReferences(v_hat_odq=(0.0, 0.0), i_hat_odq=(0.0, 0.0))
    cmd = pei_step((1.0, 0.0), (0.0, 0.0), refs, cfg)
    assert cmd.dv_cmd == pytest.approx((0.64, 0.0), abs=1e-15)
    assert cmd.di_cmd == pytest.approx((-0.00045, 0.0), abs=1e-15)


def test_interface_law_zero_deviation_is_silent():
    cfg = PeiConfig(alpha=0.01, beta=1.0, kappa=0.5)
    refs = PeiReferences(v_hat_odq=(310.0, 0.0), i_hat_odq=(-8.0, 1.0))
    cmd = pei_step((310.0, 0.0), (-8.0, 1.0), refs, cfg)
    assert cmd.dv_cmd == (0.0, 0.0)
    assert cmd.di_cmd == (0.0, 0.0)


@given(vd=finite, vq=finite, id_=finite, iq=finite, s=st.floats(-3, 3))
@settings(max_examples=100)
def test_interface_law_is_linear_in_deviations(vd, vq, id_, iq, s):
    cfg = PeiConfig(alpha=0.005, beta=0.8, kappa=0.3)
    refs = PeiReferences(v_hat_odq=(0.0, 0.0), i_hat_odq=(0.0, 0.0))
    one = pei_step((vd, vq), (id_, iq), refs, cfg)
    scaled = pei_step((s * vd, s * vq), (s * id_, s * iq), refs, cfg)
    for got, want in zip(scaled.dv_cmd + scaled.di_cmd, one.dv_cmd + one.di_cmd):
        assert got == pytest.approx(s * want, rel=1e-12, abs=1e-9)


def test_interface_law_commutes_with_rotation():
    # Scalar gains: rotating measurements and references together rotates
    # the commands by the same angle.
    cfg = PeiConfig(alpha=0.002, beta=1.2, kappa=0.4)
    delta = 0.61
    v, i = np.array([12.0, -5.0]), np.array([3.0, 0.7])
    vr, ir = np.array([10.0, -4.0]), np.array([2.5, 0.5])
    plain = pei_step(v, i, PeiReferences(tuple(vr), tuple(ir)), cfg)
    R = rotation(delta)
    rot = pei_step(R @ v, R @ i, PeiReferences(tuple(R @ vr), tuple(R @ ir)), cfg)
    assert np.allclose(rot.dv_cmd, R @ np.array(plain.dv_cmd), atol=1e-12)
    assert np.allclose(rot.di_cmd, R @ np.array(plain.di_cmd), atol=1e-12)


def test_tracker_settles_on_constant_measurement():
    refs = PeiReferences((300.0, 0.0), (-5.0, 0.0))
    tr = ReferenceTracker(refs, cutoff=2.0)
    dt = 1e-3
    for _ in range(int(10.0 / dt)):
        out = tr.advance((305.0, 1.0), (-6.0, 0.2), dt)
    assert out.v_hat_odq == pytest.approx((305.0, 1.0), abs=1e-4)
    assert out.i_hat_odq == pytest.approx((-6.0, 0.2), abs=1e-4)


def test_tracker_warns_on_persistent_drift():
    refs = PeiReferences((300.0, 0.0), (0.0, 0.0))
    tr = ReferenceTracker(refs, cutoff=0.01, drift_tol=1.0, stale_after=0.5)
    with pytest.warns(UserWarning, match="references lag"):
        for k in range(2000):
            # ramp fast enough that the slow tracker can never catch up
            tr.advance((300.0 + 0.5 * k, 0.0), (0.0, 0.0), 1e-3)


def test_tracker_quiet_when_following():
    refs = PeiReferences((300.0, 0.0), (0.0, 0.0))
    tr = ReferenceTracker(refs, cutoff=50.0, drift_tol=1.0, stale_after=0.5)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        for _ in range(5000):
            tr.advance((300.5, 0.0), (0.0, 0.0), 1e-3)


def test_command_container_shape():
    cmd = PeiCommand(dv_cmd=(1.0, 2.0), di_cmd=(3.0, 4.0))
    assert cmd.dv_cmd == (1.0, 2.0) and cmd.di_cmd == (3.0, 4.0)
