"""Reference-frame transforms and the interface command law.

The interface wraps an inverter with a series voltage source and a shunt
current source. Both sources are driven by deviations of the terminal
voltage/current from captured steady-state references:

    dv_cmd = (1 - kappa) * dv - beta * di
    di_cmd = -alpha * dv

applied per axis in the device d-q frame (scalar gains, so the law commutes
with frame rotations).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import StaleReference

TWO_PI = 2.0 * math.pi
_TWO_THIRDS_PI = TWO_PI / 3.0


@dataclass(frozen=True)
class FrameAngle:
    """Instantaneous Park angle theta = omega*t + delta of one device frame.

    delta is the slow offset of the device frame relative to the common
    frame; theta is the full electrical angle used by the abc transforms.
    """

    theta: float
    delta: float = 0.0

    def wrapped(self) -> "FrameAngle":
        return FrameAngle(self.theta % TWO_PI, self.delta)


def park(abc, theta: float) -> np.ndarray:
    """Three-phase triple -> (d, q, zero) at electrical angle theta.

    Uses the 2/3-scaled sin/cos matrix, so a balanced set of amplitude V
    aligned with theta maps to (V, 0, 0).
    """
    a, b, c = abc
    s0 = math.sin(theta)
    s1 = math.sin(theta - _TWO_THIRDS_PI)
    s2 = math.sin(theta + _TWO_THIRDS_PI)
    c0 = math.cos(theta)
    c1 = math.cos(theta - _TWO_THIRDS_PI)
    c2 = math.cos(theta + _TWO_THIRDS_PI)
    d = (2.0 / 3.0) * (a * s0 + b * s1 + c * s2)
    q = (2.0 / 3.0) * (a * c0 + b * c1 + c * c2)
    z = (a + b + c) / 3.0
    return np.array([d, q, z])


def inv_park(dq0, theta: float) -> np.ndarray:
    """Inverse of :func:`park`; exact round trip for all inputs."""
    d, q, z = dq0
    a = d * math.sin(theta) + q * math.cos(theta) + z
    b = d * math.sin(theta - _TWO_THIRDS_PI) + q * math.cos(theta - _TWO_THIRDS_PI) + z
    c = d * math.sin(theta + _TWO_THIRDS_PI) + q * math.cos(theta + _TWO_THIRDS_PI) + z
    return np.array([a, b, c])


def rotation(delta: float) -> np.ndarray:
    """Device-frame -> common-frame rotation for a frame offset delta."""
    cd = math.cos(delta)
    sd = math.sin(delta)
    return np.array([[cd, -sd], [sd, cd]])


def dq_to_dq0common(v_dq, delta: float) -> np.ndarray:
    """Rotate a device-frame (d, q) pair into the common (D, Q) frame."""
    d, q = v_dq
    cd = math.cos(delta)
    sd = math.sin(delta)
    return np.array([cd * d - sd * q, sd * d + cd * q])


def dq0common_to_dq(v_DQ, delta: float) -> np.ndarray:
    """Inverse of :func:`dq_to_dq0common` (the rotation is orthogonal, so
    the inverse is the transpose)."""
    D, Q = v_DQ
    cd = math.cos(delta)
    sd = math.sin(delta)
    return np.array([cd * D + sd * Q, -sd * D + cd * Q])


@dataclass(frozen=True)
class PeiReferences:
    """Steady-state terminal references (device frame) the deviations are
    measured against."""

    v_hat_odq: tuple[float, float]
    i_hat_odq: tuple[float, float]


@dataclass(frozen=True)
class PeiCommand:
    """Series-source voltage and shunt-source current deviation commands."""

    dv_cmd: tuple[float, float]
    di_cmd: tuple[float, float]


def pei_step(v_meas_odq, i_meas_odq, refs: PeiReferences, cfg) -> PeiCommand:
    """One evaluation of the interface law on measured terminal quantities.

    cfg carries (alpha, beta, kappa); it is expected to have passed
    verify_pei. Total function: no error paths.
    """
    dv_d = v_meas_odq[0] - refs.v_hat_odq[0]
    dv_q = v_meas_odq[1] - refs.v_hat_odq[1]
    di_d = i_meas_odq[0] - refs.i_hat_odq[0]
    di_q = i_meas_odq[1] - refs.i_hat_odq[1]
    omk = 1.0 - cfg.kappa
    return PeiCommand(
        dv_cmd=(omk * dv_d - cfg.beta * di_d, omk * dv_q - cfg.beta * di_q),
        di_cmd=(-cfg.alpha * dv_d, -cfg.alpha * dv_q),
    )


def capture_references(op_point, ibr_index: int) -> PeiReferences:
    """Freeze interface references at a verified operating point.

    The default (and only automatic) acquisition mode: references equal the
    operating-point terminal values of the chosen device.
    """
    v = op_point.v_odq[ibr_index]
    i = op_point.i_odq[ibr_index]
    return PeiReferences(v_hat_odq=(v[0], v[1]), i_hat_odq=(i[0], i[1]))


class ReferenceTracker:
    """Optional slow first-order re-centering of interface references.

    cutoff (rad/s) defaults to 2, far below the device fast dynamics, so the
    tracker never interferes with stabilization. Warns with StaleReference
    when the tracked value keeps a persistent offset from the incoming
    measurement for longer than `stale_after` seconds (the references are
    then chasing a moving target).
    """

    def __init__(self, refs: PeiReferences, cutoff: float = 2.0,
                 drift_tol: float = 1.0, stale_after: float = 5.0):
        self.cutoff = cutoff
        self.drift_tol = drift_tol
        self.stale_after = stale_after
        self._v = np.array(refs.v_hat_odq, dtype=float)
        self._i = np.array(refs.i_hat_odq, dtype=float)
        self._drift_time = 0.0
        self._warned = False

    @property
    def refs(self) -> PeiReferences:
        return PeiReferences(tuple(self._v), tuple(self._i))

    def advance(self, v_meas_odq, i_meas_odq, dt: float) -> PeiReferences:
        v = np.asarray(v_meas_odq, dtype=float)
        i = np.asarray(i_meas_odq, dtype=float)
        a = 1.0 - math.exp(-self.cutoff * dt)
        self._v += a * (v - self._v)
        self._i += a * (i - self._i)
        gap = max(np.max(np.abs(v - self._v)), np.max(np.abs(i - self._i)))
        if gap > self.drift_tol:
            self._drift_time += dt
        else:
            self._drift_time = 0.0
        if self._drift_time > self.stale_after and not self._warned:
            warnings.warn(
                f"interface references lag measurements by more than "
                f"{self.drift_tol} for over {self.stale_after} s",
                StaleReference,
            )
            self._warned = True
        return self.refs
