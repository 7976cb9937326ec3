"""Planar vector math, per-agent body frames, and measurement transforms.

Each agent carries a moving frame with its origin at the agent and its
x-axis pointing *away* from the target (opposite the target->agent ray).
All measurements the distributed controller consumes (target position,
target velocity, neighbor positions) are expressed in this frame, so the
functions here are the complete sensing model of the simulator.

Angles are radians.  Wrapped angles live in ``[0, 2*pi)`` (angular
spacings) or ``(-pi, pi]`` (differences); time series of angles are kept
continuous by nearest-branch unwrapping, never by re-wrapping.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

TWO_PI = 2.0 * math.pi

# Agent/target separations below this leave the body frame undefined.
DEGENERACY_EPS = 1e-9


class DegenerateFrameError(ValueError):
    """Agent and target (near-)coincide, so the body frame is undefined."""


class UndefinedAngleError(ValueError):
    """Angular distance is undefined because the sighted agent sits on the target."""


def vec(x: float, y: float) -> np.ndarray:
    """Build a finite 2-vector; rejects NaN/Inf components."""
    v = np.array([x, y], dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"vector components must be finite, got ({x}, {y})")
    return v


def as_vec(value) -> np.ndarray:
    """Coerce to a finite float vector of shape (2,)."""
    v = np.asarray(value, dtype=float)
    if v.shape != (2,):
        raise ValueError(f"expected a 2-vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"vector components must be finite, got {v}")
    return v


def wrap_pi(angle):
    """Wrap angle(s) to ``(-pi, pi]``."""
    wrapped = np.mod(-np.asarray(angle) + math.pi, TWO_PI)
    return -(wrapped - math.pi)


def wrap_2pi(angle):
    """Wrap angle(s) to ``[0, 2*pi)``."""
    wrapped = np.mod(angle, TWO_PI)
    # float rounding can land exactly on 2*pi; fold it back to 0
    return np.where(wrapped >= TWO_PI, 0.0, wrapped) if np.ndim(wrapped) else (
        0.0 if wrapped >= TWO_PI else float(wrapped)
    )


def nearest_branch(angle: float, reference: float) -> float:
    """Shift ``angle`` by a multiple of 2*pi so it lands nearest ``reference``."""
    return angle + TWO_PI * round((reference - angle) / TWO_PI)


class PolarState(NamedTuple):
    """Target-relative polar coordinates of one agent.

    ``rho`` is the distance to the target; ``alpha`` is the global angle of
    the ray target->agent, kept continuous (unwrapped) in time series.
    """

    rho: float
    alpha: float


def rotation(alpha: float) -> np.ndarray:
    """Rotation matrix mapping global-frame vectors into a body frame at angle ``alpha``.

    The matrix is ``[[cos a, sin a], [-sin a, cos a]]``; its inverse is its
    transpose.
    """
    if not math.isfinite(alpha):
        raise ValueError(f"angle must be finite, got {alpha}")
    c, s = math.cos(alpha), math.sin(alpha)
    return np.array([[c, s], [-s, c]])


def frame_angle(p_i, p_0) -> float:
    """Global angle of the ray target->agent, i.e. the angle of ``p_i - p_0``.

    Raises:
        DegenerateFrameError: if the agent (near-)coincides with the target.
    """
    p_i = as_vec(p_i)
    p_0 = as_vec(p_0)
    dx, dy = p_i[0] - p_0[0], p_i[1] - p_0[1]
    if math.hypot(dx, dy) < DEGENERACY_EPS:
        raise DegenerateFrameError(
            f"agent at {tuple(p_i)} coincides with target at {tuple(p_0)}"
        )
    return math.atan2(dy, dx)


def to_local_frame(p_i, p_0, q_global) -> np.ndarray:
    """Express the global point ``q_global`` in agent i's body frame.

    The frame has origin ``p_i`` and x-axis opposite the target->agent ray,
    so the target itself always maps to ``(-|p_0 - p_i|, 0)``.
    """
    alpha = frame_angle(p_i, p_0)
    return rotation(alpha) @ (as_vec(q_global) - as_vec(p_i))


def rotate_velocity_to_local(p_i, p_0, v_global) -> np.ndarray:
    """Rotate a global-frame velocity into agent i's body frame (no translation)."""
    alpha = frame_angle(p_i, p_0)
    return rotation(alpha) @ as_vec(v_global)


def angular_distance(p_0_local: np.ndarray, p_j_local: np.ndarray) -> float:
    """Counterclockwise angle about the target from agent i's ray to agent j's ray.

    Both arguments are positions measured in agent i's body frame:
    ``p_0_local`` the target and ``p_j_local`` the sighted neighbor.  The
    result is in ``[0, 2*pi)``: the angle between ``-p_0_local`` (target->i)
    and ``p_j_local - p_0_local`` (target->j) when the cross product of the
    two is non-negative, and 2*pi minus that angle otherwise.

    Raises:
        DegenerateFrameError: target sits on the observing agent.
        UndefinedAngleError: sighted agent sits on the target.
    """
    p_0_local = as_vec(p_0_local)
    p_j_local = as_vec(p_j_local)
    ux, uy = -p_0_local[0], -p_0_local[1]
    wx, wy = p_j_local[0] - p_0_local[0], p_j_local[1] - p_0_local[1]
    if math.hypot(ux, uy) < DEGENERACY_EPS:
        raise DegenerateFrameError("target coincides with the observing agent")
    if math.hypot(wx, wy) < DEGENERACY_EPS:
        raise UndefinedAngleError(
            "sighted agent coincides with the target; angular distance undefined"
        )
    cross = ux * wy - uy * wx
    dot = ux * wx + uy * wy
    angle = math.atan2(cross, dot)
    if angle < 0.0:
        angle += TWO_PI
    return 0.0 if angle >= TWO_PI else angle


def polar_of_relative(p_i0) -> PolarState:
    """Polar coordinates of the relative position ``p_i0 = p_0 - p_i``.

    Satisfies ``p_i0 == -rho * (cos(alpha), sin(alpha))``.
    """
    p_i0 = as_vec(p_i0)
    rho = math.hypot(p_i0[0], p_i0[1])
    if rho < DEGENERACY_EPS:
        raise DegenerateFrameError("agent coincides with target; polar angle undefined")
    alpha = math.atan2(-p_i0[1], -p_i0[0])
    return PolarState(rho, alpha)


def relative_of_polar(rho: float, alpha: float) -> np.ndarray:
    """Inverse of :func:`polar_of_relative`."""
    if rho < 0.0:
        raise ValueError(f"radius must be non-negative, got {rho}")
    return np.array([-rho * math.cos(alpha), -rho * math.sin(alpha)])
