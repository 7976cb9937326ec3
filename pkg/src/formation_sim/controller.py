"""The distributed control laws, continuous-time and sampled-data.

Both laws consume only quantities an agent can measure in its own body
frame: the target's position and velocity and the neighbors' positions.
The command splits into a radial term regulating the distance to the
target and a tangential term driving rotation about it; a scalar coupling
computed from the angular spacings to the sensed neighbors modulates both,
which is what synchronizes the agents into the prescribed pattern.

The sampled-data law is the same formula evaluated at the sampling
instants, with the resulting command rotated once into the global frame
and held constant over the sampling interval (zero-order hold).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional

import numpy as np

from .geometry import (
    DEGENERACY_EPS,
    DegenerateFrameError,
    angular_distance,
    as_vec,
    frame_angle,
    nearest_branch,
    rotate_velocity_to_local,
    to_local_frame,
    wrap_2pi,
)
from .topology import FormationSpec, Topology, degree_stats, gain_lower_bound


class GainBoundError(ValueError):
    """Coupling offset gain too small for the sensing graph."""


class IncompleteMeasurementError(ValueError):
    """A required neighbor is missing from the local measurement."""


@dataclass(frozen=True)
class ControllerParams:
    """Controller gains and, for sampled-data operation, the period.

    ``lam`` (> 0) scales the whole command, ``gamma`` (> 0) weights the
    radial error, ``mu`` (!= 0) sets tangential speed and rotation
    direction (positive = counterclockwise), and ``c`` offsets the
    spacing coupling so it stays positive.  ``h`` is the sampling period
    in seconds and may be omitted for continuous-time use.
    """

    lam: float
    gamma: float
    mu: float
    c: float
    h: Optional[float] = None

    def __post_init__(self):
        for name in ("lam", "gamma", "mu", "c"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.lam <= 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.mu == 0:
            raise ValueError("mu must be nonzero")
        if self.h is not None and not (math.isfinite(self.h) and self.h > 0):
            raise ValueError(f"sampling period h must be positive, got {self.h}")

    @classmethod
    def for_topology(
        cls, topology: Topology, lam: float, gamma: float, mu: float, c: float,
        h: Optional[float] = None,
    ) -> "ControllerParams":
        """Construct and enforce the coupling-gain bound for ``topology``."""
        params = cls(lam=lam, gamma=gamma, mu=mu, c=c, h=h)
        check_coupling_gain(params, topology)
        return params

    def with_h(self, h: float) -> "ControllerParams":
        return replace(self, h=h)


def check_coupling_gain(params: ControllerParams, topology: Topology) -> None:
    """Require ``c`` strictly above ``|mu| * max in-weight sum``.

    Every convergence guarantee rests on the coupling staying positive, so
    a violation is a hard error rather than a warning.
    """
    bound = gain_lower_bound(topology, params.mu)
    if not params.c > bound:
        raise GainBoundError(
            f"coupling offset c = {params.c:g} must exceed "
            f"|mu| * max weighted in-degree = {bound:g}"
        )


@dataclass(frozen=True)
class LocalMeasurement:
    """Everything agent i senses at one instant, in its own body frame."""

    target_pos: np.ndarray
    target_vel: np.ndarray
    neighbor_pos: dict[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "target_pos", as_vec(self.target_pos))
        object.__setattr__(self, "target_vel", as_vec(self.target_vel))
        object.__setattr__(
            self,
            "neighbor_pos",
            {int(j): as_vec(p) for j, p in dict(self.neighbor_pos).items()},
        )


def measure(
    positions: np.ndarray, target_pos, target_vel, topology: Topology, i: int
) -> LocalMeasurement:
    """Build agent i's measurement from global state (the sensing model)."""
    p_i = as_vec(positions[i])
    target_pos = as_vec(target_pos)
    return LocalMeasurement(
        target_pos=to_local_frame(p_i, target_pos, target_pos),
        target_vel=rotate_velocity_to_local(p_i, target_pos, target_vel),
        neighbor_pos={
            int(j): to_local_frame(p_i, target_pos, positions[j])
            for j in topology.neighbors(i)
        },
    )


def _spacing_terms(
    meas: LocalMeasurement,
    spec: FormationSpec,
    topology: Topology,
    i: int,
    alpha_hat_prev: Optional[Mapping[int, float]],
) -> float:
    total = 0.0
    for j in topology.neighbors(i):
        j = int(j)
        if j not in meas.neighbor_pos:
            raise IncompleteMeasurementError(
                f"agent {i + 1} requires a measurement of neighbor {j + 1}"
            )
        alpha_hat = angular_distance(meas.target_pos, meas.neighbor_pos[j])
        if alpha_hat_prev is not None and j in alpha_hat_prev:
            # keep the agent's spacing series continuous across branch cuts
            alpha_hat = nearest_branch(alpha_hat, alpha_hat_prev[j])
        total += topology.adjacency[i, j] * math.tanh(
            alpha_hat - spec.spacings[(i, j)]
        )
    return total


def coupling(
    meas: LocalMeasurement,
    spec: FormationSpec,
    topology: Topology,
    params: ControllerParams,
    i: int,
    alpha_hat_prev: Optional[Mapping[int, float]] = None,
) -> float:
    """Spacing coupling ``c + mu * sum_j a_ij * tanh(alpha_hat_ij - d_ij)``.

    Each spacing angle is measured from the body-frame positions alone and
    lands in ``[0, 2*pi)``; that wrapped value is the defined branch at the
    first evaluation.  ``alpha_hat_prev`` optionally carries the agent's
    previous continuous spacing per neighbor so the fresh measurement can
    be unwrapped onto the branch the agent has been tracking, keeping the
    spacing series continuous in time as the closed loop requires.
    """
    return params.c + params.mu * _spacing_terms(
        meas, spec, topology, i, alpha_hat_prev
    )


def continuous_control(
    meas: LocalMeasurement,
    spec: FormationSpec,
    topology: Topology,
    params: ControllerParams,
    i: int,
    alpha_hat_prev: Optional[Mapping[int, float]] = None,
) -> np.ndarray:
    """Body-frame velocity command for agent i.

    ``lam * rho * f * (gamma * (R_i^2 - rho^2), mu) + v_target``, where
    ``rho`` is the measured distance to the target and ``f`` the spacing
    coupling.  Undefined if the agent sits on the target.
    """
    rho = math.hypot(meas.target_pos[0], meas.target_pos[1])
    if rho < DEGENERACY_EPS:
        raise DegenerateFrameError(
            f"agent {i + 1} coincides with the target; control undefined"
        )
    f = coupling(meas, spec, topology, params, i, alpha_hat_prev)
    radius = spec.radii[i]
    scale = params.lam * rho * f
    return np.array(
        [
            scale * params.gamma * (radius * radius - rho * rho) + meas.target_vel[0],
            scale * params.mu + meas.target_vel[1],
        ]
    )


def sampled_control(
    meas_at_sample: LocalMeasurement,
    spec: FormationSpec,
    topology: Topology,
    params: ControllerParams,
    i: int,
    alpha_hat_prev: Optional[Mapping[int, float]] = None,
) -> np.ndarray:
    """Body-frame command computed at a sampling instant.

    Identical formula to :func:`continuous_control` with every input frozen
    at the sample.  The actuation contract is zero-order hold: the caller
    rotates this command into the global frame once, at the sample, and
    applies it unchanged until the next sample.
    """
    return continuous_control(
        meas_at_sample, spec, topology, params, i, alpha_hat_prev
    )


def global_control(
    positions: np.ndarray,
    target_pos,
    target_vel,
    spec: FormationSpec,
    topology: Topology,
    params: ControllerParams,
    i: int,
    alpha_hat_prev: Optional[Mapping[int, float]] = None,
) -> np.ndarray:
    """Global-frame form of the same law, for analysis and cross-checks.

    Equals ``rotation(alpha_i).T @ continuous_control(...)`` for the
    measurement taken at the same state; the simulation engine integrates
    this form directly.
    """
    p_i = as_vec(positions[i])
    target_pos = as_vec(target_pos)
    p_i0 = target_pos - p_i
    rho2 = float(p_i0 @ p_i0)
    if math.sqrt(rho2) < DEGENERACY_EPS:
        raise DegenerateFrameError(
            f"agent {i + 1} coincides with the target; control undefined"
        )
    alpha_i = frame_angle(p_i, target_pos)
    total = 0.0
    for j in topology.neighbors(i):
        j = int(j)
        alpha_hat = wrap_2pi(frame_angle(positions[j], target_pos) - alpha_i)
        if alpha_hat_prev is not None and j in alpha_hat_prev:
            alpha_hat = nearest_branch(alpha_hat, alpha_hat_prev[j])
        total += topology.adjacency[i, j] * math.tanh(
            alpha_hat - spec.spacings[(i, j)]
        )
    f = params.c + params.mu * total
    l_i = spec.radii[i] ** 2 - rho2
    gl = params.gamma * l_i
    u = -params.lam * f * np.array(
        [gl * p_i0[0] - params.mu * p_i0[1], params.mu * p_i0[0] + gl * p_i0[1]]
    )
    return u + as_vec(target_vel)


def sampling_bound(
    spec: FormationSpec, topology: Topology, params: ControllerParams
) -> float:
    """Conservative upper bound on the sampling period for local stability.

    ``min(1 / (2*gamma*lam*R^2*M), 1 / (lam*mu^2*d_max))`` with ``R`` the
    largest prescribed radius, ``d_max`` the largest weighted in-degree and
    ``M = c + |mu|*d_max`` the ceiling of the spacing coupling.  Callers
    compare ``h < sampling_bound(...)``.
    """
    r_max = float(spec.radii.max())
    d_max = degree_stats(topology).d_max
    m_bound = params.c + abs(params.mu) * d_max
    radial = 1.0 / (2.0 * params.gamma * params.lam * r_max * r_max * m_bound)
    angular = math.inf
    if d_max > 0:
        angular = 1.0 / (params.lam * params.mu * params.mu * d_max)
    return min(radial, angular)


def coupling_ceiling(topology: Topology, params: ControllerParams) -> float:
    """Upper bound ``M = c + |mu| * d_max`` of the spacing coupling."""
    return params.c + abs(params.mu) * degree_stats(topology).d_max


def linearization_matrix(
    topology: Topology, params: ControllerParams
) -> tuple[np.ndarray, bool]:
    """One-step matrix of the sampled spacing consensus near the formation.

    Returns ``H = I - s*(D - A)`` with ``s = h*lam*mu^2`` together with a
    flag telling whether every diagonal entry ``1 - s * d_i`` is positive,
    the condition under which the sampled spacing dynamics contract.
    """
    if params.h is None:
        raise ValueError("linearization requires a sampling period h")
    s = params.h * params.lam * params.mu * params.mu
    d_matrix = degree_stats(topology).degree_matrix
    h_matrix = np.eye(topology.n) - s * (d_matrix - topology.adjacency)
    return h_matrix, bool(np.all(np.diag(h_matrix) > 0))
