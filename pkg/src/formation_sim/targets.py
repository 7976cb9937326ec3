"""Analytic target trajectory models.

Every model provides position and velocity as exact closed forms, with the
velocity the true time derivative of the position, so the simulation can
advance the target without integration error at arbitrary times.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .geometry import as_vec

_KIND_CODES = {
    "static": _kernels.TARGET_STATIC,
    "constant_velocity": _kernels.TARGET_CONSTANT_VELOCITY,
    "sinusoid": _kernels.TARGET_SINUSOID,
    "waypoints": _kernels.TARGET_WAYPOINTS,
}


@dataclass(frozen=True)
class TargetModel:
    """One of: static point, constant velocity, sinusoidal sweep, waypoints."""

    kind: str
    data: np.ndarray

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise ValueError(
                f"unknown target kind {self.kind!r}; expected one of "
                f"{sorted(_KIND_CODES)}"
            )
        d = np.array(self.data, dtype=float)
        if not np.all(np.isfinite(d)):
            raise ValueError("target parameters must be finite")
        d.setflags(write=False)
        object.__setattr__(self, "data", d)

    @classmethod
    def static(cls, position=(0.0, 0.0)) -> "TargetModel":
        return cls("static", as_vec(position))

    @classmethod
    def constant_velocity(cls, start=(0.0, 0.0), velocity=(0.0, 0.0)) -> "TargetModel":
        return cls(
            "constant_velocity", np.concatenate([as_vec(start), as_vec(velocity)])
        )

    @classmethod
    def sinusoid(
        cls, start=(0.0, 0.0), speed: float = 0.1,
        amplitude: float = 1.0, omega: float = 0.2,
    ) -> "TargetModel":
        """Drifts along x at ``speed`` while y sweeps ``amplitude * sin(omega * t)``."""
        start = as_vec(start)
        return cls(
            "sinusoid",
            np.array([start[0], start[1], float(speed), float(amplitude), float(omega)]),
        )

    @classmethod
    def waypoints(cls, points) -> "TargetModel":
        """Piecewise-linear track through (t, x, y) rows with increasing t.

        The target holds the first/last point outside the listed time span.
        """
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 2:
            raise ValueError("waypoints need at least two (t, x, y) rows")
        if np.any(np.diff(pts[:, 0]) <= 0):
            raise ValueError("waypoint times must be strictly increasing")
        return cls("waypoints", pts.ravel())

    @property
    def kind_code(self) -> int:
        return _KIND_CODES[self.kind]

    @property
    def is_static(self) -> bool:
        if self.kind == "static":
            return True
        if self.kind == "constant_velocity":
            return bool(np.all(self.data[2:4] == 0.0))
        return False

    def state(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Position and velocity at time ``t``."""
        px, py, vx, vy = _kernels.target_state(self.kind_code, self.data, float(t))
        return np.array([px, py]), np.array([vx, vy])


def target_state(model: TargetModel, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Functional alias for :meth:`TargetModel.state`."""
    if t < 0:
        raise ValueError(f"time must be non-negative, got {t}")
    return model.state(t)
