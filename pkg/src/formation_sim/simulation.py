"""Closed-loop time stepping for the N-agent encirclement system.

The engine integrates the closed-loop dynamics in the global frame, which
is algebraically identical to every agent running its body-frame law (the
equivalence is pinned down by tests against :mod:`formation_sim.controller`).
Continuous mode uses classical fixed-step RK4 with measurements, coupling
and target state re-evaluated at every stage; sampled mode applies each
held command exactly over its interval, with the target still advanced
analytically.

A target-relative polar integrator is provided as an independent oracle
for cross-validating the Cartesian engine on static-target runs.

Runs are deterministic: a (config, seed) pair always produces the same
trace, bit for bit.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .controller import ControllerParams, check_coupling_gain, sampling_bound
from .geometry import DEGENERACY_EPS, wrap_2pi, wrap_pi
from .targets import TargetModel
from .topology import (
    FormationSpec,
    Topology,
    check_admissible,
)


class SimulationWarning(UserWarning):
    """Configuration is legal but outside the comfortable/proven regime."""


class InadmissibleFormationError(ValueError):
    """Formation failed the admissibility check required to run."""


class DegenerateStateError(RuntimeError):
    """An agent came within the degeneracy threshold of the target."""

    def __init__(self, message: str, time: float):
        super().__init__(message)
        self.time = time


class NumericalDivergenceError(RuntimeError):
    """The state became non-finite (the step map diverged)."""

    def __init__(self, message: str, time: float):
        super().__init__(message)
        self.time = time


@dataclass(frozen=True)
class SimConfig:
    """Run settings: stepping mode, resolutions, duration, and initialization."""

    t_end: float
    mode: str = "continuous"
    dt: float = 1e-3
    h: Optional[float] = None
    seed: int = 0
    init_box: tuple[float, float, float, float] = (-5.0, -5.0, 5.0, 5.0)
    min_init_separation_from_target: float = 0.1
    order_slots_by_bearing: bool = False
    output_dt: Optional[float] = None
    positions: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.mode not in ("continuous", "sampled"):
            raise ValueError(f"mode must be 'continuous' or 'sampled', got {self.mode!r}")
        if not (math.isfinite(self.t_end) and self.t_end >= 0):
            raise ValueError(f"t_end must be non-negative, got {self.t_end}")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.h is not None and not (math.isfinite(self.h) and self.h > 0):
            raise ValueError(f"sampling period h must be positive, got {self.h}")
        if self.mode == "sampled" and self.h is None:
            raise ValueError("sampled mode requires the sampling period h")
        if self.output_dt is not None and self.output_dt <= 0:
            raise ValueError("output_dt must be positive when given")
        xmin, ymin, xmax, ymax = self.init_box
        if not (xmin < xmax and ymin < ymax):
            raise ValueError(f"init_box must be (xmin, ymin, xmax, ymax), got {self.init_box}")
        if self.min_init_separation_from_target < 0:
            raise ValueError("min_init_separation_from_target must be non-negative")
        if self.positions is not None:
            p = np.array(self.positions, dtype=float)
            if p.ndim != 2 or p.shape[1] != 2:
                raise ValueError("fixed positions must have shape (n, 2)")
            if not np.all(np.isfinite(p)):
                raise ValueError("fixed positions must be finite")
            p.setflags(write=False)
            object.__setattr__(self, "positions", p)


@dataclass(frozen=True)
class WorldState:
    """Instantaneous world state plus the angle continuity the agents track.

    ``alpha`` holds target->agent bearings kept continuous (unwrapped)
    across steps; ``alpha_hat`` holds the continuous angular spacings per
    sensing edge, started from the wrapped measurement in ``[0, 2*pi)``
    and never re-wrapped, ordered like ``topology.observation_pairs()``.
    """

    time: float
    positions: np.ndarray
    target_pos: np.ndarray
    target_vel: np.ndarray
    alpha: np.ndarray
    alpha_hat: np.ndarray

    @classmethod
    def initial(
        cls, positions, topology: Topology, target: TargetModel
    ) -> "WorldState":
        positions = np.array(positions, dtype=float)
        target_pos, target_vel = target.state(0.0)
        rel = positions - target_pos
        rho = np.hypot(rel[:, 0], rel[:, 1])
        if np.any(rho < DEGENERACY_EPS):
            bad = int(np.argmin(rho))
            raise DegenerateStateError(
                f"agent {bad + 1} starts on the target position", 0.0
            )
        alpha = np.arctan2(rel[:, 1], rel[:, 0])
        pairs = np.array(topology.observation_pairs(), dtype=int).reshape(-1, 2)
        alpha_hat = np.array(
            [wrap_2pi(alpha[j] - alpha[i]) for i, j in pairs]
        )
        return cls(0.0, positions, target_pos, target_vel, alpha, alpha_hat)


@dataclass(frozen=True)
class SimulationTrace:
    """Time-indexed record of one run, self-contained for post-processing."""

    times: np.ndarray
    positions: np.ndarray
    rho: np.ndarray
    alpha: np.ndarray
    alpha_hat: np.ndarray
    target_pos: np.ndarray
    target_vel: np.ndarray
    min_rho: np.ndarray
    min_pairwise_distance: np.ndarray
    observation_pairs: np.ndarray
    edge_weights: np.ndarray
    edge_spacings: np.ndarray
    radii: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def n_agents(self) -> int:
        return self.positions.shape[1]

    @property
    def n_edges(self) -> int:
        return self.observation_pairs.shape[0]

    def relative_positions(self) -> np.ndarray:
        """Series of target-relative positions ``p_0 - p_i``, shape (S, N, 2)."""
        return self.target_pos[:, None, :] - self.positions

    def radial_errors(self) -> np.ndarray:
        """Series of ``|rho_i - R_i|``, shape (S, N)."""
        return np.abs(self.rho - self.radii[None, :])

    def spacing_errors(self) -> np.ndarray:
        """Series of spacing errors wrapped to ``(-pi, pi]``, shape (S, E)."""
        return wrap_pi(self.alpha_hat - self.edge_spacings[None, :])


def _edge_arrays(spec: FormationSpec, topology: Topology):
    pairs = topology.observation_pairs()
    edge_i = np.array([i for i, _ in pairs], dtype=np.int64)
    edge_j = np.array([j for _, j in pairs], dtype=np.int64)
    edge_w = np.array([topology.adjacency[i, j] for i, j in pairs], dtype=float)
    edge_d = spec.spacing_vector(topology)
    return edge_i, edge_j, edge_w, edge_d


def random_initial_positions(
    config: SimConfig, n: int, target_pos, rng: np.random.Generator
) -> np.ndarray:
    """Uniform draws over the init box, re-drawn while too close to the target.

    Agents may coincide with each other; only agent/target coincidence is
    excluded.  With ``order_slots_by_bearing`` the drawn points are handed
    out to agent slots in counterclockwise bearing order about the target,
    so the team's initial angular order matches an ascending-phase
    formation.  On a sensing graph with a cycle, the cyclic order (the
    winding of the spacing angles around the cycle) is conserved by the
    closed loop, so matching it at start is what makes convergence to the
    prescribed pattern independent of the draw.
    """
    xmin, ymin, xmax, ymax = config.init_box
    target_pos = np.asarray(target_pos, dtype=float)
    out = np.empty((n, 2))
    for i in range(n):
        while True:
            p = rng.uniform((xmin, ymin), (xmax, ymax))
            if np.hypot(*(p - target_pos)) >= config.min_init_separation_from_target:
                out[i] = p
                break
    if config.order_slots_by_bearing:
        rel = out - target_pos
        out = out[np.argsort(np.arctan2(rel[:, 1], rel[:, 0]))]
    return out


def _reference_rhs(positions, target_pos, target_vel, alpha_raw_ref, ahat_ref,
                   edge_i, edge_j, edge_w, edge_d, radii2, params):
    """Pure-numpy mirror of the jitted stage evaluation (reference path)."""
    rel = positions - target_pos
    rho2 = rel[:, 0] ** 2 + rel[:, 1] ** 2
    raw = np.arctan2(rel[:, 1], rel[:, 0])
    dalpha = wrap_pi(raw - alpha_raw_ref)
    ahat = ahat_ref + dalpha[edge_j] - dalpha[edge_i]
    terms = edge_w * np.tanh(ahat - edge_d)
    f = params.c + params.mu * np.bincount(
        edge_i, weights=terms, minlength=positions.shape[0]
    )
    gl = params.gamma * (radii2 - rho2)
    s = params.lam * f
    return np.column_stack([
        s * (gl * rel[:, 0] - params.mu * rel[:, 1]) + target_vel[0],
        s * (params.mu * rel[:, 0] + gl * rel[:, 1]) + target_vel[1],
    ])


def _advance_state(state: WorldState, new_positions, new_time,
                   topology: Topology, target: TargetModel) -> WorldState:
    target_pos, target_vel = target.state(new_time)
    rel = new_positions - target_pos
    rho = np.hypot(rel[:, 0], rel[:, 1])
    if not np.all(np.isfinite(new_positions)):
        raise NumericalDivergenceError(
            f"agent state became non-finite at t = {new_time:g}", new_time
        )
    if np.any(rho < DEGENERACY_EPS):
        bad = int(np.argmin(rho))
        raise DegenerateStateError(
            f"agent {bad + 1} reached the target (separation < {DEGENERACY_EPS:g}) "
            f"at t = {new_time:g}",
            new_time,
        )
    old_rel = state.positions - state.target_pos
    old_raw = np.arctan2(old_rel[:, 1], old_rel[:, 0])
    raw = np.arctan2(rel[:, 1], rel[:, 0])
    dstep = wrap_pi(raw - old_raw)
    pairs = np.array(topology.observation_pairs(), dtype=int).reshape(-1, 2)
    alpha_hat = state.alpha_hat + dstep[pairs[:, 1]] - dstep[pairs[:, 0]]
    return WorldState(
        new_time, new_positions, target_pos, target_vel,
        state.alpha + dstep, alpha_hat,
    )


def step_continuous(
    state: WorldState, dt: float, spec: FormationSpec, topology: Topology,
    params: ControllerParams, target: TargetModel,
) -> WorldState:
    """One RK4 step of the coupled closed-loop dynamics.

    Measurements, coupling, and the target state are re-evaluated at every
    stage; the target is advanced analytically.
    """
    edge_i, edge_j, edge_w, edge_d = _edge_arrays(spec, topology)
    radii2 = spec.radii ** 2
    t0 = state.time
    rel0 = state.positions - state.target_pos
    raw_ref = np.arctan2(rel0[:, 1], rel0[:, 0])

    def rhs(positions, tpos, tvel):
        return _reference_rhs(positions, tpos, tvel, raw_ref, state.alpha_hat,
                              edge_i, edge_j, edge_w, edge_d, radii2, params)

    mid_pos, mid_vel = target.state(t0 + 0.5 * dt)
    end_pos, end_vel = target.state(t0 + dt)
    k1 = rhs(state.positions, state.target_pos, state.target_vel)
    k2 = rhs(state.positions + 0.5 * dt * k1, mid_pos, mid_vel)
    k3 = rhs(state.positions + 0.5 * dt * k2, mid_pos, mid_vel)
    k4 = rhs(state.positions + dt * k3, end_pos, end_vel)
    new_positions = state.positions + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
    return _advance_state(state, new_positions, t0 + dt, topology, target)


def step_sampled(
    state: WorldState, h: float, spec: FormationSpec, topology: Topology,
    params: ControllerParams, target: TargetModel,
) -> WorldState:
    """One zero-order-hold interval.

    The command is computed from the state sampled at the interval start,
    rotated once into the global frame, and held; because the held velocity
    is constant, the position update over the interval is exact.  The
    target follows its true trajectory rather than being held.
    """
    edge_i, edge_j, edge_w, edge_d = _edge_arrays(spec, topology)
    radii2 = spec.radii ** 2
    rel0 = state.positions - state.target_pos
    raw_ref = np.arctan2(rel0[:, 1], rel0[:, 0])
    u = _reference_rhs(state.positions, state.target_pos, state.target_vel,
                       raw_ref, state.alpha_hat,
                       edge_i, edge_j, edge_w, edge_d, radii2, params)
    new_positions = state.positions + h * u
    return _advance_state(state, new_positions, state.time + h, topology, target)


def _hash(obj) -> str:
    return hashlib.sha256(
        json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()[:16]


def _resolve_sample_step(config: SimConfig, params: ControllerParams) -> float:
    if config.h is not None and params.h is not None and config.h != params.h:
        raise ValueError(
            f"conflicting sampling periods: config h = {config.h:g}, "
            f"controller h = {params.h:g}"
        )
    h = config.h if config.h is not None else params.h
    if h is None:
        raise ValueError("sampled mode requires a sampling period h")
    return h


def run(
    config: SimConfig,
    spec: FormationSpec,
    topology: Topology,
    params: ControllerParams,
    target: TargetModel,
) -> SimulationTrace:
    """Simulate the closed loop over ``[0, t_end]`` and return the trace.

    Validates the formation, graph, and gain preconditions, then hands the
    loop to a jitted kernel.  The trace is sampled every ``output_dt``
    (rounded to a whole number of steps; every step when unset).
    """
    verdict = check_admissible(spec, topology)
    if not verdict:
        raise InadmissibleFormationError(verdict.reason)
    check_coupling_gain(params, topology)

    h_max = sampling_bound(spec, topology, params)
    flags: list[str] = []
    if config.mode == "continuous":
        step = config.dt
        if step > h_max / 10.0:
            warnings.warn(
                f"integration step dt = {step:g} exceeds one tenth of the "
                f"sampling stability bound ({h_max / 10.0:g}); accuracy may degrade",
                SimulationWarning,
                stacklevel=2,
            )
    else:
        step = _resolve_sample_step(config, params)
        if step >= h_max:
            message = (
                f"sampling period h = {step:g} is not below the conservative "
                f"stability bound h_max = {h_max:g}; convergence is empirical"
            )
            flags.append(message)
            warnings.warn(message, SimulationWarning, stacklevel=2)
        if not target.is_static:
            message = (
                "sampled-data control with a moving target is outside the "
                "analyzed regime; results are empirical"
            )
            flags.append(message)
            warnings.warn(message, SimulationWarning, stacklevel=2)

    rng = np.random.default_rng(config.seed)
    target_pos0, _ = target.state(0.0)
    if config.positions is not None:
        if config.positions.shape[0] != topology.n:
            raise ValueError(
                f"fixed positions given for {config.positions.shape[0]} agents, "
                f"topology has {topology.n}"
            )
        positions0 = np.array(config.positions, dtype=float)
    else:
        positions0 = random_initial_positions(config, topology.n, target_pos0, rng)

    n_steps = int(round(config.t_end / step))
    out_every = 1
    if config.output_dt is not None:
        out_every = max(1, int(round(config.output_dt / step)))

    edge_i, edge_j, edge_w, edge_d = _edge_arrays(spec, topology)
    radii2 = spec.radii ** 2
    kernel = (_kernels.run_continuous if config.mode == "continuous"
              else _kernels.run_sampled)
    (status, fail_step, n_filled, out_t, out_pos, out_alpha, out_ahat,
     out_tpos, out_tvel, out_rho, out_minrho, out_minpair) = kernel(
        positions0, target.kind_code, target.data, step, n_steps, out_every,
        edge_i, edge_j, edge_w, edge_d, radii2,
        params.lam, params.gamma, params.mu, params.c,
    )
    if status == 1:
        raise DegenerateStateError(
            f"an agent reached the target (separation < {DEGENERACY_EPS:g}) "
            f"at t = {fail_step * step:g}",
            fail_step * step,
        )
    if status == 2:
        raise NumericalDivergenceError(
            f"agent state became non-finite at t = {fail_step * step:g}",
            fail_step * step,
        )

    pairs = np.array(list(zip(edge_i, edge_j)), dtype=int).reshape(-1, 2)
    params_doc = {"lam": params.lam, "gamma": params.gamma, "mu": params.mu,
                  "c": params.c, "h": params.h}
    config_doc = {"mode": config.mode, "dt": config.dt, "h": config.h,
                  "t_end": config.t_end, "seed": config.seed,
                  "init_box": list(config.init_box),
                  "min_init_separation_from_target":
                      config.min_init_separation_from_target,
                  "order_slots_by_bearing": config.order_slots_by_bearing,
                  "output_dt": config.output_dt,
                  "fixed_positions": config.positions is not None}
    formation_doc = {"radii": spec.radii.tolist(),
                     "spacings": [[i + 1, j + 1, spec.spacings[(i, j)]]
                                  for i, j in topology.observation_pairs()]}
    topology_doc = {"adjacency": topology.adjacency.tolist()}
    metadata = {
        "mode": config.mode,
        "step": step,
        "t_end": config.t_end,
        "seed": config.seed,
        "output_every": out_every,
        "sampling_stability_bound": h_max,
        "target": {"kind": target.kind, "data": target.data.tolist()},
        "flags": flags,
        "config_hash": _hash(config_doc),
        "params_hash": _hash(params_doc),
        "formation_hash": _hash(formation_doc),
        "topology_hash": _hash(topology_doc),
        "params": params_doc,
    }
    return SimulationTrace(
        times=out_t[:n_filled],
        positions=out_pos[:n_filled],
        rho=out_rho[:n_filled],
        alpha=out_alpha[:n_filled],
        alpha_hat=out_ahat[:n_filled],
        target_pos=out_tpos[:n_filled],
        target_vel=out_tvel[:n_filled],
        min_rho=out_minrho[:n_filled],
        min_pairwise_distance=out_minpair[:n_filled],
        observation_pairs=pairs,
        edge_weights=edge_w,
        edge_spacings=edge_d,
        radii=spec.radii.copy(),
        metadata=metadata,
    )


def polar_oracle_continuous(
    initial: WorldState,
    spec: FormationSpec,
    topology: Topology,
    params: ControllerParams,
    t_end: float,
    dt: float,
    output_every: int = 1,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Integrate the target-relative polar dynamics as an independent oracle.

    Valid for a static target only (the polar form is written in
    target-relative coordinates with no drift term).  Returns
    ``(times, rho, alpha)`` with unwrapped bearing angles; spacing angles
    are reconstructed as unwrapped bearing differences carrying the same
    branch the initial state tracks, matching the Cartesian engine.
    """
    if np.any(initial.target_vel != 0.0):
        raise ValueError("the polar oracle requires a static target")
    edge_i, edge_j, edge_w, edge_d = _edge_arrays(spec, topology)
    rel = initial.positions - initial.target_pos
    rho0 = np.hypot(rel[:, 0], rel[:, 1])
    alpha0 = initial.alpha.copy()
    ahat_off = initial.alpha_hat - (alpha0[edge_j] - alpha0[edge_i])
    n_steps = int(round(t_end / dt))
    return _kernels.run_polar(
        rho0, alpha0, ahat_off, edge_i, edge_j, edge_w, edge_d,
        spec.radii ** 2, params.lam, params.gamma, params.mu, params.c,
        dt, n_steps, output_every,
    )


def warmup_kernels() -> None:
    """Trigger jit compilation of all kernels on tiny inputs."""
    topo = Topology.directed_ring(2)
    spec = FormationSpec.from_certificate([1.0, 1.0], [0.0, math.pi], topo)
    params = ControllerParams(lam=0.5, gamma=1.0, mu=-1.0, c=2.1, h=0.01)
    target = TargetModel.static((0.0, 0.0))
    positions = np.array([[1.0, 0.0], [-1.0, 0.0]])
    for mode in ("continuous", "sampled"):
        cfg = SimConfig(t_end=0.02, mode=mode, dt=0.01, h=0.01, positions=positions)
        run(cfg, spec, topo, params, target)
    state = WorldState.initial(positions, topo, target)
    polar_oracle_continuous(state, spec, topo, params, t_end=0.02, dt=0.01)
    _kernels.run_consensus(np.array([0.1, -0.2]), topo.adjacency,
                           params.lam * params.mu ** 2, 0.01, 2)
    for kind in (TargetModel.constant_velocity((0, 0), (0.1, 0)),
                 TargetModel.sinusoid((0, 0)),
                 TargetModel.waypoints([[0, 0, 0], [1, 1, 0]])):
        kind.state(0.5)
