"""Scenario files: schema, parsing, and validation.

A scenario is a YAML document with five sections::

    topology:            # sensing graph
      n: 7
      edges:             # each edge: observer "to" measures observed "from"
        - {from: 2, to: 1}            # optional weight, default 1.0
    formation:
      radii: [3.544, ...]             # one per agent, agent ids are 1-based
      certificate: [0, 0.9, ...]      # per-agent phases, expanded per edge
      # and/or explicit per-edge spacings:
      # spacings: [{i: 1, j: 2, d: 0.9}, ...]
    params:
      lambda: 0.5
      gamma: 1.0
      mu: -1.0
      c: 1.1
      mode: continuous                # or sampled
      dt: 0.01                        # continuous integration step
      h: 0.1                          # sampling period (sampled mode)
      t_end: 100.0
      output_dt: 0.05                 # optional trace cadence
    target:
      kind: static                    # constant_velocity | sinusoid | waypoints
      position: [0, 0]
    init:
      seed: 1
      box: [-5, -5, 5, 5]
      min_target_separation: 0.1
      # positions: [[x, y], ...]      # optional fixed initial positions

Angles are radians; any angle may instead be written as a string with a
``deg`` suffix (``"90 deg"``).  Loading validates admissibility, graph
reachability, the coupling-gain bound, and (for sampled mode) the sampling
bound, and embeds the results in the returned scenario.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .controller import (
    ControllerParams,
    GainBoundError,
    check_coupling_gain,
    sampling_bound,
)
from .simulation import SimConfig
from .targets import TargetModel
from .topology import (
    FormationSpec,
    Topology,
    check_admissible,
    gain_lower_bound,
    has_directed_spanning_tree,
)


class ScenarioError(ValueError):
    """Scenario file failed to parse or validate."""


@dataclass(frozen=True)
class ValidationRecord:
    """Checks performed at load time, for embedding in run summaries."""

    admissible: bool
    certificate: Optional[list[float]]
    has_spanning_tree: bool
    gain_lower_bound: float
    coupling_gain: float
    sampling_stability_bound: float
    warnings: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return {
            "admissible": self.admissible,
            "certificate": self.certificate,
            "has_directed_spanning_tree": self.has_spanning_tree,
            "gain_lower_bound": self.gain_lower_bound,
            "coupling_gain": self.coupling_gain,
            "sampling_stability_bound": self.sampling_stability_bound,
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class Scenario:
    """A fully validated scenario ready to simulate."""

    topology: Topology
    formation: FormationSpec
    params: ControllerParams
    target: TargetModel
    config: SimConfig
    validation: ValidationRecord
    path: Optional[str] = None

    def with_overrides(
        self, mode: Optional[str] = None, seed: Optional[int] = None
    ) -> "Scenario":
        config = self.config
        if mode is not None:
            if mode == "sampled" and config.h is None and self.params.h is None:
                raise ScenarioError(
                    "cannot switch to sampled mode: no sampling period h in scenario"
                )
            config = replace(config, mode=mode)
        if seed is not None:
            config = replace(config, seed=int(seed))
        return replace(self, config=config)


def _fail(where: str, message: str) -> ScenarioError:
    return ScenarioError(f"{where}: {message}")


def _section(doc: dict, name: str, where: str) -> dict:
    if name not in doc:
        raise _fail(where, f"missing required section '{name}'")
    value = doc[name]
    if not isinstance(value, dict):
        raise _fail(where, f"section '{name}' must be a mapping")
    return value


def _get(section: dict, key: str, where: str, required: bool = True, default=None):
    if key not in section:
        if required:
            raise _fail(where, f"missing required key '{key}'")
        return default
    return section[key]


def parse_angle(value, where: str) -> float:
    """Angle in radians; accepts a number or a string with a ``deg`` suffix."""
    if isinstance(value, bool):
        raise _fail(where, f"expected an angle, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        text = value.strip()
        if text.endswith("deg"):
            try:
                return math.radians(float(text[:-3].strip()))
            except ValueError:
                raise _fail(where, f"cannot parse degrees value {value!r}") from None
        try:
            return float(text)
        except ValueError:
            raise _fail(where, f"cannot parse angle {value!r}") from None
    raise _fail(where, f"expected an angle, got {value!r}")


def _float(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise _fail(where, f"expected a number, got {value!r}")
    return float(value)


def _int(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise _fail(where, f"expected an integer, got {value!r}")
    return value


def _agent_index(value, n: int, where: str) -> int:
    idx = _int(value, where)
    if not (1 <= idx <= n):
        raise _fail(where, f"agent id {idx} out of range 1..{n}")
    return idx - 1


def _load_topology(doc: dict, where: str) -> Topology:
    section = _section(doc, "topology", where)
    n = _int(_get(section, "n", f"{where}.topology"), f"{where}.topology.n")
    if n < 2:
        raise _fail(f"{where}.topology.n", "at least two agents are required")
    edges = _get(section, "edges", f"{where}.topology")
    if not isinstance(edges, list) or not edges:
        raise _fail(f"{where}.topology.edges", "must be a non-empty list")
    pairs = []
    for k, entry in enumerate(edges):
        loc = f"{where}.topology.edges[{k}]"
        if not isinstance(entry, dict):
            raise _fail(loc, "each edge must be a mapping with 'from' and 'to'")
        j = _agent_index(_get(entry, "from", loc), n, f"{loc}.from")
        i = _agent_index(_get(entry, "to", loc), n, f"{loc}.to")
        if i == j:
            raise _fail(loc, "an agent cannot measure itself")
        w = _float(_get(entry, "weight", loc, required=False, default=1.0),
                   f"{loc}.weight")
        if w <= 0:
            raise _fail(f"{loc}.weight", f"weight must be positive, got {w:g}")
        pairs.append((i, j, w))
    try:
        return Topology.from_observations(n, pairs)
    except ValueError as exc:
        raise _fail(f"{where}.topology", str(exc)) from None


def _load_formation(doc: dict, topology: Topology, where: str) -> FormationSpec:
    section = _section(doc, "formation", where)
    radii_raw = _get(section, "radii", f"{where}.formation")
    if not isinstance(radii_raw, list) or len(radii_raw) != topology.n:
        raise _fail(f"{where}.formation.radii",
                    f"must list exactly {topology.n} radii")
    radii = [
        _float(v, f"{where}.formation.radii[{k}]") for k, v in enumerate(radii_raw)
    ]
    certificate = _get(section, "certificate", f"{where}.formation", required=False)
    spacings_raw = _get(section, "spacings", f"{where}.formation", required=False)
    if certificate is None and spacings_raw is None:
        raise _fail(f"{where}.formation",
                    "provide 'certificate' and/or per-edge 'spacings'")

    spec_from_cert = None
    if certificate is not None:
        if not isinstance(certificate, list) or len(certificate) != topology.n:
            raise _fail(f"{where}.formation.certificate",
                        f"must list exactly {topology.n} phases")
        phases = [
            parse_angle(v, f"{where}.formation.certificate[{k}]")
            for k, v in enumerate(certificate)
        ]
        for k, value in enumerate(phases):
            if not (0.0 <= value < 2.0 * math.pi):
                raise _fail(f"{where}.formation.certificate[{k}]",
                            f"phase {value:g} must lie in [0, 2*pi)")
        spec_from_cert = FormationSpec.from_certificate(radii, phases, topology)

    explicit = None
    if spacings_raw is not None:
        if not isinstance(spacings_raw, list):
            raise _fail(f"{where}.formation.spacings", "must be a list")
        explicit = {}
        for k, entry in enumerate(spacings_raw):
            loc = f"{where}.formation.spacings[{k}]"
            if not isinstance(entry, dict):
                raise _fail(loc, "each spacing must be a mapping with i, j, d")
            i = _agent_index(_get(entry, "i", loc), topology.n, f"{loc}.i")
            j = _agent_index(_get(entry, "j", loc), topology.n, f"{loc}.j")
            d = parse_angle(_get(entry, "d", loc), f"{loc}.d")
            if (i, j) in explicit:
                raise _fail(loc, f"duplicate spacing for edge ({i + 1}, {j + 1})")
            explicit[(i, j)] = d

    if spec_from_cert is not None and explicit is not None:
        for (i, j), d in explicit.items():
            generated = spec_from_cert.spacings.get((i, j))
            if generated is None:
                raise _fail(f"{where}.formation.spacings",
                            f"({i + 1}, {j + 1}) is not a sensing edge")
            err = abs((d - generated + math.pi) % (2.0 * math.pi) - math.pi)
            if err > 1e-9:
                raise _fail(
                    f"{where}.formation",
                    f"spacing for edge ({i + 1}, {j + 1}) disagrees with the "
                    f"certificate by {err:.3e} rad",
                )
        return spec_from_cert
    if spec_from_cert is not None:
        return spec_from_cert
    return FormationSpec(radii=radii, spacings=explicit)


def _load_params_and_config(doc: dict, where: str) -> tuple[ControllerParams, SimConfig]:
    section = _section(doc, "params", where)
    loc = f"{where}.params"
    lam = _float(_get(section, "lambda", loc), f"{loc}.lambda")
    gamma = _float(_get(section, "gamma", loc), f"{loc}.gamma")
    mu = _float(_get(section, "mu", loc), f"{loc}.mu")
    c = _float(_get(section, "c", loc), f"{loc}.c")
    mode = _get(section, "mode", loc, required=False, default="continuous")
    dt = _float(_get(section, "dt", loc, required=False, default=1e-3), f"{loc}.dt")
    h_raw = _get(section, "h", loc, required=False)
    h = None if h_raw is None else _float(h_raw, f"{loc}.h")
    t_end = _float(_get(section, "t_end", loc), f"{loc}.t_end")
    output_raw = _get(section, "output_dt", loc, required=False)
    output_dt = None if output_raw is None else _float(output_raw, f"{loc}.output_dt")

    init = doc.get("init", {})
    if not isinstance(init, dict):
        raise _fail(f"{where}.init", "section 'init' must be a mapping")
    seed = _int(_get(init, "seed", f"{where}.init", required=False, default=0),
                f"{where}.init.seed")
    box_raw = _get(init, "box", f"{where}.init", required=False,
                   default=[-5.0, -5.0, 5.0, 5.0])
    if not isinstance(box_raw, list) or len(box_raw) != 4:
        raise _fail(f"{where}.init.box", "must be [xmin, ymin, xmax, ymax]")
    box = tuple(_float(v, f"{where}.init.box[{k}]") for k, v in enumerate(box_raw))
    min_sep = _float(
        _get(init, "min_target_separation", f"{where}.init",
             required=False, default=0.1),
        f"{where}.init.min_target_separation",
    )
    order_by_bearing = _get(init, "order_by_bearing", f"{where}.init",
                            required=False, default=False)
    if not isinstance(order_by_bearing, bool):
        raise _fail(f"{where}.init.order_by_bearing", "must be true or false")
    positions = None
    if "positions" in init:
        raw = init["positions"]
        if not isinstance(raw, list):
            raise _fail(f"{where}.init.positions", "must be a list of [x, y] pairs")
        positions = []
        for k, point in enumerate(raw):
            if not isinstance(point, list) or len(point) != 2:
                raise _fail(f"{where}.init.positions[{k}]", "must be an [x, y] pair")
            positions.append(
                [_float(point[0], f"{where}.init.positions[{k}][0]"),
                 _float(point[1], f"{where}.init.positions[{k}][1]")]
            )
        positions = np.array(positions)

    try:
        params = ControllerParams(lam=lam, gamma=gamma, mu=mu, c=c, h=h)
        config = SimConfig(
            t_end=t_end, mode=mode, dt=dt, h=h, seed=seed, init_box=box,
            min_init_separation_from_target=min_sep,
            order_slots_by_bearing=order_by_bearing,
            output_dt=output_dt, positions=positions,
        )
    except ValueError as exc:
        raise _fail(loc, str(exc)) from None
    return params, config


def _load_target(doc: dict, where: str) -> TargetModel:
    section = _section(doc, "target", where)
    loc = f"{where}.target"
    kind = _get(section, "kind", loc)
    try:
        if kind == "static":
            return TargetModel.static(
                _get(section, "position", loc, required=False, default=[0.0, 0.0])
            )
        if kind == "constant_velocity":
            return TargetModel.constant_velocity(
                _get(section, "start", loc, required=False, default=[0.0, 0.0]),
                _get(section, "velocity", loc),
            )
        if kind == "sinusoid":
            return TargetModel.sinusoid(
                start=_get(section, "start", loc, required=False, default=[0.0, 0.0]),
                speed=_float(
                    _get(section, "speed", loc, required=False, default=0.1),
                    f"{loc}.speed"),
                amplitude=_float(
                    _get(section, "amplitude", loc, required=False, default=1.0),
                    f"{loc}.amplitude"),
                omega=_float(
                    _get(section, "omega", loc, required=False, default=0.2),
                    f"{loc}.omega"),
            )
        if kind == "waypoints":
            return TargetModel.waypoints(_get(section, "points", loc))
    except ScenarioError:
        raise
    except (ValueError, TypeError) as exc:
        raise _fail(loc, str(exc)) from None
    raise _fail(f"{loc}.kind",
                f"unknown target kind {kind!r}; expected static, "
                f"constant_velocity, sinusoid, or waypoints")


def load_scenario(path) -> Scenario:
    """Parse and fully validate a scenario file.

    Raises :class:`ScenarioError` with the offending location for parse
    errors and with the violated condition for validation failures.
    """
    path = Path(path)
    where = path.name
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"{where}: cannot read scenario: {exc}") from None
    try:
        doc = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        line = mark.line + 1 if mark is not None else "?"
        raise ScenarioError(f"{where}:{line}: {exc.problem or 'parse error'}") from None
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{where}: parse error: {exc}") from None
    if not isinstance(doc, dict):
        raise ScenarioError(f"{where}: scenario must be a YAML mapping")

    topology = _load_topology(doc, where)
    formation = _load_formation(doc, topology, where)
    params, config = _load_params_and_config(doc, where)
    target = _load_target(doc, where)

    if config.positions is not None and config.positions.shape[0] != topology.n:
        raise ScenarioError(
            f"{where}.init.positions: got {config.positions.shape[0]} positions "
            f"for {topology.n} agents"
        )

    tree = has_directed_spanning_tree(topology)
    if not tree:
        raise ScenarioError(
            f"{where}: the sensing graph has no directed spanning tree; no agent's "
            f"information can reach the whole team"
        )
    verdict = check_admissible(formation, topology)
    if not verdict:
        raise ScenarioError(f"{where}: formation is not admissible: {verdict.reason}")
    try:
        check_coupling_gain(params, topology)
    except GainBoundError as exc:
        raise ScenarioError(f"{where}: {exc}") from None

    h_max = sampling_bound(formation, topology, params)
    notes = []
    if config.mode == "sampled":
        h = config.h if config.h is not None else params.h
        if h is None:
            raise ScenarioError(f"{where}: sampled mode requires a sampling period h")
        if h >= h_max:
            notes.append(
                f"sampling period h = {h:g} is not below the conservative "
                f"stability bound h_max = {h_max:g}; convergence is empirical"
            )
        if not target.is_static:
            notes.append(
                "sampled-data control with a moving target is outside the "
                "analyzed regime; results are empirical"
            )
    else:
        if config.dt > h_max / 10.0:
            notes.append(
                f"integration step dt = {config.dt:g} exceeds one tenth of the "
                f"sampling stability bound ({h_max / 10.0:g})"
            )

    validation = ValidationRecord(
        admissible=True,
        certificate=[float(v) for v in verdict.certificate],
        has_spanning_tree=tree,
        gain_lower_bound=gain_lower_bound(topology, params.mu),
        coupling_gain=params.c,
        sampling_stability_bound=h_max,
        warnings=tuple(notes),
    )
    return Scenario(
        topology=topology, formation=formation, params=params, target=target,
        config=config, validation=validation, path=str(path),
    )
