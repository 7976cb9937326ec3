"""Directed interaction graph and the prescribed formation.

The sensing graph is directed: agent ``i`` measuring agent ``j`` is the
edge ``j -> i`` (information flows from the observed agent to the
observer).  ``adjacency[i, j] > 0`` if and only if that edge exists, so row
``i`` holds the in-weights of agent ``i``.

A formation prescribes one encirclement radius per agent and, for every
sensing edge, the desired counterclockwise angular spacing from observer
to observed.  A spacing assignment is *admissible* when it is generated by
a single phase vector ``d`` via ``d_ij = (d_j - d_i) mod 2*pi``; the
checker recovers such a certificate by graph traversal and verifies every
edge against it.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional

import numpy as np

from .geometry import TWO_PI, wrap_2pi, wrap_pi

# Config files carry finite-precision decimals, so spacing consistency is
# checked to a tolerance rather than exact modular equality.
ADMISSIBILITY_TOL = 1e-9


@dataclass(frozen=True)
class Topology:
    """Weighted directed sensing graph on ``n >= 2`` agents."""

    adjacency: np.ndarray

    def __post_init__(self):
        a = np.array(self.adjacency, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"adjacency must be square, got shape {a.shape}")
        if a.shape[0] < 2:
            raise ValueError("at least two agents are required")
        if not np.all(np.isfinite(a)):
            raise ValueError("adjacency weights must be finite")
        if np.any(a < 0):
            raise ValueError("adjacency weights must be non-negative")
        if np.any(np.diag(a) != 0):
            raise ValueError("self-sensing is not allowed (diagonal must be zero)")
        a.setflags(write=False)
        object.__setattr__(self, "adjacency", a)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    def neighbors(self, i: int) -> np.ndarray:
        """Indices of the agents that agent ``i`` measures."""
        return np.flatnonzero(self.adjacency[i] > 0)

    def observation_pairs(self) -> list[tuple[int, int]]:
        """All (observer, observed) pairs, sorted."""
        rows, cols = np.nonzero(self.adjacency > 0)
        return sorted(zip(rows.tolist(), cols.tolist()))

    def in_weight_sums(self) -> np.ndarray:
        """Per-agent sum of incoming sensing weights."""
        return self.adjacency.sum(axis=1)

    @classmethod
    def from_observations(
        cls, n: int, pairs: Iterable[tuple[int, int] | tuple[int, int, float]]
    ) -> "Topology":
        """Build from (observer, observed[, weight]) tuples; weight defaults to 1."""
        a = np.zeros((n, n))
        for entry in pairs:
            if len(entry) == 2:
                i, j = entry
                w = 1.0
            else:
                i, j, w = entry
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"agent index out of range in pair ({i}, {j})")
            if i == j:
                raise ValueError(f"agent {i} cannot measure itself")
            a[i, j] = w
        return cls(a)

    @classmethod
    def directed_ring(cls, n: int, weight: float = 1.0) -> "Topology":
        """Ring in which agent ``i`` measures agent ``(i + 1) mod n``."""
        return cls.from_observations(n, [(i, (i + 1) % n, weight) for i in range(n)])


@dataclass(frozen=True)
class FormationSpec:
    """Desired encirclement radii and per-edge angular spacings.

    ``spacings`` maps (observer, observed) to the desired counterclockwise
    angle in ``[0, 2*pi)``.  ``certificate``, when present, is the phase
    vector the spacings were generated from.
    """

    radii: np.ndarray
    spacings: dict[tuple[int, int], float] = field(default_factory=dict)
    certificate: Optional[np.ndarray] = None

    def __post_init__(self):
        r = np.array(self.radii, dtype=float)
        if r.ndim != 1:
            raise ValueError("radii must be a flat vector")
        if not np.all(np.isfinite(r)):
            raise ValueError("radii must be finite")
        r.setflags(write=False)
        object.__setattr__(self, "radii", r)
        clean = {}
        for key, value in dict(self.spacings).items():
            i, j = key
            value = float(value)
            if not np.isfinite(value):
                raise ValueError(f"spacing for edge ({i}, {j}) must be finite")
            clean[(int(i), int(j))] = value
        object.__setattr__(self, "spacings", clean)
        if self.certificate is not None:
            d = np.array(self.certificate, dtype=float)
            if d.shape != r.shape:
                raise ValueError("certificate length must match the number of agents")
            if not np.all(np.isfinite(d)):
                raise ValueError("certificate entries must be finite")
            d.setflags(write=False)
            object.__setattr__(self, "certificate", d)

    @property
    def n(self) -> int:
        return self.radii.shape[0]

    @classmethod
    def from_certificate(
        cls, radii, certificate, topology: Topology
    ) -> "FormationSpec":
        """Expand a phase vector into per-edge spacings for ``topology``."""
        d = np.asarray(certificate, dtype=float)
        spacings = {
            (i, j): float(wrap_2pi(d[j] - d[i]))
            for i, j in topology.observation_pairs()
        }
        return cls(radii=radii, spacings=spacings, certificate=d)

    def spacing_vector(self, topology: Topology) -> np.ndarray:
        """Spacings aligned with ``topology.observation_pairs()``."""
        pairs = topology.observation_pairs()
        missing = [p for p in pairs if p not in self.spacings]
        if missing:
            labels = ", ".join(f"({i + 1}, {j + 1})" for i, j in missing)
            raise ValueError(f"missing spacing for sensing edge(s): {labels}")
        return np.array([self.spacings[p] for p in pairs])


def _flow_matrix(topology: Topology) -> np.ndarray:
    """Boolean matrix F with F[j, i] true when information flows j -> i."""
    return (topology.adjacency > 0).T


def has_directed_spanning_tree(topology: Topology) -> bool:
    """Whether some root agent reaches every other along sensing-flow edges.

    Uses the boolean transitive closure (repeated squaring), so it is a
    different route than per-root breadth-first search and can be
    cross-checked against it.
    """
    n = topology.n
    reach = _flow_matrix(topology) | np.eye(n, dtype=bool)
    hops = 1
    while hops < n:
        reach = (reach.astype(np.uint8) @ reach.astype(np.uint8)) > 0
        hops *= 2
    return bool(reach.all(axis=1).any())


def _roots(topology: Topology) -> list[int]:
    """Agents from which every other agent is reachable, via BFS."""
    flow = _flow_matrix(topology)
    n = topology.n
    roots = []
    for r in range(n):
        seen = np.zeros(n, dtype=bool)
        seen[r] = True
        queue = deque([r])
        while queue:
            u = queue.popleft()
            for v in np.flatnonzero(flow[u] & ~seen):
                seen[v] = True
                queue.append(v)
        if seen.all():
            roots.append(r)
    return roots


@dataclass(frozen=True)
class AdmissibilityResult:
    """Outcome of the admissibility check."""

    admissible: bool
    certificate: Optional[np.ndarray] = None
    reason: Optional[str] = None
    violating_edge: Optional[tuple[int, int]] = None

    def __bool__(self) -> bool:
        return self.admissible


def check_admissible(
    spec: FormationSpec,
    topology: Topology,
    root: Optional[int] = None,
    tol: float = ADMISSIBILITY_TOL,
) -> AdmissibilityResult:
    """Verify a formation and recover its phase certificate.

    Propagates phases from a root over a traversal tree (the root's phase
    is fixed to 0) and checks every sensing edge, tree or not, against the
    assignment.  Any root choice yields the same verdict; certificates from
    different roots differ only by a common constant mod 2*pi.
    """
    n = topology.n
    if spec.n != n:
        return AdmissibilityResult(
            False, reason=f"formation lists {spec.n} radii for {n} agents"
        )
    bad_radius = np.flatnonzero(spec.radii <= 0)
    if bad_radius.size:
        i = int(bad_radius[0])
        return AdmissibilityResult(
            False,
            reason=f"radius of agent {i + 1} is {spec.radii[i]:g}; radii must be positive",
        )

    pairs = topology.observation_pairs()
    for i, j in pairs:
        if (i, j) not in spec.spacings:
            return AdmissibilityResult(
                False, reason=f"no spacing given for sensing edge ({i + 1}, {j + 1})"
            )
        value = spec.spacings[(i, j)]
        if not (0.0 <= value < TWO_PI):
            return AdmissibilityResult(
                False,
                reason=(
                    f"spacing for edge ({i + 1}, {j + 1}) is {value:g}; "
                    f"must lie in [0, 2*pi)"
                ),
                violating_edge=(i, j),
            )
    extra = [key for key in spec.spacings if key not in set(pairs)]
    if extra:
        i, j = extra[0]
        return AdmissibilityResult(
            False,
            reason=f"spacing given for ({i + 1}, {j + 1}), which is not a sensing edge",
        )

    if root is None:
        roots = _roots(topology)
        if not roots:
            unreached = _most_reaching_unreached(topology)
            return AdmissibilityResult(
                False,
                reason=(
                    "undetermined: no agent reaches all others; "
                    f"unreachable from agent {unreached[0] + 1}: "
                    + ", ".join(str(k + 1) for k in unreached[1])
                ),
            )
        root = roots[0]
    elif root not in _roots(topology):
        return AdmissibilityResult(
            False,
            reason=f"undetermined: agent {root + 1} does not reach every other agent",
        )

    # Phase propagation over a BFS tree: along flow edge j -> i (agent i
    # measures j with spacing d_ij), d_i = (d_j - d_ij) mod 2*pi.
    phases = np.full(n, np.nan)
    phases[root] = 0.0
    out_edges: dict[int, list[int]] = {j: [] for j in range(n)}
    for i, j in pairs:
        out_edges[j].append(i)
    queue = deque([root])
    while queue:
        j = queue.popleft()
        for i in out_edges[j]:
            if np.isnan(phases[i]):
                phases[i] = wrap_2pi(phases[j] - spec.spacings[(i, j)])
                queue.append(i)

    for i, j in pairs:
        err = abs(wrap_pi(spec.spacings[(i, j)] - (phases[j] - phases[i])))
        if err > tol:
            return AdmissibilityResult(
                False,
                reason=(
                    f"inconsistent spacing on edge ({i + 1}, {j + 1}): "
                    f"deviates from every phase assignment by {err:.3e} rad"
                ),
                violating_edge=(i, j),
            )

    if spec.certificate is not None:
        for i, j in pairs:
            err = abs(
                wrap_pi(
                    spec.spacings[(i, j)]
                    - (spec.certificate[j] - spec.certificate[i])
                )
            )
            if err > tol:
                return AdmissibilityResult(
                    False,
                    reason=(
                        f"declared certificate does not generate the spacing on "
                        f"edge ({i + 1}, {j + 1}) (error {err:.3e} rad)"
                    ),
                    violating_edge=(i, j),
                )

    return AdmissibilityResult(True, certificate=phases)


def _most_reaching_unreached(topology: Topology) -> tuple[int, list[int]]:
    """Best near-root and the agents it fails to reach, for diagnostics."""
    flow = _flow_matrix(topology)
    n = topology.n
    best, best_missing = 0, list(range(1, n))
    for r in range(n):
        seen = np.zeros(n, dtype=bool)
        seen[r] = True
        queue = deque([r])
        while queue:
            u = queue.popleft()
            for v in np.flatnonzero(flow[u] & ~seen):
                seen[v] = True
                queue.append(v)
        missing = np.flatnonzero(~seen).tolist()
        if len(missing) < len(best_missing):
            best, best_missing = r, missing
    return best, best_missing


def gain_lower_bound(topology: Topology, mu: float) -> float:
    """Strict lower bound on the coupling offset gain: |mu| * max in-weight sum."""
    return abs(mu) * float(topology.in_weight_sums().max())


class DegreeStats(NamedTuple):
    d_max: float
    degree_matrix: np.ndarray


def degree_stats(topology: Topology) -> DegreeStats:
    """Maximum in-weight sum and the diagonal in-degree matrix."""
    sums = topology.in_weight_sums()
    return DegreeStats(float(sums.max()), np.diag(sums))
