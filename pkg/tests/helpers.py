"""Shared builders for the test suite: canonical scenarios and random cases."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from formation_sim import (
    ControllerParams,
    FormationSpec,
    Topology,
    check_admissible,
    gain_lower_bound,
)

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"

# Big-Dipper-style formation, slots numbered in ascending phase order; must
# stay in sync with the shipped scenario files (test_scenario_io checks).
DIPPER_RADII = [3.194518, 1.476667, 1.190527, 2.195223, 3.544, 1.124596, 2.80955]
DIPPER_PHASES = [0.588003, 0.927295, 2.089942, 2.798569, 3.141593, 5.878294, 6.230602]
STANDARD_GAINS = dict(lam=0.5, gamma=1.0, mu=-1.0, c=1.1)


def dipper_case(h=None):
    """The seven-agent directed-ring showcase used across the suite."""
    topology = Topology.directed_ring(7)
    spec = FormationSpec.from_certificate(DIPPER_RADII, DIPPER_PHASES, topology)
    params = ControllerParams(h=h, **STANDARD_GAINS)
    return topology, spec, params


def draw_box_positions(rng, n, box=5.0, min_sep=0.1, sort_by_bearing=True,
                       target=(0.0, 0.0)):
    """Uniform draws over a square box, optionally slot-ordered by bearing."""
    target = np.asarray(target, dtype=float)
    out = np.empty((n, 2))
    for i in range(n):
        while True:
            p = rng.uniform((-box, -box), (box, box)) + target
            if np.hypot(*(p - target)) >= min_sep:
                out[i] = p
                break
    if sort_by_bearing:
        rel = out - target
        out = out[np.argsort(np.arctan2(rel[:, 1], rel[:, 0]))]
    return out


def random_tree_topology(rng, n, extra_edges=0) -> Topology:
    """Random directed spanning tree (root 0) plus optional extra edges."""
    pairs = []
    for child in range(1, n):
        parent = int(rng.integers(0, child))
        pairs.append((child, parent))
    existing = set(pairs)
    attempts = 0
    while extra_edges > 0 and attempts < 50:
        attempts += 1
        i = int(rng.integers(0, n))
        j = int(rng.integers(0, n))
        if i != j and (i, j) not in existing:
            existing.add((i, j))
            pairs.append((i, j))
            extra_edges -= 1
    return Topology.from_observations(n, pairs)


def random_ascending_certificate(rng, n, margin=0.3):
    """Random phases, ascending, with consecutive gaps at least ``margin``.

    Keeps every generated spacing at least ``margin`` away from the 0/2*pi
    branch ends, so small perturbations stay on the tracked branch.
    """
    while True:
        gaps = rng.uniform(margin, 2.0 * math.pi / n * 1.8, n)
        total = gaps.sum()
        if total >= 2.0 * math.pi - margin:
            continue
        start = rng.uniform(0.0, 2.0 * math.pi - total)
        phases = start + np.concatenate([[0.0], np.cumsum(gaps[:-1])])
        return phases


def random_admissible_case(rng, n=None, radii_range=(2.5, 3.5), min_max_radius=3.0,
                           gamma=2.0, lam=0.5, mu=-1.0, c_margin=0.3,
                           ring=None, spacing_margin=0.3):
    """Random admissible scenario with a spanning topology.

    Defaults are tuned so that at ``h = h_max / 2`` the held-command radial
    bias stays well below 1e-3 (see the analysis module note).
    """
    if n is None:
        n = int(rng.integers(3, 6))
    if ring is None:
        ring = bool(rng.integers(0, 2))
    if ring:
        topology = Topology.directed_ring(n)
    else:
        topology = random_tree_topology(rng, n)
    while True:
        radii = rng.uniform(*radii_range, n)
        if radii.max() >= min_max_radius:
            break
    phases = random_ascending_certificate(rng, n, margin=spacing_margin)
    spec = FormationSpec.from_certificate(radii, phases, topology)
    verdict = check_admissible(spec, topology)
    assert verdict.admissible, verdict.reason
    c = gain_lower_bound(topology, mu) + c_margin
    params = ControllerParams(lam=lam, gamma=gamma, mu=mu, c=c)
    return topology, spec, params


def perturbed_formation_positions(rng, spec, certificate, radial_fraction=0.1,
                                  angular_amplitude=0.1, target=(0.0, 0.0)):
    """Positions within the stated fractions of the prescribed formation."""
    n = spec.n
    theta0 = rng.uniform(0.0, 2.0 * math.pi)
    alphas = theta0 + np.asarray(certificate) + rng.uniform(
        -angular_amplitude, angular_amplitude, n
    )
    rhos = spec.radii * (1.0 + rng.uniform(-radial_fraction, radial_fraction, n))
    target = np.asarray(target, dtype=float)
    return target + np.column_stack([rhos * np.cos(alphas), rhos * np.sin(alphas)])


def random_digraph(rng, n, p):
    a = (rng.random((n, n)) < p).astype(float)
    np.fill_diagonal(a, 0.0)
    return Topology(a)


def disconnected_digraph(rng, sizes=(2, 3)):
    """Two tree components with no cross edges."""
    n = sum(sizes)
    a = np.zeros((n, n))
    offset = 0
    for size in sizes:
        for child in range(1, size):
            parent = int(rng.integers(0, child))
            a[offset + child, offset + parent] = 1.0
        offset += size
    return Topology(a)
