"""Physics-informed structure prior.

Prior draws come from overdamped Langevin dynamics on a globular polymer
model: harmonic pulls toward bonded neighbors, residue centroids and chain
centroids, plus a spherical confinement term.  The group pulls are expressed
through row-stochastic averaging operators so the drift is a handful of
matrix products:

    drift = 2 (S_bond X - X) + (S_entity X - X) / ent_r^2
            + (S_residue X - X) / res_r^2 - X / sphere_r^2
    X    <- X + dt * drift + 2 sqrt(dt) * eps,   eps ~ N(0, I)

Atoms without bonded neighbors self-map in ``S_bond`` (zero drift from that
term), and individual copies of a repeated entity relax into distinct
globules because the noise history differs per atom.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import InputError
from .topology import Conformation, MolecularSystem, as_coords


@dataclass(frozen=True)
class PriorParams:
    """Langevin prior settings.

    ``sphere_r`` defaults to ``max(8, 4 * n_residues ** (1/3))`` angstroms
    when left ``None``; ``init_std`` (per-coordinate std of the starting
    positions) defaults to ``sphere_r``.  ``noise_scale`` multiplies the
    ``2 sqrt(dt)`` diffusion amplitude; zero gives the deterministic test
    mode.
    """

    dt: float = 0.25
    n_steps: int = 64
    res_r: float = 4.0
    ent_r: float = 10.0
    sphere_r: Optional[float] = None
    init_std: Optional[float] = None
    noise_scale: float = 1.0

    def resolve_sphere_r(self, system: MolecularSystem) -> float:
        if self.sphere_r is not None:
            return float(self.sphere_r)
        return max(8.0, 4.0 * system.n_residues() ** (1.0 / 3.0))


@dataclass(frozen=True)
class NeighborOperators:
    """Row-stochastic averaging operators used by the prior drift."""

    s_bond: np.ndarray
    s_residue: np.ndarray
    s_entity: np.ndarray


def build_neighbor_operators(system: MolecularSystem) -> NeighborOperators:
    """Dense averaging operators for bonds, residues and chain instances.

    ``s_bond`` rows average an atom's bonded neighbors (atoms without bonds
    keep an identity row).  ``s_residue`` and ``s_entity`` rows average the
    atom's residue and chain-instance groups (self included), so ``S X``
    yields group centroids.  Every row sums to exactly 1.
    """
    n = system.n_atoms
    s_bond = np.zeros((n, n))
    adjacency = system.adjacency()
    for i, nbrs in enumerate(adjacency):
        if nbrs:
            share = 1.0 / len(nbrs)
            for j, _ in nbrs:
                s_bond[i, j] += share
        else:
            s_bond[i, i] = 1.0

    s_residue = np.zeros((n, n))
    residue_groups: dict[tuple[int, int], list[int]] = {}
    for i in range(n):
        residue_groups.setdefault(system.residue_key(i), []).append(i)
    for members in residue_groups.values():
        share = 1.0 / len(members)
        for i in members:
            s_residue[i, members] = share

    s_entity = np.zeros((n, n))
    chain_groups: dict[int, list[int]] = {}
    for i, atom in enumerate(system.atoms):
        chain_groups.setdefault(atom.chain_index, []).append(i)
    for members in chain_groups.values():
        share = 1.0 / len(members)
        for i in members:
            s_entity[i, members] = share

    return NeighborOperators(s_bond=s_bond, s_residue=s_residue, s_entity=s_entity)


def sample_prior(
    system: MolecularSystem,
    params: Optional[PriorParams] = None,
    seed: int = 0,
    x0: Optional[np.ndarray] = None,
    operators: Optional[NeighborOperators] = None,
) -> Conformation:
    """Draw one structure from the globular polymer prior.

    ``x0`` overrides the Gaussian initialization (useful for deterministic
    tests); ``operators`` lets hot loops reuse precomputed averaging
    matrices.
    """
    if params is None:
        params = PriorParams()
    if params.dt <= 0 or params.n_steps < 0:
        raise InputError("prior requires dt > 0 and n_steps >= 0")
    rng = np.random.default_rng(seed)
    sphere_r = params.resolve_sphere_r(system)
    init_std = params.init_std if params.init_std is not None else sphere_r
    if x0 is None:
        x = rng.normal(0.0, init_std, size=(system.n_atoms, 3))
    else:
        x = as_coords(x0, system.n_atoms).copy()
    ops = operators if operators is not None else build_neighbor_operators(system)

    amplitude = 2.0 * np.sqrt(params.dt) * params.noise_scale
    for _ in range(params.n_steps):
        drift = (
            2.0 * (ops.s_bond @ x - x)
            + (ops.s_entity @ x - x) / params.ent_r**2
            + (ops.s_residue @ x - x) / params.res_r**2
            - x / sphere_r**2
        )
        x = x + params.dt * drift
        if params.noise_scale != 0.0:
            x = x + amplitude * rng.standard_normal(size=x.shape)
    return Conformation(x, provenance="prior")


# --------------------------------------------------------------------------
# entity permutation


def _chain_centroids(system: MolecularSystem, coords: np.ndarray) -> np.ndarray:
    return np.stack(
        [coords[system.atoms_of_chain(ci)].mean(axis=0)
         for ci in range(len(system.chains))]
    )


def _nearest_chain(centroids: np.ndarray, chain: int) -> int:
    dist = np.linalg.norm(centroids - centroids[chain], axis=1)
    dist[chain] = np.inf
    return int(np.argmin(dist))


def permute_prior_entities(
    prior,
    reference,
    system: MolecularSystem,
) -> Conformation:
    """Greedy reassignment of interchangeable chain blocks in a prior draw.

    Chains sharing an entity_id are interchangeable; for each such group the
    prior's chain blocks are reassigned to chain slots so that each block's
    nearest-neighbor chain (by centroid, in prior coordinates) agrees with
    the slot's nearest-neighbor chain in the reference where possible.
    Blocks keep their current slot when it already agrees; groups of one and
    systems without repeated entities come back unchanged.
    """
    p = as_coords(prior, system.n_atoms)
    r = as_coords(reference, system.n_atoms)
    prior_centroids = _chain_centroids(system, p)
    ref_centroids = _chain_centroids(system, r)
    n_chains = len(system.chains)
    if n_chains < 2:
        return Conformation(p.copy(), provenance="prior")
    nn_prior = [_nearest_chain(prior_centroids, c) for c in range(n_chains)]
    nn_ref = [_nearest_chain(ref_centroids, c) for c in range(n_chains)]

    groups: dict[int, list[int]] = {}
    for ci, chain in enumerate(system.chains):
        groups.setdefault(chain.entity_id, []).append(ci)

    out = p.copy()
    for entity_id in sorted(groups):
        members = groups[entity_id]
        if len(members) < 2:
            continue
        unfilled = list(members)
        assignment: dict[int, int] = {}  # block chain -> slot chain
        for block in members:
            matches = [s for s in unfilled if nn_ref[s] == nn_prior[block]]
            if block in matches:
                slot = block
            elif matches:
                slot = matches[0]
            elif block in unfilled:
                slot = block
            else:
                slot = unfilled[0]
            assignment[block] = slot
            unfilled.remove(slot)
        for block, slot in assignment.items():
            if block != slot:
                out[system.atoms_of_chain(slot)] = p[system.atoms_of_chain(block)]
    return Conformation(out, provenance="prior")
