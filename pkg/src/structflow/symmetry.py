"""Chemically equivalent atom relabelings and symmetry-corrected matching.

Molecules with internal symmetry (rings, equivalent substituents, repeated
ligand copies) admit several atom orderings that describe the same physical
structure.  This module enumerates those relabelings as automorphisms of the
vertex- and edge-colored chemical graph and uses them to remove arbitrary
labeling penalties from coordinate comparisons.

Vertices are colored by (element, residue name, chain); edges by bond order.
Enumeration runs per connected component with a deterministic
refinement-plus-backtracking search, returns the identity first, and is
capped (default 1024) to keep pathological graphs bounded.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InputError, NumericalError
from .geometry import kabsch_weighted, rmsd
from .topology import MolecularSystem, as_coords

MAX_COMPONENT_ATOMS = 60
DEFAULT_AUTOMORPHISM_CAP = 1024


# --------------------------------------------------------------------------
# component structure


def connected_components(system: MolecularSystem) -> list[np.ndarray]:
    """Connected components of the bonded graph, as sorted index arrays.

    Order-0 (padding) bonds do not connect atoms.  Components are returned
    sorted by their smallest atom index; isolated atoms form singletons.
    """
    parent = list(range(system.n_atoms))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for bond in system.bonds:
        if bond.order == 0:
            continue
        ra, rb = find(bond.i), find(bond.j)
        if ra != rb:
            parent[rb] = ra
    groups: dict[int, list[int]] = {}
    for i in range(system.n_atoms):
        groups.setdefault(find(i), []).append(i)
    return [np.array(sorted(g), dtype=np.int64) for g in
            sorted(groups.values(), key=lambda g: g[0])]


def _vertex_colors(system: MolecularSystem, component: np.ndarray) -> list[tuple]:
    colors = []
    for i in component:
        atom = system.atoms[int(i)]
        colors.append((atom.element, atom.residue_name, atom.chain_index))
    return colors


def _refine_colors(
    colors: list[int], adjacency: list[list[tuple[int, int]]]
) -> list[int]:
    """Iterative neighborhood color refinement (1-WL with edge colors)."""
    n = len(colors)
    while True:
        signatures = [
            (colors[v], tuple(sorted((order, colors[u]) for u, order in adjacency[v])))
            for v in range(n)
        ]
        palette = {sig: idx for idx, sig in enumerate(sorted(set(signatures)))}
        new_colors = [palette[sig] for sig in signatures]
        if new_colors == colors:
            return colors
        colors = new_colors


def automorphisms(
    system: MolecularSystem,
    component: np.ndarray,
    cap: int = DEFAULT_AUTOMORPHISM_CAP,
) -> tuple[list[np.ndarray], bool]:
    """All color-preserving graph automorphisms of one component.

    Returns ``(perms, truncated)``.  Each permutation is an array over local
    component positions; ``perms[0]`` is always the identity.  The search is
    deterministic (vertices mapped in ascending order, candidates tried in
    ascending order) and stops once ``cap`` automorphisms were found, in
    which case ``truncated`` is True.
    """
    component = np.asarray(component, dtype=np.int64)
    n = len(component)
    if n > MAX_COMPONENT_ATOMS:
        raise InputError(
            f"component has {n} atoms; automorphism search is limited to "
            f"{MAX_COMPONENT_ATOMS}"
        )
    local_of = {int(g): k for k, g in enumerate(component)}
    full_adjacency = system.adjacency()
    adjacency: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for k, g in enumerate(component):
        for j, order in full_adjacency[int(g)]:
            if int(j) in local_of:
                adjacency[k].append((local_of[int(j)], order))
    raw = _vertex_colors(system, component)
    palette = {c: i for i, c in enumerate(sorted(set(raw)))}
    colors = _refine_colors([palette[c] for c in raw], adjacency)

    edge_color = {}
    for v in range(n):
        for u, order in adjacency[v]:
            edge_color[(v, u)] = order

    found: list[np.ndarray] = []
    truncated = False
    mapping = np.full(n, -1, dtype=np.int64)
    used = np.zeros(n, dtype=bool)

    def consistent(v: int, candidate: int) -> bool:
        if colors[candidate] != colors[v]:
            return False
        for u, order in adjacency[v]:
            img = mapping[u]
            if img >= 0 and edge_color.get((candidate, int(img))) != order:
                return False
        # Non-neighbors must stay non-neighbors: degree + color refinement
        # already equalize neighbor counts, so checking mapped neighbors
        # of the candidate in reverse closes the condition.
        for u, order in adjacency[candidate]:
            pre = _preimage.get(int(u))
            if pre is not None and edge_color.get((v, pre)) != order:
                return False
        return True

    _preimage: dict[int, int] = {}

    def search(v: int) -> bool:
        nonlocal truncated
        if v == n:
            found.append(mapping.copy())
            if len(found) >= cap:
                truncated = True
                return True
            return False
        for candidate in range(n):
            if used[candidate] or not consistent(v, candidate):
                continue
            mapping[v] = candidate
            used[candidate] = True
            _preimage[candidate] = v
            if search(v + 1):
                return True
            del _preimage[candidate]
            used[candidate] = False
            mapping[v] = -1
        return False

    search(0)
    if not found or not np.array_equal(found[0], np.arange(n)):
        raise NumericalError("automorphism search failed to produce identity")
    return found, truncated


# --------------------------------------------------------------------------
# optimal relabeling against a target


@dataclass(frozen=True)
class AtomPermutation:
    """A global atom relabeling; ``apply`` gathers ``coords[indices]``."""

    indices: np.ndarray

    def apply(self, coords) -> np.ndarray:
        return as_coords(coords)[self.indices]

    @property
    def is_identity(self) -> bool:
        return bool(np.array_equal(self.indices, np.arange(len(self.indices))))


def _component_cost(
    pred: np.ndarray, target: np.ndarray, component: np.ndarray, perm: np.ndarray
) -> float:
    return float(
        np.sum((pred[component[perm]] - target[component]) ** 2)
    )


def _greedy_color_matching(
    system: MolecularSystem,
    pred: np.ndarray,
    target: np.ndarray,
    component: np.ndarray,
) -> np.ndarray:
    """Nearest-first matching of same-colored atoms (fallback beyond the cap)."""
    colors = _vertex_colors(system, component)
    perm = np.arange(len(component))
    groups: dict[tuple, list[int]] = {}
    for k, color in enumerate(colors):
        groups.setdefault(color, []).append(k)
    for members in groups.values():
        free = set(members)
        for k in members:
            best = min(
                free,
                key=lambda m: (
                    float(np.sum((pred[component[m]] - target[component[k]]) ** 2)),
                    m,
                ),
            )
            perm[k] = best
            free.remove(best)
    return perm


def optimal_graph_permutation(
    pred,
    target,
    system: MolecularSystem,
    cap: int = DEFAULT_AUTOMORPHISM_CAP,
    automorphism_cache: Optional[dict] = None,
) -> AtomPermutation:
    """Relabeling of ``pred`` that best matches ``target``.

    Independently for every connected component, the automorphism with the
    smallest summed squared deviation to the target is selected (ties keep
    the earlier candidate, so the identity wins exact ties).  Components
    larger than the search limit keep their labels: whole-chain swaps are the
    prior entity permutation's job, not this one's.  If enumeration hits the
    cap, a greedy same-color nearest matching is tried instead and kept only
    when it beats the identity.

    ``automorphism_cache`` (keyed by component start index) lets hot loops
    reuse enumeration results across calls with the same system.
    """
    p = as_coords(pred, system.n_atoms)
    x = as_coords(target, system.n_atoms)
    out = np.arange(system.n_atoms, dtype=np.int64)
    for component in connected_components(system):
        if len(component) > MAX_COMPONENT_ATOMS or len(component) == 1:
            continue
        key = int(component[0])
        if automorphism_cache is not None and key in automorphism_cache:
            perms, truncated = automorphism_cache[key]
        else:
            perms, truncated = automorphisms(system, component, cap=cap)
            if automorphism_cache is not None:
                automorphism_cache[key] = (perms, truncated)
        if truncated:
            warnings.warn(
                f"automorphism cap reached for component at atom {key}; "
                "falling back to greedy color matching",
                RuntimeWarning,
                stacklevel=2,
            )
            greedy = _greedy_color_matching(system, p, x, component)
            candidates = [perms[0], greedy]
        else:
            candidates = perms
        costs = [_component_cost(p, x, component, perm) for perm in candidates]
        best = candidates[int(np.argmin(costs))]
        out[component] = component[best]
    return AtomPermutation(indices=out)


# --------------------------------------------------------------------------
# repeated ligand copies


def _pocket_transforms(
    ref: np.ndarray,
    pred: np.ndarray,
    system: MolecularSystem,
    ref_ligand_chain: str,
    radius: float,
):
    """Candidate pocket superpositions for one reference ligand chain."""
    from .geometry import _trace_atom_index, detect_pocket

    pocket = detect_pocket(ref, system, ref_ligand_chain, radius)
    if not pocket:
        raise NumericalError("no pocket residues within the detection radius")
    per_chain: dict[int, list[int]] = {}
    for ci, ri in pocket:
        per_chain.setdefault(ci, []).append(ri)
    ref_chain = min(per_chain, key=lambda ci: (-len(per_chain[ci]), ci))
    residues = per_chain[ref_chain]
    ref_ca = [
        i
        for i in (_trace_atom_index(system, ref_chain, ri) for ri in residues)
        if i is not None
    ]
    if len(ref_ca) < 3:
        raise NumericalError("degenerate pocket: fewer than 3 trace atoms")
    entity = system.chains[ref_chain].entity_id
    transforms = []
    for ci, chain in enumerate(system.chains):
        if chain.entity_id != entity:
            continue
        pred_ca = [_trace_atom_index(system, ci, ri) for ri in residues]
        if any(i is None for i in pred_ca):
            continue
        transforms.append(
            kabsch_weighted(pred[np.array(pred_ca)], ref[np.array(ref_ca)])
        )
    if not transforms:
        raise NumericalError("no candidate chain provided a complete pocket")
    return transforms


def ligand_copy_min_rmsd(
    pred,
    ref,
    system: MolecularSystem,
    ligand_chains: Sequence[str],
    radius: float = 10.0,
) -> float:
    """Pocket-aligned ligand RMSD minimized over copy pairings.

    For ``N`` interchangeable ligand copies (chains of one entity) the
    ``N x N`` table of pairwise pocket-aligned RMSDs is computed and copies
    are matched by an optimal assignment on squared values; the result is
    the RMS over the matched pairs, i.e. the overall per-atom RMSD of the
    best pairing.  With a single copy this reduces to the plain
    pocket-aligned ligand RMSD.
    """
    if not ligand_chains:
        raise InputError("ligand_chains must name at least one chain")
    p = as_coords(pred, system.n_atoms)
    r = as_coords(ref, system.n_atoms)
    chain_ids = [system.chain_index_by_id(c) for c in ligand_chains]
    entities = {system.chains[ci].entity_id for ci in chain_ids}
    if len(entities) > 1:
        raise InputError("ligand copies must share an entity")
    atom_sets = [system.atoms_of_chain(ci) for ci in chain_ids]

    n = len(ligand_chains)
    table = np.zeros((n, n))
    for j, ref_chain in enumerate(ligand_chains):
        transforms = _pocket_transforms(r, p, system, ref_chain, radius)
        for i in range(n):
            best = None
            for transform in transforms:
                moved = transform.apply(p[atom_sets[i]])
                value = rmsd(moved, r[atom_sets[j]])
                if best is None or value < best:
                    best = value
            table[i, j] = best
    rows, cols = linear_sum_assignment(table**2)
    return float(np.sqrt(np.mean(table[rows, cols] ** 2)))
