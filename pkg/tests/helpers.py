"""Shared builders for small but structurally honest test systems."""

from __future__ import annotations

import numpy as np

from structflow.topology import Atom, Bond, Chain, MolecularSystem, StereoCenter

PEPTIDE_ATOMS = (("N", "N"), ("CA", "C"), ("C", "C"), ("O", "O"))

# twenty standard names cycled for variety in sequences
_NAMES = (
    "ALA ARG ASN ASP CYS GLN GLU GLY HIS ILE "
    "LEU LYS MET PHE PRO SER THR TRP TYR VAL"
).split()


def peptide_sequence(n_res: int, phase: int = 0) -> list[str]:
    return [_NAMES[(phase + i) % len(_NAMES)] for i in range(n_res)]


class Part:
    """One chain's atoms and chain-local bonds, ready for composition."""

    def __init__(self, chain: Chain, atoms, bonds, stereocenters=()):
        self.chain = chain
        self.atoms = atoms  # [(name, element, residue_index, residue_name)]
        self.bonds = bonds  # [(i, j, order)] with chain-local indices
        self.stereocenters = stereocenters  # [(center, (n1..n4), parity)] local


def peptide_part(chain_id: str, entity_id: int, sequence) -> Part:
    atoms, bonds = [], []
    for r, resname in enumerate(sequence):
        base = 4 * r
        for name, element in PEPTIDE_ATOMS:
            atoms.append((name, element, r, resname))
        bonds += [(base, base + 1, 1), (base + 1, base + 2, 1), (base + 2, base + 3, 2)]
        if r > 0:
            bonds.append((base - 2, base, 1))  # C(i-1) - N(i)
    return Part(Chain(chain_id, entity_id, "protein"), atoms, bonds)


def benzene_part(chain_id: str, entity_id: int) -> Part:
    atoms = [(f"C{i + 1}", "C", 0, "BNZ") for i in range(6)]
    bonds = [(i, (i + 1) % 6, 4) for i in range(6)]
    return Part(Chain(chain_id, entity_id, "ligand"), atoms, bonds)


def asym_ligand_part(chain_id: str, entity_id: int) -> Part:
    """A four-atom ligand with no symmetry (distinct elements)."""
    atoms = [
        ("C1", "C", 0, "LIG"),
        ("N1", "N", 0, "LIG"),
        ("O1", "O", 0, "LIG"),
        ("S1", "S", 0, "LIG"),
    ]
    bonds = [(0, 1, 1), (1, 2, 1), (1, 3, 1)]
    return Part(Chain(chain_id, entity_id, "ligand"), atoms, bonds)


def chiral_ligand_part(chain_id: str, entity_id: int, parity: int = 1) -> Part:
    """A tetrahedral center with four distinguishable substituents."""
    atoms = [
        ("C1", "C", 0, "CHI"),
        ("N1", "N", 0, "CHI"),
        ("O1", "O", 0, "CHI"),
        ("S1", "S", 0, "CHI"),
        ("P1", "P", 0, "CHI"),
    ]
    bonds = [(0, 1, 1), (0, 2, 1), (0, 3, 1), (0, 4, 1)]
    return Part(
        Chain(chain_id, entity_id, "ligand"),
        atoms,
        bonds,
        stereocenters=[(0, (1, 2, 3, 4), parity)],
    )


def compose(*parts: Part) -> MolecularSystem:
    atoms, bonds, chains, stereo = [], [], [], []
    offset = 0
    for ci, part in enumerate(parts):
        chains.append(part.chain)
        for name, element, res_idx, res_name in part.atoms:
            atoms.append(
                Atom(
                    element=element,
                    name=name,
                    residue_index=res_idx,
                    residue_name=res_name,
                    chain_index=ci,
                    is_heavy=element not in ("H", "D"),
                )
            )
        for i, j, order in part.bonds:
            bonds.append(Bond(offset + i, offset + j, order))
        for center, nbrs, parity in part.stereocenters:
            stereo.append(
                StereoCenter(
                    offset + center,
                    tuple(offset + k for k in nbrs),
                    parity,
                )
            )
        offset += len(part.atoms)
    return MolecularSystem(
        tuple(atoms), tuple(bonds), tuple(chains), tuple(stereo)
    )


def peptide_system(n_res: int, chain_ids=("A",), entity_id: int = 0):
    parts = [
        peptide_part(cid, entity_id, peptide_sequence(n_res)) for cid in chain_ids
    ]
    return compose(*parts)


# --------------------------------------------------------------------------
# coordinates


def _normalize(v):
    return v / np.linalg.norm(v)


def helix_backbone(n_res: int, origin=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Idealized N/CA/C/O coordinates for one helical peptide chain."""
    origin = np.asarray(origin, dtype=np.float64)
    radius, rise, turn = 2.3, 1.5, np.deg2rad(100.0)
    ca = np.stack(
        [
            radius * np.cos(turn * np.arange(n_res)),
            radius * np.sin(turn * np.arange(n_res)),
            rise * np.arange(n_res),
        ],
        axis=1,
    )
    coords = np.zeros((4 * n_res, 3))
    for r in range(n_res):
        radial = _normalize(np.array([ca[r, 0], ca[r, 1], 0.0]))
        prev_dir = (
            _normalize(ca[r - 1] - ca[r])
            if r > 0
            else -_normalize(ca[min(r + 1, n_res - 1)] - ca[r])
        )
        # terminal residues extrapolate the chain direction outward so the
        # final C atom doesn't fold back onto the previous residue
        next_dir = (
            _normalize(ca[r + 1] - ca[r])
            if r < n_res - 1
            else _normalize(ca[r] - ca[r - 1])
        )
        coords[4 * r + 1] = ca[r]
        # the small z component keeps terminal-residue N and C directions
        # non-collinear, so every CA supports a valid local frame
        coords[4 * r + 0] = ca[r] + 1.45 * _normalize(
            0.8 * prev_dir + 0.6 * radial + np.array([0.0, 0.0, 0.35])
        )
        coords[4 * r + 2] = ca[r] + 1.52 * _normalize(0.8 * next_dir - 0.6 * radial)
        coords[4 * r + 3] = coords[4 * r + 2] + 1.23 * _normalize(
            radial + np.array([0.0, 0.0, 0.3])
        )
    return coords + origin


def benzene_coords(center=(0.0, 0.0, 0.0), tilt: float = 0.0) -> np.ndarray:
    center = np.asarray(center, dtype=np.float64)
    angles = np.deg2rad(60.0 * np.arange(6))
    ring = np.stack(
        [1.39 * np.cos(angles), 1.39 * np.sin(angles), np.zeros(6)], axis=1
    )
    if tilt:
        c, s = np.cos(tilt), np.sin(tilt)
        rot = np.array([[1, 0, 0], [0, c, -s], [0, s, c]])
        ring = ring @ rot.T
    return ring + center


def asym_ligand_coords(center=(0.0, 0.0, 0.0)) -> np.ndarray:
    center = np.asarray(center, dtype=np.float64)
    local = np.array(
        [[0.0, 0.0, 0.0], [1.4, 0.0, 0.0], [2.1, 1.2, 0.0], [2.1, -1.0, 0.9]]
    )
    return local + center


def chiral_ligand_coords(center=(0.0, 0.0, 0.0), flip: bool = False) -> np.ndarray:
    center = np.asarray(center, dtype=np.float64)
    local = np.array(
        [
            [0.0, 0.0, 0.0],
            [1.5, 0.0, 0.0],
            [-0.5, 1.4, 0.0],
            [-0.5, -0.7, 1.2],
            [-0.5, -0.7, -1.2],
        ]
    )
    if flip:
        local = local * np.array([1.0, 1.0, -1.0])
    return local + center


def reference_coords(system: MolecularSystem, chain_spacing: float = 11.0):
    """Deterministic, physically plausible coordinates for composed systems.

    Polymer chains become parallel helices spaced along x; each ligand sits
    near the surface of the first polymer chain (or at the origin if there
    is none), consecutive ligands spaced along y.
    """
    coords = np.zeros((system.n_atoms, 3))
    polymer_slot = 0
    ligand_slot = 0
    first_polymer_centroid = None
    for ci, chain in enumerate(system.chains):
        idx = system.atoms_of_chain(ci)
        if chain.molecule_class in ("protein", "peptide", "dna", "rna"):
            n_res = len({system.atoms[int(i)].residue_index for i in idx})
            block = helix_backbone(n_res, origin=(chain_spacing * polymer_slot, 0, 0))
            coords[idx] = block
            if first_polymer_centroid is None:
                first_polymer_centroid = block.mean(axis=0)
            polymer_slot += 1
    for ci, chain in enumerate(system.chains):
        idx = system.atoms_of_chain(ci)
        if chain.molecule_class in ("protein", "peptide", "dna", "rna"):
            continue
        anchor = (
            first_polymer_centroid
            if first_polymer_centroid is not None
            else np.zeros(3)
        )
        center = anchor + np.array([5.5, 4.5 * ligand_slot - 1.0, 1.0])
        n = idx.size
        if n == 6:
            coords[idx] = benzene_coords(center, tilt=0.35)
        elif n == 5:
            coords[idx] = chiral_ligand_coords(center)
        else:
            coords[idx] = asym_ligand_coords(center)[:n]
        ligand_slot += 1
    return coords


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    m = rng.standard_normal((3, 3))
    q, r = np.linalg.qr(m)
    q = q @ np.diag(np.sign(np.diag(r)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def rigidly_moved(coords: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    rot = random_rotation(rng)
    shift = rng.standard_normal(3) * 5.0
    return coords @ rot.T + shift
