"""Molecular system data model and topology-derived features.

A :class:`MolecularSystem` is a flat, immutable description of the atoms,
bonds, chains and (optionally) stereocenters of a complex.  Atom indices are
global, zero-based, and follow document order of whatever file the system was
loaded from.  Coordinates never live on the system itself; they travel
separately as :class:`Conformation` objects (or bare ``(N, 3)`` arrays) so a
single topology can be paired with many structures.

The module also hosts the topology-only feature extractors used by the
samplers and the loss stack: anchor selection, bonded local frames,
bond-orientation features, and paired-MSA assembly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from .errors import InputError

# --------------------------------------------------------------------------
# vocabularies

MOLECULE_CLASSES = ("protein", "peptide", "dna", "rna", "ligand", "modified")

#: Polymer classes whose residues carry a single backbone trace atom.
POLYMER_CLASSES = ("protein", "peptide", "dna", "rna")

STANDARD_AMINO_ACIDS = (
    "ALA", "ARG", "ASN", "ASP", "CYS", "GLN", "GLU", "GLY", "HIS", "ILE",
    "LEU", "LYS", "MET", "PHE", "PRO", "SER", "THR", "TRP", "TYR", "VAL",
)
STANDARD_RIBONUCLEOTIDES = ("A", "C", "G", "U")
STANDARD_DEOXYNUCLEOTIDES = ("DA", "DC", "DG", "DT")
STANDARD_RESIDUES = (
    STANDARD_AMINO_ACIDS + STANDARD_RIBONUCLEOTIDES + STANDARD_DEOXYNUCLEOTIDES
)

#: One-letter codes for polymer sequence extraction.
_THREE_TO_ONE = {
    "ALA": "A", "ARG": "R", "ASN": "N", "ASP": "D", "CYS": "C",
    "GLN": "Q", "GLU": "E", "GLY": "G", "HIS": "H", "ILE": "I",
    "LEU": "L", "LYS": "K", "MET": "M", "PHE": "F", "PRO": "P",
    "SER": "S", "THR": "T", "TRP": "W", "TYR": "Y", "VAL": "V",
    "A": "a", "C": "c", "G": "g", "U": "u",
    "DA": "a", "DC": "c", "DG": "g", "DT": "t",
}

ELEMENTS = (
    "H", "C", "N", "O", "P", "S", "F", "CL", "BR", "I", "B", "SE",
    "FE", "ZN", "MG", "MN", "CA", "NA", "K", "CU", "NI", "CO",
)

#: Bond order codes.  0 is reserved for non-bonded padding rows, 4 denotes
#: an aromatic bond.
BOND_ORDERS = (0, 1, 2, 3, 4)


def residue_vocab_index(name: str) -> int:
    """Index of a residue name in the fixed 29-way vocabulary.

    The vocabulary covers the 20 standard amino acids, 4 ribonucleotides and
    4 deoxyribonucleotides; anything else maps to the shared "other" bucket
    (index 28).
    """
    try:
        return STANDARD_RESIDUES.index(name.upper())
    except ValueError:
        return len(STANDARD_RESIDUES)


RESIDUE_VOCAB_SIZE = len(STANDARD_RESIDUES) + 1


def element_vocab_index(element: str) -> int:
    """Index of a chemical element in the embedding vocabulary (last = other)."""
    try:
        return ELEMENTS.index(element.upper())
    except ValueError:
        return len(ELEMENTS)


ELEMENT_VOCAB_SIZE = len(ELEMENTS) + 1


def residue_one_letter(name: str) -> str:
    """One-letter code for a residue name ('X' for anything non-standard)."""
    return _THREE_TO_ONE.get(name.upper(), "X")


# --------------------------------------------------------------------------
# core types


@dataclass(frozen=True)
class Atom:
    """A single atom.

    ``residue_index`` counts residues within the owning chain (zero-based);
    ``chain_index`` points into ``MolecularSystem.chains``.
    """

    element: str
    name: str
    residue_index: int
    residue_name: str
    chain_index: int
    is_heavy: bool = True


@dataclass(frozen=True)
class Bond:
    """An undirected bond between global atom indices ``i`` and ``j``.

    ``order`` uses the codes in :data:`BOND_ORDERS`; order 0 marks a
    non-bonded padding row whose orientation feature is the zero vector.
    ``orientation`` is a cached unit vector feature (see
    :func:`bond_orientation_features`); it defaults to zero until computed.
    """

    i: int
    j: int
    order: int = 1
    orientation: tuple[float, float, float] = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class Chain:
    """A chain instance: one copy of an entity with a molecule class."""

    id: str
    entity_id: int
    molecule_class: str


@dataclass(frozen=True)
class StereoCenter:
    """A declared tetrahedral stereocenter.

    ``neighbors`` lists four substituent atom indices in priority order and
    ``parity`` is the expected sign (+1 or -1) of the signed volume
    ``det[n1-n4, n2-n4, n3-n4]`` evaluated on reference-quality coordinates.
    """

    center: int
    neighbors: tuple[int, int, int, int]
    parity: int


@dataclass(frozen=True)
class MolecularSystem:
    """Immutable topology of a molecular complex."""

    atoms: tuple[Atom, ...]
    bonds: tuple[Bond, ...]
    chains: tuple[Chain, ...]
    stereocenters: tuple[StereoCenter, ...] = ()

    def __post_init__(self) -> None:
        self.validate()

    # -- invariant checks -------------------------------------------------

    def validate(self) -> None:
        """Raise :class:`InputError` on any structural inconsistency."""
        n = len(self.atoms)
        ids = [c.id for c in self.chains]
        if len(set(ids)) != len(ids):
            raise InputError(f"duplicate chain ids: {sorted(ids)}")
        for chain in self.chains:
            if chain.molecule_class not in MOLECULE_CLASSES:
                raise InputError(
                    f"chain {chain.id!r}: unknown molecule_class "
                    f"{chain.molecule_class!r}"
                )
        prev_chain = -1
        prev_res = -1
        for idx, atom in enumerate(self.atoms):
            if not 0 <= atom.chain_index < len(self.chains):
                raise InputError(f"atom {idx}: chain_index out of range")
            if atom.chain_index < prev_chain:
                raise InputError(
                    f"atom {idx}: atoms must be grouped by chain in document order"
                )
            if atom.chain_index != prev_chain:
                prev_res = -1
            if atom.residue_index < prev_res:
                raise InputError(
                    f"atom {idx}: residue_index must be nondecreasing within a chain"
                )
            prev_chain = atom.chain_index
            prev_res = atom.residue_index
        seen: set[tuple[int, int]] = set()
        for bond in self.bonds:
            if bond.i == bond.j:
                raise InputError(f"bond joins atom {bond.i} to itself")
            if not (0 <= bond.i < n and 0 <= bond.j < n):
                raise InputError(f"bond ({bond.i}, {bond.j}) out of range")
            if bond.order not in BOND_ORDERS:
                raise InputError(f"bond ({bond.i}, {bond.j}): bad order {bond.order}")
            key = (min(bond.i, bond.j), max(bond.i, bond.j))
            if key in seen:
                raise InputError(f"duplicate bond {key}")
            seen.add(key)
        for sc in self.stereocenters:
            for a in (sc.center, *sc.neighbors):
                if not 0 <= a < n:
                    raise InputError(f"stereocenter atom {a} out of range")
            if sc.parity not in (-1, 1):
                raise InputError(f"stereocenter parity must be +/-1, got {sc.parity}")
        self._validate_entities()

    def _validate_entities(self) -> None:
        # Chains sharing an entity_id must be exact copies: same residue
        # sequence and same per-residue atom composition.
        signatures: dict[int, tuple] = {}
        for ci, chain in enumerate(self.chains):
            sig = tuple(
                (a.residue_index, a.residue_name, a.name, a.element)
                for a in self.atoms
                if a.chain_index == ci
            )
            prev = signatures.setdefault(chain.entity_id, sig)
            if prev != sig:
                raise InputError(
                    f"chains of entity {chain.entity_id} differ in composition"
                )

    # -- conveniences ------------------------------------------------------

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    def chain_index_by_id(self, chain_id: str) -> int:
        for ci, chain in enumerate(self.chains):
            if chain.id == chain_id:
                return ci
        raise InputError(f"no chain with id {chain_id!r}")

    def atoms_of_chain(self, chain_index: int) -> np.ndarray:
        return np.array(
            [i for i, a in enumerate(self.atoms) if a.chain_index == chain_index],
            dtype=np.int64,
        )

    def chain_of(self, atom_index: int) -> Chain:
        return self.chains[self.atoms[atom_index].chain_index]

    def residue_key(self, atom_index: int) -> tuple[int, int]:
        """(chain_index, residue_index) identifying an atom's residue."""
        a = self.atoms[atom_index]
        return (a.chain_index, a.residue_index)

    def n_residues(self) -> int:
        return len({self.residue_key(i) for i in range(self.n_atoms)})

    def adjacency(self) -> list[list[tuple[int, int]]]:
        """Per-atom list of ``(neighbor, bond_order)``; order-0 rows excluded."""
        adj: list[list[tuple[int, int]]] = [[] for _ in self.atoms]
        for b in self.bonds:
            if b.order == 0:
                continue
            adj[b.i].append((b.j, b.order))
            adj[b.j].append((b.i, b.order))
        return adj

    def chain_sequence(self, chain_index: int) -> str:
        """One-letter sequence of a polymer chain (one letter per residue)."""
        residues: dict[int, str] = {}
        for a in self.atoms:
            if a.chain_index == chain_index:
                residues.setdefault(a.residue_index, a.residue_name)
        return "".join(
            residue_one_letter(residues[r]) for r in sorted(residues)
        )


@dataclass
class Conformation:
    """Coordinates (angstroms) for every atom of a system, with provenance.

    ``provenance`` is a free-form tag such as ``"reference"``, ``"prior"``,
    ``"intermediate"`` or ``"denoised"``.
    """

    coords: np.ndarray
    provenance: str = "reference"

    def __post_init__(self) -> None:
        coords = np.asarray(self.coords, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[1] != 3:
            raise InputError(f"coords must have shape (N, 3), got {coords.shape}")
        self.coords = coords

    def copy(self, provenance: Optional[str] = None) -> "Conformation":
        return Conformation(
            self.coords.copy(),
            self.provenance if provenance is None else provenance,
        )


def as_coords(obj, n_atoms: Optional[int] = None) -> np.ndarray:
    """Coerce a Conformation or array-like into a float64 ``(N, 3)`` array."""
    coords = obj.coords if isinstance(obj, Conformation) else obj
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 3:
        raise InputError(f"expected (N, 3) coordinates, got shape {coords.shape}")
    if n_atoms is not None and coords.shape[0] != n_atoms:
        raise InputError(
            f"expected {n_atoms} atoms, got {coords.shape[0]} coordinate rows"
        )
    return coords


# --------------------------------------------------------------------------
# anchor selection


@dataclass(frozen=True)
class AnchorSet:
    """An ordered subset of atom indices used for coarse pair-level features.

    ``stage_sizes`` records how many anchors came from each selection stage
    (backbone trace, ligand/non-standard, remaining standard atoms).
    """

    indices: np.ndarray
    budget: int
    stage_sizes: tuple[int, int, int]

    def __len__(self) -> int:
        return len(self.indices)


def backbone_trace_name(molecule_class: str) -> Optional[str]:
    """Name of the single backbone trace atom for a polymer class."""
    if molecule_class in ("protein", "peptide"):
        return "CA"
    if molecule_class in ("dna", "rna"):
        return "C1'"
    return None


def _selection_stage(system: MolecularSystem, atom_index: int) -> int:
    """Stage in which an atom becomes eligible for anchor selection.

    Stage 0: backbone trace atoms (CA / C1') of standard residues in polymer
    chains.  Stage 1: ligand-class and modified-class atoms plus atoms of
    non-standard residues inside polymer chains.  Stage 2: everything else.
    """
    atom = system.atoms[atom_index]
    chain = system.chains[atom.chain_index]
    if chain.molecule_class in ("ligand", "modified"):
        return 1
    standard = residue_vocab_index(atom.residue_name) < len(STANDARD_RESIDUES)
    if not standard:
        return 1
    if atom.name == backbone_trace_name(chain.molecule_class):
        return 0
    return 2


def select_anchors(
    system: MolecularSystem, budget: int, seed: int = 0
) -> AnchorSet:
    """Choose up to ``budget`` anchor atoms in three stages.

    Stages are exhausted in order; when a stage does not fit in the remaining
    budget, a uniform sample without replacement (seeded) is taken from it.
    Selected indices are sorted ascending within each stage, so the result is
    deterministic for a given seed.
    """
    if budget <= 0:
        raise InputError(f"anchor budget must be positive, got {budget}")
    stages: list[list[int]] = [[], [], []]
    for i in range(system.n_atoms):
        stages[_selection_stage(system, i)].append(i)
    rng = np.random.default_rng(seed)
    chosen: list[np.ndarray] = []
    stage_sizes = []
    remaining = budget
    for members in stages:
        if remaining <= 0 or not members:
            stage_sizes.append(0)
            continue
        pool = np.array(members, dtype=np.int64)
        if len(pool) <= remaining:
            take = pool
        else:
            take = np.sort(rng.choice(pool, size=remaining, replace=False))
        chosen.append(take)
        stage_sizes.append(len(take))
        remaining -= len(take)
    indices = (
        np.concatenate(chosen) if chosen else np.empty(0, dtype=np.int64)
    )
    return AnchorSet(indices=indices, budget=budget, stage_sizes=tuple(stage_sizes))


# --------------------------------------------------------------------------
# bonded local frames and bond orientation features

_UNIT_X = np.array([1.0, 0.0, 0.0])
_UNIT_Y = np.array([0.0, 1.0, 0.0])


def _normalize(v: np.ndarray, eps: float = 1e-12) -> Optional[np.ndarray]:
    norm = float(np.linalg.norm(v))
    if norm < eps:
        return None
    return v / norm


def _project_global_axis(axis_hint: np.ndarray, e: np.ndarray) -> np.ndarray:
    """Global x-axis projected orthogonal to ``e`` (y-axis if near-parallel)."""
    w = axis_hint - np.dot(axis_hint, e) * e
    unit = _normalize(w)
    if unit is None:
        w = _UNIT_Y - np.dot(_UNIT_Y, e) * e
        unit = _normalize(w)
        assert unit is not None
    return unit


def _sorted_bonded_neighbors(
    atom_index: int, coords: np.ndarray, adjacency: list[list[tuple[int, int]]]
) -> list[int]:
    nbrs = [j for j, _ in adjacency[atom_index]]
    nbrs.sort(key=lambda j: (float(np.linalg.norm(coords[j] - coords[atom_index])), j))
    return nbrs


def local_frame(
    atom_index: int,
    coords: np.ndarray,
    adjacency: list[list[tuple[int, int]]],
    allow_fallback: bool = True,
) -> Optional[np.ndarray]:
    """Right-handed orthonormal frame at an atom, rows ``(e1, e2, e3)``.

    The frame is built by Gram-Schmidt from the two nearest bonded
    neighbors: ``e1`` points at the nearest neighbor, ``e2`` is the second
    neighbor direction orthogonalized against ``e1``, ``e3 = e1 x e2``.

    Under-coordinated atoms get a deterministic fallback when
    ``allow_fallback`` is set: with a single bonded neighbor the frame's
    z-axis (``e3``) lies along that bond and ``e1`` completes it from the
    global x-axis; with collinear neighbors ``e2`` is completed the same way.
    Without fallback (the strict mode used for frame-based losses) such atoms
    yield ``None``.
    """
    nbrs = _sorted_bonded_neighbors(atom_index, coords, adjacency)
    origin = coords[atom_index]
    if len(nbrs) >= 2:
        e1 = _normalize(coords[nbrs[0]] - origin)
        if e1 is None:
            return None
        v = coords[nbrs[1]] - origin
        e2 = _normalize(v - np.dot(v, e1) * e1)
        if e2 is None:
            if not allow_fallback:
                return None
            e2 = _project_global_axis(_UNIT_X, e1)
        e3 = np.cross(e1, e2)
        return np.stack([e1, e2, e3])
    if len(nbrs) == 1 and allow_fallback:
        e3 = _normalize(coords[nbrs[0]] - origin)
        if e3 is None:
            return None
        e1 = _project_global_axis(_UNIT_X, e3)
        e2 = np.cross(e3, e1)
        return np.stack([e1, e2, e3])
    return None


def bond_orientation_features(
    system: MolecularSystem, conformation
) -> np.ndarray:
    """Per-bond unit direction expressed in the bonded local frame at ``i``.

    For each bond ``(i, j)`` the direction ``j - i`` is normalized and
    rotated into the local frame at ``i``, making the feature invariant to
    global rigid motion.  Order-0 padding rows produce the zero vector, as do
    bonds of zero length.  Terminal atoms (single bonded neighbor) use the
    fallback frame whose z-axis lies along their only bond, so their feature
    is exactly ``(0, 0, 1)``.
    """
    coords = as_coords(conformation, system.n_atoms)
    adjacency = system.adjacency()
    out = np.zeros((len(system.bonds), 3), dtype=np.float64)
    for row, bond in enumerate(system.bonds):
        if bond.order == 0:
            continue
        frame = local_frame(bond.i, coords, adjacency, allow_fallback=True)
        direction = _normalize(coords[bond.j] - coords[bond.i])
        if frame is None or direction is None:
            continue
        out[row] = frame @ direction
    return out


# --------------------------------------------------------------------------
# paired MSA assembly


class MsaRow(NamedTuple):
    """One aligned sequence with its similarity to the query and taxon."""

    sequence: str
    similarity: float
    taxon_id: str


def pair_msa(
    chain_msas: Sequence[Sequence[MsaRow]], max_rows: int = 16384
) -> list[tuple[Optional[MsaRow], ...]]:
    """Assemble a compact cross-chain MSA matrix.

    Each per-chain MSA must start with its query row.  Non-query rows are
    sorted by decreasing similarity; rows sharing a taxon across at least two
    chains are paired (k-th best with k-th best), and whatever remains is
    backfilled in parallel so unpaired sequences share rows instead of
    wasting one row per sequence.  Row 0 of the result is always the query
    row; the matrix is truncated to ``max_rows``.
    """
    if max_rows < 1:
        raise InputError(f"max_rows must be >= 1, got {max_rows}")
    n_chains = len(chain_msas)
    if n_chains == 0:
        raise InputError("at least one chain MSA is required")
    for msa in chain_msas:
        if len(msa) == 0:
            raise InputError("each chain MSA must contain its query row")

    queries = tuple(msa[0] for msa in chain_msas)
    ranked: list[list[MsaRow]] = [
        sorted(msa[1:], key=lambda r: -r.similarity) for msa in chain_msas
    ]

    # Group rows of each chain by taxon, preserving similarity rank.
    by_taxon: list[dict[str, list[int]]] = []
    for rows in ranked:
        groups: dict[str, list[int]] = {}
        for idx, row in enumerate(rows):
            if row.taxon_id:
                groups.setdefault(row.taxon_id, []).append(idx)
        by_taxon.append(groups)

    used: list[set[int]] = [set() for _ in range(n_chains)]
    paired: list[tuple[float, str, int, tuple[Optional[MsaRow], ...]]] = []
    taxa = sorted({t for groups in by_taxon for t in groups})
    for taxon in taxa:
        members = [c for c in range(n_chains) if taxon in by_taxon[c]]
        if len(members) < 2:
            continue
        depth = min(len(by_taxon[c][taxon]) for c in members)
        for k in range(depth):
            cells: list[Optional[MsaRow]] = [None] * n_chains
            sims = []
            for c in members:
                idx = by_taxon[c][taxon][k]
                cells[c] = ranked[c][idx]
                used[c].add(idx)
                sims.append(ranked[c][idx].similarity)
            paired.append((-float(np.mean(sims)), taxon, k, tuple(cells)))
    paired.sort(key=lambda item: item[:3])

    leftovers = [
        [row for idx, row in enumerate(rows) if idx not in used[c]]
        for c, rows in enumerate(ranked)
    ]
    matrix: list[tuple[Optional[MsaRow], ...]] = [queries]
    matrix.extend(cells for *_, cells in paired)
    for depth in range(max(map(len, leftovers), default=0)):
        cells = tuple(
            leftovers[c][depth] if depth < len(leftovers[c]) else None
            for c in range(n_chains)
        )
        matrix.append(cells)
    return matrix[:max_rows]
