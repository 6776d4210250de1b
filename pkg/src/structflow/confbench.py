"""Conformation-discrimination benchmark.

Given a predicted structure (query) and two experimentally determined
conformations of the same molecule — an *alternative* ``a`` and a
*reference* ``r`` — the benchmark asks which conformation the prediction
is closer to.  The signed score

    score = (rmsd_qa - rmsd_qr) / sqrt((rmsd_qa^2 + rmsd_qr^2 + rmsd_ar^2) / 2)

is +1 exactly when the query coincides with the reference, -1 when it
coincides with the alternative, 0 at the midpoint, and always lies in
[-1, 1] because all three RMSDs are measured on one shared atom
correspondence (superposed RMSD obeys the triangle inequality).

Scores are computed at three levels: trace atoms of every mapped residue
(``global_ca``), trace atoms of pocket residues (``pocket_ca``), and all
shared heavy atoms of pocket residues (``pocket_heavy``).  Residue
correspondence across possibly renumbered structures comes from local
sequence alignment; a pocket mapped below 50% coverage is an error.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InputError
from .geometry import (
    INCLUSION_RADIUS_DEFAULT,
    INCLUSION_RADIUS_NUCLEIC,
    LDDT_THRESHOLDS,
    NUCLEIC_CLASSES,
    detect_pocket,
    kabsch_weighted,
)
from .topology import (
    MolecularSystem,
    POLYMER_CLASSES,
    as_coords,
    backbone_trace_name,
)

_MATCH = 2
_MISMATCH = -1
_GAP = -2


def smith_waterman(
    seq_a: str,
    seq_b: str,
    match: int = _MATCH,
    mismatch: int = _MISMATCH,
    gap: int = _GAP,
) -> tuple[list[tuple[int, int]], int]:
    """Local alignment; returns matched index pairs and the best score.

    Traceback starts at the highest-scoring cell (first in row-major order
    on ties) and prefers diagonal moves over vertical over horizontal.
    """
    la, lb = len(seq_a), len(seq_b)
    h = np.zeros((la + 1, lb + 1), dtype=np.int64)
    for i in range(1, la + 1):
        for j in range(1, lb + 1):
            s = match if seq_a[i - 1] == seq_b[j - 1] else mismatch
            h[i, j] = max(0, h[i - 1, j - 1] + s, h[i - 1, j] + gap, h[i, j - 1] + gap)
    best = int(h.max())
    if best == 0:
        return [], 0
    i, j = np.unravel_index(int(np.argmax(h)), h.shape)
    i, j = int(i), int(j)
    pairs: list[tuple[int, int]] = []
    while i > 0 and j > 0 and h[i, j] > 0:
        s = match if seq_a[i - 1] == seq_b[j - 1] else mismatch
        if h[i, j] == h[i - 1, j - 1] + s:
            pairs.append((i - 1, j - 1))
            i, j = i - 1, j - 1
        elif h[i, j] == h[i - 1, j] + gap:
            i -= 1
        else:
            j -= 1
    pairs.reverse()
    return pairs, best


# --------------------------------------------------------------------------
# chain mapping


@dataclass(frozen=True)
class MappingCandidate:
    chain_id: str
    pocket_fident: float
    lddt: float
    bb_lddt: float


def rank_chain_mappings(candidates: Sequence[MappingCandidate]) -> list[MappingCandidate]:
    """Best candidate first: pocket sequence identity, then LDDT, then
    backbone LDDT, all descending; remaining ties break on chain id."""
    return sorted(
        candidates,
        key=lambda c: (-c.pocket_fident, -c.lddt, -c.bb_lddt, c.chain_id),
    )


def _atom_lookup(system: MolecularSystem) -> dict:
    table = {}
    for i, atom in enumerate(system.atoms):
        table[(atom.chain_index, atom.residue_index, atom.name)] = i
    return table


def _chain_residue_letters(system: MolecularSystem, chain_index: int):
    """Ordered residue indices and the chain's one-letter sequence."""
    residues: list[int] = []
    for i in system.atoms_of_chain(chain_index):
        r = system.atoms[i].residue_index
        if not residues or residues[-1] != r:
            residues.append(r)
    return residues, system.chain_sequence(chain_index)


def _correspondence_lddt(
    coords_q: np.ndarray,
    coords_r: np.ndarray,
    radii: np.ndarray,
    residue_keys: list,
) -> float:
    """LDDT over an explicit atom correspondence.

    Inclusion uses the second structure's distances against the larger of
    the two atoms' class radii; same-residue pairs are skipped.
    """
    n = coords_q.shape[0]
    if n < 2:
        return 0.0
    d_r = np.linalg.norm(coords_r[:, None, :] - coords_r[None, :, :], axis=-1)
    d_q = np.linalg.norm(coords_q[:, None, :] - coords_q[None, :, :], axis=-1)
    cutoff = np.maximum(radii[:, None], radii[None, :])
    same_res = np.array(
        [[residue_keys[i] == residue_keys[j] for j in range(n)] for i in range(n)]
    )
    include = (d_r < cutoff) & ~same_res
    include &= np.triu(np.ones((n, n), dtype=bool), k=1)
    ii, jj = np.nonzero(include)
    if ii.size == 0:
        return 0.0
    delta = np.abs(d_q[ii, jj] - d_r[ii, jj])
    taus = np.asarray(LDDT_THRESHOLDS)
    return float(np.mean(delta[:, None] < taus[None, :]))


def _class_radius(molecule_class: str) -> float:
    return (
        INCLUSION_RADIUS_NUCLEIC
        if molecule_class in NUCLEIC_CLASSES
        else INCLUSION_RADIUS_DEFAULT
    )


@dataclass
class _ChainMap:
    ref_chain: int
    other_chain: int
    residue_pairs: list  # [(ref_residue_index, other_residue_index)]


def _map_one_chain(
    ref_sys: MolecularSystem,
    ref_chain: int,
    other_sys: MolecularSystem,
    other_chain: int,
) -> Optional[_ChainMap]:
    ref_residues, ref_seq = _chain_residue_letters(ref_sys, ref_chain)
    oth_residues, oth_seq = _chain_residue_letters(other_sys, other_chain)
    pairs, score = smith_waterman(ref_seq, oth_seq)
    if not pairs:
        return None
    residue_pairs = [(ref_residues[i], oth_residues[j]) for i, j in pairs]
    return _ChainMap(ref_chain, other_chain, residue_pairs)


def _auto_chain_pairing(
    ref_sys: MolecularSystem,
    ref_coords: np.ndarray,
    other_sys: MolecularSystem,
    other_coords: np.ndarray,
    pocket: Sequence[tuple[int, int]],
) -> dict[int, _ChainMap]:
    """Greedy assignment of reference polymer chains to compatible chains.

    Candidates for each reference chain are ranked by pocket sequence
    identity, then mapped-trace LDDT (all shared atoms / trace only).
    """
    pocket_set = set(pocket)
    ref_lookup = _atom_lookup(ref_sys)
    oth_lookup = _atom_lookup(other_sys)
    used: set[int] = set()
    result: dict[int, _ChainMap] = {}
    for rci, ref_chain in enumerate(ref_sys.chains):
        if ref_chain.molecule_class not in POLYMER_CLASSES:
            continue
        candidates = []
        maps = {}
        for oci, oth_chain in enumerate(other_sys.chains):
            if oci in used or oth_chain.molecule_class != ref_chain.molecule_class:
                continue
            cmap = _map_one_chain(ref_sys, rci, other_sys, oci)
            if cmap is None:
                continue
            in_pocket = [
                (r, o) for r, o in cmap.residue_pairs if (rci, r) in pocket_set
            ]
            scored_pairs = in_pocket if in_pocket else cmap.residue_pairs
            ref_letters = {
                res: letter
                for res, letter in zip(*_chain_residue_letters(ref_sys, rci))
            }
            oth_letters = {
                res: letter
                for res, letter in zip(*_chain_residue_letters(other_sys, oci))
            }
            n_ident = sum(
                1 for r, o in scored_pairs if ref_letters[r] == oth_letters[o]
            )
            fident = n_ident / len(scored_pairs)
            trace_r = backbone_trace_name(ref_chain.molecule_class)
            corr_all, corr_trace = [], []
            for r, o in cmap.residue_pairs:
                names_r = {
                    ref_sys.atoms[i].name
                    for i in ref_sys.atoms_of_chain(rci)
                    if ref_sys.atoms[i].residue_index == r
                }
                for name in sorted(names_r):
                    ri = ref_lookup.get((rci, r, name))
                    oi = oth_lookup.get((oci, o, name))
                    if ri is None or oi is None:
                        continue
                    if not ref_sys.atoms[ri].is_heavy:
                        continue
                    corr_all.append((ri, oi))
                    if name == trace_r:
                        corr_trace.append((ri, oi))
            radius = _class_radius(ref_chain.molecule_class)

            def corr_lddt(corr):
                if len(corr) < 2:
                    return 0.0
                r_idx = np.array([p[0] for p in corr])
                o_idx = np.array([p[1] for p in corr])
                keys = [ref_sys.residue_key(int(i)) for i in r_idx]
                return _correspondence_lddt(
                    other_coords[o_idx],
                    ref_coords[r_idx],
                    np.full(len(corr), radius),
                    keys,
                )

            candidates.append(
                MappingCandidate(
                    chain_id=oth_chain.id,
                    pocket_fident=fident,
                    lddt=corr_lddt(corr_all),
                    bb_lddt=corr_lddt(corr_trace),
                )
            )
            maps[oth_chain.id] = (oci, cmap)
        if not candidates:
            continue
        best = rank_chain_mappings(candidates)[0]
        oci, cmap = maps[best.chain_id]
        used.add(oci)
        result[rci] = cmap
    return result


def _explicit_chain_pairing(
    ref_sys: MolecularSystem,
    other_sys: MolecularSystem,
    mapping: dict[str, str],
) -> dict[int, _ChainMap]:
    result: dict[int, _ChainMap] = {}
    for ref_id, other_id in mapping.items():
        rci = ref_sys.chain_index_by_id(ref_id)
        oci = other_sys.chain_index_by_id(other_id)
        cmap = _map_one_chain(ref_sys, rci, other_sys, oci)
        if cmap is None:
            raise InputError(
                f"chains {ref_id!r} and {other_id!r} share no alignable sequence"
            )
        result[rci] = cmap
    return result


# --------------------------------------------------------------------------
# scoring


def confbench_score(rmsd_qa: float, rmsd_qr: float, rmsd_ar: float) -> float:
    """Signed discrimination score in [-1, 1]; positive favors the reference."""
    if min(rmsd_qa, rmsd_qr, rmsd_ar) < 0:
        raise InputError("RMSD values must be non-negative")
    denom_sq = (rmsd_qa**2 + rmsd_qr**2 + rmsd_ar**2) / 2.0
    if denom_sq == 0.0:
        return 0.0
    return (rmsd_qa - rmsd_qr) / np.sqrt(denom_sq)


def _superposed_rmsd(mobile: np.ndarray, target: np.ndarray) -> float:
    if mobile.shape[0] == 0:
        raise InputError("empty atom correspondence")
    w = np.ones(mobile.shape[0])
    transform = kabsch_weighted(mobile, target, w)
    moved = transform.apply(mobile)
    return float(np.sqrt(np.mean(np.sum((moved - target) ** 2, axis=1))))


@dataclass
class ConfbenchResult:
    scores: dict[str, float]
    rmsd_qa: dict[str, float]
    rmsd_qr: dict[str, float]
    rmsd_ar: dict[str, float]
    pocket_coverage: float
    pair_distinct: bool
    n_atoms: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "scores": dict(self.scores),
            "rmsd_qa": dict(self.rmsd_qa),
            "rmsd_qr": dict(self.rmsd_qr),
            "rmsd_ar": dict(self.rmsd_ar),
            "pocket_coverage": self.pocket_coverage,
            "pair_distinct": self.pair_distinct,
            "n_atoms": dict(self.n_atoms),
        }


LEVELS = ("global_ca", "pocket_ca", "pocket_heavy")


def evaluate_conformations(
    query: tuple[MolecularSystem, np.ndarray],
    alternative: tuple[MolecularSystem, np.ndarray],
    reference: tuple[MolecularSystem, np.ndarray],
    ligand_chain_id: str,
    chain_mapping_query: Optional[dict[str, str]] = None,
    chain_mapping_alt: Optional[dict[str, str]] = None,
    pocket_radius: float = 10.0,
    min_coverage: float = 0.5,
    distinct_rmsd: float = 1.5,
) -> ConfbenchResult:
    """Score a query against an (alternative, reference) conformation pair.

    All three structures are reduced to one common atom correspondence per
    level before any RMSD is computed, keyed off the reference's pocket
    around ``ligand_chain_id``.  Raises :class:`InputError` when less than
    ``min_coverage`` of the pocket's residues can be mapped.
    """
    q_sys, q_coords = query[0], as_coords(query[1], query[0].n_atoms)
    a_sys, a_coords = alternative[0], as_coords(alternative[1], alternative[0].n_atoms)
    r_sys, r_coords = reference[0], as_coords(reference[1], reference[0].n_atoms)

    pocket = detect_pocket(r_coords, r_sys, ligand_chain_id, radius=pocket_radius)
    if not pocket:
        raise InputError("no pocket residues within radius of the ligand")
    if chain_mapping_query is None:
        q_maps = _auto_chain_pairing(r_sys, r_coords, q_sys, q_coords, pocket)
    else:
        q_maps = _explicit_chain_pairing(r_sys, q_sys, chain_mapping_query)
    if chain_mapping_alt is None:
        a_maps = _auto_chain_pairing(r_sys, r_coords, a_sys, a_coords, pocket)
    else:
        a_maps = _explicit_chain_pairing(r_sys, a_sys, chain_mapping_alt)

    q_lookup = _atom_lookup(q_sys)
    a_lookup = _atom_lookup(a_sys)
    r_lookup = _atom_lookup(r_sys)

    # residue-level triple map: ref (chain, res) -> (query res, alt res)
    triple: dict[tuple[int, int], tuple[tuple[int, int], tuple[int, int]]] = {}
    for rci, q_map in q_maps.items():
        if rci not in a_maps:
            continue
        a_map = a_maps[rci]
        q_res = dict(q_map.residue_pairs)
        a_res = dict(a_map.residue_pairs)
        for r in q_res:
            if r in a_res:
                triple[(rci, r)] = (
                    (q_map.other_chain, q_res[r]),
                    (a_map.other_chain, a_res[r]),
                )

    pocket_set = set(pocket)
    mapped_pocket = sum(1 for key in pocket_set if key in triple)
    coverage = mapped_pocket / len(pocket_set)
    if coverage < min_coverage:
        raise InputError(
            f"pocket mapping failed: coverage {coverage:.2f} below {min_coverage:.2f}"
        )

    def correspondence(keys, heavy_all: bool):
        out = []
        for (rci, rres) in sorted(keys):
            if (rci, rres) not in triple:
                continue
            (qci, qres), (aci, ares) = triple[(rci, rres)]
            trace = backbone_trace_name(r_sys.chains[rci].molecule_class)
            if heavy_all:
                names = sorted(
                    {
                        r_sys.atoms[i].name
                        for i in r_sys.atoms_of_chain(rci)
                        if r_sys.atoms[i].residue_index == rres
                        and r_sys.atoms[i].is_heavy
                    }
                )
            else:
                names = [trace] if trace is not None else []
            for name in names:
                ri = r_lookup.get((rci, rres, name))
                qi = q_lookup.get((qci, qres, name))
                ai = a_lookup.get((aci, ares, name))
                if ri is None or qi is None or ai is None:
                    continue
                out.append((qi, ai, ri))
        return out

    level_atoms = {
        "global_ca": correspondence(triple.keys(), heavy_all=False),
        "pocket_ca": correspondence(pocket_set, heavy_all=False),
        "pocket_heavy": correspondence(pocket_set, heavy_all=True),
    }

    scores, rqa, rqr, rar, counts = {}, {}, {}, {}, {}
    for level, corr in level_atoms.items():
        if len(corr) < 3:
            raise InputError(f"level {level!r} has fewer than 3 mapped atoms")
        qi = np.array([c[0] for c in corr])
        ai = np.array([c[1] for c in corr])
        ri = np.array([c[2] for c in corr])
        qa = _superposed_rmsd(q_coords[qi], a_coords[ai])
        qr = _superposed_rmsd(q_coords[qi], r_coords[ri])
        ar = _superposed_rmsd(a_coords[ai], r_coords[ri])
        scores[level] = confbench_score(qa, qr, ar)
        rqa[level], rqr[level], rar[level] = qa, qr, ar
        counts[level] = len(corr)

    pair_distinct = any(rar[level] > distinct_rmsd for level in LEVELS)
    return ConfbenchResult(
        scores=scores,
        rmsd_qa=rqa,
        rmsd_qr=rqr,
        rmsd_ar=rar,
        pocket_coverage=coverage,
        pair_distinct=pair_distinct,
        n_atoms=counts,
    )


def win_rate(scores: Sequence[float], threshold: float = 0.0) -> float:
    """Fraction of scores strictly above ``threshold``."""
    scores = np.asarray(list(scores), dtype=np.float64)
    if scores.size == 0:
        raise InputError("win_rate needs at least one score")
    return float(np.mean(scores > threshold))
