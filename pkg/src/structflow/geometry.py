"""Rigid alignment and structure-quality metrics.

Everything here is plain numpy over ``(N, 3)`` coordinate arrays in
angstroms.  Conventions:

* Rigid transforms act as ``x @ R.T + t`` (points are rows).
* LDDT-family metrics build their pair list from *reference* distances,
  exclude intra-residue pairs, and use strict ``<`` comparisons at the
  standard thresholds (0.5, 1, 2, 4 A).
* The inclusion radius is per molecule class: 25 A when either atom belongs
  to a nucleic-acid chain, 15 A otherwise.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .errors import InputError, NumericalError
from .topology import (
    Conformation,
    MolecularSystem,
    as_coords,
    backbone_trace_name,
    local_frame,
)

LDDT_THRESHOLDS = (0.5, 1.0, 2.0, 4.0)
INCLUSION_RADIUS_DEFAULT = 15.0
INCLUSION_RADIUS_NUCLEIC = 25.0
NUCLEIC_CLASSES = ("dna", "rna")


# --------------------------------------------------------------------------
# rigid transforms


@dataclass(frozen=True)
class RigidTransform:
    """A proper rotation plus translation, applied as ``x @ R.T + t``."""

    rotation: np.ndarray
    translation: np.ndarray

    def apply(self, coords) -> np.ndarray:
        return as_coords(coords) @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Transform equivalent to applying ``other`` first, then ``self``."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )


def kabsch_weighted(
    mobile, target, weights: Optional[np.ndarray] = None
) -> RigidTransform:
    """Weighted least-squares superposition of ``mobile`` onto ``target``.

    Returns the proper rigid transform minimizing
    ``sum_i w_i * ||R m_i + t - x_i||^2``.  The rotation is reflection-
    corrected (det = +1).  Raises :class:`NumericalError` when the weighted
    point set is degenerate (fewer than three positively weighted atoms, or
    coincident/collinear positions that leave the rotation underdetermined).
    """
    m = as_coords(mobile)
    x = as_coords(target)
    if m.shape != x.shape:
        raise InputError(f"shape mismatch: {m.shape} vs {x.shape}")
    if weights is None:
        w = np.ones(len(m))
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (len(m),):
            raise InputError(f"weights shape {w.shape} != ({len(m)},)")
        if np.any(w < 0):
            raise InputError("alignment weights must be nonnegative")
    if np.count_nonzero(w > 0) < 3:
        raise NumericalError(
            "degenerate alignment: fewer than 3 positively weighted atoms"
        )
    wsum = float(w.sum())
    cm = (w @ m) / wsum
    cx = (w @ x) / wsum
    h = (m - cm).T @ ((x - cx) * w[:, None])
    u, s, vt = np.linalg.svd(h)
    if s[0] <= 0 or s[1] <= 1e-9 * s[0]:
        raise NumericalError(
            "degenerate alignment: weighted atoms are coincident or collinear"
        )
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rotation = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    translation = cx - rotation @ cm
    return RigidTransform(rotation=rotation, translation=translation)


def rmsd(a, b) -> float:
    """Root-mean-square deviation between index-matched coordinate sets."""
    pa = as_coords(a)
    pb = as_coords(b)
    if pa.shape != pb.shape:
        raise InputError(f"shape mismatch: {pa.shape} vs {pb.shape}")
    if len(pa) == 0:
        raise NumericalError("RMSD of an empty atom set")
    return float(np.sqrt(np.mean(np.sum((pa - pb) ** 2, axis=1))))


def aligned_rmsd(
    mobile,
    target,
    align_weights: Optional[np.ndarray] = None,
    rmsd_indices: Optional[np.ndarray] = None,
) -> float:
    """RMSD after superposing ``mobile`` onto ``target``.

    The superposition uses ``align_weights`` (uniform when omitted); the
    deviation itself is evaluated over ``rmsd_indices`` (all atoms when
    omitted).
    """
    m = as_coords(mobile)
    x = as_coords(target)
    transform = kabsch_weighted(m, x, align_weights)
    moved = transform.apply(m)
    if rmsd_indices is not None:
        return rmsd(moved[rmsd_indices], x[rmsd_indices])
    return rmsd(moved, x)


def default_alignment_weights(
    system: MolecularSystem, ligand_of_interest: Optional[str] = None
) -> np.ndarray:
    """Backbone-trace alignment weights.

    Polymer chains contribute only their trace atoms (CA / C1') at weight
    1.0; ligand and modified chains contribute every atom at 1.0, or 10.0
    for the declared ligand of interest.  Side-chain and base atoms get 0.
    """
    if ligand_of_interest is not None:
        system.chain_index_by_id(ligand_of_interest)  # raises if unknown
    weights = np.zeros(system.n_atoms)
    for i, atom in enumerate(system.atoms):
        chain = system.chains[atom.chain_index]
        if chain.molecule_class in ("ligand", "modified"):
            weights[i] = 10.0 if chain.id == ligand_of_interest else 1.0
        elif atom.name == backbone_trace_name(chain.molecule_class):
            weights[i] = 1.0
    return weights


# --------------------------------------------------------------------------
# LDDT family


def _inclusion_radii(system: MolecularSystem) -> np.ndarray:
    radii = np.full(system.n_atoms, INCLUSION_RADIUS_DEFAULT)
    for i, atom in enumerate(system.atoms):
        if system.chains[atom.chain_index].molecule_class in NUCLEIC_CLASSES:
            radii[i] = INCLUSION_RADIUS_NUCLEIC
    return radii


def _atom_selection(system: MolecularSystem, backbone_only: bool) -> np.ndarray:
    if not backbone_only:
        return np.arange(system.n_atoms)
    keep = [
        i
        for i, atom in enumerate(system.atoms)
        if atom.name
        == backbone_trace_name(system.chains[atom.chain_index].molecule_class)
    ]
    return np.array(keep, dtype=np.int64)


def _lddt_pairs(
    system: MolecularSystem,
    ref: np.ndarray,
    backbone_only: bool,
    inclusion_radius: Optional[float],
) -> tuple[np.ndarray, np.ndarray]:
    """Qualifying (i, j) pairs (global indices, i < j) from reference distances."""
    selection = _atom_selection(system, backbone_only)
    if len(selection) < 2:
        raise NumericalError("no contacts: fewer than two selectable atoms")
    sub = ref[selection]
    dist = cdist(sub, sub)
    if inclusion_radius is None:
        radii = _inclusion_radii(system)[selection]
        cutoff = np.maximum(radii[:, None], radii[None, :])
    else:
        cutoff = float(inclusion_radius)
    residue_keys = [system.residue_key(int(i)) for i in selection]
    same_residue = np.array(
        [[residue_keys[a] == residue_keys[b] for b in range(len(selection))]
         for a in range(len(selection))]
    )
    qualifying = (dist < cutoff) & ~same_residue
    qualifying &= np.triu(np.ones_like(qualifying, dtype=bool), k=1)
    ai, aj = np.nonzero(qualifying)
    if len(ai) == 0:
        raise NumericalError("no contacts: empty LDDT pair list")
    return selection[ai], selection[aj]


def lddt(
    pred,
    ref,
    system: MolecularSystem,
    thresholds: Sequence[float] = LDDT_THRESHOLDS,
    inclusion_radius: Optional[float] = None,
    backbone_only: bool = False,
) -> float:
    """Global LDDT of ``pred`` against ``ref``.

    The score is the fraction of (pair, threshold) events whose distance
    deviation is strictly below the threshold, over reference pairs from
    different residues within the inclusion radius.  ``inclusion_radius``
    overrides the per-class default when given; ``backbone_only`` restricts
    the calculation to trace atoms.
    """
    p = as_coords(pred, system.n_atoms)
    r = as_coords(ref, system.n_atoms)
    ai, aj = _lddt_pairs(system, r, backbone_only, inclusion_radius)
    dev = np.abs(
        np.linalg.norm(p[ai] - p[aj], axis=1)
        - np.linalg.norm(r[ai] - r[aj], axis=1)
    )
    hits = dev[:, None] < np.asarray(thresholds)[None, :]
    return float(hits.mean())


def per_atom_lddt(
    pred,
    ref,
    system: MolecularSystem,
    thresholds: Sequence[float] = LDDT_THRESHOLDS,
    inclusion_radius: Optional[float] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-atom LDDT restricted to each atom's own qualifying pairs.

    Returns ``(values, mask)``; atoms with no qualifying contacts have mask
    ``False`` and value 0.
    """
    p = as_coords(pred, system.n_atoms)
    r = as_coords(ref, system.n_atoms)
    ai, aj = _lddt_pairs(system, r, False, inclusion_radius)
    dev = np.abs(
        np.linalg.norm(p[ai] - p[aj], axis=1)
        - np.linalg.norm(r[ai] - r[aj], axis=1)
    )
    hits = (dev[:, None] < np.asarray(thresholds)[None, :]).mean(axis=1)
    totals = np.zeros(system.n_atoms)
    counts = np.zeros(system.n_atoms)
    np.add.at(totals, ai, hits)
    np.add.at(totals, aj, hits)
    np.add.at(counts, ai, 1.0)
    np.add.at(counts, aj, 1.0)
    mask = counts > 0
    values = np.zeros(system.n_atoms)
    values[mask] = totals[mask] / counts[mask]
    return values, mask


def smooth_lddt(
    pred,
    ref,
    system: MolecularSystem,
    steepness: float = 16.0,
    thresholds: Sequence[float] = LDDT_THRESHOLDS,
    inclusion_radius: Optional[float] = None,
    return_grad: bool = False,
):
    """Differentiable LDDT surrogate.

    Each hard threshold test is replaced by ``sigmoid(steepness * (tau -
    |d_pred - d_ref|))`` over the same pair list as :func:`lddt`, so the
    score converges to the hard LDDT as ``steepness`` grows.  With
    ``return_grad`` the analytic gradient with respect to the predicted
    coordinates is returned alongside the score.
    """
    p = as_coords(pred, system.n_atoms)
    r = as_coords(ref, system.n_atoms)
    ai, aj = _lddt_pairs(system, r, False, inclusion_radius)
    taus = np.asarray(thresholds, dtype=np.float64)
    diff = p[ai] - p[aj]
    d_pred = np.linalg.norm(diff, axis=1)
    d_ref = np.linalg.norm(r[ai] - r[aj], axis=1)
    delta = np.abs(d_pred - d_ref)
    z = steepness * (taus[None, :] - delta[:, None])
    sig = 1.0 / (1.0 + np.exp(-z))
    score = float(sig.mean())
    if not return_grad:
        return score
    # d(score)/d(delta) per pair, then chain through |d_pred - d_ref| and
    # the pair distance.
    dscore_ddelta = (-steepness * sig * (1.0 - sig)).sum(axis=1) / sig.size
    sign = np.sign(d_pred - d_ref)
    safe = np.where(d_pred > 1e-12, d_pred, 1.0)
    pair_grad = (dscore_ddelta * sign / safe)[:, None] * diff
    grad = np.zeros_like(p)
    np.add.at(grad, ai, pair_grad)
    np.add.at(grad, aj, -pair_grad)
    return score, grad


# --------------------------------------------------------------------------
# frame-aligned point error


def default_frame_atoms(system: MolecularSystem) -> np.ndarray:
    """Frame centers for FAPE: polymer trace atoms plus ligand/modified atoms."""
    keep = []
    for i, atom in enumerate(system.atoms):
        chain = system.chains[atom.chain_index]
        if chain.molecule_class in ("ligand", "modified"):
            keep.append(i)
        elif atom.name == backbone_trace_name(chain.molecule_class):
            keep.append(i)
    return np.array(keep, dtype=np.int64)


def fape(
    pred,
    ref,
    system: MolecularSystem,
    frame_atoms: Optional[np.ndarray] = None,
    clamp: float = 10.0,
    d0: float = 1.0,
) -> float:
    """Frame-aligned point error with distance normalization.

    For every valid local frame f and every other atom p the error is
    ``min(||F_pred (pred_p - pred_f) - F_ref (ref_p - ref_f)||, clamp)``
    divided by ``(||ref_p - ref_f|| + d0)``, averaged over all (f, p).
    Frames come from each frame atom's two nearest bonded neighbors; atoms
    whose frame is degenerate in either structure are skipped with a warning.
    """
    p = as_coords(pred, system.n_atoms)
    r = as_coords(ref, system.n_atoms)
    if frame_atoms is None:
        frame_atoms = default_frame_atoms(system)
    adjacency = system.adjacency()
    total = 0.0
    count = 0
    skipped = []
    others = np.arange(system.n_atoms)
    for f in np.asarray(frame_atoms, dtype=np.int64):
        fp = local_frame(int(f), p, adjacency, allow_fallback=False)
        fr = local_frame(int(f), r, adjacency, allow_fallback=False)
        if fp is None or fr is None:
            skipped.append(int(f))
            continue
        sel = others[others != f]
        local_pred = (p[sel] - p[f]) @ fp.T
        local_ref = (r[sel] - r[f]) @ fr.T
        err = np.minimum(
            np.linalg.norm(local_pred - local_ref, axis=1), clamp
        )
        norm = np.linalg.norm(r[sel] - r[f], axis=1) + d0
        total += float((err / norm).sum())
        count += len(sel)
    if skipped:
        warnings.warn(
            f"fape: skipped {len(skipped)} degenerate frame(s) at atoms {skipped}",
            RuntimeWarning,
            stacklevel=2,
        )
    if count == 0:
        raise NumericalError("fape: no valid frames")
    return total / count


# --------------------------------------------------------------------------
# distance maps, pockets, pocket-aligned ligand RMSD


def distance_map(coords, indices: Optional[np.ndarray] = None) -> np.ndarray:
    """Symmetric pairwise distance matrix over a subset of atoms."""
    c = as_coords(coords)
    if indices is not None:
        c = c[np.asarray(indices, dtype=np.int64)]
    return cdist(c, c)


def detect_pocket(
    ref,
    system: MolecularSystem,
    ligand_chain_id: str,
    radius: float = 10.0,
) -> list[tuple[int, int]]:
    """Pocket residues: those whose CA lies within ``radius`` of the ligand.

    Returns sorted ``(chain_index, residue_index)`` keys of protein/peptide
    residues whose trace atom is within ``radius`` (inclusive) of any atom
    of the named ligand chain, evaluated on the reference coordinates.
    """
    r = as_coords(ref, system.n_atoms)
    ligand_chain = system.chain_index_by_id(ligand_chain_id)
    ligand_atoms = system.atoms_of_chain(ligand_chain)
    if len(ligand_atoms) == 0:
        raise InputError(f"ligand chain {ligand_chain_id!r} has no atoms")
    pocket = set()
    for i, atom in enumerate(system.atoms):
        if atom.chain_index == ligand_chain:
            continue
        chain = system.chains[atom.chain_index]
        if chain.molecule_class not in ("protein", "peptide"):
            continue
        if atom.name != backbone_trace_name(chain.molecule_class):
            continue
        dmin = float(np.min(np.linalg.norm(r[ligand_atoms] - r[i], axis=1)))
        if dmin <= radius:
            pocket.add((atom.chain_index, atom.residue_index))
    return sorted(pocket)


def _trace_atom_index(
    system: MolecularSystem, chain_index: int, residue_index: int
) -> Optional[int]:
    name = backbone_trace_name(system.chains[chain_index].molecule_class)
    for i, atom in enumerate(system.atoms):
        if (
            atom.chain_index == chain_index
            and atom.residue_index == residue_index
            and atom.name == name
        ):
            return i
    return None


def pocket_aligned_ligand_rmsd(
    pred,
    ref,
    system: MolecularSystem,
    ligand_chain_id: str,
    chain_mapping: Optional[dict[str, str]] = None,
    radius: float = 10.0,
) -> float:
    """Ligand RMSD after a single pocket-CA superposition.

    The pocket is detected on the reference, restricted to the chain
    contributing the most pocket residues, and its predicted counterpart
    (identity by default, or ``chain_mapping[ref_chain_id]``) is superposed
    onto it with one unweighted Kabsch pass.  Without an explicit mapping,
    every predicted chain of the same entity is tried and the minimum ligand
    RMSD is returned, which makes the metric robust to swapped copies.
    """
    p = as_coords(pred, system.n_atoms)
    r = as_coords(ref, system.n_atoms)
    pocket = detect_pocket(r, system, ligand_chain_id, radius)
    if not pocket:
        raise NumericalError("no pocket residues within the detection radius")
    per_chain: dict[int, list[int]] = {}
    for ci, ri in pocket:
        per_chain.setdefault(ci, []).append(ri)
    # The chain contributing the most pocket residues defines the pocket.
    ref_chain = min(per_chain, key=lambda ci: (-len(per_chain[ci]), ci))
    residues = per_chain[ref_chain]
    ref_ca = [_trace_atom_index(system, ref_chain, ri) for ri in residues]
    ref_ca = [i for i in ref_ca if i is not None]
    if len(ref_ca) < 3:
        raise NumericalError(
            "degenerate pocket: fewer than 3 trace atoms for alignment"
        )

    if chain_mapping is not None:
        mapped = chain_mapping.get(system.chains[ref_chain].id)
        if mapped is None:
            raise InputError(
                f"chain_mapping lacks reference chain "
                f"{system.chains[ref_chain].id!r}"
            )
        candidates = [system.chain_index_by_id(mapped)]
    else:
        entity = system.chains[ref_chain].entity_id
        candidates = [
            ci for ci, ch in enumerate(system.chains) if ch.entity_id == entity
        ]

    ligand_chain = system.chain_index_by_id(ligand_chain_id)
    ligand_atoms = system.atoms_of_chain(ligand_chain)
    heavy = np.array(
        [i for i in ligand_atoms if system.atoms[i].is_heavy], dtype=np.int64
    )
    if len(heavy) == 0:
        raise InputError(f"ligand chain {ligand_chain_id!r} has no heavy atoms")

    best = None
    for cand in candidates:
        pred_ca = [_trace_atom_index(system, cand, ri) for ri in residues]
        if any(i is None for i in pred_ca):
            continue
        transform = kabsch_weighted(p[np.array(pred_ca)], r[np.array(ref_ca)])
        moved = transform.apply(p[heavy])
        value = rmsd(moved, r[heavy])
        if best is None or value < best:
            best = value
    if best is None:
        raise NumericalError("no candidate chain provided a complete pocket")
    return best
