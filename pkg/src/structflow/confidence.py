"""Binned confidence heads, physical-plausibility checks, and sample ranking.

Two quantities are predicted as categorical distributions over fixed bins
and decoded as the expectation of the bin centers:

* per-atom LDDT on 50 uniform bins over [0, 1];
* expected distance error between anchor-atom pairs on 64 uniform bins
  over [0, 32] angstrom.

Both heads are trained with cross entropy against binned targets computed
from the (detached) prediction, so confidence gradients never steer the
structure itself.  A pDockQ-style interface score is decoded from the
distance-error head, and sample ranking combines it with hard clash and
chirality checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import InputError
from .flow import (
    FlowConfig,
    TrainConfig,
    _SystemCaches,
    _replica_loss,
    prepare_flow_targets,
    sample_structure,
)
from .geometry import distance_map, per_atom_lddt
from .prior import PriorParams
from .topology import AnchorSet, MolecularSystem, as_coords, select_anchors


@dataclass(frozen=True)
class ConfidenceConfig:
    n_plddt_bins: int = 50
    n_pde_bins: int = 64
    pde_max: float = 32.0
    interface_cutoff: float = 15.0
    clash_cutoff: float = 1.7
    anchor_budget: int = 32


def plddt_bin_centers(n_bins: int = 50) -> np.ndarray:
    return (np.arange(n_bins) + 0.5) / n_bins


def pde_bin_centers(n_bins: int = 64, pde_max: float = 32.0) -> np.ndarray:
    return (np.arange(n_bins) + 0.5) * (pde_max / n_bins)


def _rbf(distances: torch.Tensor, n_centers: int = 16, d_max: float = 32.0):
    centers = torch.linspace(0.0, d_max, n_centers, dtype=distances.dtype)
    width = d_max / (n_centers - 1)
    return torch.exp(-((distances[..., None] - centers) ** 2) / (2 * width * width))


@dataclass
class ConfidenceOutput:
    plddt_logits: torch.Tensor  # (N, n_plddt_bins)
    pde_logits: torch.Tensor  # (A, A, n_pde_bins)
    anchors: np.ndarray
    config: ConfidenceConfig

    def plddt(self) -> np.ndarray:
        probs = torch.softmax(self.plddt_logits.detach().double(), dim=-1)
        centers = torch.from_numpy(
            plddt_bin_centers(self.config.n_plddt_bins)
        )
        return (probs @ centers).numpy()

    def pde(self) -> np.ndarray:
        probs = torch.softmax(self.pde_logits.detach().double(), dim=-1)
        centers = torch.from_numpy(
            pde_bin_centers(self.config.n_pde_bins, self.config.pde_max)
        )
        return (probs @ centers).numpy()


class ConfidenceHead(nn.Module):
    """Light MLP heads over the denoiser's per-atom conditioning.

    The per-atom branch pools radial features of the anchor distances into
    each atom's representation; the pair branch scores anchor pairs from
    the sum of their representations plus a radial embedding of their
    predicted distance.  Coordinates enter only through these (detached)
    distances.
    """

    def __init__(self, d_model: int = 96, config: ConfidenceConfig = ConfidenceConfig()):
        super().__init__()
        self.config = config
        self.n_rbf = 16
        d_in = d_model + self.n_rbf
        self.plddt_mlp = nn.Sequential(
            nn.Linear(d_in, d_model), nn.SiLU(), nn.Linear(d_model, config.n_plddt_bins)
        )
        self.pde_mlp = nn.Sequential(
            nn.Linear(d_in, d_model), nn.SiLU(), nn.Linear(d_model, config.n_pde_bins)
        )

    def forward(
        self, coords: torch.Tensor, atom_h: torch.Tensor, anchors: np.ndarray
    ) -> ConfidenceOutput:
        if coords.requires_grad:
            coords = coords.detach()
        atom_h = atom_h.detach()
        coords = coords.to(atom_h.dtype)
        idx = torch.from_numpy(np.asarray(anchors, dtype=np.int64))
        anchor_xyz = coords[idx]
        d_to_anchors = torch.cdist(coords, anchor_xyz)  # (N, A)
        atom_feat = torch.cat(
            [atom_h, _rbf(d_to_anchors, self.n_rbf, self.config.pde_max).mean(dim=1)],
            dim=-1,
        )
        plddt_logits = self.plddt_mlp(atom_feat)
        d_pair = torch.cdist(anchor_xyz, anchor_xyz)  # (A, A)
        h_anchor = atom_h[idx]
        pair_feat = torch.cat(
            [
                h_anchor[:, None, :] + h_anchor[None, :, :],
                _rbf(d_pair, self.n_rbf, self.config.pde_max),
            ],
            dim=-1,
        )
        pde_logits = self.pde_mlp(pair_feat)
        return ConfidenceOutput(plddt_logits, pde_logits, np.asarray(anchors), self.config)


# --------------------------------------------------------------------------
# targets and loss


def confidence_targets(
    pred: np.ndarray,
    reference: np.ndarray,
    system: MolecularSystem,
    anchors: np.ndarray,
    config: ConfidenceConfig = ConfidenceConfig(),
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Binned training targets from a prediction/reference pair.

    Returns ``(plddt_bins, plddt_mask, pde_bins)`` where the per-atom LDDT
    mask flags atoms with at least one reference contact and the distance
    error is measured between anchor-pair distance maps.
    """
    values, mask = per_atom_lddt(pred, reference, system)
    b = config.n_plddt_bins
    plddt_bins = np.clip((values * b).astype(np.int64), 0, b - 1)
    d_pred = distance_map(pred, anchors)
    d_ref = distance_map(reference, anchors)
    err = np.abs(d_pred - d_ref)
    width = config.pde_max / config.n_pde_bins
    pde_bins = np.clip((err / width).astype(np.int64), 0, config.n_pde_bins - 1)
    return plddt_bins, mask, pde_bins


def confidence_loss(
    output: ConfidenceOutput,
    plddt_bins: np.ndarray,
    plddt_mask: np.ndarray,
    pde_bins: np.ndarray,
) -> tuple[torch.Tensor, dict]:
    """Mean cross entropy of both heads (uniform logits score ``ln B``)."""
    mask = np.asarray(plddt_mask, dtype=bool)
    if mask.any():
        plddt_ce = F.cross_entropy(
            output.plddt_logits[torch.from_numpy(mask)],
            torch.from_numpy(plddt_bins[mask]),
        )
    else:
        plddt_ce = output.plddt_logits.sum() * 0.0
    pde_ce = F.cross_entropy(
        output.pde_logits.reshape(-1, output.pde_logits.shape[-1]),
        torch.from_numpy(np.asarray(pde_bins, dtype=np.int64)).reshape(-1),
    )
    total = plddt_ce + pde_ce
    breakdown = {
        "plddt_ce": float(plddt_ce.detach()),
        "pde_ce": float(pde_ce.detach()),
        "confidence_total": float(total.detach()),
    }
    return total, breakdown


# --------------------------------------------------------------------------
# decoded scores


def pdockq(pde_values: np.ndarray) -> float:
    """Interface quality in [0, 1] from expected distance errors.

    ``(1 / (1 + m / 8.5^2) + 1 / (1 + m / 1.5^2) + mean(pde < 5)) / 3`` with
    ``m`` the mean squared expected distance error.  All-zero errors give
    exactly 1.0; an empty selection scores 0.0.
    """
    pde_values = np.asarray(pde_values, dtype=np.float64).ravel()
    if pde_values.size == 0:
        return 0.0
    m = float(np.mean(pde_values**2))
    near = float(np.mean(pde_values < 5.0))
    return (1.0 / (1.0 + m / 8.5**2) + 1.0 / (1.0 + m / 1.5**2) + near) / 3.0


def interface_anchor_pairs(
    anchors: np.ndarray,
    coords: np.ndarray,
    system: MolecularSystem,
    chain_a: str,
    chain_b: str,
    cutoff: float = 15.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Anchor-pair indices (into the anchor list) spanning two chains.

    Pairs must be closer than ``cutoff`` in the supplied coordinates.  For a
    chain against itself, each unordered pair appears once.
    """
    anchors = np.asarray(anchors, dtype=np.int64)
    coords = as_coords(coords, system.n_atoms)
    ca = system.chain_index_by_id(chain_a)
    cb = system.chain_index_by_id(chain_b)
    chain_of = np.array([a.chain_index for a in system.atoms], dtype=np.int64)
    in_a = np.nonzero(chain_of[anchors] == ca)[0]
    in_b = np.nonzero(chain_of[anchors] == cb)[0]
    if in_a.size == 0 or in_b.size == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    d = np.linalg.norm(
        coords[anchors[in_a]][:, None, :] - coords[anchors[in_b]][None, :, :],
        axis=-1,
    )
    ii, jj = np.nonzero(d < cutoff)
    if ca == cb:
        keep = in_a[ii] < in_b[jj]
        ii, jj = ii[keep], jj[keep]
    return in_a[ii], in_b[jj]


def interface_pdockq(
    pde_values: np.ndarray,
    anchors: np.ndarray,
    coords: np.ndarray,
    system: MolecularSystem,
    chain_a: str,
    chain_b: str,
    cutoff: float = 15.0,
) -> float:
    ii, jj = interface_anchor_pairs(anchors, coords, system, chain_a, chain_b, cutoff)
    return pdockq(np.asarray(pde_values)[ii, jj])


# --------------------------------------------------------------------------
# hard physical checks


def clash_count(
    coords,
    system: MolecularSystem,
    cutoff: float = 1.7,
) -> int:
    """Number of non-bonded heavy-atom pairs from different residues closer
    than ``cutoff`` (strict)."""
    coords = as_coords(coords, system.n_atoms)
    heavy = np.array([a.is_heavy for a in system.atoms], dtype=bool)
    idx = np.nonzero(heavy)[0]
    if idx.size < 2:
        return 0
    bonded = {
        (min(b.i, b.j), max(b.i, b.j)) for b in system.bonds if b.order > 0
    }
    res_key = [system.residue_key(i) for i in range(system.n_atoms)]
    d = np.linalg.norm(coords[idx][:, None, :] - coords[idx][None, :, :], axis=-1)
    count = 0
    for a in range(idx.size):
        for b in range(a + 1, idx.size):
            i, j = int(idx[a]), int(idx[b])
            if res_key[i] == res_key[j]:
                continue
            if (i, j) in bonded:
                continue
            if d[a, b] < cutoff:
                count += 1
    return count


def chirality_violations(coords, system: MolecularSystem) -> int:
    """Number of stereocenters whose handedness disagrees with the topology.

    The handedness of a center is the sign of the determinant of the first
    three priority-neighbor directions taken relative to the fourth; a
    degenerate (planar) arrangement never matches either parity.
    """
    coords = as_coords(coords, system.n_atoms)
    bad = 0
    for sc in system.stereocenters:
        n1, n2, n3, n4 = sc.neighbors
        m = np.stack(
            [coords[n1] - coords[n4], coords[n2] - coords[n4], coords[n3] - coords[n4]]
        )
        sign = int(np.sign(np.linalg.det(m)))
        if sign != sc.parity:
            bad += 1
    return bad


# --------------------------------------------------------------------------
# ranking


def ligand_ranking_score(
    plddt_values: np.ndarray,
    system: MolecularSystem,
    ligand_chain_id: str,
    n_clashes: int,
    n_chirality: int,
) -> float:
    """Mean ligand pLDDT with a 1000-point penalty per failed hard check."""
    atoms = system.atoms_of_chain(system.chain_index_by_id(ligand_chain_id))
    if atoms.size == 0:
        raise InputError(f"chain {ligand_chain_id!r} has no atoms")
    mean_plddt = float(np.mean(np.asarray(plddt_values)[atoms]))
    return mean_plddt - 1000.0 * (int(n_clashes > 0) + int(n_chirality > 0))


def chain_ranking_score(
    pde_values: np.ndarray,
    anchors: np.ndarray,
    coords: np.ndarray,
    system: MolecularSystem,
    chain_id: str,
    cutoff: float = 15.0,
) -> float:
    return interface_pdockq(
        pde_values, anchors, coords, system, chain_id, chain_id, cutoff
    )


def interface_ranking_score(
    pde_values: np.ndarray,
    anchors: np.ndarray,
    coords: np.ndarray,
    system: MolecularSystem,
    chain_a: str,
    chain_b: str,
    cutoff: float = 15.0,
) -> float:
    if chain_a == chain_b:
        raise InputError("interface score needs two distinct chains")
    return interface_pdockq(
        pde_values, anchors, coords, system, chain_a, chain_b, cutoff
    )


def rank_samples(scores: Sequence[float]) -> list[int]:
    """Indices sorted by score, best first; ties keep submission order."""
    return sorted(range(len(scores)), key=lambda i: -float(scores[i]))


# --------------------------------------------------------------------------
# joint training


def train_confidence_step(
    model,
    head: ConfidenceHead,
    optimizer,
    system: MolecularSystem,
    reference,
    anchors: Optional[AnchorSet] = None,
    flow_config: FlowConfig = FlowConfig(),
    rng: Optional[np.random.Generator] = None,
    caches: Optional[_SystemCaches] = None,
    prior_params: Optional[PriorParams] = None,
    rollout: bool = False,
    rollout_steps: int = 10,
) -> dict:
    """One joint update: flow-matching loss plus confidence cross entropy.

    Confidence targets come from the current prediction — either the
    single-step denoised output or, when ``rollout`` is set, a short
    detached sampling trajectory — against the aligned reference.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    if caches is None:
        caches = _SystemCaches()
    reference = as_coords(reference, system.n_atoms)
    if anchors is None:
        anchors = select_anchors(system, budget=head.config.anchor_budget)
    operators, auto_cache, weights = caches.for_system(system, flow_config)
    fape_constants = caches.fape_constants(system, reference, flow_config)
    cond = model.encode(system)
    flow_total, breakdown, aux = _replica_loss(
        model, cond, system, reference, flow_config, rng,
        operators, auto_cache, weights, prior_params,
        fape_constants=fape_constants,
    )
    if rollout:
        with torch.no_grad():
            sampled = sample_structure(
                model,
                system,
                config=FlowConfig(
                    n_steps=rollout_steps,
                    shift_exponent=flow_config.shift_exponent,
                    ligand_of_interest=flow_config.ligand_of_interest,
                ),
                seed=int(rng.integers(2**63)),
                prior_params=prior_params,
                operators=operators,
            )
        ref_aligned, perm = prepare_flow_targets(
            sampled.coords, reference, system,
            weights=weights, automorphism_cache=auto_cache,
        )
        pred_np = perm.apply(sampled.coords)
    else:
        perm = aux["perm"]
        ref_aligned = aux["ref_aligned"]
        pred_np = perm.apply(aux["pred"].detach().double().numpy())
    plddt_bins, plddt_mask, pde_bins = confidence_targets(
        pred_np, ref_aligned, system, anchors.indices, head.config
    )
    output = head(
        torch.from_numpy(pred_np).to(cond.atom_h.dtype),
        cond.atom_h,
        anchors.indices,
    )
    conf_total, conf_breakdown = confidence_loss(
        output, plddt_bins, plddt_mask, pde_bins
    )
    loss = flow_total + conf_total
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    report = dict(breakdown)
    report.update(conf_breakdown)
    report["loss"] = float(loss.detach())
    report["rollout"] = bool(rollout)
    return report


def train_confidence(
    model,
    head: ConfidenceHead,
    dataset: Sequence[tuple[MolecularSystem, np.ndarray]],
    flow_config: FlowConfig = FlowConfig(),
    train_config: TrainConfig = TrainConfig(),
    rollout_every: Optional[int] = None,
    rollout_steps: int = 10,
    prior_params: Optional[PriorParams] = None,
) -> list[dict]:
    """Round-robin joint training; ``rollout_every=None`` disables rollouts."""
    if not dataset:
        raise InputError("dataset must not be empty")
    if rollout_every is not None and rollout_every < 1:
        raise InputError("rollout_every must be a positive integer or None")
    torch.manual_seed(train_config.seed)
    rng = np.random.default_rng(train_config.seed)
    params = list(model.parameters()) + list(head.parameters())
    optimizer = torch.optim.Adam(params, lr=train_config.lr)
    caches = _SystemCaches()
    prepared = []
    for system, ref in dataset:
        prepared.append(
            (
                system,
                as_coords(ref, system.n_atoms),
                select_anchors(system, budget=head.config.anchor_budget),
            )
        )
    history = []
    for step in range(train_config.n_steps):
        system, reference, anchors = prepared[step % len(prepared)]
        do_rollout = (
            rollout_every is not None and (step + 1) % rollout_every == 0
        )
        report = train_confidence_step(
            model, head, optimizer, system, reference,
            anchors=anchors, flow_config=flow_config, rng=rng,
            caches=caches, prior_params=prior_params,
            rollout=do_rollout, rollout_steps=rollout_steps,
        )
        report["step"] = step
        history.append(report)
    return history
