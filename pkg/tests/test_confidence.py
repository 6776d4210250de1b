import numpy as np
import pytest
import torch

import helpers
from structflow.confidence import (
    ConfidenceConfig,
    ConfidenceHead,
    chain_ranking_score,
    chirality_violations,
    clash_count,
    confidence_loss,
    confidence_targets,
    interface_anchor_pairs,
    interface_pdockq,
    interface_ranking_score,
    ligand_ranking_score,
    pde_bin_centers,
    pdockq,
    plddt_bin_centers,
    rank_samples,
    train_confidence,
    train_confidence_step,
)
from structflow.denoiser import Denoiser, DenoiserConfig
from structflow.errors import InputError
from structflow.flow import FlowConfig, TrainConfig
from structflow.topology import (
    Atom,
    Bond,
    Chain,
    MolecularSystem,
    StereoCenter,
    select_anchors,
)


def _small_head(d_model=32, **kwargs):
    torch.manual_seed(1)
    return ConfidenceHead(d_model=d_model, config=ConfidenceConfig(**kwargs))


class TestBins:
    def test_plddt_centers(self):
        centers = plddt_bin_centers(50)
        assert centers[0] == pytest.approx(0.01)
        assert centers[-1] == pytest.approx(0.99)
        assert len(centers) == 50

    def test_pde_centers(self):
        centers = pde_bin_centers(64, 32.0)
        assert centers[0] == pytest.approx(0.25)
        assert centers[-1] == pytest.approx(31.75)
        assert np.all(np.diff(centers) == pytest.approx(0.5))

    def test_decode_is_expectation_over_centers(self, small_peptide):
        system, ref = small_peptide
        head = _small_head(n_plddt_bins=10, n_pde_bins=8)
        anchors = select_anchors(system, budget=6)
        out = head(
            torch.from_numpy(ref).float(),
            torch.zeros(system.n_atoms, 32),
            anchors.indices,
        )
        # overwrite logits with a sharp one-hot: decode must hit the center
        out.plddt_logits = torch.full_like(out.plddt_logits, -40.0)
        out.plddt_logits[:, 3] = 40.0
        np.testing.assert_allclose(
            out.plddt(), plddt_bin_centers(10)[3], atol=1e-9
        )
        out.pde_logits = torch.full_like(out.pde_logits, -40.0)
        out.pde_logits[..., 5] = 40.0
        np.testing.assert_allclose(
            out.pde(), pde_bin_centers(8, out.config.pde_max)[5], atol=1e-9
        )


class TestTargets:
    def test_perfect_prediction_lands_in_top_bins(self, small_peptide):
        system, ref = small_peptide
        anchors = select_anchors(system, budget=8)
        plddt_bins, mask, pde_bins = confidence_targets(
            ref, ref, system, anchors.indices
        )
        assert np.all(plddt_bins[mask] == 49)  # lddt 1.0 clipped into last bin
        assert np.all(pde_bins == 0)

    def test_known_distance_error_bin(self, small_peptide):
        system, ref = small_peptide
        anchors = np.array([1, 5])  # two trace atoms
        pred = ref.copy()
        # stretch the pair along its own axis by exactly 1.1 angstroms
        axis = ref[5] - ref[1]
        pred[5] = ref[5] + 1.1 * axis / np.linalg.norm(axis)
        _, _, pde_bins = confidence_targets(pred, ref, system, anchors)
        assert pde_bins[0, 1] == 2  # floor(1.1 / 0.5)
        assert pde_bins[0, 0] == 0

    def test_loss_of_uniform_logits_is_log_bins(self, small_peptide):
        system, ref = small_peptide
        config = ConfidenceConfig(n_plddt_bins=50, n_pde_bins=64)
        anchors = select_anchors(system, budget=8)
        plddt_bins, mask, pde_bins = confidence_targets(
            ref, ref, system, anchors.indices, config
        )
        out_shape = (system.n_atoms, 50)
        pair_shape = (len(anchors.indices), len(anchors.indices), 64)
        from structflow.confidence import ConfidenceOutput

        output = ConfidenceOutput(
            plddt_logits=torch.zeros(out_shape),
            pde_logits=torch.zeros(pair_shape),
            anchors=anchors.indices,
            config=config,
        )
        total, breakdown = confidence_loss(output, plddt_bins, mask, pde_bins)
        assert breakdown["plddt_ce"] == pytest.approx(np.log(50), abs=1e-6)
        assert breakdown["pde_ce"] == pytest.approx(np.log(64), abs=1e-6)

    def test_fully_masked_plddt_contributes_zero(self, small_peptide):
        system, ref = small_peptide
        from structflow.confidence import ConfidenceOutput

        config = ConfidenceConfig()
        anchors = np.array([0, 4])
        output = ConfidenceOutput(
            plddt_logits=torch.zeros(system.n_atoms, 50),
            pde_logits=torch.zeros(2, 2, 64),
            anchors=anchors,
            config=config,
        )
        mask = np.zeros(system.n_atoms, dtype=bool)
        total, breakdown = confidence_loss(
            output,
            np.zeros(system.n_atoms, dtype=np.int64),
            mask,
            np.zeros((2, 2), dtype=np.int64),
        )
        assert breakdown["plddt_ce"] == 0.0


class TestPdockq:
    def test_zero_error_scores_one(self):
        assert pdockq(np.zeros(10)) == 1.0

    def test_frozen_midpoint(self):
        assert pdockq(np.full(6, 8.5)) == pytest.approx(0.17673378, abs=1e-6)

    def test_empty_scores_zero(self):
        assert pdockq(np.array([])) == 0.0

    def test_monotone_in_uniform_error(self):
        values = [pdockq(np.full(4, e)) for e in (0.0, 1.0, 3.0, 6.0, 20.0)]
        assert all(b < a for a, b in zip(values, values[1:]))


class TestInterfacePairs:
    def _two_chain_system(self):
        atoms = []
        for c, chain in enumerate("AB"):
            for i in range(2):
                atoms.append(Atom("C", f"C{i + 1}", i, "LIG", c))
        chains = (Chain("A", 0, "ligand"), Chain("B", 1, "ligand"))
        return MolecularSystem(tuple(atoms), (), chains)

    def test_cross_chain_pairs_respect_cutoff(self):
        system = self._two_chain_system()
        coords = np.array(
            [[0.0, 0, 0], [3.0, 0, 0], [4.0, 0, 0], [30.0, 0, 0]]
        )
        anchors = np.arange(4)
        ii, jj = interface_anchor_pairs(anchors, coords, system, "A", "B", 15.0)
        pairs = set(zip(ii.tolist(), jj.tolist()))
        assert pairs == {(0, 2), (1, 2)}  # atom 3 is 26+ angstroms away

    def test_same_chain_pairs_deduplicated(self):
        system = self._two_chain_system()
        coords = np.array([[0.0, 0, 0], [3.0, 0, 0], [4.0, 0, 0], [5.0, 0, 0]])
        ii, jj = interface_anchor_pairs(np.arange(4), coords, system, "A", "A", 15.0)
        assert list(zip(ii.tolist(), jj.tolist())) == [(0, 1)]

    def test_no_anchors_in_chain_gives_empty(self):
        system = self._two_chain_system()
        coords = np.zeros((4, 3))
        ii, jj = interface_anchor_pairs(np.array([0, 1]), coords, system, "A", "B")
        assert ii.size == 0 and jj.size == 0
        assert interface_pdockq(
            np.zeros((2, 2)), np.array([0, 1]), coords, system, "A", "B"
        ) == 0.0


class TestHardChecks:
    def test_clash_semantics(self):
        atoms = (
            Atom("C", "C1", 0, "LIG", 0),
            Atom("C", "C2", 0, "LIG", 0),
            Atom("C", "C3", 1, "LIG", 0),
            Atom("H", "H1", 2, "LIG", 0, is_heavy=False),
        )
        system = MolecularSystem(
            atoms, (Bond(0, 2),), (Chain("L", 0, "ligand"),)
        )
        coords = np.array(
            [
                [0.0, 0.0, 0.0],
                [0.5, 0.0, 0.0],  # same residue as atom 0: ignored
                [1.0, 0.0, 0.0],  # bonded to atom 0: ignored
                [0.2, 0.0, 0.0],  # hydrogen: ignored
            ]
        )
        assert clash_count(coords, system) == 1  # only the (1, 2) pair

    def test_clash_cutoff_is_strict(self):
        atoms = (
            Atom("C", "C1", 0, "LIG", 0),
            Atom("C", "C2", 1, "LIG", 0),
        )
        system = MolecularSystem(atoms, (), (Chain("L", 0, "ligand"),))
        at_cutoff = np.array([[0.0, 0, 0], [1.7, 0, 0]])
        assert clash_count(at_cutoff, system) == 0
        inside = np.array([[0.0, 0, 0], [1.69, 0, 0]])
        assert clash_count(inside, system) == 1

    def test_chirality_flip_detected(self):
        system = helpers.compose(helpers.chiral_ligand_part("C", entity_id=0))
        good = helpers.chiral_ligand_coords(np.zeros(3))
        assert chirality_violations(good, system) == 0
        assert chirality_violations(
            helpers.chiral_ligand_coords(np.zeros(3), flip=True), system
        ) == 1

    def test_planar_center_counts_as_violation(self):
        atoms = tuple(
            Atom("C", f"C{i + 1}", 0, "LIG", 0) for i in range(5)
        )
        system = MolecularSystem(
            atoms,
            tuple(Bond(0, i) for i in range(1, 5)),
            (Chain("L", 0, "ligand"),),
            stereocenters=(StereoCenter(0, (1, 2, 3, 4), 1),),
        )
        flat = np.zeros((5, 3))
        flat[:, 0] = np.arange(5)  # collinear: determinant is exactly 0
        assert chirality_violations(flat, system) == 1


class TestRanking:
    def test_ligand_score_penalties(self, protein_with_ligand):
        system, _ = protein_with_ligand
        plddt = np.full(system.n_atoms, 0.8)
        clean = ligand_ranking_score(plddt, system, "L", 0, 0)
        assert clean == pytest.approx(0.8)
        assert ligand_ranking_score(plddt, system, "L", 3, 0) == pytest.approx(
            0.8 - 1000.0
        )
        assert ligand_ranking_score(plddt, system, "L", 1, 2) == pytest.approx(
            0.8 - 2000.0
        )

    def test_ligand_score_unknown_chain(self, protein_with_ligand):
        system, _ = protein_with_ligand
        with pytest.raises(InputError):
            ligand_ranking_score(np.zeros(system.n_atoms), system, "Z", 0, 0)

    def test_interface_score_needs_two_chains(self, protein_with_ligand):
        system, ref = protein_with_ligand
        anchors = select_anchors(system, budget=8).indices
        pde = np.ones((len(anchors), len(anchors)))
        with pytest.raises(InputError):
            interface_ranking_score(pde, anchors, ref, system, "A", "A")
        value = interface_ranking_score(pde, anchors, ref, system, "A", "L")
        assert 0.0 <= value <= 1.0

    def test_chain_score_uses_intra_chain_pairs(self, small_peptide):
        system, ref = small_peptide
        anchors = select_anchors(system, budget=6).indices
        pde = np.zeros((len(anchors), len(anchors)))
        assert chain_ranking_score(pde, anchors, ref, system, "A") == 1.0

    def test_rank_samples_stable(self):
        assert rank_samples([0.2, 0.9, 0.5]) == [1, 2, 0]
        assert rank_samples([0.5, 0.9, 0.5]) == [1, 0, 2]
        assert rank_samples([]) == []


class TestJointTraining:
    def _setup(self, small_peptide):
        system, ref = small_peptide
        torch.manual_seed(0)
        model = Denoiser(DenoiserConfig(d_model=32, n_heads=2, n_blocks=1))
        head = _small_head(d_model=32, anchor_budget=8)
        params = list(model.parameters()) + list(head.parameters())
        optimizer = torch.optim.Adam(params, lr=1e-3)
        return system, ref, model, head, optimizer

    def test_one_step_updates_both_modules(self, small_peptide):
        system, ref, model, head, optimizer = self._setup(small_peptide)
        head_before = [p.detach().clone() for p in head.parameters()]
        report = train_confidence_step(
            model, head, optimizer, system, ref,
            rng=np.random.default_rng(0),
        )
        assert np.isfinite(report["loss"])
        assert report["rollout"] is False
        assert "plddt_ce" in report and "pde_ce" in report
        assert "pseudo_huber" in report
        assert any(
            not torch.equal(a, b)
            for a, b in zip(head_before, head.parameters())
        )

    def test_rollout_branch(self, small_peptide):
        system, ref, model, head, optimizer = self._setup(small_peptide)
        report = train_confidence_step(
            model, head, optimizer, system, ref,
            rng=np.random.default_rng(0), rollout=True, rollout_steps=2,
        )
        assert report["rollout"] is True
        assert np.isfinite(report["loss"])

    def test_rollout_cadence(self, small_peptide):
        system, ref, model, head, optimizer = self._setup(small_peptide)
        history = train_confidence(
            model, head, [(system, ref)],
            train_config=TrainConfig(n_steps=4, lr=1e-4),
            rollout_every=2, rollout_steps=2,
        )
        assert [h["rollout"] for h in history] == [False, True, False, True]

    def test_rollout_disabled_by_default(self, small_peptide):
        system, ref, model, head, optimizer = self._setup(small_peptide)
        history = train_confidence(
            model, head, [(system, ref)],
            train_config=TrainConfig(n_steps=2, lr=1e-4),
        )
        assert [h["rollout"] for h in history] == [False, False]

    def test_bad_rollout_cadence_rejected(self, small_peptide):
        system, ref, model, head, optimizer = self._setup(small_peptide)
        with pytest.raises(InputError):
            train_confidence(
                model, head, [(system, ref)], rollout_every=0
            )

    def test_head_never_backpropagates_into_coords(self, small_peptide):
        system, ref, model, head, optimizer = self._setup(small_peptide)
        anchors = select_anchors(system, budget=8)
        coords = torch.from_numpy(ref).float().requires_grad_(True)
        atom_h = torch.randn(system.n_atoms, 32, requires_grad=True)
        output = head(coords, atom_h, anchors.indices)
        output.plddt_logits.sum().backward()
        assert coords.grad is None
        assert atom_h.grad is None
