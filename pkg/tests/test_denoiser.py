import numpy as np
import pytest
import torch

import helpers
from structflow.denoiser import (
    PAIR_VOCAB_SIZE,
    Denoiser,
    DenoiserConfig,
    _pair_codes,
    sinusoidal_embedding,
)


@pytest.fixture(scope="module")
def model():
    torch.manual_seed(0)
    return Denoiser()


class TestSinusoidalEmbedding:
    def test_shape_and_range(self):
        emb = sinusoidal_embedding(torch.tensor([0.0, 1.0, 2.0]), 16)
        assert emb.shape == (3, 16)
        assert torch.all(emb.abs() <= 1.0)

    def test_odd_dim_padded(self):
        emb = sinusoidal_embedding(torch.tensor(1.0), 7)
        assert emb.shape == (7,)
        assert emb[-1] == 0.0

    def test_distinguishes_values(self):
        a = sinusoidal_embedding(torch.tensor(0.1), 32)
        b = sinusoidal_embedding(torch.tensor(0.9), 32)
        assert not torch.allclose(a, b)


class TestPairCodes:
    def test_vocabulary(self, protein_with_ligand):
        system, _ = protein_with_ligand
        codes = _pair_codes(system)
        assert codes.shape == (system.n_atoms, system.n_atoms)
        assert codes.min() >= 0 and codes.max() < PAIR_VOCAB_SIZE
        np.testing.assert_array_equal(codes, codes.T)

    def test_relationship_precedence(self):
        system = helpers.peptide_system(2)
        codes = _pair_codes(system)
        assert codes[0, 0] == 1  # diagonal: same residue
        assert codes[0, 1] == 3  # N-CA single bond
        assert codes[2, 3] == 4  # C=O double bond
        assert codes[0, 3] == 1  # same residue, not bonded
        assert codes[0, 7] == 2  # same chain, different residue

    def test_cross_chain_unrelated(self, protein_with_ligand):
        system, _ = protein_with_ligand
        ligand_first = system.atoms_of_chain(1)[0]
        codes = _pair_codes(system)
        assert codes[0, ligand_first] == 0


class TestDenoiser:
    def test_parameter_budget(self, model):
        assert model.n_parameters() < 1_000_000

    def test_untrained_model_is_identity(self, model, small_peptide, rng):
        system, ref = small_peptide
        cond = model.encode(system)
        x = rng.standard_normal(ref.shape) * 5
        out = model.denoise(x, 0.3, cond)
        np.testing.assert_allclose(out, x, atol=1e-6)

    def test_encode_is_coordinate_free(self, model, small_peptide):
        system, _ = small_peptide
        cond = model.encode(system)
        assert cond.atom_h.shape == (system.n_atoms, model.config.d_model)
        assert cond.pair_bias.shape == (
            model.config.n_heads,
            system.n_atoms,
            system.n_atoms,
        )

    def test_forward_backward_flows_gradients(self, model, small_peptide):
        system, ref = small_peptide
        cond = model.encode(system)
        x = torch.randn(system.n_atoms, 3, requires_grad=True)
        out = model(x, torch.tensor(0.4), cond)
        out.square().sum().backward()
        assert x.grad is not None and torch.isfinite(x.grad).all()
        grads = [p.grad for p in model.parameters() if p.grad is not None]
        assert grads, "loss must reach the weights"
        model.zero_grad()

    def test_denoise_matches_forward_eval(self, small_peptide, rng):
        torch.manual_seed(3)
        model = Denoiser(DenoiserConfig(d_model=32, n_heads=2, n_blocks=1))
        # perturb weights so the model is not the identity
        with torch.no_grad():
            for p in model.parameters():
                p.add_(torch.randn_like(p) * 0.05)
        system, ref = small_peptide
        cond = model.encode(system)
        x = rng.standard_normal(ref.shape)
        wrapped = model.denoise(x, 0.7, cond)
        with torch.no_grad():
            direct = model(
                torch.from_numpy(x).float(), torch.tensor(0.7), cond
            ).double().numpy()
        np.testing.assert_allclose(wrapped, direct, atol=1e-7)
        assert not np.allclose(wrapped, x)  # actually transformed

    def test_denoise_preserves_training_flag(self, model, small_peptide, rng):
        system, ref = small_peptide
        cond = model.encode(system)
        model.train()
        model.denoise(rng.standard_normal(ref.shape), 0.2, cond)
        assert model.training
        model.eval()
