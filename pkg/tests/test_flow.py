import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

import helpers
from structflow.denoiser import Denoiser, DenoiserConfig
from structflow.errors import InputError, NumericalError
from structflow.flow import (
    BudgetReport,
    FlowConfig,
    OracleDenoiser,
    TrainConfig,
    _SystemCaches,
    cfm_sample_step,
    compute_budget,
    flow_matching_loss,
    flow_matching_loss_terms,
    loss_weight,
    prepare_flow_targets,
    sample_structure,
    shift_timestep,
    train_step,
    train_toy,
)
from structflow.geometry import aligned_rmsd


class TestShiftTimestep:
    def test_endpoints_are_fixed(self):
        assert shift_timestep(0.0) == 0.0
        assert shift_timestep(1.0) == 1.0

    def test_frozen_midpoint(self):
        assert shift_timestep(0.5) == pytest.approx(0.4506252313, abs=1e-9)
        assert shift_timestep(0.25) == pytest.approx(0.2030630991, abs=1e-9)

    def test_pulls_times_earlier(self):
        for t in (0.1, 0.3, 0.7, 0.9):
            assert shift_timestep(t) < t

    def test_domain_checked(self):
        with pytest.raises(InputError):
            shift_timestep(-0.01)
        with pytest.raises(InputError):
            shift_timestep(1.01)


class TestLossWeight:
    def test_frozen_values(self):
        assert loss_weight(0.0) == pytest.approx(0.0624609619, abs=1e-9)
        assert loss_weight(0.5) == pytest.approx(0.1248439451, abs=1e-9)
        assert loss_weight(1.0) == pytest.approx(100.0, abs=1e-9)

    def test_monotone_in_t(self):
        ts = np.linspace(0, 1, 11)
        ws = [loss_weight(t) for t in ts]
        assert all(b > a for a, b in zip(ws, ws[1:]))


class TestCfmSampleStep:
    @settings(max_examples=25, deadline=None)
    @given(
        t=st.floats(0.0, 0.9),
        dt=st.floats(0.01, 0.1),
        seed=st.integers(0, 2**16),
    )
    def test_steps_along_the_interpolant(self, t, dt, seed):
        rng = np.random.default_rng(seed)
        x0 = rng.standard_normal((5, 3))
        x1 = rng.standard_normal((5, 3))
        t_next = min(t + dt, 1.0)
        x_t = (1 - t) * x0 + t * x1
        stepped = cfm_sample_step(x1, x_t, t, t_next)
        expected = (1 - t_next) * x0 + t_next * x1
        np.testing.assert_allclose(stepped, expected, atol=1e-9)

    def test_final_step_lands_on_prediction(self, rng):
        x0 = rng.standard_normal((4, 3))
        x1 = rng.standard_normal((4, 3))
        out = cfm_sample_step(x1, 0.25 * x1 + 0.75 * x0, 0.25, 1.0)
        np.testing.assert_allclose(out, x1, atol=1e-12)

    def test_terminal_time_rejected(self, rng):
        x = rng.standard_normal((4, 3))
        with pytest.raises(NumericalError, match="terminal"):
            cfm_sample_step(x, x, 1.0, 1.0)

    def test_bad_ordering_rejected(self, rng):
        x = rng.standard_normal((4, 3))
        with pytest.raises(InputError):
            cfm_sample_step(x, x, 0.5, 0.5)
        with pytest.raises(InputError):
            cfm_sample_step(x, x, -0.1, 0.5)
        with pytest.raises(InputError):
            cfm_sample_step(x, x, 0.5, 1.1)


class TestOracleSampling:
    @pytest.mark.parametrize("n_steps", [1, 5, 40])
    def test_reproduces_reference(self, small_peptide, n_steps):
        system, ref = small_peptide
        model = OracleDenoiser(ref)
        out = sample_structure(
            model, system, FlowConfig(n_steps=n_steps), seed=11
        )
        assert aligned_rmsd(out.coords, ref) < 1e-9
        assert model.calls == n_steps

    def test_trajectory_provenances(self, small_peptide):
        system, ref = small_peptide
        result, trajectory = sample_structure(
            OracleDenoiser(ref),
            system,
            FlowConfig(n_steps=5),
            seed=3,
            return_trajectory=True,
        )
        assert len(trajectory) == 6  # prior, 4 intermediates, final
        assert trajectory[0].provenance == "prior"
        assert all(c.provenance == "intermediate" for c in trajectory[1:-1])
        assert trajectory[-1].provenance == "denoised"
        np.testing.assert_array_equal(trajectory[-1].coords, result.coords)

    def test_seeds_change_the_prior_not_the_limit(self, small_peptide):
        system, ref = small_peptide
        a = sample_structure(OracleDenoiser(ref), system, seed=1)
        b = sample_structure(OracleDenoiser(ref), system, seed=2)
        assert aligned_rmsd(a.coords, b.coords) < 1e-9

    def test_needs_at_least_one_step(self, small_peptide):
        system, ref = small_peptide
        with pytest.raises(InputError):
            sample_structure(OracleDenoiser(ref), system, FlowConfig(n_steps=0))


class TestLossTerms:
    def test_perfect_prediction_scores(self, small_peptide):
        system, ref = small_peptide
        total, breakdown = flow_matching_loss(ref, ref, system, t=0.5)
        assert breakdown["pseudo_huber"] == pytest.approx(0.0, abs=1e-9)
        assert breakdown["smooth_lddt"] > 0.99
        assert breakdown["fape"] == pytest.approx(0.0, abs=1e-9)
        assert breakdown["weight"] == pytest.approx(0.1248439451, abs=1e-9)
        assert total == pytest.approx(1.0 - breakdown["smooth_lddt"], abs=1e-9)

    def test_total_combines_terms_with_weights(self, small_peptide, rng):
        system, ref = small_peptide
        pred = ref + rng.standard_normal(ref.shape) * 0.5
        config = FlowConfig(smooth_lddt_weight=0.7, fape_weight=0.3)
        total, b = flow_matching_loss(pred, ref, system, config, t=0.25)
        expected = (
            b["weight"] * b["pseudo_huber"]
            + 0.7 * (1.0 - b["smooth_lddt"])
            + 0.3 * b["fape"]
        )
        assert total == pytest.approx(expected, rel=1e-9)

    def test_reference_pose_is_absorbed(self, small_peptide, rng):
        system, ref = small_peptide
        pred = ref + rng.standard_normal(ref.shape) * 0.4
        base, _ = flow_matching_loss(pred, ref, system)
        moved, _ = flow_matching_loss(
            pred, helpers.rigidly_moved(ref, rng), system
        )
        assert moved == pytest.approx(base, abs=1e-6)

    def test_equivalent_relabelings_not_penalized(self):
        system = helpers.compose(
            helpers.peptide_part("A", 0, helpers.peptide_sequence(3)),
            helpers.benzene_part("X", entity_id=1),
        )
        ref = helpers.reference_coords(system)
        ring = system.atoms_of_chain(system.chain_index_by_id("X"))
        rolled = ref.copy()
        rolled[ring] = ref[np.roll(ring, 1)]  # same hexagon, labels shifted
        base, _ = flow_matching_loss(ref, ref, system)
        relabeled, _ = flow_matching_loss(rolled, ref, system)
        assert relabeled == pytest.approx(base, abs=1e-9)

    def test_gradient_matches_finite_differences(self, small_peptide):
        system, ref = small_peptide
        rng = np.random.default_rng(5)
        start = ref + rng.standard_normal(ref.shape) * 0.3
        ref_aligned, perm = prepare_flow_targets(start, ref, system)
        config = FlowConfig()

        def value(coords):
            pred = torch.from_numpy(coords)
            total, _ = flow_matching_loss_terms(
                pred, ref_aligned, perm, system, config, t=0.3
            )
            return float(total)

        pred = torch.from_numpy(start.copy()).requires_grad_(True)
        total, _ = flow_matching_loss_terms(
            pred, ref_aligned, perm, system, config, t=0.3
        )
        total.backward()
        grad = pred.grad.numpy()
        eps = 1e-6
        for (i, k) in [(0, 0), (3, 1), (9, 2), (17, 0), (23, 2)]:
            bumped = start.copy()
            bumped[i, k] += eps
            up = value(bumped)
            bumped[i, k] -= 2 * eps
            down = value(bumped)
            fd = (up - down) / (2 * eps)
            assert grad[i, k] == pytest.approx(fd, rel=1e-3, abs=1e-8), (i, k)


class TestTraining:
    def test_train_step_updates_weights(self, small_peptide):
        system, ref = small_peptide
        torch.manual_seed(0)
        model = Denoiser(DenoiserConfig(d_model=32, n_heads=2, n_blocks=1))
        optimizer = torch.optim.Adam(model.parameters(), lr=1e-3)
        before = [p.detach().clone() for p in model.parameters()]
        report = train_step(
            model, optimizer, system, ref, rng=np.random.default_rng(1)
        )
        assert np.isfinite(report["loss"])
        assert report["n_replicas"] == 1
        for key in ("t", "weight", "pseudo_huber", "smooth_lddt", "fape"):
            assert key in report
        changed = any(
            not torch.equal(a, b)
            for a, b in zip(before, model.parameters())
        )
        assert changed

    def test_replicas_are_averaged(self, small_peptide):
        system, ref = small_peptide
        torch.manual_seed(0)
        model = Denoiser(DenoiserConfig(d_model=32, n_heads=2, n_blocks=1))
        optimizer = torch.optim.Adam(model.parameters(), lr=0.0)
        report = train_step(
            model,
            optimizer,
            system,
            ref,
            rng=np.random.default_rng(2),
            n_replicas=3,
        )
        assert report["n_replicas"] == 3

    def test_conditioning_encoded_once_per_step(self, small_peptide):
        system, ref = small_peptide

        class CountingDenoiser(Denoiser):
            encodes = 0

            def encode(self, system):
                type(self).encodes += 1
                return super().encode(system)

        torch.manual_seed(0)
        model = CountingDenoiser(DenoiserConfig(d_model=32, n_heads=2, n_blocks=1))
        optimizer = torch.optim.Adam(model.parameters(), lr=1e-4)
        train_step(
            model, optimizer, system, ref,
            rng=np.random.default_rng(0), n_replicas=3,
        )
        assert CountingDenoiser.encodes == 1

    def test_train_toy_round_robin_history(self, small_peptide):
        system, ref = small_peptide
        torch.manual_seed(0)
        model = Denoiser(DenoiserConfig(d_model=32, n_heads=2, n_blocks=1))
        seen = []
        history = train_toy(
            model,
            [(system, ref)],
            train_config=TrainConfig(n_steps=4, lr=1e-4),
            callback=seen.append,
        )
        assert [h["step"] for h in history] == [0, 1, 2, 3]
        assert len(seen) == 4
        assert all(np.isfinite(h["loss"]) for h in history)

    def test_train_toy_rejects_empty_dataset(self):
        model = Denoiser(DenoiserConfig(d_model=32, n_heads=2, n_blocks=1))
        with pytest.raises(InputError):
            train_toy(model, [])

    def test_system_caches_are_reused(self, small_peptide):
        system, ref = small_peptide
        caches = _SystemCaches()
        ops_a, auto_a, w_a = caches.for_system(system, FlowConfig())
        ops_b, auto_b, w_b = caches.for_system(system, FlowConfig())
        assert ops_a is ops_b and auto_a is auto_b and w_a is w_b
        fc_a = caches.fape_constants(system, ref, FlowConfig())
        fc_b = caches.fape_constants(system, ref, FlowConfig())
        assert fc_a is fc_b


class TestBudget:
    def test_forms_and_ratio(self):
        report = compute_budget(alpha=10.0, beta=1.0, replicas=20, n_data=5.0)
        assert report.price_ratio == pytest.approx(10.0)
        assert report.literal_product_form == pytest.approx(1000.0)
        assert report.additive_form == pytest.approx(150.0)

    def test_single_replica_additive_floor(self):
        report = compute_budget(alpha=10.0, beta=1.0, replicas=1, n_data=1.0)
        assert report.additive_form == pytest.approx(11.0)

    def test_dict_round_trip(self):
        report = compute_budget(alpha=2.0, beta=0.5, replicas=4, n_data=3.0)
        data = report.to_dict()
        assert data["price_ratio"] == pytest.approx(4.0)
        assert BudgetReport.from_dict(data) == report

    def test_validation(self):
        with pytest.raises(InputError):
            compute_budget(1.0, 1.0, 0, 1.0)
        with pytest.raises(InputError):
            compute_budget(1.0, 1.0, 1, -1.0)
