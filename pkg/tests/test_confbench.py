import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import helpers
from structflow.confbench import (
    LEVELS,
    MappingCandidate,
    confbench_score,
    evaluate_conformations,
    rank_chain_mappings,
    smith_waterman,
    win_rate,
)
from structflow.errors import InputError


class TestSmithWaterman:
    def test_identical_sequences(self):
        pairs, score = smith_waterman("AAA", "AAA")
        assert pairs == [(0, 0), (1, 1), (2, 2)]
        assert score == 6

    def test_local_core_found_in_noise(self):
        pairs, score = smith_waterman("XXABCXX", "YABCY")
        assert pairs == [(2, 1), (3, 2), (4, 3)]
        assert score == 6

    def test_mismatch_bridged_when_profitable(self):
        pairs, score = smith_waterman("ABDC", "ABEC")
        assert pairs == [(0, 0), (1, 1), (2, 2), (3, 3)]
        assert score == 5  # 2 + 2 - 1 + 2

    def test_gap_skips_an_insertion(self):
        pairs, score = smith_waterman("ABXCD", "ABCD")
        assert pairs == [(0, 0), (1, 1), (3, 2), (4, 3)]
        assert score == 6  # 2 + 2 - 2 + 2 + 2

    def test_disjoint_alphabets_align_nothing(self):
        assert smith_waterman("AAA", "BBB") == ([], 0)

    def test_empty_inputs(self):
        assert smith_waterman("", "ABC") == ([], 0)
        assert smith_waterman("", "") == ([], 0)


class TestRankChainMappings:
    def test_ordering_cascade(self):
        ranked = rank_chain_mappings(
            [
                MappingCandidate("D", 0.5, 0.9, 0.9),
                MappingCandidate("C", 0.9, 0.2, 0.9),
                MappingCandidate("B", 0.9, 0.8, 0.1),
                MappingCandidate("A", 0.9, 0.8, 0.7),
            ]
        )
        assert [c.chain_id for c in ranked] == ["A", "B", "C", "D"]

    def test_full_tie_breaks_on_chain_id(self):
        ranked = rank_chain_mappings(
            [
                MappingCandidate("Z", 1.0, 1.0, 1.0),
                MappingCandidate("M", 1.0, 1.0, 1.0),
            ]
        )
        assert [c.chain_id for c in ranked] == ["M", "Z"]


class TestScoreFormula:
    def test_query_equals_reference_scores_plus_one(self):
        assert confbench_score(3.7, 0.0, 3.7) == pytest.approx(1.0, abs=1e-12)

    def test_query_equals_alternative_scores_minus_one(self):
        assert confbench_score(0.0, 2.2, 2.2) == pytest.approx(-1.0, abs=1e-12)

    def test_degenerate_triple_scores_zero(self):
        assert confbench_score(0.0, 0.0, 0.0) == 0.0

    def test_negative_input_rejected(self):
        with pytest.raises(InputError):
            confbench_score(-0.1, 1.0, 1.0)

    @settings(max_examples=200, deadline=None)
    @given(
        u=st.floats(0.0, 50.0),
        v=st.floats(0.0, 50.0),
        frac=st.floats(0.0, 1.0),
    )
    def test_bounded_on_metric_triples(self, u, v, frac):
        # w anywhere between |u - v| and u + v, i.e. any triple realizable
        # by an actual metric (superposed RMSD obeys the triangle inequality)
        w = abs(u - v) + frac * ((u + v) - abs(u - v))
        score = confbench_score(u, v, w)
        assert -1.0 - 1e-12 <= score <= 1.0 + 1e-12


def _noise(shape, scale, seed):
    return np.random.default_rng(seed).standard_normal(shape) * scale


class TestEvaluateConformations:
    def test_query_matching_reference_scores_plus_one(self, protein_with_ligand):
        system, ref = protein_with_ligand
        alt = ref + _noise(ref.shape, 1.0, 1)
        result = evaluate_conformations(
            (system, ref), (system, alt), (system, ref), "L"
        )
        assert set(result.scores) == set(LEVELS)
        for level in LEVELS:
            assert result.scores[level] == pytest.approx(1.0, abs=1e-9)
            assert result.rmsd_qr[level] == pytest.approx(0.0, abs=1e-9)
        assert result.pocket_coverage == 1.0

    def test_query_matching_alternative_scores_minus_one(
        self, protein_with_ligand
    ):
        system, ref = protein_with_ligand
        alt = ref + _noise(ref.shape, 1.0, 2)
        result = evaluate_conformations(
            (system, alt), (system, alt), (system, ref), "L"
        )
        for level in LEVELS:
            assert result.scores[level] == pytest.approx(-1.0, abs=1e-9)

    def test_mirror_construction_scores_zero(self, protein_with_ligand):
        system, ref = protein_with_ligand
        mirrored = ref * np.array([1.0, 1.0, -1.0])  # improper partner
        planar = ref * np.array([1.0, 1.0, 0.0])  # its own mirror image
        result = evaluate_conformations(
            (system, planar), (system, mirrored), (system, ref), "L"
        )
        for level in LEVELS:
            # the planar query is equidistant from the mirror pair
            assert result.scores[level] == pytest.approx(0.0, abs=1e-9)

    def test_pair_distinct_flag(self, protein_with_ligand):
        system, ref = protein_with_ligand
        same = evaluate_conformations(
            (system, ref), (system, ref.copy()), (system, ref), "L"
        )
        assert same.pair_distinct is False
        far = evaluate_conformations(
            (system, ref),
            (system, ref + _noise(ref.shape, 3.0, 3)),
            (system, ref),
            "L",
        )
        assert far.pair_distinct is True

    def test_level_atom_counts(self, protein_with_ligand):
        system, ref = protein_with_ligand
        result = evaluate_conformations(
            (system, ref), (system, ref), (system, ref), "L"
        )
        assert result.n_atoms["pocket_heavy"] >= result.n_atoms["pocket_ca"] >= 3
        assert result.n_atoms["global_ca"] >= result.n_atoms["pocket_ca"]

    def test_explicit_mapping_matches_auto(self, protein_with_ligand):
        system, ref = protein_with_ligand
        renamed = helpers.compose(
            helpers.peptide_part("B", 0, helpers.peptide_sequence(8)),
            helpers.asym_ligand_part("M", entity_id=1),
        )
        alt = ref + _noise(ref.shape, 0.8, 4)
        explicit = evaluate_conformations(
            (renamed, ref),
            (system, alt),
            (system, ref),
            "L",
            chain_mapping_query={"A": "B"},
        )
        auto = evaluate_conformations(
            (renamed, ref), (system, alt), (system, ref), "L"
        )
        for level in LEVELS:
            assert explicit.scores[level] == pytest.approx(
                auto.scores[level], abs=1e-12
            )

    def test_unalignable_explicit_mapping_rejected(self, protein_with_ligand):
        system, ref = protein_with_ligand
        foreign = helpers.compose(
            helpers.peptide_part("B", 0, ["TRP", "TYR", "TRP", "TYR"]),
        )
        foreign_coords = helpers.reference_coords(foreign)
        with pytest.raises(InputError, match="alignable"):
            evaluate_conformations(
                (foreign, foreign_coords),
                (system, ref),
                (system, ref),
                "L",
                chain_mapping_query={"A": "B"},
            )

    def test_unmappable_pocket_fails_coverage(self, protein_with_ligand):
        system, ref = protein_with_ligand
        foreign = helpers.compose(
            helpers.peptide_part("B", 0, ["TRP", "TYR", "TRP", "TYR"]),
        )
        foreign_coords = helpers.reference_coords(foreign)
        with pytest.raises(InputError, match="pocket mapping failed"):
            evaluate_conformations(
                (foreign, foreign_coords), (system, ref), (system, ref), "L"
            )

    def test_result_serializes(self, protein_with_ligand):
        system, ref = protein_with_ligand
        result = evaluate_conformations(
            (system, ref), (system, ref), (system, ref), "L"
        )
        payload = json.dumps(result.to_dict())
        assert "pocket_coverage" in payload


class TestWinRate:
    def test_strictly_above_threshold(self):
        assert win_rate([1.0, -1.0, 0.5, 0.0]) == 0.5
        assert win_rate([1.0, -1.0, 0.5, 0.0], threshold=0.5) == 0.25

    def test_empty_rejected(self):
        with pytest.raises(InputError):
            win_rate([])
