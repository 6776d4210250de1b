import numpy as np
import pytest

import helpers


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def small_peptide():
    """Six-residue single-chain peptide with helix reference coordinates."""
    system = helpers.peptide_system(6)
    return system, helpers.reference_coords(system)


@pytest.fixture
def protein_with_ligand():
    """Eight-residue protein plus an asymmetric four-atom ligand."""
    system = helpers.compose(
        helpers.peptide_part("A", 0, helpers.peptide_sequence(8)),
        helpers.asym_ligand_part("L", 1),
    )
    return system, helpers.reference_coords(system)


@pytest.fixture
def homodimer_with_ligand_copies():
    """Two copies of a protein entity and two copies of a benzene ligand."""
    system = helpers.compose(
        helpers.peptide_part("A", 0, helpers.peptide_sequence(6)),
        helpers.peptide_part("B", 0, helpers.peptide_sequence(6)),
        helpers.benzene_part("X", 1),
        helpers.benzene_part("Y", 1),
    )
    return system, helpers.reference_coords(system)
