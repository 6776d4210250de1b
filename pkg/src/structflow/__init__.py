"""Flow-matching structure prediction: sampling, training and evaluation."""

__version__ = "0.1.0"

from .errors import InputError, NumericalError, StructflowError
from .topology import (
    AnchorSet,
    Atom,
    Bond,
    Chain,
    Conformation,
    MolecularSystem,
    StereoCenter,
    select_anchors,
)
from .geometry import (
    RigidTransform,
    aligned_rmsd,
    default_alignment_weights,
    detect_pocket,
    fape,
    kabsch_weighted,
    lddt,
    per_atom_lddt,
    pocket_aligned_ligand_rmsd,
    rmsd,
    smooth_lddt,
)
from .symmetry import (
    AtomPermutation,
    automorphisms,
    ligand_copy_min_rmsd,
    optimal_graph_permutation,
)
from .prior import PriorParams, build_neighbor_operators, sample_prior
from .flow import (
    BudgetReport,
    FlowConfig,
    OracleDenoiser,
    TrainConfig,
    cfm_sample_step,
    compute_budget,
    flow_matching_loss,
    loss_weight,
    sample_structure,
    shift_timestep,
    train_step,
    train_toy,
)
from .denoiser import Denoiser, DenoiserConfig
from .confidence import (
    ConfidenceConfig,
    ConfidenceHead,
    chirality_violations,
    clash_count,
    pdockq,
    rank_samples,
)
from .confbench import (
    ConfbenchResult,
    confbench_score,
    evaluate_conformations,
    rank_chain_mappings,
    smith_waterman,
    win_rate,
)
from .io import (
    load_checkpoint,
    read_pdb,
    read_topology,
    save_checkpoint,
    write_pdb,
    write_topology,
)

__all__ = [
    "__version__",
    "AnchorSet",
    "Atom",
    "AtomPermutation",
    "Bond",
    "BudgetReport",
    "Chain",
    "ConfbenchResult",
    "ConfidenceConfig",
    "ConfidenceHead",
    "Conformation",
    "Denoiser",
    "DenoiserConfig",
    "FlowConfig",
    "InputError",
    "MolecularSystem",
    "NumericalError",
    "OracleDenoiser",
    "PriorParams",
    "RigidTransform",
    "StereoCenter",
    "StructflowError",
    "TrainConfig",
    "aligned_rmsd",
    "automorphisms",
    "build_neighbor_operators",
    "cfm_sample_step",
    "chirality_violations",
    "clash_count",
    "compute_budget",
    "confbench_score",
    "default_alignment_weights",
    "detect_pocket",
    "evaluate_conformations",
    "fape",
    "flow_matching_loss",
    "kabsch_weighted",
    "lddt",
    "ligand_copy_min_rmsd",
    "load_checkpoint",
    "loss_weight",
    "optimal_graph_permutation",
    "pdockq",
    "per_atom_lddt",
    "pocket_aligned_ligand_rmsd",
    "rank_chain_mappings",
    "rank_samples",
    "read_pdb",
    "read_topology",
    "rmsd",
    "sample_prior",
    "sample_structure",
    "save_checkpoint",
    "select_anchors",
    "shift_timestep",
    "smith_waterman",
    "smooth_lddt",
    "train_step",
    "train_toy",
    "win_rate",
    "write_pdb",
    "write_topology",
]
