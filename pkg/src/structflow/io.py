"""File formats: JSON topologies, PDB coordinates, checkpoints, reports.

Topologies travel as JSON documents validated against a bundled schema
(``schemas/topology.schema.json``).  Atom order in the document — chains,
then residues, then atoms, in listing order — defines the global atom
indexing used by bonds, stereocenters and every coordinate array.

Coordinates travel as PDB files with strict fixed columns.  Chain ids are
restricted to a single character for this reason, and ``resSeq`` is the
zero-based residue index plus one.  Reading a PDB against a topology
matches atoms by (chain id, residue number, atom name); a topology atom
with no coordinate line is an error.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence, Union

import jsonschema
import numpy as np
import torch

from .denoiser import Denoiser, DenoiserConfig
from .errors import InputError
from .topology import (
    Atom,
    Bond,
    Chain,
    Conformation,
    MolecularSystem,
    StereoCenter,
    as_coords,
)

CHECKPOINT_VERSION = 1

_HYDROGEN_ELEMENTS = ("H", "D")


def _topology_schema() -> dict:
    text = (
        resources.files("structflow") / "schemas" / "topology.schema.json"
    ).read_text()
    return json.loads(text)


def system_to_dict(system: MolecularSystem, name: Optional[str] = None) -> dict:
    chains = []
    for ci, chain in enumerate(system.chains):
        residues: list[dict] = []
        for i in system.atoms_of_chain(ci):
            atom = system.atoms[int(i)]
            if not residues or residues[-1]["_index"] != atom.residue_index:
                residues.append(
                    {"_index": atom.residue_index, "name": atom.residue_name, "atoms": []}
                )
            residues[-1]["atoms"].append({"name": atom.name, "element": atom.element})
        for r in residues:
            del r["_index"]
        chains.append(
            {
                "id": chain.id,
                "entity_id": chain.entity_id,
                "molecule_class": chain.molecule_class,
                "residues": residues,
            }
        )
    doc = {"format_version": 1, "chains": chains}
    if name:
        doc["name"] = name
    if system.bonds:
        doc["bonds"] = [{"i": b.i, "j": b.j, "order": b.order} for b in system.bonds]
    if system.stereocenters:
        doc["stereocenters"] = [
            {"center": s.center, "neighbors": list(s.neighbors), "parity": s.parity}
            for s in system.stereocenters
        ]
    return doc


def system_from_dict(doc: dict) -> MolecularSystem:
    try:
        jsonschema.validate(doc, _topology_schema())
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path)
        raise InputError(f"topology document invalid at '{path}': {exc.message}")
    atoms: list[Atom] = []
    chains: list[Chain] = []
    for ci, chain_doc in enumerate(doc["chains"]):
        chains.append(
            Chain(
                id=chain_doc["id"],
                entity_id=chain_doc["entity_id"],
                molecule_class=chain_doc["molecule_class"],
            )
        )
        for ri, res in enumerate(chain_doc["residues"]):
            for atom in res["atoms"]:
                element = atom["element"].upper()
                atoms.append(
                    Atom(
                        element=element,
                        name=atom["name"],
                        residue_index=ri,
                        residue_name=res["name"],
                        chain_index=ci,
                        is_heavy=element not in _HYDROGEN_ELEMENTS,
                    )
                )
    bonds = tuple(
        Bond(i=b["i"], j=b["j"], order=b.get("order", 1))
        for b in doc.get("bonds", [])
    )
    stereocenters = tuple(
        StereoCenter(
            center=s["center"], neighbors=tuple(s["neighbors"]), parity=s["parity"]
        )
        for s in doc.get("stereocenters", [])
    )
    return MolecularSystem(
        atoms=tuple(atoms),
        bonds=bonds,
        chains=tuple(chains),
        stereocenters=stereocenters,
    )


def read_topology(path: Union[str, Path]) -> MolecularSystem:
    path = Path(path)
    if not path.exists():
        raise InputError(f"topology file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: not valid JSON ({exc})")
    return system_from_dict(doc)


def write_topology(
    path: Union[str, Path], system: MolecularSystem, name: Optional[str] = None
) -> None:
    Path(path).write_text(json.dumps(system_to_dict(system, name), indent=2) + "\n")


# --------------------------------------------------------------------------
# PDB


_POLYMER_RECORD_CLASSES = ("protein", "peptide", "dna", "rna")


def _pdb_atom_name(name: str) -> str:
    # Names shorter than four characters are indented one column, per the
    # fixed-column convention for single-letter element symbols.
    if len(name) >= 4:
        return name[:4]
    return f" {name:<3}"


def write_pdb(
    path: Union[str, Path],
    system: MolecularSystem,
    conformations: Union[Conformation, np.ndarray, Sequence],
    bfactors: Optional[np.ndarray] = None,
) -> None:
    """Write one or more models in fixed-column format.

    Polymer atoms become ATOM records, ligand/modified atoms HETATM.  The
    optional ``bfactors`` array (one value per atom, e.g. scaled
    confidence) fills the temperature-factor column.
    """
    if isinstance(conformations, (list, tuple)):
        models = [as_coords(c, system.n_atoms) for c in conformations]
    else:
        models = [as_coords(conformations, system.n_atoms)]
    if bfactors is None:
        bfac = np.zeros(system.n_atoms)
    else:
        bfac = np.asarray(bfactors, dtype=np.float64)
        if bfac.shape != (system.n_atoms,):
            raise InputError("bfactors must have one value per atom")
    lines = []
    multi = len(models) > 1
    for mi, coords in enumerate(models):
        if multi:
            lines.append(f"MODEL     {mi + 1:>4}")
        serial = 1
        for ci, chain in enumerate(system.chains):
            record_is_atom = chain.molecule_class in _POLYMER_RECORD_CLASSES
            for i in system.atoms_of_chain(ci):
                i = int(i)
                a = system.atoms[i]
                x, y, z = coords[i]
                record = "ATOM  " if record_is_atom else "HETATM"
                lines.append(
                    f"{record}{serial:>5} {_pdb_atom_name(a.name)} "
                    f"{a.residue_name:>3} {chain.id}{a.residue_index + 1:>4}    "
                    f"{x:8.3f}{y:8.3f}{z:8.3f}{1.0:6.2f}{bfac[i]:6.2f}"
                    f"          {a.element:>2}"
                )
                serial += 1
            if record_is_atom:
                lines.append(f"TER   {serial:>5}")
                serial += 1
        if multi:
            lines.append("ENDMDL")
    lines.append("END")
    Path(path).write_text("\n".join(lines) + "\n")


def read_pdb(
    path: Union[str, Path],
    system: MolecularSystem,
    provenance: str = "reference",
) -> Conformation:
    """Read model 1 of a PDB file against a known topology.

    Atoms are matched by (chain id, residue number, atom name).  Every atom
    of the topology must receive exactly one coordinate; unknown lines are
    ignored.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"coordinate file not found: {path}")
    table: dict[tuple[str, int, str], tuple[float, float, float]] = {}
    for line in path.read_text().splitlines():
        record = line[:6]
        if record == "ENDMDL":
            break
        if record not in ("ATOM  ", "HETATM"):
            continue
        if len(line) < 54:
            raise InputError(f"{path}: truncated coordinate line: {line!r}")
        name = line[12:16].strip()
        chain_id = line[21].strip()
        try:
            res_seq = int(line[22:26])
            xyz = (float(line[30:38]), float(line[38:46]), float(line[46:54]))
        except ValueError as exc:
            raise InputError(f"{path}: bad coordinate line ({exc}): {line!r}")
        key = (chain_id, res_seq, name)
        if key in table:
            raise InputError(f"{path}: duplicate atom {key}")
        table[key] = xyz
    coords = np.zeros((system.n_atoms, 3))
    for i, atom in enumerate(system.atoms):
        key = (system.chains[atom.chain_index].id, atom.residue_index + 1, atom.name)
        if key not in table:
            raise InputError(
                f"{path}: no coordinates for atom {atom.name!r} in chain "
                f"{key[0]!r} residue {key[1]}"
            )
        coords[i] = table[key]
    return Conformation(coords, provenance=provenance)


# --------------------------------------------------------------------------
# checkpoints


def save_checkpoint(
    path: Union[str, Path],
    model: Denoiser,
    head=None,
    extra: Optional[dict] = None,
) -> None:
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "denoiser_config": asdict(model.config),
        "model_state": model.state_dict(),
    }
    if head is not None:
        payload["head_state"] = head.state_dict()
        payload["head_config"] = asdict(head.config)
    if extra:
        payload["extra"] = dict(extra)
    torch.save(payload, str(path))


def load_checkpoint(path: Union[str, Path]) -> dict:
    """Load a checkpoint into freshly constructed modules.

    Returns ``{"model": Denoiser, "head": ConfidenceHead | None, "extra":
    dict}``.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"checkpoint not found: {path}")
    try:
        payload = torch.load(str(path), map_location="cpu", weights_only=False)
    except Exception as exc:  # torch raises several unpickling error types
        raise InputError(f"{path}: not a readable checkpoint ({exc})")
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise InputError(f"{path}: missing checkpoint header")
    if payload["format_version"] != CHECKPOINT_VERSION:
        raise InputError(
            f"{path}: unsupported checkpoint version {payload['format_version']}"
        )
    model = Denoiser(DenoiserConfig(**payload["denoiser_config"]))
    model.load_state_dict(payload["model_state"])
    model.eval()
    head = None
    if "head_state" in payload:
        from .confidence import ConfidenceConfig, ConfidenceHead

        head = ConfidenceHead(
            d_model=payload["denoiser_config"]["d_model"],
            config=ConfidenceConfig(**payload.get("head_config", {})),
        )
        head.load_state_dict(payload["head_state"])
        head.eval()
    return {"model": model, "head": head, "extra": payload.get("extra", {})}


# --------------------------------------------------------------------------
# reports


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)!r}")


def write_json_report(path: Union[str, Path], data: dict) -> None:
    Path(path).write_text(
        json.dumps(data, indent=2, default=_json_default, sort_keys=True) + "\n"
    )


def read_json(path: Union[str, Path]) -> dict:
    path = Path(path)
    if not path.exists():
        raise InputError(f"file not found: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: not valid JSON ({exc})")
