"""Batch command-line interface.

Subcommands operate on JSON topologies and PDB coordinate files and write
machine-readable JSON reports.  Every run that produces an output
directory also writes ``run-config.json`` echoing the resolved settings.

Exit codes: 0 success, 2 usage error, 3 malformed input
(:class:`InputError`), 4 numerical failure (:class:`NumericalError`),
5 internal error.
"""

from __future__ import annotations

import argparse
import sys
import time
import traceback
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .attention import run_attention_bench
from .confbench import evaluate_conformations
from .confidence import (
    ConfidenceHead,
    chain_ranking_score,
    chirality_violations,
    clash_count,
    interface_ranking_score,
    ligand_ranking_score,
    rank_samples,
)
from .denoiser import Denoiser
from .errors import InputError, NumericalError
from .flow import FlowConfig, TrainConfig, sample_structure, train_toy
from .geometry import lddt, pocket_aligned_ligand_rmsd
from .io import (
    load_checkpoint,
    read_pdb,
    read_topology,
    save_checkpoint,
    write_json_report,
    write_pdb,
)
from .prior import PriorParams, sample_prior
from .topology import select_anchors

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_NUMERICAL = 4
EXIT_INTERNAL = 5


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="structflow",
        description="Flow-matching structure generation and evaluation.",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="generate structures for a topology")
    p.add_argument("--topology", required=True, help="topology JSON file")
    p.add_argument("--output-dir", required=True, help="directory for results")
    p.add_argument("--checkpoint", help="trained model checkpoint (.pt)")
    p.add_argument("--seed", type=int, default=0, help="base random seed")
    p.add_argument("--n-samples", type=int, default=1, help="samples to draw")
    p.add_argument("--n-steps", type=int, default=40, help="integration steps")
    p.add_argument("--ligand", help="chain id to weight and rank as the ligand")
    p.add_argument(
        "--trajectory", action="store_true", help="also write the sampling path"
    )
    p.add_argument("--threads", type=int, default=1, help="torch CPU threads")

    p = sub.add_parser("train-toy", help="overfit a small set of systems")
    p.add_argument(
        "--system",
        action="append",
        required=True,
        metavar="TOPOLOGY:PDB",
        help="topology JSON and reference PDB, colon separated (repeatable)",
    )
    p.add_argument("--output-dir", required=True, help="directory for results")
    p.add_argument("--steps", type=int, default=4000, help="optimizer steps")
    p.add_argument("--lr", type=float, default=1e-5, help="trunk learning rate")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--replicas", type=int, default=2, help="draws per step")
    p.add_argument("--threads", type=int, default=1, help="torch CPU threads")

    p = sub.add_parser("score", help="compare a prediction to a reference")
    p.add_argument("--topology", required=True, help="topology JSON file")
    p.add_argument("--prediction", required=True, help="predicted PDB")
    p.add_argument("--reference", required=True, help="reference PDB")
    p.add_argument("--ligand", help="ligand chain id for pocket metrics")
    p.add_argument("--output", help="write the JSON report here (default stdout)")
    p.add_argument("--threads", type=int, default=1, help="torch CPU threads")

    p = sub.add_parser(
        "confbench", help="score a prediction against two conformations"
    )
    p.add_argument("--query-topology", required=True)
    p.add_argument("--query-pdb", required=True)
    p.add_argument("--alt-topology", required=True)
    p.add_argument("--alt-pdb", required=True)
    p.add_argument("--ref-topology", required=True)
    p.add_argument("--ref-pdb", required=True)
    p.add_argument("--ligand", required=True, help="ligand chain id (reference)")
    p.add_argument(
        "--map-query",
        action="append",
        metavar="REF=QUERY",
        help="explicit reference-to-query chain pairing (repeatable)",
    )
    p.add_argument(
        "--map-alt",
        action="append",
        metavar="REF=ALT",
        help="explicit reference-to-alternative chain pairing (repeatable)",
    )
    p.add_argument("--output", help="write the JSON report here (default stdout)")
    p.add_argument("--threads", type=int, default=1, help="torch CPU threads")

    p = sub.add_parser("prior", help="draw physics-informed prior samples")
    p.add_argument("--topology", required=True, help="topology JSON file")
    p.add_argument("--output", required=True, help="PDB path for the samples")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--n-samples", type=int, default=1, help="models to draw")
    p.add_argument("--steps", type=int, default=64, help="integrator steps")
    p.add_argument("--dt", type=float, default=0.25, help="integrator step size")
    p.add_argument(
        "--noise-scale", type=float, default=1.0, help="0 disables the noise term"
    )
    p.add_argument("--threads", type=int, default=1, help="torch CPU threads")

    p = sub.add_parser(
        "attn-bench", help="compare naive and tiled attention kernels"
    )
    p.add_argument(
        "--sizes", default="32,64,128", help="comma-separated sequence lengths"
    )
    p.add_argument("--groups", type=int, default=2, help="attention groups")
    p.add_argument("--dim", type=int, default=8, help="head dimension")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--output", help="write the JSON report here (default stdout)")
    p.add_argument("--threads", type=int, default=1, help="torch CPU threads")

    return parser


def _echo_run_config(output_dir: Path, args: argparse.Namespace) -> None:
    config = dict(vars(args))
    config["package_version"] = __version__
    write_json_report(output_dir / "run-config.json", config)


def _load_or_init_model(checkpoint, seed: int):
    if checkpoint:
        loaded = load_checkpoint(checkpoint)
        model, head = loaded["model"], loaded["head"]
        trained = True
        if head is None:
            # model-only checkpoint: fall back to an untrained head so
            # sampling still works (confidence is then uninformative)
            torch.manual_seed(seed)
            head = ConfidenceHead(d_model=model.config.d_model)
            head.eval()
    else:
        torch.manual_seed(seed)
        model = Denoiser()
        head = ConfidenceHead(d_model=model.config.d_model)
        model.eval()
        head.eval()
        trained = False
    return model, head, trained


def _cmd_sample(args) -> int:
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _echo_run_config(out, args)
    system = read_topology(args.topology)
    model, head, trained = _load_or_init_model(args.checkpoint, args.seed)
    config = FlowConfig(n_steps=args.n_steps, ligand_of_interest=args.ligand)
    anchors = select_anchors(system, budget=head.config.anchor_budget)
    cond = model.encode(system)
    samples = []
    for s in range(args.n_samples):
        started = time.perf_counter()
        if args.trajectory:
            conf, trajectory = sample_structure(
                model, system, config, seed=args.seed + s, return_trajectory=True
            )
            write_pdb(out / f"trajectory_{s:02d}.pdb", system, trajectory)
        else:
            conf = sample_structure(model, system, config, seed=args.seed + s)
        elapsed = time.perf_counter() - started
        with torch.no_grad():
            output = head(
                torch.from_numpy(conf.coords).float(), cond.atom_h, anchors.indices
            )
        plddt = output.plddt()
        pde = output.pde()
        n_clash = clash_count(conf.coords, system)
        n_chiral = chirality_violations(conf.coords, system)
        if args.ligand:
            score = ligand_ranking_score(
                plddt, system, args.ligand, n_clash, n_chiral
            )
        elif len(system.chains) >= 2:
            score = interface_ranking_score(
                pde, anchors.indices, conf.coords, system,
                system.chains[0].id, system.chains[1].id,
            )
        else:
            score = chain_ranking_score(
                pde, anchors.indices, conf.coords, system, system.chains[0].id
            )
        write_pdb(out / f"sample_{s:02d}.pdb", system, conf, bfactors=plddt * 100.0)
        samples.append(
            {
                "index": s,
                "file": f"sample_{s:02d}.pdb",
                "seed": args.seed + s,
                "ranking_score": score,
                "mean_plddt": float(np.mean(plddt)),
                "clash_count": n_clash,
                "chirality_violations": n_chiral,
                "wall_seconds": elapsed,
            }
        )
    order = rank_samples([s["ranking_score"] for s in samples])
    write_json_report(
        out / "report.json",
        {
            "topology": str(args.topology),
            "trained_checkpoint": bool(trained),
            "n_steps": args.n_steps,
            "samples": samples,
            "ranking": order,
        },
    )
    print(f"wrote {len(samples)} sample(s) to {out}")
    return EXIT_OK


def _parse_system_pairs(specs):
    dataset = []
    for spec in specs:
        if ":" not in spec:
            raise InputError(
                f"--system expects TOPOLOGY:PDB, got {spec!r}"
            )
        topo_path, pdb_path = spec.rsplit(":", 1)
        system = read_topology(topo_path)
        reference = read_pdb(pdb_path, system)
        dataset.append((system, reference.coords))
    return dataset


def _cmd_train_toy(args) -> int:
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _echo_run_config(out, args)
    dataset = _parse_system_pairs(args.system)
    torch.manual_seed(args.seed)
    model = Denoiser()
    history = train_toy(
        model,
        dataset,
        train_config=TrainConfig(
            lr=args.lr, n_steps=args.steps, replicas=args.replicas, seed=args.seed
        ),
    )
    save_checkpoint(out / "checkpoint.pt", model)
    write_json_report(
        out / "history.json",
        {"steps": len(history), "first": history[0], "last": history[-1]},
    )
    print(
        f"trained {len(history)} steps; "
        f"loss {history[0]['loss']:.4f} -> {history[-1]['loss']:.4f}"
    )
    return EXIT_OK


def _cmd_score(args) -> int:
    system = read_topology(args.topology)
    pred = read_pdb(args.prediction, system, provenance="prediction")
    ref = read_pdb(args.reference, system)
    report = {
        "lddt": lddt(pred.coords, ref.coords, system),
        "backbone_lddt": lddt(pred.coords, ref.coords, system, backbone_only=True),
        "clash_count": clash_count(pred.coords, system),
        "chirality_violations": chirality_violations(pred.coords, system),
    }
    if args.ligand:
        report["pocket_aligned_ligand_rmsd"] = pocket_aligned_ligand_rmsd(
            pred.coords, ref.coords, system, args.ligand
        )
    if args.output:
        write_json_report(args.output, report)
    else:
        write_json_report("/dev/stdout", report)
    return EXIT_OK


def _parse_chain_map(entries):
    if not entries:
        return None
    mapping = {}
    for entry in entries:
        if "=" not in entry:
            raise InputError(f"chain mapping expects REF=OTHER, got {entry!r}")
        ref_id, other_id = entry.split("=", 1)
        mapping[ref_id] = other_id
    return mapping


def _cmd_confbench(args) -> int:
    q_sys = read_topology(args.query_topology)
    a_sys = read_topology(args.alt_topology)
    r_sys = read_topology(args.ref_topology)
    q = read_pdb(args.query_pdb, q_sys, provenance="prediction")
    a = read_pdb(args.alt_pdb, a_sys)
    r = read_pdb(args.ref_pdb, r_sys)
    result = evaluate_conformations(
        (q_sys, q.coords),
        (a_sys, a.coords),
        (r_sys, r.coords),
        ligand_chain_id=args.ligand,
        chain_mapping_query=_parse_chain_map(args.map_query),
        chain_mapping_alt=_parse_chain_map(args.map_alt),
    )
    report = result.to_dict()
    if args.output:
        write_json_report(args.output, report)
    else:
        write_json_report("/dev/stdout", report)
    return EXIT_OK


def _cmd_prior(args) -> int:
    system = read_topology(args.topology)
    params = PriorParams(
        dt=args.dt, n_steps=args.steps, noise_scale=args.noise_scale
    )
    models = [
        sample_prior(system, params=params, seed=args.seed + s)
        for s in range(args.n_samples)
    ]
    write_pdb(args.output, system, models)
    print(f"wrote {len(models)} prior draw(s) to {args.output}")
    return EXIT_OK


def _cmd_attn_bench(args) -> int:
    try:
        sizes = tuple(int(tok) for tok in args.sizes.split(",") if tok)
    except ValueError:
        raise InputError(f"--sizes expects comma-separated integers, got {args.sizes!r}")
    if not sizes:
        raise InputError("--sizes must name at least one length")
    rows = run_attention_bench(
        sizes=sizes, g=args.groups, d=args.dim, seed=args.seed
    )
    by_size = {}
    for row in rows:
        by_size.setdefault(row.n, {})[row.mode] = row
    for n in sizes:
        naive, tiled = by_size[n]["naive"], by_size[n]["tiled"]
        ratio = naive.peak_transient_bytes / max(tiled.peak_transient_bytes, 1)
        print(
            f"n={n:>5}  naive {naive.peak_transient_bytes:>12} B  "
            f"tiled {tiled.peak_transient_bytes:>12} B  ({ratio:.1f}x smaller)  "
            f"naive {naive.wall_time_s * 1e3:7.1f} ms  "
            f"tiled {tiled.wall_time_s * 1e3:7.1f} ms"
        )
    if args.output:
        report = {"rows": [vars(row) for row in rows]}
        write_json_report(args.output, report)
    return EXIT_OK


_COMMANDS = {
    "sample": _cmd_sample,
    "train-toy": _cmd_train_toy,
    "score": _cmd_score,
    "confbench": _cmd_confbench,
    "prior": _cmd_prior,
    "attn-bench": _cmd_attn_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    threads = getattr(args, "threads", 1)
    torch.set_num_threads(max(1, threads))
    try:
        return _COMMANDS[args.command](args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


def entrypoint() -> None:
    sys.exit(main())
