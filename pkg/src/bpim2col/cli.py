"""Command-line front end: verify | simulate | sweep | sparsity.

Exit codes: 0 ok, 1 verification failure, 2 usage/validation error,
3 I/O error.  All output is deterministic for a fixed (seed, config,
version); run timestamps go to the log only.  Log level comes from the
BPIM2COL_LOG environment variable.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .geometry import InvalidGeometry, LayerGeometry, geometry_from_dict, parse_layer_string
from .simulator import SimConfig, account, run_gemm, verify_against_reference
from .verification import run_verification
from .workloads import aggregate, sparsity_report, stride2_catalog, synth_operands

log = logging.getLogger("bpim2col")

_CSV_COLUMNS = ["layer", "phase", "algo", "compute_cycles", "reorg_cycles",
                "prologue_cycles", "offchip_bytes", "bufA_bytes", "bufB_bytes",
                "sparsity", "speedup"]


@dataclass
class RunManifest:
    command: str
    config_digest: str
    seed: int
    timestamp: str
    version: str

    def to_dict(self) -> dict:
        # timestamp deliberately omitted: emitted artifacts stay byte-stable
        return {"command": self.command, "config_digest": self.config_digest,
                "seed": self.seed, "version": self.version}


def _manifest(args: argparse.Namespace) -> RunManifest:
    # the output location does not influence what is computed
    payload = {k: v for k, v in sorted(vars(args).items())
               if k not in ("func", "out")}
    digest = hashlib.sha256(json.dumps(payload, sort_keys=True, default=str)
                            .encode()).hexdigest()
    m = RunManifest(command=args.command, config_digest=digest,
                    seed=getattr(args, "seed", 0),
                    timestamp=datetime.now(timezone.utc).isoformat(),
                    version=__version__)
    log.info("run %s at %s (digest %s)", m.command, m.timestamp, m.config_digest[:12])
    return m


def _sim_config(args: argparse.Namespace) -> SimConfig:
    return SimConfig(array_dim=args.array_dim, data_bytes=args.data_bytes,
                     reorg_overlap=args.overlap)


def _load_catalog(args: argparse.Namespace) -> list[tuple[str, str, LayerGeometry]]:
    """Resolve (--layer | --config | builtin) into (name, network, geometry)."""
    if getattr(args, "layer", None):
        g = parse_layer_string(args.layer, batch=args.batch)
        return [(args.layer, "custom", g)]
    if getattr(args, "config", None):
        text = Path(args.config).read_text()
        data = json.loads(text)
        if isinstance(data, dict):
            data = [data]
        out = []
        for obj in data:
            network = obj.get("network", "custom")
            name, g = geometry_from_dict(obj, default_batch=args.batch)
            out.append((name, network, g))
        return out
    return [(s.name, s.network, s.geometry(args.batch)) for s in stride2_catalog(args.batch)]


def _phases(arg: str) -> list[str]:
    return ["inference", "loss", "gradient"] if arg == "all" else [arg]


def _algos(arg: str) -> list[str]:
    return ["traditional", "bp"] if arg == "both" else [arg]


def cmd_verify(args: argparse.Namespace) -> int:
    manifest = _manifest(args)
    res = run_verification(seed=args.seed, cases=args.cases)
    for line in res.lines:
        print(line)
    if args.cases <= 0:
        print("warning: no cases run")
        return 0
    if not res.ok:
        print("counterexample:", json.dumps(res.counterexample, sort_keys=True))
        return 1
    print(f"verify ok ({res.cases_run} equivalence cases, seed {args.seed}, "
          f"digest {manifest.config_digest[:12]})")
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    manifest = _manifest(args)
    catalog = _load_catalog(args)
    cfg = _sim_config(args)
    reports = []
    for name, network, g in catalog:
        ops = synth_operands(g, seed=args.seed)
        for phase in _phases(args.phase):
            for algo in _algos(args.algo):
                rep, result = run_gemm(phase, algo, g, ops, cfg,
                                       layer=name, network=network)
                if args.check and not verify_against_reference(phase, g, ops, result):
                    print(f"check failed: {name} {phase} {algo}", file=sys.stderr)
                    return 1
                reports.append(rep)
    payload = {"manifest": manifest.to_dict(),
               "reports": [r.to_dict() for r in reports]}
    if args.algo == "both":
        rows, _ = aggregate(reports)
        payload["comparison"] = [vars(r) for r in rows]
    print(json.dumps(payload, indent=2, sort_keys=True))
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        _write_csv(outdir / "simulate.csv", reports)
    return 0


def _write_csv(path: Path, reports: list) -> None:
    speedups = {}
    by_key = {}
    for r in reports:
        by_key.setdefault((r.layer, r.phase), {})[r.algo] = r
    for key, pair in by_key.items():
        if "traditional" in pair and "bp" in pair:
            speedups[key] = pair["traditional"].total_cycles / pair["bp"].total_cycles
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_CSV_COLUMNS)
        for r in reports:
            speed = speedups.get((r.layer, r.phase))
            writer.writerow([
                r.layer, r.phase, r.algo, r.compute_cycles, r.reorg_cycles,
                r.prologue_cycles, r.offchip_total,
                r.onchip_bytes["buf_a_to_pe"], r.onchip_bytes["buf_b_to_pe"],
                f"{r.lowered_sparsity:.6f}",
                f"{speed:.6f}" if speed is not None else "",
            ])


def cmd_sweep(args: argparse.Namespace) -> int:
    manifest = _manifest(args)
    catalog = _load_catalog(args)
    cfg = _sim_config(args)
    phases = ["loss", "gradient"] if args.phase == "backprop" else _phases(args.phase)
    reports = []
    for name, network, g in catalog:
        for phase in phases:
            for algo in ("traditional", "bp"):
                reports.append(account(phase, algo, g, cfg, layer=name, network=network))
    rows, summary = aggregate(reports)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    _write_csv(outdir / "comparison.csv", reports)
    with open(outdir / "summary.json", "w") as fh:
        json.dump({"manifest": manifest.to_dict(), **summary},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {outdir / 'comparison.csv'} ({len(reports)} rows) and "
          f"{outdir / 'summary.json'}")
    return 0


def cmd_sparsity(args: argparse.Namespace) -> int:
    _manifest(args)
    out = []
    for name, network, g in _load_catalog(args):
        rep = sparsity_report(g)
        out.append({"layer": name, "network": network, **rep})
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bpim2col",
        description="Implicit backprop im2col: verification, simulation, sweeps.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def shared(p, layered=True):
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--array-dim", type=int, default=16)
        p.add_argument("--data-bytes", type=int, default=4)
        p.add_argument("--batch", type=int, default=2)
        p.add_argument("--overlap", type=float, default=0.0,
                       help="fraction of host reorganization hidden under compute")
        if layered:
            p.add_argument("--layer", help="square layer shorthand H/C/N/K/S/P")
            p.add_argument("--config", help="JSON file of layer objects")

    p = sub.add_parser("verify", help="randomized equivalence and oracle suites")
    p.add_argument("--cases", type=int, default=1000)
    shared(p, layered=False)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", help="run one or more layers with synthetic data")
    p.add_argument("--phase", choices=["inference", "loss", "gradient", "all"],
                   default="loss")
    p.add_argument("--algo", choices=["traditional", "bp", "both"], default="both")
    p.add_argument("--check", action="store_true",
                   help="verify the numeric result against the oracle")
    p.add_argument("--out", help="directory for a CSV copy of the reports")
    shared(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="catalog sweep, CSV + JSON artifacts")
    p.add_argument("--phase", choices=["inference", "loss", "gradient", "all",
                                       "backprop"], default="backprop")
    p.add_argument("--out", required=True)
    shared(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("sparsity", help="structural-zero fractions per layer")
    shared(p)
    p.set_defaults(func=cmd_sparsity)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("BPIM2COL_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except (InvalidGeometry, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
