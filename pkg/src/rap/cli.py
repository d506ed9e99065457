"""Command-line front end: simulate, probe, solve, fit, report.

Batch-oriented and reproducible: every simulate run writes a manifest with
the resolved configuration, per-replica seeds and library versions, and
rerunning from the same configuration yields byte-identical outputs.
Replica parallelism (capped by RAP_THREADS) never affects results because
each replica owns an independent RNG stream seeded base_seed + index.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__, analysis, meanfield, packer
from ._util import format_alpha, parse_alpha

DEFAULT_PROBE_COUNT = 10**6


@dataclass
class RunConfig:
    """Resolved configuration of a simulate run."""

    dimension: int = 2
    side: float = 100.0
    n: int = 10000
    seed: int = 1
    replicas: int = 1
    snapshots_per_decade: int = 64
    alphas: tuple = ()
    leaf_capacity: int = 128
    out: Path = Path("rap_out")

    def __post_init__(self):
        if self.dimension not in (2, 3, 4):
            raise ValueError(f"dimension must be 2, 3 or 4, got {self.dimension}")
        if self.side <= 0:
            raise ValueError("side must be positive")
        if self.n < 0:
            raise ValueError("n must be >= 0")
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")
        alphas = tuple(Fraction(a) for a in self.alphas) or packer.default_alphas(self.dimension)
        self.alphas = alphas
        self.out = Path(self.out)

    def packing_config(self, replica: int) -> packer.PackingConfig:
        return packer.PackingConfig(
            dimension=self.dimension, side=self.side, n_spheres=self.n,
            seed=self.seed + replica, alphas=self.alphas,
            snapshots_per_decade=self.snapshots_per_decade,
            leaf_capacity=self.leaf_capacity)

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "side": self.side,
            "n": self.n,
            "seed": self.seed,
            "replicas": self.replicas,
            "snapshots_per_decade": self.snapshots_per_decade,
            "alphas": [format_alpha(a) for a in self.alphas],
            "leaf_capacity": self.leaf_capacity,
            "out": str(self.out),
        }


def _load_ini(path: Path) -> dict:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(f"config file not found: {path}")
    if "run" not in parser:
        raise ValueError(f"{path}: missing [run] section")
    section = parser["run"]
    out: dict = {}
    for key in ("dimension", "n", "seed", "replicas", "snapshots_per_decade",
                "leaf_capacity"):
        if key in section:
            out[key] = section.getint(key)
    if "side" in section:
        out["side"] = section.getfloat("side")
    if "alphas" in section:
        out["alphas"] = tuple(parse_alpha(tok) for tok in section["alphas"].split(","))
    if "out" in section:
        out["out"] = Path(section["out"])
    return out


def _resolve_config(args) -> RunConfig:
    values: dict = {}
    if args.config:
        values.update(_load_ini(Path(args.config)))
    overrides = {
        "dimension": args.dimension, "side": args.side, "n": args.n,
        "seed": args.seed, "replicas": args.replicas,
        "snapshots_per_decade": args.snapshots_per_decade,
        "leaf_capacity": args.leaf_capacity,
        "out": Path(args.out) if args.out else None,
        "alphas": tuple(parse_alpha(t) for t in args.alphas.split(",")) if args.alphas else None,
    }
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**values)


def _thread_count(n_tasks: int) -> int:
    cap = os.environ.get("RAP_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(n_tasks, limit))


def _versions() -> dict:
    import numba
    import scipy
    return {
        "rap": __version__,
        "python": ".".join(map(str, sys.version_info[:3])),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }


# -- simulate ---------------------------------------------------------------------


def _run_replica(config: RunConfig, replica: int, out_dir: Path) -> dict:
    pc = config.packing_config(replica)
    packing, series = packer.run(pc)
    tag = f"seed{pc.seed}"
    packing_file = out_dir / f"packing_{tag}.csv"
    snap_file = out_dir / f"snapshots_{tag}.jsonl"
    hist_file = out_dir / f"radius_hist_{tag}.jsonl"
    packer.export_packing_csv(packing, packing_file)
    series.to_jsonl(snap_file)
    series.hist_to_jsonl(hist_file)
    return {
        "seed": pc.seed,
        "packing": packing_file.name,
        "snapshots": snap_file.name,
        "radius_hist": hist_file.name,
        "attempts": packing.attempts,
        "packing_fraction": packing.packing_fraction,
    }


def cmd_simulate(args) -> int:
    config = _resolve_config(args)
    out_dir = config.out
    out_dir.mkdir(parents=True, exist_ok=True)
    threads = _thread_count(config.replicas)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        replica_info = list(pool.map(
            lambda i: _run_replica(config, i, out_dir), range(config.replicas)))
    cfg = config.to_dict()
    manifest = {
        "command": "simulate",
        "config": cfg,
        "config_sha256": hashlib.sha256(
            json.dumps(cfg, sort_keys=True).encode()).hexdigest(),
        "seeds": [config.seed + i for i in range(config.replicas)],
        "threads": threads,
        "versions": _versions(),
        "replicas": replica_info,
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"simulate: {config.replicas} replica(s) of n={config.n} d={config.dimension} "
          f"-> {out_dir}")
    return 0


# -- probe ------------------------------------------------------------------------


def _model_cdfs(packing: packer.Packing, names: list[str]):
    """Build survival-CDF callables from the packing's actual moments."""
    moments = packing.moment_map()
    pore = packing.pore_volume
    d = packing.box.dimension
    out = {}
    for name in names:
        model = meanfield.SurfaceModel.parse(name)
        surface = meanfield.surface_coefficients(model, d, moments, packing.n)
        if model is meanfield.SurfaceModel.AFFINE:
            s0 = surface.terms[0][1]
            out[name] = (lambda r, s0=s0, pore=pore:
                         meanfield.insertion_cdf_affine(s0, pore, r))
        else:
            out[name] = (lambda r, surface=surface, pore=pore:
                         meanfield.insertion_cdf(surface, pore, r))
    return out


def cmd_probe(args) -> int:
    packing = packer.load_packing_csv(args.packing)
    count = args.count if args.count is not None else DEFAULT_PROBE_COUNT
    result = packer.probe_insertions(packing, count, args.seed)
    names = [t.strip() for t in args.models.split(",") if t.strip()]
    cdfs = _model_cdfs(packing, names)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    model_densities = {}
    ks = {}
    for name, cdf in cdfs.items():
        comparison = analysis.compare_probe_to_model(result, cdf, bins=args.bins)
        model_densities[name] = comparison.model_density
        ks[name] = comparison.ks_distance
    packer.export_probe_csv(result, out_dir / "probe_density.csv",
                            bins=args.bins, model_densities=model_densities)
    packer.export_probe_summary(result, out_dir / "probe_summary.json",
                                extra={"ks": ks, "packing_file": str(args.packing),
                                       "bins": args.bins})
    print(f"probe: {count} attempts, {result.radii.size} accepted; "
          f"ks={ {k: round(v, 4) for k, v in ks.items()} } -> {out_dir}")
    return 0


# -- solve ------------------------------------------------------------------------


def _solve_all() -> dict:
    solutions = []
    for model in (meanfield.SurfaceModel.UNIFORM_DISTRIBUTION,
                  meanfield.SurfaceModel.IDENTICAL_TWINS):
        for d in (2, 3, 4):
            solutions.append(meanfield.solve_exponents(model, d).to_dict())
    reference = {}
    for d in (2, 3, 4):
        abk, affine = meanfield.reference_gammas(d)
        reference[str(d)] = {"abk": abk, "affine": affine}
    return {"solutions": solutions, "reference_gamma": reference}


def _print_solution_table(payload: dict) -> None:
    rows = {}
    for sol in payload["solutions"]:
        rows[(sol["model"], sol["d"])] = sol
    print(f"{'exponent':<10}" + "".join(f"{m} d={d:<6}" for m in ("UD", "IT")
                                        for d in (2, 3, 4)))
    for key in ("1", "2", "3", "4"):
        cells = []
        for m in ("UD", "IT"):
            for d in (2, 3, 4):
                lam = rows[(m, d)]["lambdas"].get(key)
                cells.append(f"{lam:+.4f}  " if lam is not None else "   --    ")
        print(f"lambda_{key:<3}" + "".join(cells))
    cells = [f"{rows[(m, d)]['gamma']:.4f}  " for m in ("UD", "IT") for d in (2, 3, 4)]
    print(f"{'gamma':<10}" + "".join(cells))
    ref = payload["reference_gamma"]
    print("gamma_abk   " + "  ".join(f"d={d}: {ref[str(d)]['abk']:.3f}" for d in (2, 3, 4)))
    print("gamma_affine" + "  ".join(f" d={d}: {ref[str(d)]['affine']:.2f}" for d in (2, 3, 4)))


def cmd_solve(args) -> int:
    try:
        if args.all:
            payload = _solve_all()
            text = json.dumps(payload, indent=2)
        else:
            if not args.model or not args.dim:
                print("solve: provide --model and --dim, or --all", file=sys.stderr)
                return 2
            model = meanfield.SurfaceModel.parse(args.model)
            payload = meanfield.solve_exponents(model, args.dim).to_dict()
            text = json.dumps(payload, indent=2)
    except meanfield.ConvergenceError as exc:
        print(f"solve: did not converge: {exc} (residual {exc.residual:.3e})",
              file=sys.stderr)
        return 1
    if args.out:
        Path(args.out).write_text(text + "\n")
        if args.all:
            _print_solution_table(payload)
        print(f"solve: wrote {args.out}")
    else:
        print(text)
    return 0


# -- fit --------------------------------------------------------------------------


def _load_ensemble(snap_dir: Path) -> tuple[analysis.EnsembleSeries, int]:
    files = sorted(snap_dir.glob("snapshots_seed*.jsonl"))
    if not files:
        raise FileNotFoundError(f"no snapshots_seed*.jsonl files in {snap_dir}")
    series = []
    for f in files:
        hist_file = f.with_name(f.name.replace("snapshots_", "radius_hist_"))
        series.append(packer.SnapshotSeries.from_jsonl(f, hist_file))
    dimension = None
    manifest = snap_dir / "manifest.json"
    if manifest.exists():
        dimension = json.loads(manifest.read_text())["config"]["dimension"]
    if dimension is None:
        # fall back: the largest tracked integer order is M_d (pore bookkeeping)
        dimension = int(max(a for a in series[0].alphas if a.denominator == 1))
    return analysis.EnsembleSeries.from_series(series), dimension


def _parse_window(text: str | None):
    if not text:
        return analysis.DEFAULT_FIT_WINDOW
    lo_s, _, hi_s = text.partition(":")
    lo = int(lo_s) if lo_s else None
    hi = int(hi_s) if hi_s else None
    return (lo, hi)


def cmd_fit(args) -> int:
    snap_dir = Path(args.snapshots)
    ensemble, dimension = _load_ensemble(snap_dir)
    window = _parse_window(args.window)
    alphas = [parse_alpha(t) for t in args.alphas.split(",")] if args.alphas \
        else [a for a in ensemble.alphas if a.denominator == 1]
    if Fraction(dimension) not in alphas:
        alphas.append(Fraction(dimension))
    out_dir = Path(args.out) if args.out else snap_dir
    out_dir.mkdir(parents=True, exist_ok=True)

    fits = []
    gammas = []
    for alpha in sorted(alphas):
        # the alpha = d exponent is negative and read from the pore decay
        source = "pore" if alpha == dimension else "M"
        if source == "M" and Fraction(alpha) not in ensemble.alphas:
            raise KeyError(
                f"moment order {format_alpha(alpha)} not present in snapshots; "
                f"available: {[format_alpha(a) for a in ensemble.alphas]}")
        ns, mean, sem = ensemble.log_derivative_stats(
            None if source == "pore" else alpha)
        weights = None
        if ensemble.replica_count > 1:
            safe = np.maximum(sem, 1e-12 * np.maximum(np.abs(mean), 1e-30))
            weights = 1.0 / safe**2
        fit = analysis.fit_asymptote(ns, mean, weights=weights, window=window)
        record = {"series": source, **fit.to_dict(alpha=alpha)}
        fits.append(record)
        gammas.append(analysis.gamma_likelihood(fit, alpha).to_dict())

    with open(out_dir / "fits.json", "w") as fh:
        json.dump({"dimension": dimension, "replicas": ensemble.replica_count,
                   "fits": fits}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out_dir / "gamma.json", "w") as fh:
        json.dump({"dimension": dimension, "likelihoods": gammas}, fh,
                  indent=2, sort_keys=True)
        fh.write("\n")
    for rec in fits:
        print(f"fit alpha={rec['alpha']:<4} ({rec['series']}): "
              f"lambda={rec['lambda']:+.4f} +- {rec['sigma']:.4f} "
              f"b={rec['b']:+.3f} c={rec['c']:+.3f}")
    print(f"fit: wrote {out_dir / 'fits.json'} and {out_dir / 'gamma.json'}")
    return 0


# -- report -----------------------------------------------------------------------


def cmd_report(args) -> int:
    fits_path = Path(args.fits) / "fits.json"
    gamma_path = Path(args.fits) / "gamma.json"
    if not fits_path.exists():
        print(f"report: {fits_path} not found (run `rap fit` first)", file=sys.stderr)
        return 1
    fitted = json.loads(fits_path.read_text())
    d = fitted["dimension"]
    solved = _solve_all()
    by_model = {(s["model"], s["d"]): s for s in solved["solutions"]}
    rows = []
    for rec in fitted["fits"]:
        key = rec["alpha"]
        rows.append({
            "alpha": key,
            "fitted_lambda": rec["lambda"],
            "fitted_sigma": rec["sigma"],
            "ud_lambda": by_model[("UD", d)]["lambdas"].get(key),
            "it_lambda": by_model[("IT", d)]["lambdas"].get(key),
        })
    payload = {
        "dimension": d,
        "exponents": rows,
        "gamma": {
            "ud": by_model[("UD", d)]["gamma"],
            "it": by_model[("IT", d)]["gamma"],
            "reference": solved["reference_gamma"][str(d)],
        },
    }
    if gamma_path.exists():
        payload["gamma"]["likelihoods"] = json.loads(gamma_path.read_text())["likelihoods"]
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
        print(f"report: wrote {args.out}")
    else:
        print(text)
    for row in rows:
        ud = f"{row['ud_lambda']:+.4f}" if row["ud_lambda"] is not None else "  --  "
        it = f"{row['it_lambda']:+.4f}" if row["it_lambda"] is not None else "  --  "
        print(f"lambda_{row['alpha']:<4} fit {row['fitted_lambda']:+.4f}"
              f" +- {row['fitted_sigma']:.4f} | UD {ud} | IT {it}")
    return 0


# -- entry point ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rap",
        description="Random Apollonian packing simulator and mean-field exponent solver")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate packings and snapshot series")
    sim.add_argument("--config", help="INI file with a [run] section")
    sim.add_argument("--dimension", type=int, choices=(2, 3, 4))
    sim.add_argument("--side", type=float)
    sim.add_argument("--n", type=int)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--replicas", type=int)
    sim.add_argument("--snapshots-per-decade", type=int, dest="snapshots_per_decade")
    sim.add_argument("--leaf-capacity", type=int, dest="leaf_capacity")
    sim.add_argument("--alphas", help="comma-separated moment orders, e.g. 0.5,1,2")
    sim.add_argument("--out")
    sim.set_defaults(func=cmd_simulate)

    probe = sub.add_parser("probe", help="test insertions into a stored packing")
    probe.add_argument("--packing", required=True, help="packing CSV file")
    probe.add_argument("--count", type=int, default=None,
                       help=f"number of test insertions (default {DEFAULT_PROBE_COUNT})")
    probe.add_argument("--models", default="ud,it",
                       help="comma list of model CDF columns: ud,it,affine")
    probe.add_argument("--bins", type=int, default=256)
    probe.add_argument("--seed", type=int, default=1)
    probe.add_argument("--out", default="probe_out")
    probe.set_defaults(func=cmd_probe)

    solve = sub.add_parser("solve", help="solve the mean-field exponent systems")
    solve.add_argument("--model", help="ud or it")
    solve.add_argument("--dim", type=int, choices=(2, 3, 4))
    solve.add_argument("--all", action="store_true",
                       help="solve all six systems and report reference gammas")
    solve.add_argument("--out")
    solve.set_defaults(func=cmd_solve)

    fit = sub.add_parser("fit", help="fit power-law exponents from snapshots")
    fit.add_argument("--snapshots", required=True, help="directory with snapshots_seed*.jsonl")
    fit.add_argument("--alphas", help="comma list of orders to fit (default: integers)")
    fit.add_argument("--window", help="fit window as n0:n1 (default 1000:)")
    fit.add_argument("--out", help="output directory (default: snapshot dir)")
    fit.set_defaults(func=cmd_fit)

    report = sub.add_parser("report", help="combine solved and fitted exponents")
    report.add_argument("--fits", required=True, help="directory with fits.json")
    report.add_argument("--out")
    report.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError, packer.PackingFormatError,
            packer.SaturationError) as exc:
        print(f"rap {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
