"""Command-line pipeline: simulate, breed, reconstruct, quasiprob, report.

Run directory layout::

    OUT/gen0/samples.bin   stats.json   rho.txt   loglik.csv   recon.json
             q_empirical.csv   q_reconstructed.csv   wigner.csv  (+ .json sidecars)
    OUT/gen1/...
    OUT/report.json        machine-readable report (deterministic)
    OUT/timings.json       wall-clock times of the last run

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure,
3 I/O error.
"""

import argparse
import json
import math
import platform
import sys
import time
import warnings
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import fock as F
from .breeding import BreedingConfig, breed_iterate, breed_oracle_chain
from .errors import DomainError, NumericalFailure
from .io import FormatError, read_density, read_samples, write_density, write_grid, write_samples, write_trace
from .quasiprob import (
    GridSpec,
    fit_cat_amplitude,
    histogram_q,
    negativity_volume,
    q_grid,
    wigner_at_origin,
    wigner_grid,
)
from .sampler import sample_q
from .tomography import ReconstructionConfig, maxlik_reconstruct

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class MissingArtifact(OSError):
    pass


def _bool(text):
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _state(text):
    t = str(text).strip().lower().replace("_", "-")
    aliases = {"odd-cat": "odd-cat", "cat": "odd-cat", "squeezed-vacuum": "squeezed-vacuum", "sv": "squeezed-vacuum"}
    if t not in aliases:
        raise ValueError(f"unknown state {text!r} (odd-cat or squeezed-vacuum)")
    return aliases[t]


def _dims(text):
    dims = [int(v) for v in str(text).split(",") if v.strip()]
    if not dims or min(dims) < 2:
        raise ValueError(f"bad --dim {text!r}: need integers >= 2")
    return ",".join(str(d) for d in dims)


def _grid(text):
    GridSpec.parse(str(text))
    return str(text).strip()


# canonical option -> (converter, default, help)
OPTIONS = {
    "state": (_state, "odd-cat", "odd-cat or squeezed-vacuum"),
    "alpha": (float, 1.1, "odd-cat amplitude"),
    "squeeze": (float, 0.6, "squeezing parameter r of the squeezed vacuum"),
    "subtract": (_bool, False, "subtract one photon from the squeezed vacuum"),
    "eta": (float, 1.0, "loss-channel transmissivity in (0, 1]"),
    "samples": (int, 10**6, "number of generation-0 samples"),
    "seed": (int, 0, "RNG seed"),
    "nbar": (float, 1.3, "acceptance threshold on |alpha_minus|^2"),
    "steps": (int, 2, "breeding steps"),
    "dim": (_dims, "12,16,20", "reconstruction truncation, one value or one per generation"),
    "sim_dim": (int, 40, "truncation used to simulate the input state"),
    "max_iters": (int, 2000, "MaxLik iteration cap"),
    "rel_tol": (float, 1e-8, "relative log-likelihood change for convergence"),
    "dilution": (float, 0.5, "MaxLik mixing weight in (0, 1]"),
    "bins": (int, 0, "bin samples on a bins x bins grid before MaxLik (0: off)"),
    "grid": (_grid, "5,101", "phase-space grid: 'half,n' or 'xmin,xmax,ymin,ymax,nx,ny'"),
    "out": (str, "run", "output directory"),
    "threads": (int, 1, "sampler worker streams (part of the RNG contract)"),
}


def read_config_file(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for num, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{num}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        key = key.lstrip("-").replace("-", "_")
        if key not in OPTIONS:
            raise UsageError(f"{path}:{num}: unknown key {key!r}")
        values[key] = value
    return values


def resolve_config(cli_values):
    """Defaults, then the config file, then the command line."""
    cfg = {k: v[1] for k, v in OPTIONS.items()}
    raw = {}
    if cli_values.get("config"):
        raw.update(read_config_file(cli_values["config"]))
    raw.update({k: v for k, v in cli_values.items() if k in OPTIONS})
    for key, value in raw.items():
        try:
            cfg[key] = OPTIONS[key][0](value)
        except ValueError as exc:
            raise UsageError(f"bad value for {key}: {exc}") from exc
    _validate(cfg)
    return cfg


def _validate(cfg):
    if not 0 < cfg["eta"] <= 1:
        raise UsageError("eta must lie in (0, 1]")
    if cfg["samples"] < 1:
        raise UsageError("samples must be >= 1")
    if cfg["threads"] < 1:
        raise UsageError("threads must be >= 1")
    if cfg["sim_dim"] < 2:
        raise UsageError("sim_dim must be >= 2")
    if cfg["bins"] < 0:
        raise UsageError("bins must be >= 0")
    try:
        BreedingConfig(cfg["nbar"], cfg["steps"])
        ReconstructionConfig(2, cfg["max_iters"], cfg["rel_tol"], cfg["dilution"])
    except DomainError as exc:
        raise UsageError(str(exc)) from exc


def recon_dim(cfg, generation):
    dims = [int(d) for d in cfg["dim"].split(",")]
    return dims[min(generation, len(dims) - 1)]


def gen_dir(cfg, generation):
    return Path(cfg["out"]) / f"gen{generation}"


def _need(path, generation):
    if not path.exists():
        raise MissingArtifact(f"generation {generation}: missing artifact {path}")
    return path


def _dump(path, obj):
    path.write_text(json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def build_state(cfg):
    """Density matrix of the configured input state after loss."""
    dim = cfg["sim_dim"]
    if cfg["state"] == "odd-cat":
        psi = F.odd_cat(cfg["alpha"], dim)
    else:
        psi = F.squeezed_vacuum(cfg["squeeze"], dim)
        if cfg["subtract"]:
            psi = F.subtract_photon(psi)
    return F.apply_loss(F.density_from_pure(psi), cfg["eta"])


def crop_to_support(rho, tol=1e-14):
    """Drop trailing Fock levels holding less than ``tol`` population, renormalized."""
    pops = np.real(np.diagonal(rho))
    tail = np.cumsum(pops[::-1])[::-1]
    keep = max(2, int(np.count_nonzero(tail >= tol)))
    out = rho[:keep, :keep]
    return out / np.trace(out).real


def existing_generations(cfg):
    gens = []
    while (gen_dir(cfg, len(gens)) / "samples.bin").exists():
        gens.append(len(gens))
    return gens


# ---------------------------------------------------------------- commands


def cmd_simulate(cfg):
    rho = build_state(cfg)
    info = {}
    samples = sample_q(rho, cfg["samples"], cfg["seed"], workers=cfg["threads"], source=cfg["state"], stats=info)
    d = gen_dir(cfg, 0)
    d.mkdir(parents=True, exist_ok=True)
    write_samples(d / "samples.bin", samples)
    stats = {
        "generation": 0,
        "count": samples.count,
        "seed": cfg["seed"],
        "workers": cfg["threads"],
        "sampler_acceptance_rate": info["acceptance_rate"],
        "envelope": info["envelope"],
        "state_mean_photon_number": F.mean_photon_number(rho),
    }
    _dump(d / "stats.json", stats)
    print(f"simulate: {samples.count} samples of {cfg['state']} (eta={cfg['eta']}) -> {d / 'samples.bin'}")
    return stats


def cmd_breed(cfg, source=None):
    src = Path(source) if source else _need(gen_dir(cfg, 0) / "samples.bin", 0)
    samples = read_samples(src)
    results = breed_iterate(samples, BreedingConfig(cfg["nbar"], cfg["steps"]))
    out = []
    for k, (gen, stats) in enumerate(results, 1):
        d = gen_dir(cfg, k)
        d.mkdir(parents=True, exist_ok=True)
        gen.generation = k
        write_samples(d / "samples.bin", gen)
        rec = dict(stats.as_dict(), generation=k, count=gen.count)
        _dump(d / "stats.json", rec)
        out.append(rec)
        print(
            f"breed: generation {k}: {stats.accepted_count}/{stats.pair_count} pairs accepted "
            f"({stats.acceptance_fraction:.4f}) -> {d / 'samples.bin'}"
        )
    return out


def reconstruct_file(cfg, samples_path, dest, dim):
    samples = read_samples(samples_path)
    rcfg = ReconstructionConfig(dim, cfg["max_iters"], cfg["rel_tol"], cfg["dilution"], bins=cfg["bins"])
    res = maxlik_reconstruct(samples, rcfg)
    dest.mkdir(parents=True, exist_ok=True)
    write_density(dest / "rho.txt", res.rho)
    write_trace(dest / "loglik.csv", res.loglik_trace)
    info = {
        "dim": dim,
        "iterations": res.iterations,
        "converged": res.converged,
        "backtracks": res.backtracks,
        "final_loglik": res.loglik_trace[-1],
        "count": samples.count,
    }
    _dump(dest / "recon.json", info)
    return info


def cmd_reconstruct(cfg, source=None, generations=None):
    if source:
        info = reconstruct_file(cfg, Path(source), Path(cfg["out"]), recon_dim(cfg, 0))
        print(f"reconstruct: {source}: {info['iterations']} iterations, converged={info['converged']}")
        return [info]
    gens = generations if generations is not None else existing_generations(cfg)
    if not gens:
        raise MissingArtifact(f"generation 0: missing artifact {gen_dir(cfg, 0) / 'samples.bin'}")
    out = []
    for g in gens:
        path = _need(gen_dir(cfg, g) / "samples.bin", g)
        info = reconstruct_file(cfg, path, gen_dir(cfg, g), recon_dim(cfg, g))
        out.append(info)
        print(
            f"reconstruct: generation {g}: dim {info['dim']}, {info['iterations']} iterations, "
            f"converged={info['converged']}, L={info['final_loglik']:.6f}"
        )
    return out


def grids_for(cfg, g):
    """Write empirical Q, reconstructed Q and Wigner grids of generation ``g``."""
    d = gen_dir(cfg, g)
    spec = GridSpec.parse(cfg["grid"])
    samples = read_samples(_need(d / "samples.bin", g))
    rho = read_density(_need(d / "rho.txt", g))
    grids = {
        "q_empirical": histogram_q(samples, spec, source=f"gen{g}/samples.bin"),
        "q_reconstructed": q_grid(rho, spec, source=f"gen{g}/rho.txt"),
        "wigner": wigner_grid(rho, spec, source=f"gen{g}/rho.txt"),
    }
    for name, grid in grids.items():
        write_grid(d / f"{name}.csv", grid)
    return grids


def cmd_quasiprob(cfg, generations=None):
    gens = generations if generations is not None else existing_generations(cfg)
    if not gens:
        raise MissingArtifact(f"generation 0: missing artifact {gen_dir(cfg, 0) / 'samples.bin'}")
    for g in gens:
        grids = grids_for(cfg, g)
        print(
            f"quasiprob: generation {g}: Q overflow {grids['q_empirical'].overflow:.2e}, "
            f"negativity volume {negativity_volume(grids['wigner']):.4f}"
        )


def oracle_records(cfg):
    """Fit results and success probabilities of the exact breeding chain."""
    rho = crop_to_support(build_state(cfg))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        recs = [dict(fit_cat_amplitude(rho), success=1.0)]
        for out, success in breed_oracle_chain(rho, BreedingConfig(cfg["nbar"], cfg["steps"])):
            recs.append(dict(fit_cat_amplitude(out), success=success))
    return recs


def generation_record(cfg, g, oracle):
    d = gen_dir(cfg, g)
    stats = json.loads(_need(d / "stats.json", g).read_text())
    recon = json.loads(_need(d / "recon.json", g).read_text())
    rho = read_density(_need(d / "rho.txt", g))
    grids = grids_for(cfg, g)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        fit = fit_cat_amplitude(rho)
    if g == 0:
        acceptance, se = 1.0, 0.0
    else:
        acceptance = stats["acceptance_fraction"]
        p = oracle[g]["success"] if g < len(oracle) else float("nan")
        se = math.sqrt(p * (1 - p) / stats["pair_count"]) if stats["pair_count"] else float("nan")
    rec = {
        "generation": g,
        "count": stats["count"],
        "acceptance_fraction": acceptance,
        "fitted_alpha": fit["alpha"],
        "fitted_fidelity": fit["fidelity"],
        "fitted_parity": fit["parity"],
        "mean_photon_number": F.mean_photon_number(rho),
        "wigner_at_origin": wigner_at_origin(rho),
        "negativity_volume": negativity_volume(grids["wigner"]),
        "q_overflow_fraction": grids["q_empirical"].overflow,
        "recon_dim": recon["dim"],
        "recon_iterations": recon["iterations"],
        "recon_converged": recon["converged"],
    }
    if g < len(oracle):
        o = oracle[g]
        rec.update(
            oracle_alpha=o["alpha"],
            oracle_fidelity=o["fidelity"],
            oracle_parity=o["parity"],
            oracle_success=o["success"],
            acceptance_se=se,
            acceptance_within_3se=bool(g == 0 or abs(acceptance - o["success"]) <= 3 * se),
        )
    return rec


def cmd_report(cfg):
    gens = list(range(cfg["steps"] + 1))
    for g in gens:
        for name in ("samples.bin", "stats.json", "rho.txt", "recon.json"):
            _need(gen_dir(cfg, g) / name, g)
    oracle = oracle_records(cfg)
    records = [generation_record(cfg, g, oracle) for g in gens]
    for rec in records:
        for key, val in rec.items():
            if isinstance(val, float) and not math.isfinite(val):
                raise NumericalFailure(f"generation {rec['generation']}: {key} is not finite")
    report = {
        "generations": records,
        "config": {k: cfg[k] for k in OPTIONS},
        "metadata": {
            "versions": {
                "catgrow": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
            "threads": cfg["threads"],
            "wall_times": "timings.json",
        },
    }
    _dump(Path(cfg["out"]) / "report.json", report)
    print(summary(report))
    return report


def summary(report):
    head = f"{'gen':>3} {'count':>9} {'accept':>7} {'alpha':>6} {'fid':>6} {'par':>4} {'<n>':>6} {'W(0)':>7} {'negvol':>7} {'oracle':>6} {'p_succ':>7}"
    lines = [head]
    for r in report["generations"]:
        lines.append(
            f"{r['generation']:>3} {r['count']:>9} {r['acceptance_fraction']:>7.4f} "
            f"{r['fitted_alpha']:>6.3f} {r['fitted_fidelity']:>6.3f} {r['fitted_parity']:>4} "
            f"{r['mean_photon_number']:>6.3f} {r['wigner_at_origin']:>7.4f} {r['negativity_volume']:>7.4f} "
            f"{r.get('oracle_alpha', float('nan')):>6.3f} {r.get('oracle_success', float('nan')):>7.4f}"
        )
    return "\n".join(lines)


def cmd_pipeline(cfg):
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    times = {}
    t0 = time.perf_counter()
    for name, fn in (
        ("simulate", cmd_simulate),
        ("breed", cmd_breed),
        ("reconstruct", cmd_reconstruct),
        ("report", cmd_report),
    ):
        t = time.perf_counter()
        fn(cfg)
        times[name] = time.perf_counter() - t
    times["total"] = time.perf_counter() - t0
    _dump(out / "timings.json", times)
    return json.loads((out / "report.json").read_text())


# ---------------------------------------------------------------- argparse


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    common = _Parser(add_help=False, argument_default=argparse.SUPPRESS)
    for key, (conv, default, text) in OPTIONS.items():
        flag = "--" + key.replace("_", "-")
        if key == "subtract":
            common.add_argument(flag, nargs="?", const=True, type=conv, help=text)
        else:
            common.add_argument(flag, type=conv, help=f"{text} (default {default})")
    common.add_argument("--config", help="key = value file; command-line flags override it")
    parser = _Parser(prog="catgrow", description="Cat-state breeding pipeline on QHD samples.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("simulate", parents=[common], help="build the state and draw Q samples")
    p = sub.add_parser("breed", parents=[common], help="run the growing steps")
    p.add_argument("--input", help="sample file (default OUT/gen0/samples.bin)")
    p = sub.add_parser("reconstruct", parents=[common], help="MaxLik reconstruction")
    p.add_argument("--input", help="single sample file; results go to OUT")
    p.add_argument("--generation", type=int, action="append", help="restrict to these generations")
    p = sub.add_parser("quasiprob", parents=[common], help="Q and Wigner grids per generation")
    p.add_argument("--generation", type=int, action="append")
    sub.add_parser("report", parents=[common], help="metrics, oracle columns and report.json")
    sub.add_parser("pipeline", parents=[common], help="simulate, breed, reconstruct and report")
    return parser


def run(argv):
    args = vars(build_parser().parse_args(argv))
    cfg = resolve_config(args)
    command = args["command"]
    if command == "simulate":
        cmd_simulate(cfg)
    elif command == "breed":
        cmd_breed(cfg, args.get("input"))
    elif command == "reconstruct":
        cmd_reconstruct(cfg, args.get("input"), args.get("generation"))
    elif command == "quasiprob":
        cmd_quasiprob(cfg, args.get("generation"))
    elif command == "report":
        cmd_report(cfg)
    else:
        cmd_pipeline(cfg)


def main(argv=None):
    try:
        run(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        print(f"catgrow: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalFailure as exc:
        print(f"catgrow: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DomainError as exc:
        print(f"catgrow: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, FormatError) as exc:
        print(f"catgrow: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
