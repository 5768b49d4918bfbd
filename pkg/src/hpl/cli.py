"""Command line entry point: ``hpl simulate|estimate|mvn-test|gamma|experiment``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, HplError
from .estimator import PHI_MAX, LSEOptions, TrigParams, WalkerSet, walker_lse
from .hermite import TransformSpec
from .io import load_config, read_path_binary, read_path_csv, write_path_binary, write_path_csv
from .spectral_cov import NoiseModel

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

log = logging.getLogger("hpl")


def _model_from(cfg: dict) -> NoiseModel:
    if "components" in cfg:
        return NoiseModel.from_record(cfg["components"])
    if "alpha" not in cfg:
        raise ConfigError("config needs 'alpha' (and optionally 'kappa') or 'components'")
    return NoiseModel.single(float(cfg["alpha"]), float(cfg.get("kappa", 0.5)))


def _theta_from(rec) -> TrigParams:
    if isinstance(rec, dict) and "harmonics" not in rec:
        bounds = rec.get("phi_bounds", [0.0, PHI_MAX])
        rec = {"harmonics": [rec], "phi_bounds": bounds}
    return TrigParams.from_record(rec)


def _config(args) -> dict:
    cfg = load_config(args.config) if args.config else {}
    if args.seed is not None:
        cfg["seed"] = args.seed
    return cfg


def _out_dir(args, default=".") -> Path:
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump(obj, dest: Path | None) -> None:
    text = json.dumps(obj, indent=1, sort_keys=True)
    if dest is None:
        print(text)
    else:
        dest.write_text(text + "\n")


def cmd_simulate(args) -> int:
    from .pathgen import gaussian_path, synthesize_observations
    from .pathgen import derive_seed

    cfg = _config(args)
    try:
        model = _model_from(cfg)
        T = int(cfg["T"])
        n_paths = int(cfg.get("n_paths", 1))
        method = cfg.get("method", "auto")
        fmt = cfg.get("format", "csv")
        seed = int(cfg.get("seed", 0))
        transform = TransformSpec.from_record(cfg["case"]) if "case" in cfg else None
        theta = _theta_from(cfg["theta"]) if "theta" in cfg else None
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad simulate config: {exc}") from exc
    if fmt not in ("csv", "binary"):
        raise ConfigError("format must be 'csv' or 'binary'")
    if theta is not None and transform is None:
        transform = TransformSpec.builtin("H1")
    out = _out_dir(args)
    files = []
    for i in range(n_paths):
        s = derive_seed(seed, i)
        if theta is not None:
            path = synthesize_observations(theta, model, transform, T, s, method)
        else:
            path = gaussian_path(model, T, s, method)
            if transform is not None:
                path = path.with_values(transform(path.values))
        name = f"path_{i:04d}." + ("csv" if fmt == "csv" else "hpl")
        (write_path_csv if fmt == "csv" else write_path_binary)(path, out / name)
        files.append({"file": name, "seed": s, "method": path.method.name})
    manifest = {"command": "simulate", "config": cfg, "model": model.to_record(),
                "model_fingerprint": model.fingerprint(), "files": files, "version": __version__}
    _dump(manifest, out / "simulate_manifest.json")
    return EXIT_OK


def _read_series(src: str) -> np.ndarray:
    p = Path(src)
    if not p.exists():
        raise ConfigError(f"input file {src} not found")
    with open(p, "rb") as fh:
        head = fh.read(4)
    path = read_path_binary(p) if head == b"HPL1" else read_path_csv(p)
    return path.values


def cmd_estimate(args) -> int:
    cfg = _config(args)
    src = args.input or cfg.get("input")
    if not src:
        raise ConfigError("estimate needs an input path (--input or 'input' in config)")
    try:
        N = int(args.n_harmonics or cfg.get("N", 1))
        bounds = args.phi_bounds.split(",") if args.phi_bounds else cfg.get("phi_bounds", [0.0, PHI_MAX])
        lo, hi = (float(b) for b in bounds)
        opts = LSEOptions(**cfg.get("options", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad estimate config: {exc}") from exc
    x = _read_series(src)
    walker = WalkerSet.for_horizon(x.size, float(lo), float(hi))
    theta, diag = walker_lse(x, N, walker, opts)
    rec = {"command": "estimate", "input": str(src), "T": int(x.size), "estimate": theta.to_record(),
           "diagnostics": diag.to_record()}
    _dump(rec, Path(args.out) if args.out else None)
    if not diag.converged:
        log.warning("solver hit the iteration limit")
    return EXIT_OK


def cmd_mvn_test(args) -> int:
    from .mvn import chi_square_qq, mahalanobis_squared, run_tests

    cfg = _config(args)
    src = args.input or cfg.get("input")
    if not src:
        raise ConfigError("mvn-test needs an input CSV (--input or 'input' in config)")
    names = {"hz": ["HZ"], "dh": ["DH"], "mardia": ["MardiaSkew", "MardiaKurt"]}
    wanted = []
    for t in (args.tests or cfg.get("tests", "hz,dh,mardia")).split(","):
        t = t.strip().lower()
        if t not in names:
            raise ConfigError(f"unknown test {t!r}; choose from hz, dh, mardia")
        wanted += names[t]
    try:
        data = np.loadtxt(src, delimiter=",", ndmin=2)
    except (OSError, ValueError):
        try:
            data = np.loadtxt(src, delimiter=",", ndmin=2, skiprows=1)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read {src}: {exc}") from exc
    results = run_tests(data, tuple(wanted))
    _dump({"command": "mvn-test", "input": str(src), "results": [r.to_record() for r in results.values()]},
          Path(args.out) if args.out else None)
    if args.qq:
        qq = chi_square_qq(mahalanobis_squared(data), data.shape[1])
        np.savetxt(args.qq, qq, delimiter=",", header="chi2_quantile,mahalanobis_sq", comments="")
    return EXIT_OK


def cmd_gamma(args) -> int:
    from .asymptotics import gamma_matrix

    cfg = _config(args)
    try:
        model = _model_from(cfg)
        theta = _theta_from(cfg.get("theta", {"A": 1.0, "B": 1.0, "phi": 0.6}))
        transform = TransformSpec.from_record(cfg.get("case", "H1"))
        kw = {k: cfg[k] for k in ("j_max", "truncation", "grid_step", "form") if k in cfg}
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad gamma config: {exc}") from exc
    if kw.get("form", "corrected") not in ("corrected", "printed"):
        raise ConfigError("form must be 'corrected' or 'printed'")
    g = gamma_matrix(theta, model, transform, **kw)
    _dump({"command": "gamma", "model": model.to_record(), "theta": theta.to_record(), **g.to_record()},
          Path(args.out) if args.out else None)
    return EXIT_OK


def cmd_experiment(args) -> int:
    from .harness import ExperimentConfig, emit_report, load_manifest, run_experiment

    resume = None
    if args.resume:
        config, resume = load_manifest(args.resume)
        out = Path(args.out) if args.out else Path(args.resume).parent
    else:
        if not args.config:
            raise ConfigError("experiment needs --config or --resume")
        config = ExperimentConfig.from_record(_config(args))
        out = Path(args.out or "experiment_out")
    out.mkdir(parents=True, exist_ok=True)
    report = run_experiment(config, workers=args.workers, out_dir=out, resume=resume)
    emit_report(report, out)
    print(json.dumps({"out": str(out), "cells": len(report.cells),
                      "fingerprint": report.fingerprint}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hpl", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="YAML or JSON config file")
        sp.add_argument("--seed", type=int, help="master seed (overrides config)")
        sp.add_argument("--workers", type=int, default=1, help="worker processes (0 = in-process)")
        sp.add_argument("--out", help="output file or directory")
        sp.add_argument("--resume", help="experiment manifest to resume from")
        return sp

    common(sub.add_parser("simulate", help="generate Gaussian or subordinated noise paths"))
    sp = common(sub.add_parser("estimate", help="Walker LSE on a path file"))
    sp.add_argument("--input", help="path file (CSV or HPL1 binary)")
    sp.add_argument("--n-harmonics", type=int, help="number of harmonics N")
    sp.add_argument("--phi-bounds", help="frequency bounds lo,hi")
    sp = common(sub.add_parser("mvn-test", help="normality battery on an n x d CSV"))
    sp.add_argument("--input", help="n x d CSV")
    sp.add_argument("--tests", help="comma list of hz, dh, mardia")
    sp.add_argument("--qq", help="write chi-square Q-Q pairs to this CSV")
    common(sub.add_parser("gamma", help="limiting covariance matrix"))
    common(sub.add_parser("experiment", help="Monte Carlo experiment"))
    return p


COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "mvn-test": cmd_mvn_test,
            "gamma": cmd_gamma, "experiment": cmd_experiment}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (HplError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
