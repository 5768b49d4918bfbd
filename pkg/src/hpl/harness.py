"""Monte Carlo experiment runner.

Work is split into fixed units that do not depend on the worker count:
one unit is one (alpha, case, T, set) block for the normality modes and
one block of replications of an (alpha, case) sweep.  Every replication
draws its own counter-based stream, so results are bit-identical for any
number of workers.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .asymptotics import normalized_deviation, zeta_batch
from .errors import ConfigError, DomainError, HplError
from .estimator import LSEOptions, TrigParams, WalkerSet, regression_value, walker_lse
from .hermite import TransformSpec
from .mvn import chi_square_qq, contour_ellipsoid, mahalanobis_squared, run_tests
from .pathgen import derive_seed, gaussian_paths, resolve_method
from .spectral_cov import NoiseModel

log = logging.getLogger(__name__)

MODES = ("ZetaNormality", "LseVarianceSweep", "LseNormality")
TEST_NAMES = ("HZ", "DH", "MardiaSkew", "MardiaKurt")
FULL_SCALE = {"replications_per_set": 1000, "n_sets": 50}
DESK_SCALE = {"replications_per_set": 200, "n_sets": 20}
CONTOUR_C = 3.0


def _case_key(case) -> str:
    if isinstance(case, str):
        return case
    return str(case["name"])


def _case_transform(case) -> TransformSpec:
    if isinstance(case, str):
        return TransformSpec.builtin(case)
    return TransformSpec.from_record({"coefficients": case["coefficients"]})


def _stable_int(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little")


def _alpha_int(alpha: float) -> int:
    return int(round(alpha * 1_000_000))


def replication_seed(seed: int, alpha: float, case: str, T: int, index: int) -> int:
    return derive_seed(seed, _alpha_int(alpha), _stable_int(case), T, index)


@dataclass(frozen=True)
class ExperimentConfig:
    theta: TrigParams = field(default_factory=lambda: TrigParams.single(1.0, 1.0, 0.6, phi_upper=1.0))
    kappa: float = 0.5
    alphas: tuple = (0.85, 1.5, 2.5)
    cases: tuple = ("H1", "H2", "H3", "H4")
    T_values: tuple = (1000, 5000, 10000)
    replications_per_set: int = 200
    n_sets: int = 20
    significance: float = 0.01
    seed: int = 12345
    mode: str = "ZetaNormality"
    method: str = "auto"
    tests: tuple = ("HZ", "DH")
    common_paths: bool = True
    sweep_block: int = 25

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.replications_per_set < 2:
            raise ConfigError("replications_per_set must be >= 2")
        if self.n_sets < 1:
            raise ConfigError("n_sets must be >= 1")
        if not 0.0 < self.significance < 1.0:
            raise ConfigError("significance must lie in (0, 1)")
        Ts = list(self.T_values)
        if not Ts or any(b <= a for a, b in zip(Ts, Ts[1:])):
            raise ConfigError("T_values must be nonempty and strictly increasing")
        if Ts[0] < 16:
            raise ConfigError("T_values must be >= 16")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.sweep_block < 1:
            raise ConfigError("sweep_block must be >= 1")
        bad = [t for t in self.tests if t not in TEST_NAMES]
        if bad:
            raise ConfigError(f"unknown tests {bad}")
        for a in self.alphas:
            if not a > 0:
                raise ConfigError(f"alpha must be positive, got {a}")
        try:
            for c in self.cases:
                _case_transform(c)
            resolve_method(self.method, Ts[0])
        except (HplError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if self.mode != "ZetaNormality" and self.theta.N != 1:
            raise ConfigError("LSE modes support a single harmonic")

    def model(self, alpha: float) -> NoiseModel:
        return NoiseModel.single(alpha, self.kappa)

    def to_record(self) -> dict:
        return {
            "theta": self.theta.to_record(),
            "kappa": self.kappa,
            "alphas": list(self.alphas),
            "cases": list(self.cases),
            "T_values": list(self.T_values),
            "replications_per_set": self.replications_per_set,
            "n_sets": self.n_sets,
            "significance": self.significance,
            "seed": self.seed,
            "mode": self.mode,
            "method": self.method,
            "tests": list(self.tests),
            "common_paths": self.common_paths,
            "sweep_block": self.sweep_block,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "ExperimentConfig":
        """Build from a config mapping.  ``scale: full`` selects 1000 x 50."""
        rec = dict(rec)
        known = set(cls.__dataclass_fields__) | {"scale"}
        unknown = sorted(set(rec) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        scale = rec.pop("scale", "desk")
        if scale not in ("desk", "full"):
            raise ConfigError(f"scale must be 'desk' or 'full', got {scale!r}")
        for k, v in (FULL_SCALE if scale == "full" else DESK_SCALE).items():
            rec.setdefault(k, v)
        kw = {}
        try:
            if "theta" in rec:
                th = rec.pop("theta")
                if isinstance(th, dict) and "harmonics" not in th:
                    th = {"harmonics": [th], "phi_bounds": th.get("phi_bounds", [0.0, 1.0])}
                kw["theta"] = TrigParams.from_record(th)
            for k in ("alphas", "cases", "T_values", "tests"):
                if k in rec:
                    kw[k] = tuple(rec.pop(k))
            for k in ("replications_per_set", "n_sets", "seed", "sweep_block"):
                if k in rec:
                    kw[k] = int(rec.pop(k))
            for k in ("kappa", "significance"):
                if k in rec:
                    kw[k] = float(rec.pop(k))
            kw.update(rec)
            return cls(**kw)
        except ConfigError:
            raise
        except (HplError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid experiment config: {exc}") from exc

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_record(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Single replications and work units
# ---------------------------------------------------------------------------

def _walker(config: ExperimentConfig, T: int) -> WalkerSet:
    return WalkerSet.for_horizon(T, config.theta.phi_lower, config.theta.phi_upper)


def _fit_deviation(config, eps_row, T, opts):
    th = config.theta
    x = regression_value(th, np.arange(1, T + 1)) + eps_row
    est, diag = walker_lse(x, th.N, _walker(config, T), opts)
    return est, diag


def run_replication(config: ExperimentConfig, alpha: float, case, T: int, index: int):
    """One replication: (zeta row of shape (3,), theta_hat or None, converged)."""
    key = _case_key(case)
    seed = replication_seed(config.seed, alpha, key, T, index)
    xi = gaussian_paths(config.model(alpha), T, [seed], config.method)
    eps = _case_transform(case)(xi)
    zeta = zeta_batch(eps, config.theta)[0]
    if config.mode == "ZetaNormality":
        return zeta, None, True
    est, diag = _fit_deviation(config, eps[0], T, LSEOptions())
    return zeta, est, diag.converged


def _normality_unit(config: ExperimentConfig, alpha: float, case, T: int, set_index: int):
    n = config.replications_per_set
    key = _case_key(case)
    first = set_index * n
    seeds = [replication_seed(config.seed, alpha, key, T, first + i) for i in range(n)]
    xi = gaussian_paths(config.model(alpha), T, seeds, config.method)
    eps = _case_transform(case)(xi)
    if config.mode == "ZetaNormality":
        sample = zeta_batch(eps, config.theta)
        failures = 0
    else:
        rows, failures = [], 0
        opts = LSEOptions()
        for row in eps:
            est, diag = _fit_deviation(config, row, T, opts)
            failures += not diag.converged
            rows.append(normalized_deviation(est, config.theta, T))
        sample = np.array(rows)
    results = run_tests(sample, config.tests)
    pvals = [results[t].p_value for t in config.tests]
    return sample, pvals, failures


def _sweep_unit(config: ExperimentConfig, alpha: float, case, block: int, n_total: int):
    key = _case_key(case)
    Ts = list(config.T_values)
    lo = block * config.sweep_block
    idx = range(lo, min(lo + config.sweep_block, n_total))
    model = config.model(alpha)
    transform = _case_transform(case)
    est = np.full((len(idx), len(Ts), 3), np.nan)
    conv = np.zeros((len(idx), len(Ts)), dtype=bool)
    opts = LSEOptions()
    if config.common_paths:
        # nested prefixes of one long path per replication
        seeds = [replication_seed(config.seed, alpha, key, Ts[-1], i) for i in idx]
        eps_long = transform(gaussian_paths(model, Ts[-1], seeds, config.method))
    for j, T in enumerate(Ts):
        if config.common_paths:
            eps = eps_long[:, :T]
        else:
            seeds = [replication_seed(config.seed, alpha, key, T, i) for i in idx]
            eps = transform(gaussian_paths(model, T, seeds, config.method))
        for r, row in enumerate(eps):
            theta_hat, diag = _fit_deviation(config, row, T, opts)
            est[r, j] = theta_hat.to_vector()
            conv[r, j] = diag.converged
    return est, conv


def _run_unit(payload):
    kind, config_rec, args = payload
    config = ExperimentConfig.from_record(config_rec)
    if kind == "normality":
        return _normality_unit(config, *args)
    return _sweep_unit(config, *args)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass
class CellResult:
    key: str
    alpha: float
    case: str
    T: int | None
    data: np.ndarray
    record: dict


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    cells: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    @property
    def fingerprint(self) -> str:
        return self.config.fingerprint()

    def rejection_rate(self, alpha: float, case: str, T: int, test: str) -> float | None:
        cell = self.cells.get(cell_key(alpha, case, T))
        if cell is None:
            return None
        rej = cell.record["rejections"][test]
        return rej / cell.record["n_sets"]

    def variances(self, alpha: float, case: str) -> dict | None:
        cell = self.cells.get(cell_key(alpha, case, None))
        return None if cell is None else cell.record


def cell_key(alpha: float, case: str, T: int | None) -> str:
    return f"a{alpha:g}_{case}_" + ("sweep" if T is None else f"T{T}")


def _normality_record(config, units) -> tuple[np.ndarray, dict]:
    samples = np.stack([u[0] for u in units])
    pvals = np.array([u[1] for u in units])
    rejections = {t: int((pvals[:, k] < config.significance).sum())
                  for k, t in enumerate(config.tests)}
    rec = {
        "n_sets": config.n_sets,
        "rejections": rejections,
        "p_values": {t: pvals[:, k].tolist() for k, t in enumerate(config.tests)},
        "solver_failures": int(sum(u[2] for u in units)),
    }
    return samples, rec


def _sweep_record(config, units) -> tuple[np.ndarray, dict]:
    est = np.concatenate([u[0] for u in units])
    conv = np.concatenate([u[1] for u in units])
    th = config.theta.to_vector()
    rows = []
    for j, T in enumerate(config.T_values):
        ok = conv[:, j]
        e = est[ok, j]
        var = e.var(axis=0, ddof=1) if e.shape[0] > 1 else np.full(3, np.nan)
        bias = (e - th).mean(axis=0) if e.shape[0] else np.full(3, np.nan)
        rows.append({
            "T": T,
            "var_A": float(var[0]),
            "var_B": float(var[1]),
            "var_phi": float(var[2]),
            "var_T_phi": float(var[2] * T * T),
            "bias_A": float(bias[0]),
            "bias_B": float(bias[1]),
            "bias_phi": float(bias[2]),
            "n_used": int(ok.sum()),
            "excluded": int((~ok).sum()),
        })
    return est, {"rows": rows}


def _plan(config: ExperimentConfig):
    """Ordered cells, each with its ordered list of unit payload args."""
    cfg = config.to_record()
    plan = []
    for alpha in config.alphas:
        for case in config.cases:
            key = _case_key(case)
            if config.mode == "LseVarianceSweep":
                n = config.replications_per_set * config.n_sets
                blocks = math.ceil(n / config.sweep_block)
                units = [("sweep", cfg, (alpha, case, b, n)) for b in range(blocks)]
                plan.append((cell_key(alpha, key, None), alpha, key, None, units))
            else:
                for T in config.T_values:
                    units = [("normality", cfg, (alpha, case, T, s)) for s in range(config.n_sets)]
                    plan.append((cell_key(alpha, key, T), alpha, key, T, units))
    return plan


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _versions() -> dict:
    return {"hpl": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _manifest(report: ExperimentReport, files: dict | None = None) -> dict:
    cells = {}
    for key in sorted(report.cells):
        c = report.cells[key]
        cells[key] = {"alpha": c.alpha, "case": c.case, "T": c.T,
                      "raw": f"raw/{key}.npy", **c.record}
    return {
        "format": "hpl-experiment-manifest/1",
        "config": report.config.to_record(),
        "config_fingerprint": report.fingerprint,
        "seed_rule": "derive_seed(seed, round(alpha*1e6), sha256(case)[:8], T, replication)",
        "versions": _versions(),
        "complete": len(cells) == len(_plan(report.config)),
        "cells": cells,
        "files": files or {},
    }


def _save_checkpoint(report: ExperimentReport, out: Path) -> None:
    _atomic_write(out / "manifest.json", json.dumps(_manifest(report), indent=1, sort_keys=True))


def load_manifest(path) -> tuple[ExperimentConfig, dict]:
    path = Path(path)
    try:
        man = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read manifest {path}: {exc}") from exc
    if man.get("format") != "hpl-experiment-manifest/1":
        raise ConfigError(f"{path} is not an experiment manifest")
    return ExperimentConfig.from_record(man["config"]), man


def _restore_cells(report: ExperimentReport, manifest: dict, root: Path) -> None:
    for key, rec in manifest.get("cells", {}).items():
        raw = root / rec["raw"]
        if not raw.exists():
            log.warning("raw file %s missing; cell %s will be recomputed", raw, key)
            continue
        rec = dict(rec)
        alpha, case, T = rec.pop("alpha"), rec.pop("case"), rec.pop("T")
        rec.pop("raw")
        report.cells[key] = CellResult(key, alpha, case, T, np.load(raw), rec)


def run_experiment(config: ExperimentConfig, workers: int = 1, out_dir=None,
                   resume: dict | None = None) -> ExperimentReport:
    """Run every cell of ``config`` not already in ``resume``.

    ``workers = 0`` runs in-process.  With ``out_dir`` set, each finished
    cell is written under ``raw/`` and recorded in ``manifest.json``.
    """
    report = ExperimentReport(config)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        (out / "raw").mkdir(parents=True, exist_ok=True)
    if resume is not None:
        if resume.get("config_fingerprint") != config.fingerprint():
            raise ConfigError("manifest was written for a different config")
        if out is None:
            raise ConfigError("resuming needs the output directory")
        _restore_cells(report, resume, out)
    todo = [p for p in _plan(config) if p[0] not in report.cells]
    t0 = time.perf_counter()

    pending = {}
    results: dict[str, dict[int, object]] = {}

    def finish(entry, units):
        key, alpha, case, T, _ = entry
        if config.mode == "LseVarianceSweep":
            data, rec = _sweep_record(config, units)
        else:
            data, rec = _normality_record(config, units)
        report.cells[key] = CellResult(key, alpha, case, T, data, rec)
        report.timings[key] = time.perf_counter() - t0
        if out is not None:
            np.save(out / "raw" / f"{key}.npy", data)
            _save_checkpoint(report, out)
        log.info("cell %s done", key)

    if workers <= 0:
        for entry in todo:
            finish(entry, [_run_unit(u) for u in entry[4]])
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for entry in todo:
                results[entry[0]] = {}
                for i, u in enumerate(entry[4]):
                    pending[pool.submit(_run_unit, u)] = (entry, i)
            for fut in as_completed(pending):
                entry, i = pending[fut]
                bucket = results[entry[0]]
                bucket[i] = fut.result()
                if len(bucket) == len(entry[4]):
                    finish(entry, [bucket[k] for k in range(len(entry[4]))])
                    del results[entry[0]]
    report.timings["total"] = time.perf_counter() - t0
    return report


def run_table_experiment(config: ExperimentConfig, workers: int = 1, out_dir=None,
                         resume: dict | None = None) -> ExperimentReport:
    if config.mode not in ("ZetaNormality", "LseNormality"):
        raise ConfigError("run_table_experiment needs a normality mode")
    return run_experiment(config, workers, out_dir, resume)


def run_variance_sweep(config: ExperimentConfig, workers: int = 1, out_dir=None,
                       resume: dict | None = None) -> ExperimentReport:
    if config.mode != "LseVarianceSweep":
        raise ConfigError("run_variance_sweep needs mode LseVarianceSweep")
    return run_experiment(config, workers, out_dir, resume)


# ---------------------------------------------------------------------------
# Output files
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def _write_csv(path: Path, header, rows) -> None:
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise OSError(f"{path}: {exc}") from exc


def emit_report(report: ExperimentReport, out_dir, formats=("tables", "plots", "manifest")) -> dict:
    """Write the report files; returns {name: sha256} of everything written.

    Timings go to a separate ``timings.json`` so that every other file is
    bit-identical across reruns.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = report.config
    written = []
    sweep = cfg.mode == "LseVarianceSweep"

    if "tables" in formats:
        if sweep:
            path = out / "variances.csv"
            header = ["alpha", "case", "T", "var_A", "var_B", "var_phi", "var_T_phi", "n_used", "excluded"]
            rows = []
            for alpha in cfg.alphas:
                for case in map(_case_key, cfg.cases):
                    cell = report.cells.get(cell_key(alpha, case, None))
                    if cell is None:
                        continue
                    for r in cell.record["rows"]:
                        rows.append([f"{alpha:g}", case, r["T"], _fmt(r["var_A"]), _fmt(r["var_B"]),
                                     _fmt(r["var_phi"]), _fmt(r["var_T_phi"]), r["n_used"], r["excluded"]])
            _write_csv(path, header, rows)
            written.append(path)
        else:
            path = out / "rejection_rates.csv"
            header = ["alpha", "case", "test"] + [f"T{T}" for T in cfg.T_values]
            rows = []
            for alpha in cfg.alphas:
                for case in map(_case_key, cfg.cases):
                    for test in cfg.tests:
                        vals, any_cell = [], False
                        for T in cfg.T_values:
                            cell = report.cells.get(cell_key(alpha, case, T))
                            if cell is None:
                                vals.append("")
                                continue
                            any_cell = True
                            k, n = cell.record["rejections"][test], cell.record["n_sets"]
                            vals.append(_fmt(k / n))
                        if any_cell:
                            rows.append([f"{alpha:g}", case, test] + vals)
            _write_csv(path, header, rows)
            written.append(path)

    if "plots" in formats and not sweep:
        plots = out / "plots"
        plots.mkdir(exist_ok=True)
        for key in sorted(report.cells):
            sample = report.cells[key].data[0]
            try:
                d2 = mahalanobis_squared(sample)
                qq = chi_square_qq(d2, sample.shape[1])
                xc = sample - sample.mean(axis=0)
                ell = contour_ellipsoid(sample.mean(axis=0), xc.T @ xc / (len(sample) - 1), CONTOUR_C)
            except DomainError as exc:
                log.warning("no plot data for %s: %s", key, exc)
                continue
            p = plots / f"qq_{key}.csv"
            _write_csv(p, ["chi2_quantile", "mahalanobis_sq"], [[_fmt(a), _fmt(b)] for a, b in qq])
            written.append(p)
            p = plots / f"ellipsoid_{key}.csv"
            rows = [[i + 1] + [_fmt(v) for v in ell.mean] + [_fmt(v) for v in ell.directions[:, i]]
                    + [_fmt(ell.half_lengths[i])] for i in range(ell.half_lengths.size)]
            _write_csv(p, ["axis", "mu_A", "mu_B", "mu_phi", "e_A", "e_B", "e_phi", "half_length"], rows)
            written.append(p)
            p = plots / f"scatter_{key}.csv"
            inside = ell.contains(sample)
            _write_csv(p, ["zeta_A", "zeta_B", "zeta_phi", "inside"],
                       [[_fmt(a), _fmt(b), _fmt(c), int(i)] for (a, b, c), i in zip(sample, inside)])
            written.append(p)

    digests = {str(p.relative_to(out)): hashlib.sha256(p.read_bytes()).hexdigest() for p in written}
    if "manifest" in formats:
        (out / "raw").mkdir(exist_ok=True)
        for key, cell in report.cells.items():
            raw = out / "raw" / f"{key}.npy"
            if not raw.exists():
                np.save(raw, cell.data)
        _atomic_write(out / "manifest.json", json.dumps(_manifest(report, digests), indent=1, sort_keys=True))
        _atomic_write(out / "timings.json", json.dumps(report.timings, indent=1, sort_keys=True))
    return digests
