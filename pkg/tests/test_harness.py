import json
import math
from pathlib import Path

import numpy as np
import pytest

from hpl.errors import ConfigError
from hpl.harness import (
    ExperimentConfig,
    ExperimentReport,
    emit_report,
    load_manifest,
    replication_seed,
    run_experiment,
    run_replication,
    run_table_experiment,
    run_variance_sweep,
)

SMALL = dict(alphas=[2.5, 0.85], cases=["H1", "H4"], T_values=[100, 200],
             replications_per_set=30, n_sets=3, seed=99)


def small(**kw):
    return ExperimentConfig.from_record({**SMALL, **kw})


def tree(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*"))
            if p.is_file() and p.name != "timings.json"}


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig.from_record({})
        assert cfg.replications_per_set == 200 and cfg.n_sets == 20
        assert cfg.theta.to_vector().tolist() == [1.0, 1.0, 0.6]
        full = ExperimentConfig.from_record({"scale": "full"})
        assert full.replications_per_set == 1000 and full.n_sets == 50

    def test_round_trip(self):
        cfg = small(mode="LseVarianceSweep")
        assert ExperimentConfig.from_record(cfg.to_record()) == cfg
        assert ExperimentConfig.from_record(cfg.to_record()).fingerprint() == cfg.fingerprint()

    @pytest.mark.parametrize("bad", [
        {"replications_per_set": 1},
        {"significance": 0.0},
        {"significance": 1.0},
        {"T_values": [200, 100]},
        {"T_values": [100, 100]},
        {"mode": "Tables"},
        {"tests": ["KS"]},
        {"cases": ["H7"]},
        {"alphas": [-1.0]},
        {"seed": -1},
        {"method": "fourier"},
        {"scale": "huge"},
        {"colour": "blue"},
        {"theta": {"A": 0.0, "B": 0.0, "phi": 0.6}},
    ])
    def test_invalid(self, bad):
        with pytest.raises(ConfigError):
            small(**bad)

    def test_general_case(self):
        cfg = small(cases=[{"name": "cubic", "coefficients": [3.0, 0.0, 6.0]}])
        assert cfg.cases[0]["name"] == "cubic"


class TestReplication:
    def test_deterministic(self):
        cfg = small(mode="LseNormality")
        a = run_replication(cfg, 2.5, "H1", 200, 4)
        b = run_replication(cfg, 2.5, "H1", 200, 4)
        assert np.array_equal(a[0], b[0]) and a[1] == b[1]

    def test_seeds_distinct(self):
        seeds = {replication_seed(1, a, c, T, i) for a in (0.85, 2.5) for c in ("H1", "H2")
                 for T in (1000, 5000) for i in range(50)}
        assert len(seeds) == 2 * 2 * 2 * 50

    def test_convergence_rate(self):
        cfg = small(mode="LseNormality", T_values=[1000])
        conv = 0
        for i in range(200):
            zeta, est, ok = run_replication(cfg, 2.5, "H1", 1000, i)
            assert np.all(np.isfinite(zeta)) and est is not None
            conv += ok
        assert conv >= 198


class TestTables:
    def test_rates_exact_ratios(self):
        rep = run_table_experiment(small(), workers=0)
        for key, cell in rep.cells.items():
            for t, k in cell.record["rejections"].items():
                assert rep.rejection_rate(cell.alpha, cell.case, cell.T, t) == k / 3
                assert k == sum(p < 0.01 for p in cell.record["p_values"][t])
        assert rep.rejection_rate(9.0, "H1", 100, "HZ") is None

    def test_mode_guard(self):
        with pytest.raises(ConfigError):
            run_table_experiment(small(mode="LseVarianceSweep"))
        with pytest.raises(ConfigError):
            run_variance_sweep(small())

    def test_worker_count_invariance(self, tmp_path):
        cfg = small()
        outs = []
        for w in (0, 1, 2):
            out = tmp_path / f"w{w}"
            emit_report(run_experiment(cfg, workers=w, out_dir=out), out)
            outs.append(tree(out))
        assert outs[0] == outs[1] == outs[2]
        assert "rejection_rates.csv" in outs[0] and "plots/qq_a2.5_H1_T100.csv" in outs[0]

    def test_resume(self, tmp_path):
        cfg = small()
        full = tmp_path / "full"
        emit_report(run_experiment(cfg, workers=0, out_dir=full), full)
        # simulate an interrupted run: keep two finished cells only
        part = tmp_path / "part"
        (part / "raw").mkdir(parents=True)
        man = json.loads((full / "manifest.json").read_text())
        keep = sorted(man["cells"])[:2]
        man["cells"] = {k: man["cells"][k] for k in keep}
        man["complete"] = False
        for k in keep:
            (part / "raw" / f"{k}.npy").write_bytes((full / "raw" / f"{k}.npy").read_bytes())
        (part / "manifest.json").write_text(json.dumps(man))
        config, manifest = load_manifest(part / "manifest.json")
        report = run_experiment(config, workers=0, out_dir=part, resume=manifest)
        assert set(keep) <= set(report.cells)
        emit_report(report, part)
        assert tree(part) == tree(full)

    def test_resume_mismatch(self, tmp_path):
        out = tmp_path / "o"
        run_experiment(small(T_values=[100]), workers=0, out_dir=out)
        _, manifest = load_manifest(out / "manifest.json")
        with pytest.raises(ConfigError):
            run_experiment(small(), workers=0, out_dir=out, resume=manifest)
        (out / "bad.json").write_text("{}")
        with pytest.raises(ConfigError):
            load_manifest(out / "bad.json")

    def test_empty_report(self, tmp_path):
        cfg = small(T_values=[1000, 5000, 10000, 15000, 20000, 30000])
        emit_report(ExperimentReport(cfg), tmp_path)
        lines = (tmp_path / "rejection_rates.csv").read_text().splitlines()
        assert lines == ["alpha,case,test,T1000,T5000,T10000,T15000,T20000,T30000"]
        man = json.loads((tmp_path / "manifest.json").read_text())
        assert man["cells"] == {} and man["complete"] is False

    def test_plot_files(self, tmp_path):
        rep = run_experiment(small(alphas=[2.5], cases=["H1"], T_values=[100]), workers=0)
        digests = emit_report(rep, tmp_path)
        ell = (tmp_path / "plots" / "ellipsoid_a2.5_H1_T100.csv").read_text().splitlines()
        assert ell[0].startswith("axis,mu_A") and len(ell) == 4
        qq = np.loadtxt(tmp_path / "plots" / "qq_a2.5_H1_T100.csv", delimiter=",", skiprows=1)
        assert qq.shape == (30, 2)
        man = json.loads((tmp_path / "manifest.json").read_text())
        assert man["files"] == digests


class TestSweep:
    def test_variance_trend(self):
        cfg = small(mode="LseVarianceSweep", alphas=[2.5], cases=["H1"], T_values=[1000, 5000],
                    replications_per_set=50, n_sets=2)
        rows = run_variance_sweep(cfg, workers=0).variances(2.5, "H1")["rows"]
        for r in rows:
            for k in ("var_A", "var_B", "var_phi"):
                assert math.isfinite(r[k]) and r[k] > 0
        assert rows[1]["var_phi"] < rows[0]["var_phi"]
        assert rows[0]["n_used"] + rows[0]["excluded"] == 100

    def test_standard_error_scaling(self):
        # the standard error of a sample variance shrinks like 1/sqrt(n)
        def se_of_var(n):
            cfg = small(mode="LseVarianceSweep", alphas=[2.5], cases=["H1"], T_values=[200],
                        replications_per_set=n, n_sets=1)
            rep = run_variance_sweep(cfg, workers=0)
            a = rep.cells["a2.5_H1_sweep"].data[:, 0, 0]
            s2 = a.var(ddof=1)
            m4 = np.mean((a - a.mean()) ** 4)
            return math.sqrt((m4 - s2 ** 2 * (n - 3) / (n - 1)) / n)

        ratio = se_of_var(400) / se_of_var(200)
        assert ratio == pytest.approx(1 / math.sqrt(2), rel=0.3)

    def test_common_paths_flag(self):
        base = dict(mode="LseVarianceSweep", alphas=[2.5], cases=["H1"], T_values=[100, 150],
                    replications_per_set=4, n_sets=1)
        a = run_variance_sweep(small(**base), workers=0).cells["a2.5_H1_sweep"].data
        b = run_variance_sweep(small(**base, common_paths=False), workers=0).cells["a2.5_H1_sweep"].data
        assert np.array_equal(a[:, 1], b[:, 1]) and not np.array_equal(a[:, 0], b[:, 0])


CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def test_shipped_configs_parse():
    from hpl.io import load_config
    for f in sorted(CONFIGS.glob("*.yaml")):
        if f.name == "simulate.yaml":
            continue
        ExperimentConfig.from_record(load_config(f))


def test_full_design_launchable():
    from hpl.harness import _plan, _run_unit
    from hpl.io import load_config
    cfg = ExperimentConfig.from_record(load_config(CONFIGS / "table_full.yaml"))
    assert (cfg.replications_per_set, cfg.n_sets) == (1000, 50)
    plan = _plan(cfg)
    assert len(plan) == 5 * 4 * 6
    # one set of 1000 replications at T = 30000 for the most dependent model
    entry = next(p for p in plan if p[1] == 0.25 and p[2] == "H4" and p[3] == 30000)
    sample, pvals, failures = _run_unit(entry[4][0])
    assert sample.shape == (1000, 3) and len(pvals) == 2 and failures == 0
