import json
import math
import subprocess
import sys

import numpy as np
import pytest

from racsim.harness import (CSV_COLUMNS, REFERENCE_COLUMNS, ConfigError,
                            SimConfig, SweepSpec, calibrate_sat, fmt,
                            reference_values, run_replications, run_sweep)
from racsim.policies import PolicyConfig, PolicyKind

SMALL = dict(m=15, slots=8000, sigma2=2.0, seed=99, replications=3)


def small_cfg(**over):
    base = dict(SMALL)
    base.update(over)
    base.setdefault("policy", PolicyConfig(PolicyKind.EBT))
    return SimConfig(**base)


class TestConfig:
    def test_round_trip_identity(self):
        cfg = small_cfg(sigma2=2.7182818284590451, epsilon=0.30000000000000004,
                        policy=PolicyConfig(PolicyKind.EBT, beta=36.866509049351844))
        assert SimConfig.from_json(cfg.to_json()) == cfg

    def test_round_trip_all_policies(self):
        for pol in (PolicyConfig(PolicyKind.SAT, gamma=1234),
                    PolicyConfig(PolicyKind.STATIONARY, p=0.002),
                    PolicyConfig(PolicyKind.MW), PolicyConfig(PolicyKind.GREEDY),
                    PolicyConfig(PolicyKind.PSEUDO_BAYES)):
            cfg = small_cfg(policy=pol)
            assert SimConfig.from_json(cfg.to_json()) == cfg

    @pytest.mark.parametrize("field,value", [
        ("m", 0), ("slots", 0), ("sigma2", 0.0), ("sigma2", -1.0),
        ("epsilon", 1.0), ("epsilon", -0.2), ("replications", 0),
        ("burn_in", -1), ("seed", -1), ("seed", 2 ** 64),
    ])
    def test_validation_rejects(self, field, value):
        cfg = small_cfg()
        with pytest.raises(ConfigError, match=field.split("_")[0]):
            SimConfig.from_dict({**cfg.to_dict(), field: value})

    def test_sweep_spec_round_trip(self):
        spec = SweepSpec(base=small_cfg(), axis="sigma2", values=(1.0, 2.0),
                         policies=(PolicyConfig(PolicyKind.EBT),
                                   PolicyConfig(PolicyKind.MW)))
        back = SweepSpec.from_dict(json.loads(json.dumps(spec.to_dict())))
        assert back == spec

    def test_sweep_spec_validation(self):
        with pytest.raises(ConfigError):
            SweepSpec(base=small_cfg(), axis="bogus", values=(1,),
                      policies=(PolicyConfig(PolicyKind.EBT),)).validate()
        with pytest.raises(ConfigError):
            SweepSpec(base=small_cfg(), axis="m", values=(),
                      policies=(PolicyConfig(PolicyKind.EBT),)).validate()


class TestFormatting:
    def test_fmt_round_trips_doubles(self):
        for x in (1 / 3, math.e / 6, 0.1 + 0.2, 1e-300, 123456.789):
            assert float(fmt(x)) == x

    def test_fmt_ints_and_nan(self):
        assert fmt(42) == "42"
        assert fmt(float("nan")) == "nan"
        assert fmt(None) == "nan"

    def test_reference_values(self):
        refs = reference_values(3.0, 0.5)
        assert refs[0] == pytest.approx(math.e / 2 * 3)
        assert refs[3] == pytest.approx(math.e)  # e/(6 * 0.5) * 3
        assert refs[5] == pytest.approx(2.64)


class TestReplications:
    def test_existing_rows_stable_when_extended(self):
        cfg3 = small_cfg()
        cfg5 = small_cfg(replications=5)
        outs3 = run_replications(cfg3)
        outs5 = run_replications(cfg5)
        for a, b in zip(outs3, outs5):
            assert a.report.naee == b.report.naee
            assert a.tx_hash == b.tx_hash

    def test_replications_differ(self):
        outs = run_replications(small_cfg())
        naees = [o.report.naee for o in outs]
        assert len(set(naees)) == len(naees)


class TestSweep:
    def make_spec(self):
        return SweepSpec(base=small_cfg(replications=2), axis="sigma2",
                         values=(1.0, 2.0),
                         policies=(PolicyConfig(PolicyKind.EBT),
                                   PolicyConfig(PolicyKind.MW)))

    def test_csv_structure(self, tmp_path):
        path = run_sweep(self.make_spec(), tmp_path / "s.csv")
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS + REFERENCE_COLUMNS)
        #  2 policies x 2 values x (2 reps + mean + sem)
        assert len(lines) == 1 + 2 * 2 * 4
        meta = json.loads((tmp_path / "s.csv.meta.json").read_text())
        assert meta["spec"]["axis"] == "sigma2"
        assert "git_revision" in meta and "wall_time_s" in meta

    def test_byte_identical_reruns(self, tmp_path):
        a = run_sweep(self.make_spec(), tmp_path / "a.csv").read_bytes()
        b = run_sweep(self.make_spec(), tmp_path / "b.csv").read_bytes()
        assert a == b

    def test_worker_pool_matches_serial(self, tmp_path):
        serial = run_sweep(self.make_spec(), tmp_path / "s1.csv", threads=1)
        pooled = run_sweep(self.make_spec(), tmp_path / "s2.csv", threads=2)
        assert serial.read_bytes() == pooled.read_bytes()

    def test_aggregate_mean_matches_rows(self, tmp_path):
        path = run_sweep(self.make_spec(), tmp_path / "s.csv")
        rows = [line.split(",") for line in path.read_text().splitlines()[1:]]
        cols = CSV_COLUMNS + REFERENCE_COLUMNS
        naee_i = cols.index("naee")
        rep_i = cols.index("replication")
        group = [r for r in rows if r[0] == "ebt" and r[3] == "1"]
        reps = [float(r[naee_i]) for r in group if r[rep_i] not in ("mean", "sem")]
        mean = [float(r[naee_i]) for r in group if r[rep_i] == "mean"][0]
        assert mean == pytest.approx(np.mean(reps), rel=1e-15)

    def test_unwritable_output(self):
        with pytest.raises(IOError):
            run_sweep(self.make_spec(), "/proc/definitely/not/writable.csv")


class TestCalibration:
    def test_deterministic(self):
        g1 = calibrate_sat(60, 0.0, seed=5, pilot_slots=30_000)
        g2 = calibrate_sat(60, 0.0, seed=5, pilot_slots=30_000)
        assert g1 == g2
        assert 60 <= g1 <= 180

    def test_erasure_scales_range(self):
        g0 = calibrate_sat(60, 0.0, seed=5, pilot_slots=30_000)
        g5 = calibrate_sat(60, 0.5, seed=5, pilot_slots=30_000)
        assert g5 > g0


def run_cli(*args):
    return subprocess.run([sys.executable, "-m", "racsim.cli", *args],
                          capture_output=True, text=True)


class TestCli:
    def test_run_stdout_deterministic(self):
        args = ["run", "--m", "10", "--slots", "4000", "--sigma2", "1.5",
                "--policy", "ebt", "--seed", "3", "--replications", "2",
                "--threads", "1"]
        a, b = run_cli(*args), run_cli(*args)
        assert a.returncode == 0
        assert a.stdout == b.stdout
        assert a.stdout.startswith(",".join(CSV_COLUMNS[:3]))

    def test_config_error_exit_code(self):
        res = run_cli("run", "--m", "10", "--slots", "100", "--sigma2", "-1")
        assert res.returncode == 1
        assert "config error" in res.stderr

    def test_io_error_exit_code(self, tmp_path):
        spec = {"base": small_cfg(replications=1).to_dict(), "axis": "sigma2",
                "values": [1.0], "policies": [{"kind": "mw"}]}
        p = tmp_path / "spec.json"
        p.write_text(json.dumps(spec))
        res = run_cli("sweep", "--spec", str(p),
                      "--output", "/proc/not/writable.csv")
        assert res.returncode == 3

    def test_oracle_cap_exit_code(self):
        res = run_cli("oracle", "walk", "--beta", "1e9", "--paths", "5",
                      "--max-steps", "1000")
        assert res.returncode == 2
        assert "capped" in res.stderr
        assert "capped_fraction" in res.stdout.splitlines()[0]

    def test_oracle_brownian_table(self):
        res = run_cli("oracle", "brownian", "--a", "1", "--dt", "1e-3",
                      "--paths", "500", "--seed", "2")
        assert res.returncode == 0
        header, row = res.stdout.splitlines()[:2]
        cells = dict(zip(header.split(","), row.split(",")))
        assert float(cells["e_j"]) == pytest.approx(1.0, rel=0.2)

    def test_calibrate_sat_prints_gamma(self):
        res = run_cli("calibrate-sat", "--m", "40", "--pilot-slots", "20000")
        assert res.returncode == 0
        gamma = int(res.stdout.strip())
        assert 40 <= gamma <= 120

    def test_flag_overrides_config_file(self, tmp_path):
        cfg = small_cfg(replications=1)
        p = tmp_path / "cfg.json"
        p.write_text(cfg.to_json())
        res = run_cli("run", "--config", str(p), "--sigma2", "3.0")
        assert res.returncode == 0
        row = res.stdout.splitlines()[1].split(",")
        assert row[CSV_COLUMNS.index("sigma2")] == "3"

    def test_outdir_env(self, tmp_path, monkeypatch):
        import os
        env = dict(os.environ, RACSIM_OUTDIR=str(tmp_path))
        res = subprocess.run([sys.executable, "-m", "racsim.cli", "run",
                              "--m", "8", "--slots", "1000", "--policy", "mw",
                              "--replications", "1", "--output", "out.csv"],
                             capture_output=True, text=True, env=env)
        assert res.returncode == 0
        assert (tmp_path / "out.csv").exists()
        assert (tmp_path / "out.csv.meta.json").exists()
