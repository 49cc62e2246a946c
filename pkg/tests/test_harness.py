import csv
import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hrfusion import cli
from hrfusion.errors import ConfigError, LengthMismatch
from hrfusion.harness import (
    ExperimentSpec,
    MseRow,
    MseTable,
    dump_iteration_trace,
    dump_spectra,
    mse,
    parse_snr_grid,
    run_experiment,
    synthesize_trial,
)


def small_spec(tmp_path=None, **kw):
    base = dict(scenario=1, num_users=1, num_antennas=5, num_targets=1, snr_grid_db=(10.0,), trials=4,
                include_crb=True, master_seed=11, output_dir=None if tmp_path is None else str(tmp_path))
    base.update(kw)
    return ExperimentSpec(**base)


# mse


def test_mse_perfect_is_zero():
    assert mse([[0.1, 0.2], [0.1, 0.2]], [0.1, 0.2]) == 0.0


def test_mse_single_error():
    assert mse([[0.1]], [0.0]) == pytest.approx(0.01)


def test_mse_sorted_pairing():
    truth = np.deg2rad([0, 30])
    assert mse([np.deg2rad([30, 0])], truth) == 0.0


def test_mse_length_mismatch():
    with pytest.raises(LengthMismatch):
        mse([[0.1, 0.2]], [0.1])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1.5, 1.5), min_size=1, max_size=5), st.randoms(use_true_random=False))
def test_mse_permutation_invariance(est, rnd):
    truth = sorted(rnd.uniform(-1.5, 1.5) for _ in est)
    shuffled = list(est)
    rnd.shuffle(shuffled)
    assert mse([shuffled], truth) == mse([est], truth)


# spec and parsing


def test_spec_rejects_zero_trials():
    with pytest.raises(ConfigError):
        small_spec(trials=0)


@pytest.mark.parametrize("kw", [dict(snr_grid_db=()), dict(algorithms=()), dict(algorithms=("music",)),
                                dict(master_seed=-1), dict(num_users=3), dict(num_targets=5)])
def test_spec_validation(kw):
    with pytest.raises(ConfigError):
        small_spec(**kw)


def test_parse_snr_grid():
    assert parse_snr_grid("-20:2:10") == tuple(float(x) for x in range(-20, 11, 2))
    assert parse_snr_grid("0, 5") == (0.0, 5.0)
    assert parse_snr_grid("7") == (7.0,)
    for bad in ("a:b:c", "0:0:5", "5:1:0", "1:2"):
        with pytest.raises(ConfigError):
            parse_snr_grid(bad)


def test_spec_dict_round_trip():
    spec = small_spec(target_angles_deg=(10.0,))
    assert ExperimentSpec.from_dict(spec.to_dict()) == spec
    with pytest.raises(ConfigError):
        ExperimentSpec.from_dict({**spec.to_dict(), "bogus": 1})


def test_naive_signal_dim_clamped():
    assert small_spec(num_users=16, num_targets=3).naive_signal_dim == 4
    assert small_spec(num_users=1, num_targets=1, num_antennas=8).naive_signal_dim == 2


# run_experiment


def test_run_experiment_table_and_files(tmp_path):
    spec = small_spec(tmp_path, snr_grid_db=(0.0, 10.0))
    table = run_experiment(spec)
    assert [(r.algorithm, r.snr_db) for r in table.rows] == [
        (a, s) for s in (0.0, 10.0) for a in ("fml", "fml-prior", "fused", "naive")
    ]
    for row in table.rows:
        assert row.mse_rad2 >= 0 and row.trials_used + 0 <= spec.trials
        assert math.isfinite(row.crb_rad2) and row.crb_rad2 > 0
    with open(tmp_path / "results.csv") as fh:
        assert next(csv.reader(fh)) == ["algorithm", "snr_db", "mse_rad2", "crb_rad2", "trials_used", "failures"]
    echo = json.loads((tmp_path / "spec.json").read_text())
    assert echo["experiment"]["trials"] == 4 and len(echo["bands"]) == 2


def test_csv_round_trip(tmp_path):
    table = run_experiment(small_spec(tmp_path, include_crb=False))
    again = MseTable.read_csv(tmp_path / "results.csv")
    assert len(again.rows) == len(table.rows)
    for a, b in zip(table.rows, again.rows):
        assert (a.algorithm, a.snr_db, a.mse_rad2, a.trials_used, a.failures) == \
               (b.algorithm, b.snr_db, b.mse_rad2, b.trials_used, b.failures)
        assert math.isnan(a.crb_rad2) and math.isnan(b.crb_rad2)


def test_determinism_across_worker_counts(tmp_path):
    one = tmp_path / "one"
    two = tmp_path / "two"
    run_experiment(small_spec(one, trials=6, workers=1))
    run_experiment(small_spec(two, trials=6, workers=2))
    assert (one / "results.csv").read_bytes() == (two / "results.csv").read_bytes()


def test_seed_changes_results():
    a = run_experiment(small_spec(algorithms=("fml",), master_seed=1))
    b = run_experiment(small_spec(algorithms=("fml",), master_seed=2))
    assert a.rows[0].mse_rad2 != b.rows[0].mse_rad2


def test_common_random_numbers_across_snr():
    spec = small_spec()
    _, lo = synthesize_trial(spec, 0.0, 3)
    _, hi = synthesize_trial(spec, 10.0, 3)
    np.testing.assert_allclose(hi[1].sources, np.sqrt(10) * lo[1].sources)


def test_failed_trials_are_counted(tmp_path, monkeypatch):
    from hrfusion import harness
    from hrfusion.errors import AllPointsDegenerate

    real = harness.run_algorithm
    calls = {"n": 0}

    def flaky(name, *args, **kwargs):
        if name == "fused":
            calls["n"] += 1
            if calls["n"] % 2:
                raise AllPointsDegenerate("injected")
        return real(name, *args, **kwargs)

    monkeypatch.setattr(harness, "run_algorithm", flaky)
    table = run_experiment(small_spec(algorithms=("fml", "fused"), trials=4))
    fused = table.get("fused", 10.0)
    assert fused.trials_used == 2 and fused.failures == 2
    assert table.get("fml", 10.0).trials_used == 4


def test_nonconverged_trials_keep_estimates():
    table = run_experiment(small_spec(algorithms=("fml",), max_iters=1, snr_grid_db=(-10.0,), num_users=2))
    row = table.rows[0]
    assert row.trials_used == 4 and row.failures >= 1


def test_mse_row_validation():
    with pytest.raises(ValueError):
        MseRow("fml", 0.0, -1.0, 0.0, 1, 0)


# dumps


def test_dump_spectra_noiseless_peaks(tmp_path):
    spec = ExperimentSpec(scenario=2, num_users=2, num_antennas=6, num_targets=3, trials=1,
                          algorithms=("fused",), output_dir=str(tmp_path))
    spec = ExperimentSpec.from_dict({**spec.to_dict(), "noise_power": 0.0})
    dump = dump_spectra(spec, 10.0, trials=1)
    names = sorted(os.listdir(tmp_path))
    assert names == ["g_spectrum_1.csv", "g_spectrum_2.csv", "h_spectrum.csv", "music_spectrum.csv"]
    from hrfusion.harness import read_spectrum
    from hrfusion.search import local_maxima

    theta, value_db = read_spectrum(tmp_path / "h_spectrum.csv")
    np.testing.assert_allclose(value_db, dump.db(dump.h))
    top = local_maxima(value_db)
    top = np.sort(theta[top[np.argsort(value_db[top])[::-1][:3]]])
    np.testing.assert_allclose(top, [0, 30, 60], atol=0.5)


def test_dump_iteration_trace(tmp_path):
    spec = small_spec(tmp_path, num_users=2, trials=3, max_iters=6, algorithms=("fml", "fml-prior", "fused", "naive"))
    trace = dump_iteration_trace(spec, 0.0)
    assert set(trace.targets) == {"fml", "fml-prior", "fused"}
    assert trace.targets["fml"].shape == (6, 1)
    scene, _ = spec.scenario_at(0.0)
    np.testing.assert_allclose(trace.users["fml-prior"], np.rad2deg([scene.user_angles] * 6))
    with open(tmp_path / "iteration_trace.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["algorithm", "iteration", "angle_index", "estimate_deg"]
    assert len(rows) == 3 * 6


def test_noiseless_trace_constant():
    spec = ExperimentSpec.from_dict({**small_spec(num_users=2, trials=2, max_iters=5).to_dict(), "noise_power": 0.0})
    trace = dump_iteration_trace(spec, 0.0)
    for name in ("fml", "fml-prior"):
        arr = trace.targets[name]
        np.testing.assert_allclose(arr, np.repeat(arr[:1], len(arr), axis=0), atol=1e-3)


# CLI


def test_cli_end_to_end(tmp_path, capsys):
    out = tmp_path / "run"
    code = cli.main(["--scenario", "1", "--users", "1", "--antennas", "5", "--targets", "0", "--snr", "0:10:10",
                     "--trials", "2", "--algos", "fml,naive", "--crb", "--seed", "3", "--out", str(out),
                     "--dump-trace", "--max-iters", "5", "--naive-include-dl", "false"])
    assert code == 0
    table = MseTable.read_csv(out / "results.csv")
    assert [(r.algorithm, r.snr_db) for r in table.rows] == [("fml", 0.0), ("naive", 0.0), ("fml", 10.0), ("naive", 10.0)]
    echo = json.loads((out / "spec.json").read_text())
    assert echo["experiment"]["naive_include_dl"] is False
    assert (out / "iteration_trace.csv").exists()


def test_cli_config_file_overridden_by_flags(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"users": 1, "trials": 2, "algos": ["fml"], "snr": [5], "out": str(tmp_path / "a"),
                               "max-iters": 4}))
    assert cli.main(["--config", str(cfg), "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "b" / "results.csv").exists() and not (tmp_path / "a").exists()
    echo = json.loads((tmp_path / "b" / "spec.json").read_text())["experiment"]
    assert echo["max_iters"] == 4 and echo["snr_grid_db"] == [5.0]


@pytest.mark.parametrize("argv", [["--trials", "0"], ["--scenario", "3"], ["--users", "3"], ["--algos", "x"],
                                  ["--snr", "a:b"], ["--naive-include-dl", "maybe"], ["--nope"]])
def test_cli_config_errors_exit_2(argv, tmp_path):
    assert cli.main(argv + ["--out", str(tmp_path)]) == 2


def test_cli_missing_config_exit_2(tmp_path):
    assert cli.main(["--config", str(tmp_path / "missing.json")]) == 2


def test_cli_runtime_failure_exit_1(tmp_path, monkeypatch):
    from hrfusion import cli as cli_mod

    def boom(spec):
        raise RuntimeError("disk on fire")

    monkeypatch.setattr(cli_mod, "run_experiment", boom)
    assert cli_mod.main(["--trials", "1", "--out", str(tmp_path)]) == 1


def test_cli_plots(tmp_path):
    out = tmp_path / "p"
    code = cli.main(["--users", "1", "--trials", "1", "--snr", "10", "--algos", "fused,naive", "--out", str(out),
                     "--dump-spectra", "--plots", "--crb"])
    assert code == 0
    assert {"results.png", "spectra.png"} <= set(os.listdir(out))


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "hrfusion", "--trials", "0", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    assert "configuration error" in proc.stderr
