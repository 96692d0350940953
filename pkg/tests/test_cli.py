import subprocess
import sys

import numpy as np
import pytest

from dpinar import io as dio
from dpinar.cli import EXIT_DATA, main, rate_schedule
from dpinar.config import load

CFG = """seed = 5
priors.a_alpha = 1.0
priors.b_alpha = 1.0
priors.a_tau = 0.45
priors.b_tau = 0.01
priors.a_g0 = 1.7779
priors.b_g0 = 0.2
sampler.n_iterations = 300
sampler.burn_in = 100
sampler.thinning = 2
"""


@pytest.fixture
def workspace(tmp_path):
    (tmp_path / "run.cfg").write_text(CFG)
    assert main(["simulate", "--length", "40", "--alpha", "0.3", "--rates", "3,12",
                 "--block", "10", "--seed", "1", "--out", str(tmp_path / "sim.csv")]) == 0
    return tmp_path


def test_rate_schedule_blocks():
    np.testing.assert_array_equal(rate_schedule(7, (1.0, 2.0), 2), [1, 1, 2, 2, 1, 1])
    np.testing.assert_array_equal(rate_schedule(7, (1.0, 2.0), 0), [1, 1, 1, 2, 2, 2])
    np.testing.assert_array_equal(rate_schedule(4, (5.0,), 0), [5, 5, 5])


def test_simulate_writes_ingestible_series(workspace):
    s = dio.ingest(workspace / "sim.csv")
    assert s.T == 40


def test_fit_forecast_evaluate_outputs(workspace, capsys):
    args = ["--input", str(workspace / "sim.csv"), "--config", str(workspace / "run.cfg")]
    assert main(["fit", *args, "--out", str(workspace / "fit")]) == 0
    draws = dio.read_draws(workspace / "fit" / "draws_dp.csv")
    assert len(draws) == 100
    assert main(["forecast", *args, "--horizon", "2", "--draws",
                 str(workspace / "fit" / "draws_dp.csv"), "--out", str(workspace / "fc")]) == 0
    fc = dio.read_forecast(workspace / "fc" / "forecast_dp_h2.csv")
    assert fc.pmf.sum() + fc.tail_mass == pytest.approx(1.0, abs=1e-6)
    assert main(["evaluate", *args, "--holdout", "4", "--model", "both",
                 "--out", str(workspace / "ev")]) == 0
    for name in ("report_dp_h1.csv", "report_inar1_h1.csv", "comparison_h1.csv"):
        lines = (workspace / "ev" / name).read_text().splitlines()
        assert lines[0].startswith("# dpinar ")
    reports = dio.read_report(workspace / "ev" / "report_dp_h1.csv")
    assert [r.target for r in reports[0].records] == [37, 38, 39, 40]
    assert "MAD=" in capsys.readouterr().out


def test_comparison_appears_after_second_model(workspace):
    args = ["--input", str(workspace / "sim.csv"), "--config", str(workspace / "run.cfg"),
            "--holdout", "3", "--out", str(workspace / "ev")]
    assert main(["evaluate", *args, "--model", "dp"]) == 0
    assert not (workspace / "ev" / "comparison_h1.csv").exists()
    assert main(["evaluate", *args, "--model", "inar1"]) == 0
    assert (workspace / "ev" / "comparison_h1.csv").exists()


def _run_all(root, out):
    args = ["--input", str(root / "sim.csv"), "--config", str(root / "run.cfg")]
    assert main(["simulate", "--length", "30", "--seed", "7", "--rates", "2,9",
                 "--out", str(out / "sim.csv")]) == 0
    assert main(["fit", *args, "--out", str(out)]) == 0
    assert main(["forecast", *args, "--horizon", "3", "--out", str(out)]) == 0
    assert main(["evaluate", *args, "--holdout", "3", "--model", "both", "--out", str(out)]) == 0
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


def test_repeated_runs_are_byte_identical(workspace):
    first = _run_all(workspace, workspace / "one")
    second = _run_all(workspace, workspace / "two")
    assert first == second
    assert len(first) >= 6


def test_seed_flag_changes_output(workspace):
    args = ["fit", "--input", str(workspace / "sim.csv"), "--config", str(workspace / "run.cfg")]
    main([*args, "--out", str(workspace / "a")])
    main([*args, "--seed", "6", "--out", str(workspace / "b")])
    assert ((workspace / "a" / "draws_dp.csv").read_bytes()
            != (workspace / "b" / "draws_dp.csv").read_bytes())


def test_elicit_writes_priors(workspace):
    (workspace / "short.csv").write_text("\n".join(str(v) for v in [2, 5, 1, 7, 3, 4, 0, 6, 2, 3]))
    out = workspace / "elicited.cfg"
    assert main(["elicit", "--input", str(workspace / "short.csv"), "--out", str(out)]) == 0
    cfg = load(out)
    assert cfg.priors is not None
    assert cfg.priors.b_g0 == pytest.approx(2 * cfg.priors.a_g0 / 7.0)


def test_bad_input_exit_code(workspace, capsys):
    (workspace / "bad.csv").write_text("3\n-2\n")
    code = main(["fit", "--input", str(workspace / "bad.csv"), "--config",
                 str(workspace / "run.cfg")])
    assert code == EXIT_DATA
    assert "bad.csv:2" in capsys.readouterr().err
    assert main(["fit", "--input", str(workspace / "nope.csv")]) == EXIT_DATA


def test_module_entry_point(workspace):
    out = subprocess.run([sys.executable, "-m", "dpinar", "--version"],
                         capture_output=True, text=True, check=True)
    assert out.stdout.startswith("dpinar ")


def test_fit_summary_histogram_sums_to_draws(workspace):
    assert main(["fit", "--input", str(workspace / "sim.csv"), "--config",
                 str(workspace / "run.cfg"), "--out", str(workspace / "fit")]) == 0
    rows = [line.split(",") for line in
            (workspace / "fit" / "summary_dp.csv").read_text().splitlines()[2:]]
    hist = {int(k): int(v) for sec, k, v in rows if sec == "k_histogram"}
    posterior = {k: v for sec, k, v in rows if sec == "posterior"}
    assert sum(hist.values()) == int(posterior["N"]) == 100
    assert len([r for r in rows if r[0] == "lambda_mean"]) == 39


def test_simulate_is_deterministic(tmp_path):
    for name in ("a.csv", "b.csv"):
        assert main(["simulate", "--length", "25", "--seed", "3", "--rates", "1,8",
                     "--block", "5", "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_comparison_file_layout(workspace):
    long_csv = workspace / "long.csv"
    y = dio.ingest(workspace / "sim.csv").counts
    long_csv.write_text("".join(f"{sid},{t + 1},{v + (sid == 'q')}\n"
                                for sid in ("p", "q") for t, v in enumerate(y)))
    assert main(["evaluate", "--input", str(long_csv), "--config", str(workspace / "run.cfg"),
                 "--holdout", "2", "--model", "both", "--out", str(workspace / "ev")]) == 0
    lines = (workspace / "ev" / "comparison_h1.csv").read_text().splitlines()
    assert lines[1] == "area,mad_dp,mad_inar1,winner"
    assert [line.split(",")[0] for line in lines[2:4]] == ["p", "q"]
    assert lines[-1].startswith("# dp_win_fraction=") and "n_series=2" in lines[-1]


def test_negative_count_in_long_file_names_line(workspace, capsys):
    bad = workspace / "bad_long.csv"
    bad.write_text("a58,1,3\na58,2,4\na58,5,-1\n")
    assert main(["fit", "--input", str(bad), "--config", str(workspace / "run.cfg")]) == EXIT_DATA
    err = capsys.readouterr().err
    assert "bad_long.csv:3" in err and "negative" in err
