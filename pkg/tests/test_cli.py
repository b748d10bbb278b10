import json

import numpy as np
import pytest

from clicktomo import io_csv
from clicktomo.cli import main

SMALL = """
[state]
kind = coherent
re_amplitude = 1.0

[truncation]
n_trunc = 12

[detectors]
mode = single
alpha = 0.15
n_efficiencies = 14

[grid]
re_min = -0.5
re_max = 1.5
im_min = -1.0
im_max = 1.0
n_re = 2
n_im = 2

[run]
n_runs = 400
n_iterations = 60
seed = 5
"""

VACUUM_POINT = """
[state]
kind = coherent

[truncation]
n_trunc = 12

[detectors]
mode = single
alpha = 0.15
n_efficiencies = 14

[grid]
re_min = -0.5
re_max = 0.5
im_min = -0.5
im_max = 0.5
n_re = 1
n_im = 1

[run]
n_runs = 200
n_iterations = 40
seed = 1
"""


@pytest.fixture
def small_cfg(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text(SMALL)
    return path


def test_simulate_writes_expected_rows(small_cfg, tmp_path):
    out = tmp_path / "art"
    assert main(["simulate", "--config", str(small_cfg), "--out", str(out)]) == 0
    _, _, points = io_csv.read_click_csv(out / "clicks.csv")
    assert len(points) == 4
    assert all(len(p.records) == 14 for p in points)


def test_simulate_is_deterministic(small_cfg, tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    main(["simulate", "--config", str(small_cfg), "--out", str(out1)])
    main(["simulate", "--config", str(small_cfg), "--out", str(out2)])
    assert (out1 / "clicks.csv").read_bytes() == (out2 / "clicks.csv").read_bytes()


def test_rerun_from_embedded_header(small_cfg, tmp_path):
    out1 = tmp_path / "a"
    main(["simulate", "--config", str(small_cfg), "--out", str(out1)])
    embedded = io_csv.embedded_config(out1 / "clicks.csv")
    cfg2 = tmp_path / "replay.ini"
    cfg2.write_text(embedded)
    out2 = tmp_path / "b"
    main(["simulate", "--config", str(cfg2), "--out", str(out2)])
    assert (out1 / "clicks.csv").read_bytes() == (out2 / "clicks.csv").read_bytes()


def test_vacuum_point_all_noclick(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text(VACUUM_POINT)
    out = tmp_path / "art"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    _, _, points = io_csv.read_click_csv(out / "clicks.csv")
    assert all(rec.n_noclick == rec.n_runs for p in points for rec in p.records)


def test_full_pipeline(small_cfg, tmp_path):
    out = tmp_path / "art"
    assert main(["simulate", "--config", str(small_cfg), "--out", str(out)]) == 0
    assert (
        main(
            [
                "reconstruct",
                "--config",
                str(small_cfg),
                "--records",
                str(out / "clicks.csv"),
                "--out",
                str(out),
            ]
        )
        == 0
    )
    cfg, gammas, cols = io_csv.read_wigner_csv(out / "wigner.csv")
    assert gammas.size == 4
    assert np.all(np.isfinite(cols["w_rec"]))
    assert np.all(np.isfinite(cols["w_exact"]))  # analytic reference on by default
    assert (
        main(
            [
                "recover-rho",
                "--config",
                str(small_cfg),
                "--wigner",
                str(out / "wigner.csv"),
                "--out",
                str(out),
            ]
        )
        == 0
    )
    metrics = json.loads((out / "metrics.json").read_text())
    assert "trace" in metrics and "fidelity_vs_configured_state" in metrics
    assert (
        main(
            [
                "report",
                "--wigner",
                str(out / "wigner.csv"),
                "--metrics",
                str(out / "metrics.json"),
                "--out",
                str(out),
            ]
        )
        == 0
    )
    report = json.loads((out / "report.json").read_text())
    assert report["maps"][0]["n_runs"] == 400
    assert np.isfinite(report["maps"][0]["delta_w"])


def test_reconstruct_variance_from_repetitions(small_cfg, tmp_path):
    text = SMALL.replace("seed = 5", "seed = 5\nrepetitions = 2")
    cfg = tmp_path / "rep.ini"
    cfg.write_text(text)
    out = tmp_path / "art"
    main(["simulate", "--config", str(cfg), "--out", str(out)])
    assert (out / "clicks_rep0.csv").exists() and (out / "clicks_rep1.csv").exists()
    assert (
        main(
            [
                "reconstruct",
                "--config",
                str(cfg),
                "--records",
                str(out / "clicks_rep0.csv"),
                str(out / "clicks_rep1.csv"),
                "--out",
                str(out),
            ]
        )
        == 0
    )
    _, _, cols = io_csv.read_wigner_csv(out / "wigner.csv")
    assert np.all(np.isfinite(cols["w_variance"]))


def test_exact_flag_writes_expected_counts(small_cfg, tmp_path):
    out = tmp_path / "art"
    main(["simulate", "--config", str(small_cfg), "--exact", "--out", str(out)])
    _, _, points = io_csv.read_click_csv(out / "clicks.csv")
    fracs = [rec.n_noclick % 1.0 for p in points for rec in p.records]
    assert any(f != 0.0 for f in fracs)


def test_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text(SMALL + "\nnonsense = 1\n")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == 2


def test_missing_records_exit_code(small_cfg, tmp_path):
    code = main(
        ["reconstruct", "--config", str(small_cfg), "--records", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]
    )
    assert code == 3


def test_empty_records_exit_code(small_cfg, tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    code = main(
        ["reconstruct", "--config", str(small_cfg), "--records", str(empty), "--out", str(tmp_path)]
    )
    assert code == 3


def test_malformed_row_exit_code(small_cfg, tmp_path, capsys):
    out = tmp_path / "art"
    main(["simulate", "--config", str(small_cfg), "--out", str(out)])
    path = out / "clicks.csv"
    lines = path.read_text().splitlines()
    lines[-1] = lines[-1] + ",extra"
    path.write_text("\n".join(lines) + "\n")
    code = main(
        ["reconstruct", "--config", str(small_cfg), "--records", str(path), "--out", str(out)]
    )
    assert code == 3
    assert "row" in capsys.readouterr().err


def test_report_missing_file(tmp_path):
    assert main(["report", "--wigner", str(tmp_path / "none.csv"), "--out", str(tmp_path)]) == 3


def test_report_identical_inputs_zero_delta(small_cfg, tmp_path):
    out = tmp_path / "art"
    main(["simulate", "--config", str(small_cfg), "--exact", "--out", str(out)])
    main(
        ["reconstruct", "--config", str(small_cfg), "--records", str(out / "clicks.csv"), "--out", str(out)]
    )
    # overwrite the exact column with the reconstruction itself
    cfg, gammas, cols = io_csv.read_wigner_csv(out / "wigner.csv")
    io_csv.write_wigner_csv(
        out / "same.csv", cfg, gammas, cols["w_rec"], w_exact=cols["w_rec"]
    )
    assert main(["report", "--wigner", str(out / "same.csv"), "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["maps"][0]["delta_w"] == 0.0


def test_reconstruct_is_deterministic(small_cfg, tmp_path):
    out = tmp_path / "art"
    main(["simulate", "--config", str(small_cfg), "--out", str(out)])
    main(["reconstruct", "--config", str(small_cfg), "--records", str(out / "clicks.csv"), "--out", str(out)])
    first = (out / "wigner.csv").read_bytes()
    main(["reconstruct", "--config", str(small_cfg), "--records", str(out / "clicks.csv"), "--out", str(out)])
    assert (out / "wigner.csv").read_bytes() == first


def test_reconstruct_threads_match_serial(small_cfg, tmp_path):
    out = tmp_path / "art"
    main(["simulate", "--config", str(small_cfg), "--out", str(out)])
    main(["reconstruct", "--config", str(small_cfg), "--records", str(out / "clicks.csv"), "--out", str(out / "one")])
    main(["reconstruct", "--config", str(small_cfg), "--threads", "3",
          "--records", str(out / "clicks.csv"), "--out", str(out / "three")])
    import numpy as _np
    _, _, a = io_csv.read_wigner_csv(out / "one" / "wigner.csv")
    _, _, b = io_csv.read_wigner_csv(out / "three" / "wigner.csv")
    _np.testing.assert_allclose(a["w_rec"], b["w_rec"], atol=1e-12)


DEGENERATE = """
[state]
kind = coherent
re_amplitude = 0.3

[truncation]
n_trunc = 12

[detectors]
mode = dual
nu_c = 0.4
nu_d = 0.42
n_angles = 14
angle_min = 0.3
angle_max = 1.2

[grid]
re_min = 0.0
re_max = 2.0
im_min = -0.25
im_max = 0.25
n_re = 4
n_im = 1

[run]
n_runs = 300
n_iterations = 50
seed = 2
exact_probabilities = true
"""


def test_reconstruct_reports_failed_points(tmp_path, capsys):
    cfg = tmp_path / "deg.ini"
    cfg.write_text(DEGENERATE)
    out = tmp_path / "art"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    code = main(["reconstruct", "--config", str(cfg), "--records", str(out / "clicks.csv"), "--out", str(out)])
    assert code == 4
    assert "failed" in capsys.readouterr().err


def test_report_sweep_table_sorted(small_cfg, tmp_path):
    # several runs differing in trials and iterations condense into tidy
    # rows ordered by (n_iterations, n_runs)
    out = tmp_path / "art"
    wigner_files = []
    for n_runs, n_it in ((1000, 100), (400, 100), (400, 60)):
        text = SMALL.replace("n_runs = 400", f"n_runs = {n_runs}").replace(
            "n_iterations = 60", f"n_iterations = {n_it}"
        )
        cfg = tmp_path / f"run_{n_runs}_{n_it}.ini"
        cfg.write_text(text)
        sub = out / f"{n_runs}_{n_it}"
        main(["simulate", "--config", str(cfg), "--out", str(sub)])
        main(["reconstruct", "--config", str(cfg), "--records", str(sub / "clicks.csv"), "--out", str(sub)])
        wigner_files.append(str(sub / "wigner.csv"))
    assert main(["report", "--wigner", *wigner_files, "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    keys = [(r["n_iterations"], r["n_runs"]) for r in report["maps"]]
    assert keys == sorted(keys)
    assert all(np.isfinite(r["delta_w"]) for r in report["maps"])
