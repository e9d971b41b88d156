"""
Tests for the command-line front end and artifact round trips
"""
import json

import numpy as np
import pandas as pd
import pytest

from backend.storage.artifact_store import ArtifactStore, load_decomposition, read_table_csv
from backend.decomposition.greedy_decomposition import decompose
from backend.kernels.covariance_kernels import Grid, KernelSpec, discretize
from frontend.cli.main_cli import EXIT_ACCEPTANCE, EXIT_CONFIG, EXIT_OK, main


def run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path)])


def test_decompose_prints_lambda_table(tmp_path, capsys):
    assert run(tmp_path, "decompose", "--dyadic-level", "3", "--steps", "8") == EXIT_OK
    out = capsys.readouterr().out
    assert "0.0625" in out
    data = json.loads((tmp_path / "decomposition.json").read_text())
    assert data["format_version"] == "1.0"
    assert [step["lambda"] for step in data["steps"]] == [1, 0.25, 0.125, 0.125, 0.0625, 0.0625, 0.0625, 0.0625]


def test_decompose_zero_matrix_reports_rank_exhausted(tmp_path, capsys):
    matrix_file = tmp_path / "zero.json"
    matrix_file.write_text(json.dumps([[0.0, 0.0], [0.0, 0.0]]))
    assert run(tmp_path, "decompose", "--matrix-file", str(matrix_file)) == EXIT_OK
    assert "rank exhausted" in capsys.readouterr().out


def test_malformed_kernel_file_exits_2(tmp_path, capsys):
    kernel_file = tmp_path / "kernel.json"
    kernel_file.write_text("{not json")
    assert run(tmp_path, "decompose", "--kernel", str(kernel_file)) == EXIT_CONFIG
    assert "invalid JSON" in capsys.readouterr().err


def test_invalid_kernel_spec_exits_2(tmp_path):
    kernel_file = tmp_path / "kernel.json"
    kernel_file.write_text(json.dumps({"kind": "user_matrix", "matrix": [[1.0, 2.0], [2.0, 1.0]]}))
    assert run(tmp_path, "decompose", "--kernel", str(kernel_file)) == EXIT_CONFIG


def test_unknown_kernel_and_bad_options_exit_2(tmp_path):
    assert run(tmp_path, "decompose", "--kernel", "matern") == EXIT_CONFIG
    assert run(tmp_path, "decompose", "--steps", "-1") == EXIT_CONFIG
    assert run(tmp_path, "decompose", "--kernel", "user_matrix") == EXIT_CONFIG


def test_user_kernel_file_with_csv_grid(tmp_path):
    kernel_file = tmp_path / "kernel.json"
    kernel_file.write_text(json.dumps({"kind": "user_matrix", "matrix": [[2.0, 0.5, 0.0], [0.5, 1.0, 0.2], [0.0, 0.2, 1.5]]}))
    grid_file = tmp_path / "grid.csv"
    grid_file.write_text("0.1\n0.2\n0.9\n")
    assert run(tmp_path, "decompose", "--kernel", str(kernel_file), "--grid-file", str(grid_file)) == EXIT_OK
    data = json.loads((tmp_path / "decomposition.json").read_text())
    assert data["steps"][0]["pivot_t"] == 0.1


def test_figure1_csvs(tmp_path):
    assert run(tmp_path, "figure1", "--seed", "5") == EXIT_OK
    grid = Grid.dyadic(6)
    pivots = [1.0, 0.5, 0.25, 0.75, 0.125, 0.375, 0.625, 0.875]
    for n in range(8):
        frame = read_table_csv(str(tmp_path / f"figure1_step_{n}.csv"))
        assert list(frame.columns) == ["t", "component", "residual_std", "partial_path"]
        used = [grid.index_of(t) for t in pivots[: n + 1]]
        np.testing.assert_array_equal(frame["residual_std"].to_numpy()[used], 0.0)
    first = read_table_csv(str(tmp_path / "figure1_step_0.csv"))
    ratio = first["component"].to_numpy()[1:] / first["t"].to_numpy()[1:]
    np.testing.assert_allclose(ratio, ratio[0])
    last = read_table_csv(str(tmp_path / "figure1_step_7.csv"))
    assert last["residual_std"].max() == pytest.approx(np.sqrt(1 / 32), rel=1e-12)


def test_figure1_requires_wiener(tmp_path):
    assert run(tmp_path, "figure1", "--kernel", "brownian_bridge") == EXIT_CONFIG
    assert run(tmp_path, "figure1", "--dyadic-level", "2") == EXIT_CONFIG


def test_sample_round_trip_is_identical(tmp_path):
    assert run(tmp_path, "decompose", "--dyadic-level", "3", "--steps", "8") == EXIT_OK
    first_dir = tmp_path / "fresh"
    second_dir = tmp_path / "reloaded"
    assert main(["sample", "--dyadic-level", "3", "--steps", "8", "--samples", "300", "--seed", "4",
                 "--out", str(first_dir)]) == EXIT_OK
    assert main(["sample", "--decomposition", str(tmp_path / "decomposition.json"), "--samples", "300",
                 "--seed", "4", "--out", str(second_dir)]) == EXIT_OK
    fresh = read_table_csv(str(first_dir / "samples.csv"))
    reloaded = read_table_csv(str(second_dir / "samples.csv"))
    pd.testing.assert_frame_equal(fresh, reloaded)
    summary = json.loads((first_dir / "samples_summary.json").read_text())
    assert summary["n_terms"] == 8


def test_condition_pins_values(tmp_path):
    assert run(tmp_path, "condition", "--dyadic-level", "4", "--values", "0.5", "-0.2", "--samples", "200") == EXIT_OK
    data = json.loads((tmp_path / "conditional_measure.json").read_text())
    assert data["pivot_t"] == [1.0, 0.5]
    assert data["max_pinning_error"] <= 1e-9
    paths = read_table_csv(str(tmp_path / "conditional_samples.csv"))
    np.testing.assert_allclose(paths["1.0"], 0.5, atol=1e-12)


def test_condition_too_many_values(tmp_path):
    assert run(tmp_path, "condition", "--dyadic-level", "2", "--steps", "2", "--values", "0", "0", "0") == EXIT_CONFIG


def test_decondition_check_default_suite(tmp_path):
    assert run(tmp_path, "decondition-check", "--dyadic-level", "4", "--samples", "20000") == EXIT_OK
    frame = read_table_csv(str(tmp_path / "decondition_check.csv"))
    assert len(frame) == 5
    assert frame["passed"].all()


def test_decondition_check_sampled_inner(tmp_path):
    assert run(tmp_path, "decondition-check", "--dyadic-level", "4", "--samples", "20000", "--inner", "sampled") == EXIT_OK
    frame = read_table_csv(str(tmp_path / "decondition_check.csv"))
    assert set(frame["inner"]) == {"sampled"}
    assert len(frame) == 5


def test_compare_writes_diverging_partial_sums(tmp_path):
    assert run(tmp_path, "compare", "--kernel", "brownian_motion", "--dyadic-level", "5", "--steps", "16") == EXIT_OK
    frame = read_table_csv(str(tmp_path / "compare.csv"))
    assert list(frame.columns[:5]) == ["n", "greedy_lambda", "spectral_lambda", "greedy_partial_sum", "spectral_partial_sum"]
    summary = json.loads((tmp_path / "compare_summary.json").read_text())
    assert summary["diverging"] is True
    assert frame["greedy_partial_sum"].iloc[-1] > summary["spectral_trace"]


def test_oracle_check_level4(tmp_path):
    assert run(tmp_path, "oracle-check", "--level", "4") == EXIT_OK
    report = json.loads((tmp_path / "oracle_check.json").read_text())
    assert report["max_lambda_error"] < 1e-12
    assert report["level"] == 4


def test_oracle_check_out_of_range(tmp_path):
    assert run(tmp_path, "oracle-check", "--level", "3", "--terms", "9") == EXIT_CONFIG


def test_biorthogonality_check(tmp_path):
    assert run(tmp_path, "biorthogonality-check", "--dyadic-level", "5") == EXIT_OK
    report = json.loads((tmp_path / "biorthogonality_check.json").read_text())
    assert report["biorthogonality"]["passed"] is True


def test_failed_report_exits_4(tmp_path, monkeypatch):
    from backend.oracles import wiener_oracle

    monkeypatch.setattr(wiener_oracle, "X_ATOL", -1.0)
    assert run(tmp_path, "oracle-check", "--level", "3") == EXIT_ACCEPTANCE


def test_artifact_round_trip_without_residual(tmp_path):
    source = discretize(KernelSpec.brownian_motion(), Grid.dyadic(3))
    decomposition = decompose(source, max_steps=4)
    store = ArtifactStore(str(tmp_path))
    path = store.save_decomposition(decomposition, KernelSpec.brownian_motion(), include_residual=False)
    loaded, kernel = load_decomposition(path)
    assert kernel == KernelSpec.brownian_motion()
    assert loaded.pivot_indices == decomposition.pivot_indices
    np.testing.assert_allclose(loaded.residual.matrix, decomposition.residual.matrix, atol=1e-14)
    assert loaded.steps[1].x_star == decomposition.steps[1].x_star


def test_figure1_rejects_level3_grid(tmp_path):
    assert run(tmp_path, "figure1", "--dyadic-level", "3") == EXIT_CONFIG
    assert not list(tmp_path.glob("figure1_step_*.csv"))


def test_figure1_on_level4_grid(tmp_path):
    assert run(tmp_path, "figure1", "--dyadic-level", "4") == EXIT_OK
    last = read_table_csv(str(tmp_path / "figure1_step_7.csv"))
    assert last["residual_std"].max() == pytest.approx(np.sqrt(1 / 32), rel=1e-12)


def test_resaved_decomposition_keeps_its_kernel(tmp_path):
    matrix = [[2.0, 0.5, 0.0], [0.5, 1.0, 0.2], [0.0, 0.2, 1.5]]
    matrix_file = tmp_path / "cov.json"
    matrix_file.write_text(json.dumps(matrix))
    first_dir = tmp_path / "first"
    second_dir = tmp_path / "second"
    assert main(["decompose", "--matrix-file", str(matrix_file), "--out", str(first_dir)]) == EXIT_OK
    assert main(["decompose", "--decomposition", str(first_dir / "decomposition.json"),
                 "--out", str(second_dir)]) == EXIT_OK
    resaved = json.loads((second_dir / "decomposition.json").read_text())
    assert resaved["kernel"] == {"kind": "user_matrix", "matrix": matrix}
    loaded, kernel = load_decomposition(str(second_dir / "decomposition.json"))
    assert kernel == KernelSpec.user_matrix(matrix)
    assert loaded.reconstruction_error() <= 1e-12


def test_artifact_with_wrong_kernel_rejected(tmp_path):
    matrix_file = tmp_path / "cov.json"
    matrix_file.write_text(json.dumps([[2.0, 0.5, 0.0], [0.5, 1.0, 0.2], [0.0, 0.2, 1.5]]))
    assert run(tmp_path, "decompose", "--matrix-file", str(matrix_file)) == EXIT_OK
    artifact = tmp_path / "decomposition.json"
    data = json.loads(artifact.read_text())
    data["kernel"] = {"kind": "brownian_motion"}
    artifact.write_text(json.dumps(data))
    assert main(["sample", "--decomposition", str(artifact), "--out", str(tmp_path / "again")]) == EXIT_CONFIG


def test_condition_round_trip_is_identical(tmp_path):
    assert run(tmp_path, "decompose", "--dyadic-level", "4", "--steps", "6") == EXIT_OK
    first_dir = tmp_path / "fresh"
    second_dir = tmp_path / "reloaded"
    options = ["--values", "0.4", "-0.1", "0.2", "--samples", "150", "--seed", "9"]
    assert main(["condition", "--dyadic-level", "4", "--steps", "6", *options, "--out", str(first_dir)]) == EXIT_OK
    assert main(["condition", "--decomposition", str(tmp_path / "decomposition.json"), *options,
                 "--out", str(second_dir)]) == EXIT_OK
    fresh = read_table_csv(str(first_dir / "conditional_samples.csv"))
    reloaded = read_table_csv(str(second_dir / "conditional_samples.csv"))
    pd.testing.assert_frame_equal(fresh, reloaded)
    fresh_summary = json.loads((first_dir / "conditional_measure.json").read_text())
    reloaded_summary = json.loads((second_dir / "conditional_measure.json").read_text())
    for key in ("pinned", "pivot_t", "mean", "residual_variance", "max_pinning_error"):
        assert fresh_summary[key] == reloaded_summary[key]
