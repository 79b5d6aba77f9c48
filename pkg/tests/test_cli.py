from __future__ import annotations

import numpy as np
import pandas as pd
import pytest

from src.errors import ConfigError
from src.integration.cli import EXIT_IO, EXIT_OK, EXIT_VALIDATION, main
from src.integration.config import load_config, write_effective_config
from src.transform.vline import operator_for
from src.utils.formats import read_raw

from .conftest import CONFIG_DIR


def _header(path) -> bytes:
    with open(path, "rb") as fh:
        return fh.readline()


# =========================
# CONFIGURATION
# =========================

def test_reference_config_geometry():
    cfg = load_config(CONFIG_DIR / "reference.ini")
    assert (cfg.N, cfg.P, cfg.Q) == (256, 200, 150)
    assert cfg.geometry().shape == (200, 151)
    assert [s.label for s in cfg.solvers][:3] == ["L2", "H1", "TV"]


def test_scaled_alpha_survives_the_effective_config(tmp_path):
    cfg = load_config(CONFIG_DIR / "desk.ini", out_dir=str(tmp_path))
    path = write_effective_config(cfg, tmp_path / "effective_config.ini")
    again = load_config(path)
    assert [s.alpha for s in again.solvers] == [s.alpha for s in cfg.solvers]
    assert again.solvers[0].alpha != 0.01


def test_command_line_beats_environment_beats_file(tmp_path, write_config, monkeypatch):
    path = write_config()
    monkeypatch.setenv("VLT_OUT_DIR", str(tmp_path / "env"))
    assert load_config(path).out_dir == tmp_path / "env"
    assert load_config(path, out_dir=str(tmp_path / "cli")).out_dir == tmp_path / "cli"


def test_seeds_are_split_per_consumer(write_config):
    cfg = load_config(write_config())
    seeds = {cfg.seed_for(name) for name in ("noise", "opnorm", "test_vectors")}
    assert len(seeds) == 3
    assert cfg.seed_for("noise") == load_config(write_config()).seed_for("noise")


def test_bad_values_raise_config_error(write_config):
    with pytest.raises(ConfigError):
        load_config(write_config(grid={"N": "sixteen"}))
    with pytest.raises(ConfigError):
        load_config(write_config(solver__TV=None))
    with pytest.raises(ConfigError):
        load_config(write_config(phantom={"kind": "shepp"}))


# =========================
# SUBCOMMANDS
# =========================

def test_phantom_at_reference_size(tmp_path):
    code = main(["phantom", "--config", str(CONFIG_DIR / "reference.ini"), "--out", str(tmp_path)])
    assert code == EXIT_OK
    assert _header(tmp_path / "phantom.f32") == b"VLT-IMG 257 257\n"
    assert (tmp_path / "phantom.pgm").exists() and (tmp_path / "phantom.csv").exists()
    assert (tmp_path / "effective_config.ini").exists()


def test_phantom_follows_grid_size(tmp_path, write_config):
    path = write_config(grid={"N": "64"})
    assert main(["phantom", "--config", str(path), "--out", str(tmp_path / "o")]) == EXIT_OK
    assert _header(tmp_path / "o" / "phantom.f32") == b"VLT-IMG 65 65\n"


def test_unwritable_output_directory(tmp_path, write_config):
    blocker = tmp_path / "file.txt"
    blocker.write_text("not a directory")
    code = main(["phantom", "--config", str(write_config()), "--out", str(blocker / "sub")])
    assert code == EXIT_IO


def test_missing_config_is_an_io_error(tmp_path):
    assert main(["phantom", "--config", str(tmp_path / "nope.ini")]) == EXIT_IO


def test_empty_methods_list_fails_validation(tmp_path, write_config):
    path = write_config(solver__TV=None)
    assert main(["reconstruct", "--config", str(path), "--out", str(tmp_path / "o")]) == EXIT_VALIDATION


def test_forward_with_calibrated_noise(tmp_path, write_config):
    path = write_config(noise={"delta": "0.05", "seed": "4"})
    out = tmp_path / "o"
    assert main(["forward", "--config", str(path), "--out", str(out)]) == EXIT_OK

    assert _header(out / "sinogram.f32") == b"VLT-SIN 20 11\n"
    _, exact = read_raw(out / "sinogram.f32")
    _, noisy = read_raw(out / "sinogram_noisy.f32")
    rel = np.linalg.norm(noisy - exact) / np.linalg.norm(exact)
    assert rel == pytest.approx(0.05, rel=1e-5)

    summary = pd.read_csv(out / "forward_summary.csv")
    assert summary["achieved_delta"].iloc[0] == pytest.approx(0.05, abs=1e-12)


def test_empty_phantom_gives_zero_sinogram(tmp_path, write_config):
    path = write_config(phantom={"kind": "empty"})
    out = tmp_path / "o"
    assert main(["forward", "--config", str(path), "--out", str(out)]) == EXIT_OK
    _, values = read_raw(out / "sinogram.f32")
    assert not np.any(values)
    assert not (out / "sinogram_noisy.f32").exists()


def test_reconstruct_writes_one_log_per_solver(tmp_path, write_config):
    path = write_config(
        solver__L2={"regularizer": "L2", "alpha": "0.01", "max_iters": "15"},
        solver__TV_pos={"regularizer": "TV", "alpha": "0.002", "positivity": "true", "max_iters": "15"},
        solver__TV=None,
    )
    out = tmp_path / "o"
    assert main(["reconstruct", "--config", str(path), "--out", str(out)]) == EXIT_OK

    for label in ("L2", "TV_pos"):
        log = pd.read_csv(out / f"log_{label}.csv")
        assert list(log.columns) == ["iter", "E2", "R2", "seconds"]
        assert len(log) == 15
        assert _header(out / f"recon_{label}.f32") == b"VLT-IMG 17 17\n"

    summary = pd.read_csv(out / "reconstruct_summary.csv")
    assert list(summary["method"]) == ["L2", "TV_pos"]
    assert summary["final_E2"].notna().all()


def test_reconstruct_without_truth_leaves_error_blank(tmp_path, write_config):
    path = write_config(output={"truth": "none", "formats": "f32"})
    out = tmp_path / "o"
    assert main(["reconstruct", "--config", str(path), "--out", str(out)]) == EXIT_OK
    log = pd.read_csv(out / "log_TV.csv")
    assert log["E2"].isna().all()
    assert log["R2"].notna().all()


def test_reconstruct_from_sinogram_file(tmp_path, write_config):
    first = tmp_path / "first"
    assert main(["forward", "--config", str(write_config()), "--out", str(first)]) == EXIT_OK

    path = write_config("from_file.ini", output={"sinogram": str(first / "sinogram.f32"), "formats": "f32"})
    out = tmp_path / "second"
    assert main(["reconstruct", "--config", str(path), "--out", str(out)]) == EXIT_OK
    assert (out / "recon_TV.f32").exists()


def test_adjoint_test_passes_and_negative_control_fails(tmp_path):
    config = str(CONFIG_DIR / "adjoint.ini")
    assert main(["adjoint-test", "--config", config, "--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(["adjoint-test", "--config", config, "--out", str(tmp_path / "b"), "--mismatched"]) == EXIT_VALIDATION

    record = pd.read_csv(tmp_path / "a" / "adjoint_test.csv")
    assert record["max_defect"].iloc[0] < 1e-10


def test_verify_spectral_warns_on_negative_margin(tmp_path, write_config, capsys):
    path = write_config(
        grid={"N": "32"},
        geometry={"P": "32", "Q": "16", "weight": "exponential", "mu": "2.0"},
    )
    out = tmp_path / "o"
    assert main(["verify-spectral", "--config", str(path), "--out", str(out)]) == EXIT_OK

    assert "WARNING: uniqueness margin" in capsys.readouterr().out
    margin = pd.read_csv(out / "spectral_margin.csv")
    assert margin["margin"].iloc[0] < 0.0
    # l = 0 cosine plus l = 1 cosine and sine
    assert len(pd.read_csv(out / "spectral_summary.csv")) == 3
    assert list(pd.read_csv(out / "spectral_l1_k2.csv").columns) == ["psi", "forward", "abel", "abs_diff"]


def test_deterministic_rerun_from_effective_config(tmp_path, write_config):
    path = write_config(noise={"delta": "0.05", "seed": "9"})
    first, second = tmp_path / "first", tmp_path / "second"
    assert main(["forward", "--config", str(path), "--out", str(first), "--deterministic"]) == EXIT_OK

    echoed = first / "effective_config.ini"
    assert main(["forward", "--config", str(echoed), "--out", str(second), "--deterministic"]) == EXIT_OK

    for name in ("sinogram.f32", "sinogram_noisy.f32", "forward_summary.csv"):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_reconstruct_assembles_the_operator_once(tmp_path, write_config):
    operator_for.cache_clear()
    path = write_config(noise={"delta": "0.05", "seed": "2"}, output={"formats": "f32"})
    assert main(["reconstruct", "--config", str(path), "--out", str(tmp_path / "o")]) == EXIT_OK
    info = operator_for.cache_info()
    assert info.misses == 1
    assert info.currsize == 1


def test_noise_is_skipped_on_zero_data(tmp_path, write_config, capsys):
    path = write_config(phantom={"kind": "empty"}, noise={"delta": "0.05", "seed": "2"})
    out = tmp_path / "o"
    assert main(["forward", "--config", str(path), "--out", str(out)]) == EXIT_OK
    assert "Skipping noise" in capsys.readouterr().out
    assert not (out / "sinogram_noisy.f32").exists()

    summary = pd.read_csv(out / "forward_summary.csv")
    assert summary["achieved_delta"].iloc[0] == 0.0
