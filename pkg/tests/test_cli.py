import struct
import subprocess
import sys

import numpy as np
import pytest


def run_cli(*args, cwd=None):
    return subprocess.run([sys.executable, "-m", "liplearn.cli", *args],
                          capture_output=True, text=True, cwd=cwd)


class TestExitCodes:
    def test_usage_error_is_one(self):
        res = run_cli("oracle1d", "--bogus-flag")
        assert res.returncode == 1

    def test_missing_config_is_one(self, tmp_path):
        res = run_cli("classify", "--config", str(tmp_path / "missing.ini"))
        assert res.returncode == 1

    def test_bad_config_key_is_one(self, tmp_path):
        cfgfile = tmp_path / "c.ini"
        cfgfile.write_text("[experiment]\nwhatever = 3\n")
        res = run_cli("classify", "--config", str(cfgfile))
        assert res.returncode == 1
        assert "whatever" in res.stderr

    def test_nonconvergence_is_two(self, tmp_path):
        res = run_cli("oracle1d", "--levels", "300:0.15", "--alphas", "0",
                      "--trials", "1", "--max-iter", "1", "--no-warm-start",
                      "--out-dir", str(tmp_path))
        assert res.returncode == 2

    def test_success_is_zero(self, tmp_path):
        res = run_cli("oracle1d", "--levels", "300:0.15", "--alphas", "0",
                      "--trials", "1", "--out-dir", str(tmp_path))
        assert res.returncode == 0, res.stderr
        assert "sup_error" in res.stdout
        assert (tmp_path / "oracle1d.csv").exists()


class TestSubcommands:
    def test_consistency(self, tmp_path):
        res = run_cli("consistency", "--dim", "2", "--levels", "0:0.2,0:0.1",
                      "--out-dir", str(tmp_path))
        assert res.returncode == 0, res.stderr
        assert (tmp_path / "consistency.csv").exists()
        assert "continuum=2.0" in res.stdout.replace("continuum=2.000000", "continuum=2.0")

    def test_kde(self, tmp_path):
        res = run_cli("kde", "--dim", "2", "--levels", "4000:0.15", "--trials", "1",
                      "--out-dir", str(tmp_path))
        assert res.returncode == 0, res.stderr
        assert (tmp_path / "kde.csv").exists()

    def test_multiclass(self, tmp_path):
        res = run_cli("multiclass", "--n", "300", "--trials", "1", "--alphas", "0.5",
                      "--seed", "3", "--out-dir", str(tmp_path))
        assert res.returncode == 0, res.stderr
        assert "mean accuracy" in res.stdout

    def test_classify_with_config_file(self, tmp_path):
        cfgfile = tmp_path / "exp.ini"
        cfgfile.write_text(
            "[experiment]\n"
            "n = 600\nh = 0.15\nalphas = 0\nmus = 0.5\ntrials = 1\nseed = 2\n"
            f"out_dir = {tmp_path}\n"
        )
        res = run_cli("classify", "--config", str(cfgfile))
        assert res.returncode == 0, res.stderr
        assert (tmp_path / "classify.csv").exists()

    def test_surface2d(self, tmp_path):
        res = run_cli("surface2d", "--n", "300", "--h", "0.2", "--alphas", "0",
                      "--seed", "1", "--out-dir", str(tmp_path))
        assert res.returncode == 0, res.stderr
        assert (tmp_path / "surface2d_alpha0.csv").exists()

    def test_ingest_idx(self, tmp_path):
        images = tmp_path / "img.idx"
        labels = tmp_path / "lab.idx"
        images.write_bytes(struct.pack(">iiii", 0x803, 2, 2, 2) + bytes(range(8)))
        labels.write_bytes(struct.pack(">ii", 0x801, 2) + bytes([3, 7]))
        out = tmp_path / "points.csv"
        res = run_cli("ingest-idx", str(images), str(labels), "--out", str(out))
        assert res.returncode == 0, res.stderr
        assert out.exists()
        assert "2 points of dim 4" in res.stdout

    def test_ingest_idx_bad_magic_is_one(self, tmp_path):
        images = tmp_path / "img.idx"
        labels = tmp_path / "lab.idx"
        images.write_bytes(struct.pack(">iiii", 0x1234, 2, 2, 2) + bytes(8))
        labels.write_bytes(struct.pack(">ii", 0x801, 2) + bytes(2))
        res = run_cli("ingest-idx", str(images), str(labels))
        assert res.returncode == 1
        assert "magic" in res.stderr
