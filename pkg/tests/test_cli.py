import json
import math

import numpy as np
import pytest

from pqwalk import cli


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr().out
    return code, out


class TestVerifyWalk:
    def test_pauli_product_r2(self, capsys):
        code, out = run(capsys, "verify-walk", "--family", "pauli-product",
                        "--pauli", "XZ", "--r", "2")
        assert code == 0
        payload = json.loads(out)
        dist = [c for c in payload["checks"] if c["name"] == "block_distance"][0]
        assert dist["measured"] <= 1e-8

    def test_paper_band_r1_block(self, capsys, band_example):
        code, out = run(capsys, "verify-walk", "--family", "band",
                        "--band-example", "--r", "1")
        assert code == 0
        # the certified target is H/3 for the normalized example
        from pqwalk import walk
        cert = walk.certify_block(walk.build_Q(band_example, 1))
        H = band_example.materialize_dense()
        assert np.allclose(cert.block, H / 3, atol=1e-8)

    def test_r0_trivially_passes(self, capsys):
        code, out = run(capsys, "verify-walk", "--family", "band",
                        "--band-example", "--r", "0")
        assert code == 0
        assert json.loads(out)["pass"]

    def test_missing_family_is_config_error(self, capsys):
        code = cli.main(["verify-walk"])
        assert code == cli.EXIT_CONFIG


class TestSimulateCommand:
    def test_t_zero(self, capsys):
        code, out = run(capsys, "simulate", "--family", "pauli-product",
                        "--pauli", "Z", "--t", "0", "--eps", "1e-3")
        assert code == 0
        payload = json.loads(out)
        assert payload["measured_error"] < 1e-12

    def test_z_short(self, capsys):
        code, out = run(capsys, "simulate", "--family", "pauli-product",
                        "--pauli", "Z", "--t", "0.5", "--eps", "1e-2")
        assert code == 0
        payload = json.loads(out)
        assert payload["measured_error"] <= 1e-2
        assert payload["schema_version"] == 1

    def test_missing_time_is_config_error(self, capsys):
        code = cli.main(["simulate", "--family", "pauli-product", "--pauli", "Z"])
        assert code == cli.EXIT_CONFIG

    def test_eps_out_of_range_is_config_error(self, capsys):
        code = cli.main(["simulate", "--family", "pauli-product", "--pauli", "Z",
                         "--t", "1", "--eps", "0.2"])
        assert code == cli.EXIT_CONFIG


class TestBenchDepth:
    def test_sweep(self, capsys, tmp_path):
        csv = tmp_path / "bench.csv"
        code, out = run(capsys, "bench-depth", "--family", "band",
                        "--band-example", "--sweep", "1,2,4,8",
                        "--csv", str(csv))
        assert code == 0
        payload = json.loads(out)
        assert payload["pass"]
        oh = {r["oh_depth"] for r in payload["rows"]}
        assert oh == {4}
        lines = csv.read_text().strip().splitlines()
        assert len(lines) == 5
        assert lines[0].startswith("r,oh_depth")

    def test_empty_sweep(self, capsys):
        code, out = run(capsys, "bench-depth", "--family", "pauli-product",
                        "--pauli", "Z", "--sweep", "")
        assert code == 0
        assert json.loads(out)["rows"] == []


class TestDeterminism:
    def test_identical_config_identical_report(self, capsys, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        for path in (a, b):
            code = cli.main(["verify-walk", "--family", "pauli-product",
                             "--pauli", "XZ", "--r", "2", "--seed", "3",
                             "--output", str(path)])
            assert code == 0
        assert a.read_bytes() == b.read_bytes()

    def test_simulate_deterministic(self, capsys, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        for path in (a, b):
            cli.main(["simulate", "--model", "heisenberg", "--n", "3",
                      "--seed", "7", "--t", "0.1", "--eps", "2e-2",
                      "--output", str(path)])
        assert a.read_bytes() == b.read_bytes()
        payload = json.loads(a.read_text())
        assert "config_digest" in payload
