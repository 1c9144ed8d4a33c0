import json
import math
import os

import pytest

from neumann_lab.cli import main, parse_certificates, parse_truncations
from neumann_lab.errors import InputError


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip() else None)


class TestParsing:
    def test_truncation_ranges(self):
        assert parse_truncations("10:30:10") == [10, 20, 30]
        assert parse_truncations("2:4") == [2, 3, 4]
        assert parse_truncations("5,9,14") == [5, 9, 14]

    def test_bad_truncations(self):
        for bad in ("", "5:1", "a:b", "1:10:0"):
            with pytest.raises(InputError):
                parse_truncations(bad)

    def test_certificates(self):
        certs = parse_certificates("inv_b=divergent:harmonic,measure=infinite")
        assert certs["inv_b"].verdict == "divergent"
        assert certs["inv_b"].note == "harmonic"
        assert certs["measure"] == "infinite"

    def test_bad_certificates(self):
        for bad in ("inv_b", "inv_b=maybe", "zzz=divergent", "measure=big"):
            with pytest.raises(InputError):
                parse_certificates(bad)


class TestExperiments:
    def test_comb_beta(self, capsys):
        code, payload = run_cli(capsys, "--model", "comb",
                                "--experiment", "comb-beta", "--depth", "40")
        assert code == 0
        assert abs(payload["beta"] - (3 - math.sqrt(5)) / 2) <= 1e-8
        assert payload["status"] == "ok"
        assert payload["schema"] == 1

    def test_comb_beta_too_shallow_exits_2(self, capsys):
        code, payload = run_cli(capsys, "--model", "comb",
                                "--experiment", "comb-beta", "--depth", "9")
        assert code == 2
        assert payload["status"] == "error"
        assert payload["error_kind"] == "truncation-insufficient"
        assert "last_increment" in payload

    def test_classify_preset(self, capsys):
        code, payload = run_cli(capsys, "--model", "bd:unit",
                                "--experiment", "classify", "--horizon", "1000",
                                "--certify", "inv_b=divergent:harmonic")
        assert code == 0
        assert payload["neumann_feller"] is True

    def test_classify_custom_without_certificates_exits_3(self, capsys):
        code, payload = run_cli(capsys, "--model", "bd:custom",
                                "--rate", "(r+1)**2", "--measure", "1",
                                "--experiment", "classify", "--horizon", "100")
        assert code == 3
        assert payload["undetermined"] is True

    def test_classify_custom_with_certificates(self, capsys):
        code, payload = run_cli(capsys, "--model", "bd:custom",
                                "--rate", "(r+1)**2", "--measure", "1",
                                "--experiment", "classify", "--horizon", "100",
                                "--certify",
                                "measure=infinite,inv_b=convergent:p-series,"
                                "hamburger=divergent:grows")
        assert code == 0
        assert payload["neumann_feller"] is True  # infinite measure branch

    def test_gap_on_finite_file_graph(self, capsys, tmp_path):
        p = tmp_path / "g.txt"
        p.write_text("V 0 1 0\nV 1 1 0\nV 2 1 0\nE 0 1 1\nE 1 2 1\n")
        code, payload = run_cli(capsys, "--model", f"file:{p}",
                                "--experiment", "gap", "--t", "1",
                                "--truncations", "0,2,2")
        assert code == 0
        assert payload["max_gap"] <= 1e-10

    def test_unknown_model_exits_1(self, capsys):
        code, payload = run_cli(capsys, "--model", "nope",
                                "--experiment", "comb-beta")
        assert code == 1
        assert payload["error_kind"] == "input-error"

    def test_ec_on_comb(self, capsys):
        code, payload = run_cli(capsys, "--model", "comb", "--experiment", "ec",
                                "--horizon", "4")
        assert code == 0
        assert payload["constant"] > 1e3

    def test_uniform_l1(self, capsys):
        code, payload = run_cli(capsys, "--model", "bd:unit",
                                "--experiment", "uniform-l1", "--t", "0.5",
                                "--truncations", "30", "--grid", "16")
        assert code == 0
        assert payload["value"] <= payload["bound"] + 1e-9

    def test_feller_neumann_floor(self, capsys):
        code, payload = run_cli(capsys, "--model", "bd:geo",
                                "--experiment", "feller", "--kind", "neumann",
                                "--truncations", "30,40,50", "--alpha", "1")
        assert code == 0
        assert payload["verdict_hint"] == "floor-observed"

    def test_l1_defect_writes_files(self, capsys, tmp_path):
        out = tmp_path / "report"
        code = main(["--model", "bd:unit", "--experiment", "l1-defect",
                     "--truncations", "10:30:10", "--out", str(out)])
        assert code == 0
        payload = json.loads((tmp_path / "report.json").read_text())
        assert payload["experiment"] == "l1-defect"
        csv_text = (tmp_path / "report.csv").read_text()
        assert csv_text.splitlines()[0] == "k,size,l1,l2,pointwise,pairing,bound"
        tidy = (tmp_path / "report_tidy.csv").read_text()
        assert tidy.splitlines()[0] == "k,metric,value"

    def test_neumann_convergence_with_explicit_ref(self, capsys):
        code, payload = run_cli(capsys, "--model", "comb",
                                "--experiment", "neumann-convergence",
                                "--truncations", "2:5", "--ref", "7",
                                "--alpha", "1")
        assert code == 0
        pairs = payload["quadratic_pairings"]
        assert all(b <= a + 1e-10 for a, b in zip(pairs, pairs[1:]))

    def test_dirichlet_gap_finite(self, capsys, tmp_path):
        p = tmp_path / "g.txt"
        p.write_text("V 0 1 0\nV 1 2 0\nE 0 1 1\n")
        code, payload = run_cli(capsys, "--model", f"file:{p}",
                                "--experiment", "dirichlet-gap",
                                "--truncations", "0,1,1")
        assert code == 0
        assert payload["gap_floor"] <= payload["floor_threshold"]

    def test_dump_matrix(self, capsys):
        code, payload = run_cli(capsys, "--model", "bd:unit",
                                "--experiment", "uniform-l1", "--t", "0.5",
                                "--truncations", "10", "--dump-matrix")
        assert code == 0
        assert "matrix_dump" in payload
        assert payload["matrix_dump"].startswith("# kind=neumann")


class TestDeterminism:
    def test_reports_reproduce_modulo_timestamp(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        argv = ["--model", "bd:unit", "--experiment", "l1-defect",
                "--truncations", "5:20:5"]
        assert main(argv + ["--out", str(a)]) == 0
        assert main(argv + ["--out", str(b)]) == 0
        pa = json.loads((tmp_path / "a.json").read_text())
        pb = json.loads((tmp_path / "b.json").read_text())
        pa.pop("timestamp"), pb.pop("timestamp")
        assert pa == pb
        assert (tmp_path / "a.csv").read_text() == (tmp_path / "b.csv").read_text()

    def test_thread_cap_env_var(self, tmp_path, monkeypatch):
        monkeypatch.setenv("NEUMANN_LAB_THREADS", "2")
        out = tmp_path / "t"
        assert main(["--model", "bd:unit", "--experiment", "l1-defect",
                     "--truncations", "5:20:5", "--out", str(out)]) == 0
        monkeypatch.setenv("NEUMANN_LAB_THREADS", "1")
        out2 = tmp_path / "s"
        assert main(["--model", "bd:unit", "--experiment", "l1-defect",
                     "--truncations", "5:20:5", "--out", str(out2)]) == 0
        pa = json.loads((tmp_path / "t.json").read_text())
        pb = json.loads((tmp_path / "s.json").read_text())
        pa.pop("timestamp"), pb.pop("timestamp")
        assert pa == pb
