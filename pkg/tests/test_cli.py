import json
import subprocess
import sys

import numpy as np
import pytest

from dynvar import cli
from dynvar.cli import (
    EXIT_DOMAIN,
    EXIT_INCONCLUSIVE,
    EXIT_INPUT,
    EXIT_NOT_CONJUGATE,
    EXIT_OK,
    EXIT_ORACLE,
    FIXTURE_DIR,
    GeneratorFile,
    decode_matrix,
    dumps,
    encode_matrix,
    fixture_files,
    load_generator,
    main,
    parse_generator,
    parse_omega,
    random_generator_file,
)
from dynvar.core import Superoperator, dag, left_mult, tracial
from dynvar.errors import CommutantTooSmall, ConventionMismatch, ParseError
from dynvar.generators import random_commutant_unitary


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def write(tmp_path, name, gf):
    path = tmp_path / name
    path.write_text(dumps(gf.to_json()))
    return str(path)


def transported(gf, u):
    big = np.kron(u.conj(), u)
    L = Superoperator(gf.sa.n, big @ gf.L.mat @ dag(big))
    return GeneratorFile(gf.sa, L)


class TestSerialization:
    def test_matrix_round_trip_is_exact(self, rng):
        a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        text = json.dumps(encode_matrix(a))
        assert np.array_equal(decode_matrix(json.loads(text)), a)

    def test_file_round_trip(self, tmp_path):
        gf = random_generator_file(3, "diag:1/2,1/4,1/4", 2, 5, "exact")
        back = load_generator(write(tmp_path, "g.json", gf))
        assert np.array_equal(back.L.mat, gf.L.mat)
        assert np.array_equal(back.sa.omega, gf.sa.omega)
        assert all(np.array_equal(a, b) for a, b in zip(back.ground_truth.momenta, gf.ground_truth.momenta))
        assert dumps(back.to_json()) == dumps(gf.to_json())

    def test_convention_mismatch(self):
        data = fixture_files()["dephasing_n2"].to_json()
        data["vec_convention"] = "row-major"
        with pytest.raises(ConventionMismatch):
            parse_generator(data)

    @pytest.mark.parametrize("mutate", [
        lambda d: d.pop("L"),
        lambda d: d.update(n=0),
        lambda d: d.update(n="2"),
        lambda d: d.update(L=[[1, 2]]),
        lambda d: d.update(omega=[[[1, 0]]]),
        lambda d: d.update(ground_truth={"v": []}),
    ])
    def test_parse_errors(self, mutate):
        data = fixture_files()["dephasing_n2"].to_json()
        mutate(data)
        with pytest.raises(ParseError):
            parse_generator(data)

    def test_not_an_object(self):
        with pytest.raises(ParseError):
            parse_generator([1, 2])

    def test_dumps_has_no_infinities(self):
        text = dumps({"gap": float("inf"), "x": np.float64(1.5), "ok": np.bool_(True)})
        assert json.loads(text) == {"gap": None, "x": 1.5, "ok": True}


class TestParseOmega:
    def test_tracial(self):
        assert np.allclose(parse_omega("tracial", 3).omega, np.eye(3) / 3)

    def test_rational(self):
        sa = parse_omega("diag:2/3,1/3", 2)
        assert np.allclose(np.diag(sa.omega), [2 / 3, 1 / 3])

    @pytest.mark.parametrize("spec", ["diag:1/2,1/3", "diag:1/2", "diag:a,b", "uniform", "diag:1/0,1"])
    def test_bad(self, spec):
        with pytest.raises(ParseError):
            parse_omega(spec, 2)


class TestFixtures:
    def test_shipped_files_match_builders(self):
        built = fixture_files()
        shipped = sorted(p.stem for p in FIXTURE_DIR.glob("*.json"))
        assert shipped == sorted(built)
        for name, gf in built.items():
            assert (FIXTURE_DIR / f"{name}.json").read_text() == dumps(gf.to_json())

    def test_dephasing(self, capsys):
        code, out, _ = run(["analyze", str(FIXTURE_DIR / "dephasing_n2.json"), "--json"], capsys)
        report = json.loads(out)
        assert code == EXIT_OK
        assert report["exact"] is True and report["elliptic"] is True
        assert report["invariant"]["m"] == 1
        assert report["invariant"]["v_norm"] < 1e-12
        assert report["mixing"]["limit_exists"] is True
        assert report["ground_truth"]["recovered"] is True

    def test_cyclic_shift(self, capsys):
        code, out, _ = run(["analyze", str(FIXTURE_DIR / "cyclic_shift_n3.json"), "--json"], capsys)
        report = json.loads(out)
        assert code == EXIT_OK
        assert report["elliptic"] is True and report["exact"] is False
        assert not any(report["exactness"]["per_criterion"].values())
        assert "invariant" not in report
        assert report["markov"]["ok"] is True

    def test_free_laplacian(self, capsys):
        code, out, _ = run(["analyze", str(FIXTURE_DIR / "free_laplacian_n3.json"), "--json"], capsys)
        report = json.loads(out)
        assert report["invariant"]["m"] == 2
        assert report["invariant"]["v_norm"] < 1e-12
        assert report["ground_truth"]["recovered"] is True

    def test_pure_potential(self, capsys):
        code, out, _ = run(["analyze", str(FIXTURE_DIR / "pure_potential_n2.json"), "--json"], capsys)
        report = json.loads(out)
        assert report["invariant"]["m"] == 0
        assert report["ground_truth"]["recovered"] is True
        assert report["mixing"]["limit_exists"] is False

    def test_human_output(self, capsys):
        code, out, _ = run(["analyze", str(FIXTURE_DIR / "dephasing_n2.json")], capsys)
        assert code == EXIT_OK
        assert "exact" in out


class TestAnalyzeExitCodes:
    def test_malformed(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        code, _, err = run(["analyze", str(path)], capsys)
        assert code == EXIT_INPUT
        assert "ParseError" in err

    def test_missing_file(self, tmp_path, capsys):
        code, _, err = run(["analyze", str(tmp_path / "absent.json")], capsys)
        assert code == EXIT_INPUT

    def test_convention(self, tmp_path, capsys):
        data = fixture_files()["dephasing_n2"].to_json()
        data["vec_convention"] = "row-major"
        path = tmp_path / "rm.json"
        path.write_text(json.dumps(data))
        code, _, err = run(["analyze", str(path)], capsys)
        assert code == EXIT_INPUT and "ConventionMismatch" in err

    def test_domain_violation(self, tmp_path, capsys):
        gf = GeneratorFile(tracial(2), left_mult(np.diag([1.0, 0.0])))
        code, out, _ = run(["analyze", write(tmp_path, "d.json", gf), "--json"], capsys)
        assert code == EXIT_DOMAIN
        assert json.loads(out)["exit_code"] == EXIT_DOMAIN

    def test_oracle_disagreement(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setattr(cli, "is_elliptic_ccp", lambda sa, L: False)
        code, out, _ = run(["analyze", str(FIXTURE_DIR / "dephasing_n2.json"), "--json"], capsys)
        assert code == EXIT_ORACLE


class TestRandom:
    def test_deterministic(self, tmp_path, capsys):
        argv = ["random", "--n", "3", "--omega", "tracial", "--m", "2", "--seed", "42", "--kind", "exact"]
        _, a, _ = run(argv, capsys)
        _, b, _ = run(argv, capsys)
        assert a == b
        _, c, _ = run(argv[:-4] + ["--seed", "43", "--kind", "exact"], capsys)
        assert a != c

    def test_out_file(self, tmp_path, capsys):
        argv = ["random", "--n", "2", "--seed", "1"]
        run(argv + ["--out", str(tmp_path / "a.json")], capsys)
        run(argv + ["--out", str(tmp_path / "b.json")], capsys)
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_round_trip(self, tmp_path, capsys):
        path = tmp_path / "r.json"
        run(["random", "--n", "3", "--m", "2", "--seed", "42", "--out", str(path)], capsys)
        code, out, _ = run(["analyze", str(path), "--json"], capsys)
        gt = json.loads(out)["ground_truth"]
        assert code == EXIT_OK
        assert gt["recovered"] and gt["v_error"] <= 1e-8 and gt["span_distance"] <= 1e-8

    def test_commutant_too_small(self, capsys):
        with pytest.raises(CommutantTooSmall):
            random_generator_file(2, "diag:2/3,1/3", 2, 7, "exact")
        code, _, err = run(["random", "--n", "2", "--omega", "diag:2/3,1/3", "--m", "2", "--seed", "7"], capsys)
        assert code == EXIT_INPUT and "CommutantTooSmall" in err

    @pytest.mark.parametrize("kind", ["elliptic_generic", "nonexact_auto"])
    def test_other_kinds(self, tmp_path, capsys, kind):
        path = tmp_path / "k.json"
        run(["random", "--n", "3", "--seed", "3", "--kind", kind, "--out", str(path)], capsys)
        code, out, _ = run(["analyze", str(path), "--json"], capsys)
        report = json.loads(out)
        assert code == EXIT_OK
        assert report["elliptic"] is True
        assert "ground_truth" not in json.loads(path.read_text())


class TestCompare:
    def setup_pair(self, tmp_path):
        gf = random_generator_file(3, "tracial", 2, 8, "exact")
        u = random_commutant_unitary(gf.sa, np.random.default_rng(1))
        a = write(tmp_path, "a.json", gf)
        b = write(tmp_path, "b.json", transported(gf, u))
        return a, b, u

    def test_search(self, tmp_path, capsys):
        a, b, _ = self.setup_pair(tmp_path)
        code, out, _ = run(["compare", a, b, "--search", "50"], capsys)
        assert code == EXIT_OK
        assert json.loads(out)["verdict"] == "Conjugate"

    def test_certificate(self, tmp_path, capsys):
        a, b, u = self.setup_pair(tmp_path)
        cert = tmp_path / "u.json"
        cert.write_text(json.dumps({"u": encode_matrix(u)}))
        code, out, _ = run(["compare", a, b, "--certificate", str(cert)], capsys)
        assert code == EXIT_OK and json.loads(out)["verdict"] == "Conjugate"
        cert.write_text(json.dumps(encode_matrix(np.eye(3))))
        code, out, _ = run(["compare", a, b, "--certificate", str(cert)], capsys)
        assert code == EXIT_INCONCLUSIVE and json.loads(out)["verdict"] == "Inconclusive"

    def test_m_mismatch(self, tmp_path, capsys):
        a = write(tmp_path, "a.json", random_generator_file(3, "tracial", 1, 1, "exact"))
        b = write(tmp_path, "b.json", random_generator_file(3, "tracial", 2, 1, "exact"))
        code, out, _ = run(["compare", a, b], capsys)
        assert code == EXIT_NOT_CONJUGATE and json.loads(out)["verdict"] == "NotConjugate"

    def test_scaled_metric(self, tmp_path, capsys):
        gf = fixture_files()["dephasing_n2"]
        p = np.sqrt(2) * np.diag([1j, -1j])
        from dynvar.generators import make_generator
        doubled = GeneratorFile(gf.sa, make_generator(gf.sa, [p], np.zeros((2, 2))))
        code, out, _ = run(["compare", write(tmp_path, "a.json", gf), write(tmp_path, "b.json", doubled)], capsys)
        assert code == EXIT_NOT_CONJUGATE

    def test_not_exact(self, capsys):
        fx = str(FIXTURE_DIR / "cyclic_shift_n3.json")
        code, _, err = run(["compare", fx, fx], capsys)
        assert code == EXIT_INPUT and "NotExact" in err

    def test_incompatible(self, capsys):
        code, _, err = run(["compare", str(FIXTURE_DIR / "dephasing_n2.json"),
                            str(FIXTURE_DIR / "free_laplacian_n3.json")], capsys)
        assert code == EXIT_INPUT and "IncompatibleStateAlgebras" in err

    def test_deterministic(self, tmp_path, capsys):
        a, b, _ = self.setup_pair(tmp_path)
        _, o1, _ = run(["compare", a, b, "--seed", "3"], capsys)
        _, o2, _ = run(["compare", a, b, "--seed", "3"], capsys)
        assert o1 == o2


class TestEvolve:
    def test_fixture(self, capsys):
        code, out, _ = run(["evolve", str(FIXTURE_DIR / "dephasing_n2.json"), "--t", "0.1,1,10"], capsys)
        report = json.loads(out)
        assert code == EXIT_OK
        assert report["ok"] is True and report["times"] == [0.1, 1.0, 10.0]

    def test_negative_time(self, capsys):
        code, _, err = run(["evolve", str(FIXTURE_DIR / "dephasing_n2.json"), "--t", "-1"], capsys)
        assert code == EXIT_INPUT and "NegativeTime" in err

    def test_bad_times(self, capsys):
        code, _, _ = run(["evolve", str(FIXTURE_DIR / "dephasing_n2.json"), "--t", "a,b"], capsys)
        assert code == EXIT_INPUT


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "dynvar.cli", "analyze", str(FIXTURE_DIR / "dephasing_n2.json")],
                          capture_output=True, text=True)
    assert proc.returncode == 0


def test_env_tolerance_override(monkeypatch):
    from dynvar.core import eps_eq
    monkeypatch.setenv("DYNVAR_TOL", "1e-6")
    assert eps_eq() == 1e-6
