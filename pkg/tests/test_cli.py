import json
import hashlib

import pytest
from hypothesis import given, strategies as st

from gaussext import cli


def run(args, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return cli.main(args)


def test_norms_assert_passes(tmp_path, monkeypatch, capsys):
    assert run(["norms", "--p", "1", "--m", "4,8,16,32", "--assert"], tmp_path, monkeypatch) == 0
    assert "fitted slope" in capsys.readouterr().out
    assert (tmp_path / "norms.csv").exists()


def test_manifest_lists_every_output(tmp_path, monkeypatch):
    assert run(["extend", "cost", "--p", "1", "--m", "4,8,16", "--out", "c.csv"], tmp_path, monkeypatch) == 0
    man = json.loads((tmp_path / "c.csv.manifest.json").read_text())
    names = {o["path"] for o in man["outputs"]}
    assert names == {"c.csv", "c_m4.json", "c_m8.json", "c_m16.json"}
    for o in man["outputs"]:
        assert o["sha256"] == hashlib.sha256((tmp_path / o["path"]).read_bytes()).hexdigest()
    assert man["config_sha256"] == cli.config_hash(man["config"])
    assert set(man["versions"]) == {"python", "numpy", "scipy", "gaussext"}


def test_missing_config_is_operational_error(tmp_path, monkeypatch, capsys):
    assert run(["run", "--config", "missing.toml"], tmp_path, monkeypatch) == 1
    assert "not found" in capsys.readouterr().err


def test_bad_config_reports_each_field(tmp_path, monkeypatch, capsys):
    (tmp_path / "bad.cfg").write_text("subcommand = norms\nbogus = 1\np = x\nm = 1\n")
    assert run(["run", "--config", "bad.cfg"], tmp_path, monkeypatch) == 1
    err = capsys.readouterr().err
    assert "unknown key 'bogus'" in err and "p:" in err and "m:" in err


def test_flag_type_errors_are_reported(tmp_path, monkeypatch, capsys):
    assert run(["norms", "--tol", "-1"], tmp_path, monkeypatch) == 1
    assert "--tol" in capsys.readouterr().err


def test_contract_violation_exit_code(tmp_path, monkeypatch):
    args = ["product", "table", "--p", "2", "--kmax", "3", "--damping", "inverse-square", "--res", "64",
            "--samples", "1000"]
    assert run(args + ["--assert"], tmp_path, monkeypatch) == 2
    assert run(args, tmp_path, monkeypatch) == 0


def test_same_config_twice_is_byte_identical(tmp_path, monkeypatch):
    cfg = "subcommand = product\np = 2\nkmax = 3\nres = 64\nsamples = 5000\nseed = 7\n"
    (tmp_path / "a.cfg").write_text(cfg + "out = a/table.csv\n")
    (tmp_path / "b.cfg").write_text(cfg + "out = b/table.csv\n")
    assert run(["run", "--config", "a.cfg"], tmp_path, monkeypatch) == 0
    assert run(["run", "--config", "b.cfg"], tmp_path, monkeypatch) == 0
    for name in ("table.csv", "table_mass.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert b"\r\n" not in (tmp_path / "a" / "table.csv").read_bytes()


def test_flags_override_config(tmp_path, monkeypatch):
    (tmp_path / "n.cfg").write_text("p = 1\nm = 4,8,16\n")
    assert run(["norms", "--config", "n.cfg", "--p", "2", "--out", "n.csv"], tmp_path, monkeypatch) == 0
    man = json.loads((tmp_path / "n.csv.manifest.json").read_text())
    assert man["config"]["p"] == [2.0] and man["config"]["m"] == [4, 8, 16]


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_DIR_ENV, str(tmp_path / "env"))
    assert run(["bv", "semivar", "--harmonic", "3"], tmp_path, monkeypatch) == 0
    data = json.loads((tmp_path / "env" / "semivar.json").read_text())
    assert data["semivariation"] == pytest.approx(7 / 6) and data["variation"] == pytest.approx(11 / 6)


def test_semivar_from_atoms_file(tmp_path, monkeypatch):
    (tmp_path / "atoms.json").write_text(json.dumps({"dim": 2, "atoms": [[0.0, 1.0, 0.0], [1.0, 0.0, 1.0]]}))
    assert run(["bv", "semivar", "--atoms", "atoms.json", "--out", "s.json"], tmp_path, monkeypatch) == 0
    data = json.loads((tmp_path / "s.json").read_text())
    assert data["variation"] == pytest.approx(2.0) and data["semivariation"] == pytest.approx(2 ** 0.5)


@pytest.mark.parametrize("args", [["bv", "ibp-check", "--assert"], ["bv", "lambda-indicator", "--assert"],
                                  ["bv", "extend-zero", "--assert"], ["extend", "reflect", "--p", "2", "--assert"],
                                  ["coarea", "--m", "4", "--res", "128", "--assert"]])
def test_subcommands_pass_their_checks(args, tmp_path, monkeypatch):
    assert run(args, tmp_path, monkeypatch) == 0


def test_lambda_indicator_domain_file(tmp_path, monkeypatch):
    (tmp_path / "d.json").write_text('{"kind": "rhomb", "m": 2}')
    assert run(["bv", "lambda-indicator", "--domain", "d.json", "--assert"], tmp_path, monkeypatch) == 0


def test_help_per_subcommand(capsys):
    for args in (["norms"], ["extend", "cost"], ["bv", "semivar"], ["product", "table"]):
        with pytest.raises(SystemExit) as e:
            cli.main(args + ["--help"])
        assert e.value.code == 0
    assert "--res" in capsys.readouterr().out


@given(st.lists(st.integers(2, 64), min_size=1, max_size=6))
def test_int_list_round_trip(ms):
    assert cli.convert("m", ",".join(map(str, ms))) == ms


@given(st.text(min_size=1, max_size=8).filter(lambda s: s.strip() not in ("1", "true", "yes", "on", "0", "false",
                                                                          "no", "off")
                                            and s.strip().lower() not in ("true", "yes", "on", "false", "no", "off")))
def test_bool_parse_rejects_garbage(text):
    with pytest.raises(ValueError):
        cli.convert("assert", text)
