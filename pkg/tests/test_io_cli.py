import json
import os

import numpy as np
import pytest

from specshift import cli
from specshift.io import (
    ParseError,
    csv_text,
    data_from_dict,
    fmt,
    load_data,
    parse_partition,
    partition_text,
    save_data,
)
from specshift.spectral_core import SpectralData, generate


def write(path, text):
    path.write_text(text)
    return str(path)


def test_fmt_roundtrip():
    for x in (0.1, 1 / 3, 2.0**-1074, 1e308, -0.0):
        assert float(fmt(x)) == x
    assert fmt(float("inf")) == "inf" and fmt(float("nan")) == "nan"


def test_csv_text_lf_only():
    text = csv_text(["a", "b"], [[1, 0.5], [2, 1 / 3]])
    assert text == "a,b\n1,0.5\n2,0.3333333333333333\n"


def test_save_load_exact(tmp_path):
    rng = np.random.default_rng(0)
    d = SpectralData(t=rng.normal(size=7) + 1j * rng.normal(size=7), nu=rng.uniform(0.1, 1, 7),
                     a=rng.normal(size=7) + 0j, b=rng.normal(size=7) * 1j, name="r").canonical()
    p = str(tmp_path / "r.sd")
    save_data(p, d, model={"kind": "finite_defect", "N": 1})
    e = load_data(p)
    for f in ("t", "nu", "a", "b"):
        np.testing.assert_array_equal(getattr(d, f), getattr(e, f))
    assert json.load(open(p))["model"]["N"] == 1


def test_tail_roundtrip(tmp_path):
    d = generate("lacunary", {"count": 10, "q": 3, "a_exp": -1.0})
    p = str(tmp_path / "g.sd")
    save_data(p, d)
    e = load_data(p)
    assert e.tail == d.tail


def test_yaml_and_generator(tmp_path):
    p = write(tmp_path / "g.sd", "name: g\ngenerator:\n  family: arithmetic\n  params: {count: 5}\n")
    d = load_data(p)
    np.testing.assert_array_equal(d.t, [1, 2, 3, 4, 5])


def test_json_syntax_error_position(tmp_path):
    p = write(tmp_path / "bad.sd", '{"t": [1, 2],\n "nu": [1,, 2]}')
    with pytest.raises(ParseError) as e:
        load_data(p)
    assert (e.value.line, e.value.column) == (2, 11)
    assert str(e.value).startswith(p + ":2:11:")


def test_yaml_syntax_error_position(tmp_path):
    p = write(tmp_path / "bad.sd", "t: [1, 2\nnu: 1\n")
    with pytest.raises(ParseError) as e:
        load_data(p)
    assert e.value.line is not None


def test_semantic_errors(tmp_path):
    with pytest.raises(ParseError, match="missing field 'b'"):
        data_from_dict({"t": [1], "nu": [1], "a": [1]})
    with pytest.raises(ParseError, match="expected a real number"):
        data_from_dict({"t": [1], "nu": [[1, 1]], "a": [1], "b": [1]})
    with pytest.raises(ParseError, match=r"a\[2\]"):
        data_from_dict({"t": [1, 2], "nu": [1, 1], "a": [1, "x"], "b": [1, 1]})
    p = write(tmp_path / "dup.sd", '{"t": [1, 1], "nu": [1, 1], "a": [1, 1], "b": [1, 1]}')
    with pytest.raises(ParseError, match="invalid spectral data: duplicate"):
        load_data(p)


def test_partition_parsing():
    side = parse_partition("# header\n1 1\n3 1  # comment\n", 4)
    np.testing.assert_array_equal(side, [1, 2, 1, 2])
    assert partition_text(side) == "1 1\n2 2\n3 1\n4 2\n"
    with pytest.raises(ParseError) as e:
        parse_partition("1 1\n2 3\n", 4, "p")
    assert (e.value.line, e.value.column) == (2, 3)
    with pytest.raises(ParseError, match="out of range"):
        parse_partition("9 1\n", 4)
    with pytest.raises(ParseError, match="already assigned on line 1"):
        parse_partition("1 1\n1 2\n", 4)


# --------------------------------------------------------------------------
# command line


@pytest.fixture
def two_point_file(tmp_path):
    return write(tmp_path / "two.sd", '{"name": "two", "t": [1, 2], "nu": [1, 1], "a": [1, 1], "b": [1, 1]}')


def test_eig_oracle(two_point_file, tmp_path, capsys):
    out = str(tmp_path / "e.csv")
    assert cli.main(["eig", "--input", two_point_file, "--oracle", "--out", out]) == 0
    lines = open(out).read().splitlines()
    assert lines[0] == "re,im,multiplicity,residual_abs_beta,newton_iters,oracle_re,oracle_im,distance"
    assert float(lines[1].split(",")[0]) == pytest.approx((3.5 - 4.25**0.5) / 2, abs=1e-14)
    assert "match: ok" in capsys.readouterr().out


def test_eig_disk_and_region(two_point_file, capsys):
    assert cli.main(["eig", "--input", two_point_file, "--disk", "2.75,0,0.5"]) == 0
    assert len(capsys.readouterr().out.splitlines()) == 2
    assert cli.main(["eig", "--input", two_point_file, "--disk", "0,0,1", "--region", "0,1,0,1"]) == 1


def test_usage_errors_exit_1(capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(["eig", "--tol", "abc"])
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        cli.main(["nope"])
    assert e.value.code == 1


def test_bad_input_exit_1(tmp_path, capsys):
    p = write(tmp_path / "bad.sd", '{"t": [1,\n  2,, 3]}')
    assert cli.main(["eig", "--input", p]) == 1
    assert "bad.sd:2:5" in capsys.readouterr().err
    assert cli.main(["eig", "--input", str(tmp_path / "missing.sd")]) == 1


def test_classify_exit_codes(tmp_path, capsys):
    ok = tmp_path / "ok.sd"
    save_data(str(ok), generate("lacunary", {"count": 30, "a_exp": -1.5, "b_exp": -1.5}))
    rep = str(tmp_path / "ok.txt")
    assert cli.main(["classify", "--input", str(ok), "--report", rep]) == 0
    assert "theorem: bio1" in open(rep).read()
    assert "completeness: both_complete" in capsys.readouterr().out
    # a = b = 1 on the integers: moment 1 diverges, no branch applies
    bad = write(tmp_path / "inc.sd", '{"generator": {"family": "arithmetic", "params": {"count": 30}}}')
    assert cli.main(["classify", "--input", bad, "--which", "completeness"]) == 2


def test_config_overrides_flags(two_point_file, tmp_path, capsys):
    cfg = write(tmp_path / "c.yaml", f"input: {two_point_file}\nformat: text\n")
    assert cli.main(["eig", "--input", "ignored.sd", "--format", "csv", "--config", cfg]) == 0
    assert capsys.readouterr().out.startswith("re  im")
    bad = write(tmp_path / "b.yaml", "colour: red\n")
    assert cli.main(["eig", "--config", bad]) == 1


def test_construct_defect_report(tmp_path, capsys):
    sd = str(tmp_path / "fd.sd")
    assert cli.main(["construct", "--kind", "finite-defect", "--N", "1", "--count", "60",
                     "--trunc", "50,60", "--out", sd]) == 0
    cert = open(sd + ".cert.txt").read()
    assert "theorem: coun.1" in cert
    assert "biorthogonal side: defect 1, stable over {50,60}" in cert
    capsys.readouterr()
    part = write(tmp_path / "p.part", "# all kernels\n" + "".join(f"{i} 1\n" for i in range(1, 60)))
    csv_out = str(tmp_path / "d.csv")
    assert cli.main(["defect", "--input", sd, "--partition", part, "--trunc", "50,60",
                     "--out", csv_out]) == 0
    assert "defect 0, stable over {50,60}" in capsys.readouterr().out
    assert open(csv_out).readline() == "trunc,kind,index,value\n"
    assert cli.main(["defect", "--input", sd, "--side", "2", "--trunc", "60"]) == 0
    assert "defect 1" in capsys.readouterr().err
    bad = write(tmp_path / "bad.part", "1 x\n")
    assert cli.main(["defect", "--input", sd, "--partition", bad]) == 1
    assert "bad.part:1:3" in capsys.readouterr().err
    merged = str(tmp_path / "all.txt")
    assert cli.main(["report", "--input", sd + ".cert.txt", "--out", merged]) == 0
    assert "theorems used: coun.1" in open(merged).read()
    assert cli.main(["report"]) == 1
    assert cli.main(["report", "--input", str(tmp_path / "nope.txt")]) == 1


def test_krein_cli(tmp_path, capsys):
    rep = str(tmp_path / "k.txt")
    assert cli.main(["krein", "--family", "cos-pi-z", "--trunc", "2000", "--samples", "5",
                     "--report", rep, "--out", str(tmp_path / "k.csv")]) == 0
    assert "verdict: removable" in open(rep).read()
    assert cli.main(["krein", "--trunc", "2000", "--delete", "0", "--volterra", "--samples", "5"]) == 0
    err = capsys.readouterr().err
    assert "verdict: not_removable_by_this_F" in err and "volterra_residual" in err


def test_csv_deterministic(tmp_path):
    outs = []
    for i in range(2):
        p = str(tmp_path / f"k{i}.csv")
        assert cli.main(["krein", "--trunc", "1000", "--samples", "7", "--seed", "3", "--out", p]) == 0
        outs.append(open(p, "rb").read())
    assert outs[0] == outs[1]
    assert b"\r" not in outs[0]


def test_run_config_validation():
    with pytest.raises(ValueError):
        cli.RunConfig(command="eig", tol=2.0)
    with pytest.raises(ValueError):
        cli.RunConfig(command="eig", trunc=[0])
    with pytest.raises(ValueError):
        cli.RunConfig(command="zzz")


def test_thread_env(two_point_file, monkeypatch, capsys):
    monkeypatch.setenv("SPECSHIFT_THREADS", "1")
    assert cli.main(["eig", "--input", two_point_file]) == 0
    assert os.environ["SPECSHIFT_THREADS"] == "1"
