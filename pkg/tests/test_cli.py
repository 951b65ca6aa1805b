import csv
import io

import pytest

from segpass.cli import main, parse_int_range


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_gain_table(capsys):
    code, out, _ = run(capsys, "gain", "--alpha", "0.0092", "--length", "20", "--segments", "1..8")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [int(r["M"]) for r in rows] == list(range(1, 9))
    assert float(rows[0]["gain_ratio"]) == 1.0
    ratios = [float(r["gain_ratio"]) for r in rows]
    assert ratios == sorted(ratios)


def test_parse_int_range():
    assert parse_int_range("2..4") == [2, 3, 4]
    assert parse_int_range("1,4,16") == [1, 4, 16]
    with pytest.raises(Exception):
        parse_int_range("0..3")


def test_unknown_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as info:
        main(["run", "--bogus"])
    assert info.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_config_error_exits_2(tmp_path, capsys):
    path = tmp_path / "bad.toml"
    path.write_text("colour = 'red'\n")
    code, _, err = run(capsys, "run", "--config", str(path))
    assert code == 2 and "colour" in err
    code, _, err = run(capsys, "run", "--trials", "1", "--segments", "0")
    assert code == 2


def test_run_overrides_and_determinism(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["run", "--trials", "2", "--seed", "7", "--protocol", "SM", "--segments", "4",
            "--length", "16", "--objective", "WSR", "--loss-case", "CaseI"]
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    rows = list(csv.DictReader(io.StringIO(a.read_text())))
    assert {r["framework"] for r in rows} == {"JCC-SM"}
    assert {r["seed"] for r in rows} == {"7"} and {r["trials"] for r in rows} == {"2"}


def test_converge_trace(capsys):
    code, out, _ = run(capsys, "converge", "--protocol", "SS", "--objective", "WSR")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert rows and {r["protocol"] for r in rows} == {"SS"}
    sur = [float(r["surrogate"]) for r in rows]
    assert all(b <= a + 1e-9 for a, b in zip(sur, sur[1:]))
    code, out, _ = run(capsys, "converge", "--objective", "MSE")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert {r["protocol"] for r in rows} == {"SS", "SA", "SM"}
