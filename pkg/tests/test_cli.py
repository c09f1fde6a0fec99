import json
import math
import re

import pytest
from click.testing import CliRunner

from plodd import PulseSequence, make_cdd, make_cpmg, make_udd, spectral_prefactor
from plodd.cache import SequenceCache, cache_key
from plodd.cli import cli, parse_range

FIXED = re.compile(r"^-?\d+\.\d{12}$")


@pytest.fixture
def run(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("PLODD_CACHE_DIR", raising=False)
    runner = CliRunner()

    def invoke(*args):
        return runner.invoke(cli, [str(a) for a in args], catch_exceptions=False)

    return invoke


def _value(stdout, label):
    for line in stdout.splitlines():
        if line.startswith(label + " = "):
            return float(line.split(" = ")[1].split()[0])
    raise AssertionError(f"{label} missing from {stdout!r}")


def test_generate_udd2(run, tmp_path):
    res = run("generate", "udd", 2, "-o", tmp_path / "u.json")
    assert res.exit_code == 0
    assert res.stdout.splitlines() == ["0.250000000000", "0.750000000000"]
    payload = json.loads((tmp_path / "u.json").read_text())
    assert payload["family"] == "UDD"
    assert payload["instants"] == pytest.approx([0.25, 0.75], abs=1e-15)


def test_generate_cdd3_has_five_instants(run):
    res = run("generate", "cdd", 3)
    lines = res.stdout.splitlines()
    assert res.exit_code == 0 and len(lines) == 5
    assert all(FIXED.match(v) for v in lines)


@pytest.mark.parametrize("args", [("cpmg", 0), ("xy4", 2), ("udd", "two"), ("cdd", -1)])
def test_generate_usage_errors(run, args):
    res = run("generate", *args)
    assert res.exit_code == 2
    assert "Usage" in res.output


def test_generate_io_error(run, tmp_path):
    res = run("generate", "udd", 2, "-o", tmp_path / "missing" / "u.json")
    assert res.exit_code == 1


def test_optimize_two_pulses(run, tmp_path):
    res = run("optimize", "--n", 2, "--alpha", 3, "--no-cache", "-o", tmp_path / "p.json")
    assert res.exit_code == 0
    assert res.stdout.splitlines()[:2] == ["0.250000000000", "0.750000000000"]
    payload = json.loads((tmp_path / "p.json").read_text())
    assert payload["instants"] == [0.25, 0.75]
    for key in ("alpha", "prefactor", "kkt_residual", "multipliers"):
        assert key in payload


def test_optimize_alpha2_close_to_cpmg(run):
    res = run("optimize", "--n", 10, "--alpha", 2, "--no-cache")
    assert res.exit_code == 0
    ref = spectral_prefactor(make_cpmg(10), 2).value
    assert abs(_value(res.stdout, "I_n") - ref) <= 0.05 * ref


def test_optimize_cache_hit_is_identical(run, tmp_path):
    args = ("optimize", "--n", 12, "--alpha", 4.5, "--cache-dir", tmp_path / "c")
    first = run(*args, "-o", tmp_path / "a.json")
    second = run(*args, "-o", tmp_path / "b.json")
    assert first.exit_code == second.exit_code == 0
    assert "cache: miss" in first.stderr and "cache: hit" in second.stderr
    assert first.stdout == second.stdout
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert _value(second.stdout, "iterations") == _value(first.stdout, "iterations")


def test_optimize_honours_cache_env(run, tmp_path, monkeypatch):
    monkeypatch.setenv("PLODD_CACHE_DIR", str(tmp_path / "env"))
    assert run("optimize", "--n", 4, "--alpha", 2.5).exit_code == 0
    assert len(list((tmp_path / "env").glob("plodd-n4-*.json"))) == 1


def test_default_cache_directory(run, tmp_path):
    assert run("optimize", "--n", 4, "--alpha", 2.5).exit_code == 0
    assert (tmp_path / "plodd-cache").is_dir()


def test_tampered_cache_entry_is_recomputed(run, tmp_path):
    cache_dir = tmp_path / "c"
    args = ("optimize", "--n", 10, "--alpha", 4, "--cache-dir", cache_dir)
    clean = run(*args)
    path = SequenceCache(cache_dir).path(cache_key("PLODD", 10, 4))
    original = path.read_text()
    payload = json.loads(original)
    payload["instants"][0] += 1e-3
    payload["instants"][-1] -= 1e-3
    path.write_text(json.dumps(payload))
    again = run(*args)
    assert again.exit_code == 0
    assert "cache: miss" in again.stderr
    assert again.stdout == clean.stdout
    assert path.read_text() == original


def clean_instants(stdout):
    return [float(v) for v in stdout.splitlines()[:10]]


def test_tampered_prefactor_is_rejected(tmp_path):
    from plodd import PloddProblem

    cache = SequenceCache(tmp_path)
    problem = PloddProblem(6, 3.5)
    result = cache.solve(problem)
    path = cache.path(cache_key("PLODD", 6, 3.5))
    payload = json.loads(path.read_text())
    payload["prefactor"] *= 0.5
    path.write_text(json.dumps(payload))
    assert cache.load(problem) is None
    assert cache.solve(problem).prefactor == result.prefactor


@pytest.mark.parametrize("args", [("--n", 3, "--alpha", 2), ("--n", 4, "--alpha", 0), ("--n", 4, "--alpha", 12)])
def test_optimize_usage_errors(run, args):
    assert run("optimize", *args, "--no-cache").exit_code == 2


def test_optimize_nonconvergence_writes_best_iterate(run, tmp_path, monkeypatch):
    from plodd import optimizer

    real = optimizer.SolverOptions.__init__

    def starved(self, *a, **k):
        real(self, *a, **k)
        object.__setattr__(self, "max_iter", 0)
        object.__setattr__(self, "fallback_steps", 1)

    monkeypatch.setattr(optimizer.SolverOptions, "__init__", starved)
    res = run("optimize", "--n", 10, "--alpha", 8, "--no-cache", "-o", tmp_path / "best.json")
    assert res.exit_code == 3
    assert "warning" in res.stderr
    payload = json.loads((tmp_path / "best.json").read_text())
    assert payload["converged"] is False and len(payload["instants"]) == 10


def test_optimize_continuation(run):
    res = run("optimize", "--n", 10, "--alpha", 8, "--continuation", 6, "--no-cache")
    direct = run("optimize", "--n", 10, "--alpha", 8, "--no-cache")
    assert res.exit_code == 0
    a = clean_instants(res.stdout)
    b = clean_instants(direct.stdout)
    assert max(abs(x - y) for x, y in zip(a, b)) <= 1e-9


def test_evaluate_cpmg4_alpha6_diverges(run):
    res = run("evaluate", "cpmg", 4, "--alpha", 6)
    assert res.exit_code == 4
    assert "divergent: alpha >= 2m+2" in res.output


def test_evaluate_single_pulse(run):
    res = run("evaluate", "custom", "[0.5]", "--alpha", 2)
    assert res.exit_code == 0
    assert _value(res.stdout, "I_n") == pytest.approx(math.log(2), rel=1e-12)
    assert "branch = even" in res.stdout.lower()
    assert _value(res.stdout, "vanishing_order") == 1


def test_evaluate_with_oracle(run):
    res = run("evaluate", "udd", 4, "--alpha", 3, "--with-oracle")
    assert res.exit_code == 0
    diff = _value(res.stdout, "difference")
    assert diff <= max(_value(res.stdout, "error_bound"), 1e-8)
    assert _value(res.stdout, "divergence_residual_max") < 1e-9


@pytest.mark.parametrize("args", [("custom", "[0.5, 0.2]"), ("custom", "oops"), ("udd",), ("udd", 4)])
def test_evaluate_usage_errors(run, args):
    extra = () if len(args) == 2 and args[0] == "udd" else ("--alpha", 2)
    assert run("evaluate", *args, *extra).exit_code == 2


def test_evaluate_missing_file(run):
    assert run("evaluate", "nope.json", "--alpha", 2).exit_code == 1


@pytest.mark.parametrize("family, param, alpha", [("udd", 7, 3.3), ("cpmg", 6, 2), ("cdd", 4, 5.5)])
def test_generate_file_evaluate_round_trip(run, tmp_path, family, param, alpha):
    path = tmp_path / "seq.json"
    assert run("generate", family, param, "-o", path).exit_code == 0
    res = run("evaluate", path, "--alpha", alpha)
    maker = {"udd": make_udd, "cpmg": make_cpmg, "cdd": make_cdd}[family]
    direct = spectral_prefactor(maker(param), alpha).value
    loaded = spectral_prefactor(PulseSequence.from_json(json.loads(path.read_text())), alpha).value
    assert loaded == direct
    assert res.stdout.splitlines()[0] == f"I_n = {direct:.12e}"


def test_scan_csv(run, tmp_path):
    res = run("scan", "--alpha", 4, "--families", "udd,cpmg,plodd,cdd", "--n", "2:12", "-o", tmp_path / "s.csv",
              "--no-cache")
    assert res.exit_code == 0
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "family,n,alpha,I_n,feasible"
    assert sum(ln.startswith("CDD,") for ln in lines) == 3
    assert sum(ln.startswith("PLODD,") for ln in lines) == 6


def test_scan_to_stdout(run):
    res = run("scan", "--alpha", 6, "--families", "cpmg", "--n", "2:4")
    assert res.exit_code == 0
    assert res.stdout.splitlines()[1:] == ["CPMG,2,6.000000000000,,false", "CPMG,3,6.000000000000,,false",
                                           "CPMG,4,6.000000000000,,false"]


def test_regress_cpmg_alpha2(run):
    res = run("regress", "--family", "cpmg", "--alpha", 2, "--n", "4:30:2")
    assert res.exit_code == 0
    assert _value(res.stdout, "a1") == pytest.approx(-0.9899, abs=0.05)
    assert "+/-" in res.stdout


def test_regress_without_data(run):
    assert run("regress", "--family", "cdd", "--alpha", 2, "--n", "4:8").exit_code == 3


def test_trend_csv(run):
    res = run("trend", "--n", 10, "--alpha", "2:12:0.5")
    assert res.exit_code == 0
    lines = res.stdout.splitlines()
    assert lines[0] == "alpha,gap_udd,ln_In"
    assert len(lines) == 22
    gaps = [float(ln.split(",")[1]) for ln in lines[1:]]
    assert all(b <= a + 1e-6 for a, b in zip(gaps, gaps[1:]))


@pytest.mark.parametrize("args", [("--n", 3), ("--n", 10, "--alpha", "0:2")])
def test_trend_usage_errors(run, args):
    assert run("trend", *args).exit_code == 2


@pytest.mark.parametrize(
    "text, integer, expected",
    [("4:10:2", True, [4, 6, 8, 10]), ("2:3", True, [2, 3]), ("2:3:0.5", False, [2.0, 2.5, 3.0]), ("5", True, [5])],
)
def test_parse_range(text, integer, expected):
    assert parse_range(text, integer) == expected


def test_main_entry_point(capsys):
    from plodd.cli import main

    with pytest.raises(SystemExit) as info:
        main(["generate", "cpmg", "2"])
    assert info.value.code == 0
    assert capsys.readouterr().out == "0.250000000000\n0.750000000000\n"
