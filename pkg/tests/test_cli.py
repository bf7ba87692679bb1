import json
import subprocess
import sys

import pytest

from furstenberg.certificate import two_gen
from furstenberg.circle import CircleMeasure, order_k_detail
from furstenberg.cli import EXIT_CHECK_FAILED, EXIT_ERROR, EXIT_OK, build_parser, main
from furstenberg.config import RunConfig, parse_config
from furstenberg.constants import SCHEMA_VERSION
from furstenberg.errors import DeterminantNotOne, ParseError, WeightsNotProbability

TWO_GEN_3 = (
    '{"atoms":[{"m":[["4/5","-3/5"],["3/5","4/5"]],"w":"1/2"},'
    '{"m":[["28/27","0"],["0","27/28"]],"w":"1/2"}]}'
)
FAST = ["--samples", "2000", "--burn-in", "200", "--n-max", "4"]


def run_cli(args, stdin=None, env=None):
    import os

    full_env = dict(os.environ, **(env or {}))
    return subprocess.run(
        [sys.executable, "-m", "furstenberg.cli", *args],
        input=stdin, capture_output=True, text=True, env=full_env, timeout=600,
    )


# ---------------------------------------------------------------- parse_config

def test_parse_two_gen_three():
    spec = parse_config(TWO_GEN_3).build_measure()
    ref = two_gen(3)
    assert [a.exact for a in spec.atoms] == [a.exact for a in ref.atoms]
    assert [a.weight for a in spec.atoms] == [a.weight for a in ref.atoms]


def test_parse_weights_not_probability():
    text = TWO_GEN_3.replace('"w":"1/2"}]', '"w":"1/6"}]')
    with pytest.raises(WeightsNotProbability):
        parse_config(text)


def test_parse_determinant_not_one():
    text = '{"atoms":[{"m":[["1+1*sqrt(5)","0"],["0","1"]],"w":"1"}]}'
    with pytest.raises(DeterminantNotOne):
        parse_config(text)


def test_parse_errors_locate_problem():
    with pytest.raises(ParseError, match="line 2"):
        parse_config('{"atoms":\n [}')
    with pytest.raises(ParseError, match=r"atoms\[1\]"):
        parse_config('{"atoms":[{"m":[["1","0"],["0","1"]],"w":"1/2"},{"m":[["x","0"],["0","1"]],"w":"1/2"}]}')
    with pytest.raises(ParseError, match="unknown config fields: colour"):
        parse_config('{"seed": 1, "colour": "red"}')
    with pytest.raises(ParseError):
        parse_config('{"seed": -1}')
    with pytest.raises(ParseError):
        parse_config('{"atoms":[{"m":[["1","0"],["0","1"]],"w":"one"}]}')


def test_config_round_trip():
    cfg = RunConfig(measure=json.loads(TWO_GEN_3), seed=2**63 + 5, workers=3, samples=123, burn_in=7,
                    n_max=5, runs=11, out="/tmp/x", params={"t": 0.5, "P": [100.0, 10000.0]})
    assert parse_config(cfg.dumps()) == cfg
    ex = RunConfig(example={"family": "two_gen", "n": 20})
    assert parse_config(ex.dumps()) == ex
    assert parse_config(ex.dumps()).build_measure().name == "two_gen(20)"


def test_example_json_round_trip():
    spec = two_gen(7)
    again = parse_config(json.dumps(spec.to_json())).build_measure()
    assert [a.exact for a in again.atoms] == [a.exact for a in spec.atoms]


# ---------------------------------------------------------------- dispatch

def test_help_documents_flags_and_env():
    text = build_parser().format_help()
    for cmd in ["lyapunov", "stationary", "detail", "certificate", "renewal", "pingpong", "entropy", "checks", "example"]:
        assert cmd in text
    sub = run_cli(["lyapunov", "--help"]).stdout
    for flag in ["--seed", "--workers", "--samples", "--burn-in", "--n-max", "--runs", "--out", "FURSTENBERG_"]:
        assert flag in sub
    assert "default" in sub


def test_outputs_embed_provenance(tmp_path, capsys):
    cfg_file = tmp_path / "m.json"
    cfg_file.write_text(TWO_GEN_3)
    out = tmp_path / "out"
    code = main(["stationary", "--input", str(cfg_file), "--seed", "4", "--out", str(out), *FAST])
    assert code == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    for key in ["config", "seed", "build_id", "schema_version"]:
        assert key in doc
    assert doc["seed"] == 4 and doc["schema_version"] == SCHEMA_VERSION
    assert doc["config"]["measure"] == json.loads(TWO_GEN_3)
    assert json.loads((out / "stationary.json").read_text()) == doc
    first = (out / "stationary.csv").read_text().splitlines()[0]
    meta = json.loads(first[2:])
    assert meta["seed"] == 4 and meta["build_id"] == doc["build_id"] and meta["config"] == doc["config"]


def test_detail_from_csv_matches_library(tmp_path, capsys):
    lam = two_gen(3)
    from furstenberg.walks import estimate_stationary

    measure = estimate_stationary(lam, 200, 2000, 1).measure
    path = tmp_path / "measure.csv"
    path.write_text(measure.to_csv())
    assert main(["detail", "--input", str(path), "--r", "0.01", "--k", "2"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert set(doc["result"]) == {"r", "k", "detail"}
    expected = order_k_detail(CircleMeasure.from_csv(path.read_text()), 0.01, 2)
    assert doc["result"]["detail"] == pytest.approx(expected, rel=1e-12)
    assert doc["result"]["detail"] == pytest.approx(order_k_detail(measure, 0.01, 2), rel=1e-12)


def test_stdin_pipeline():
    example = run_cli(["example", "two_gen", "--n", "3"])
    assert example.returncode == EXIT_OK
    res = run_cli(["entropy", "--n-max", "4"], stdin=example.stdout)
    assert res.returncode == EXIT_OK, res.stderr
    doc = json.loads(res.stdout)
    assert doc["result"]["all_distinct"] == [True] * 4
    explicit = run_cli(["entropy", "--n-max", "4", "--input", "-"], stdin=example.stdout)
    assert explicit.stdout == res.stdout


def test_exit_code_error_on_bad_input(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"atoms":[{"m":[["2","0"],["0","1"]],"w":"1"}]}')
    res = run_cli(["entropy", "--input", str(bad)])
    assert res.returncode == EXIT_ERROR
    assert json.loads(res.stderr)["error"]["code"] == "determinant_not_one"
    assert run_cli(["lyapunov", "--steps", "notanumber"]).returncode == EXIT_ERROR
    assert run_cli(["entropy", "--input", str(tmp_path / "missing.json")]).returncode == EXIT_ERROR


def test_exit_code_check_failure():
    # with norm 2 the attracting arcs are far wider than the pi/4 spacing of the directions
    spec = '{"atoms":[{"m":[["2","0"],["0","1/2"]],"w":"1/2"},{"m":[["5/4","3/4"],["3/4","5/4"]],"w":"1/2"}]}'
    res = run_cli(["pingpong", "--epsilon", "0.3"], stdin=spec)
    assert res.returncode == EXIT_CHECK_FAILED
    assert json.loads(res.stdout)["result"]["certified"] is False


def test_pingpong_success_exit_zero():
    spec = '{"atoms":[{"m":[["40","0"],["0","1/40"]],"w":"1/2"},{"m":[["1601/80","1599/80"],["1599/80","1601/80"]],"w":"1/2"}]}'
    res = run_cli(["pingpong", "--epsilon", "0.15"], stdin=spec)
    assert res.returncode == EXIT_OK, res.stdout + res.stderr
    assert json.loads(res.stdout)["result"]["certified"] is True


def test_env_override_seed():
    spec = two_gen(3).to_json()
    text = json.dumps(spec)
    a = run_cli(["lyapunov", "--steps", "1000", "--lyapunov-samples", "100"], stdin=text, env={"FURSTENBERG_SEED": "11"})
    b = run_cli(["lyapunov", "--steps", "1000", "--lyapunov-samples", "100", "--seed", "11"], stdin=text)
    c = run_cli(["lyapunov", "--steps", "1000", "--lyapunov-samples", "100"], stdin=text)
    assert a.returncode == b.returncode == c.returncode == EXIT_OK
    assert json.loads(a.stdout)["seed"] == 11
    assert a.stdout == b.stdout and a.stdout != c.stdout
    bad = run_cli(["lyapunov"], stdin=text, env={"FURSTENBERG_SEED": "eleven"})
    assert bad.returncode == EXIT_ERROR and "FURSTENBERG_SEED" in bad.stderr


def test_checks_deterministic(tmp_path):
    out = tmp_path / "out"
    a = run_cli(["checks", "--seed", "7", "--out", str(out)])
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    b = run_cli(["checks", "--seed", "7", "--out", str(out)])
    second = {p.name: p.read_bytes() for p in out.iterdir()}
    assert a.returncode == b.returncode
    assert a.returncode in (EXIT_OK, EXIT_CHECK_FAILED)
    assert a.stdout == b.stdout
    assert first == second and set(first) == {"checks.json", "checks.jsonl"}
    doc = json.loads(a.stdout)
    assert (a.returncode == EXIT_CHECK_FAILED) == doc["result"]["failed"]


def test_workers_must_be_positive():
    assert run_cli(["checks", "--workers", "0"]).returncode == EXIT_ERROR
