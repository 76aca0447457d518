import json
import math
from decimal import Decimal

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsbc.config import ConfigError, ExperimentConfig, load_config, parse_list, parse_number
from dsbc.output import ResultRow, Table, emit_results, format_value, read_rows, run_hash


def test_parse_number_and_lists():
    assert parse_number("sqrt(2)") == pytest.approx(np.sqrt(2))
    assert parse_list("1, 2.5,3") == (1.0, 2.5, 3.0)
    assert parse_list("linspace(0, 2.8, 41)")[1] == pytest.approx(0.07)
    assert parse_list("logspace(-3, 0, 4)") == pytest.approx((1e-3, 1e-2, 1e-1, 1))
    for bad in ("linspace(0, 1)", "abc", "logspace(0, 1, x)", ""):
        with pytest.raises(ConfigError):
            parse_list(bad)


def test_load_config_sections():
    text = """
[run]
t_f = 500
method = rk45
target = w

[grid]
N = 3, 4
delta_a = sqrt(2)
kappa = auto

[ion]
n_system = 3
wave = traveling
"""
    cfg = load_config(text, "sweep")
    assert cfg.t_f == 500 and cfg.method == "rk45" and cfg.target == "w"
    assert cfg.N == (3, 4) and cfg.kappa is None
    assert cfg.ion == {"n_system": 3, "wave": "traveling"}
    assert cfg.model == "ideal-dsbc"


@pytest.mark.parametrize(
    "text",
    [
        "[run]\nbogus = 1\n",
        "[extra]\nx = 1\n",
        "[ion]\nspin = 3\n",
        "[run]\nmethod = euler\n",
        "[grid]\nN = 2.5\n",
        "[run]\nsamples = 1\n",
        "[run]\nmodel = ion-chain\n",
        "no section\n",
        "[grid]\npairs = 0.1\n",
    ],
)
def test_strict_rejection(text):
    with pytest.raises(ConfigError):
        load_config(text, "dynamics")


def test_inline_comments():
    cfg = load_config("[run]\nt_f = 50   ; short run\n[grid]\nN = 4  # four spins\n", "sweep")
    assert cfg.t_f == 50 and cfg.N == (4,)


def test_model_is_inferred_for_ion_experiments():
    assert load_config(None, "heating").model == "ion-chain"
    with pytest.raises(ConfigError):
        load_config("[run]\nmodel = ideal-dsbc\n", "anisotropy")


def test_echo_skips_runtime_only_fields():
    a = load_config(None, "dynamics", out="x", workers=1)
    b = load_config(None, "dynamics", out="y", workers=4)
    assert a.echo() == b.echo()
    assert run_hash(a.echo()) == run_hash(b.echo())
    assert run_hash(a.echo()) != run_hash(a.replace(t_f=10.0).echo())


def test_fidelity_and_error_sum_to_one_exactly():
    row = ResultRow((("g", 0.1),), 0.9987654321234567)
    cells = row.cells()
    f, e = Decimal(cells[-4]), Decimal(cells[-3])
    assert f + e == 1
    assert row.error == pytest.approx(1 - row.fidelity, abs=0)


def test_row_rejects_out_of_range_fidelity():
    with pytest.raises(ValueError):
        ResultRow((), 1.5)


def test_format_value_twelve_digits():
    assert format_value(1 / 3) == "0.333333333333"
    assert format_value(True) == "true"
    assert format_value(float("nan")) == "nan"
    assert format_value(7) == "7"


def test_emit_layout_and_round_trip(tmp_path):
    rows = [
        ResultRow((("N", 3), ("delta_a", math.sqrt(2)), ("g", 0.06)), 0.998765, trace_error=3e-13),
        ResultRow((("N", 3), ("delta_a", 1.0), ("g", 0.06)), 0.5, asymptotic_fidelity=0.75),
    ]
    table = Table("ratios", ("n", "ratio"), ((1, 0.25), (2, 1 / 3)))
    echo = load_config(None, "sweep").echo()
    paths = emit_results(rows, tmp_path, "sweep", echo, [table])
    raw = paths["csv"].read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().splitlines()
    assert lines[0] == "N,delta_a,g,fidelity,error,asymptotic_fidelity,trace_error"
    assert lines[1].split(",")[1] == "1.41421356237"
    assert paths["ratios"].read_text().splitlines()[2] == "2,0.333333333333"
    summary = json.loads(paths["json"].read_text())
    assert summary["run_hash"] == run_hash(echo)
    assert summary["config"]["experiment"] == "sweep"
    assert read_rows(paths["json"]) == rows


def test_mismatched_rows_rejected(tmp_path):
    rows = [ResultRow((("a", 1),), 0.5), ResultRow((("b", 1),), 0.5)]
    with pytest.raises(ValueError):
        emit_results(rows, tmp_path, "x", {})


@settings(max_examples=50, deadline=None)
@given(f=st.floats(0, 1), x=st.floats(-1e6, 1e6, allow_nan=False))
def test_rows_round_trip_through_text(f, x, tmp_path_factory):
    row = ResultRow((("x", x),), f)
    out = tmp_path_factory.mktemp("rt")
    paths = emit_results([row], out, "rt", {})
    assert read_rows(paths["json"]) == [row]
    cells = paths["csv"].read_text().splitlines()[1].split(",")
    assert Decimal(cells[1]) + Decimal(cells[2]) == 1


def test_experiment_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(experiment="nope")
    with pytest.raises(ConfigError):
        ExperimentConfig(N=())
    with pytest.raises(ConfigError):
        ExperimentConfig(experiment="heating", ion={"colour": 1})
