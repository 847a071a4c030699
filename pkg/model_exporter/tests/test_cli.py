"""Command line contract and the round trip into the consuming package."""

import json
import math

import numpy as np

from model_exporter.cli import main

CLAMP_LO = math.log(1e-7) - math.log1p(-1e-7)


def write_inputs(tmp_path, spec_extra=None):
    spec = {
        "n": 2,
        "mask_strategy": "zero_feature",
        "variable_map": {"0": [0], "1": [1]},
        "output_mode": "log_odds",
    }
    spec.update(spec_extra or {})
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(spec))
    sample_path = tmp_path / "sample.csv"
    sample_path.write_text("1.0,1.0\n")
    return spec_path, sample_path


def test_cli_exports_popcount_table(tmp_path):
    spec_path, sample_path = write_inputs(tmp_path)
    out = tmp_path / "table.json"
    code = main(
        [
            "--model",
            "model_exporter.toys:popcount_probability",
            "--sample",
            str(sample_path),
            "--spec",
            str(spec_path),
            "--out",
            str(out),
        ]
    )
    assert code == 0
    doc = json.loads(out.read_text())
    expected = [CLAMP_LO, 0.0, 0.0, -CLAMP_LO]
    assert np.abs(np.array(doc["values"]) - expected).max() <= 1e-8


def test_cli_batch_size_override_changes_nothing(tmp_path):
    spec_path, sample_path = write_inputs(tmp_path)
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    base = [
        "--model",
        "model_exporter.toys:popcount_probability",
        "--sample",
        str(sample_path),
        "--spec",
        str(spec_path),
    ]
    assert main(base + ["--out", str(a)]) == 0
    assert main(base + ["--out", str(b), "--batch-size", "1"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_cli_exit_codes(tmp_path, capsys):
    spec_path, sample_path = write_inputs(tmp_path)
    out = tmp_path / "table.json"

    # usage: a required flag is missing
    assert main(["--model", "m:f", "--spec", str(spec_path)]) == 1

    # data: unreadable spec
    assert (
        main(
            [
                "--model",
                "model_exporter.toys:constant_half",
                "--sample",
                str(sample_path),
                "--spec",
                str(tmp_path / "missing.json"),
                "--out",
                str(out),
            ]
        )
        == 2
    )

    # model failure: callable that cannot take a batch; stderr names the mask
    assert (
        main(
            [
                "--model",
                "math:sin",
                "--sample",
                str(sample_path),
                "--spec",
                str(spec_path),
                "--out",
                str(out),
            ]
        )
        == 3
    )
    assert "mask index 0" in capsys.readouterr().err


def test_exported_table_loads_and_extracts_in_the_consumer(tmp_path):
    from ilens import value_table
    from ilens.extraction import extract

    spec_path, sample_path = write_inputs(tmp_path)
    out = tmp_path / "table.json"
    assert (
        main(
            [
                "--model",
                "model_exporter.toys:popcount_probability",
                "--sample",
                str(sample_path),
                "--spec",
                str(spec_path),
                "--out",
                str(out),
            ]
        )
        == 0
    )
    table = value_table.load(out)
    assert table.n == 2
    assert table.values.values[0] == CLAMP_LO
    iset, params, trace = extract(table)
    assert iset.n == 2
    assert np.all(np.isfinite(iset.i_and.values))
    assert np.all(np.isfinite(iset.i_or.values))


def test_constant_export_is_all_zero_through_the_cli(tmp_path):
    spec_path, sample_path = write_inputs(tmp_path)
    out = tmp_path / "table.json"
    assert (
        main(
            [
                "--model",
                "model_exporter.toys:constant_half",
                "--sample",
                str(sample_path),
                "--spec",
                str(spec_path),
                "--out",
                str(out),
            ]
        )
        == 0
    )
    assert all(v == 0.0 for v in json.loads(out.read_text())["values"])
