import json
import math

import numpy as np
import pytest

from data_io import (
    decode_float,
    dump_report,
    frame_to_csv,
    read_densities,
    read_kusuoka,
    read_partition,
    read_phi_table,
    read_scenarios,
    trace_frame,
    write_partition,
    write_scenarios,
)
from distributions import AtomicRV
from errors import InputError, SchemaError
from partitions import from_labels


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


# ── Loaders ──

def test_read_the_shipped_fixtures(data_dir):
    np.testing.assert_array_equal(read_scenarios(data_dir / "portfolio.csv").values, [-10.0, -5.0, 0.0, 5.0])
    assert read_partition(data_dir / "partitions" / "pairs.csv", 4).blocks == ((0, 1), (2, 3))
    assert [d.z.tolist() for d in read_densities(data_dir / "densities.csv")] == [[1, 1, 1, 1], [2, 2, 0, 0]]
    phi = read_phi_table(data_dir / "phi_table.csv")
    assert float(phi.phi(2.5)) == pytest.approx(6.5)


def test_scenarios_survive_a_write(tmp_path, rng):
    X = AtomicRV(rng.normal(size=50) * 1e3)
    write_scenarios(X, tmp_path / "x.csv")
    np.testing.assert_array_equal(read_scenarios(tmp_path / "x.csv").values, X.values)

    pi = from_labels([2, 0, 2, 1])
    write_partition(pi, tmp_path / "pi.csv")
    assert read_partition(tmp_path / "pi.csv").blocks == pi.blocks


@pytest.mark.parametrize(
    "text",
    [
        "",                          # empty file
        "value\n",                   # header only
        "amount\n1\n2\n",            # wrong column
        "value\n1\nabc\n",           # not a number
        "value\n1\ninf\n",           # not finite
    ],
)
def test_bad_scenario_files(tmp_path, text):
    with pytest.raises(SchemaError):
        read_scenarios(_write(tmp_path, "bad.csv", text))


def test_schema_errors_are_input_errors():
    assert issubclass(SchemaError, InputError)


def test_partition_checks(tmp_path):
    with pytest.raises(SchemaError):
        read_partition(_write(tmp_path, "p.csv", "block_id\n0\n1\n"), n=3)
    with pytest.raises(SchemaError):
        read_partition(_write(tmp_path, "q.csv", "block_id\n0\n-1\n"))
    with pytest.raises(SchemaError):
        read_partition(_write(tmp_path, "r.csv", "block_id\n0\n0.5\n"))


def test_density_checks(tmp_path):
    with pytest.raises(SchemaError):
        read_densities(_write(tmp_path, "d.csv", "z\n0.5\n0.5\n"))
    path = _write(tmp_path, "e.csv", "z\n3\n1\n0\n0\n")
    assert read_densities(path)[0].z.tolist() == [3, 1, 0, 0]
    with pytest.raises(SchemaError):
        read_densities(path, cap=2.0)


def test_kusuoka_checks(tmp_path, data_dir):
    spec = read_kusuoka(data_dir / "kusuoka.csv")
    assert [c.candidate_id for c in spec.candidates] == ["A", "B", "C"]
    assert spec.candidates[2].gamma == math.inf

    with pytest.raises(SchemaError):
        read_kusuoka(_write(tmp_path, "k.csv", "candidate_id,alpha,weight,gamma\nA,0.5,0.5,0\nA,1,0.5,1\n"))
    with pytest.raises(SchemaError):
        read_kusuoka(_write(tmp_path, "l.csv", "candidate_id,alpha,weight,gamma\nA,0.5,0.7,0\n"))
    with pytest.raises(SchemaError):
        read_kusuoka(_write(tmp_path, "m.csv", "candidate_id,alpha,weight\nA,0.5,1\n"))


def test_phi_table_must_be_convex(tmp_path):
    with pytest.raises(SchemaError):
        read_phi_table(_write(tmp_path, "phi.csv", "t,phi_t\n0,0\n1,2\n2,3\n"))


# ── Writers and reports ──

def test_csv_floats_keep_seventeen_digits():
    text = frame_to_csv(trace_frame([1, 2], [0.1, 1 / 3], True))
    lines = text.splitlines()
    assert lines[0] == "depth,value,stabilized"
    assert lines[1] == "1,0.10000000000000001,True"
    assert float(lines[2].split(",")[1]) == 1 / 3


def test_dump_report_layout():
    doc = json.loads(dump_report({
        "command": "es",
        "value": np.float64(7.5),
        "atoms": np.int64(4),
        "passed": np.bool_(False),
        "values": np.array([1.0, math.inf]),
        "verdicts": {0.5: "divergent"},
        "gap": -math.inf,
        "missing": math.nan,
    }))
    assert list(doc)[0] == "schema_version"
    assert doc["value"] == 7.5 and doc["atoms"] == 4 and doc["passed"] is False
    assert doc["values"] == [1.0, "+inf"]
    assert doc["verdicts"] == {"0.5": "divergent"}
    assert doc["gap"] == "-inf" and doc["missing"] == "nan"


def test_decode_float():
    assert decode_float("+inf") == math.inf
    assert decode_float("-inf") == -math.inf
    assert math.isnan(decode_float("nan"))
    assert decode_float(2.5) == 2.5
