import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hpl.errors import ConfigError, DomainError
from hpl.io import load_config, read_path_binary, read_path_csv, write_path_binary, write_path_csv
from hpl.pathgen import Method, SamplePath, gaussian_path
from hpl.spectral_cov import NoiseModel

values = arrays(float, st.integers(1, 50), elements=st.floats(-1e6, 1e6))


@settings(max_examples=30, deadline=None)
@given(values)
def test_csv_round_trip(tmp_path_factory, v):
    f = tmp_path_factory.mktemp("csv") / "p.csv"
    write_path_csv(SamplePath(v), f)
    back = read_path_csv(f)
    assert np.array_equal(back.values, v)
    assert back.method is Method.EXTERNAL


def test_csv_layout(tmp_path):
    f = tmp_path / "p.csv"
    write_path_csv(SamplePath(np.array([0.5, -2.0])), f)
    assert f.read_text().splitlines() == ["t,value", "1,0.5", "2,-2.0"]


@settings(max_examples=30, deadline=None)
@given(values, st.integers(0, 2 ** 64 - 1), st.sampled_from(list(Method)))
def test_binary_round_trip(tmp_path_factory, v, seed, method):
    f = tmp_path_factory.mktemp("bin") / "p.hpl"
    write_path_binary(SamplePath(v, seed, method), f)
    back = read_path_binary(f)
    assert np.array_equal(back.values, v)
    assert back.seed == seed and back.method is method


def test_binary_layout(tmp_path):
    p = gaussian_path(NoiseModel.single(1.5), 3, 99)
    f = tmp_path / "p.hpl"
    write_path_binary(p, f)
    blob = f.read_bytes()
    assert blob[:4] == b"HPL1"
    assert int.from_bytes(blob[4:8], "little") == 3
    assert int.from_bytes(blob[8:16], "little") == 99
    assert blob[16] == int(Method.CHOLESKY)
    assert np.array_equal(np.frombuffer(blob[17:], "<f8"), p.values)


def test_binary_errors(tmp_path):
    f = tmp_path / "bad.hpl"
    f.write_bytes(b"XXXX" + bytes(13))
    with pytest.raises(DomainError, match="magic"):
        read_path_binary(f)
    p = SamplePath(np.arange(4.0))
    write_path_binary(p, f)
    f.write_bytes(f.read_bytes()[:-8])
    with pytest.raises(DomainError, match="expected 4"):
        read_path_binary(f)
    f.write_bytes(b"HP")
    with pytest.raises(DomainError, match="truncated"):
        read_path_binary(f)


def test_config_formats(tmp_path):
    y = tmp_path / "c.yaml"
    y.write_text("alpha: 0.85\ncases: [H1, H2]\n")
    assert load_config(y) == {"alpha": 0.85, "cases": ["H1", "H2"]}
    j = tmp_path / "c.json"
    j.write_text(json.dumps({"T": 10}))
    assert load_config(j) == {"T": 10}


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)
    lst = tmp_path / "list.yaml"
    lst.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(lst)
