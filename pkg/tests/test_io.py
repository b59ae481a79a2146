import json

import numpy as np
import pytest
from conftest import smooth_finite_state

from cmps import io
from cmps.core import FiniteCMPS, UniformCMPS, bosons, build_species_table, random_uniform
from cmps.errors import ParseError, ShapeError, ValidationError
from cmps.regularity import ParityStructure
from cmps.tangent import TangentFinite, TangentUniform


def test_uniform_round_trip(boson_d3):
    back = io.state_from_dict(json.loads(io.dumps(io.state_to_dict(boson_d3))))
    assert np.array_equal(back.Q, boson_d3.Q) and np.array_equal(back.R, boson_d3.R)
    assert back.species == boson_d3.species


def test_finite_round_trip_through_file(tmp_path):
    s = smooth_finite_state(N=20, q=2)
    path = tmp_path / "s.json"
    io.write_state(s, path)
    back = io.read_state(path)
    assert isinstance(back, FiniteCMPS)
    assert np.array_equal(back.Q, s.Q) and np.array_equal(back.R, s.R)
    assert np.array_equal(back.vL, s.vL) and back.L == s.L and back.N == s.N


def test_output_is_byte_identical(boson_d2):
    assert io.dumps(io.state_to_dict(boson_d2)) == io.dumps(io.state_to_dict(boson_d2))


def test_float_formatting():
    assert io.format_float(0.1) == "0.10000000000000001"
    assert io.format_float(0.0) == "0.0"
    assert io.format_float(float("nan")) == "null"


def test_real_entries_accepted():
    doc = {"D": 1, "species": [{"name": "a", "statistics": "boson"}], "Q": [[-0.5]], "R": [[[1]]]}
    s = io.state_from_dict(doc)
    assert s.Q[0, 0] == -0.5 and s.R[0, 0, 0] == 1


def test_hermitian_generator_alternative():
    doc = {"D": 2, "species": [{"name": "a", "statistics": "boson"}], "K": [[1, 0], [0, -1]],
           "R": [[[0.3, 0.1], [0.0, 0.2]]]}
    s = io.state_from_dict(doc)
    assert isinstance(s, UniformCMPS)
    lhs = s.Q + s.Q.conj().T + s.R[0].conj().T @ s.R[0]
    assert np.allclose(lhs, 0, atol=1e-14)


def test_mismatched_r_names_field_path(boson_d2):
    doc = io.state_to_dict(boson_d2)
    doc["R"][0][1] = doc["R"][0][1][:1]
    with pytest.raises(ShapeError) as info:
        io.state_from_dict(doc)
    assert info.value.path == "R[0][1]"


def test_finite_sample_error_path():
    doc = io.state_to_dict(smooth_finite_state(N=6))
    doc["R_samples"][0][4] = [[1, 2]]
    with pytest.raises(ShapeError) as info:
        io.state_from_dict(doc)
    assert info.value.path.startswith("R_samples[0][4]")


def test_missing_field_and_bad_statistics():
    with pytest.raises(ShapeError, match="species"):
        io.state_from_dict({"D": 1, "Q": [[0]], "R": [[[0]]]})
    with pytest.raises(ShapeError, match="statistics"):
        io.state_from_dict({"D": 1, "species": [{"name": "a", "statistics": "anyon"}], "Q": [[0]], "R": [[[0]]]})


def test_malformed_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{\"D\": 1,")
    with pytest.raises(ParseError):
        io.read_state(path)


def test_periodic_state_needs_equal_ends():
    u = random_uniform(2, bosons(1), np.random.default_rng(1))
    doc = io.state_to_dict(FiniteCMPS.from_uniform(u, 1.0, 10))
    doc["boundary"] = "periodic"
    doc["B"] = io.encode_array(np.eye(2))
    io.state_from_dict(doc)
    doc["Q_samples"][-1][0][0] = [5.0, 0.0]
    with pytest.raises(ValidationError):
        io.state_from_dict(doc)


def test_tangent_round_trips(boson_d2):
    t = TangentUniform(np.eye(2) * 1j, np.ones((1, 2, 2)), 0.25)
    back = io.tangent_from_dict(io.tangent_to_dict(t), boson_d2)
    assert np.array_equal(back.V, t.V) and back.p == 0.25
    s = smooth_finite_state(N=8)
    tf = TangentFinite(np.ones_like(s.Q), np.zeros_like(s.R), np.array([1.0, 2j]))
    back = io.tangent_from_dict(json.loads(io.dumps(io.tangent_to_dict(tf))), s)
    assert np.array_equal(back.wR, tf.wR)


def test_parity_document():
    assert io.parity_from_dict({"Dplus": 2, "Dminus": 1}) == ParityStructure(2, 1)
    with pytest.raises(ShapeError):
        io.parity_from_dict({"Dplus": 0, "Dminus": 0})


def test_potential_file(tmp_path):
    path = tmp_path / "v.json"
    path.write_text('{"v": 0.5}')
    assert np.array_equal(io.read_potential(path, 3), [0.5, 0.5, 0.5])
    path.write_text('{"v": [1, 2]}')
    with pytest.raises(ShapeError):
        io.read_potential(path, 3)


def test_two_species_table_round_trip():
    species = build_species_table([("up", "fermion"), ("b", "boson")])
    u = random_uniform(2, species, np.random.default_rng(2))
    back = io.state_from_dict(io.state_to_dict(u))
    assert back.species.names == ("up", "b") and back.species.statistics == ("fermion", "boson")
