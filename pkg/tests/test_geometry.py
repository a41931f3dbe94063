import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ksym import exprlang, scalars
from ksym.errors import PreconditionError, SchemaError
from ksym.geometry import (
    Dims,
    GridSolution,
    KVectorFieldQ,
    PhaseGrid,
    PhasePointH,
    PhasePointL,
    SectionGamma,
    closedness_defect,
    closedness_defects,
    integral_section_residual,
    potential_recover,
    prolong,
    read_grid_csv,
    sample_box,
)


def string_grid(steps, t_max=1.0):
    t1, t2 = np.meshgrid(np.linspace(0, t_max, steps + 1), np.linspace(0, t_max, steps + 1), indexing="ij")
    return GridSolution([0, 0], [t_max, t_max], [steps, steps], np.exp(0.5 * t1 - t2)[..., None])


def test_phase_point_coordinates_round_trip():
    dims = Dims(2, 3)
    x = PhasePointH([1.0, 2.0], np.arange(6.0).reshape(3, 2))
    assert x.dims == dims
    y = PhasePointH.from_coords(dims, x.coords())
    np.testing.assert_array_equal(y.p, x.p)
    v = np.arange(6.0).reshape(2, 3)  # v[i, A]
    xl = PhasePointL([0.0, 1.0], v)
    # A-major: v^1_1, v^2_1, v^1_2, ...
    np.testing.assert_array_equal(xl.coords()[2:], [0, 3, 1, 4, 2, 5])
    np.testing.assert_array_equal(PhasePointL.from_coords(dims, xl.coords()).v, v)


def test_phase_point_rejects_bad_shapes_and_nan():
    with pytest.raises(ValueError):
        PhasePointH([1.0], np.zeros((2, 2)))
    with pytest.raises(ValueError):
        PhasePointH([np.nan], np.zeros((2, 1)))


def test_section_evaluation_and_jacobian():
    dims = Dims(2, 1)
    gamma = SectionGamma.from_strings(dims, [["q1^2 * q2", "sin(q1)"]])
    q = np.array([0.5, 2.0])
    np.testing.assert_allclose(gamma(q), [[0.5, np.sin(0.5)]])
    jac = gamma.jacobian(q)
    np.testing.assert_allclose(jac[0, 0], [2 * 0.5 * 2.0, 0.25])
    np.testing.assert_allclose(jac[0, 1], [np.cos(0.5), 0.0])


def test_section_entries_must_depend_on_q_only():
    with pytest.raises(exprlang.ParseError):
        SectionGamma.from_strings(Dims(1, 1), [["p1_1"]])
    with pytest.raises(ValueError):
        SectionGamma.from_strings(Dims(1, 2), [["q1"]])


def test_closedness_of_exact_and_non_exact_forms():
    dims = Dims(2, 2)
    # gamma^1 = d(q1^2 q2), gamma^2 = d(sin(q1) q2^3)
    exact = SectionGamma.from_strings(dims, [["2*q1*q2", "q1^2"], ["cos(q1)*q2^3", "3*sin(q1)*q2^2"]])
    sample = sample_box(-1, 1, 2, points=21)
    assert closedness_defect(exact, sample) == pytest.approx(0.0, abs=1e-14)
    rotation = SectionGamma.from_strings(dims, [["q2", "-q1"], ["q2", "q1"]])
    np.testing.assert_allclose(closedness_defects(rotation, sample), [2.0, 0.0])


def test_closedness_is_trivial_in_one_dimension():
    gamma = SectionGamma.from_strings(Dims(1, 2), [["exp(q1)"], ["q1^3"]])
    assert closedness_defect(gamma, np.linspace(-1, 1, 11)) == 0.0


def test_potential_recovery_matches_the_potential():
    dims = Dims(2, 1)
    gamma = SectionGamma.from_strings(dims, [["2*q1*q2 + cos(q1)", "q1^2"]])
    w = lambda q: q[0] ** 2 * q[1] + np.sin(q[0])
    base, target = np.array([0.1, -0.3]), np.array([0.8, 0.6])
    np.testing.assert_allclose(potential_recover(gamma, base, target), [w(target) - w(base)], rtol=1e-10)


def test_potential_recovery_refuses_non_closed_sections():
    gamma = SectionGamma.from_strings(Dims(2, 1), [["q2", "-q1"]])
    with pytest.raises(PreconditionError):
        potential_recover(gamma, [0, 0], [1, 1])


def test_prolongation_of_closed_form_and_exact_solution():
    g = string_grid(100)
    v = prolong(g)
    assert v.shape == (101, 101, 1, 2)
    psi = g.values[..., 0]
    np.testing.assert_allclose(v[..., 0, 0], 0.5 * psi, rtol=1e-4)
    np.testing.assert_allclose(v[..., 0, 1], -psi, rtol=1e-3)
    X = KVectorFieldQ.from_strings(Dims(1, 2), [["0.5*q1", "-1*q1"]])
    assert integral_section_residual(g, X) < 1e-4


def test_prolongation_is_second_order():
    X = KVectorFieldQ.from_strings(Dims(1, 2), [["0.5*q1", "-q1"]])
    r1, r2 = integral_section_residual(string_grid(20), X), integral_section_residual(string_grid(40), X)
    assert 3.6 < r1 / r2 < 4.4


def test_prolongation_needs_three_nodes():
    g = GridSolution([0], [1], [2], np.zeros((3, 1)))
    assert prolong(g).shape == (3, 1, 1)
    with pytest.raises(ValueError):
        GridSolution([0], [1], [1], np.zeros((2, 1)))


def test_csv_round_trip_is_bit_exact():
    g = string_grid(6)
    header, back, extra = read_grid_csv(io.StringIO(g.to_csv()), k=2, n=1)
    assert header == ["t1", "t2", "q1"]
    assert extra == {}
    np.testing.assert_array_equal(back.values, g.values)
    np.testing.assert_array_equal(back.t_max, g.t_max)


def test_phase_grid_csv_has_momentum_columns():
    g = string_grid(4)
    p = np.stack([2 * g.values, g.values], axis=-2)  # (*nodes, k=2, n=1)
    ph = PhaseGrid(g.t_min, g.t_max, g.steps, g.values, p)
    header, back, extra = read_grid_csv(io.StringIO(ph.to_csv()))
    assert header == ["t1", "t2", "q1", "p1_1", "p2_1"]
    np.testing.assert_array_equal(extra["p1_1"], 2 * g.values[..., 0])


def test_csv_written_atomically(tmp_path):
    path = tmp_path / "psi.csv"
    text = string_grid(3).to_csv(path)
    assert path.read_text() == text
    assert [p.name for p in tmp_path.iterdir()] == ["psi.csv"]


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("", "empty"),
        ("t1,t2,q1\n", "no rows"),
        ("q1,t1\n0,0\n", "header"),
        ("t1,q1\n0,1\n0.5,x\n1,2\n", "non-numeric"),
        ("t1,q1\n0,1\n0.5,1\n", "at least 3"),
        ("t1,q1\n0,1\n0.5,1\n2,1\n", "uniformly"),
        ("t1,q1\n0,1\n1,1\n0.5,1\n", "lattice order"),
        ("t1,t2,q1\n0,0,1\n0,1,1\n1,0,1\n", "lattice"),
        ("t1,q1\n0,1,2\n", "entries"),
    ],
)
def test_csv_schema_errors(text, fragment):
    with pytest.raises(SchemaError, match=fragment):
        read_grid_csv(io.StringIO(text))


def test_csv_dimension_mismatch_names_columns():
    with pytest.raises(SchemaError, match="q1..q2"):
        read_grid_csv(io.StringIO(string_grid(3).to_csv()), k=2, n=2)


def test_restriction_commutes_with_slicing():
    g = string_grid(10)
    sub = g.restrict([2, 3], [6, 9])
    np.testing.assert_array_equal(sub.values, g.values[2:7, 3:10])
    np.testing.assert_allclose(sub.t_min, [0.2, 0.3])
    np.testing.assert_allclose(sub.times(), g.times()[2:7, 3:10], rtol=0, atol=1e-15)


def test_sample_box_respects_cap():
    s = sample_box(-1, 1, 3, points=101, cap=100_000)
    assert len(s) <= 100_000 and s.shape[1] == 3
    assert len(sample_box(-1, 1, 1)) == 101


@settings(max_examples=40, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
def test_gradients_of_potentials_are_closed(a, b, c):
    # gamma = d(a q1^2 q2 + b sin(q2) + c q1 q2^3)
    gx = f"2*{a!r}*q1*q2 + {c!r}*q2^3"
    gy = f"{a!r}*q1^2 + {b!r}*cos(q2) + 3*{c!r}*q1*q2^2"
    gamma = SectionGamma.from_strings(Dims(2, 1), [[gx, gy]])
    assert closedness_defect(gamma, sample_box(-1, 1, 2, points=7)) < 1e-12


@settings(max_examples=40, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
def test_ad_gradients_of_potentials_are_exactly_closed(a, b, c):
    def potential(q):
        return a * q[0] ** 2 * q[1] + b * scalars.sin(q[1]) * scalars.exp(q[0]) + c * q[0] * q[1] ** 3

    gamma = SectionGamma(Dims(2, 1), lambda qs: [scalars.gradient_generic(potential, qs)[1]])
    assert closedness_defect(gamma, sample_box(-1, 1, 2, points=9)) == 0.0
