import pytest

from ksym.catalog import NAMES, catalog_problem, catalog_text, vibrating_string
from ksym.hamiltonian import HamiltonianProblem
from ksym.lagrangian import LagrangianProblem
from ksym.problemfile import ProblemFileError, Tolerances, format_problem, load_problem, parse_problem

STRING = catalog_text("vibrating-string")


def test_catalog_string_text():
    assert "H = 0.5*(p1_1^2/4 - p2_1^2/1)" in STRING
    assert "gamma1_1 = 2*q1" in STRING
    assert "gamma2_1 = q1" in STRING


def test_catalog_string_lagrangian_text():
    text = catalog_text("string-lagrangian")
    assert "L = (4/2)*v1_1^2 - (1/2)*v1_2^2" in text
    assert "X1_1 = 0.5*q1" in text and "X1_2 = -q1" in text


def test_unknown_catalog_name_lists_valid_names():
    with pytest.raises(KeyError) as info:
        catalog_problem("pendulum")
    for name in NAMES:
        assert name in str(info.value)


@pytest.mark.parametrize("name", NAMES)
def test_catalog_round_trips(name):
    pf = catalog_problem(name)
    again = parse_problem(format_problem(pf))
    assert format_problem(again) == format_problem(pf)
    built = pf.build()
    assert isinstance(built, HamiltonianProblem if pf.kind == "hamiltonian" else LagrangianProblem)


def test_load_from_disk_and_comments(tmp_path):
    path = tmp_path / "p.ksym"
    path.write_text("# a comment\n" + STRING.replace("[grid]", "[grid]  # the box"))
    pf = load_problem(path)
    assert pf.filename == str(path) and pf.grid.steps.tolist() == [100, 100]


def test_tolerance_overrides():
    pf = parse_problem(STRING + "\n[tolerances]\nhj = 1e-6\nsample_points = 11\n")
    assert pf.tolerances.hj == 1e-6 and pf.tolerances.sample_points == 11
    assert pf.tolerances.closedness == Tolerances().closedness
    assert "hj = 1e-06" in format_problem(pf)


def test_grid_is_optional():
    pf = parse_problem(STRING.split("[grid]")[0])
    assert pf.grid is None


@pytest.mark.parametrize(
    "edit, line, fragment",
    [
        (lambda s: s.replace("kind = hamiltonian", "kind = quantum"), 2, "kind must be one of"),
        (lambda s: s.replace("n = 1", "n = one"), 3, "integers"),
        (lambda s: s.replace("k = 2", "k = 0"), 3, "positive"),
        (lambda s: s.replace("gamma2_1 = q1", "gamma2_1 = q1\ngamma2_1 = q1"), 12, "duplicate key"),
        (lambda s: s.replace("gamma2_1 = q1", "gamma3_1 = q1"), 11, "index out of range"),
        (lambda s: s.replace("gamma2_1 = q1", ""), 9, "missing"),
        (lambda s: s.replace("gamma2_1 = q1", "X1_1 = q1"), 11, "unknown key"),
        (lambda s: s.replace("gamma1_1 = 2*q1", "gamma1_1 = 2*q1 +"), 10, "gamma1_1: unexpected end"),
        (lambda s: s.replace("gamma1_1 = 2*q1", "gamma1_1 = p1_1"), 10, "unknown identifier"),
        (lambda s: s.replace("H = ", "H = x + "), 7, "unknown identifier 'x'"),
        (lambda s: s.replace("H = ", "E = "), 7, "unknown key 'E'"),
        (lambda s: s.replace("steps = 100, 100", "steps = 100"), 16, "steps needs 2 entries"),
        (lambda s: s.replace("t_max = 1, 1", "t_max = 1, zero"), 15, "comma-separated"),
        (lambda s: s.replace("t_max = 1, 1", "t_max = 1, -1"), 13, "t_max must exceed"),
        (lambda s: s.replace("q0 = 1", "q0 = 1, 2"), 17, "q0 needs 1 entries"),
        (lambda s: s.replace("[grid]", "[mesh]"), 13, "unknown section"),
        (lambda s: s + "[section]\n", 18, "duplicate section"),
        (lambda s: "x = 1\n" + s, 1, "outside of any section"),
        (lambda s: s.replace("q0 = 1", "q0 1"), 17, "key = value"),
        (lambda s: s + "\n[lagrangian]\nL = v1_1\n", 19, "[lagrangian] section given"),
        (lambda s: s + "\n[tolerances]\nhj = tiny\n", 20, "expected a number"),
        (lambda s: s + "\n[tolerances]\nepsilon = 1\n", 20, "unknown key"),
    ],
)
def test_errors_carry_file_and_line(edit, line, fragment):
    with pytest.raises(ProblemFileError) as info:
        parse_problem(edit(STRING), filename="case.ksym")
    assert info.value.line == line
    assert str(info.value).startswith(f"case.ksym:{line}: ")
    assert fragment in str(info.value)


def test_missing_sections():
    with pytest.raises(ProblemFileError, match="missing \\[problem\\]"):
        parse_problem("[hamiltonian]\nH = 1\n")
    with pytest.raises(ProblemFileError, match="missing \\[hamiltonian\\]"):
        parse_problem("[problem]\nkind = hamiltonian\nn = 1\nk = 1\n")
    with pytest.raises(ProblemFileError, match="missing 'k'"):
        parse_problem("[problem]\nkind = hamiltonian\nn = 1\n[hamiltonian]\nH = 1\n")


def test_builder_parameters_reach_the_text():
    text = format_problem(vibrating_string(9, 1, 3, 1))
    assert "p1_1^2/9" in text and "gamma1_1 = 3*q1" in text
