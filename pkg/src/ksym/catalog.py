"""Built-in problems.

The four named problems are what ``ksym catalog`` prints.  The helper
builders take the physical constants as arguments so tests and demos can
produce perturbed variants (for instance a string section violating
tau a^2 = sigma b^2).
"""

from .problemfile import ProblemFile, format_problem, parse_problem
from .integrate import GridSpec

__all__ = ["NAMES", "catalog_text", "catalog_problem", "vibrating_string", "string_lagrangian"]


def _num(x):
    x = float(x)
    return str(int(x)) if x.is_integer() else repr(x)


def _times(c, var):
    c = float(c)
    if c == 1:
        return var
    if c == -1:
        return f"-{var}"
    return f"{_num(c)}*{var}"


def _unit_square(steps=100, q0=1.0):
    return GridSpec([0, 0], [1, 1], [steps, steps], [q0])


def vibrating_string(sigma=4.0, tau=1.0, a=2.0, b=1.0, steps=100, q0=1.0):
    """String Hamiltonian with the section gamma(q) = (a q dq, b q dq)."""
    return ProblemFile(
        "hamiltonian", 1, 2,
        f"0.5*(p1_1^2/{_num(sigma)} - p2_1^2/{_num(tau)})",
        {"gamma1_1": _times(a, "q1"), "gamma2_1": _times(b, "q1")},
        _unit_square(steps, q0),
    )


def string_lagrangian(sigma=4.0, tau=1.0, a=2.0, b=1.0, steps=100, q0=1.0):
    """The Lagrangian of the string with X the Legendre image of the HJ section."""
    return ProblemFile(
        "lagrangian", 1, 2,
        f"({_num(sigma)}/2)*v1_1^2 - ({_num(tau)}/2)*v1_2^2",
        {"X1_1": _times(a / sigma, "q1"), "X1_2": _times(-b / tau, "q1")},
        _unit_square(steps, q0),
    )


def free_particle(c=1.0, d=0.5, steps=100, q0=1.0):
    return ProblemFile(
        "lagrangian", 1, 2,
        "0.5*v1_1^2 + 0.5*v1_2^2",
        {"X1_1": _num(c), "X1_2": _num(d)},
        _unit_square(steps, q0),
    )


def harmonic_sections(c=1.0, d=-0.5, steps=100, q0=1.0):
    """H = (p^1^2 + p^2^2)/2 with a constant section: affine characteristics."""
    return ProblemFile(
        "hamiltonian", 1, 2,
        "0.5*(p1_1^2 + p2_1^2)",
        {"gamma1_1": _num(c), "gamma2_1": _num(d)},
        _unit_square(steps, q0),
    )


_BUILDERS = {
    "vibrating-string": vibrating_string,
    "free-particle": free_particle,
    "harmonic-sections": harmonic_sections,
    "string-lagrangian": string_lagrangian,
}
NAMES = tuple(_BUILDERS)


def catalog_problem(name):
    if name not in _BUILDERS:
        raise KeyError(f"unknown catalog problem {name!r}; valid names: {', '.join(NAMES)}")
    pf = _BUILDERS[name]()
    # round-trip through the text form so builtins behave exactly like files
    return parse_problem(format_problem(pf), filename=f"builtin:{name}")


def catalog_text(name):
    return format_problem(catalog_problem(name))
