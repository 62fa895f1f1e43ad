import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from alesupg import scenario
from alesupg.scenario import ConfigError, Scenario

MINIMAL = """
[scenario]
name = demo   # trailing comment
mesh = builtin:unit_square:4
T = 0.1
dirichlet = 1: 0; 2: 0; 3: x + y; 4: 0

[coefficients]
epsilon = 0.01

# full-line comment
[stepper]
dt = 0.05
"""


def test_presets_carry_the_example_data():
    e1 = scenario.preset("example1")
    assert (e1.epsilon, e1.b_x, e1.b_y, e1.c, e1.motion, e1.degree) == (0.01, "0", "0", "0", "example1", 1)
    assert e1.mesh == "builtin:unit_square:64" and e1.delta0 == 1.0
    assert sympy.sympify(e1.u0).subs({"x": sympy.Rational(1, 2), "y": sympy.Rational(1, 2)}) == 100
    e2 = scenario.preset("example2")
    assert (e2.epsilon, e2.b_x, e2.b_y, e2.T, e2.dt, e2.degree) == (1e-8, "1", "0", 10.0, 0.01, 2)
    assert e2.delta0 == 10.0 and e2.motion == "disc_oscillation" and e2.neumann == (3,)
    assert scenario.preset("example2_caption").delta0 == 0.1
    with pytest.raises(ConfigError):
        scenario.preset("example3")


def test_parse_minimal_config():
    s = scenario.parse_config_text(MINIMAL)
    assert s.name == "demo" and s.T == 0.1 and s.dt == 0.05 and s.n_steps == 2
    assert s.dirichlet == ((1, "0"), (2, "0"), (3, "x + y"), (4, "0"))
    assert s.scheme == "be" and s.policy == "midpoint"


@pytest.mark.parametrize(
    "edit, key",
    [
        (("dt = 0.05", ""), "stepper.dt"),
        (("epsilon = 0.01", "epsilon = 0.01\ncolour = red"), "coefficients.colour"),
        (("[stepper]", "[solver]"), "solver"),
        (("dt = 0.05", "dt = 0.03"), "stepper.dt"),
        (("dt = 0.05", "dt = fast"), "stepper.dt"),
        (("epsilon = 0.01", "epsilon = 0"), "coefficients.epsilon"),
        (("epsilon = 0.01", "epsilon = 0.01\nf = sin(z)"), "coefficients.f"),
        (("epsilon = 0.01", "epsilon = 0.01\nf = auto"), "coefficients.exact"),
        (("3: x + y", "3 x + y"), "scenario.dirichlet"),
        (("[stepper]", "[stepper]\nscheme = rk4"), "stepper.scheme"),
    ],
)
def test_config_errors_name_the_key(edit, key):
    text = MINIMAL.replace(*edit)
    with pytest.raises(ConfigError) as info:
        scenario.parse_config_text(text)
    assert info.value.key == key
    assert str(info.value).startswith(key)


def test_expression_compilation():
    g = scenario.compile_expr(scenario.parse_expr("t + x*y"))
    X = np.array([[1.0, 2.0], [3.0, -1.0]])
    assert np.allclose(g(0.5, X), [2.5, -2.5])
    assert scenario.compile_expr(scenario.parse_expr("2*pi")) == pytest.approx(2 * np.pi)
    assert g(0.0, np.zeros((2, 3, 2))).shape == (2, 3)


def test_manufactured_source_matches_hand_derivation():
    s = Scenario(
        name="m", mesh="builtin:unit_square:2", T=1.0, dt=0.5, epsilon=0.1, b_x="1", b_y="2", c="3",
        f="auto", u0="exact", exact="exp(-t)*x**2*y", dirichlet=((1, "exact"),),
    )
    fields = scenario.symbolic_fields(s)
    t, x, y = sympy.symbols("t x y")
    u = sympy.exp(-t) * x**2 * y
    hand = -u - sympy.Rational(1, 10) * 2 * sympy.exp(-t) * y + 2 * x * y * sympy.exp(-t) + 2 * x**2 * sympy.exp(-t) + 3 * u
    assert sympy.simplify(fields["f"] - hand) == 0
    assert sympy.simplify(fields["u0"] - x**2 * y) == 0
    assert fields["dirichlet"][1] == fields["exact"]


def test_write_and_parse_round_trip(tmp_path):
    for name in scenario.PRESETS:
        s = scenario.preset(name)
        path = tmp_path / f"{name}.ini"
        scenario.write_config(s, path)
        assert scenario.parse_config(path) == s


_names = st.from_regex(r"[A-Za-z][A-Za-z0-9_]{0,10}", fullmatch=True)
_pos = st.floats(1e-6, 1e3, allow_nan=False, allow_infinity=False)


@settings(max_examples=60, deadline=None)
@given(
    name=_names,
    n_steps=st.integers(1, 50),
    dt=st.sampled_from([0.5, 0.25, 0.1, 0.01, 0.002]),
    eps=_pos,
    delta0=st.floats(0, 100),
    scheme=st.sampled_from(["be", "cn"]),
    policy=st.sampled_from(["midpoint", "endpoint"]),
    degree=st.sampled_from([1, 2]),
    strict=st.booleans(),
    mu=st.floats(0, 10),
    line_y0=st.none() | st.floats(-3, 3),
    line_n=st.integers(0, 500),
    bc=st.sampled_from([((1, "0"), (2, "1 + x*t")), ((4, "sin(pi*y)"),), ()]),
)
def test_round_trip_property(name, n_steps, dt, eps, delta0, scheme, policy, degree, strict, mu, line_y0, line_n, bc):
    s = Scenario(
        name=name, mesh="builtin:unit_square:4", T=n_steps * dt, dt=dt, epsilon=eps, delta0=delta0,
        scheme=scheme, policy=policy, degree=degree, strict_cn=strict, mu=mu, line_y0=line_y0,
        line_n=line_n, dirichlet=bc, neumann=(3,) if bc and bc[0][0] != 3 else (), b_x="cos(t)", c="0.5",
    )
    assert scenario.parse_config_text(scenario.format_config(s)) == s


def test_with_overrides_ignores_none():
    s = scenario.preset("example1")
    assert scenario.with_overrides(s, dt=None) is s
    assert scenario.with_overrides(s, delta0=0.0).delta0 == 0.0
