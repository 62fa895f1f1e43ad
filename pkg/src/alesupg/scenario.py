"""Scenario description, INI-style configuration files and built-in presets.

A :class:`Scenario` holds only plain values (numbers, strings, tuples) so
that writing and re-parsing a configuration is lossless.  Coefficient
fields are symbolic expressions in ``t``, ``x``, ``y`` and are compiled
to vectorised callables by :func:`compile_expr`.

Config layout::

    [scenario]      name, mesh, motion, degree, T, dirichlet, neumann, refine
    [coefficients]  epsilon, b_x, b_y, c, f, u0, mu, exact
    [stepper]       scheme, dt, policy, strict_cn
    [stabilization] delta0, enforce_theory_bounds, c_inv
    [output]        dir, snapshot_times, line_y0, line_n, bounds

``dirichlet`` is a ``;``-separated list of ``tag: expression``; the
expression ``exact`` (or ``auto``) takes the manufactured solution.
``f = auto`` derives the source from ``exact``.
"""
import configparser
from dataclasses import dataclass, fields, replace
from functools import lru_cache
from pathlib import Path

import numpy as np
import sympy

from .stepping import POLICIES, SCHEMES

MOTIONS = ("static", "example1", "disc_oscillation")
REFINE = ("space", "time")

T_SYM, X_SYM, Y_SYM = sympy.symbols("t x y")
_NAMESPACE = {"t": T_SYM, "x": X_SYM, "y": Y_SYM, "pi": sympy.pi, "e": sympy.E}


class ConfigError(ValueError):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


@dataclass(frozen=True)
class Scenario:
    name: str
    mesh: str
    T: float
    dt: float
    epsilon: float
    motion: str = "static"
    degree: int = 1
    dirichlet: tuple = ()
    neumann: tuple = ()
    refine: str = "space"
    b_x: str = "0"
    b_y: str = "0"
    c: str = "0"
    f: str = "0"
    u0: str = "0"
    mu: float = 0.0
    exact: str = ""
    scheme: str = "be"
    policy: str = "midpoint"
    strict_cn: bool = False
    delta0: float = 0.0
    enforce_theory_bounds: bool = False
    c_inv: float = 1.0
    out_dir: str = ""
    snapshot_times: tuple = ()
    line_y0: float = None
    line_n: int = 0
    bounds: tuple = (0.0, 1.0)

    def __post_init__(self):
        validate(self)

    @property
    def n_steps(self):
        return int(round(self.T / self.dt))


# field -> (section, key)
_LAYOUT = {
    "name": ("scenario", "name"),
    "mesh": ("scenario", "mesh"),
    "motion": ("scenario", "motion"),
    "degree": ("scenario", "degree"),
    "T": ("scenario", "T"),
    "dirichlet": ("scenario", "dirichlet"),
    "neumann": ("scenario", "neumann"),
    "refine": ("scenario", "refine"),
    "epsilon": ("coefficients", "epsilon"),
    "b_x": ("coefficients", "b_x"),
    "b_y": ("coefficients", "b_y"),
    "c": ("coefficients", "c"),
    "f": ("coefficients", "f"),
    "u0": ("coefficients", "u0"),
    "mu": ("coefficients", "mu"),
    "exact": ("coefficients", "exact"),
    "scheme": ("stepper", "scheme"),
    "dt": ("stepper", "dt"),
    "policy": ("stepper", "policy"),
    "strict_cn": ("stepper", "strict_cn"),
    "delta0": ("stabilization", "delta0"),
    "enforce_theory_bounds": ("stabilization", "enforce_theory_bounds"),
    "c_inv": ("stabilization", "c_inv"),
    "out_dir": ("output", "dir"),
    "snapshot_times": ("output", "snapshot_times"),
    "line_y0": ("output", "line_y0"),
    "line_n": ("output", "line_n"),
    "bounds": ("output", "bounds"),
}
SECTIONS = ("scenario", "coefficients", "stepper", "stabilization", "output")
_REQUIRED = ("name", "mesh", "T", "dt", "epsilon")


def _key(name):
    sec, key = _LAYOUT[name]
    return f"{sec}.{key}"


def validate(s):
    if not s.name or any(ch in s.name for ch in "/\\ "):
        raise ConfigError(_key("name"), f"invalid scenario name {s.name!r}")
    if not s.T > 0:
        raise ConfigError(_key("T"), f"must be positive, got {s.T}")
    if not s.dt > 0:
        raise ConfigError(_key("dt"), f"must be positive, got {s.dt}")
    n = round(s.T / s.dt)
    if n < 1 or abs(n * s.dt - s.T) > 1e-9 * max(1.0, s.T):
        raise ConfigError(_key("dt"), f"T={s.T} is not an integer multiple of dt={s.dt}")
    if not s.epsilon > 0:
        raise ConfigError(_key("epsilon"), f"must be positive, got {s.epsilon}")
    if s.motion not in MOTIONS:
        raise ConfigError(_key("motion"), f"unknown motion {s.motion!r}; expected one of {MOTIONS}")
    if s.degree not in (1, 2):
        raise ConfigError(_key("degree"), f"must be 1 or 2, got {s.degree}")
    if s.refine not in REFINE:
        raise ConfigError(_key("refine"), f"expected one of {REFINE}, got {s.refine!r}")
    if s.scheme not in SCHEMES:
        raise ConfigError(_key("scheme"), f"expected one of {SCHEMES}, got {s.scheme!r}")
    if s.policy not in POLICIES:
        raise ConfigError(_key("policy"), f"expected one of {POLICIES}, got {s.policy!r}")
    if s.delta0 < 0:
        raise ConfigError(_key("delta0"), f"must be nonnegative, got {s.delta0}")
    if s.mu < 0:
        raise ConfigError(_key("mu"), f"must be nonnegative, got {s.mu}")
    if not s.c_inv > 0:
        raise ConfigError(_key("c_inv"), f"must be positive, got {s.c_inv}")
    for ts in s.snapshot_times:
        if not 0 <= ts <= s.T:
            raise ConfigError(_key("snapshot_times"), f"time {ts} outside [0, {s.T}]")
    if len(s.bounds) != 2 or not s.bounds[0] < s.bounds[1]:
        raise ConfigError(_key("bounds"), f"need two increasing values, got {s.bounds}")
    if s.line_n < 0:
        raise ConfigError(_key("line_n"), f"must be nonnegative, got {s.line_n}")
    tags = [tag for tag, _ in s.dirichlet]
    if len(set(tags)) != len(tags):
        raise ConfigError(_key("dirichlet"), "tag listed twice")
    if set(tags) & set(s.neumann):
        raise ConfigError(_key("neumann"), f"tags {sorted(set(tags) & set(s.neumann))} are also Dirichlet")
    needs_exact = s.f.strip() == "auto" or s.u0.strip() in ("auto", "exact")
    needs_exact |= any(e.strip() in ("auto", "exact") for _, e in s.dirichlet)
    if needs_exact and not s.exact:
        raise ConfigError(_key("exact"), "required when f, u0 or a Dirichlet value is 'auto'")
    for name in ("b_x", "b_y", "c", "f", "u0", "exact"):
        text = getattr(s, name)
        if text and text.strip() not in ("auto", "exact"):
            parse_expr(text, _key(name))
    for tag, text in s.dirichlet:
        if text.strip() not in ("auto", "exact"):
            parse_expr(text, f"{_key('dirichlet')}[{tag}]")


@lru_cache(maxsize=256)
def _sympify(text):
    return sympy.sympify(text, locals=_NAMESPACE)


def parse_expr(text, key="expression"):
    try:
        expr = _sympify(text.strip())
    except (sympy.SympifyError, SyntaxError, TypeError, ValueError) as exc:
        raise ConfigError(key, f"cannot parse expression {text!r}: {exc}") from None
    if not isinstance(expr, sympy.Expr):
        raise ConfigError(key, f"{text!r} is not a scalar expression")
    extra = expr.free_symbols - {T_SYM, X_SYM, Y_SYM}
    if extra:
        raise ConfigError(key, f"unknown symbols {sorted(map(str, extra))} in {text!r}")
    return expr


def compile_expr(expr):
    """Vectorised g(t, X) for X of shape (..., 2); constants stay floats."""
    if not expr.free_symbols:
        return float(expr)
    fn = sympy.lambdify((T_SYM, X_SYM, Y_SYM), expr, "numpy")

    def g(t, X):
        X = np.asarray(X, dtype=float)
        return np.broadcast_to(np.asarray(fn(t, X[..., 0], X[..., 1]), dtype=float), X.shape[:-1])

    g.expr = expr
    return g


def manufactured_source(exact, epsilon, b, c):
    """f = u_t - eps Lap u + b . grad u + c u for symbolic exact u."""
    u = exact
    lap = sympy.diff(u, X_SYM, 2) + sympy.diff(u, Y_SYM, 2)
    adv = b[0] * sympy.diff(u, X_SYM) + b[1] * sympy.diff(u, Y_SYM)
    return sympy.diff(u, T_SYM) - epsilon * lap + adv + c * u


def symbolic_fields(s):
    """Dict of sympy expressions for b (pair), c, f, u0, exact (or None)
    and the Dirichlet values by tag."""
    b = (parse_expr(s.b_x, _key("b_x")), parse_expr(s.b_y, _key("b_y")))
    c = parse_expr(s.c, _key("c"))
    exact = parse_expr(s.exact, _key("exact")) if s.exact else None
    if s.f.strip() == "auto":
        f = manufactured_source(exact, s.epsilon, b, c)
    else:
        f = parse_expr(s.f, _key("f"))
    if s.u0.strip() in ("auto", "exact"):
        u0 = exact.subs(T_SYM, 0)
    else:
        u0 = parse_expr(s.u0, _key("u0"))
    dirichlet = {}
    for tag, text in s.dirichlet:
        dirichlet[tag] = exact if text.strip() in ("auto", "exact") else parse_expr(text, f"{_key('dirichlet')}[{tag}]")
    return {"b": b, "c": c, "f": f, "u0": u0, "exact": exact, "dirichlet": dirichlet}


# ---------------------------------------------------------------------------
# INI reading and writing


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _format_field(name, value):
    if name == "dirichlet":
        return "; ".join(f"{tag}: {expr}" for tag, expr in value)
    if name in ("neumann", "snapshot_times", "bounds"):
        return ", ".join(_fmt(v) for v in value)
    if value is None:
        return ""
    return _fmt(value)


def format_config(s):
    out = []
    for sec in SECTIONS:
        out.append(f"[{sec}]")
        for f in fields(Scenario):
            fsec, key = _LAYOUT[f.name]
            if fsec != sec:
                continue
            out.append(f"{key} = {_format_field(f.name, getattr(s, f.name))}".rstrip())
        out.append("")
    return "\n".join(out)


def write_config(s, path):
    Path(path).write_text(format_config(s))


def _to_float(text, key):
    try:
        return float(text)
    except ValueError:
        raise ConfigError(key, f"expected a number, got {text!r}") from None


def _to_int(text, key):
    try:
        return int(text)
    except ValueError:
        raise ConfigError(key, f"expected an integer, got {text!r}") from None


def _to_bool(text, key):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(key, f"expected a boolean, got {text!r}")


def _split(text, sep=","):
    return [p.strip() for p in text.split(sep) if p.strip()]


def _convert(name, text, key):
    types = {f.name: f.type for f in fields(Scenario)}
    if name == "dirichlet":
        pairs = []
        for item in _split(text, ";"):
            tag, sep, expr = item.partition(":")
            if not sep or not expr.strip():
                raise ConfigError(key, f"expected 'tag: expression', got {item!r}")
            pairs.append((_to_int(tag.strip(), key), expr.strip()))
        return tuple(pairs)
    if name == "neumann":
        return tuple(_to_int(p, key) for p in _split(text))
    if name in ("snapshot_times", "bounds"):
        return tuple(_to_float(p, key) for p in _split(text))
    if name == "line_y0":
        return None if not text.strip() else _to_float(text, key)
    kind = types[name]
    if kind in (float, "float"):
        return _to_float(text, key)
    if kind in (int, "int"):
        return _to_int(text, key)
    if kind in (bool, "bool"):
        return _to_bool(text, key)
    return text.strip()


def parse_config_text(text, source="<config>"):
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#",), inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError("", f"{source}: {exc}") from None
    by_key = {v: k for k, v in _LAYOUT.items()}
    values = {}
    for sec in cp.sections():
        if sec not in SECTIONS:
            raise ConfigError(sec, f"unknown section; expected one of {SECTIONS}")
        for key, text_value in cp.items(sec):
            name = by_key.get((sec, key))
            if name is None:
                raise ConfigError(f"{sec}.{key}", "unknown key")
            values[name] = _convert(name, text_value, f"{sec}.{key}")
    for name in _REQUIRED:
        if name not in values:
            raise ConfigError(_key(name), "missing required key")
    return Scenario(**values)


def parse_config(path):
    path = Path(path)
    return parse_config_text(path.read_text(), str(path))


# ---------------------------------------------------------------------------
# presets

EXAMPLE1_U0 = "1600*x*(1 - x)*y*(1 - y)"


def example1(delta0=1.0, scheme="be", dt=0.01, T=1.0, n=64, **kw):
    """Oscillating unit square, initial bump, homogeneous Dirichlet."""
    return Scenario(
        name=kw.pop("name", "example1"),
        mesh=f"builtin:unit_square:{n}",
        motion="example1",
        degree=1,
        T=T,
        dt=dt,
        epsilon=0.01,
        dirichlet=tuple((tag, "0") for tag in (1, 2, 3, 4)),
        u0=EXAMPLE1_U0,
        scheme=scheme,
        delta0=delta0,
        bounds=(0.0, 100.0),
        **kw,
    )


def example2(delta0=10.0, scheme="be", dt=0.01, T=10.0, cells=9400, **kw):
    """Channel flow past a vertically oscillating disc held at u = 1."""
    kw.setdefault("snapshot_times", (T,))
    kw.setdefault("line_y0", 0.0)
    kw.setdefault("line_n", 241)
    return Scenario(
        name=kw.pop("name", "example2"),
        mesh=f"builtin:channel_disc:{cells}",
        motion="disc_oscillation",
        degree=2,
        T=T,
        dt=dt,
        epsilon=1e-8,
        b_x="1",
        b_y="0",
        dirichlet=((1, "0"), (2, "0"), (4, "1")),
        neumann=(3,),
        scheme=scheme,
        delta0=delta0,
        bounds=(0.0, 1.0),
        **kw,
    )


PRESETS = {
    "example1": example1,
    "example2": example2,
    "example2_caption": lambda **kw: example2(**{"delta0": 0.1, "name": "example2_caption", **kw}),
}


def preset(name, **overrides):
    if name not in PRESETS:
        raise ConfigError("preset", f"unknown preset {name!r}; expected one of {sorted(PRESETS)}")
    return PRESETS[name](**overrides)


def with_overrides(s, **kw):
    kw = {k: v for k, v in kw.items() if v is not None}
    return replace(s, **kw) if kw else s
