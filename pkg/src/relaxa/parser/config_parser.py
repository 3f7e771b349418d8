"""Parse experiment configuration files into ExperimentConfig.

Flat ``key = value`` lines with ``#`` comments.  Values are numbers,
booleans (true/false), bare words, quoted strings, lists ``[a, b]`` or a
single call form ``name(args)`` used for domains, nonlinearities and
initial data, e.g.::

    domain = interval(0, 1)
    f = doublewell(k=1.0)
    eps_grid = [0.5, 0.1, 0.02]
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional, Union

from relaxa.fem.assembly import assemble
from relaxa.fem.mesh import build_mesh
from relaxa.nonlinearity import doublewell, linear, polynomial
from relaxa.schema.mesh import Domain, Interval, Operators, Rectangle
from relaxa.schema.nonlinearity import NonlinearityError, NonlinearitySpec
from relaxa.schema.params import FunctionalParams, ParamsError

_NUMBER = re.compile(r'[+-]?(\d+\.?\d*([eE][+-]?\d+)?|\.\d+([eE][+-]?\d+)?|inf)')
_NAME = re.compile(r'[A-Za-z_][\w]*')
_WORD = re.compile(r'[^\s,\[\]()=#"]+')


class ConfigParseError(ValueError):
    pass


@dataclass(frozen=True)
class Call:
    """``name(a, b, key=c)`` as written in the file."""
    name: str
    args: tuple[float, ...] = ()
    kwargs: tuple[tuple[str, float], ...] = ()

    def kw(self) -> dict[str, float]:
        return dict(self.kwargs)


class ConfigTokenizer:
    """Tokenizer for one value; positions are reported with the line number."""

    def __init__(self, text: str, line: int):
        self.text = text
        self.pos = 0
        self.line = line

    def error(self, msg: str) -> ConfigParseError:
        return ConfigParseError(f"line {self.line}: {msg}")

    def _skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos] in ' \t\r':
            self.pos += 1

    def peek(self) -> Optional[str]:
        self._skip_ws()
        if self.pos >= len(self.text):
            return None
        return self.text[self.pos]

    def at_end(self) -> bool:
        return self.peek() is None

    def expect(self, s: str):
        self._skip_ws()
        if not self.text.startswith(s, self.pos):
            got = self.text[self.pos:self.pos + 20] or "end of line"
            raise self.error(f"expected {s!r}, got {got!r}")
        self.pos += len(s)

    def try_consume(self, s: str) -> bool:
        self._skip_ws()
        if self.text.startswith(s, self.pos):
            self.pos += len(s)
            return True
        return False

    def read_number(self) -> Optional[float]:
        self._skip_ws()
        m = _NUMBER.match(self.text, self.pos)
        if not m:
            return None
        end = m.end()
        if end < len(self.text) and (self.text[end].isalnum() or self.text[end] in "_/."):
            return None
        self.pos = end
        return float(m.group(0))

    def read_name(self) -> Optional[str]:
        self._skip_ws()
        m = _NAME.match(self.text, self.pos)
        if not m:
            return None
        self.pos = m.end()
        return m.group(0)

    def read_word(self) -> str:
        self._skip_ws()
        if self.peek() == '"':
            end = self.text.find('"', self.pos + 1)
            if end < 0:
                raise self.error("unterminated string")
            s = self.text[self.pos + 1:end]
            self.pos = end + 1
            return s
        m = _WORD.match(self.text, self.pos)
        if not m:
            raise self.error(f"unexpected {self.text[self.pos:self.pos + 10]!r}")
        self.pos = m.end()
        return m.group(0)


def _parse_scalar(tok: ConfigTokenizer) -> Union[float, bool, str]:
    num = tok.read_number()
    if num is not None:
        return num
    word = tok.read_word()
    if word in ("true", "false"):
        return word == "true"
    return word


def _parse_call(tok: ConfigTokenizer, name: str) -> Call:
    args: list[float] = []
    kwargs: list[tuple[str, float]] = []
    if not tok.try_consume(")"):
        while True:
            start = tok.pos
            key = tok.read_name()
            if key is not None and tok.try_consume("="):
                val = tok.read_number()
                if val is None:
                    raise tok.error(f"{name}(): {key}= needs a number")
                kwargs.append((key, val))
            else:
                tok.pos = start
                if kwargs:
                    raise tok.error(f"{name}(): positional argument after keyword")
                val = tok.read_number()
                if val is None:
                    raise tok.error(f"{name}(): arguments must be numbers")
                args.append(val)
            if tok.try_consume(")"):
                break
            tok.expect(",")
    return Call(name, tuple(args), tuple(kwargs))


def parse_value(text: str, line: int = 0) -> Any:
    tok = ConfigTokenizer(text, line)
    if tok.at_end():
        raise tok.error("missing value")
    if tok.try_consume("["):
        items = []
        if not tok.try_consume("]"):
            while True:
                items.append(_parse_scalar(tok))
                if tok.try_consume("]"):
                    break
                tok.expect(",")
        value: Any = items
    else:
        start = tok.pos
        name = tok.read_name()
        if name is not None and tok.try_consume("("):
            value = _parse_call(tok, name)
        else:
            tok.pos = start
            value = _parse_scalar(tok)
    if not tok.at_end():
        raise tok.error(f"trailing text {tok.text[tok.pos:].strip()!r}")
    return value


# ---------------------------------------------------------------------------
# Typed keys
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InitSpec:
    kind: str = "random"          # random | zero | constant | bump
    value: float = 1.0            # norm, constant or amplitude

    def __str__(self) -> str:
        return "zero" if self.kind == "zero" else f"{self.kind}({self.value!r})"


@dataclass
class ExperimentConfig:
    domain: Optional[Domain] = None
    n: int = 64
    eps: float = 1.0
    eps_grid: list[float] = field(default_factory=lambda: [0.5, 0.1, 0.02])
    f: NonlinearitySpec = field(default_factory=doublewell)
    beta: Optional[float] = None
    alpha: Optional[float] = None
    eta: Optional[float] = None
    mu: Optional[float] = None
    T: float = 10.0
    dt: Optional[float] = None
    tol: float = 1e-10
    max_newton: int = 25
    t_transient: float = 50.0
    t_sample: float = 20.0
    stride: int = 10
    seed: int = 0
    n_seeds: int = 20
    levels: list[float] = field(default_factory=lambda: [1.0, 5.0, 10.0])
    problem: str = "hyperbolic"
    init: InitSpec = field(default_factory=InitSpec)
    well_prepared: bool = False
    v_mode: str = "direct"
    out: str = "out"

    def operators(self) -> Operators:
        if self.domain is None:
            raise ConfigParseError("no domain configured")
        return assemble(build_mesh(self.domain, self.n))

    def shifted_spec(self) -> NonlinearitySpec:
        return self.f if self.beta is None else self.f.with_beta(self.beta)

    def params(self, lam: float, window: str = "E", eps: Optional[float] = None) -> FunctionalParams:
        """FunctionalParams for ``window``; raises ParamsError outside the admissible region."""
        return FunctionalParams.defaults(
            lam, self.eps if eps is None else eps, self.shifted_spec().shift, window=window,
            alpha=self.alpha, eta=self.eta, mu=self.mu,
        )

    def validate(self, lam: float) -> FunctionalParams:
        """Check the numeric windows once λ is known, before any solve."""
        for e in [self.eps, *self.eps_grid]:
            self.params(lam, eps=e)
        return self.params(lam)

    def with_overrides(self, **overrides: Any) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


def _number(value, key, line, kind=float):
    if isinstance(value, bool) or not isinstance(value, float):
        raise ConfigParseError(f"line {line}: {key} must be a number, got {value!r}")
    if kind is int:
        if value != int(value):
            raise ConfigParseError(f"line {line}: {key} must be an integer, got {value!r}")
        return int(value)
    return value


def _domain(value, key, line) -> Domain:
    if not isinstance(value, Call) or value.name not in ("interval", "rectangle") or value.kwargs:
        raise ConfigParseError(f"line {line}: domain must be interval(a, b) or rectangle(ax, bx, ay, by)")
    need = 2 if value.name == "interval" else 4
    if len(value.args) != need:
        raise ConfigParseError(f"line {line}: {value.name}() takes {need} numbers")
    return Interval(*value.args) if value.name == "interval" else Rectangle(*value.args)


def _nonlinearity(value, key, line) -> NonlinearitySpec:
    if not isinstance(value, Call):
        raise ConfigParseError(f"line {line}: f must be doublewell(k=..), poly(..) or linear(c)")
    try:
        if value.name == "doublewell":
            k = value.kw().get("k", value.args[0] if value.args else 1.0)
            return doublewell(k)
        if value.name == "poly" and not value.kwargs:
            return polynomial(*value.args)
        if value.name == "linear" and not value.kwargs and len(value.args) <= 1:
            return linear(*value.args)
    except NonlinearityError as exc:
        raise ConfigParseError(f"line {line}: {exc}") from exc
    raise ConfigParseError(f"line {line}: unknown nonlinearity {value.name}()")


def _init(value, key, line) -> InitSpec:
    if value == "zero":
        return InitSpec("zero", 0.0)
    if value == "random":
        return InitSpec("random", 1.0)
    if isinstance(value, Call) and value.name in ("random", "constant", "bump") and len(value.args) == 1:
        return InitSpec(value.name, value.args[0])
    raise ConfigParseError(f"line {line}: init must be random, zero, constant(c) or bump(a)")


def _choice(*options):
    def convert(value, key, line):
        if value not in options:
            raise ConfigParseError(f"line {line}: {key} must be one of {', '.join(options)}")
        return value
    return convert


def _bool(value, key, line):
    if not isinstance(value, bool):
        raise ConfigParseError(f"line {line}: {key} must be true or false")
    return value


def _numbers(value, key, line):
    if not isinstance(value, list):
        raise ConfigParseError(f"line {line}: {key} must be a list [a, b, ...]")
    return [_number(v, key, line) for v in value]


def _string(value, key, line):
    if isinstance(value, (Call, list)):
        raise ConfigParseError(f"line {line}: {key} must be a path")
    return value if isinstance(value, str) else repr(value)


_KEYS = {
    "domain": _domain,
    "n": lambda v, k, l: _number(v, k, l, int),
    "eps": _number,
    "eps_grid": _numbers,
    "f": _nonlinearity,
    "beta": _number,
    "alpha": _number,
    "eta": _number,
    "mu": _number,
    "T": _number,
    "dt": _number,
    "tol": _number,
    "max_newton": lambda v, k, l: _number(v, k, l, int),
    "t_transient": _number,
    "t_sample": _number,
    "stride": lambda v, k, l: _number(v, k, l, int),
    "seed": lambda v, k, l: _number(v, k, l, int),
    "n_seeds": lambda v, k, l: _number(v, k, l, int),
    "levels": _numbers,
    "problem": _choice("hyperbolic", "parabolic"),
    "init": _init,
    "well_prepared": _bool,
    "v_mode": _choice("direct", "difference"),
    "out": _string,
}


def _check_ranges(cfg: ExperimentConfig, lines: dict[str, int]) -> None:
    def fail(key, msg):
        raise ConfigParseError(f"line {lines.get(key, 0)}: {msg}")

    if not 0.0 <= cfg.eps <= 1.0:
        fail("eps", f"eps must lie in [0, 1], got {cfg.eps}")
    if any(not 0.0 < e <= 1.0 for e in cfg.eps_grid):
        fail("eps_grid", "eps_grid values must lie in (0, 1]")
    for key in ("n", "max_newton", "stride"):
        if getattr(cfg, key) < 1:
            fail(key, f"{key} must be at least 1")
    for key in ("T", "t_transient", "t_sample"):
        if getattr(cfg, key) < 0.0:
            fail(key, f"{key} must be nonnegative")
    for key in ("dt", "tol"):
        if getattr(cfg, key) is not None and not getattr(cfg, key) > 0.0:
            fail(key, f"{key} must be positive")
    if cfg.n_seeds < 0 or cfg.seed < 0:
        fail("n_seeds" if cfg.n_seeds < 0 else "seed", "seed and n_seeds must be nonnegative")
    if cfg.problem == "parabolic" and "eps" in lines and cfg.eps != 0.0:
        fail("eps", "parabolic runs take eps = 0")
    if cfg.beta is not None:
        try:
            cfg.f.with_beta(cfg.beta)
        except NonlinearityError as exc:
            fail("beta", str(exc))


def parse_config(text: str) -> ExperimentConfig:
    """Parse configuration text; errors name the offending line."""
    values: dict[str, Any] = {}
    lines: dict[str, int] = {}
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, rest = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigParseError(f"line {i}: expected 'key = value'")
        if key not in _KEYS:
            raise ConfigParseError(f"line {i}: unknown key {key!r}")
        if key in lines:
            raise ConfigParseError(f"line {i}: duplicate key {key!r} (first set on line {lines[key]})")
        values[key] = _KEYS[key](parse_value(rest, i), key, i)
        lines[key] = i
    if values.get("problem") == "parabolic" and "eps" not in values:
        values["eps"] = 0.0
    cfg = ExperimentConfig(**values)
    _check_ranges(cfg, lines)
    return cfg


def parse_config_file(path: str | Path) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def dump_config(cfg: ExperimentConfig) -> str:
    """Render ``cfg`` in the grammar parse_config reads."""
    out = []
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if value is None:
            continue
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, list):
            text = "[" + ", ".join(repr(float(v)) for v in value) + "]"
        elif isinstance(value, float):
            text = repr(value)
        elif f.name == "out":
            text = f'"{value}"'
        else:
            text = str(value)
        out.append(f"{f.name} = {text}")
    return "\n".join(out) + "\n"
