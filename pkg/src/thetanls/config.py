"""Experiment configuration: dataclasses plus a flat ``section.key = value`` parser."""

from __future__ import annotations

import ast
import math
import operator
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .scheme import Fixed, HalfPlusCSqrtTau, ThetaPolicy

SCHEMA = """\
Config files hold one `section.key = value` per line; `#` starts a comment.
Numbers accept arithmetic: 2^-8, 1/4, sqrt(2), pi. Lists are comma-separated.

  domain.a             left endpoint                      (default -1)
  domain.b             right endpoint                     (default 1)
  grid.n_cells         number of cells                    (default 512)
  time.T               final time                         (default 1/4)
  time.tau             step for simulate / invariants     (default 2^-8)
  time.tau_list        coarse steps for converge          (default 2^-7,...,2^-11)
  time.tau_ref         reference step for converge        (default 2^-13)
  scheme.lambda        -1 (defocusing) or 1 (focusing)    (default -1)
  scheme.theta         list of policies: a number v means theta = v,
                       sqrt or sqrt:c means theta = min(1, 1/2 + c sqrt(tau))
                                                          (default 1/2)
  scheme.newton_tol    Newton residual tolerance          (default 1e-12)
  scheme.newton_max_iter                                  (default 50)
  scheme.mass          consistent | lumped                (default consistent)
  noise.L              number of noise modes (0 = none)   (default 0)
  noise.nu             noise amplitude                    (default sqrt(2))
  noise.coeff_rule     one_over_ell or L numbers          (default one_over_ell)
  initial.profile      sin2 | sin | zero                  (default sin2)
  mc.realizations      Monte Carlo sample size            (default 1)
  mc.base_seed         root seed                          (default 2024)
  output.csv           output path, - for stdout          (default -)

Override any key on the command line with --set key=value.
Worker count: THETANLS_WORKERS (default: number of logical cores).
"""


class ConfigError(ValueError):
    pass


_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_FUNCS: dict[str, Callable[[float], float]] = {"sqrt": math.sqrt, "exp": math.exp, "log": math.log}
_CONSTS = {"pi": math.pi, "e": math.e}


def parse_number(text: str) -> float:
    """Evaluate a small arithmetic expression such as ``2^-8`` or ``sqrt(2)``."""

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.Name) and node.id in _CONSTS:
            return _CONSTS[node.id]
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
                and node.func.id in _FUNCS and len(node.args) == 1 and not node.keywords):
            return _FUNCS[node.func.id](ev(node.args[0]))
        raise ValueError(f"unsupported expression {text!r}")

    try:
        return float(ev(ast.parse(text.strip().replace("^", "**"), mode="eval")))
    except (SyntaxError, ZeroDivisionError, OverflowError) as exc:
        raise ValueError(f"bad number {text!r}: {exc}") from None


def parse_theta(token: str) -> ThetaPolicy:
    token = token.strip()
    if token.startswith("sqrt"):
        rest = token[4:]
        c = parse_number(rest[1:]) if rest.startswith(":") else 1.0
        if rest and not rest.startswith(":"):
            raise ValueError(f"bad theta policy {token!r}")
        return HalfPlusCSqrtTau(c)
    if token.startswith("fixed:"):
        token = token[len("fixed:"):]
    return Fixed(parse_number(token))


@dataclass(frozen=True)
class DomainConfig:
    a: float = -1.0
    b: float = 1.0


@dataclass(frozen=True)
class GridConfig:
    n_cells: int = 512


@dataclass(frozen=True)
class TimeConfig:
    T: float = 0.25
    tau: float = 2.0**-8
    tau_list: tuple[float, ...] = tuple(2.0**-i for i in range(7, 12))
    tau_ref: float = 2.0**-13


@dataclass(frozen=True)
class SchemeConfig:
    lam: int = -1
    thetas: tuple[ThetaPolicy, ...] = (Fixed(0.5),)
    newton_tol: float = 1e-12
    newton_max_iter: int = 50
    mass: str = "consistent"


@dataclass(frozen=True)
class NoiseConfig:
    L: int = 0
    nu: float = math.sqrt(2.0)
    coeff_rule: str | tuple[float, ...] = "one_over_ell"


@dataclass(frozen=True)
class McConfig:
    realizations: int = 1
    base_seed: int = 2024


@dataclass(frozen=True)
class ExperimentConfig:
    domain: DomainConfig = field(default_factory=DomainConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    scheme: SchemeConfig = field(default_factory=SchemeConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    mc: McConfig = field(default_factory=McConfig)
    initial_profile: str = "sin2"
    output_csv: str = "-"

    def validate(self) -> "ExperimentConfig":
        t = self.time
        if self.domain.b <= self.domain.a:
            raise ConfigError("domain.b must exceed domain.a")
        if self.grid.n_cells < 2:
            raise ConfigError("grid.n_cells must be >= 2")
        if not t.T > 0:
            raise ConfigError("time.T must be positive")
        for name, tau in [("time.tau", t.tau), ("time.tau_ref", t.tau_ref),
                          *[("time.tau_list", s) for s in t.tau_list]]:
            steps_for(t.T, tau, name)
        for tau in t.tau_list:
            ratio = tau / t.tau_ref
            if round(ratio) < 1 or abs(ratio - round(ratio)) > 1e-9 * ratio:
                raise ConfigError(f"time.tau_ref={t.tau_ref} does not divide tau={tau}")
        if self.scheme.lam not in (-1, 1):
            raise ConfigError("scheme.lambda must be -1 or 1")
        if not self.scheme.thetas:
            raise ConfigError("scheme.theta needs at least one policy")
        if self.scheme.mass not in ("consistent", "lumped"):
            raise ConfigError("scheme.mass must be consistent or lumped")
        if self.noise.L < 0:
            raise ConfigError("noise.L must be >= 0")
        if self.mc.realizations < 1:
            raise ConfigError("mc.realizations must be >= 1")
        if self.initial_profile not in PROFILES:
            raise ConfigError(f"initial.profile must be one of {sorted(PROFILES)}")
        return self


def steps_for(T: float, tau: float, name: str = "tau") -> int:
    if not tau > 0:
        raise ConfigError(f"{name}={tau} must be positive")
    n = round(T / tau)
    if n < 1 or abs(n * tau - T) > 1e-12 * T:
        raise ConfigError(f"{name}={tau} does not divide T={T}")
    return int(n)


def _sin2(a: float, b: float):
    return lambda x: np.sin(np.pi * x) ** 2


def _sin(a: float, b: float):
    return lambda x: np.sin(np.pi * (x - a) / (b - a))


def _zero(a: float, b: float):
    return lambda x: np.zeros_like(x)


PROFILES = {"sin2": _sin2, "sin": _sin, "zero": _zero}


def initial_function(cfg: ExperimentConfig):
    """``sin2`` is sin^2(pi x) (vanishes at the ends of (-1, 1)); ``sin`` is the lowest Dirichlet mode."""
    return PROFILES[cfg.initial_profile](cfg.domain.a, cfg.domain.b)


def _int(text: str) -> int:
    v = parse_number(text)
    if v != int(v):
        raise ValueError(f"expected an integer, got {text!r}")
    return int(v)


def _list(text: str, conv) -> tuple:
    items = [s for s in (p.strip() for p in text.split(",")) if s]
    if not items:
        raise ValueError("empty list")
    return tuple(conv(s) for s in items)


def _coeffs(text: str):
    return text.strip() if text.strip() == "one_over_ell" else _list(text, parse_number)


# key -> (section attribute, field name, converter)
_KEYS = {
    "domain.a": ("domain", "a", parse_number),
    "domain.b": ("domain", "b", parse_number),
    "grid.n_cells": ("grid", "n_cells", _int),
    "time.T": ("time", "T", parse_number),
    "time.tau": ("time", "tau", parse_number),
    "time.tau_list": ("time", "tau_list", lambda s: _list(s, parse_number)),
    "time.tau_ref": ("time", "tau_ref", parse_number),
    "scheme.lambda": ("scheme", "lam", _int),
    "scheme.theta": ("scheme", "thetas", lambda s: _list(s, parse_theta)),
    "scheme.newton_tol": ("scheme", "newton_tol", parse_number),
    "scheme.newton_max_iter": ("scheme", "newton_max_iter", _int),
    "scheme.mass": ("scheme", "mass", str.strip),
    "noise.L": ("noise", "L", _int),
    "noise.nu": ("noise", "nu", parse_number),
    "noise.coeff_rule": ("noise", "coeff_rule", _coeffs),
    "initial.profile": (None, "initial_profile", str.strip),
    "mc.realizations": ("mc", "realizations", _int),
    "mc.base_seed": ("mc", "base_seed", _int),
    "output.csv": (None, "output_csv", str.strip),
}


def apply_setting(cfg: ExperimentConfig, key: str, value: str, where: str = "") -> ExperimentConfig:
    key = key.strip()
    if key not in _KEYS:
        raise ConfigError(f"{where}unknown key {key!r}")
    section, name, conv = _KEYS[key]
    try:
        parsed = conv(value)
    except ValueError as exc:
        raise ConfigError(f"{where}{key}: {exc}") from None
    if section is None:
        return replace(cfg, **{name: parsed})
    return replace(cfg, **{section: replace(getattr(cfg, section), **{name: parsed})})


def parse_config(text: str, source: str = "<config>",
                 overrides: Iterable[str] = ()) -> ExperimentConfig:
    cfg = ExperimentConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}: "
        if "=" not in line:
            raise ConfigError(f"{where}expected 'key = value', got {raw.strip()!r}")
        key, value = line.split("=", 1)
        cfg = apply_setting(cfg, key, value, where)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set {item!r}: expected key=value")
        key, value = item.split("=", 1)
        cfg = apply_setting(cfg, key, value, "--set: ")
    try:
        return cfg.validate()
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path: str | Path, overrides: Iterable[str] = ()) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path), overrides)
