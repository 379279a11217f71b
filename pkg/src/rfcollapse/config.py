"""Scenario configuration: defaults, validation, and a YAML/JSON round trip."""
from __future__ import annotations

import ast
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

SCENARIOS = ("collapsing_torus", "nil_scaling", "family_convergence")


class ConfigError(ValueError):
    """Schema violation; ``field`` names the offending key path."""

    def __init__(self, field_path: str, message: str):
        super().__init__(f"{field_path}: {message}")
        self.field = field_path


_DEFAULTS = {
    "collapsing_torus": {"i_list": [1, 4, 16, 64], "t_grid": [0.0, 0.125, 0.25, 0.375, 0.5]},
    "nil_scaling": {"i_list": [10, 100, 1000], "t_grid": [0.0, 1.0]},
    "family_convergence": {"i_list": [16, 64, 256], "t_grid": [0.0, 0.125, 0.25, 0.375, 0.5]},
}


@dataclass
class ScenarioConfig:
    scenario: str
    i_list: list = None
    t_grid: list = None
    f: str = "2 + cos(r)"
    nr: int = 256
    ns: int = 64
    dt: float | None = None
    record_points: int = 41
    seed: int = 0
    budget: int = 1000
    landmark_step_r: int = 8
    landmark_spacing: float = 0.3
    window_radius: float = 3.0
    monitor_ns: int = 256
    rho_list: list = field(default_factory=lambda: [0.5, 1.0])
    containment_times: list = field(default_factory=lambda: [0.1, 0.25])
    deltas: list = field(default_factory=lambda: [0.05, 0.1])
    n_landmarks: int = 4
    C1: float = 1.0
    C2: float = 1.0
    C3: float = 1.0
    box: float = 1.0
    box_n: int = 8
    fiber_steps: int = 8

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError("scenario", f"unknown scenario {self.scenario!r}; expected one of {list(SCENARIOS)}")
        d = _DEFAULTS[self.scenario]
        if self.i_list is None:
            self.i_list = list(d["i_list"])
        if self.t_grid is None:
            self.t_grid = list(d["t_grid"])
        self.validate()

    @property
    def T(self) -> float:
        return float(max(self.t_grid))

    def validate(self):
        if not isinstance(self.i_list, list) or not self.i_list:
            raise ConfigError("i_list", "must be a nonempty list")
        if any(not _is_number(v) or v <= 0 for v in self.i_list):
            raise ConfigError("i_list", "entries must be positive numbers")
        if any(b <= a for a, b in zip(self.i_list, self.i_list[1:])):
            raise ConfigError("i_list", "must be strictly ascending")
        if not isinstance(self.t_grid, list) or not self.t_grid:
            raise ConfigError("t_grid", "must be a nonempty list")
        if any(not _is_number(v) or v < 0 for v in self.t_grid):
            raise ConfigError("t_grid", "entries must be nonnegative numbers")
        if any(b <= a for a, b in zip(self.t_grid, self.t_grid[1:])) or self.t_grid[0] != 0:
            raise ConfigError("t_grid", "must start at 0 and be strictly ascending")
        for name in ("nr", "ns", "budget", "record_points", "landmark_step_r", "monitor_ns", "n_landmarks", "box_n", "fiber_steps"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v <= 0:
                raise ConfigError(name, "must be a positive integer")
        if self.nr < 16 or self.ns < 8:
            raise ConfigError("nr" if self.nr < 16 else "ns", "grid too coarse (nr >= 16, ns >= 8)")
        if self.n_landmarks > 6:
            raise ConfigError("n_landmarks", "landmark nets are compared exhaustively; at most 6 points")
        if self.nr % self.landmark_step_r:
            raise ConfigError("landmark_step_r", "must divide nr")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ConfigError("seed", "must be a nonnegative integer")
        if self.dt is not None and (not _is_number(self.dt) or self.dt <= 0):
            raise ConfigError("dt", "must be positive")
        for name in ("C1", "C2", "C3", "box", "landmark_spacing", "window_radius"):
            v = getattr(self, name)
            if not _is_number(v) or v <= 0:
                raise ConfigError(name, "must be positive")
        for name in ("rho_list", "deltas", "containment_times"):
            v = getattr(self, name)
            if not isinstance(v, list) or any(not _is_number(x) or x <= 0 for x in v):
                raise ConfigError(name, "must be a list of positive numbers")
        try:
            profile_function(self.f)
        except ValueError as e:
            raise ConfigError("f", str(e)) from None

    def to_dict(self) -> dict:
        return {k: _py(v) for k, v in asdict(self).items()}


def _py(v):
    # numpy scalars pass validation but cannot be serialized to YAML
    if isinstance(v, list):
        return [_py(x) for x in v]
    return v.item() if isinstance(v, np.generic) else v


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def from_dict(doc) -> ScenarioConfig:
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "config must be a mapping")
    known = {f.name for f in fields(ScenarioConfig)}
    for key in doc:
        if key not in known:
            raise ConfigError(str(key), "unknown key")
    if "scenario" not in doc:
        raise ConfigError("scenario", "required")
    doc = dict(doc)
    # YAML reads "1e-3" as a string; accept numeric strings only where floats are expected
    for key in ("dt",):
        if isinstance(doc.get(key), str):
            try:
                doc[key] = float(doc[key])
            except ValueError:
                raise ConfigError(key, f"not a number: {doc[key]!r}") from None
    return ScenarioConfig(**doc)


def parse_config(path) -> ScenarioConfig:
    """Read a YAML or JSON config (JSON is valid YAML) and apply defaults."""
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file not found: {p}")
    try:
        doc = yaml.safe_load(p.read_text())
    except yaml.YAMLError as e:
        raise ConfigError("<root>", f"unparseable config: {e}") from None
    return from_dict(doc)


def emit_config(cfg: ScenarioConfig, path=None) -> str:
    text = yaml.safe_dump(cfg.to_dict(), sort_keys=True)
    if path is not None:
        Path(path).write_text(text)
    return text


def config_json(cfg: ScenarioConfig) -> str:
    return json.dumps(cfg.to_dict(), sort_keys=True)


# -- warping-function expressions ----------------------------------------------------

_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "abs": np.abs,
}
_NODES = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Constant, ast.Load,
          ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd)


def profile_function(expr: str):
    """Compile an arithmetic expression in ``r`` (e.g. ``"2 + cos(r)"``) to a vectorized callable."""
    if not isinstance(expr, str) or not expr.strip():
        raise ValueError("expression must be a nonempty string")
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as e:
        raise ValueError(f"cannot parse {expr!r}: {e.msg}") from None
    for node in ast.walk(tree):
        if not isinstance(node, _NODES):
            raise ValueError(f"disallowed syntax in {expr!r}: {type(node).__name__}")
        if isinstance(node, ast.Name) and node.id not in _FUNCS and node.id not in ("r", "pi"):
            raise ValueError(f"unknown name {node.id!r} in {expr!r}")
        if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS):
            raise ValueError(f"only {sorted(_FUNCS)} may be called")
        if isinstance(node, ast.Constant) and not _is_number(node.value):
            raise ValueError(f"non-numeric constant in {expr!r}")
    code = compile(tree, "<profile>", "eval")

    def f(r):
        r = np.asarray(r, dtype=float)
        out = eval(code, {"__builtins__": {}}, {**_FUNCS, "pi": math.pi, "r": r})
        return np.broadcast_to(np.asarray(out, dtype=float), r.shape).copy()

    probe = f(np.linspace(0, 2 * math.pi, 64, endpoint=False))
    if not np.all(np.isfinite(probe)) or np.any(probe <= 0):
        raise ValueError(f"{expr!r} must be finite and positive on [0, 2pi)")
    return f
