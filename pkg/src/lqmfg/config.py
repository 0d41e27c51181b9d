"""Flat ``key = value`` scenario files.

Lines are ``key = value``; ``#`` starts a comment; blank lines are
ignored. Lists are comma separated, matrices use ``;`` between rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ConfigError

STAGES = ("riccati", "decoupled", "picard", "verify", "montecarlo", "yosida_study", "refine_study")
KINDS = ("scalar", "random_psd", "delay", "explicit")

REQUIRED = object()

# key -> (type, default); a default of None means "optional, absent if not given"
COMMON = {
    "mc_paths": ("int", 10000),
    "mc_steps": ("int", None),
    "mc_scheme": ("str", "rk4"),
    "workers": ("int", 1),
    "picard_tol": ("float", 1e-10),
    "max_iter": ("int", 200),
    "yosida_ns": ("floats", (10.0, 100.0, 1000.0)),
    "refine_segs": ("ints", (4, 8, 16, 32)),
}

KIND_KEYS = {
    "scalar": {
        "T": ("float", 1.0), "a": ("float", 0.0), "b": ("float", 1.0), "R": ("float", 1.0),
        "q": ("float", 1.0), "qbar": ("float", 0.0), "qT": ("float", 1.0), "qbarT": ("float", 0.0),
        "S": ("float", 0.0), "ST": ("float", 0.0), "sigma": ("float", 0.0), "z0": ("float", 1.0),
        "c": ("float", 0.0), "cT": ("float", 0.0),
    },
    "random_psd": {
        "T": ("float", 1.0), "dim": ("int", 3), "dissipative": ("bool", True),
        "contractive": ("bool", True), "scale": ("float", 1.0),
    },
    "delay": {
        "d": ("float", REQUIRED), "b_kernel": ("str", "constant:1"),
        "delta_past": ("str", "constant:0"), "sigma": ("float", 0.0), "r_cost": ("float", 1.0),
        "beta": ("float", 0.5), "eta_price": ("float", 1.0), "gamma": ("float", 0.5),
        "T": ("float", 0.5), "k0": ("float", 1.0), "n_seg": ("int", 32),
    },
    "explicit": {
        "T": ("float", REQUIRED), "A": ("matrix", REQUIRED), "B": ("matrix", REQUIRED),
        "R": ("matrix", REQUIRED), "Q": ("matrix", REQUIRED), "QT": ("matrix", REQUIRED),
        "z0": ("floats", REQUIRED), "Qbar": ("matrix", None), "QbarT": ("matrix", None),
        "S": ("matrix", None), "ST": ("matrix", None), "sigma": ("matrix", None),
        "c": ("floats", None), "cT": ("floats", None), "weights": ("floats", None),
    },
}

TOP = ("name", "kind", "run", "output_dir", "seed", "steps")

TYPE_NAMES = {
    "float": "float", "int": "integer", "str": "string", "bool": "boolean",
    "floats": "list of floats", "ints": "list of integers", "matrix": "matrix (rows separated by ';')",
    "stages": "list of stages",
}


def schema(kind: str) -> dict:
    if kind not in KIND_KEYS:
        raise ConfigError(f"key 'kind': expected one of {', '.join(KINDS)}, got {kind!r}")
    out = dict(COMMON)
    out.update(KIND_KEYS[kind])
    return out


def _check_text(key, s):
    if not s or s != s.strip() or "#" in s or "\n" in s or "\r" in s or not s.isprintable():
        raise ConfigError(f"key {key!r}: string must be non-empty, printable, without '#' or surrounding blanks")
    return s


def _float(key, x):
    if isinstance(x, bool):
        raise ConfigError(f"key {key!r}: expected float, got {x!r}")
    try:
        v = float(x)
    except (TypeError, ValueError):
        raise ConfigError(f"key {key!r}: expected float, got {x!r}") from None
    if not math.isfinite(v):
        raise ConfigError(f"key {key!r}: expected a finite float, got {x!r}")
    return v


def _int(key, x):
    if isinstance(x, bool):
        raise ConfigError(f"key {key!r}: expected integer, got {x!r}")
    if isinstance(x, float):
        if not x.is_integer():
            raise ConfigError(f"key {key!r}: expected integer, got {x!r}")
        return int(x)
    try:
        return int(x)
    except (TypeError, ValueError):
        raise ConfigError(f"key {key!r}: expected integer, got {x!r}") from None


def _split(text):
    return [p.strip() for p in text.split(",")]


def coerce(key: str, typ: str, value):
    """Convert ``value`` (text or Python object) to the canonical form of ``typ``."""
    try:
        if typ == "float":
            return _float(key, value)
        if typ == "int":
            return _int(key, value)
        if typ == "str":
            if not isinstance(value, str):
                raise ConfigError(f"key {key!r}: expected string, got {value!r}")
            return _check_text(key, value)
        if typ == "bool":
            if isinstance(value, bool):
                return value
            t = str(value).strip().lower()
            if t in ("true", "yes", "1", "on"):
                return True
            if t in ("false", "no", "0", "off"):
                return False
            raise ConfigError(f"key {key!r}: expected boolean, got {value!r}")
        if typ in ("floats", "ints", "stages"):
            items = _split(value) if isinstance(value, str) else list(value)
            if not items or any(i == "" for i in items):
                raise ConfigError(f"key {key!r}: expected {TYPE_NAMES[typ]}, got {value!r}")
            if typ == "floats":
                return tuple(_float(key, i) for i in items)
            if typ == "ints":
                return tuple(_int(key, i) for i in items)
            bad = [i for i in items if i not in STAGES]
            if bad:
                raise ConfigError(f"key {key!r}: unknown stage {bad[0]!r}; expected {', '.join(STAGES)}")
            if len(set(items)) != len(items):
                raise ConfigError(f"key {key!r}: repeated stage")
            return tuple(items)
        if typ == "matrix":
            rows = value.split(";") if isinstance(value, str) else list(value)
            mat = tuple(coerce(key, "floats", r) for r in rows)
            if len({len(r) for r in mat}) != 1:
                raise ConfigError(f"key {key!r}: matrix rows have different lengths")
            return mat
    except ConfigError:
        raise
    except (TypeError, ValueError):
        raise ConfigError(f"key {key!r}: expected {TYPE_NAMES[typ]}, got {value!r}") from None
    raise ConfigError(f"key {key!r}: unknown type {typ!r}")


@dataclass(frozen=True)
class Scenario:
    """A validated scenario.

    ``parameters`` holds kind-specific problem data and stage options in
    canonical form (floats, ints, tuples); defaults are filled in on
    construction, so two scenarios describing the same run compare equal.
    """

    kind: str
    parameters: dict = field(default_factory=dict)
    run: tuple = ("riccati", "decoupled")
    name: str = "scenario"
    output_dir: str = "out"
    seed: int = 0
    steps: int | None = None

    def __post_init__(self):
        kind = coerce("kind", "str", self.kind)
        sch = schema(kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "name", coerce("name", "str", self.name))
        object.__setattr__(self, "output_dir", coerce("output_dir", "str", self.output_dir))
        seed = coerce("seed", "int", self.seed)
        if not 0 <= seed < 2**64:
            raise ConfigError("key 'seed': must be in [0, 2^64)")
        object.__setattr__(self, "seed", seed)
        object.__setattr__(self, "run", coerce("run", "stages", self.run))
        if self.steps is not None:
            steps = coerce("steps", "int", self.steps)
            if steps < 2:
                raise ConfigError("n_steps must be ≥ 2")
            object.__setattr__(self, "steps", steps)
        params = {}
        for key in self.parameters:
            if key not in sch:
                raise ConfigError(f"unknown key {key!r} for kind {kind!r}")
        for key, (typ, default) in sch.items():
            if key in self.parameters and self.parameters[key] is not None:
                params[key] = coerce(key, typ, self.parameters[key])
            elif default is REQUIRED:
                raise ConfigError(f"missing required key {key!r} for kind {kind!r}")
            elif default is not None:
                params[key] = default
        object.__setattr__(self, "parameters", params)
        self._validate()

    def _validate(self):
        p = self.parameters
        if "refine_study" in self.run and self.kind != "delay":
            raise ConfigError("stage 'refine_study' requires kind = delay")
        if p["mc_paths"] < 2:
            raise ConfigError("key 'mc_paths': must be >= 2")
        if p.get("mc_steps") is not None and p["mc_steps"] < 2:
            raise ConfigError("n_steps must be ≥ 2")
        if p["workers"] < 1:
            raise ConfigError("key 'workers': must be >= 1")
        if p["mc_scheme"] not in ("rk4", "euler"):
            raise ConfigError("key 'mc_scheme': expected 'rk4' or 'euler'")
        if not p["picard_tol"] > 0 or p["max_iter"] < 1:
            raise ConfigError("keys 'picard_tol' and 'max_iter' must be positive")
        if any(n <= 0 for n in p["yosida_ns"]):
            raise ConfigError("key 'yosida_ns': entries must be > 0")
        if any(n < 1 for n in p["refine_segs"]):
            raise ConfigError("key 'refine_segs': entries must be >= 1")
        if "T" in p and not p["T"] > 0:
            raise ConfigError("key 'T': must be > 0")
        if self.kind == "random_psd" and not 1 <= p["dim"] <= 64:
            raise ConfigError("key 'dim': must be in [1, 64]")
        if self.kind == "delay":
            if not p["d"] > 0:
                raise ConfigError("key 'd': must be > 0")
            if p["n_seg"] < 1:
                raise ConfigError("key 'n_seg': must be >= 1")
        if self.kind == "explicit":
            n = len(p["A"])
            if len(p["A"][0]) != n:
                raise ConfigError("key 'A': must be square")
            for k in ("Q", "QT", "Qbar", "QbarT", "S", "ST"):
                if k in p and (len(p[k]), len(p[k][0])) != (n, n):
                    raise ConfigError(f"key {k!r}: expected {n}x{n}")
            if len(p["B"]) != n:
                raise ConfigError(f"key 'B': expected {n} rows")
            m = len(p["B"][0])
            if (len(p["R"]), len(p["R"][0])) != (m, m):
                raise ConfigError(f"key 'R': expected {m}x{m}")
            if "sigma" in p and len(p["sigma"]) != n:
                raise ConfigError(f"key 'sigma': expected {n} rows")
            for k in ("z0", "c", "cT", "weights"):
                if k in p and len(p[k]) != n:
                    raise ConfigError(f"key {k!r}: expected {n} entries")
            if "weights" in p and any(w <= 0 for w in p["weights"]):
                raise ConfigError("key 'weights': entries must be > 0")

    def with_value(self, key: str, text: str) -> "Scenario":
        """Copy with one key replaced, ``text`` parsed as in a config file."""
        fields = dict(kind=self.kind, parameters=dict(self.parameters), run=self.run, name=self.name,
                      output_dir=self.output_dir, seed=self.seed, steps=self.steps)
        if key in TOP:
            if key == "kind":
                raise ConfigError("cannot sweep over 'kind'")
            fields[key] = _parse_top(key, text)
        else:
            sch = schema(self.kind)
            if key not in sch:
                raise ConfigError(f"unknown key {key!r} for kind {self.kind!r}")
            fields["parameters"][key] = coerce(key, sch[key][0], text)
        return Scenario(**fields)


def _parse_top(key, text):
    if key in ("seed", "steps"):
        return coerce(key, "int", text)
    if key == "run":
        return coerce(key, "stages", text)
    return coerce(key, "str", text)


def parse_config(text: str) -> Scenario:
    """Parse a scenario file.

    Raises
    ------
    ConfigError
        Syntax errors, unknown or duplicate keys, missing required keys,
        type mismatches, and invalid values. Messages name the key.
    """
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in entries:
            raise ConfigError(f"duplicate key {key!r} (line {lineno})")
        entries[key] = value
    if "kind" not in entries:
        raise ConfigError("missing required key 'kind'")
    kw = {}
    for key in TOP:
        if key in entries:
            kw[key] = _parse_top(key, entries.pop(key))
    kind = kw["kind"]
    sch = schema(kind)
    params = {}
    for key, value in entries.items():
        if key not in sch:
            raise ConfigError(f"unknown key {key!r} for kind {kind!r}")
        params[key] = coerce(key, sch[key][0], value)
    return Scenario(parameters=params, **kw)


def _fmt(typ, v):
    if typ == "float":
        return repr(float(v))
    if typ == "bool":
        return "true" if v else "false"
    if typ in ("int", "str"):
        return str(v)
    if typ in ("floats", "ints", "stages"):
        return ",".join(_fmt({"floats": "float", "ints": "int", "stages": "str"}[typ], x) for x in v)
    if typ == "matrix":
        return ";".join(_fmt("floats", r) for r in v)
    raise ConfigError(f"unknown type {typ!r}")


def render(s: Scenario) -> str:
    """Config text that :func:`parse_config` maps back to ``s``."""
    lines = [
        f"name = {s.name}",
        f"kind = {s.kind}",
        f"run = {_fmt('stages', s.run)}",
        f"output_dir = {s.output_dir}",
        f"seed = {s.seed}",
    ]
    if s.steps is not None:
        lines.append(f"steps = {s.steps}")
    sch = schema(s.kind)
    for key, value in s.parameters.items():
        lines.append(f"{key} = {_fmt(sch[key][0], value)}")
    return "\n".join(lines) + "\n"
