"""Flat experiment configuration.

Grammar, one entry per line, UTF-8::

    # comment (whole line or trailing after the value)
    section.key = value

Booleans are ``true``/``false``, lists are comma separated, probes are
``player:type`` pairs (1-based) and ``none`` clears an optional value.
Keys not listed in :data:`SCHEMA` are rejected; later lines override
earlier ones.
"""

from __future__ import annotations

import difflib
from dataclasses import dataclass, field

from .exceptions import ConfigurationError
from .game import BENCHMARK_BASE_PRICE, cournot_game
from .network import MODES
from .solver import INIT_RULES

MODELS = ("cournot",)


def _bool(text):
    low = text.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected true or false, got {text!r}")


def _int_list(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


def _probes(text):
    if text.strip().lower() == "none":
        return None
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        i, k = item.split(":")
        out.append((int(i), int(k)))
    return tuple(out)


def _optional_int(text):
    return None if text.strip().lower() == "none" else int(text)


def _fmt(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return ", ".join(f"{i}:{k}" for i, k in value)
        return ", ".join(str(v) for v in value)
    return str(value)


# key -> (parser, check, help); check returns an error message or None
def _positive(v):
    return None if v > 0 else "must be positive"


def _at_least(lo):
    return lambda v: None if v >= lo else f"must be >= {lo}"


def _choice(options):
    return lambda v: None if v in options else f"must be one of {', '.join(options)}"


SCHEMA = {
    "game.model": (str, _choice(MODELS), "cost model preset"),
    "game.n": (int, _at_least(2), "number of players"),
    "game.box_lo": (float, None, "lower action bound"),
    "game.box_hi": (float, None, "upper action bound"),
    "game.type_lo": (float, None, "lower type bound"),
    "game.type_hi": (float, None, "upper type bound"),
    "game.sign": (int, lambda v: None if v in (1, -1) else "must be 1 or -1", "sign of the price constant"),
    "game.d": (float, None, "base price"),
    "game.delta_step": (float, None, "firm offset step, delta_i = step * (i - 1)"),
    "discretization.N": (int, _at_least(1), "grid size"),
    "discretization.N_list": (_int_list, lambda v: None if v and min(v) >= 1 else "needs positive entries", "study grid sizes"),
    "discretization.N_fine": (int, _at_least(1), "reference grid size for the study"),
    "network.mode": (str, _choice(MODES[:4]), "graph schedule"),
    "network.seed": (int, _at_least(0), "schedule seed"),
    "network.B": (_optional_int, lambda v: None if v is None or v >= 1 else "must be >= 1", "connectivity window"),
    "network.extra_edge_prob": (float, lambda v: None if 0 <= v <= 1 else "must lie in [0, 1]", "random-gossip edge probability"),
    "network.horizon": (int, _at_least(1), "products inspected by the mixing diagnostic"),
    "solver.T": (int, _at_least(0), "iterations"),
    "solver.a": (float, _positive, "stepsize numerator"),
    "solver.b": (float, _at_least(1), "stepsize offset"),
    "solver.record_every": (int, _at_least(1), "trace period"),
    "solver.init": (str, _choice(INIT_RULES), "initial strategy rule"),
    "solver.seed": (int, _at_least(0), "seed of the random init rule"),
    "solver.chain": (_bool, None, "include the aggregate chain term"),
    "solver.threads": (int, _at_least(1), "threads for per-player gradients"),
    "solver.oracle_tol": (float, _positive, "exploitability tolerance of the central oracle"),
    "output.dir": (str, None, "artifact directory"),
    "output.probes": (_probes, None, "player:type pairs in the trace; none = ends of players 1 and n"),
    "output.emit_svg": (_bool, None, "write SVG charts"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        merged = dict(DEFAULT_VALUES)
        for key, value in self.values.items():
            if key not in SCHEMA:
                raise ConfigurationError(_unknown(key))
            merged[key] = value
        object.__setattr__(self, "values", merged)
        _check(merged)

    def __getitem__(self, key):
        return self.values[key]

    def replace(self, **updates) -> "ExperimentConfig":
        """``cfg.replace(**{"solver.T": 10})``."""
        return ExperimentConfig({**self.values, **updates})

    def format(self) -> str:
        lines = []
        section = None
        for key in SCHEMA:
            sec = key.split(".")[0]
            if sec != section:
                if section is not None:
                    lines.append("")
                section = sec
            lines.append(f"{key} = {_fmt(self.values[key])}  # {SCHEMA[key][2]}")
        return "\n".join(lines) + "\n"

    def probes(self) -> tuple:
        if self.values["output.probes"] is not None:
            return self.values["output.probes"]
        n, N = self.values["game.n"], self.values["discretization.N"]
        return tuple(dict.fromkeys(((1, 1), (1, N), (n, 1), (n, N))))

    def game(self):
        v = self.values
        return cournot_game(
            n_players=v["game.n"],
            N=v["discretization.N"],
            box=(v["game.box_lo"], v["game.box_hi"]),
            types=(v["game.type_lo"], v["game.type_hi"]),
            sign=v["game.sign"],
            d=v["game.d"],
            delta_step=v["game.delta_step"],
        )


DEFAULT_VALUES = {
    "game.model": "cournot",
    "game.n": 5,
    "game.box_lo": 0.0,
    "game.box_hi": 20.0,
    "game.type_lo": 1.0,
    "game.type_hi": 2.0,
    "game.sign": -1,
    "game.d": BENCHMARK_BASE_PRICE,
    "game.delta_step": 20.0,
    "discretization.N": 50,
    "discretization.N_list": (10, 20, 40),
    "discretization.N_fine": 160,
    "network.mode": "complete",
    "network.seed": 0,
    "network.B": None,
    "network.extra_edge_prob": 0.3,
    "network.horizon": 200,
    "solver.T": 50_000,
    "solver.a": 2.0,
    "solver.b": 10.0,
    "solver.record_every": 100,
    "solver.init": "midpoint",
    "solver.seed": 0,
    "solver.chain": True,
    "solver.threads": 1,
    "solver.oracle_tol": 1e-8,
    "output.dir": "out",
    "output.probes": None,
    "output.emit_svg": True,
}


def _unknown(key):
    hint = difflib.get_close_matches(key, SCHEMA, n=1)
    suffix = f"; did you mean {hint[0]!r}?" if hint else ""
    return f"unknown key {key!r}{suffix}"


def _check(v):
    for key, value in v.items():
        check = SCHEMA[key][1]
        problem = check(value) if check else None
        if problem:
            raise ConfigurationError(f"{key} = {_fmt(value)}: {problem}")
    if not v["game.box_lo"] < v["game.box_hi"]:
        raise ConfigurationError("game.box_lo must be below game.box_hi")
    if not v["game.type_lo"] < v["game.type_hi"]:
        raise ConfigurationError("game.type_lo must be below game.type_hi")
    n, N = v["game.n"], v["discretization.N"]
    for i, k in v["output.probes"] or ():
        if not (1 <= i <= n and 1 <= k <= N):
            raise ConfigurationError(f"output.probes: ({i}:{k}) outside players 1..{n}, types 1..{N}")


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}:{lineno}: expected 'section.key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigurationError(f"{source}:{lineno}: {_unknown(key)}")
        try:
            values[key] = SCHEMA[key][0](value)
        except ValueError as exc:
            raise ConfigurationError(f"{source}:{lineno}: cannot parse {key}: {exc}") from None
    return ExperimentConfig(values)


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), str(path))


def default_config() -> ExperimentConfig:
    return ExperimentConfig()
