"""Run configuration files.

A configuration is an INI-style text with ``[section]`` headers and
``key = value`` lines; ``#`` and ``;`` start comment lines::

    [run]
    command = classify
    map = Mira
    output = out/mira

    [params]
    a = -2.5
    b = -0.85578
    c = -2.45869

    [options]
    p_max = 12

Sections:

``[run]``
    ``command`` (required), ``map`` (required), ``output`` (default ``out``).
``[params]``
    Every parameter of the map, as a real number.
``[options]``
    Command options; see :data:`OPTIONS` for names and types.
``[path.start]``, ``[path.end]``
    Varying parameters at the two ends of a straight parameter path
    (``bifdiag`` and ``locate-flip``).
``[after]``
    Parameter changes that take the map past the doubling (``verify-doubling``).

Unknown sections and keys are errors, so a misspelled key never falls back to
a default silently.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

from .errors import ParseError, ValidationError
from .maps import REGISTRY, get_map

COMMANDS = (
    "cycle",
    "icc-resonant",
    "icc-quasi",
    "ribbon",
    "classify",
    "scan2d",
    "bifdiag",
    "verify-doubling",
    "locate-flip",
)


def _seed(text):
    parts = [float(t) for t in text.replace(",", " ").split()]
    if len(parts) != 3:
        raise ValueError("seed needs three numbers")
    return tuple(parts)


def _kind(text):
    if text not in ("resonant", "quasiperiodic"):
        raise ValueError("kind must be 'resonant' or 'quasiperiodic'")
    return text


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


# name -> (converter, must be positive)
OPTIONS = {
    "p": (int, True),
    "p_max": (int, True),
    "k_max": (int, True),
    "n": (int, True),
    "n_points": (int, True),
    "n_keep": (int, True),
    "transient": (int, False),
    "samples": (int, True),
    "workers": (int, True),
    "tol": (float, True),
    "rtol": (float, True),
    "window": (float, True),
    "max_step_deg": (float, True),
    "seed": (_seed, False),
    "kind": (_kind, False),
    "saddle": (_bool, False),
    "x_param": (str, False),
    "x_min": (float, False),
    "x_max": (float, False),
    "x_n": (int, True),
    "y_param": (str, False),
    "y_min": (float, False),
    "y_max": (float, False),
    "y_n": (int, True),
}

RUN_KEYS = ("command", "map", "output")
SECTIONS = ("run", "params", "options", "path.start", "path.end", "after")


@dataclass
class RunConfig:
    command: str
    map: str
    params: dict
    options: dict = field(default_factory=dict)
    output: str = "out"
    path_start: dict = field(default_factory=dict)
    path_end: dict = field(default_factory=dict)
    after: dict = field(default_factory=dict)

    def bound_map(self):
        return get_map(self.map).bind(**self.params)

    def option(self, name, default=None):
        return self.options.get(name, default)


def _parser():
    cp = configparser.ConfigParser(interpolation=None, strict=True,
                                   comment_prefixes=("#", ";"), inline_comment_prefixes=None)
    cp.optionxform = str  # keys are case sensitive
    return cp


def _read(text):
    cp = _parser()
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ParseError("key outside of any [section]", exc.lineno) from None
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as exc:
        raise ParseError(str(exc).split(": ", 1)[-1], exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ParseError(f"cannot parse {line!r}", lineno) from None
    return cp


def _floats(section, cp, allowed=None):
    out = {}
    for key, raw in cp.items(section):
        if allowed is not None and key not in allowed:
            raise ValidationError(
                f"[{section}] {key!r} is not a parameter of this map "
                f"(expected one of {', '.join(allowed)})", key=key)
        try:
            out[key] = float(raw)
        except ValueError:
            raise ValidationError(f"[{section}] {key} = {raw!r} is not a number", key=key) from None
    return out


def parse_config(text: str) -> RunConfig:
    """Parse and validate a configuration text."""
    if not text.strip() or all(
        not ln.strip() or ln.lstrip().startswith(("#", ";")) for ln in text.splitlines()
    ):
        raise ParseError("empty configuration", 1)
    for lineno, line in enumerate(text.splitlines(), 1):
        if line[:1].isspace() and line.strip() and not line.lstrip().startswith(("#", ";")):
            raise ParseError(f"unexpected indentation in {line.strip()!r}", lineno)
    cp = _read(text)
    for sec in cp.sections():
        if sec not in SECTIONS:
            raise ValidationError(f"unknown section [{sec}]", key=sec)
    if not cp.has_section("run"):
        raise ValidationError("missing [run] section", key="run")
    run = dict(cp.items("run"))
    for key in run:
        if key not in RUN_KEYS:
            raise ValidationError(f"[run] unknown key {key!r}", key=key)
    for key in ("command", "map"):
        if key not in run:
            raise ValidationError(f"[run] needs {key!r}", key=key)
    command = run["command"]
    if command not in COMMANDS:
        raise ValidationError(f"unknown command {command!r}; one of {', '.join(COMMANDS)}",
                              key="command")
    if run["map"] not in REGISTRY:
        raise ValidationError(f"unknown map {run['map']!r}; one of {', '.join(REGISTRY)}",
                              key="map")
    names = get_map(run["map"]).param_names

    params = _floats("params", cp, names) if cp.has_section("params") else {}
    for name in names:
        if name not in params:
            raise ValidationError(f"[params] missing {name!r}", key=name)

    options = {}
    if cp.has_section("options"):
        for key, raw in cp.items("options"):
            if key not in OPTIONS:
                raise ValidationError(f"[options] unknown key {key!r}", key=key)
            conv, positive = OPTIONS[key]
            try:
                val = conv(raw)
            except ValueError as exc:
                raise ValidationError(f"[options] {key} = {raw!r}: {exc}", key=key) from None
            if positive and val <= 0:
                raise ValidationError(f"[options] {key} must be positive", key=key)
            options[key] = val
    for key in ("x_param", "y_param"):
        if key in options and options[key] not in names:
            raise ValidationError(f"[options] {key} = {options[key]!r} is not a parameter",
                                  key=key)

    start = _floats("path.start", cp, names) if cp.has_section("path.start") else {}
    end = _floats("path.end", cp, names) if cp.has_section("path.end") else {}
    if set(start) != set(end):
        raise ValidationError("[path.start] and [path.end] must list the same parameters",
                              key="path")
    after = _floats("after", cp, names) if cp.has_section("after") else {}

    if command in ("bifdiag", "locate-flip") and not start:
        raise ValidationError(f"{command} needs [path.start] and [path.end]", key="path")
    if command == "verify-doubling" and not after:
        raise ValidationError("verify-doubling needs an [after] section", key="after")
    if command == "scan2d":
        for key in ("x_param", "x_min", "x_max", "x_n", "y_param", "y_min", "y_max", "y_n"):
            if key not in options:
                raise ValidationError(f"scan2d needs option {key!r}", key=key)
    return RunConfig(command=command, map=run["map"], params=params, options=options,
                     output=run.get("output", "out"), path_start=start, path_end=end,
                     after=after)


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    return str(v)


def emit_config(cfg: RunConfig) -> str:
    """Text that :func:`parse_config` reads back to an equal config."""
    lines = ["[run]", f"command = {cfg.command}", f"map = {cfg.map}", f"output = {cfg.output}"]

    def section(name, d):
        if d:
            lines.append("")
            lines.append(f"[{name}]")
            lines.extend(f"{k} = {_fmt(v)}" for k, v in d.items())

    section("params", {k: float(v) for k, v in cfg.params.items()})
    section("options", cfg.options)
    section("path.start", {k: float(v) for k, v in cfg.path_start.items()})
    section("path.end", {k: float(v) for k, v in cfg.path_end.items()})
    section("after", {k: float(v) for k, v in cfg.after.items()})
    return "\n".join(lines) + "\n"


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
