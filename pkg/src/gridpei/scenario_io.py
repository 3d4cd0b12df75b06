"""Scenario files: parse and emit the sectioned plain-text format.

A scenario file is line-oriented. `#` starts a comment, blank lines are
ignored. The document opens with `name = <scenario id>` and continues
with sections in square brackets; inside a section, entries are dotted
keys:

    name = two-device-study

    [topology]
    nodes = 2
    omega0 = 314.1592653589793rad/s
    line1.from = 1
    line1.to = 2
    line1.r = 0.23ohm
    line1.L = 0.35mH
    line1.open = true

    [ibrs]
    ibr1.kind = gfm
    ibr1.K_iv = 390.0
    ibr2.kind = gfm
    ibr2.K_iv = 78.0

    [pei]
    ibr2.alpha = 0.00097
    ibr2.beta = 2.18
    ibr2.kappa = 0.72

    [loads]
    load1.node = 1
    load1.model = constant-impedance
    load1.ohms = 25ohm

    [events]
    ev1.t = 0.4s
    ev1.kind = close-tie
    ev1.target = 0

    [sim]
    t_end = 2s
    secondary_trim = false
    align_islands_at = 0.4s

Numeric values may carry a unit suffix; the suffix table below maps
each to its SI scale. Unit bugs dominate failure reports in this
domain, so mH and uF cost nothing to write and are converted exactly
once, here. Device parameters not present in the file fall back to the
benchmark set for the device's kind; every other unknown key is an
error. Diagnostics carry the offending line number.

The emitter writes every field explicitly with scale-1 suffixes only,
so parse(emit(scenario)) reproduces the scenario exactly.
"""

from __future__ import annotations

import re
from dataclasses import fields as dc_fields
from dataclasses import replace
from decimal import Decimal

from .devices import benchmark_gfl_parameters, benchmark_gfm_parameters
from .errors import ScenarioParseError
from .network import Branch, KIND_LINE, NetworkTopology
from .passivity import PeiConfig
from .scenario import (
    Event,
    GridSpec,
    IbrSpec,
    LoadSpec,
    Scenario,
    SimOptions,
)

_SECTIONS = ("ibrs", "topology", "loads", "grid", "events", "pei", "sim")

# suffix -> SI scale (kept as decimal strings: the scaling is done in
# exact decimal so 5us and 5e-6 are the same double)
_UNITS = {
    "s": "1", "ms": "1e-3", "us": "1e-6",
    "Hz": "1", "kHz": "1e3",
    "ohm": "1", "mohm": "1e-3",
    "H": "1", "mH": "1e-3", "uH": "1e-6",
    "F": "1", "uF": "1e-6", "nF": "1e-9",
    "V": "1", "kV": "1e3",
    "A": "1",
    "W": "1", "kW": "1e3",
    "var": "1", "kvar": "1e3",
    "rad/s": "1",
}

_NUM_RE = re.compile(
    r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)\s*([A-Za-z/]*)$")


def _parse_number(raw: str, line: int) -> float:
    m = _NUM_RE.match(raw)
    if m is None:
        raise ScenarioParseError(f"expected a number, got {raw!r}", line)
    mag, suffix = m.groups()
    if suffix == "":
        return float(mag)
    try:
        scale = _UNITS[suffix]
    except KeyError:
        raise ScenarioParseError(
            f"unknown unit suffix {suffix!r} in {raw!r}", line) from None
    return float(Decimal(mag) * Decimal(scale))


def _parse_bool(raw: str, line: int) -> bool:
    if raw == "true":
        return True
    if raw == "false":
        return False
    raise ScenarioParseError(f"expected true or false, got {raw!r}", line)


def _parse_int(raw: str, line: int) -> int:
    val = _parse_number(raw, line)
    if val != int(val):
        raise ScenarioParseError(f"expected an integer, got {raw!r}", line)
    return int(val)


class _Entry:
    __slots__ = ("raw", "line")

    def __init__(self, raw: str, line: int):
        self.raw = raw
        self.line = line


def _tokenize(text: str):
    """First pass: (name, sections) where each section maps key -> entry."""
    name = None
    sections: dict[str, dict[str, _Entry]] = {}
    section_lines: dict[str, int] = {}
    current = None
    for lineno, rawline in enumerate(text.splitlines(), start=1):
        stripped = rawline.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ScenarioParseError("unterminated section header", lineno)
            sec = stripped[1:-1].strip()
            if sec not in _SECTIONS:
                raise ScenarioParseError(
                    f"unknown section [{sec}]; expected one of "
                    + ", ".join(f"[{s}]" for s in _SECTIONS), lineno)
            if sec in sections:
                raise ScenarioParseError(f"duplicate section [{sec}]", lineno)
            sections[sec] = {}
            section_lines[sec] = lineno
            current = sec
            continue
        if "=" not in stripped:
            raise ScenarioParseError("expected key = value", lineno)
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if not value:
            raise ScenarioParseError(f"empty value for {key!r}", lineno)
        if current is None:
            if key != "name":
                raise ScenarioParseError(
                    f"{key!r} before any section (only name = ... may "
                    "appear here)", lineno)
            if name is not None:
                raise ScenarioParseError("duplicate name", lineno)
            name = _Entry(value, lineno)
            continue
        if key in sections[current]:
            raise ScenarioParseError(
                f"duplicate key {key!r} in [{current}]", lineno)
        sections[current][key] = _Entry(value, lineno)
    if name is None:
        raise ScenarioParseError("missing name = <scenario id>", 1)
    return name, sections, section_lines


def _group(section: dict[str, _Entry], prefix_re: str, what: str):
    """Split dotted keys into per-entity dicts, checking 1..N numbering."""
    groups: dict[int, dict[str, _Entry]] = {}
    pat = re.compile(rf"^{prefix_re}(\d+)\.(\w+)$")
    for key, entry in section.items():
        m = pat.match(key)
        if m is None:
            raise ScenarioParseError(
                f"bad key {key!r}; expected {what}<N>.<field>", entry.line)
        idx = int(m.group(1))
        groups.setdefault(idx, {})[m.group(2)] = entry
    for want, got in enumerate(sorted(groups), start=1):
        if got != want:
            anchor = next(iter(groups[got].values())).line
            raise ScenarioParseError(
                f"{what} entries must be numbered 1..N without gaps; "
                f"found {what}{got}", anchor)
    return [groups[i] for i in sorted(groups)]


def _take(entries: dict, field: str, kind, sec_line: int, required=True,
          default=None):
    if field not in entries:
        if required:
            raise ScenarioParseError(f"missing {field!r}", sec_line)
        return default
    e = entries.pop(field)
    return kind(e.raw, e.line)


def _reject_leftovers(entries: dict, context: str):
    for key, e in entries.items():
        raise ScenarioParseError(f"unknown key {key!r} in {context}", e.line)


def _parse_ibrs(section, sec_line):
    specs = []
    for k, entries in enumerate(_group(section, "ibr", "ibr"), start=1):
        kind_e = entries.pop("kind", None)
        if kind_e is None:
            raise ScenarioParseError(f"ibr{k} is missing kind", sec_line)
        kind = kind_e.raw
        if kind == "gfm":
            params = benchmark_gfm_parameters()
        elif kind == "gfl":
            params = benchmark_gfl_parameters()
        else:
            raise ScenarioParseError(
                f"unknown device kind {kind!r}", kind_e.line)
        valid = {f.name for f in dc_fields(params)}
        overrides = {}
        for field in list(entries):
            if field in valid:
                e = entries.pop(field)
                overrides[field] = _parse_number(e.raw, e.line)
        _reject_leftovers(entries, f"ibr{k} ({kind})")
        if overrides:
            params = replace(params, **overrides)
        specs.append(IbrSpec(kind=kind, params=params))
    if not specs:
        raise ScenarioParseError("at least one ibr is required", sec_line)
    return specs


def _parse_topology(section, sec_line):
    sec = dict(section)
    nodes_e = sec.pop("nodes", None)
    if nodes_e is None:
        raise ScenarioParseError("missing nodes", sec_line)
    n_nodes = _parse_int(nodes_e.raw, nodes_e.line)
    omega_e = sec.pop("omega0", None)
    omega0 = (_parse_number(omega_e.raw, omega_e.line)
              if omega_e is not None else NetworkTopology.omega_0)
    branches = []
    open_lines = []
    for k, entries in enumerate(_group(sec, "line", "line"), start=1):
        i = _take(entries, "from", _parse_int, sec_line)
        j = _take(entries, "to", _parse_int, sec_line)
        r = _take(entries, "r", _parse_number, sec_line)
        ll = _take(entries, "L", _parse_number, sec_line)
        is_open = _take(entries, "open", _parse_bool, sec_line,
                        required=False, default=False)
        _reject_leftovers(entries, f"line{k}")
        branches.append(Branch(i, j, KIND_LINE, r, ll))
        if is_open:
            open_lines.append(k - 1)
    return (NetworkTopology(n_nodes, tuple(branches), omega0),
            tuple(open_lines))


def _parse_loads(section, sec_line):
    loads = []
    for k, entries in enumerate(_group(section, "load", "load"), start=1):
        node = _take(entries, "node", _parse_int, sec_line)
        model = _take(entries, "model", lambda raw, line: raw, sec_line)
        ohms = _take(entries, "ohms", _parse_number, sec_line,
                     required=False)
        p = _take(entries, "p", _parse_number, sec_line, required=False)
        q = _take(entries, "q", _parse_number, sec_line, required=False)
        _reject_leftovers(entries, f"load{k}")
        loads.append(LoadSpec(node=node, model=model, ohms=ohms, p=p, q=q))
    return tuple(loads)


def _parse_grid(section, sec_line):
    sec = dict(section)
    kwargs = {}
    for field, attr, parser in (("node", "node", _parse_int),
                                ("v_peak", "v_peak", _parse_number),
                                ("f", "f_hz", _parse_number),
                                ("r", "r", _parse_number),
                                ("L", "L", _parse_number)):
        e = sec.pop(field, None)
        if e is not None:
            kwargs[attr] = parser(e.raw, e.line)
    _reject_leftovers(sec, "[grid]")
    for required in ("node", "v_peak"):
        if required not in kwargs:
            raise ScenarioParseError(f"grid needs {required}", sec_line)
    return GridSpec(**kwargs)


def _parse_events(section, sec_line):
    events = []
    for k, entries in enumerate(_group(section, "ev", "ev"), start=1):
        t = _take(entries, "t", _parse_number, sec_line)
        kind = _take(entries, "kind", lambda raw, line: raw, sec_line)
        target = _take(entries, "target", _parse_int, sec_line,
                       required=False, default=0)
        value = _take(entries, "value", _parse_number, sec_line,
                      required=False, default=0.0)
        value2 = _take(entries, "value2", _parse_number, sec_line,
                       required=False, default=0.0)
        _reject_leftovers(entries, f"ev{k}")
        events.append(Event(t=t, kind=kind, target=target, value=value,
                            value2=value2))
    return tuple(events)


def _parse_pei(section, sec_line, specs):
    # pei entries attach sparsely (a subset of devices), so no
    # contiguous-numbering check here, unlike _group
    groups: dict[int, dict[str, _Entry]] = {}
    pat = re.compile(r"^ibr(\d+)\.(\w+)$")
    for key, entry in section.items():
        m = pat.match(key)
        if m is None:
            raise ScenarioParseError(
                f"bad key {key!r}; expected ibr<N>.<field>", entry.line)
        idx = int(m.group(1))
        groups.setdefault(idx, {})[m.group(2)] = entry
    for idx in sorted(groups):
        entries = groups[idx]
        anchor = next(iter(entries.values())).line
        if not 1 <= idx <= len(specs):
            raise ScenarioParseError(
                f"pei entry for ibr{idx} but only {len(specs)} devices",
                anchor)
        alpha = _take(entries, "alpha", _parse_number, anchor)
        beta = _take(entries, "beta", _parse_number, anchor)
        kappa = _take(entries, "kappa", _parse_number, anchor)
        enabled = _take(entries, "enabled", _parse_bool, anchor,
                        required=False, default=True)
        _reject_leftovers(entries, f"pei ibr{idx}")
        specs[idx - 1] = replace(
            specs[idx - 1],
            pei=PeiConfig(alpha=alpha, beta=beta, kappa=kappa),
            pei_enabled=enabled)


def _parse_sim(section, sec_line):
    sec = dict(section)
    kwargs = {}
    for field, parser in (("dt", _parse_number), ("t_end", _parse_number),
                          ("decimation", _parse_int),
                          ("blowup_factor", _parse_number),
                          ("cp_tau", _parse_number),
                          ("secondary_trim", _parse_bool),
                          ("align_islands_at", _parse_number)):
        e = sec.pop(field, None)
        if e is not None:
            kwargs[field] = parser(e.raw, e.line)
    _reject_leftovers(sec, "[sim]")
    return SimOptions(**kwargs)


def parse_scenario(text: str) -> Scenario:
    """Parse a scenario document. Raises ScenarioParseError with a line
    anchor on malformed input, InvalidScenario on well-formed input that
    fails cross-field validation."""
    name_e, sections, section_lines = _tokenize(text)
    if "ibrs" not in sections:
        raise ScenarioParseError("missing [ibrs] section", 1)
    if "topology" not in sections:
        raise ScenarioParseError("missing [topology] section", 1)

    specs = _parse_ibrs(sections["ibrs"], section_lines["ibrs"])
    topology, open_lines = _parse_topology(
        sections["topology"], section_lines["topology"])
    loads = (_parse_loads(sections["loads"], section_lines["loads"])
             if "loads" in sections else ())
    grid = (_parse_grid(sections["grid"], section_lines["grid"])
            if "grid" in sections else None)
    events = (_parse_events(sections["events"], section_lines["events"])
              if "events" in sections else ())
    if "pei" in sections:
        _parse_pei(sections["pei"], section_lines["pei"], specs)
    sim = (_parse_sim(sections["sim"], section_lines["sim"])
           if "sim" in sections else SimOptions())

    return Scenario(name=name_e.raw, ibrs=tuple(specs), topology=topology,
                    loads=loads, grid=grid, events=events,
                    open_lines=open_lines, sim=sim)


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def _fmt(value: float, suffix: str = "") -> str:
    # repr of a float is its shortest exact decimal form; the float()
    # strips numpy scalar types
    return f"{float(value)!r}{suffix}"


def emit_scenario(scenario: Scenario) -> str:
    """Canonical text form; parse_scenario(emit_scenario(s)) == s."""
    out = [f"name = {scenario.name}", ""]

    out.append("[topology]")
    out.append(f"nodes = {scenario.topology.n_nodes}")
    out.append(f"omega0 = {_fmt(scenario.topology.omega_0, 'rad/s')}")
    for k, b in enumerate(scenario.topology.branches, start=1):
        out.append(f"line{k}.from = {b.i}")
        out.append(f"line{k}.to = {b.j}")
        out.append(f"line{k}.r = {_fmt(b.r, 'ohm')}")
        out.append(f"line{k}.L = {_fmt(b.L, 'H')}")
        if k - 1 in scenario.open_lines:
            out.append(f"line{k}.open = true")
    out.append("")

    out.append("[ibrs]")
    for k, spec in enumerate(scenario.ibrs, start=1):
        out.append(f"ibr{k}.kind = {spec.kind}")
        for f in dc_fields(spec.params):
            out.append(f"ibr{k}.{f.name} = {_fmt(getattr(spec.params, f.name))}")
    out.append("")

    if any(s.pei is not None for s in scenario.ibrs):
        out.append("[pei]")
        for k, spec in enumerate(scenario.ibrs, start=1):
            if spec.pei is None:
                continue
            out.append(f"ibr{k}.alpha = {_fmt(spec.pei.alpha)}")
            out.append(f"ibr{k}.beta = {_fmt(spec.pei.beta)}")
            out.append(f"ibr{k}.kappa = {_fmt(spec.pei.kappa)}")
            if not spec.pei_enabled:
                out.append(f"ibr{k}.enabled = false")
        out.append("")

    if scenario.loads:
        out.append("[loads]")
        for k, ld in enumerate(scenario.loads, start=1):
            out.append(f"load{k}.node = {ld.node}")
            out.append(f"load{k}.model = {ld.model}")
            if ld.ohms is not None:
                out.append(f"load{k}.ohms = {_fmt(ld.ohms, 'ohm')}")
            if ld.p is not None:
                out.append(f"load{k}.p = {_fmt(ld.p, 'W')}")
            if ld.q is not None:
                out.append(f"load{k}.q = {_fmt(ld.q, 'var')}")
        out.append("")

    if scenario.grid is not None:
        g = scenario.grid
        out.append("[grid]")
        out.append(f"node = {g.node}")
        out.append(f"v_peak = {_fmt(g.v_peak, 'V')}")
        out.append(f"f = {_fmt(g.f_hz, 'Hz')}")
        out.append(f"r = {_fmt(g.r, 'ohm')}")
        out.append(f"L = {_fmt(g.L, 'H')}")
        out.append("")

    if scenario.events:
        out.append("[events]")
        for k, ev in enumerate(scenario.events, start=1):
            out.append(f"ev{k}.t = {_fmt(ev.t, 's')}")
            out.append(f"ev{k}.kind = {ev.kind}")
            if ev.target:
                out.append(f"ev{k}.target = {ev.target}")
            if ev.value:
                out.append(f"ev{k}.value = {_fmt(ev.value)}")
            if ev.value2:
                out.append(f"ev{k}.value2 = {_fmt(ev.value2)}")
        out.append("")

    s = scenario.sim
    defaults = SimOptions()
    out.append("[sim]")
    out.append(f"dt = {_fmt(s.dt, 's')}")
    out.append(f"t_end = {_fmt(s.t_end, 's')}")
    if s.decimation != defaults.decimation:
        out.append(f"decimation = {s.decimation}")
    if s.blowup_factor != defaults.blowup_factor:
        out.append(f"blowup_factor = {_fmt(s.blowup_factor)}")
    if s.cp_tau != defaults.cp_tau:
        out.append(f"cp_tau = {_fmt(s.cp_tau, 's')}")
    if s.secondary_trim != defaults.secondary_trim:
        out.append(f"secondary_trim = {'true' if s.secondary_trim else 'false'}")
    if s.align_islands_at is not None:
        out.append(f"align_islands_at = {_fmt(s.align_islands_at, 's')}")
    out.append("")
    return "\n".join(out)


def save_scenario(scenario: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(emit_scenario(scenario))
