"""Command-line front end.

Subcommands
    l2gain      gain of a built-in device model or an (A, B, C) matrix file
    design-pei  interface gains for a given device gain
    simulate    run scenarios, exporting trajectories and run reports
    certify     decentralized stability certificate for a scenario
    analyze     metrics over a previously exported trajectory

Exit codes: 0 success, 2 bad input (parse errors, invalid scenarios,
infeasible gain requests), 3 numeric faults (divergence, no equilibrium,
non-Hurwitz models), 4 certification refused. The 2/3 split follows the
exception taxonomy in errors; 4 exists so CI can gate on certification
without confusing "the tool failed" with "the design fails".
"""

from __future__ import annotations

import argparse
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import cases
from .devices import (
    StateSpaceModel,
    V_NOM,
    benchmark_gfl_parameters,
    benchmark_gfm_parameters,
    linearize_fast_subsystem,
)
from .errors import (
    EmptyNetwork,
    InfeasiblePolicy,
    InvalidScenario,
    NoConvergence,
    NotHurwitz,
    NotSettled,
    NumericBlowup,
    ScenarioParseError,
    SetpointSingularity,
    TopologyError,
)
from .network import (
    Branch,
    KIND_SHUNT,
    NEUTRAL,
    NetworkTopology,
    network_passivity_index,
)
from .passivity import design_pei, l2_gain, verify_pei
from .scenario import EV_PEI_ENABLE, Scenario
from .scenario_io import load_scenario
from .simulator import (
    energy_report,
    growth_detected,
    power_sharing_error,
    settling_time,
    simulate,
    simulate_droop_only,
)
from .smallsignal import assemble_small_signal

_BUILTIN_KIV = {"gfm-1": 390.0, "gfm-2": 78.0, "gfm-3": 39.0}

#: channels exported per device, in column order
CHANNELS = ("v_od", "v_oq", "i_od", "i_oq", "i_a", "i_b", "i_c",
            "p_inst", "p_avg", "q_avg", "p_series", "p_shunt")


# --- model sources ------------------------------------------------------------


def builtin_model(name: str) -> StateSpaceModel:
    """Named device models used throughout: the grid-following benchmark at
    nominal voltage, and the grid-forming benchmark at its three voltage-loop
    tunings (gfm-1 strongest)."""
    if name == "gfl":
        return linearize_fast_subsystem(benchmark_gfl_parameters(), V_NOM)
    if name in _BUILTIN_KIV:
        params = replace(benchmark_gfm_parameters(), K_iv=_BUILTIN_KIV[name])
        return linearize_fast_subsystem(params)
    raise InvalidScenario(f"unknown built-in model {name!r}; have gfl, "
                          + ", ".join(sorted(_BUILTIN_KIV)))


def _parse_rows(text: str, what: str) -> np.ndarray:
    rows = []
    for part in text.split(";"):
        entries = part.replace(",", " ").split()
        if not entries:
            raise ValueError(f"{what}: empty row")
        try:
            rows.append([float(e) for e in entries])
        except ValueError:
            raise ValueError(f"{what}: non-numeric entry in {part!r}") from None
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError(f"{what}: ragged rows")
    return np.array(rows)


def load_state_space(path) -> StateSpaceModel:
    """Read an (A, B, C) triple from a text file: `A = <rows>` with rows
    separated by `;` and entries by spaces or commas."""
    mats = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        stripped = raw.split("#", 1)[0].strip()
        if not stripped:
            continue
        key, eq, value = stripped.partition("=")
        key = key.strip()
        if not eq or key not in ("A", "B", "C"):
            raise ValueError(f"expected 'A|B|C = rows', got {stripped!r}")
        if key in mats:
            raise ValueError(f"duplicate matrix {key}")
        mats[key] = _parse_rows(value, key)
    for key in ("A", "B", "C"):
        if key not in mats:
            raise ValueError(f"missing matrix {key}")
    n = mats["A"].shape[0]
    labels = tuple(f"x{i + 1}" for i in range(n))
    return StateSpaceModel(A=mats["A"], B=mats["B"], C=mats["C"], labels=labels)


def resolve_scenario(source: str) -> Scenario:
    """A `paper:` id from the built-in library, anything else a file path."""
    if source.startswith("paper:"):
        try:
            return cases.build(source)
        except KeyError as e:
            raise InvalidScenario(e.args[0]) from None
    return load_scenario(source)


# --- trajectory export --------------------------------------------------------


def _channel_columns(ch):
    return {
        "v_od": ch.v_odq[:, 0], "v_oq": ch.v_odq[:, 1],
        "i_od": ch.i_odq[:, 0], "i_oq": ch.i_odq[:, 1],
        "i_a": ch.i_abc[:, 0], "i_b": ch.i_abc[:, 1], "i_c": ch.i_abc[:, 2],
        "p_inst": ch.p_inst, "p_avg": ch.p_avg, "q_avg": ch.q_avg,
        "p_series": ch.p_series, "p_shunt": ch.p_shunt,
    }


def write_trajectory(traj, path, fmt: str = "csv") -> None:
    names = ["t"]
    columns = [traj.t]
    for k, ch in enumerate(traj.ibr, start=1):
        cols = _channel_columns(ch)
        for name in CHANNELS:
            names.append(f"ibr{k}.{name}")
            columns.append(cols[name])
    if fmt == "csv":
        data = np.column_stack(columns)
        np.savetxt(path, data, delimiter=",", fmt="%.10e",
                   header=",".join(names), comments="")
    elif fmt == "binary":
        arrays = {name.replace(".", "_"): col
                  for name, col in zip(names, columns)}
        np.savez_compressed(path, **arrays)
    else:
        raise ValueError(f"unknown format {fmt!r}")


def read_trajectory(path):
    """Load an exported trajectory: (t, per-device dicts of channel arrays)."""
    path = Path(path)
    if path.suffix == ".npz":
        with np.load(path) as data:
            flat = {name: data[name] for name in data.files}
        t = flat.pop("t")
        per = {}
        for name, col in flat.items():
            dev, _, chan = name.partition("_")
            per.setdefault(dev, {})[chan] = col
    else:
        with open(path, "r", encoding="utf-8") as fh:
            names = fh.readline().strip().split(",")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if names[0] != "t":
            raise ValueError(f"{path}: first column must be t")
        t = data[:, 0]
        per = {}
        for col, name in enumerate(names[1:], start=1):
            dev, _, chan = name.partition(".")
            per.setdefault(dev, {})[chan] = data[:, col]
    devices = [per[k] for k in sorted(per, key=lambda d: int(d[3:]))]
    return t, devices


# --- report plumbing ----------------------------------------------------------


def _fmt_val(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        if math.isinf(x):
            return "inf"
        return f"{x:.6g}"
    return str(x)


def emit_report(lines, out_dir, slug):
    text = "\n".join(f"{k} = {_fmt_val(v)}" if v is not None else k
                     for k, v in lines) + "\n"
    print(text, end="")
    if out_dir is None:
        return None
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{slug}.report"
    path.write_text(text, encoding="utf-8")
    return path


def _slug(source: str) -> str:
    stem = Path(source).stem if not source.startswith("paper:") else source
    return stem.replace(":", "-").replace("/", "-")


def _max_re_evidence(scenario):
    """Closed-loop spectral abscissa, post-event when that configuration has
    a synchronous-frame equilibrium, else pre-event (frequency-stepped runs
    have none)."""
    if scenario.events:
        try:
            at = scenario.events[-1].t
            return assemble_small_signal(scenario, at_time=at).max_real(), "post-event"
        except (NoConvergence, SetpointSingularity):
            pass
    try:
        return assemble_small_signal(scenario, at_time=0.0).max_real(), "pre-event"
    except (NoConvergence, SetpointSingularity):
        return None, None


def _pei_engaged(scenario, idx: int) -> bool:
    spec = scenario.ibrs[idx]
    if spec.pei is None:
        return False
    if spec.pei_enabled:
        return True
    return any(ev.kind == EV_PEI_ENABLE and ev.target == idx
               for ev in scenario.events)


# --- subcommands --------------------------------------------------------------


def _cmd_l2gain(args) -> int:
    if args.builtin:
        model = builtin_model(args.builtin)
        source = args.builtin
    else:
        try:
            model = load_state_space(args.model)
        except ValueError as e:
            print(f"error: {args.model}: {e}", file=sys.stderr)
            return 2
        source = args.model
    result = l2_gain(model, tol=args.tol)
    print(f"model = {source}")
    print(f"states = {model.n_states}")
    print(f"gamma = {result.gamma:.6g}")
    print(f"omega_peak = {result.omega_peak:.6g}")
    print(f"method = {result.method}")
    return 0


def _cmd_design_pei(args) -> int:
    cfg = design_pei(args.gamma, kappa=args.kappa, margin=args.margin)
    verdict = verify_pei(cfg, args.gamma)
    print(f"gamma_design = {cfg.gamma_design:.6g}")
    print(f"alpha = {cfg.alpha:.10g}")
    print(f"beta = {cfg.beta:.10g}")
    print(f"kappa = {cfg.kappa:.10g}")
    print(f"sigma = {verdict.sigma:.6g}")
    if args.out:
        snippet = (f"# designed for gamma = {cfg.gamma_design!r}\n"
                   f"ibr1.alpha = {cfg.alpha!r}\n"
                   f"ibr1.beta = {cfg.beta!r}\n"
                   f"ibr1.kappa = {cfg.kappa!r}\n")
        Path(args.out).write_text(snippet, encoding="utf-8")
        print(f"wrote = {args.out}")
    return 0


def _simulate_one(source, dt, t_end, out_dir, fmt):
    """Run one scenario and write its artifacts. Returns (exit code, report
    text is printed by emit_report)."""
    scenario = resolve_scenario(source)
    sim = scenario.sim
    if dt is not None:
        sim = replace(sim, dt=dt)
    if t_end is not None:
        sim = replace(sim, t_end=t_end)
    if sim is not scenario.sim:
        scenario = replace(scenario, sim=sim)

    code = 0
    blow_t = None
    try:
        traj = simulate(scenario)
    except NumericBlowup as e:
        traj = getattr(e, "trajectory", None)
        if traj is None:
            raise
        blow_t = e.t_exceed
        code = 3

    slug = _slug(source)
    ext = "csv" if fmt == "csv" else "npz"
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    traj_path = out / f"{slug}.{ext}"
    write_trajectory(traj, traj_path, fmt)

    lines = [("scenario", scenario.name), ("command", "simulate"),
             ("dt", scenario.sim.dt), ("t_end", scenario.sim.t_end)]
    if blow_t is not None:
        lines.append(("blowup_t", float(blow_t)))

    lines.append(("[metrics]", None))
    t_first = scenario.events[0].t if scenario.events else float(traj.t[0])
    t_last = scenario.events[-1].t if scenario.events else float(traj.t[0])
    any_growth = False
    for k, ch in enumerate(traj.ibr, start=1):
        flag, t_flag = growth_detected(traj.t, ch.i_odq, t_first)
        any_growth = any_growth or flag
        lines.append((f"ibr{k}.growth", flag))
        if flag:
            lines.append((f"ibr{k}.growth_t", t_flag))
    if blow_t is None:
        stacked = np.hstack([ch.i_odq for ch in traj.ibr])
        lines.append(("settling_time", settling_time(traj.t, stacked, t_last)))
        rep = energy_report(traj, t_first, float(traj.t[-1]))
        for k in range(len(traj.ibr)):
            lines.append((f"ibr{k + 1}.energy_ratio", float(rep.ratio[k])))
        if (scenario.gfm_only() and scenario.grid is None
                and scenario.n_ibr >= 2 and not any_growth):
            try:
                ref = simulate_droop_only(scenario)
                errs = power_sharing_error(traj, ref)
                for k, err in enumerate(errs, start=1):
                    lines.append((f"ibr{k}.sharing_error_pct", float(err)))
            except (NotSettled, InvalidScenario) as e:
                lines.append(("sharing_error", str(e)))

    max_re, which = _max_re_evidence(scenario)
    if max_re is not None:
        lines.append(("[verdicts]", None))
        lines.append(("max_re", max_re))
        lines.append(("max_re_config", which))

    lines.append(("[artifacts]", None))
    lines.append(("trajectory", traj_path))
    emit_report(lines, out_dir, slug)
    return code


def _simulate_job(job):
    source, dt, t_end, out_dir, fmt = job
    try:
        return source, _simulate_one(source, dt, t_end, out_dir, fmt), None
    except (ScenarioParseError, InvalidScenario, TopologyError, OSError) as e:
        return source, 2, str(e)
    except (NoConvergence, NumericBlowup, NotHurwitz) as e:
        return source, 3, str(e)


def _cmd_simulate(args) -> int:
    jobs = [(src, args.dt, args.t_end, args.out_dir, args.format)
            for src in args.scenario]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_simulate_job, jobs))
    else:
        results = [_simulate_job(j) for j in jobs]
    worst = 0
    for source, code, err in results:
        if err is not None:
            print(f"error: {source}: {err}", file=sys.stderr)
        worst = max(worst, code)
    return worst


def _certification_topology(scenario) -> NetworkTopology:
    # certification covers the fully interconnected system, so open ties
    # count; the per-node device connections close the incidence structure
    top = scenario.topology
    shunts = tuple(Branch(n, NEUTRAL, KIND_SHUNT)
                   for n in range(1, top.n_nodes + 1))
    return NetworkTopology(top.n_nodes, top.branches + shunts, top.omega_0)


def _cmd_certify(args) -> int:
    scenario = resolve_scenario(args.scenario)
    lines = [("scenario", scenario.name), ("command", "certify"),
             ("[verdicts]", None)]
    failing = []
    for k, spec in enumerate(scenario.ibrs, start=1):
        if spec.kind == "gfl":
            model = linearize_fast_subsystem(spec.params, V_NOM)
            lines.append((f"ibr{k}.linearized_at_v", float(V_NOM)))
        else:
            model = linearize_fast_subsystem(spec.params)
        gamma = l2_gain(model).gamma
        lines.append((f"ibr{k}.gamma", gamma))
        if not _pei_engaged(scenario, k - 1):
            lines.append((f"ibr{k}.pei", "absent"))
            failing.append((k, "no enforcement interface"))
            continue
        verdict = verify_pei(spec.pei, gamma)
        lines.append((f"ibr{k}.pei_satisfied", verdict.satisfied))
        if verdict.satisfied:
            lines.append((f"ibr{k}.sigma", float(verdict.sigma)))
        else:
            for cond in verdict.violated:
                lines.append((f"ibr{k}.violated", cond))
            failing.append((k, "; ".join(verdict.violated)))

    try:
        cert = network_passivity_index(_certification_topology(scenario))
        lines.append(("sigma_net", cert.sigma_net))
        lines.append(("lambda_r_min", cert.lambda_r_min))
        lines.append(("lambda_c_max", cert.lambda_c_max))
    except EmptyNetwork:
        # no branch network; the certificate is the device verdict alone
        lines.append(("sigma_net", "no-network"))

    max_re, which = _max_re_evidence(scenario)
    if max_re is not None:
        lines.append(("max_re", max_re))
        lines.append(("max_re_config", which))

    certified = not failing
    lines.append(("certified", certified))
    if not certified:
        for k, why in failing:
            lines.append((f"failing.ibr{k}", why))
    emit_report(lines, args.out_dir, f"{_slug(args.scenario)}-certify")
    return 0 if certified else 4


def _cmd_analyze(args) -> int:
    try:
        t, devices = read_trajectory(args.trajectory)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2

    scenario = resolve_scenario(args.scenario) if args.scenario else None
    if args.t_event is not None:
        t_event = args.t_event
    elif scenario is not None and scenario.events:
        t_event = scenario.events[0].t
    else:
        t_event = float(t[0])

    lines = [("trajectory", args.trajectory), ("command", "analyze"),
             ("t_event", t_event), ("[metrics]", None)]
    i_cols = []
    for k, dev in enumerate(devices, start=1):
        i_odq = np.column_stack([dev["i_od"], dev["i_oq"]])
        i_cols.append(i_odq)
        flag, t_flag = growth_detected(t, i_odq, t_event)
        lines.append((f"ibr{k}.growth", flag))
        if flag:
            lines.append((f"ibr{k}.growth_t", t_flag))
        if t_event > t[0]:
            abc = np.abs(np.column_stack(
                [dev["i_a"], dev["i_b"], dev["i_c"]]))
            pre = float(abc[t < t_event].max())
            post = float(abc[t >= t_event].max())
            if pre > 0.0:
                lines.append((f"ibr{k}.peak_ratio", post / pre))
    lines.append(("settling_time",
                  settling_time(t, np.hstack(i_cols), t_event)))

    m = t >= t_event
    for k, dev in enumerate(devices, start=1):
        e_out = float(np.trapezoid(dev["p_inst"][m], t[m]))
        e_int = float(np.trapezoid(dev["p_series"][m], t[m])
                      + np.trapezoid(dev["p_shunt"][m], t[m]))
        ratio = 0.0 if e_int == 0.0 else abs(e_int) / abs(e_out)
        lines.append((f"ibr{k}.energy_ratio", ratio))

    if scenario is not None:
        max_re, which = _max_re_evidence(scenario)
        if max_re is not None:
            lines.append(("[verdicts]", None))
            lines.append(("max_re", max_re))
            lines.append(("max_re_config", which))
        if scenario.gfm_only() and scenario.grid is None and len(devices) >= 2:
            try:
                ref = simulate_droop_only(scenario)
                t_tail = min(float(t[-1]), float(ref.t[-1]))
                t0 = t_tail - 0.2 * t_tail
                lines.append(("[sharing]", None))
                for k, dev in enumerate(devices):
                    p = float(np.mean(dev["p_avg"][(t >= t0) & (t <= t_tail)]))
                    sel = (ref.t >= t0) & (ref.t <= t_tail)
                    p_ref = float(np.mean(ref.p[sel, k]))
                    err = abs(p - p_ref) / abs(p_ref) * 100.0
                    lines.append((f"ibr{k + 1}.sharing_error_pct", err))
            except InvalidScenario as e:
                lines.append(("sharing_error", str(e)))

    emit_report(lines, args.out_dir,
                f"{Path(args.trajectory).stem}-analysis")
    return 0


# --- argument parsing ---------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridpei",
        description="EMT simulation and passivity certification for "
                    "inverter microgrids")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("l2gain", help="L2 gain of a device model")
    grp = p.add_mutually_exclusive_group(required=True)
    grp.add_argument("--builtin", choices=["gfl"] + sorted(_BUILTIN_KIV),
                     help="named built-in device model")
    grp.add_argument("--model", help="text file with A/B/C matrices")
    p.add_argument("--tol", type=float, default=1e-6,
                   help="bisection relative tolerance")
    p.set_defaults(func=_cmd_l2gain)

    p = sub.add_parser("design-pei", help="interface gains for a device gain")
    p.add_argument("--gamma", type=float, required=True,
                   help="device L2 gain to enforce against")
    p.add_argument("--kappa", type=float, default=1.0,
                   help="series voltage fraction in (0, 1]")
    p.add_argument("--margin", type=float, default=1e-3,
                   help="strictness margin on both inequalities")
    p.add_argument("--out", help="write a pei section snippet here")
    p.set_defaults(func=_cmd_design_pei)

    p = sub.add_parser("simulate", help="run scenarios and export artifacts")
    p.add_argument("--scenario", action="append", required=True,
                   help="scenario file path or paper:<case id>; repeatable")
    p.add_argument("--out-dir", default=".", help="artifact directory")
    p.add_argument("--dt", type=float, help="override integration step (s)")
    p.add_argument("--t-end", type=float, help="override end time (s)")
    p.add_argument("--format", choices=["csv", "binary"], default="csv")
    p.add_argument("--jobs", type=int, default=1,
                   help="scenarios run in parallel")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("certify", help="decentralized stability certificate")
    p.add_argument("--scenario", required=True,
                   help="scenario file path or paper:<case id>")
    p.add_argument("--out-dir", default=None, help="also write a report file")
    p.set_defaults(func=_cmd_certify)

    p = sub.add_parser("analyze", help="metrics over an exported trajectory")
    p.add_argument("--trajectory", required=True,
                   help="csv or npz written by simulate")
    p.add_argument("--scenario",
                   help="adds eigenvalue and sharing analysis")
    p.add_argument("--t-event", type=float,
                   help="event anchor for growth/settling windows")
    p.add_argument("--out-dir", default=None, help="also write a report file")
    p.set_defaults(func=_cmd_analyze)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioParseError, InvalidScenario, TopologyError,
            InfeasiblePolicy, EmptyNetwork) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except NotHurwitz as e:
        print(f"error: {e}", file=sys.stderr)
        eigs = getattr(e, "eigenvalues", None)
        if eigs is not None:
            for lam in sorted(eigs, key=lambda l: -l.real):
                print(f"  lambda = {lam.real:+.6g} {lam.imag:+.6g}j",
                      file=sys.stderr)
        return 3
    except (NoConvergence, NumericBlowup) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
