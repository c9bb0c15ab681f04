"""Command-line entry point."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path


from .. import blc
from ..circuits import branch_netlist, half_wave_rectifier, msnc_netlist
from ..diode import large_signal_extract
from ..netalg import (
    abcd_to_s,
    cascade,
    input_impedance,
    reflection,
    series_abcd,
    shunt_abcd,
    tline_abcd,
)
from ..steady import CircuitNetlist, ExcitationSpec, integrate_to_steady
from ..steady.analysis import to_jsonable, efficiency, rows_to_csv
from ..synth import design_matching_networks
from .config import SCENARIOS, ConfigError, ScenarioConfig, build_config, load_document, resolve_document
from .scenarios import NUMERICAL_ERRORS, StageError, _design, run_scenario

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2

log = logging.getLogger("msnc")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # exit code 1 rather than argparse's 2
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="JSON scenario config overlaid on the shipped defaults")
    p.add_argument("--out", help="output directory (scenario) or file (one-off commands)")
    p.add_argument("--seed", type=int, help="RNG seed")
    p.add_argument("--jobs", type=int, help="worker processes for grid fan-out")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = _Parser(prog="msnc", description="Self-powered node circuit: analysis, simulation and synthesis.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("analyze", parents=[common], help="cascade two-port stages and report Z_in and S")
    a.add_argument("--stage", action="append", default=[], metavar="SPEC",
                   help="tline:Z0:DEG | series:Z | shunt:Y (complex values like 10+5j); repeatable")
    a.add_argument("--load", type=complex, default=50.0, help="load impedance at the output")
    a.add_argument("--freq", type=float, help="frequency in Hz (default: config freq_hz)")

    k = sub.add_parser("solve-k", parents=[common], help="even/odd terminations for power-transfer ratio k")
    k.add_argument("k", nargs="*", type=float, help="k values (default: config k grid)")

    sub.add_parser("fit", parents=[common], help="refit the impedance-versus-k polynomials")

    d = sub.add_parser("diode-extract", parents=[common], help="large-signal diode impedance at one drive")
    d.add_argument("--power", type=float, nargs="+", default=[-10.0], help="available drive, dBm")
    d.add_argument("--freq", type=float, help="Hz (default: config freq_hz)")
    d.add_argument("--topology", choices=("series", "antiparallel-pair"), default="series")

    s = sub.add_parser("simulate", parents=[common], help="periodic steady state of a circuit")
    s.add_argument("--netlist", help="JSON netlist; overrides --circuit")
    s.add_argument("--circuit", choices=("msnc", "branch", "rectifier"), default="msnc")
    s.add_argument("--power", type=float, nargs="+", default=[-10.0], help="available drive, dBm")
    s.add_argument("--freq", type=float, help="Hz (default: config freq_hz)")

    sub.add_parser("synth", parents=[common], help="GA synthesis of the matching networks")

    sc = sub.add_parser("scenario", parents=[common], help="run a named scenario")
    sc.add_argument("name", help=", ".join(SCENARIOS))

    v = sub.add_parser("validate", parents=[common], help="validate a scenario config")
    v.add_argument("path")
    return ap


def _config(args, scenario: str | None = None) -> ScenarioConfig:
    user = load_document(args.config) if args.config else None
    return build_config(resolve_document(user, scenario=scenario, seed=args.seed, jobs=args.jobs))


def _emit(args, rows: list[dict] | dict) -> None:
    if isinstance(rows, dict) or args.format == "json":
        body = json.dumps(to_jsonable(rows), indent=2, sort_keys=isinstance(rows, dict)) + "\n"
    else:
        body = rows_to_csv(rows)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(body)
    else:
        sys.stdout.write(body)


def _parse_stage(spec: str, freq: float):
    kind, _, rest = spec.partition(":")
    try:
        if kind == "tline":
            z0, deg = rest.split(":")
            return tline_abcd(float(z0), math.radians(float(deg)), freq)
        if kind == "series":
            return series_abcd(complex(rest), freq)
        if kind == "shunt":
            return shunt_abcd(complex(rest), freq)
    except ValueError as exc:
        raise UsageError(f"bad stage {spec!r}: {exc}") from exc
    raise UsageError(f"bad stage {spec!r}: kind must be tline, series or shunt")


def cmd_analyze(args) -> int:
    cfg = _config(args)
    f = args.freq or cfg.freq_hz
    if not args.stage:
        raise UsageError("analyze needs at least one --stage")
    net = cascade([_parse_stage(s, f) for s in args.stage], f)
    z = input_impedance(net, args.load)
    s = abcd_to_s(net, cfg.z0).entries
    _emit(args, {"freq_hz": f, "abcd": [[net.a, net.b], [net.c, net.d]], "z_in": z,
                 "gamma_in": reflection(z, cfg.z0), "s": s.tolist()})
    return EXIT_OK


def cmd_solve_k(args) -> int:
    cfg = _config(args)
    ks = args.k or list(cfg.k_grid)
    if any(not 0 < k <= 1 for k in ks):
        raise UsageError("k must lie in (0, 1]")
    _emit(args, blc.s_params_vs_k(ks, blc.BlcSpec(cfg.z0, cfg.freq_hz, cfg.z0)))
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = _config(args)
    ks = [k for k in cfg.k_grid if k >= 0.05 - 1e-12]
    spec = blc.BlcSpec(cfg.z0, cfg.freq_hz, cfg.z0)
    fit = blc.refit(ks, [blc.solve_za_for_k(k, spec) for k in ks])
    _emit(args, {"real_coeffs": list(fit.real_poly), "imag_coeffs": list(fit.imag_poly),
                 "max_dev_real_ohm": fit.max_dev_real, "max_dev_imag_ohm": fit.max_dev_imag})
    return EXIT_OK


def cmd_diode(args) -> int:
    cfg = _config(args)
    f = args.freq or cfg.freq_hz
    rows = []
    for p in args.power:
        pt = large_signal_extract(ExcitationSpec.single(f, p), args.topology, cfg.diode, cfg.solver)
        rows.append({"freq_hz": f, "drive_dbm": p, "re_zd": pt.z_d.real, "im_zd": pt.z_d.imag,
                     "re_yd": pt.y_d.real, "im_yd": pt.y_d.imag, "v_amp": pt.v_amp,
                     "converged": pt.diagnostics["converged"]})
    _emit(args, rows)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _config(args)
    f = args.freq or cfg.freq_hz
    if args.netlist:
        net = CircuitNetlist.from_json(args.netlist)
    elif args.circuit == "rectifier":
        net = half_wave_rectifier(cfg.c_rect, cfg.r_load, cfg.diode, cfg.z0)
    else:
        d = _design(cfg)
        net = msnc_netlist(d) if args.circuit == "msnc" else branch_netlist(d)
    rows = []
    for p in args.power:
        res = integrate_to_steady(net, ExcitationSpec.single(f, p, cfg.z0), cfg.solver)
        port = net.ports[0]
        a1, b1 = res.s_waves(port.name, port.z_ref)
        row = {"p_in_dbm": p, "p_dc_w": res.p_dc, "eta": efficiency(res),
               "s11_db": 20 * math.log10(max(abs(b1 / a1), 1e-300)), "s21_db": math.nan}
        if len(net.ports) > 1:
            _, b2 = res.s_waves(net.ports[1].name, net.ports[1].z_ref)
            row["s21_db"] = 20 * math.log10(max(abs(b2 / a1), 1e-300))
        row.update({"converged": res.converged, "cycles": res.cycles_used,
                    "balance_error": float(res.energy.get("balance_error", math.nan))})
        rows.append(row)
    _emit(args, rows)
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = _config(args)
    _, _, rep = design_matching_networks(cfg.substrate, cfg.design, jobs=cfg.jobs)
    _emit(args, {"networks": rep.topology.to_dict(), "cost": rep.cost, "goal_met": rep.goal_met,
                 "evaluations": rep.ga.evaluations, "evaluation": rep.evaluation})
    return EXIT_OK


def cmd_scenario(args) -> int:
    if args.name not in SCENARIOS:
        raise UsageError(f"unknown scenario {args.name!r}; choose from {', '.join(SCENARIOS)}")
    cfg = _config(args, scenario=args.name)
    rep = run_scenario(cfg, args.out, args.format)
    for name, c in rep.checks.items():
        print(f"{'PASS' if c['passed'] else 'FAIL'} {name}")
    print(f"wrote {len(rep.manifest)} files to {args.out or cfg.output_dir}")
    return EXIT_OK


def cmd_validate(args) -> int:
    doc = load_document(args.path)
    build_config(resolve_document(doc))
    print(f"{args.path}: valid")
    return EXIT_OK


COMMANDS = {"analyze": cmd_analyze, "solve-k": cmd_solve_k, "fit": cmd_fit, "diode-extract": cmd_diode,
            "simulate": cmd_simulate, "synth": cmd_synth, "scenario": cmd_scenario,
            "validate": cmd_validate}


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"msnc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"msnc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"msnc: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except NUMERICAL_ERRORS as exc:
        print(f"msnc: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
