"""Command-line front end.

    rpna analyze MODEL [--no-gravity] [--static] [--rotors] [--format table|json] [--ascii]
    rpna verify MODEL [--samples N] [--seed S] [--tol T] [...analysis flags]
    rpna identify MODEL [--experiment fixed|floating] [--validate fixed|floating]
    rpna render REPORT.json [--ascii]

MODEL is ``builtin:<name>``, a JSON model file or a URDF file. Exit status is
0 on success, 1 when verification finds a mismatch and 2 on usage or model
errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import identify as ident
from .model import BUILTIN_NAMES, ModelError, float_base, load_model
from .nullspace import ParamClass, build, classify, regroupings
from .recursion import RpnaOptions, check_options, run
from .regressor import DEFAULT_SEED, certify
from .spatial import PARAM_NAMES, StructureError

EXIT_OK, EXIT_MISMATCH, EXIT_ERROR = 0, 1, 2

_GLYPHS = {
    "identifiable": ("✓", "Y"),
    "pivot": ("★", "*"),
    "combination": (" ", " "),
    "unidentifiable": ("✗", "N"),
}


def default_seed() -> int:
    env = os.environ.get("RPNA_SEED")
    if env is None or env == "":
        return DEFAULT_SEED
    try:
        return int(env)
    except ValueError:
        raise ModelError(f"RPNA_SEED must be an integer, got {env!r}") from None


def _options(args) -> RpnaOptions:
    if args.static and args.no_gravity:
        raise ModelError("--static needs gravity; drop --no-gravity")
    return RpnaOptions(gravity_enabled=not args.no_gravity, static_only=args.static,
                       include_rotors=args.rotors)


def _class_code(cls: ParamClass, is_pivot: bool) -> str:
    if cls is ParamClass.IDENTIFIABLE:
        return "identifiable"
    if cls is ParamClass.UNIDENTIFIABLE:
        return "unidentifiable"
    return "pivot" if is_pivot else "combination"


# ---------------------------------------------------------------- analyze

def analysis_report(mech, opts: RpnaOptions, model_ref: str = "") -> dict:
    check_options(mech, opts)
    current = run(mech, opts)
    off = run(mech, RpnaOptions(gravity_enabled=False, include_rotors=opts.include_rotors))
    sysns = build(mech, opts, current)
    cls = classify(sysns)
    pivots = set(cls.pivots)
    codes = [_class_code(c, j in pivots) for j, c in enumerate(cls.classes)]

    bodies = []
    for k, (a, a_off) in enumerate(zip(current, off)):
        b = mech.body(a.body)
        entry = {
            "name": b.name,
            "joint": b.joint.kind,
            "params": dict(zip(PARAM_NAMES, codes[10 * k:10 * k + 10])),
            "dim_V": {"off": a_off.dim_V, "current": a.dim_V},
            "dim_K": {"off": a_off.dim_K, "current": a.dim_K},
            "dim_T": {"off": a_off.transfer_dim, "current": a.transfer_dim},
            "rotor": None,
        }
        if a.has_rotor:
            entry["rotor"] = {
                "identifiable": bool(a.rotor_identifiable),
                "class": codes[sysns.rotor_column(a.body)],
            }
        bodies.append(entry)

    return {
        "kind": "analysis",
        "model": mech.name or model_ref,
        "options": {"gravity": opts.gravity_enabled, "static": opts.static_only,
                    "rotors": opts.include_rotors},
        "bodies": bodies,
        "n_params": sysns.n_params,
        "nullity": sysns.nullity,
        "base_param_count": sysns.base_param_count,
        "body_base_param_count": sysns.body_base_param_count,
        "minimal_set": [sysns.labels[j] for j in cls.pivots],
        "regroupings": regroupings(cls),
    }


def _grid(header: list, rows: list) -> list:
    widths = [max(len(r[c]) for r in [header] + rows) for c in range(len(header))]
    out = []
    for r in [header] + rows:
        cells = [r[0].ljust(widths[0])] + [r[c].center(widths[c]) for c in range(1, len(r))]
        out.append("  ".join(cells).rstrip())
    return out


def render_analysis(report: dict, ascii_only: bool = False) -> str:
    pick = 1 if ascii_only else 0
    opts = report["options"]
    flags = ["gravity " + ("on" if opts["gravity"] else "off")]
    if opts["static"]:
        flags.append("static")
    flags.append("rotors " + ("on" if opts["rotors"] else "off"))
    bodies = report["bodies"]
    lines = [f"model: {report['model']} ({', '.join(flags)})", ""]

    header = ["param"] + [b["name"] for b in bodies]
    rows = [[p] + [_GLYPHS[b["params"][p]][pick] for b in bodies] for p in PARAM_NAMES]
    if opts["rotors"]:
        rows.append(["Jm"] + [_GLYPHS[b["rotor"]["class"]][pick] if b["rotor"] else "-" for b in bodies])
    for key in ("dim_V", "dim_K", "dim_T"):
        rows.append([key] + [f"{b[key]['off']} ({b[key]['current']})" for b in bodies])
    lines += _grid(header, rows)

    lines.append("")
    lines.append("dims shown as: gravity off (this analysis)")
    legend = ", ".join(f"{_GLYPHS[k][pick].strip() or 'blank'} {k}" for k in
                       ("identifiable", "pivot", "combination", "unidentifiable"))
    lines.append(f"legend: {legend}")
    lines.append(f"parameters: {report['n_params']}")
    lines.append(f"nullspace dimension: {report['nullity']}")
    lines.append(f"base parameters: {report['base_param_count']}"
                 f" (bodies only: {report['body_base_param_count']})")
    if opts["rotors"]:
        ok = [b["name"] for b in bodies if b["rotor"] and b["rotor"]["identifiable"]]
        lines.append("identifiable rotor inertias: " + (", ".join(ok) if ok else "none"))
    lines.append("")
    lines.append("identifiable combinations:")
    for k, expr in enumerate(report["regroupings"], start=1):
        lines.append(f"  {k:3d}. {expr}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- verify

def _top_terms(vec, labels, n=3) -> str:
    norm = np.linalg.norm(vec)
    if norm == 0:
        return "none"
    v = vec / norm
    idx = np.argsort(-np.abs(v))[:n]
    return " ".join(f"{v[j]:+.3f}*{labels[j]}" for j in idx)


def verification_report(mech, opts: RpnaOptions, n_samples: int, seed: int, tol: float,
                        model_ref: str = "", analyses=None) -> dict:
    check_options(mech, opts)
    sysns = build(mech, opts, analyses)
    oracle_mech = mech if opts.include_rotors else mech.without_rotors()
    mode = "static" if opts.static_only else "torque"
    cert = certify(oracle_mech, sysns.R, n_samples, seed, mode, opts.gravity_enabled, tol)
    labels = list(sysns.labels)
    return {
        "kind": "verification",
        "model": mech.name or model_ref,
        "options": {"gravity": opts.gravity_enabled, "static": opts.static_only,
                    "rotors": opts.include_rotors},
        "samples": n_samples,
        "seed": seed,
        "tol": tol,
        "structural_nullity": cert.structural_nullity,
        "empirical_nullity": cert.empirical_nullity,
        "angle": cert.angle,
        "passed": cert.passed,
        "missing_direction": _top_terms(cert.missing, labels),
        "missing_distance": float(np.linalg.norm(cert.missing)),
        "spurious_direction": _top_terms(cert.spurious, labels),
        "spurious_distance": float(np.linalg.norm(cert.spurious)),
    }


def render_verification(report: dict, ascii_only: bool = False) -> str:
    lines = [
        f"model: {report['model']}",
        f"samples: {report['samples']}  seed: {report['seed']}  tol: {report['tol']:g}",
        f"structural nullity: {report['structural_nullity']}",
        f"empirical nullity:  {report['empirical_nullity']}",
        f"max principal angle: {report['angle']:.3e}",
    ]
    if report["passed"]:
        lines.append("PASS")
    else:
        lines.append("FAIL")
        lines.append(f"  null direction not covered ({report['missing_distance']:.2e}): "
                     f"{report['missing_direction']}")
        lines.append(f"  claimed direction the data excite ({report['spurious_distance']:.2e}): "
                     f"{report['spurious_direction']}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- identify

def identification_report(fixed, experiments, validations, n_samples: int, seed: int,
                          model_ref: str = "") -> dict:
    floating = float_base(fixed)
    mechs = {"fixed": fixed, "floating": floating}
    data = {}
    for kind in set(experiments) | set(validations):
        m = mechs[kind]
        truth = m.nominal_params()
        data[(kind, "train")] = ident.synth_trajectory(m, truth, n_samples, seed)
        data[(kind, "validate")] = ident.synth_trajectory(m, truth, n_samples, seed + 1)
    cells = []
    for e in experiments:
        est = ident.fit(data[(e, "train")])
        for v in validations:
            res = ident.cross_validate(est, data[(v, "validate")])
            cells.append({"experiment": e, "validation": v, "rank": est.rank,
                          "groups": res["groups"], "channels": res["channels"]})
    return {"kind": "identification", "model": fixed.name or model_ref,
            "samples": n_samples, "seed": seed, "cells": cells}


def render_identification(report: dict, ascii_only: bool = False) -> str:
    lines = [f"model: {report['model']}  samples: {report['samples']}  seed: {report['seed']}",
             "RMS validation residuals", ""]
    groups = ("leg_torques", "body_torques", "body_forces")
    header = ["identified on", "validated on", "rank"] + list(groups)
    rows = []
    for c in report["cells"]:
        row = [c["experiment"], c["validation"], str(c["rank"])]
        for g in groups:
            vals = c["groups"].get(g, [])
            row.append("[" + ", ".join(f"{x:.2e}" for x in vals) + "]" if vals else "-")
        rows.append(row)
    widths = [max(len(r[k]) for r in [header] + rows) for k in range(len(header))]
    for r in [header] + rows:
        lines.append("  ".join(r[k].ljust(widths[k]) for k in range(len(r))).rstrip())
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- plumbing

_RENDERERS = {
    "analysis": render_analysis,
    "verification": render_verification,
    "identification": render_identification,
}


def render(report: dict, ascii_only: bool = False) -> str:
    kind = report.get("kind")
    if kind not in _RENDERERS:
        raise ModelError(f"unknown report kind {kind!r}")
    return _RENDERERS[kind](report, ascii_only)


def to_json(report: dict) -> str:
    return json.dumps(report, indent=2, ensure_ascii=False) + "\n"


def _emit(report: dict, args) -> None:
    if args.format == "json":
        sys.stdout.write(to_json(report))
    else:
        sys.stdout.write(render(report, args.ascii))


def _add_analysis_flags(p) -> None:
    p.add_argument("--no-gravity", action="store_true", help="ignore gravity")
    p.add_argument("--static", action="store_true", help="static experiments only (gravity torques)")
    p.add_argument("--rotors", action="store_true", help="include geared rotor inertias")


def _add_output_flags(p) -> None:
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.add_argument("--ascii", action="store_true", help="ASCII glyphs (Y/N/*)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rpna", description="Structural identifiability of rigid-body inertial parameters.",
        epilog="builtin models: " + ", ".join(f"builtin:{n}" for n in BUILTIN_NAMES))
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="classify parameters and report joint dimensions")
    p.add_argument("model")
    _add_analysis_flags(p)
    _add_output_flags(p)

    p = sub.add_parser("verify", help="check the structural nullspace against sampled regressors")
    p.add_argument("model")
    _add_analysis_flags(p)
    _add_output_flags(p)
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--tol", type=float, default=1e-7, help="principal-angle tolerance")

    p = sub.add_parser("identify", help="fixed- versus floating-base identification experiment")
    p.add_argument("model", help="fixed-base mechanism; the floating variant is derived from it")
    p.add_argument("--experiment", choices=("fixed", "floating"), default=None)
    p.add_argument("--validate", choices=("fixed", "floating"), default=None)
    p.add_argument("--samples", type=int, default=600)
    p.add_argument("--seed", type=int, default=None)
    _add_output_flags(p)

    p = sub.add_parser("render", help="render a JSON report as a table")
    p.add_argument("report")
    p.add_argument("--ascii", action="store_true")
    return parser


def _run(args) -> int:
    if args.command == "render":
        with open(args.report, encoding="utf-8") as fh:
            report = json.load(fh)
        sys.stdout.write(render(report, args.ascii))
        return EXIT_OK

    mech = load_model(args.model)
    if args.command == "analyze":
        _emit(analysis_report(mech, _options(args), args.model), args)
        return EXIT_OK
    if args.command == "verify":
        seed = default_seed() if args.seed is None else args.seed
        report = verification_report(mech, _options(args), args.samples, seed, args.tol, args.model)
        _emit(report, args)
        return EXIT_OK if report["passed"] else EXIT_MISMATCH
    if args.command == "identify":
        if mech.base_kind == "floating":
            raise ModelError("identify expects a fixed-base model; the floating variant is derived")
        seed = default_seed() if args.seed is None else args.seed
        experiments = [args.experiment] if args.experiment else ["fixed", "floating"]
        validations = [args.validate] if args.validate else ["fixed", "floating"]
        _emit(identification_report(mech, experiments, validations, args.samples, seed, args.model), args)
        return EXIT_OK
    raise AssertionError(args.command)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _run(args)
    except (ModelError, StructureError, OSError, ValueError) as exc:
        print(f"rpna: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
