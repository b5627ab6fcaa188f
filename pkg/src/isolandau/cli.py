"""Command-line entry point.

Exit codes: 0 success, 1 runtime error, 2 parameter rejection, 3 verdict failure.
"""
from __future__ import annotations

import argparse
import logging
import math
import shutil
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .barrier import BarrierSpec, barrier_residual, comparison_monitor
from .degiorgi import DeGiorgiLadder, degiorgi_report, m_threshold
from .diagnostics import DEFAULT_CALIBRATION, record
from .dynamics import run
from .errors import LandauError, ParameterError, ResolutionError
from .fields import Field
from .inequalities import (TestFunctionFamily, check_sobolev_q, eps_poincare_report,
                           gain_integrability_bound, gks_report, l1l3_report, l53_report,
                           weighted_sobolev_report)
from .profiles import bump, from_table, load_table

log = logging.getLogger("isolandau")

EXIT_OK, EXIT_RUNTIME, EXIT_PARAM, EXIT_VERDICT = 0, 1, 2, 3
PASSING = {"PASS", "RECORDED", "CLEAN", "decay"}


class VerdictFailure(Exception):
    pass


def _rel_close(x, y, rtol=1e-12):
    if math.isnan(x) or math.isnan(y):
        return math.isnan(x) and math.isnan(y)
    return abs(x - y) <= rtol * max(abs(x), abs(y))


# run --------------------------------------------------------------------------------

def _clear_outputs(out: Path):
    (out / io.CSV_NAME).unlink(missing_ok=True)
    for sub in (io.SLICE_DIR, io.CHECKPOINT_DIR):
        if (out / sub).is_dir():
            shutil.rmtree(out / sub)


def _truncate_after(out: Path, state):
    """Drop rows and slices emitted after a checkpoint so the resumed run can append."""
    csv_path = out / io.CSV_NAME
    if csv_path.exists():
        lines = csv_path.read_text().splitlines(keepends=True)
        kept = [lines[0]] + [ln for ln in lines[1:] if float(ln.split(",", 1)[0]) <= state.t]
        csv_path.write_text("".join(kept))
    for p in io.list_slices(out):
        if int(p.stem) > state.step:
            p.unlink()


def _summary(config, rows, final, blowup):
    cols = {name: np.array([r[i] for r in rows]) for i, name in enumerate(io.DiagnosticsRecord.CSV_HEADER)}
    mass = cols["mass"]
    drift = float(np.max(np.abs(mass - mass[0]))) / mass[0] if mass[0] > 0 else 0.0
    return {
        "config": io.config_echo(config),
        "rows": len(rows),
        "t_final": final.t,
        "step_final": final.step,
        "mass_initial": float(mass[0]),
        "mass_final": float(mass[-1]),
        "mass_rel_drift_max": drift,
        "E_initial": float(cols["E"][0]),
        "E_final": float(cols["E"][-1]),
        "H_nonincreasing": bool(np.all(np.diff(cols["H"]) <= 0)),
        "min_a_lb_margin": float(np.nanmin(cols["a_lb_margin"])) if rows else math.nan,
        "clipped_mass_emitted": float(np.sum(cols["clipped_mass"])),
        "blowup": blowup,
    }


def cmd_run(args) -> int:
    out = Path(args.out)
    if args.config is None:
        if args.resume is None:
            raise ParameterError("run needs a config file (or --resume with a run directory)")
        cfg = io.load_config(out / "config.txt")
    else:
        cfg = io.load_config(args.config)
    config = io.sim_config(io.apply_overrides(cfg, args.set))
    start = io.read_state(args.resume) if args.resume else None
    if start is not None and start.u.grid != config.grid.build():
        raise ParameterError("checkpoint grid does not match the configuration")
    out.mkdir(parents=True, exist_ok=True)
    if start is None:
        _clear_outputs(out)
    else:
        _truncate_after(out, start)
    (out / "config.txt").write_text(io.config_text(config))
    csv_path = out / io.CSV_NAME
    wall = time.perf_counter()
    with open(csv_path, "a") as fh:
        if fh.tell() == 0:
            fh.write(io.csv_header())

        def on_emit(state, rec):
            fh.write(io.csv_row(rec))
            io.write_state(out / io.slice_name(state.step), state)

        def on_checkpoint(state):
            io.write_state(out / io.checkpoint_name(state.step), state)

        traj = run(config, start=start, on_emit=on_emit, on_checkpoint=on_checkpoint,
                   keep_states=False, emit_start=start is None)
    wall = time.perf_counter() - wall
    rows = io.read_csv_rows(csv_path)
    final = io.read_state(io.list_slices(out)[-1])
    io.write_json(out / io.SUMMARY_NAME, _summary(config, rows, final, traj.blowup))
    outputs = {io.CSV_NAME: len(rows), io.SLICE_DIR: len(io.list_slices(out)),
               io.SUMMARY_NAME: 1, "config.txt": 1}
    if (out / io.CHECKPOINT_DIR).is_dir():
        outputs[io.CHECKPOINT_DIR] = len(list((out / io.CHECKPOINT_DIR).glob("*.lndau")))
    manifest = io.RunManifest(io.config_echo(config), final.u.grid.describe(), outputs,
                              wall_clock_s=wall)
    io.write_json(out / io.MANIFEST_NAME, manifest.to_dict())
    with open(out / io.LOG_NAME, "a") as fh:
        fh.write(f"steps={traj.steps} t_final={final.t!r} wall_clock_s={wall:.3f}\n")
    log.info("wrote %d rows to %s", len(rows), csv_path)
    return EXIT_OK


# diagnose ------------------------------------------------------------------------------

def _bound_margins(records):
    keys = ("a_min_margin", "a_ub_margin", "H_lb_margin", "E_ub_margin")
    return {k: min((getattr(r, k) for r in records), default=math.nan) for k in keys}


def cmd_diagnose(args) -> int:
    path = Path(args.path)
    if path.is_file():
        state = io.read_state(path)
        rec = record(state, DEFAULT_CALIBRATION)
        report = {"path": str(path), "t": state.t, "step": state.step,
                  "record": dict(zip(rec.CSV_HEADER, rec.csv_values())),
                  "bounds": _bound_margins([rec])}
        sys.stdout.write(io.dumps(report))
        return EXIT_OK
    states = io.load_slices(path)
    if not states:
        raise ParameterError(f"{path}: no slices to diagnose")
    records = [record(s, DEFAULT_CALIBRATION) for s in states]
    rows = io.read_csv_rows(path / io.CSV_NAME)
    mismatches = []
    if len(rows) != len(records):
        mismatches.append({"rows": len(rows), "slices": len(records)})
    for i, (row, rec) in enumerate(zip(rows, records)):
        for name, stored, fresh in zip(rec.CSV_HEADER, row, rec.csv_values()):
            if not _rel_close(stored, float(fresh)):
                mismatches.append({"row": i, "column": name, "stored": stored, "recomputed": fresh})
    regenerated = io.csv_header() + "".join(io.csv_row(r) for r in records)
    identical = regenerated == (path / io.CSV_NAME).read_text()
    problems = io.verify_manifest(path) if (path / io.MANIFEST_NAME).exists() else []
    report = {"path": str(path), "slices": len(records), "mismatches": mismatches,
              "csv_identical": identical, "manifest_problems": problems,
              "bounds": _bound_margins(records), "calibration": DEFAULT_CALIBRATION.to_dict()}
    sys.stdout.write(io.dumps(report))
    if mismatches or not identical or problems:
        raise VerdictFailure(f"{len(mismatches)} mismatches, csv identical: {identical}")
    return EXIT_OK


# post-processing -----------------------------------------------------------------------

def _load_run(run_dir, minimum=2):
    states = io.load_slices(run_dir)
    if len(states) < minimum:
        raise ParameterError(f"{run_dir}: need at least {minimum} slices, found {len(states)}")
    return states


def _finish(path, reports, verdict):
    io.write_json(path, {"reports": reports, "verdict": verdict})
    log.info("wrote %s (%s)", path, verdict)
    if verdict not in PASSING:
        raise VerdictFailure(f"verdict {verdict}")
    return EXIT_OK


def cmd_inequalities(args) -> int:
    check_sobolev_q(args.q)
    states = _load_run(args.run_dir)
    grid = states[0].u.grid
    reports = []
    for p in args.p:
        worst = max((gks_report(s.u, s.a.a, p) for s in states), key=lambda r: r.ratio)
        reports.append(worst)
    fam = TestFunctionFamily.standard(grid)
    reports.append(eps_poincare_report(states[-1].u, states[-1].a.a, args.eps, fam, args.R))
    phi = Field(grid, bump(grid.radius, args.bump_width))
    reports.append(weighted_sobolev_report(states, phi, args.q))
    reports.append(l1l3_report(states))
    reports.append(l53_report(states))
    for n in args.gain_n:
        reports.append(gain_integrability_bound(states, n))
    dicts = [r.to_dict() for r in reports]
    verdict = "PASS" if all(r.verdict in PASSING for r in reports) else "FAIL"
    return _finish(Path(args.out or Path(args.run_dir) / "inequalities.json"), dicts, verdict)


def cmd_degiorgi(args) -> int:
    states = _load_run(args.run_dir)
    grid = states[0].u.grid
    T = args.T if args.T is not None else states[-1].t
    R = args.R if args.R is not None else grid.extent
    M = args.M if args.M is not None else 2.0 * max(s.u.max() for s in states)
    window = [s for s in states if s.t <= T * (1 + 1e-12)]
    ladder = DeGiorgiLadder(T, R, M, args.n_max)
    rep = degiorgi_report(window, ladder, args.q, args.p, args.C)
    data = rep.to_dict()
    data["m_threshold"] = vars(m_threshold(T, args.threshold_n, args.q))
    out = Path(args.out or Path(args.run_dir) / "degiorgi.json")
    out.with_suffix(".csv").write_text(rep.to_csv())
    return _finish(out, [data], rep.recurrence.verdict)


def parse_barrier(spec: str, grid, u0: Field) -> Field:
    """``constant:C``, ``power:C,s`` for ``C (1+r^2)^-s``, ``envelope:F,L`` for
    ``F max(u0) / (1 + (r/L)^2)`` or ``table:PATH``."""
    kind, _, rest = spec.partition(":")
    r = grid.radius
    try:
        nums = [float(x) for x in rest.split(",")] if kind != "table" else []
    except ValueError:
        raise ParameterError(f"cannot parse barrier spec {spec!r}") from None
    if kind == "constant" and len(nums) == 1:
        return Field(grid, np.full(grid.shape, nums[0]))
    if kind == "power" and len(nums) == 2:
        return Field(grid, nums[0] * (1 + r * r) ** -nums[1])
    if kind == "envelope" and len(nums) == 2:
        return Field(grid, nums[0] * u0.max() / (1 + (r / nums[1]) ** 2))
    if kind == "table" and rest:
        return from_table(grid, *load_table(rest))
    raise ParameterError(f"unknown barrier spec {spec!r}; use constant:C, power:C,s, "
                         "envelope:F,L or table:PATH")


def cmd_barrier(args) -> int:
    states = _load_run(args.run_dir, minimum=1)
    grid = states[0].u.grid
    if grid.kind != "radial":
        raise ParameterError("barrier checks need a radial run")
    spec = BarrierSpec(parse_barrier(args.g, grid, states[0].u), args.p_weak)
    residuals = []
    for s in states:
        res = barrier_residual(s.u, spec.g, s.a.a).to_dict()
        res["t"] = s.t
        residuals.append(res)
    form = io.load_config(Path(args.run_dir) / "config.txt").get("form", "divergence")
    comparison = comparison_monitor(states, spec.g)
    comp = comparison.to_dict()
    if form != "nondivergence":
        comp["note"] = f"comparison principle applied to the {form} form (extension)"
    ok = all(r["verdict"] == "PASS" for r in residuals) and comparison.clean
    report = {"name": "barrier", "params": {"g": args.g, "p_weak": args.p_weak,
                                            "weak_norm": spec.weak_norm},
              "residuals": residuals, "comparison": comp}
    return _finish(Path(args.out or Path(args.run_dir) / "barrier.json"), [report],
                   "PASS" if ok else "FAIL")


# parser ------------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="isolandau",
        description="Simulate the isotropic Landau equation and probe its a priori estimates.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate from a key=value config file")
    p.add_argument("config", nargs="?", help="config file (defaults to OUT/config.txt on resume)")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key (repeatable)")
    p.add_argument("--resume", metavar="CHECKPOINT", help="continue from a checkpoint file")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("diagnose", help="recompute diagnostics from stored slices")
    p.add_argument("path", help="run directory or a single checkpoint")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("inequalities", help="probe the functional inequalities on a run")
    p.add_argument("run_dir")
    p.add_argument("--p", type=float, nargs="+", default=[0.5, 1.0, 2.0, 5.0 / 3.0])
    p.add_argument("--eps", type=float, nargs="+", default=[0.05, 0.1, 0.2, 0.4])
    p.add_argument("--R", type=float, default=None, help="ball radius for the local reading")
    p.add_argument("--q", type=float, default=2.0, help="weighted Sobolev exponent in (1, 10/3)")
    p.add_argument("--bump-width", type=float, default=2.0)
    p.add_argument("--gain-n", type=int, nargs="+", default=[0, 1])
    p.add_argument("--out")
    p.set_defaults(func=cmd_inequalities)

    p = sub.add_parser("degiorgi", help="level-set energies and the recurrence verdict")
    p.add_argument("run_dir")
    p.add_argument("--T", type=float, help="ladder time (default: last slice)")
    p.add_argument("--R", type=float, help="ladder radius (default: grid extent)")
    p.add_argument("--M", type=float, help="top level (default: 2 sup u)")
    p.add_argument("--n-max", type=int, default=8)
    p.add_argument("--q", type=float, default=3.0)
    p.add_argument("--p", type=float, default=5.0 / 3.0)
    p.add_argument("--C", type=float, default=None, help="recurrence constant (default: measured)")
    p.add_argument("--threshold-n", type=int, default=2)
    p.add_argument("--out")
    p.set_defaults(func=cmd_degiorgi)

    p = sub.add_parser("barrier", help="supersolution residual and comparison monitor")
    p.add_argument("run_dir")
    p.add_argument("--g", required=True, help="constant:C | power:C,s | envelope:F,L | table:PATH")
    p.add_argument("--p-weak", type=float, default=2.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_barrier)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ParameterError, ResolutionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARAM
    except VerdictFailure as exc:
        print(f"verdict failure: {exc}", file=sys.stderr)
        return EXIT_VERDICT
    except (LandauError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
