"""Command-line entry point: ``wheelleg <subcommand> [options]``.

Every artifact begins with a ``#`` header line naming the schema version,
seed and config hash, and each run writes ``manifest.json`` listing the
artifacts with their sha256 digests.  Exit codes: 0 success, 2 invalid
configuration or arguments, 3 module error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import sys
from dataclasses import replace
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .config import SCHEMA_VERSION, config_hash, load_robot, load_scenario
from .drive_control import BodyTwist, RollingController, StanceCommand
from .errors import ConfigError, WheellegError
from .leg_model import DEG
from .leg_optimizer import geometry_fragment, grid_search
from .pickup_sim import run_pickup_trial, success_rate
from .seeding import substream
from .sim_world import (
    SupportMode,
    calibrate_power_params,
    initial_state,
    power_model,
    run_cot_sweep,
    step,
)

log = logging.getLogger("wheelleg")

EXIT_OK, EXIT_CONFIG, EXIT_MODULE = 0, 2, 3


def _fmt(x) -> str:
    if isinstance(x, float):
        return "nan" if math.isnan(x) else format(x, ".10g")
    return str(x)


class Run:
    """Collects artifacts of one invocation and writes them with headers and a manifest."""

    def __init__(self, command: str, out_dir: Path, seed: int, digest: str, overrides: dict):
        self.command, self.out_dir, self.seed, self.digest = command, out_dir, seed, digest
        self.overrides = overrides
        self.files: dict[str, str] = {}

    def header(self) -> str:
        return f"# wheelleg {self.command} schema_version={SCHEMA_VERSION} seed={self.seed} config_hash={self.digest}\n"

    def write(self, name: str, body: str):
        text = self.header() + body
        self.out_dir.mkdir(parents=True, exist_ok=True)
        (self.out_dir / name).write_text(text, encoding="utf-8")
        self.files[name] = hashlib.sha256(text.encode("utf-8")).hexdigest()

    def write_csv(self, name: str, columns, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
        self.write(name, buf.getvalue())

    def finish(self, status: str, summary: dict):
        manifest = {
            "command": self.command,
            "schema_version": SCHEMA_VERSION,
            "package_version": __version__,
            "seed": self.seed,
            "config_hash": self.digest,
            "overrides": self.overrides,
            "status": status,
            "summary": summary,
            "artifacts": dict(sorted(self.files.items())),
        }
        self.out_dir.mkdir(parents=True, exist_ok=True)
        (self.out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _power_params(robot, body_height: float):
    if not robot.calibrate_power:
        return robot.power
    return calibrate_power_params(
        robot.model, StanceCommand(body_height=body_height), robot.power.p_idle, robot.power.drivetrain_eff
    )


def cmd_optimize_leg(args, robot, scen, run: Run) -> dict:
    result = grid_search(scen.grid, scen.objective, template=robot.model.geoms[0], jobs=args.jobs)
    run.write("leg_cost_table.csv", result.to_csv())
    run.write("leg_winner.toml", geometry_fragment(result.best_geometry))
    g = result.best_geometry
    print(f"optimize-leg: {len(result.cost_table)} candidates, best upper_len={g.upper_len} lower_len={g.lower_len} "
          f"pivot_offset={g.pivot_offset} cost={result.best_cost:.6g}")
    return {"candidates": len(result.cost_table), "best_cost": result.best_cost,
            "best": [g.upper_len, g.lower_len, g.pivot_offset]}


COT_COLUMNS = ("mode", "payload_kg", "v_cmd", "v_mean", "p_mean", "cot_mean", "cot_std", "n_samples", "invalid")


def cmd_cot_sweep(args, robot, scen, run: Run) -> dict:
    c = scen.cot
    stance = StanceCommand(body_height=c.body_height)
    params = _power_params(robot, c.body_height)
    modes = {"legs": [SupportMode.LEGS], "bump-stops": [SupportMode.BUMP_STOPS],
             "both": [SupportMode.LEGS, SupportMode.BUMP_STOPS]}[args.mode]
    seed = run.seed

    def rng_for_cell(mode, m, v):
        return substream(seed, f"cot.{mode.value}.{m!r}.{v!r}")

    cells = []
    for mode in modes:
        payloads = c.payloads if mode is SupportMode.LEGS else c.bump_stop_payloads
        report = run_cot_sweep(
            c.velocities, payloads, mode, params, robot.model, c.distance, c.threshold_frac,
            rng_for_cell=rng_for_cell, wheel_lag=c.wheel_lag, stance=stance,
            steering_noise_std=c.steering_noise_std, dt=1.0 / scen.control_rate_hz, terrain=scen.terrain,
        )
        cells.extend(report.cells)
    rows = [(x.mode.value, x.payload_kg, x.v_cmd, x.v_mean, x.p_mean, x.cot_mean, x.cot_std, x.n_samples,
             int(x.invalid)) for x in cells]
    run.write_csv("cot_sweep.csv", COT_COLUMNS, rows)

    table = _cot_summary(cells, c.velocities)
    run.write("cot_summary.txt", table)
    print(table, end="")
    return {"cells": len(cells), "invalid": sum(x.invalid for x in cells),
            "power_params": [params.p_idle, params.shoulder_hold_coeff, params.rolling_coeff, params.drivetrain_eff]}


def _cot_summary(cells, velocities) -> str:
    by = {(x.mode, x.payload_kg, x.v_cmd): x for x in cells}
    head = "mode        payload_kg " + " ".join(f"v={v:<6g}" for v in velocities)
    lines = [head]
    for mode in (SupportMode.LEGS, SupportMode.BUMP_STOPS):
        for m in sorted({k[1] for k in by if k[0] is mode}):
            vals = []
            for v in velocities:
                cell = by.get((mode, m, v))
                vals.append("   -    " if cell is None or cell.invalid else f"{cell.cot_mean:8.4f}")
            lines.append(f"{mode.value:<11} {m:<10g} " + " ".join(vals))
    pairs = [(k, x) for k, x in by.items() if k[0] is SupportMode.BUMP_STOPS and (SupportMode.LEGS, k[1], k[2]) in by]
    for (_, m, v), bump in sorted(pairs, key=lambda p: (p[0][1], p[0][2])):
        legs = by[(SupportMode.LEGS, m, v)]
        if not (legs.invalid or bump.invalid):
            lines.append(f"improvement payload={m:g} kg v={v:g} m/s: {(legs.cot_mean - bump.cot_mean) / legs.cot_mean:.1%}")
    return "\n".join(lines) + "\n"


PICKUP_COLUMNS = (
    "trial", "seed", "start_x", "start_y", "start_yaw_deg", "box_yaw_deg", "approach", "outcome", "abort_reason",
    "fault", "fault_phase", "duration", "err_lengthwise", "err_crosswise", "err_yaw_deg", "invalid",
)


def _trial_job(job):
    i, seed, settings, cfg, spec, model, filt, trace = job
    return run_pickup_trial(i, seed, settings, cfg, spec, model, filt, record_trace=trace)


def cmd_pickup_trials(args, robot, scen, run: Run) -> dict:
    n = scen.n_trials if args.n is None else args.n
    settings = scen.trials if args.fault_rate is None else replace(scen.trials, fault_rate=args.fault_rate)
    try:
        spec = scen.box if args.mass is None else replace(scen.box, mass=args.mass)
        if not 0.0 <= settings.fault_rate <= 1.0:
            raise ValueError("fault rate must lie within [0, 1]")
        if n < 0:
            raise ValueError("--n must be non-negative")
    except ValueError as exc:
        raise ConfigError("arguments", str(exc)) from exc
    jobs = [(i, run.seed, settings, scen.pickup, spec, robot.model, scen.filter, i == args.trace) for i in range(n)]
    if args.jobs > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_trial_job, jobs, chunksize=max(1, n // (4 * args.jobs))))
    else:
        results = [_trial_job(j) for j in jobs]

    rows = []
    for r in results:
        err = r.alignment_error or (math.nan, math.nan, math.nan)
        rows.append((
            r.index, r.seed, r.start_pose.x, r.start_pose.y, r.start_pose.yaw / DEG, r.box_yaw / DEG,
            "" if r.approach_index is None else r.approach_index, "success" if r.success else "aborted",
            r.abort_reason or "", r.fault.kind if r.fault and r.fault_fired else "",
            r.fault.phase.name.lower() if r.fault and r.fault_fired else "", r.duration,
            err[0], err[1], err[2] / DEG, int(r.abort_reason == "time_budget"),
        ))
    run.write_csv("pickup_trials.csv", PICKUP_COLUMNS, rows)
    for r in results:
        if r.trace:
            run.write_csv(
                f"pickup_trace_{r.index}.csv",
                ("time", "phase", "x", "y", "yaw_deg", "body_height", "est_x", "est_y", "est_yaw_deg", "status"),
                [(t.time, t.phase, t.x, t.y, t.yaw / DEG, t.body_height, t.est_x, t.est_y, t.est_yaw / DEG, t.status)
                 for t in r.trace],
            )
    reasons: dict[str, int] = {}
    for r in results:
        if not r.success:
            reasons[r.abort_reason] = reasons.get(r.abort_reason, 0) + 1
    rate = success_rate(results)
    print(f"pickup-trials: n={n} success={sum(r.success for r in results)} rate={rate:.3f} "
          f"fault_rate={settings.fault_rate:g} mass={spec.mass:g} aborts={dict(sorted(reasons.items()))}")
    return {"n": n, "success_rate": rate, "aborts": dict(sorted(reasons.items()))}


SIM_COLUMNS = ("time", "x", "y", "yaw_deg", "vx", "vy", "wz_deg_s", "body_height", "power_w")


def cmd_simulate(args, robot, scen, run: Run) -> dict:
    sim = scen.simulate
    model = robot.model
    dt = 1.0 / scen.control_rate_hz
    stance = StanceCommand(body_height=sim.body_height)
    params = _power_params(robot, sim.body_height)
    state = initial_state(model, stance, support_mode=sim.mode)
    ctl = RollingController(model.mounts, model.wheel_radius)
    rows = [(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, state.body_height, power_model(state, None, params, scen.terrain, model))]
    k = 0
    energy = 0.0
    for seg in sim.segments:
        twist = BodyTwist(seg.vx, seg.vy, seg.wz)
        for _ in range(int(round(seg.duration / dt))):
            state = step(state, ctl.tick(twist, dt), stance, scen.terrain, dt, model)
            k += 1
            p = power_model(state, None, params, scen.terrain, model)
            energy += p * dt
            t = state.twist
            rows.append((k * dt, state.pose.x, state.pose.y, state.pose.yaw / DEG, t.vx, t.vy, t.wz / DEG,
                         state.body_height, p))
    run.write_csv("trajectory.csv", SIM_COLUMNS, rows)
    pose = state.pose
    print(f"simulate: {k} ticks, final pose x={pose.x:.4f} y={pose.y:.4f} yaw={pose.yaw / DEG:.3f} deg, "
          f"energy={energy:.2f} J")
    return {"ticks": k, "final_pose": [pose.x, pose.y, pose.yaw], "energy_j": energy}


COMMANDS = {
    "optimize-leg": cmd_optimize_leg,
    "cot-sweep": cmd_cot_sweep,
    "pickup-trials": cmd_pickup_trials,
    "simulate": cmd_simulate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="robot config (TOML); default: bundled robot.toml")
    common.add_argument("--scenario", type=Path, help="scenario config (TOML); default: bundled scenario.toml")
    common.add_argument("--seed", type=int, help="override the scenario seed")
    common.add_argument("--out-dir", type=Path, help="artifact directory (default: scenario output.dir)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="wheelleg", description="Wheeled-leg robot design and mission simulator.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("validate-config", parents=[common], help="check both config files and exit")
    sub.add_parser("optimize-leg", parents=[common], help="grid search over leg link lengths")
    cs = sub.add_parser("cot-sweep", parents=[common], help="cost-of-transport sweep")
    cs.add_argument("--mode", choices=("legs", "bump-stops", "both"), default="both")
    pt = sub.add_parser("pickup-trials", parents=[common], help="seeded box pickup trials")
    pt.add_argument("--n", type=int, help="number of trials")
    pt.add_argument("--fault-rate", type=float, help="per-trial fault probability")
    pt.add_argument("--mass", type=float, help="box mass (kg)")
    pt.add_argument("--trace", type=int, metavar="TRIAL", help="write a per-tick trace for this trial index")
    sub.add_parser("simulate", parents=[common], help="drive the scripted twist segments of the scenario")
    return p


def _overrides(args) -> dict:
    keep = ("seed", "jobs", "mode", "n", "fault_rate", "mass", "trace")
    # jobs never changes results, so it stays out of the hash
    return {k: getattr(args, k) for k in keep if k != "jobs" and getattr(args, k, None) is not None}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG

    try:
        robot = load_robot(args.config)
        scen = load_scenario(args.scenario, robot)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    overrides = _overrides(args)
    digest = config_hash(robot.raw, scen.raw, overrides)
    if args.command == "validate-config":
        print(f"ok: schema_version={SCHEMA_VERSION} config_hash={digest}")
        return EXIT_OK

    seed = scen.seed if args.seed is None else args.seed
    if seed < 0:
        print("error: --seed must be non-negative", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = args.out_dir if args.out_dir is not None else Path(scen.out_dir)
    run = Run(args.command, out_dir, seed, digest, overrides)
    try:
        summary = COMMANDS[args.command](args, robot, scen, run)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (WheellegError, ValueError) as exc:
        code = getattr(exc, "code", "value")
        print(f"error [{code}]: {exc}", file=sys.stderr)
        run.finish(f"error:{code}", {"message": str(exc)})
        return EXIT_MODULE
    run.finish("ok", summary)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
