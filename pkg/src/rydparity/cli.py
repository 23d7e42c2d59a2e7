"""Command-line entry point: batch workflows over JSON configs and CSV outputs.

Subcommands: encode, spectrum, ramp-optimize, calibrate, gate, error-curve,
qaoa, ensemble. Exit codes: 0 ok, 2 input error, 3 infeasible, 4 numerical
failure, 64 usage.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .errors import InfeasibleError, InputError, NumericalError
from .iotools import RunManifest, dump_json, load_json, write_csv

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INFEASIBLE = 3
EXIT_NUMERICAL = 4
EXIT_USAGE = 64

TWO_PI_MHZ = 2.0 * np.pi * 40.0  # 2 pi x 40 MHz in rad/us
DEFAULT_V = 251.32741228718345


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _progress(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _out_path(args, name: str) -> str:
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def cmd_encode(args) -> int:
    from . import encoding

    manifest = RunManifest(command="encode", config={"problem": args.problem, "validate_only": args.validate_only}, seed=args.seed, out_dir=args.out)
    if args.validate_only:
        layout = encoding.ParityLayout.load(args.problem)
        reports = encoding.validate_layout(layout)
        for r in reports:
            print(f"plaquette {r.plaquette_id}: {r.kind}: {r.detail}")
        if reports:
            return EXIT_INPUT
        print(f"layout ok: {layout.num_qubits} qubits, {len(layout.plaquettes)} plaquettes, c={layout.penalty_strength}")
        return EXIT_OK
    problem = encoding.LogicalProblem.from_dict(load_json(args.problem))
    layout = encoding.encode_problem(problem, penalty_strength=args.penalty)
    reports = encoding.validate_layout(layout)
    if reports:
        for r in reports:
            print(f"plaquette {r.plaquette_id}: {r.kind}: {r.detail}", file=sys.stderr)
        return EXIT_INPUT
    path = _out_path(args, "layout.json")
    payload = layout.to_dict()
    payload["manifest"] = manifest.to_dict()
    dump_json(path, payload)
    rounds = encoding.schedule_illumination(layout)
    print(f"wrote {path}: {layout.num_qubits} qubits, {len(layout.plaquettes)} plaquettes, "
          f"{len(rounds)} illumination rounds, c={layout.penalty_strength}")
    return EXIT_OK


def cmd_spectrum(args) -> int:
    from .plaquette import PlaquetteConfig, sweep_spectrum

    sectors = [int(s) for s in args.sectors.split(",") if s != ""]
    manifest = RunManifest(
        command="spectrum",
        config={"v": args.v, "omega": args.omega, "delta_min": args.delta_min, "delta_max": args.delta_max,
                "points": args.points, "sectors": sectors},
        seed=args.seed, out_dir=args.out,
    )
    config = PlaquetteConfig(interaction=args.v)
    deltas = np.linspace(args.delta_min, args.delta_max, args.points)
    rows = sweep_spectrum(config, args.omega, deltas, sectors)
    path = _out_path(args, "spectrum.csv")
    write_csv(path, ["delta_rad_per_us", "n", "eigenvalue_index", "energy_rad_per_us", "overlap_with_k0"], rows, manifest)
    print(f"wrote {path}: {len(rows)} rows")
    return EXIT_OK


def cmd_ramp_optimize(args) -> int:
    from .plaquette import PlaquetteConfig
    from .pulses import LaserPoint
    from .ramps import optimize_ramp, save_path

    cfgd = load_json(args.config)
    v = float(cfgd.get("v", DEFAULT_V))
    config = PlaquetteConfig(interaction=v)
    start = LaserPoint(*map(float, cfgd["start"]))
    end = LaserPoint(*map(float, cfgd["end"]))
    manifest = RunManifest(command="ramp-optimize", config=cfgd, seed=args.seed, out_dir=args.out)
    _progress(f"optimizing ramp {cfgd['start']} -> {cfgd['end']} at eps={cfgd.get('epsilon', 1e-3)}")
    path, report = optimize_ramp(
        start,
        end,
        int(cfgd.get("m_interior", 0)),
        float(cfgd.get("epsilon", 1e-3)),
        config,
        budget=args.budget if args.budget is not None else int(cfgd.get("budget", 20)),
        seed=args.seed or 0,
        maxfun=cfgd.get("maxfun"),
    )
    out = _out_path(args, "ramp.json")
    with open(out, "w") as fh:
        save_path(path, report, fh, seed=args.seed)
    if args.curve_points:
        from .ramps import infidelity_curve

        ts = np.geomspace(max(report.t_eps / 8, 1e-3), report.t_eps * 4, args.curve_points)
        rows = []
        for t, infs in infidelity_curve(path, ts, config):
            for n, inf in sorted(infs.items()):
                rows.append((t, n, inf))
        write_csv(_out_path(args, "ramp_curve.csv"), ["duration_us", "sector", "infidelity"], rows, manifest)
    print(f"wrote {out}: T_eps={report.t_eps:.6g} us, bound={report.bound:.6g} us")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    from .gate import Waypoints, build_calibration, check_return_to_basis, default_waypoints, optimize_waypoints
    from .plaquette import PlaquetteConfig

    cfgd = load_json(args.config)
    v = float(cfgd.get("v", DEFAULT_V))
    config = PlaquetteConfig(interaction=v)
    epsilon = float(cfgd.get("epsilon", 1e-3))
    manifest = RunManifest(command="calibrate", config=cfgd, seed=args.seed, out_dir=args.out)
    budget = args.budget if args.budget is not None else int(cfgd.get("budget", 1))
    wp = Waypoints.from_array([float(x) for x in cfgd["waypoints"]]) if "waypoints" in cfgd else default_waypoints(v)
    _progress(f"calibrating at eps={epsilon}, budget={budget}")
    if budget <= 1:
        cal = build_calibration(
            wp, config, epsilon,
            omega_max=float(cfgd.get("omega_max", v)),
            m_interior=int(cfgd.get("m_interior", 0)),
            ramp_budget=int(cfgd.get("ramp_budget", 1)),
            seed=args.seed or 0,
        )
        check_return_to_basis(cal)
    else:
        cal = optimize_waypoints(
            config, epsilon,
            omega_max=float(cfgd.get("omega_max", v)),
            budget=budget,
            seed=args.seed or 0,
            initial=wp,
            m_interior=int(cfgd.get("m_interior", 0)),
            ramp_budget=int(cfgd.get("ramp_budget", 1)),
        )
    path = _out_path(args, "calibration.json")
    payload = cal.to_dict()
    payload["manifest"] = manifest.to_dict()
    dump_json(path, payload)
    print(f"wrote {path}: T_gate_worst={cal.t_gate_worst:.6g} us (ramps {cal.t_ramps:.6g}, hold {cal.t_hold_worst:.6g})")
    return EXIT_OK


def cmd_gate(args) -> int:
    from .gate import CompiledCoherentGate, GateCalibration, gate_for_gamma
    from .plaquette import coherent_average_fidelity

    cal = GateCalibration.load(args.calibration)
    manifest = RunManifest(command="gate", config={"calibration": args.calibration, "gamma": args.gamma}, seed=args.seed, out_dir=args.out)
    pulse, sol = gate_for_gamma(cal, args.gamma)
    compiled = CompiledCoherentGate(cal)
    amps = compiled.amplitudes(sol.t_a, sol.t_b)
    fid = coherent_average_fidelity(amps, args.gamma)
    path = _out_path(args, "pulse.json")
    segs = []
    t = 0.0
    for seg in pulse.segments:
        a, b = seg.endpoints()
        segs.append({
            "kind": type(seg).__name__,
            "start": [a.omega, a.delta],
            "end": [b.omega, b.delta],
            "t0_us": t,
            "duration_us": seg.duration,
        })
        t += seg.duration
    dump_json(path, {
        "gamma": args.gamma,
        "hold_times_us": [sol.t_a, sol.t_b],
        "windings": [sol.m_a, sol.m_b],
        "pulse_duration_us": pulse.duration,
        "gate_duration_us": 2 * pulse.duration,
        "coherent_average_fidelity": fid,
        "segments": segs,
        "manifest": manifest.to_dict(),
    })
    print(f"wrote {path}: t_A={sol.t_a:.6g} t_B={sol.t_b:.6g} us, coherent F={fid:.6g}")
    return EXIT_OK


def cmd_error_curve(args) -> int:
    from .gate import GateCalibration, error_curve, scale_ramp_durations
    from .opensystem import DecayModel

    cfgd = load_json(args.config)
    manifest = RunManifest(command="error-curve", config=cfgd, seed=args.seed, out_dir=args.out)
    base = GateCalibration.load(cfgd["calibration"])
    factors = cfgd.get("ramp_scale_factors", [1.0])
    cals = []
    for f in factors:
        cals.append((f"scale_{f}", base if f == 1.0 else scale_ramp_durations(base, float(f))))
    decay = None
    if cfgd.get("decay_rate", 0.0):
        decay = DecayModel(gamma_r=float(cfgd["decay_rate"]))
    samples = args.budget if args.budget is not None else int(cfgd.get("samples", 100))
    _progress(f"error curve: {len(cals)} levels x {samples} samples, decay={decay.gamma_r if decay else 0}")
    points = error_curve(cals, samples, seed=args.seed or 0, decay=decay, gamma_only=bool(cfgd.get("gamma_only", False)))
    rows = [(p.label, p.t_gate_mean, p.mean_error, p.n_samples, p.decay_rate) for p in points]
    path = _out_path(args, "error_curve.csv")
    write_csv(path, ["epsilon_level", "T_gate_us", "mean_error", "n_samples", "decay_rate"], rows, manifest)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_qaoa(args) -> int:
    from .encoding import ParityLayout, enumerate_extrema
    from .qaoa import NoiseModel, residual_energy, stochastic_optimize

    cfgd = load_json(args.config)
    layout = ParityLayout.load(args.layout)
    manifest = RunManifest(command="qaoa", config=cfgd, seed=args.seed, out_dir=args.out)
    noise = NoiseModel(p1=float(cfgd.get("p1", 5e-4)), p4=float(cfgd.get("p4", 1e-4)))
    updates = args.budget if args.budget is not None else int(cfgd.get("updates", 200))
    _progress(f"qaoa: p={cfgd.get('depth', 3)}, {updates} updates x {cfgd.get('shots', 500)} shots")
    run = stochastic_optimize(
        layout,
        int(cfgd.get("depth", 3)),
        noise,
        updates,
        int(cfgd.get("shots", 500)),
        args.seed or 0,
        proposal_scale=float(cfgd.get("proposal_scale", 0.1)),
        final_shots=int(cfgd.get("final_shots", 5000)),
        unraveling=cfgd.get("unraveling", "pauli"),
    )
    rows = []
    ref = run.initial_energy
    for r in run.records:
        if r.accepted:
            ref = r.energy_estimate
        rows.append((r.update, r.param_index, r.old_value, r.new_value, r.energy_estimate, r.stderr,
                     r.accepted, r.best_energy, ref))
    path = _out_path(args, "qaoa_run.csv")
    write_csv(path, ["update", "proposed_param_index", "old_value", "new_value", "energy_estimate",
                     "stderr", "accepted", "best_energy", "reference_energy"], rows, manifest)
    summary = {"final_energy": run.final_energy, "final_stderr": run.final_stderr,
               "initial_energy": run.initial_energy, "manifest": manifest.to_dict()}
    if layout.num_qubits <= 26 and cfgd.get("residual", True):
        e_min, e_max, _ = enumerate_extrema(layout)
        summary["e_min"], summary["e_max"] = e_min, e_max
        summary["e_res_final"] = residual_energy(run.final_energy, e_min, e_max)
    dump_json(_out_path(args, "qaoa_summary.json"), summary)
    print(f"wrote {path}: final <E>={run.final_energy:.6g}"
          + (f", E_res={summary['e_res_final']:.4g}" if "e_res_final" in summary else ""))
    return EXIT_OK


def cmd_ensemble(args) -> int:
    from .encoding import ParityLayout, enumerate_extrema
    from .qaoa import run_ensemble

    cfgd = load_json(args.config)
    layout = ParityLayout.load(args.layout)
    manifest = RunManifest(command="ensemble", config=cfgd, seed=args.seed, out_dir=args.out)
    e_min, e_max, _ = enumerate_extrema(layout)
    levels = [float(x) for x in cfgd.get("p4_levels", [1e-4, 1e-3, 1e-2, 1e-1])]
    runs = args.budget if args.budget is not None else int(cfgd.get("runs_per_level", 10))
    _progress(f"ensemble: {len(levels)} levels x {runs} runs")
    table = run_ensemble(
        layout,
        int(cfgd.get("depth", 3)),
        levels,
        runs,
        args.seed or 0,
        e_min,
        e_max,
        p1=float(cfgd.get("p1", 5e-4)),
        updates=int(cfgd.get("updates", 200)),
        shots=int(cfgd.get("shots", 500)),
        final_shots=int(cfgd.get("final_shots", 5000)),
        unraveling=cfgd.get("unraveling", "pauli"),
        processes=args.threads,
    )
    rows = []
    for level in table:
        for rid, res in enumerate(level.residuals):
            rows.append((level.p4, rid, res, level.median, level.q25, level.q75))
    path = _out_path(args, "ensemble.csv")
    write_csv(path, ["p4", "run_id", "E_res_final", "median", "q25", "q75"], rows, manifest)
    print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> _Parser:
    p = _Parser(prog="rydparity", description=__doc__)
    p.add_argument("--seed", type=int, default=0, help="master seed recorded in the manifest")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--threads", type=int, default=1, help="worker cap inside sanctioned parallel regions")
    p.add_argument("--budget", type=int, default=None, help="override the main iteration budget")
    p.add_argument("--format", choices=["csv"], default="csv")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("encode", help="encode a logical problem file into a parity layout")
    sp.add_argument("problem", help="problem JSON (or layout JSON with --validate-only)")
    sp.add_argument("--penalty", type=float, default=None, help="constraint strength c")
    sp.add_argument("--validate-only", action="store_true")
    sp.set_defaults(func=cmd_encode)

    sp = sub.add_parser("spectrum", help="sector spectra vs detuning as CSV")
    sp.add_argument("--v", type=float, default=DEFAULT_V)
    sp.add_argument("--omega", type=float, default=DEFAULT_V / 2)
    sp.add_argument("--delta-min", type=float, default=-DEFAULT_V)
    sp.add_argument("--delta-max", type=float, default=3 * DEFAULT_V)
    sp.add_argument("--points", type=int, default=301)
    sp.add_argument("--sectors", default="0,1,2,3,4")
    sp.set_defaults(func=cmd_spectrum)

    sp = sub.add_parser("ramp-optimize", help="variational time-optimal ramp between waypoints")
    sp.add_argument("config")
    sp.add_argument("--curve-points", type=int, default=0)
    sp.set_defaults(func=cmd_ramp_optimize)

    sp = sub.add_parser("calibrate", help="one-time gate calibration")
    sp.add_argument("config")
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("gate", help="assemble the pulse for a gate phase")
    sp.add_argument("calibration")
    sp.add_argument("--gamma", type=float, required=True)
    sp.set_defaults(func=cmd_gate)

    sp = sub.add_parser("error-curve", help="mean gate error over random phase targets")
    sp.add_argument("config")
    sp.set_defaults(func=cmd_error_curve)

    sp = sub.add_parser("qaoa", help="stochastic parity-QAOA optimization run")
    sp.add_argument("layout")
    sp.add_argument("config")
    sp.set_defaults(func=cmd_qaoa)

    sp = sub.add_parser("ensemble", help="residual-energy distributions over noise levels")
    sp.add_argument("layout")
    sp.add_argument("config")
    sp.set_defaults(func=cmd_ensemble)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except FileNotFoundError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
