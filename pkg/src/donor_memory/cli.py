"""Command-line experiment runners and data emission.

Subcommands: state-tomo, process-tomo, coherence-scan, shift-scan, ingest,
fit. Curves go to CSV (one row per point: x, y, y_err), matrices and reports
to JSON with explicit basis-ordering metadata. Every emitted file carries the
config hash and seed, and reruns with the same config and seed are
byte-identical for any worker count.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import records as rec
from .fitting import power_law_fit, stretched_exp_fit
from .noise import estimate_probability
from .runners import (
    PROCESS_INPUT_LABELS,
    ExperimentConfig,
    device_like_config,
    run_coherence_scan,
    run_process_tomography,
    run_shift_scan,
    run_state_tomography,
)
from .tomography import (
    bloch_from_tomography,
    density_from_bloch,
    fit_point_errors,
    monte_carlo_errors,
    process_tomography,
    sinusoid_fit,
)
from .pulses import SequenceConfig


def _complex_matrix_payload(mat) -> dict:
    arr = np.asarray(mat, dtype=complex)
    return {"re": arr.real.tolist(), "im": arr.imag.tolist()}


def _meta(cfg: ExperimentConfig) -> dict:
    return {"config_hash": cfg.config_hash(), "seed": cfg.seed}


def _json_default(obj):
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2, default=_json_default) + "\n")


def write_curve_csv(path: Path, header: list[str], rows, meta: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    for key in sorted(meta):
        buf.write(f"# {key}={meta[key]}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) for v in row])
    path.write_text(buf.getvalue())


def read_curve_csv(path: Path):
    rows = []
    header = None
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = next(csv.reader([line]))
        if header is None:
            header = fields
            continue
        rows.append([float(v) for v in fields])
    if header is None:
        raise ValueError(f"{path} contains no data")
    return header, np.array(rows)


def _bloch_payload(b) -> dict:
    return {
        "x": [b.x, b.x_err],
        "y": [b.y, b.y_err],
        "z": [b.z, b.z_err],
    }


def _load_config(args) -> ExperimentConfig:
    if args.device_like:
        cfg = device_like_config()
    else:
        cfg = ExperimentConfig()
    if args.config:
        data = json.loads(Path(args.config).read_text())
        cfg = ExperimentConfig.from_dict(data)
    # flags win over the config file
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.out is not None:
        updates["out_dir"] = args.out
    if args.mc_samples is not None:
        updates["mc_samples"] = args.mc_samples
    if args.workers is not None:
        updates["workers"] = args.workers
    if args.analytic:
        updates["analytic"] = True
    if args.shots is not None:
        updates["noise"] = replace(cfg.noise, shots_per_point=args.shots)
    if updates:
        cfg = replace(cfg, **updates)
    if args.ideal:
        cfg = cfg.ideal()
    return cfg


def _emit_state_result(out: Path, res, cfg: ExperimentConfig) -> dict:
    stage = "memory" if res.memory else "init"
    curve = out / f"xy_{res.label}_{stage}.csv"
    write_curve_csv(
        curve,
        ["phase_deg", "prob", "prob_err"],
        zip(res.data.phases, res.data.means, res.data.stds),
        _meta(cfg),
    )
    if res.data.records:
        rec.write_records(
            out / f"records_{res.label}_{stage}.csv", res.data.records, _meta(cfg)
        )
    return {
        "label": res.label,
        "stage": stage,
        "bloch": _bloch_payload(res.bloch),
        "fidelity": res.fidelity,
        "sinusoid": {
            "amplitude": [res.fit.amplitude, res.fit.amplitude_err],
            "phase_deg": res.fit.phase_deg,
            "phase_err_deg": res.fit.phase_err_deg,
            "offset": [res.fit.offset, res.fit.offset_err],
            "phase_defined": res.fit.phase_defined,
        },
        "z_estimate": None if res.data.z_mean is None else [res.data.z_mean, res.data.z_std],
        "curve_file": curve.name,
    }


def cmd_state_tomo(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.out_dir)
    labels = args.states.split(",") if args.states else list(PROCESS_INPUT_LABELS)
    payload = {"meta": _meta(cfg), "states": {}}
    for i, label in enumerate(labels):
        before = run_state_tomography(cfg, label, memory=False, exp_index=i)
        after = run_state_tomography(cfg, label, memory=True, exp_index=i)
        payload["states"][label] = {
            "init": _emit_state_result(out, before, cfg),
            "memory": _emit_state_result(out, after, cfg),
            "sf_memory_over_init": after.fidelity / before.fidelity if before.fidelity else None,
        }
    write_json(out / "state_tomo.json", payload)
    print(f"state-tomo: wrote {out}/state_tomo.json and XY curves for {labels}")
    return 0


def cmd_process_tomo(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.out_dir)
    res = run_process_tomography(cfg)
    for lbl in res.labels:
        _emit_state_result(out, res.before[lbl], cfg)
        _emit_state_result(out, res.after[lbl], cfg)
    payload = {
        "meta": {**_meta(cfg), "mc_samples": cfg.mc_samples, "basis": list(res.chi_process.basis)},
        "chi_init": _complex_matrix_payload(res.chi_init.chi),
        "chi_init_errors": _complex_matrix_payload(res.chi_init.errors),
        "chi_process": _complex_matrix_payload(res.chi_process.chi),
        "chi_process_errors": _complex_matrix_payload(res.chi_process.errors),
        "mle_converged": {
            "init": res.chi_init.mle_converged,
            "process": res.chi_process.mle_converged,
        },
        "fidelity_report": res.report.to_dict(),
    }
    write_json(out / "process_tomography.json", payload)
    print(
        f"process-tomo: F_i={res.report.f_i:.4f} F_p={res.report.f_p:.4f} "
        f"F_m={res.report.f_m:.4f} -> {out}/process_tomography.json"
    )
    return 0


def cmd_coherence_scan(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.out_dir)
    n_list = [int(n) for n in args.n_list.split(",")]
    res = run_coherence_scan(cfg, n_list, n_times=args.n_times)
    fits_payload = {"meta": _meta(cfg), "curves": [], "power_laws": {}}
    for curve in res.curves:
        name = f"decay_{curve.mode}_N{curve.n_pulses}.csv"
        write_curve_csv(
            out / name,
            ["storage_time_s", "prob", "prob_err"],
            zip(curve.times, curve.probs, curve.errs),
            _meta(cfg),
        )
        fits_payload["curves"].append(
            {
                "mode": curve.mode,
                "n_pulses": curve.n_pulses,
                "file": name,
                "y0": curve.fit.y0,
                "amplitude": curve.fit.amplitude,
                "t2": curve.fit.t2,
                "alpha": curve.fit.alpha,
                "errors": curve.fit.errors.tolist(),
                "degenerate": curve.fit.degenerate,
            }
        )
    for mode, (ns, t2s, t2errs) in res.t2_fits.items():
        pl = res.power_laws[mode]
        write_curve_csv(
            out / f"t2_scaling_{mode}.csv",
            ["n_pulses", "t2_s", "t2_err_s"],
            zip(ns, t2s, t2errs),
            _meta(cfg),
        )
        fits_payload["power_laws"][mode] = None if pl is None else {
            "prefactor": pl.prefactor,
            "exponent": pl.exponent,
            "prefactor_err": pl.prefactor_err,
            "exponent_err": pl.exponent_err,
        }
    write_json(out / "coherence_fits.json", fits_payload)
    summary = ", ".join(
        f"{m}: N^{p['exponent']:.3f}" if p else f"{m}: (needs >=3 N values)"
        for m, p in fits_payload["power_laws"].items()
    )
    print(f"coherence-scan: {summary} -> {out}/coherence_fits.json")
    return 0


def cmd_shift_scan(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.out_dir)
    delays = np.geomspace(args.min_delay, args.max_delay, args.n_delays)
    res = run_shift_scan(cfg, delays)
    write_curve_csv(
        out / "shift_scan.csv",
        ["delay_s", "extracted_hz", "model_hz", "window_avg_hz"],
        zip(res.delays, res.extracted, res.model, res.window_average),
        _meta(cfg),
    )
    write_json(
        out / "shift_scan.json",
        {
            "meta": _meta(cfg),
            "method": "Ramsey pair, MW pi/2 pulses 15 kHz above the steady resonance, "
                      "phase-swept second pulse",
            "peak_extracted_hz": float(res.extracted[0]),
        },
    )
    print(f"shift-scan: peak {res.extracted[0]:.0f} Hz -> {out}/shift_scan.csv")
    return 0


def _reconstruct_from_records(path, visibility):
    """State reconstruction from a measurement-record file, using the same
    estimator and fit-weight conventions as the simulated pipeline."""
    groups = rec.group_by_basis(rec.read_records(path))
    phases, means, stds, reps = [], [], [], 1
    z_est = None
    for key in sorted(groups, key=lambda k: (k is None, k if k is not None else 0.0)):
        mean, std = estimate_probability(groups[key])
        n = len(groups[key])
        reps = max(reps, n)
        if key is None:
            z_est = (mean, std / math.sqrt(n))
        else:
            phases.append(key)
            means.append(mean)
            stds.append(std)
    phases = np.array(phases)
    if phases.size < 4:
        raise rec.RecordFormatError(f"{path}: need at least 4 XY phases, got {phases.size}")
    fit = sinusoid_fit(phases, np.array(means), fit_point_errors(stds, reps))
    bloch = bloch_from_tomography(fit, z_est, visibility)
    return fit, bloch, density_from_bloch(bloch)


def cmd_ingest(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.out_dir)
    vis = cfg.noise.readout_visibility
    if args.inputs:
        labeled = {}
        for item in args.inputs.split(","):
            label, _, path = item.partition("=")
            if not path:
                raise SystemExit(f"--inputs entries must be label=path, got {item!r}")
            labeled[label] = path
        missing = [l for l in PROCESS_INPUT_LABELS if l not in labeled]
        if missing:
            raise SystemExit(f"--inputs missing labels: {missing}")
        blochs, densities, targets = {}, [], []
        for label in PROCESS_INPUT_LABELS:
            fit, bloch, density = _reconstruct_from_records(labeled[label], vis)
            blochs[label] = bloch
            densities.append(density)
            targets.append(density_from_bloch(SequenceConfig(input_state=label).target_bloch()))
        errors = [
            np.array([blochs[l].z_err / 2, blochs[l].z_err / 2, blochs[l].x_err / 2, blochs[l].y_err / 2])
            for l in PROCESS_INPUT_LABELS
        ]
        pm = process_tomography(targets, densities, errors)
        mc = monte_carlo_errors(
            targets,
            [blochs[l].as_tuple() for l in PROCESS_INPUT_LABELS],
            [(blochs[l].x_err, blochs[l].y_err, blochs[l].z_err) for l in PROCESS_INPUT_LABELS],
            targets,
            n_samples=cfg.mc_samples,
            seed=cfg.seed,
            workers=cfg.workers,
        )
        payload = {
            "meta": {**_meta(cfg), "basis": list(pm.basis), "mc_samples": cfg.mc_samples},
            "chi": _complex_matrix_payload(pm.chi),
            "chi_errors": _complex_matrix_payload(mc.chi_std),
            "process_fidelity": [pm.process_fidelity, mc.process_fidelity_std],
            "bloch": {l: _bloch_payload(blochs[l]) for l in PROCESS_INPUT_LABELS},
        }
        write_json(out / "ingested_process_tomo.json", payload)
        print(f"ingest: F_p={pm.process_fidelity:.4f} -> {out}/ingested_process_tomo.json")
        return 0
    fit, bloch, density = _reconstruct_from_records(args.records, vis)
    payload = {
        "meta": _meta(cfg),
        "source": str(args.records),
        "bloch": _bloch_payload(bloch),
        "density": _complex_matrix_payload(density),
        "sinusoid": {
            "amplitude": [fit.amplitude, fit.amplitude_err],
            "phase_deg": fit.phase_deg,
            "offset": [fit.offset, fit.offset_err],
            "phase_defined": fit.phase_defined,
        },
    }
    write_json(out / "ingested_state_tomo.json", payload)
    print(f"ingest: bloch ({bloch.x:+.4f},{bloch.y:+.4f},{bloch.z:+.4f}) -> {out}/ingested_state_tomo.json")
    return 0


def cmd_fit(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.out_dir)
    header, data = read_curve_csv(Path(args.input))
    x, y = data[:, 0], data[:, 1]
    y_err = data[:, 2] if data.shape[1] > 2 and np.all(data[:, 2] > 0) else None
    if args.model == "sinusoid":
        fit = sinusoid_fit(x, y, y_err)
        result = {
            "amplitude": [fit.amplitude, fit.amplitude_err],
            "phase_deg": fit.phase_deg,
            "phase_err_deg": fit.phase_err_deg,
            "offset": [fit.offset, fit.offset_err],
            "phase_defined": fit.phase_defined,
            "converged": fit.converged,
        }
    elif args.model == "stretched-exp":
        fit = stretched_exp_fit(x, y, y_err)
        result = {
            "y0": [fit.y0, float(fit.errors[0])],
            "amplitude": [fit.amplitude, float(fit.errors[1])],
            "t2": [fit.t2, float(fit.errors[2])],
            "alpha": [fit.alpha, float(fit.errors[3])],
            "degenerate": fit.degenerate,
            "converged": fit.fit.converged,
            "iterations": fit.fit.iterations,
            "residual_norm": fit.fit.residual_norm,
        }
    else:
        fit = power_law_fit(x, y, y_err)
        result = {
            "prefactor": [fit.prefactor, fit.prefactor_err],
            "exponent": [fit.exponent, fit.exponent_err],
        }
    payload = {"meta": _meta(cfg), "model": args.model, "input": str(args.input), "fit": result}
    write_json(out / "fit.json", payload)
    print(f"fit: {args.model} -> {out}/fit.json")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="donor-memory",
        description="Electron-nuclear spin quantum-memory simulator and tomography toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file mirroring ExperimentConfig")
        p.add_argument("--seed", type=int, help="root seed (mandatory for stochastic runs)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--mc-samples", type=int, help="Monte Carlo sample count")
        p.add_argument("--shots", type=int, help="shots per tomography point")
        p.add_argument("--workers", type=int, help="parallel workers for fan-out stages")
        p.add_argument("--ideal", action="store_true", help="disable all noise and shift")
        p.add_argument("--analytic", action="store_true",
                       help="exact expectation values instead of shot sampling")
        p.add_argument("--device-like", action="store_true",
                       help="start from the calibrated device-like defaults")

    p = sub.add_parser("state-tomo", help="XY + Z state tomography before/after the memory")
    common(p)
    p.add_argument("--states", help="comma-separated input labels (default all four)")
    p.set_defaults(func=cmd_state_tomo)

    p = sub.add_parser("process-tomo", help="full four-input process tomography")
    common(p)
    p.set_defaults(func=cmd_process_tomo)

    p = sub.add_parser("coherence-scan", help="storage-time sweeps, decay fits, T2 scaling")
    common(p)
    p.add_argument("--n-list", default="1,4,16,64,256", help="comma-separated DD pulse counts")
    p.add_argument("--n-times", type=int, default=12, help="storage times per curve")
    p.set_defaults(func=cmd_coherence_scan)

    p = sub.add_parser("shift-scan", help="Ramsey extraction of the pulse-induced shift")
    common(p)
    p.add_argument("--min-delay", type=float, default=1e-6)
    p.add_argument("--max-delay", type=float, default=600e-6)
    p.add_argument("--n-delays", type=int, default=12)
    p.set_defaults(func=cmd_shift_scan)

    p = sub.add_parser("ingest", help="run tomography on external measurement records")
    common(p)
    p.add_argument("--records", help="measurement-record CSV (single-state tomography)")
    p.add_argument("--inputs", help="label=path,... for four-input process tomography")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("fit", help="fit a curve CSV with one of the standard models")
    common(p)
    p.add_argument("--model", required=True, choices=["sinusoid", "stretched-exp", "power-law"])
    p.add_argument("--input", required=True, help="curve CSV (x, y, y_err)")
    p.set_defaults(func=cmd_fit)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "ingest" and not (args.records or args.inputs):
        print("ingest: provide --records or --inputs", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except rec.RecordFormatError as exc:
        print(f"record format error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
