"""Command line entry point: ``feshbach-dyn <mode> --config PATH``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import diagnostics, io, minibath, qops, spinboson
from .io import ConfigError, RunConfig

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_VALIDATION = 2


class ValidationFailure(RuntimeError):
    """Run finished but the output breaks a structural check."""


def cptp_tolerance(dt):
    return max(1e-8, 10 * dt * dt)


def _metadata(cfg: RunConfig, extra=None):
    meta = {"mode": cfg.mode, "config": cfg.echo(), "versions": io.environment_info()}
    if cfg.dt is not None:
        meta["tolerances"] = {"cptp": cptp_tolerance(cfg.dt)}
    if extra:
        meta.update(extra)
    return meta


def _time_grid(cfg):
    n = int(round(cfg.t_max / cfg.dt))
    return np.arange(n + 1) * cfg.dt


def run_simulate(cfg: RunConfig):
    params = cfg.model
    series = spinboson.simulate(params)
    records = io.records_from_series(series, cfg.rho0)
    extra = {}
    if cfg.self_convergence:
        fine = spinboson.simulate(io.with_overrides(cfg, dt=params.dt / 2).model)
        diff = max(np.max(np.abs(fine.z1[::2] - series.z1)), np.max(np.abs(fine.z2[::2] - series.z2)))
        extra["self_convergence"] = {"dt": params.dt, "dt_half": params.dt / 2, "max_abs_z_difference": float(diff)}
    return records, series.superops(), extra


def _exact_series(spec, times, rho0):
    bath = minibath.build(spec)
    superops = bath.exact_map_superops(times, interaction=True)
    ztil = bath.interaction_Z_series(times)
    states, top = bath.exact_reduced_dynamics(rho0, times)
    chois = qops.choi_from_superop(superops)
    records = io.records_from_arrays(
        times, states, ztil[:, 0, 0], ztil[:, 1, 1],
        superops[:, 3, 0], superops[:, 0, 3], superops[:, 1, 2],
        qops.trace_defect(chois), qops.choi_min_eig(chois),
    )
    return records, superops, states, top


def run_oracle(cfg: RunConfig):
    times = _time_grid(cfg)
    records, superops, _, top = _exact_series(cfg.model, times, cfg.rho0)
    extra = {"top_fock_population": top, "truncation_ok": top <= minibath.TRUNCATION_WARN}
    return records, superops, extra


def run_compare(cfg: RunConfig):
    spec = cfg.model
    times = _time_grid(cfg)
    _, _, exact_states, top = _exact_series(spec, times, cfg.rho0)
    params = spinboson.SpinBosonParams(spec.omega0, spec.matched_bath(), cfg.t_max, cfg.dt)
    series = spinboson.simulate(params)
    records = io.records_from_series(series, cfg.rho0)
    born_states = series.evolve(cfg.rho0, lab_frame=True)
    d11 = np.abs(born_states[:, 0, 0] - exact_states[:, 0, 0])
    d12 = np.abs(born_states[:, 0, 1] - exact_states[:, 0, 1])
    table = np.column_stack([times, born_states[:, 0, 0].real, exact_states[:, 0, 0].real, d11, d12])
    extra = {
        "max_abs_rho11_difference": float(np.max(d11)),
        "max_abs_rho12_difference": float(np.max(d12)),
        "top_fock_population": top,
        "truncation_ok": top <= minibath.TRUNCATION_WARN,
    }
    return records, series.superops(), extra, table


def run_whitenoise(cfg: RunConfig):
    times = _time_grid(cfg)
    series = spinboson.whitenoise_series(cfg.model, times, cfg.secular)
    states = np.array([spinboson.whitenoise_apply(cfg.model, t, cfg.rho0, cfg.secular) for t in times])
    # element formulas are in the interaction picture; rotate coherences to the lab frame
    phase = np.exp(-1j * cfg.model.omega0 * times)
    states[:, 0, 1] *= phase
    states[:, 1, 0] *= np.conj(phase)
    records = io.records_from_arrays(times, states, series.z1, series.z2, series.d1, series.d2, series.alpha,
                                     series.trace_defects(), series.choi_min_eigs())
    return records, series.superops(), {}


def superops_from_records(records):
    """Rebuild interaction-picture maps from stored Kraus coefficients."""
    z1 = np.array([r.z1_re + 1j * r.z1_im for r in records])
    z2 = np.array([r.z2_re + 1j * r.z2_im for r in records])
    d1 = np.array([r.d1 for r in records])
    d2 = np.array([r.d2 for r in records])
    alpha = np.array([r.alpha_re + 1j * r.alpha_im for r in records])
    return spinboson.kraus_superops(z1, z2, d1, d2, alpha)


def run_diagnose(cfg: RunConfig):
    records, meta = io.read_series(cfg.input)
    if len(records) < 3:
        raise ValueError(f"{cfg.input}: need at least 3 records for diagnostics")
    times = np.array([r.t for r in records])
    superops = superops_from_records(records)
    dt = float(times[1] - times[0])
    report = diagnostics.analyze(superops, times, cptp_tol=cptp_tolerance(dt))
    return report, meta


def run(cfg: RunConfig, output=None, fmt=None, emit_plots=None, stream=sys.stdout):
    """Execute a parsed configuration; returns the process exit code."""
    output = output or cfg.output
    fmt = fmt or cfg.format
    emit_plots = cfg.emit_plots if emit_plots is None else emit_plots
    if output is None:
        output = f"{cfg.mode}.{fmt}" if cfg.mode != "diagnose" else "diagnose.json"

    if cfg.mode == "diagnose":
        report, meta = run_diagnose(cfg)
        summary = report.summary()
        summary["input"] = str(cfg.input)
        Path(output).write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
        print(f"{cfg.mode}: {summary['flag']} (BLP measure {summary['blp_measure']:.3e}) -> {output}", file=stream)
        return EXIT_VALIDATION if summary["flag"] == "not-cptp" else EXIT_OK

    table = None
    if cfg.mode == "simulate":
        records, superops, extra = run_simulate(cfg)
    elif cfg.mode == "oracle":
        records, superops, extra = run_oracle(cfg)
    elif cfg.mode == "compare":
        records, superops, extra, table = run_compare(cfg)
    else:
        records, superops, extra = run_whitenoise(cfg)

    tol = cptp_tolerance(cfg.dt)
    report = diagnostics.verify_cptp(superops, tol)
    extra["cptp"] = {"ok": report.ok, "max_trace_defect": report.max_trace_defect,
                     "worst_choi_min_eig": report.worst_min_eig}
    written = io.emit(records, fmt, output, _metadata(cfg, extra), emit_plots)
    if table is not None:
        cmp_path = Path(output).with_name(Path(output).name + ".compare.csv")
        header = "t,rho11_born,rho11_exact,abs_diff_rho11,abs_diff_rho12"
        np.savetxt(cmp_path, table, delimiter=",", header=header, comments="", fmt="%.17g")
        written.append(cmp_path)
    for path in written:
        print(f"wrote {path}", file=stream)
    if not report.ok:
        k = report.first_violation()
        print(f"CPTP check failed at t = {records[k].t:.6g}: trace defect {report.trace_defect[k]:.3e}, "
              f"min Choi eigenvalue {report.choi_min_eig[k]:.3e} (tol {tol:.1e})", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="feshbach-dyn", description="Reduced qubit dynamics from projected amplitudes.")
    p.add_argument("mode", choices=io.MODES)
    p.add_argument("--config", required=True, help="flat section.key = value configuration file")
    p.add_argument("--output", help="output path (overrides run.output)")
    p.add_argument("--format", choices=io.FORMATS, help="output format (overrides run.format)")
    p.add_argument("--emit-plots", action="store_true", default=None, help="also write a gnuplot script")
    p.add_argument("--dt", type=float, help="override the model time step")
    p.add_argument("--tmax", type=float, help="override the model final time")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    path = Path(args.config)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        cfg = io.parse_config(text, mode=args.mode, base_dir=path.parent)
        cfg = io.with_overrides(cfg, dt=args.dt, t_max=args.tmax)
    except ConfigError as exc:
        print(f"error: {path}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        return run(cfg, args.output, args.format, args.emit_plots)
    except Exception as exc:  # surfaced with context, mapped to the runtime exit code
        print(f"error: {cfg.mode} run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
