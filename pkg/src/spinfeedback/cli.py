"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import hashlib
import logging
import os
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__, probe, scenarios, semiclassical, selftest, tables
from .config import RunConfig, load_config
from .dicke import ConfigError
from .engine import FeedbackConfig, TauSchedule, run_sequence
from .kernels import BACKEND

log = logging.getLogger("spinfeedback")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
SUBCOMMANDS = ("simulate", "sweep", "scan-phi", "scan-tau", "drag", "semiclassical",
               "analyze", "selftest")


class RunManifest:
    """Provenance record written next to every run's outputs."""

    def __init__(self, command: str, cfg: RunConfig | None):
        self.command = command
        self.cfg = cfg
        self.files: dict[str, str] = {}
        self.timings: dict[str, float] = {}
        self._t0 = time.perf_counter()

    @contextmanager
    def stage(self, name: str):
        t = time.perf_counter()
        yield
        self.timings[name] = round(time.perf_counter() - t, 6)

    def add(self, name: str, text: str) -> None:
        if name in self.files:
            raise ValueError(f"output {name} emitted twice")
        self.files[name] = text

    def record(self) -> dict:
        return {
            "tool": "spinfeedback",
            "version": __version__,
            "command": self.command,
            "kernel_backend": BACKEND,
            "config_digest": self.cfg.digest if self.cfg else None,
            "parameters": self.cfg.resolved if self.cfg else {},
            "files": [
                {"name": n, "bytes": len(t.encode()), "sha256": hashlib.sha256(t.encode()).hexdigest()}
                for n, t in sorted(self.files.items())
            ],
            "timings_s": self.timings,
            "wall_time_s": round(time.perf_counter() - self._t0, 6),
        }

    def write(self, out: Path) -> None:
        out.mkdir(parents=True, exist_ok=True)
        for name, text in sorted(self.files.items()):
            (out / name).write_text(text, encoding="utf-8", newline="\n")
        tables.write_json(out / "manifest.json", self.record())


def _thermal_reference(cfg: RunConfig) -> probe.ProbeSummary:
    return probe.analyse(probe.thermal_distribution(cfg.model.N, cfg.model.A_c),
                         cfg.probe.omega_serr)


def cmd_simulate(args, cfg: RunConfig, man: RunManifest) -> None:
    with man.stage("evolve"):
        res = run_sequence(cfg.model, cfg.feedback, threads=args.threads)
    with man.stage("probe"):
        lattice = probe.extract_p(res)
        p = probe.extract_p(res, cfg.probe.grid)
        times = probe.probe_times(lattice, cfg.probe.fid_points, omega_serr=cfg.probe.omega_serr)
        fid = probe.synthesize_fid(lattice, times, cfg.probe.omega_serr)
        fit = probe.fit_stretched_exponential(fid)
        width = probe.fwhm(lattice)
        thermal = _thermal_reference(cfg)
    if not fit.converged or not np.isfinite(fit.T2_star):
        raise probe.NumericalError("stretched-exponential fit did not converge")
    man.add("fid.csv", tables.render_csv({"time_ns": fid.times, "Sz": fid.values}))
    man.add("p.csv", tables.render_csv({"freq_MHz": p.freqs, "density_per_MHz": p.dens}))
    iz, prob = probe.macrostate_distribution(res)
    man.add("macrostates.csv", tables.render_csv({"Iz": iz, "probability": prob}))
    diag = res.diagnostics
    man.add("diagnostics.csv", tables.render_csv({
        "species": [d.species for d in diag], "I": [d.I for d in diag],
        "weight": [d.weight for d in diag], "trace": [d.trace for d in diag],
        "trace_leakage": [d.trace_leakage for d in diag], "n_clamped": [d.n_clamped for d in diag],
    }))
    record = fit.as_dict()
    record.update({
        "fwhm_MHz": width.fwhm,
        "multimodal": width.multimodal,
        "macrostates_fwhm_over_A_c": width.fwhm / cfg.model.A_c,
        "S_p": probe.lddp_entropy(p),
        "lockpoint_Iz": res.lockpoint,
        "thermal_T2_star_ns": thermal.T2_star,
        "thermal_alpha": thermal.alpha,
        "thermal_fwhm_MHz": thermal.fwhm,
        "thermal_S_p": thermal.entropy,
        "T2_ratio_cooled_over_thermal": fit.T2_star / thermal.T2_star,
    })
    man.add("fit.json", tables.render_json(record))
    print(f"T2* = {fit.T2_star:.2f} ns, alpha = {fit.alpha:.3f}, FWHM = {width.fwhm:.2f} MHz, "
          f"S_p = {record['S_p']:.3f}")


def cmd_sweep(args, cfg: RunConfig, man: RunManifest) -> None:
    with man.stage("sweep"):
        table = scenarios.sweep(cfg.sweep, cfg.model, threads=args.threads, grid=cfg.probe.grid)
    man.add("sweep.csv", tables.render_csv(table.columns()))
    try:
        print(f"argmax T2* at {table.parameter} = {table.argmax():g}")
    except ValueError:
        raise probe.NumericalError("every sweep point failed") from None


def _scan_model(cfg: RunConfig):
    from .dicke import EnsembleModel, sample_manifolds

    m = cfg.model
    model = EnsembleModel(m.N, m.A_c, m.A_nc, m.xi, m.species)
    r = cfg.resolved["model"]
    model.manifolds = sample_manifolds(m.N, int(r["manifold_count"]), int(r["manifold_spacing"]),
                                       cfg.scan.window_fraction)
    return model


def cmd_scan_phi(args, cfg: RunConfig, man: RunManifest) -> None:
    fb = cfg.feedback.replace(tau_schedule=TauSchedule.fixed(cfg.scan.bimodal_tau))
    with man.stage("scan"):
        res = scenarios.bimodal_scan(cfg.scan.phis, fb, _scan_model(cfg), threads=args.threads)
    man.add("bimodal.csv", tables.render_csv(scenarios.bimodal_columns(res.rows)))
    man.add("bimodal_map.csv", tables.render_csv(res.map_columns("phi_rad")))


def cmd_scan_tau(args, cfg: RunConfig, man: RunManifest) -> None:
    with man.stage("scan"):
        res = scenarios.multistability_scan(cfg.scan.taus, cfg.feedback, _scan_model(cfg),
                                            threads=args.threads)
    man.add("multistability.csv", tables.render_csv(scenarios.multistability_columns(res.rows)))
    man.add("multistability_map.csv", tables.render_csv(res.map_columns("tau_ns")))


def cmd_drag(args, cfg: RunConfig, man: RunManifest) -> None:
    fb = cfg.feedback.replace(drag=cfg.drag.schedule)
    with man.stage("drag"):
        rows = scenarios.drag_scenario(fb, cfg.model, threads=args.threads)
    man.add("drag.csv", tables.render_csv(scenarios.drag_columns(rows)))


def cmd_semiclassical(args, cfg: RunConfig, man: RunManifest) -> None:
    s = cfg.semiclassical
    p = s.params
    with man.stage("semiclassical"):
        iz = np.linspace(s.iz_range[0], s.iz_range[1], s.curve_points)
        wp, wm = semiclassical.directional_rates(iz - p.Iz_lock, p)
        fps = semiclassical.find_stable_points(p, s.iz_range)
        trajs = [(z, semiclassical.integrate_trajectory(z, p, s.t_end, s.dt)) for z in s.iz0]
    man.add("rate_curve.csv", tables.render_csv({
        "Iz": iz, "rate_per_ns": semiclassical.rate(iz, p), "W_plus_per_ns": wp,
        "W_minus_per_ns": wm}))
    man.add("fixed_points.csv", tables.render_csv({
        "Iz": [f.iz for f in fps], "stable": [f.stable for f in fps]}))
    man.add("trajectories.csv", tables.render_csv({
        "Iz0": [z for z, t in trajs for _ in t.times],
        "time_ns": np.concatenate([t.times for _, t in trajs]) if trajs else [],
        "Iz": np.concatenate([t.iz for _, t in trajs]) if trajs else [],
    }))


def cmd_analyze(args, cfg: RunConfig, man: RunManifest) -> None:
    if not args.fid:
        raise ConfigError("analyze: --fid PATH is required")
    try:
        data = tables.read_csv(args.fid)
        fid = probe.FidTrace(data["time_ns"], data["Sz"], cfg.probe.omega_serr)
    except (KeyError, ValueError, OSError) as exc:
        raise ConfigError(f"analyze: cannot read FID from {args.fid}: {exc}") from None
    with man.stage("fit"):
        fit = probe.fit_stretched_exponential(fid)
        rec = fit.as_dict()
        if fid.is_uniform() and fid.times[0] == 0:
            p = probe.fft_to_distribution(fid)
            man.add("p.csv", tables.render_csv({"freq_MHz": p.freqs, "density_per_MHz": p.dens}))
            rec["fwhm_MHz"] = probe.fwhm(p).fwhm
            rec["S_p"] = probe.lddp_entropy(p)
    man.add("fit.json", tables.render_json(rec))
    print(f"T2* = {fit.T2_star:.4g} ns, alpha = {fit.alpha:.4g}, converged = {fit.converged}")
    if not fit.converged:
        raise probe.NumericalError("fit did not converge")


COMMANDS = {
    "simulate": cmd_simulate, "sweep": cmd_sweep, "scan-phi": cmd_scan_phi,
    "scan-tau": cmd_scan_tau, "drag": cmd_drag, "semiclassical": cmd_semiclassical,
    "analyze": cmd_analyze,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML configuration file")
    common.add_argument("--out", metavar="DIR", default="out", help="output directory")
    common.add_argument("--threads", metavar="N", type=int, default=os.cpu_count() or 1,
                        help="manifold-level worker threads (default: all cores)")
    common.add_argument("--ablate", metavar="FLAG[,FLAG...]", default="",
                        help="no_transverse_noise, no_optical_relaxation, "
                             "no_nuclear_dephasing, single_species")
    common.add_argument("--seedless", action="store_true",
                        help="reserved; the simulation uses no random numbers")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="spinfeedback",
                                     description="Central-spin feedback cooling simulator")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "analyze":
            sp.add_argument("--fid", metavar="PATH", help="FID CSV (# columns: time_ns,Sz)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "selftest":
        failures = selftest.run(sys.stdout)
        print("selftest passed" if not failures else f"selftest: {failures} failure(s)")
        return EXIT_OK if not failures else 1
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = load_config(args.config)
        if args.ablate:
            cfg = cfg.with_ablations(args.ablate.split(","))
        man = RunManifest(args.command, cfg)
        COMMANDS[args.command](args, cfg, man)
        man.write(Path(args.out))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (probe.NumericalError, FloatingPointError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
