"""Command-line driver: ``stochtunnel <mode> --config FILE [--out-dir DIR] [--seed N] [--plot]``.

Exit status 0 on success, 1 for configuration errors and 2 when a numerical
guard trips (including too many backward paths that never cross the barrier).
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import analysis, config, dynamics, fporacle
from .channels import ChannelField
from .errors import ConfigError, NumericalGuardError
from .wavefield import WaveField, _coefficients, packet_extent

EXIT_OK, EXIT_CONFIG, EXIT_GUARD = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError("arguments", message)


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "nan" if math.isnan(v) else repr(v)
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def forward_dt(cfg: config.RunConfig) -> float:
    if cfg["run.dt"] > 0:
        return cfg["run.dt"]
    return 0.02 * cfg["barrier.m"] / (cfg["barrier.hbar"] * cfg["packet.k0"] ** 2)


def _step_config(cfg: config.RunConfig, dt: float, direction: str) -> dynamics.StepConfig:
    return dynamics.StepConfig(dt, direction, hbar=cfg["barrier.hbar"], m=cfg["barrier.m"],
                               refine_tol=cfg["run.refine_tol"],
                               max_substeps=cfg["run.max_substeps"])


def _forward(cfg: config.RunConfig, field, probes, record_paths=0, record_every=1):
    return dynamics.run_ensemble(
        field, cfg["run.n_walkers"], cfg.seed, _step_config(cfg, forward_dt(cfg), "forward"),
        cfg["run.t_end"], probes, law=dynamics.ForwardLaw(cfg["run.t_start"]),
        record_paths=record_paths, record_every=record_every)


# ----------------------------------------------------------------------------
# modes


def run_coefficients(cfg: config.RunConfig, out: Path) -> int:
    barrier = cfg.barrier()
    k_nodes, _ = cfg.quadrature().nodes()
    e_top = 2.0 * max(barrier.V0, cfg.E0)
    n = cfg["coeff.n_scan"]
    e_scan = e_top * (np.arange(n) + 0.5) / n
    k_scan = np.sqrt(2 * barrier.m * e_scan) / barrier.hbar
    k = np.sort(np.concatenate([k_nodes, k_scan]))
    _, R, T, _, _, _ = _coefficients(barrier, k)
    defect = np.abs(R) ** 2 + np.abs(T) ** 2 - 1.0
    write_csv(out / "coefficients.csv",
              ["k[1/L]", "E[E]", "ReR[1]", "ImR[1]", "ReT[1]", "ImT[1]", "unitarity_defect[1]"],
              zip(k, barrier.energy(k), R.real, R.imag, T.real, T.imag, defect))
    return EXIT_OK


def density_comparison(field, cfg, res):
    """Per-probe histogram rows and (t, L1, p-fraction, |psi|^2 mass, z) summaries.

    The histogram of p-labelled walkers is normalised by the full ensemble, so
    its L1 distance to |psi|^2 also measures the absorbed fraction.
    """
    n = cfg["run.n_walkers"]
    rows, summary = [], []
    for tp, x, lab in zip(res.probe_times, res.positions, res.labels):
        lo, hi = packet_extent(field.packet, tp, field.barrier.hbar, field.barrier.m, 5.0)
        lo = min(lo, -hi)
        grid = fporacle.empty_grid(lo, hi, cfg["run.bins"], tp)
        ref = fporacle.wavefunction_density(field, grid, tp)
        hist = fporacle.histogram_density(x[lab == dynamics.Sector.P_SECTOR], grid, n, tp)
        for xc, p, h in zip(grid.centers, ref.values, hist.values):
            rows.append((tp, xc, p, h))
        mass = analysis_mass(field, tp)
        frac = float(np.mean(lab == dynamics.Sector.P_SECTOR))
        sd = math.sqrt(max(mass * (1 - mass), 0.0) / n)
        z = (frac - mass) / sd if sd > 0 else 0.0
        summary.append((tp, fporacle.compare_density(hist, ref), frac, mass, z))
    return rows, summary


def analysis_mass(field: WaveField, t: float, n: int = 200001) -> float:
    """Total |psi|^2 at time t over a window wide enough for both packets."""
    lo, hi = packet_extent(field.packet, t, field.barrier.hbar, field.barrier.m, 12.0)
    x = np.linspace(min(lo, -hi) - field.d, max(hi, field.d) + field.d, n)
    p, _ = field.psi_and_dpsi(x, t)
    return float(np.trapezoid(np.abs(p) ** 2, x))


def run_evolve(cfg: config.RunConfig, out: Path) -> int:
    field = WaveField(cfg.barrier(), cfg.packet(), cfg.quadrature())
    res = _forward(cfg, field, cfg["run.probe_times"])
    rows, summary = density_comparison(field, cfg, res)
    write_csv(out / "density.csv", ["t[T]", "x[L]", "psi2[1/L]", "walkers_p[1/L]"], rows)
    write_csv(out / "evolve_summary.csv",
              ["t[T]", "L1[1]", "p_fraction[1]", "psi_mass[1]", "z_binomial[1]"], summary)
    every = max(1, cfg["run.record_every"])
    write_csv(out / "counts.csv", ["t[T]", "n_p[count]", "n_u[count]"],
              ((t, c[0], c[1]) for t, c in zip(res.times[::every], res.counts[::every])))
    return EXIT_OK


def _pick_paths(paths, d: float, n: int):
    """Paths relabelled inside the barrier first, then the rest in id order."""
    def relabelled(p):
        flips = np.flatnonzero(np.diff(p.label) != 0)
        return any(0 <= p.x[i + 1] <= d or 0 <= p.x[i] <= d for i in flips)
    first = [p for p in paths if relabelled(p)][:1]
    rest = [p for p in paths if p not in first]
    return (first + rest)[:n]


def run_paths(cfg: config.RunConfig, out: Path) -> int:
    field = WaveField(cfg.barrier(), cfg.packet(), cfg.quadrature())
    pool = max(cfg["run.path_pool"], cfg["run.n_paths"])
    res = _forward(cfg, field, (), record_paths=pool, record_every=max(1, cfg["run.record_every"]))
    chosen = _pick_paths(res.paths, field.d, cfg["run.n_paths"])
    rows = ((p.path_id, t, x, int(l)) for p in chosen for t, x, l in zip(p.t, p.x, p.label))
    write_csv(out / "paths.csv", ["path_id", "t[T]", "x[L]", "label"], rows)
    return EXIT_OK


def _backward_kwargs(cfg: config.RunConfig) -> dict:
    kw = {}
    if cfg["run.dt"] > 0:
        kw["dt"] = cfg["run.dt"]
    if cfg["run.t_final"] > 0:
        kw["t_final"] = cfg["run.t_final"]
    if cfg["run.window"] > 0:
        kw["window"] = cfg["run.window"]
    kw["refine_tol"] = cfg["run.refine_tol"]
    kw["max_substeps"] = cfg["run.max_substeps"]
    return kw


def _times_rows(series: str, res: dynamics.BackwardResult):
    for i in range(res.n_walkers):
        flag = "ok" if res.crossed[i] else "no_crossing"
        tp, ti = res.tau_p[i], res.tau_int[i]
        yield (series, i, tp, ti, ti - tp, res.first_passage[i], flag)


TIMES_HEADER = ["series", "path_id", "tau_p[T]", "tau_int[T]", "tau_h[T]", "first_passage[T]",
                "flags"]
SUMMARY_HEADER = ["series", "mean_tau_p[T]", "stderr[T]", "mean_tau_int[T]", "n_effective",
                  "n_flagged", "reference[T]"]


def _summary_row(series, st: analysis.TimeStatistics, ref):
    nan = float("nan")
    if st.n == 0:
        return (series, nan, nan, nan, 0, st.n_flagged, nan if ref is None else ref)
    return (series, st.mean(), st.stderr(), st.mean("tau_int"), st.n, st.n_flagged,
            nan if ref is None else ref)


def _crossing_status(results, limit: float) -> int:
    worst = max(r.non_crossing_fraction for r in results)
    if worst > limit:
        print(f"numerical guard: {worst:.1%} of backward paths never crossed x = 0",
              file=sys.stderr)
        return EXIT_GUARD
    return EXIT_OK


def run_tunneling_time(cfg: config.RunConfig, out: Path) -> int:
    field = WaveField(cfg.barrier(), cfg.packet(), cfg.quadrature())
    res = analysis.backward_times(field, cfg["run.n_walkers"], cfg.seed,
                                  **_backward_kwargs(cfg))
    write_csv(out / "times.csv", TIMES_HEADER, _times_rows("tau_p", res))
    st = analysis.TimeStatistics.from_backward(res)
    ref = analysis.wkb_times(cfg.barrier(), cfg.E0).t_c
    write_csv(out / "summary.csv", SUMMARY_HEADER, [_summary_row("tau_p", st, ref)])
    return _crossing_status([res], cfg["run.no_crossing_limit"])


def run_channel_time(cfg: config.RunConfig, out: Path) -> int:
    spec = cfg.channel_spec()
    field = ChannelField(spec, cfg.quadrature())
    ref = analysis.channel_reference_time(spec, cfg.E0)
    results, rows, summary = [], [], []
    for ch in (dynamics.Channel.CH1, dynamics.Channel.CH2):
        res = analysis.backward_times(field, cfg["run.n_walkers"], cfg.seed + int(ch),
                                      label=int(ch), **_backward_kwargs(cfg))
        results.append(res)
        series = f"t_{int(ch) + 1}"
        rows.extend(_times_rows(series, res))
        summary.append(_summary_row(series, analysis.TimeStatistics.from_backward(res), ref))
    write_csv(out / "times.csv", TIMES_HEADER, rows)
    write_csv(out / "summary.csv", SUMMARY_HEADER, summary)
    return _crossing_status(results, cfg["run.no_crossing_limit"])


def run_sweep(cfg: config.RunConfig, out: Path) -> int:
    kw = _backward_kwargs(cfg)
    kw.pop("t_final", None)
    if cfg["sweep.kind"] == "optical":
        rows = analysis.sweep_optical(cfg["barrier.v0"], cfg["barrier.d"], cfg.packet(),
                                      cfg["sweep.ratios"], cfg["run.n_walkers"], cfg.seed,
                                      cfg.quadrature(), **kw)
    else:
        rows = analysis.sweep_channel(cfg["barrier.v0"], cfg.packet(), cfg["sweep.points"],
                                      cfg["run.n_walkers"], cfg.seed, cfg.quadrature(), **kw)
    write_csv(out / "sweep.csv",
              ["series", "param[1]", "mean[T]", "stderr[T]", "n_effective", "n_flagged",
               "reference[T]"],
              ((r.series, r.param, r.mean, r.stderr, r.n_effective, r.n_flagged,
                float("nan") if r.reference is None else r.reference) for r in rows))
    total = sum(r.n_effective + r.n_flagged for r in rows)
    flagged = sum(r.n_flagged for r in rows)
    if total and flagged / total > cfg["run.no_crossing_limit"]:
        print(f"numerical guard: {flagged / total:.1%} of backward paths never crossed x = 0",
              file=sys.stderr)
        return EXIT_GUARD
    return EXIT_OK


def run_fp_check(cfg: config.RunConfig, out: Path) -> int:
    field = WaveField(cfg.barrier(), cfg.packet(), cfg.quadrature())
    grid = fporacle.empty_grid(cfg["fp.x_min"], cfg["fp.x_max"], cfg["fp.cells"],
                               cfg["run.t_start"])
    probes = cfg["fp.probe_times"]
    track = fporacle.track_wavefunction(field, grid, cfg["run.t_start"], probes,
                                        refresh=cfg["fp.refresh"])
    values = dict(cfg.values)
    values["run.t_end"] = max(probes)
    mc = _forward(config.RunConfig(cfg.mode, values), field, probes)
    factor = cfg["fp.cells"] // cfg["fp.bins"]
    rows, prof = [], []
    n = cfg["run.n_walkers"]
    for fp, tp, x, lab in zip(track.densities, mc.probe_times, mc.positions, mc.labels):
        psi2 = fporacle.wavefunction_density(field, grid, tp)
        coarse = fporacle.empty_grid(grid.x_min, grid.x_max, cfg["fp.bins"], tp)
        hist = fporacle.histogram_density(x[lab == dynamics.Sector.P_SECTOR], coarse, n, tp)
        fpc, psic = fp.coarsen(factor), psi2.coarsen(factor)
        rows.append((tp, fporacle.compare_density(fp, psi2), fporacle.compare_density(fpc, hist),
                     fporacle.compare_density(psic, hist), fp.mass(), psi2.mass()))
        for xc, a, b, c in zip(coarse.centers, fpc.values, psic.values, hist.values):
            prof.append((tp, xc, a, b, c))
    write_csv(out / "fp_check.csv", ["t[T]", "L1_fp_psi[1]", "L1_fp_mc[1]", "L1_mc_psi[1]",
                                     "fp_mass[1]", "psi_mass[1]"], rows)
    write_csv(out / "fp_density.csv", ["t[T]", "x[L]", "fp[1/L]", "psi2[1/L]", "mc[1/L]"], prof)
    return EXIT_OK


RUNNERS = {
    "coefficients": run_coefficients,
    "evolve": run_evolve,
    "paths": run_paths,
    "tunneling-time": run_tunneling_time,
    "channel-time": run_channel_time,
    "sweep": run_sweep,
    "fp-check": run_fp_check,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = _Parser(prog="stochtunnel", description=__doc__.splitlines()[0])
    parser.add_argument("mode", choices=config.MODES)
    parser.add_argument("--config", required=True)
    parser.add_argument("--out-dir", default=".")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--plot", action="store_true")
    try:
        args = parser.parse_args(argv)
        overrides = {"run.seed": str(args.seed)} if args.seed is not None else None
        cfg = config.load(args.config, args.mode, overrides)
        out = Path(args.out_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError("--out-dir", str(exc)) from None
        status = RUNNERS[cfg.mode](cfg, out)
        (out / "manifest.cfg").write_text(cfg.manifest())
        if args.plot or cfg["plot.enabled"]:
            from . import plotting
            plotting.render(cfg.mode, out)
        return status
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalGuardError as exc:
        print(f"numerical guard: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_GUARD


if __name__ == "__main__":
    sys.exit(main())
