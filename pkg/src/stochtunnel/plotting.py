"""SVG figures rendered from the CSV tables a run has written.

Plots only read the CSV files, so rendering never changes numeric output.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "stochtunnel"
matplotlib.rcParams["svg.fonttype"] = "none"


def read_csv(path: Path) -> dict[str, np.ndarray | list[str]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols: dict[str, np.ndarray | list[str]] = {}
    for j, name in enumerate(header):
        raw = [r[j] for r in body]
        try:
            cols[name] = np.array([float(v) for v in raw])
        except ValueError:
            cols[name] = raw
    return cols


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_coefficients(out: Path) -> Path:
    c = read_csv(out / "coefficients.csv")
    k = c["k[1/L]"]
    T2 = c["ReT[1]"] ** 2 + c["ImT[1]"] ** 2
    R2 = c["ReR[1]"] ** 2 + c["ImR[1]"] ** 2
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(k, T2, label="|T|^2")
    ax.semilogy(k, R2, label="|R|^2")
    ax.set_xlabel("k [1/L]")
    ax.set_ylabel("probability")
    ax.legend()
    return _save(fig, out / "coefficients.svg")


def plot_density(out: Path) -> Path:
    c = read_csv(out / "density.csv")
    times = np.unique(c["t[T]"])
    fig, axes = plt.subplots(len(times), 1, figsize=(6, 2.4 * len(times)), squeeze=False)
    for ax, t in zip(axes[:, 0], times):
        sel = c["t[T]"] == t
        x = c["x[L]"][sel]
        ax.plot(x, c["psi2[1/L]"][sel], label="|psi|^2 (bin average)")
        ax.step(x, c["walkers_p[1/L]"][sel], where="mid", label="p walkers")
        ax.set_title(f"t = {t:g}")
        ax.set_xlabel("x [L]")
    axes[0, 0].legend(fontsize="small")
    return _save(fig, out / "density.svg")


def plot_paths(out: Path) -> Path:
    c = read_csv(out / "paths.csv")
    fig, ax = plt.subplots(figsize=(6, 4))
    for pid in np.unique(c["path_id"]):
        sel = c["path_id"] == pid
        t, x, lab = c["t[T]"][sel], c["x[L]"][sel], c["label"][sel]
        line, = ax.plot(t, x, lw=0.8, label=f"path {int(pid)}")
        u = lab == 1
        if u.any():
            ax.plot(t[u], x[u], ".", ms=2, color=line.get_color())
    ax.set_xlabel("t [T]")
    ax.set_ylabel("x [L]")
    ax.legend(fontsize="small", title="dots: unphysical sector")
    return _save(fig, out / "paths.svg")


def plot_times(out: Path) -> Path:
    c = read_csv(out / "times.csv")
    ok = np.array([f == "ok" for f in c["flags"]])
    series = np.array(c["series"])
    fig, ax = plt.subplots(figsize=(6, 4))
    for s in sorted(set(series)):
        v = c["tau_p[T]"][ok & (series == s)]
        if v.size > 1:
            edges = np.histogram_bin_edges(v, bins="fd")
            ax.hist(v, bins=edges, histtype="step", density=True, label=s)
    ax.set_xlabel("passing time [T]")
    ax.set_ylabel("density")
    ax.legend()
    return _save(fig, out / "times.svg")


def plot_sweep(out: Path) -> Path:
    c = read_csv(out / "sweep.csv")
    series = np.array(c["series"])
    fig, ax = plt.subplots(figsize=(6, 4))
    for s in sorted(set(series)):
        sel = series == s
        ax.errorbar(c["param[1]"][sel], c["mean[T]"][sel], yerr=2 * c["stderr[T]"][sel],
                    marker="o", capsize=3, label=f"{s} (2 s.e.)")
    ref = c["reference[T]"]
    good = np.isfinite(ref)
    if good.any():
        ax.plot(c["param[1]"][good], ref[good], "k--", lw=0.8, label="closed form")
    ax.set_xlabel("parameter ratio")
    ax.set_ylabel("mean time [T]")
    ax.legend()
    return _save(fig, out / "sweep.svg")


def plot_fp(out: Path) -> Path:
    c = read_csv(out / "fp_density.csv")
    times = np.unique(c["t[T]"])
    fig, axes = plt.subplots(len(times), 1, figsize=(6, 2.4 * len(times)), squeeze=False)
    for ax, t in zip(axes[:, 0], times):
        sel = c["t[T]"] == t
        x = c["x[L]"][sel]
        ax.plot(x, c["psi2[1/L]"][sel], label="|psi|^2")
        ax.plot(x, c["fp[1/L]"][sel], "--", label="Fokker-Planck")
        ax.step(x, c["mc[1/L]"][sel], where="mid", label="walkers")
        ax.set_title(f"t = {t:g}")
    axes[0, 0].legend(fontsize="small")
    axes[-1, 0].set_xlabel("x [L]")
    return _save(fig, out / "fp_check.svg")


PLOTTERS = {
    "coefficients": [plot_coefficients],
    "evolve": [plot_density],
    "paths": [plot_paths],
    "tunneling-time": [plot_times],
    "channel-time": [plot_times],
    "sweep": [plot_sweep],
    "fp-check": [plot_fp],
}


def render(mode: str, out: Path) -> list[Path]:
    return [f(Path(out)) for f in PLOTTERS[mode]]
