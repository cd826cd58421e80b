"""Figure rendering for experiment envelopes (files only, no windows)."""

from __future__ import annotations

from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .analysis import IMPROVED_LIMIT, phase_error_improved  # noqa: E402


def _save(fig, outdir: Path, name: str) -> Path:
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / f"{name}.png"
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_scan_histogram(envelope: dict, outdir: Path) -> Path:
    payload = envelope["payload"]
    values = [row["statistic"] for row in envelope["samples"]]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(values, bins=40, color="steelblue", edgecolor="black", linewidth=0.3)
    if payload.get("threshold") is not None:
        ax.axvline(payload["threshold"], color="crimson", linestyle="--",
                   label=f"threshold {payload['threshold']}")
        ax.legend()
    ax.set_xlabel(payload.get("statistic_name", "statistic"))
    ax.set_ylabel("trials")
    ax.set_title(f"{envelope['command']}: {payload.get('kind', 'scan')} "
                 f"({payload['trials']} trials)")
    return _save(fig, outdir, f"{envelope['command']}_histogram")


def plot_scaling_fit(envelope: dict, outdir: Path) -> Path:
    payload = envelope["payload"]
    ns = np.asarray(payload["ns"], dtype=float)
    medians = np.asarray(payload["medians"], dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(ns, medians, "o", color="steelblue", label="median size")
    grid = np.geomspace(ns.min(), ns.max(), 50)
    fit = np.exp(payload["intercept"]) * grid ** payload["exponent"]
    ax.loglog(grid, fit, "-", color="crimson",
              label=f"fit exponent {payload['exponent']:.3f}")
    ax.loglog(grid, medians[0] * (grid / ns[0]) ** (2 / 3), ":", color="gray",
              label="slope 2/3 reference")
    ax.set_xlabel("nodes n")
    ax.set_ylabel("median largest component")
    ax.legend()
    ax.set_title("critical-regime component scaling")
    return _save(fig, outdir, "graph-scan_scaling")


def plot_phase_error(envelope: dict, outdir: Path) -> Path:
    payload = envelope["payload"]
    n = payload["n"]
    grid = np.unique(np.geomspace(3, max(n, 11), 200).astype(int))
    grid = grid + (1 - grid % 2)  # odd train lengths
    improved = [phase_error_improved(int(g), (int(g) - 1) // 2) for g in grid]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogx(grid, improved, color="steelblue", label="improved estimate")
    ax.axhline(0.5, color="black", linestyle="-", linewidth=0.8,
               label="original estimate (1/2)")
    ax.axhline(IMPROVED_LIMIT, color="gray", linestyle=":",
               label=f"large-n value {IMPROVED_LIMIT:.5f}")
    ax.plot([n], [payload["improved"]], "o", color="crimson",
            label=f"n = {n}")
    ax.set_xlabel("train length n (half-filled)")
    ax.set_ylabel("phase error estimate")
    ax.set_ylim(0.25, 0.55)
    ax.legend(loc="center right", fontsize=8)
    ax.set_title("phase-error estimates at the attack's operating point")
    return _save(fig, outdir, "phase-error_curves")


def plot_session_summary(envelope: dict, outdir: Path) -> Path:
    payload = envelope["payload"]
    names, values = [], []
    for key in ("qber", "loss_rate", "eve_accuracy", "coverage", "detection_rate"):
        if key in payload and payload[key] is not None:
            names.append(key)
            values.append(payload[key])
    fig, ax = plt.subplots(figsize=(6, 4))
    bars = ax.bar(names, values, color="steelblue")
    ax.bar_label(bars, fmt="%.3f")
    ax.set_ylim(0, 1.1)
    ax.set_title(f"{envelope['command']} session ({payload['rounds']} rounds)")
    return _save(fig, outdir, f"{envelope['command']}_summary")


def plot_leakage_scatter(envelope: dict, outdir: Path) -> Path:
    payload = envelope["payload"]
    rows = envelope["samples"]
    fig, ax = plt.subplots(figsize=(6, 4))
    for kind, marker, color in (("random-feasible", "o", "steelblue"),
                                ("optimized", "s", "seagreen"),
                                ("identity", "D", "black"),
                                ("counterexample", "X", "crimson")):
        xs = [max(r["residual"], 1e-18) for r in rows if r["kind"] == kind]
        ys = [max(r["leakage"], 1e-18) for r in rows if r["kind"] == kind]
        if xs:
            ax.loglog(xs, ys, marker, linestyle="", label=kind, color=color)
    ax.axvline(payload["residual_tol"], color="gray", linestyle="--", linewidth=0.8)
    ax.axhline(payload["leakage_tol"], color="gray", linestyle=":", linewidth=0.8)
    ax.set_xlabel("constraint residual (max)")
    ax.set_ylabel("ancilla leakage (max trace distance)")
    ax.legend(fontsize=8)
    ax.set_title("zero-leakage verification")
    return _save(fig, outdir, "verify-appendix-c_leakage")


def render_figures(envelope: dict, outdir) -> list[Path]:
    """Render the figures applicable to this envelope's command."""
    outdir = Path(outdir)
    command = envelope["command"]
    written = []
    if command in ("graph-scan", "coverage-scan"):
        if "ns" in envelope["payload"]:
            written.append(plot_scaling_fit(envelope, outdir))
        else:
            written.append(plot_scan_histogram(envelope, outdir))
    elif command == "phase-error":
        written.append(plot_phase_error(envelope, outdir))
    elif command in ("honest", "attack1", "attack2"):
        written.append(plot_session_summary(envelope, outdir))
    elif command == "verify-appendix-c":
        written.append(plot_leakage_scatter(envelope, outdir))
    return written
