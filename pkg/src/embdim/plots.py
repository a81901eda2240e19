"""Plot emission. Data-first: every figure gets a CSV sidecar with the same
numbers, so downstream checks parse data instead of pixels."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "embdim"

import matplotlib.pyplot as plt  # noqa: E402

from .sweep import SweepReport  # noqa: E402

BAND_COLORS = {"ns": "tab:blue", "p<.05": "gold", "p<.01": "orange"}
_SVG_META = {"Date": None}


def _save(fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)


def _write_csv(path: Path, header: str, rows: list[str]) -> None:
    path.write_text("\n".join([header, *rows]) + "\n")


def plot_loss_curve(report: SweepReport, out_dir: Path) -> dict[str, Path]:
    svg = out_dir / "loss_curve.svg"
    csv_path = out_dir / "loss_curve.csv"
    dims = [e.dimension for e in report.entries]
    losses = [e.mean_huber for e in report.entries]
    colors = [BAND_COLORS[e.band] for e in report.entries]

    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(dims, losses, color="0.6", lw=1, zorder=1)
    ax.scatter(dims, losses, c=colors, s=45, zorder=2)
    if report.raw is not None:
        ax.axhline(report.raw.mean_huber, ls="--", color="0.3", lw=1, label="raw (no compression)")
    for e in report.baselines:
        ax.scatter([e.dimension], [e.mean_huber], marker="x", s=60, label=e.label, zorder=3)
    ax.set_xscale("log", base=2)
    ax.set_xticks(dims, [str(d) for d in dims])
    ax.set_xlabel("latent dimension")
    ax.set_ylabel("mean Huber loss (test)")
    handles = [
        plt.Line2D([], [], marker="o", ls="", color=c, label=band)
        for band, c in BAND_COLORS.items()
    ]
    h2, l2 = ax.get_legend_handles_labels()
    ax.legend(handles=handles + h2, fontsize=8)
    fig.tight_layout()
    _save(fig, svg)

    rows = [
        f"{e.dimension},{e.label},{e.mean_huber!r},{e.p_vs_best!r},{e.band}"
        for e in report.entries
        + ([report.raw] if report.raw else [])
        + report.baselines
    ]
    _write_csv(csv_path, "dimension,label,mean_huber,p_vs_best,significance_band", rows)
    return {"svg": svg, "csv": csv_path}


def plot_normalized(reports: list[tuple[str, SweepReport]], out_dir: Path, stem: str = "normalized") -> dict[str, Path]:
    """Max-min normalized curves, overlayable across tasks; raw as dashed lines."""
    svg = out_dir / f"{stem}.svg"
    csv_path = out_dir / f"{stem}.csv"
    fig, ax = plt.subplots(figsize=(7, 4.5))
    rows = []
    for name, report in reports:
        pts = [(e.dimension, e.normalized) for e in report.entries if e.normalized is not None]
        if not pts:
            continue
        dims = [d for d, _ in pts]
        vals = [v for _, v in pts]
        (line,) = ax.plot(dims, vals, marker="o", ms=4, label=name)
        rows += [f"{name},{d},{v!r}" for d, v in pts]
        if report.raw is not None and report.raw.normalized is not None:
            ax.axhline(report.raw.normalized, ls="--", lw=1, color=line.get_color())
            rows.append(f"{name},raw,{report.raw.normalized!r}")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("latent dimension")
    ax.set_ylabel("normalized Huber loss (0 = best, 1 = worst)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, svg)
    _write_csv(csv_path, "task,dimension,normalized", rows)
    return {"svg": svg, "csv": csv_path}


def plot_reconstruction(report: SweepReport, out_dir: Path) -> dict[str, Path]:
    svg = out_dir / "reconstruction.svg"
    csv_path = out_dir / "reconstruction.csv"
    dims = [p.dimension for p in report.recon]
    sims = [p.mean_cosine for p in report.recon]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(dims, sims, marker="o", ms=4, color="tab:green")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("latent dimension")
    ax.set_ylabel("mean cosine(input, reconstruction)")
    ax.set_ylim(min(0.0, min(sims, default=0.0)) - 0.05, 1.05)
    fig.tight_layout()
    _save(fig, svg)
    _write_csv(
        csv_path,
        "dimension,mean_cosine,excluded",
        [f"{p.dimension},{p.mean_cosine!r},{p.excluded}" for p in report.recon],
    )
    return {"svg": svg, "csv": csv_path}


def emit_plots(report: SweepReport, out_dir: str | Path) -> dict[str, Path]:
    """Write all three figures (with CSV sidecars) for one sweep report."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for prefix, produced in (
        ("loss_curve", plot_loss_curve(report, out_dir)),
        ("normalized", plot_normalized([("task", report)], out_dir)),
        ("reconstruction", plot_reconstruction(report, out_dir)),
    ):
        for kind, p in produced.items():
            paths[f"{prefix}_{kind}"] = p
    return paths
