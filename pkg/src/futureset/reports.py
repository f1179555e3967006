"""SVG figures rendered from the delimited result files.

The CSVs are the contract; every figure here is derived from them so plots
can be regenerated at any time with the ``report`` subcommand.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .errors import DataFormatError

FIGSIZE = (6.0, 4.0)


def _read_csv(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"result file not found: {path}")
    with path.open("r", newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataFormatError(f"{path}: empty result file")
    return rows[0], rows[1:]


def _save(fig, out_path) -> Path:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, format="svg", bbox_inches="tight")
    plt.close(fig)
    return out_path


def loss_curve_figure(history_csv, out_path) -> Path:
    """Training loss (and any logged components) against step."""
    header, rows = _read_csv(history_csv)
    if "step" not in header:
        raise DataFormatError(f"{history_csv}: no 'step' column")
    steps = [int(float(r[header.index("step")])) for r in rows]
    fig, ax = plt.subplots(figsize=FIGSIZE)
    for column in header:
        if column == "step":
            continue
        values = [float(r[header.index(column)]) for r in rows]
        ax.plot(steps, values, label=column, linewidth=1.2)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.suptitle(Path(history_csv).stem)
    return _save(fig, out_path)


def moc_grid_figure(moc_csv, out_path) -> Path:
    """MoC accuracy vs anticipation percentage, one line per observation %."""
    header, rows = _read_csv(moc_csv)
    try:
        i_obs = header.index("beta_obs")
        i_ant = header.index("beta_ant")
        i_moc = header.index("moc")
    except ValueError as exc:
        raise DataFormatError(f"{moc_csv}: missing column ({exc})") from exc
    series: dict[float, list[tuple[float, float]]] = {}
    for r in rows:
        series.setdefault(float(r[i_obs]), []).append(
            (float(r[i_ant]), float(r[i_moc])))
    fig, ax = plt.subplots(figsize=FIGSIZE)
    for beta_o in sorted(series):
        points = sorted(series[beta_o])
        ax.plot([p[0] for p in points], [p[1] for p in points],
                marker="o", label=f"observed {beta_o:g}%")
    ax.set_xlabel("anticipation % of remaining video")
    ax.set_ylabel("MoC accuracy")
    ax.set_ylim(0.0, 1.05)
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.suptitle("accuracy across horizons")
    return _save(fig, out_path)


def label_map_figure(map_csv, out_path) -> Path:
    """Label-set mAP per observation fraction (ALL/FREQ/RARE bars)."""
    header, rows = _read_csv(map_csv)
    try:
        i_alpha = header.index("alpha_obs")
        columns = {name: header.index(name)
                   for name in ("map_all", "map_freq", "map_rare")}
    except ValueError as exc:
        raise DataFormatError(f"{map_csv}: missing column ({exc})") from exc
    alphas = [r[i_alpha] for r in rows]
    fig, ax = plt.subplots(figsize=FIGSIZE)
    width = 0.25
    for offset, (name, idx) in enumerate(columns.items()):
        values = [float(r[idx]) if r[idx] else 0.0 for r in rows]
        ax.bar([x + (offset - 1) * width for x in range(len(alphas))],
               values, width=width, label=name.replace("map_", "").upper())
    ax.set_xticks(range(len(alphas)))
    ax.set_xticklabels(alphas)
    ax.set_xlabel("observed fraction (%)")
    ax.set_ylabel("label-set mAP")
    ax.set_ylim(0.0, 1.05)
    ax.legend()
    ax.grid(True, axis="y", alpha=0.3)
    fig.suptitle("future label-set ranking quality")
    return _save(fig, out_path)


def render_run_reports(run_dir) -> list[Path]:
    """Render every known CSV in a run directory to an SVG next to it."""
    run_dir = Path(run_dir)
    produced = []
    for name, renderer in (
        ("stage1_history.csv", loss_curve_figure),
        ("stage2_history.csv", loss_curve_figure),
        ("moc.csv", moc_grid_figure),
        ("label_map.csv", label_map_figure),
    ):
        source = run_dir / name
        if source.exists():
            produced.append(renderer(source, run_dir / (source.stem + ".svg")))
    return produced
