"""Render sweep CSVs into figures plus a plot-data sidecar.

The input is the simulator's sweep CSV (fixed header, per-replication
rows followed by mean/sem aggregate rows per cell).  Each figure kind
plots the aggregate rows as per-policy curves with standard-error
bands, optionally overlaying analytic reference columns as dashed
lines.  Every plotted point is also written to a sidecar CSV
(``<image>.data.csv``) so correctness is testable without image
diffing; floats are carried verbatim from the input.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

E = math.e

FIGURE_KINDS = ("naee_vs_sigma2", "naee_vs_epsilon", "moments_vs_sigma2",
                "gap_vs_M")

AXIS_COLUMN = {"naee_vs_sigma2": "sigma2", "naee_vs_epsilon": "epsilon",
               "moments_vs_sigma2": "sigma2", "gap_vs_M": "M"}

SIDECAR_COLUMNS = ["figure", "panel", "series", "x", "y", "band"]


class PlotgenError(RuntimeError):
    """Bad figure spec or input data."""


@dataclass(frozen=True)
class FigureSpec:
    input_csv: str
    kind: str
    output: str
    overlays: tuple = field(default_factory=tuple)

    def validate(self) -> None:
        if self.kind not in FIGURE_KINDS:
            raise PlotgenError(f"unknown figure kind {self.kind!r}; "
                               f"expected one of {FIGURE_KINDS}")

    @classmethod
    def from_dict(cls, d: dict) -> "FigureSpec":
        spec = cls(input_csv=d.get("input_csv", ""), kind=d.get("kind", ""),
                   output=d.get("output", ""),
                   overlays=tuple(d.get("overlays", ())))
        spec.validate()
        return spec


@dataclass
class SweepTable:
    """Parsed sweep CSV split into replication and aggregate rows."""

    columns: list
    rows: list           # per-replication rows (dicts of strings)
    means: list          # aggregate mean rows
    sems: list           # aggregate sem rows

    @classmethod
    def read(cls, path: str | Path) -> "SweepTable":
        path = Path(path)
        try:
            with open(path, newline="") as fh:
                reader = csv.DictReader(fh)
                if reader.fieldnames is None:
                    raise PlotgenError(f"{path}: empty input")
                columns = list(reader.fieldnames)
                rows, means, sems = [], [], []
                for row in reader:
                    label = row.get("replication", "")
                    if label == "mean":
                        means.append(row)
                    elif label == "sem":
                        sems.append(row)
                    else:
                        rows.append(row)
        except OSError as exc:
            raise PlotgenError(f"cannot read {path}: {exc}") from exc
        for name in ("policy", "replication", "naee"):
            if name not in columns:
                raise PlotgenError(f"{path}: missing required column {name!r}")
        if not means:
            raise PlotgenError(f"{path}: no aggregate rows found")
        return cls(columns=columns, rows=rows, means=means, sems=sems)

    def require_columns(self, names) -> None:
        missing = [n for n in names if n not in self.columns]
        if missing:
            raise PlotgenError(f"input lacks columns {missing}")


@dataclass(frozen=True)
class Point:
    figure: str
    panel: str
    series: str
    x: str      # verbatim CSV text, so values round-trip exactly
    y: str
    band: str


def _pairs(table: SweepTable, x_col: str):
    """(mean, sem) row pairs keyed by (policy, x)."""
    sem_by_key = {(r["policy"], r[x_col]): r for r in table.sems}
    for mean in table.means:
        key = (mean["policy"], mean[x_col])
        yield mean, sem_by_key.get(key)


def _gap_cell(mean_row) -> str:
    naee = float(mean_row["naee"])
    sigma2 = float(mean_row["sigma2"])
    return f"{(naee - E / 6.0 * sigma2) / sigma2:.17g}"


def collect_points(table: SweepTable, spec: FigureSpec) -> list[Point]:
    x_col = AXIS_COLUMN[spec.kind]
    table.require_columns([x_col])
    table.require_columns(spec.overlays)
    points: list[Point] = []

    if spec.kind in ("naee_vs_sigma2", "naee_vs_epsilon"):
        panels = [("naee", "naee", None)]
    elif spec.kind == "moments_vs_sigma2":
        table.require_columns(["e_j", "e_u", "e_sumsq", "M"])
        panels = [("e_j_norm", "e_j", "M"), ("e_u_norm", "e_u", "M"),
                  ("e_sumsq_norm", "e_sumsq", "M")]
    else:  # gap_vs_M
        panels = [("gap", None, None)]

    for panel, y_col, norm_col in panels:
        for mean, sem in _pairs(table, x_col):
            if spec.kind == "gap_vs_M":
                y = _gap_cell(mean)
                band = f"{float(sem['naee']) / float(mean['sigma2']):.17g}" if sem else "nan"
            elif norm_col is not None:
                scale = float(mean[norm_col])
                y = f"{float(mean[y_col]) / scale:.17g}"
                band = f"{float(sem[y_col]) / scale:.17g}" if sem else "nan"
            else:
                y = mean[y_col]
                band = sem[y_col] if sem else "nan"
            points.append(Point(spec.kind, panel, mean["policy"],
                                mean[x_col], y, band))
        for ref in spec.overlays:
            seen = set()
            for mean, _ in _pairs(table, x_col):
                if mean[x_col] in seen:
                    continue
                seen.add(mean[x_col])
                points.append(Point(spec.kind, panel, ref, mean[x_col],
                                    mean[ref], "nan"))
    if not points:
        raise PlotgenError("no aggregate data points to plot")
    return points


def write_sidecar(points: list[Point], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SIDECAR_COLUMNS)
        for p in points:
            writer.writerow([p.figure, p.panel, p.series, p.x, p.y, p.band])


def render(spec: FigureSpec) -> tuple[Path, Path]:
    """Produce the image and its sidecar; nothing is written on error."""
    spec.validate()
    table = SweepTable.read(spec.input_csv)
    points = collect_points(table, spec)

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    panels = sorted({p.panel for p in points})
    fig, axes = plt.subplots(1, len(panels), figsize=(6.0 * len(panels), 4.5),
                             squeeze=False)
    for ax, panel in zip(axes[0], panels):
        series = sorted({p.series for p in points if p.panel == panel})
        for name in series:
            pts = sorted((float(p.x), float(p.y), float(p.band))
                         for p in points if p.panel == panel and p.series == name)
            xs = [p[0] for p in pts]
            ys = [p[1] for p in pts]
            bands = [p[2] for p in pts]
            if name in spec.overlays:
                ax.plot(xs, ys, "--", label=name, alpha=0.8)
            else:
                ax.plot(xs, ys, "-o", label=name, markersize=3)
                if not any(math.isnan(b) for b in bands):
                    lo = [y - b for y, b in zip(ys, bands)]
                    hi = [y + b for y, b in zip(ys, bands)]
                    ax.fill_between(xs, lo, hi, alpha=0.2)
        ax.set_xlabel(AXIS_COLUMN[spec.kind])
        ax.set_ylabel(panel)
        ax.grid(True, linestyle=":", alpha=0.5)
        ax.legend(fontsize=8)
    fig.tight_layout()

    out = Path(spec.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out)
    plt.close(fig)
    sidecar = out.with_suffix(out.suffix + ".data.csv")
    write_sidecar(points, sidecar)
    return out, sidecar
