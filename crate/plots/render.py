"""Render feasible-space projections from the CSV written by `opf fspace`.

Points are colored by generation cost. Each component is annotated with the
binding limits seen on it, and optima from `optima.csv` are drawn as a star
(global) or triangles (local).
"""

import argparse
import csv
import sys
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "opf"


class PlotError(Exception):
    pass


@dataclass
class PlotSpec:
    csv_path: Path
    axes: list
    output: Path
    color: str = "cost"
    optima: Path | None = None


def read_rows(path, required):
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if header and missing:
            raise PlotError(f"{path}: missing column(s) {', '.join(missing)}")
        rows = list(reader)
    if not header and required:
        return []
    return rows


def axis_label(col):
    kind, _, bus = col.partition("_")
    unit = {"vm": "p.u.", "pg": "MW", "qg": "MVAr"}.get(kind, "")
    name = {"vm": "|V|", "pg": "P_G", "qg": "Q_G"}.get(kind, kind)
    return f"{name}{bus} ({unit})" if unit else col


def annotations(rows, axes):
    """Most common binding codes per component, placed at the component centroid."""
    by_comp = {}
    for r in rows:
        by_comp.setdefault(r.get("component", "0"), []).append(r)
    out = []
    for comp in sorted(by_comp, key=lambda c: int(c) if c.isdigit() else 0):
        members = by_comp[comp]
        codes = Counter(code.split("@")[0] for r in members for code in r.get("binding", "").split(";") if code)
        if not codes:
            continue
        centre = [sum(float(r[a]) for r in members) / len(members) for a in axes]
        text = ", ".join(code for code, _ in codes.most_common(3))
        out.append((centre, text))
    return out


def build_figure(spec):
    if len(spec.axes) not in (2, 3):
        raise PlotError(f"expected 2 or 3 axes, got {len(spec.axes)}")
    rows = read_rows(spec.csv_path, spec.axes + [spec.color])
    optima = read_rows(spec.optima, spec.axes + ["kind"]) if spec.optima else []

    three_d = len(spec.axes) == 3
    fig = plt.figure(figsize=(6.4, 5.2))
    ax = fig.add_subplot(projection="3d" if three_d else None)
    ax.set_xlabel(axis_label(spec.axes[0]))
    ax.set_ylabel(axis_label(spec.axes[1]))
    if three_d:
        ax.set_zlabel(axis_label(spec.axes[2]))

    if not rows:
        text = ax.text2D if three_d else ax.text
        text(0.5, 0.5, "no feasible points", ha="center", transform=ax.transAxes)
    else:
        coords = [[float(r[a]) for r in rows] for a in spec.axes]
        cost = [float(r[spec.color]) for r in rows]
        sc = ax.scatter(*coords, c=cost, cmap="viridis", s=12)
        fig.colorbar(sc, ax=ax, label="cost ($/hr)" if spec.color == "cost" else spec.color)
        for centre, text in annotations(rows, spec.axes):
            ax.text(*centre, text, fontsize=8, ha="center")

    for kind, marker, size in (("local", "^", 60), ("global", "*", 160)):
        pts = [r for r in optima if r["kind"] == kind]
        if pts:
            ax.scatter(
                *[[float(r[a]) for r in pts] for a in spec.axes],
                marker=marker,
                s=size,
                c="red",
                edgecolors="black",
                label=f"{kind} optimum",
            )
    if optima:
        ax.legend(loc="best", fontsize=8)
    return fig


def render(spec):
    fig = build_figure(spec)
    spec.output.parent.mkdir(parents=True, exist_ok=True)
    metadata = {"Software": None} if spec.output.suffix.lower() == ".png" else {"Date": None}
    fig.savefig(spec.output, dpi=100, metadata=metadata)
    plt.close(fig)
    return spec.output


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("csv", type=Path, help="fspace.csv")
    p.add_argument("--axes", required=True, help="comma-separated columns, e.g. pg_2,qg_2")
    p.add_argument("--color", default="cost")
    p.add_argument("--optima", type=Path, help="optima.csv with a kind column (global/local)")
    p.add_argument("-o", "--output", type=Path, default=Path("fspace.png"), help=".png or .svg")
    args = p.parse_args(argv)
    spec = PlotSpec(args.csv, [a.strip() for a in args.axes.split(",")], args.output, args.color, args.optima)
    try:
        render(spec)
    except (PlotError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
